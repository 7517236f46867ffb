import * as fs from "node:fs";
import * as path from "node:path";
import { fileURLToPath } from "node:url";

import { Note, drumNote, note, writeNotesJsonl } from "./notes.js";
import { StemSpec, constantAudio, writeManifest } from "./manifest.js";
import { MidiEvent, writeMidi } from "./midi.js";
import { Tensor, writeWeights } from "./weights.js";
import { Prng } from "./prng.js";

/** Locates the package root (the directory holding package.json) from
 * either src/ or the compiled dist/src/. */
export function packageRoot(): string {
  let dir = path.dirname(fileURLToPath(import.meta.url));
  while (!fs.existsSync(path.join(dir, "package.json"))) {
    const parent = path.dirname(dir);
    if (parent === dir) throw new Error("package.json not found");
    dir = parent;
  }
  return dir;
}

export const GOLDEN_DIR = path.join(packageRoot(), "golden");
export const INPUTS_DIR = path.join(GOLDEN_DIR, "inputs");
export const EXPECTED_DIR = path.join(GOLDEN_DIR, "expected");
export const CASES_FILE = path.join(GOLDEN_DIR, "cases.json");
/** Captured stdout lives next to a case's expected artifacts under a
 * name no CLI invocation in the corpus can produce. */
export const STDOUT_NAME = "_stdout.bin";

export interface GoldenContext {
  /** Expected-artifact directory of an earlier case, for chained inputs. */
  expectedDir(caseId: string): string;
}

export interface GoldenCase {
  id: string;
  /** CLI arguments; all paths relative to the per-case working dir. */
  argv: string[];
  /** Writes the case's input files into the given directory. */
  prepare(dir: string, ctx: GoldenContext): void;
}

/** All regular files below dir as sorted slash-separated relative paths. */
export function listFiles(dir: string): string[] {
  const out: string[] = [];
  const walk = (current: string) => {
    for (const entry of fs.readdirSync(current, { withFileTypes: true })) {
      const full = path.join(current, entry.name);
      if (entry.isDirectory()) walk(full);
      else out.push(path.relative(dir, full).split(path.sep).join("/"));
    }
  };
  if (fs.existsSync(dir)) walk(dir);
  return out.sort();
}

export function copyInto(srcDir: string, destDir: string): void {
  fs.mkdirSync(destDir, { recursive: true });
  for (const rel of listFiles(srcDir)) {
    const dest = path.join(destDir, rel);
    fs.mkdirSync(path.dirname(dest), { recursive: true });
    fs.copyFileSync(path.join(srcDir, rel), dest);
  }
}

// ---------------------------------------------------------------------------
// Fixture builders

const PITCHED_PROGRAMS = [0, 8, 16, 24, 32, 40, 48, 56, 64, 72, 80, 88, 100];

interface NotesOptions {
  start?: number;
  drumFraction?: number;
  programs?: number[];
}

function randomNotes(
  prng: Prng,
  count: number,
  options: NotesOptions = {},
): Note[] {
  const start = options.start ?? 0;
  const drumFraction = options.drumFraction ?? 0.2;
  const programs = options.programs ?? PITCHED_PROGRAMS;
  const notes: Note[] = [];
  for (let i = 0; i < count; i++) {
    const onset = Math.max(0, start - 0.3 + prng.next() * 2.6);
    if (prng.next() < drumFraction) {
      notes.push(drumNote(onset, prng.int(35, 60)));
    } else {
      const duration = 0.05 + prng.next() * 1.15;
      notes.push(
        note(onset, onset + duration, prng.int(36, 96), prng.pick(programs)),
      );
    }
  }
  notes.sort((a, b) => a.onset_s - b.onset_s || a.pitch - b.pitch);
  return notes;
}

interface ManifestOptions {
  segments?: number;
  withAudio?: boolean;
  drumStems?: boolean;
}

function randomManifest(
  dir: string,
  prng: Prng,
  options: ManifestOptions = {},
): void {
  const segments = options.segments ?? 6;
  const stems: StemSpec[] = [];
  for (let s = 0; s < segments; s++) {
    const stemCount = prng.int(2, 4);
    for (let k = 0; k < stemCount; k++) {
      const isDrum = options.drumStems !== false && k === stemCount - 1 &&
        prng.next() < 0.4;
      const notes: Note[] = [];
      const noteCount = prng.int(2, 5);
      for (let n = 0; n < noteCount; n++) {
        const onset = prng.next() * 1.8;
        if (isDrum) {
          notes.push(drumNote(onset, prng.int(35, 52)));
        } else {
          // Stems are per-segment: every note must fit the 2.048 s window.
          const offset = Math.min(onset + 0.1 + prng.next(), 2.04);
          notes.push(note(onset, offset, prng.int(40, 90),
                          prng.pick(PITCHED_PROGRAMS)));
        }
      }
      notes.sort((a, b) => a.onset_s - b.onset_s || a.pitch - b.pitch);
      stems.push({
        segmentId: `seg${s}`,
        stemId: `seg${s}_stem${k}`,
        datasetId: `d${s % 3}`,
        notes,
        audio:
          options.withAudio && s < 3
            ? constantAudio(0.05 + 0.04 * stems.length)
            : undefined,
      });
    }
  }
  writeManifest(path.join(dir, "manifest.jsonl"), stems);
}

function shiftOnsets(notes: Note[], delta: number): Note[] {
  return notes.map((n) => ({
    ...n,
    onset_s: Math.max(0, n.onset_s + delta),
    offset_s: n.is_drum ? Math.max(0, n.onset_s + delta) : n.offset_s + delta,
  }));
}

// ---------------------------------------------------------------------------
// The corpus

function tokenizeCase(
  id: string,
  seed: number,
  count: number,
  extra: string[],
  notesOptions: NotesOptions = {},
): GoldenCase {
  return {
    id,
    argv: ["tokenize", "in.jsonl", "seg.tok", ...extra],
    prepare(dir) {
      writeNotesJsonl(
        path.join(dir, "in.jsonl"),
        randomNotes(new Prng(seed), count, notesOptions),
      );
    },
  };
}

function detokenizeCase(id: string, sourceCase: string): GoldenCase {
  return {
    id,
    argv: ["detokenize", "in.tok", "decoded.jsonl"],
    prepare(dir, ctx) {
      const source = ctx.expectedDir(sourceCase);
      fs.copyFileSync(path.join(source, "seg.tok"), path.join(dir, "in.tok"));
      fs.copyFileSync(
        path.join(source, "seg.tok.json"),
        path.join(dir, "in.tok.json"),
      );
    },
  };
}

function evaluateCase(
  id: string,
  extra: string[],
  build: (dir: string) => void,
): GoldenCase {
  return {
    id,
    argv: ["evaluate", "--ref", "ref.jsonl", "--est", "est.jsonl", ...extra],
    prepare(dir) {
      build(dir);
    },
  };
}

function augmentCase(
  id: string,
  seed: number,
  extra: string[],
  manifestOptions: ManifestOptions = {},
): GoldenCase {
  return {
    id,
    argv: [
      "augment", "--manifest", "manifest.jsonl", "--out-dir", "mix",
      "--seed", String(seed), "--stats", "stats.json", ...extra,
    ],
    prepare(dir) {
      randomManifest(dir, new Prng(seed * 7 + 1), manifestOptions);
    },
  };
}

function moeTensors(
  prng: Prng,
  dModel: number,
  dFf: number,
  experts: number,
  tokens: number,
): { weights: Record<string, Tensor>; input: Record<string, Tensor> } {
  const tensor = (...shape: number[]): Tensor => {
    const size = shape.reduce((a, b) => a * b, 1);
    const values = new Float64Array(size);
    for (let i = 0; i < size; i++) values[i] = prng.next() * 2 - 1;
    return { shape, values };
  };
  const weights: Record<string, Tensor> = { gate: tensor(dModel, experts) };
  for (let e = 0; e < experts; e++) {
    weights[`expert_${e}.w1`] = tensor(dFf, dModel);
    weights[`expert_${e}.v_gate`] = tensor(dFf, dModel);
    weights[`expert_${e}.w2`] = tensor(dModel, dFf);
  }
  return { weights, input: { x: tensor(tokens, dModel) } };
}

export function goldenCases(): GoldenCase[] {
  const cases: GoldenCase[] = [];

  // Tokenize from note JSONL, single-sequence targets.
  cases.push(
    tokenizeCase("tok-single-basic", 11, 6,
                 ["--report", "report.json"]),
    tokenizeCase("tok-single-dense", 12, 25,
                 ["--report", "report.json"]),
    tokenizeCase("tok-single-window2", 13, 14,
                 ["--segment-start", "2.048", "--report", "report.json"],
                 { start: 2.048 }),
    tokenizeCase("tok-single-window4", 14, 10,
                 ["--segment-start", "4.096"], { start: 4.096 }),
    tokenizeCase("tok-single-drums", 15, 12, [], { drumFraction: 0.6 }),
    tokenizeCase("tok-single-sing", 16, 9, [],
                 { programs: [100, 100, 100, 0, 40] }),
    tokenizeCase("tok-single-ntokens", 17, 8, ["--n-tokens", "2048"]),
    tokenizeCase("tok-single-midivocab", 18, 10,
                 ["--vocab", "midi_plus", "--report", "report.json"]),
  );

  // Tokenize to 13-channel decoder targets.
  cases.push(
    tokenizeCase("tok-multi-all", 21, 16,
                 ["--channels", "multi", "--report", "report.json"]),
    tokenizeCase("tok-multi-masked", 22, 14,
                 ["--channels", "multi", "--annotated", "0,12",
                  "--report", "report.json"],
                 { drumFraction: 0.3 }),
    tokenizeCase("tok-multi-sparse", 23, 8,
                 ["--channels", "multi", "--annotated", "3,5,11"]),
    tokenizeCase("tok-multi-ntokens", 24, 12,
                 ["--channels", "multi", "--n-tokens", "512",
                  "--report", "report.json"]),
  );

  // Tokenize from standard MIDI files.
  const midiArgv = ["tokenize", "in.mid", "seg.tok",
                    "--report", "report.json"];
  cases.push(
    {
      id: "tok-midi-fmt0",
      argv: [...midiArgv],
      prepare(dir) {
        const events: MidiEvent[] = [
          { tick: 0, kind: "program", channel: 0, program: 24 },
          { tick: 0, kind: "on", channel: 0, pitch: 60, velocity: 90 },
          { tick: 480, kind: "off", channel: 0, pitch: 60 },
          { tick: 240, kind: "on", channel: 0, pitch: 64, velocity: 80 },
          { tick: 960, kind: "off", channel: 0, pitch: 64 },
          { tick: 0, kind: "on", channel: 9, pitch: 38, velocity: 100 },
          { tick: 10, kind: "off", channel: 9, pitch: 38 },
          { tick: 480, kind: "on", channel: 9, pitch: 42, velocity: 100 },
          { tick: 490, kind: "off", channel: 9, pitch: 42 },
        ];
        writeMidi(path.join(dir, "in.mid"), 480, [events], 0);
      },
    },
    {
      id: "tok-midi-fmt1",
      argv: [...midiArgv],
      prepare(dir) {
        const tempo: MidiEvent[] = [
          { tick: 0, kind: "tempo", usPerQuarter: 500_000 },
          { tick: 960, kind: "tempo", usPerQuarter: 250_000 },
        ];
        const melody: MidiEvent[] = [
          { tick: 0, kind: "program", channel: 0, program: 40 },
          { tick: 0, kind: "on", channel: 0, pitch: 55, velocity: 70 },
          { tick: 480, kind: "off", channel: 0, pitch: 55 },
          { tick: 960, kind: "on", channel: 0, pitch: 57, velocity: 70 },
          { tick: 1440, kind: "off", channel: 0, pitch: 57 },
        ];
        const bass: MidiEvent[] = [
          { tick: 0, kind: "program", channel: 1, program: 33 },
          { tick: 240, kind: "on", channel: 1, pitch: 40, velocity: 70 },
          { tick: 1200, kind: "off", channel: 1, pitch: 40 },
        ];
        writeMidi(path.join(dir, "in.mid"), 480, [tempo, melody, bass], 1);
      },
    },
    {
      id: "tok-midi-div96",
      argv: [...midiArgv],
      prepare(dir) {
        const events: MidiEvent[] = [
          { tick: 0, kind: "program", channel: 2, program: 48 },
          { tick: 0, kind: "on", channel: 2, pitch: 72, velocity: 60 },
          { tick: 96, kind: "off", channel: 2, pitch: 72 },
          { tick: 96, kind: "on", channel: 2, pitch: 74, velocity: 60 },
          { tick: 192, kind: "off", channel: 2, pitch: 74 },
        ];
        writeMidi(path.join(dir, "in.mid"), 96, [events], 0);
      },
    },
    {
      id: "tok-midi-overlap",
      argv: [...midiArgv],
      prepare(dir) {
        const events: MidiEvent[] = [
          { tick: 0, kind: "on", channel: 0, pitch: 60, velocity: 90 },
          { tick: 240, kind: "on", channel: 0, pitch: 60, velocity: 90 },
          { tick: 480, kind: "off", channel: 0, pitch: 60 },
          { tick: 720, kind: "off", channel: 0, pitch: 60 },
        ];
        writeMidi(path.join(dir, "in.mid"), 480, [events], 0);
      },
    },
  );

  // Detokenize the token files produced above.
  const detokSources = [
    "tok-single-basic", "tok-single-dense", "tok-single-window2",
    "tok-single-window4", "tok-single-drums", "tok-single-sing",
    "tok-single-ntokens", "tok-single-midivocab", "tok-multi-all",
    "tok-multi-masked",
  ];
  detokSources.forEach((source, i) => {
    cases.push(detokenizeCase(`detok-${String(i + 1).padStart(2, "0")}`, source));
  });

  // Score estimates against references.
  cases.push(
    evaluateCase("eval-perfect-multi",
                 ["--report", "report.json", "--plot", "scores.png"],
                 (dir) => {
      const notes = randomNotes(new Prng(31), 12);
      writeNotesJsonl(path.join(dir, "ref.jsonl"), notes);
      writeNotesJsonl(path.join(dir, "est.jsonl"), notes);
    }),
    evaluateCase("eval-perfect-inst", ["--metric", "inst_onset"], (dir) => {
      const notes = randomNotes(new Prng(32), 10);
      writeNotesJsonl(path.join(dir, "ref.jsonl"), notes);
      writeNotesJsonl(path.join(dir, "est.jsonl"), notes);
    }),
    evaluateCase("eval-perfect-agnostic", ["--metric", "agnostic"], (dir) => {
      const notes = randomNotes(new Prng(33), 10);
      writeNotesJsonl(path.join(dir, "ref.jsonl"), notes);
      writeNotesJsonl(path.join(dir, "est.jsonl"), notes);
    }),
    evaluateCase("eval-shift-pass", ["--report", "report.json"], (dir) => {
      const ref = randomNotes(new Prng(34), 14);
      writeNotesJsonl(path.join(dir, "ref.jsonl"), ref);
      writeNotesJsonl(path.join(dir, "est.jsonl"), shiftOnsets(ref, 0.03));
    }),
    evaluateCase("eval-shift-tol",
                 ["--metric", "inst_onset", "--onset-tol", "0.1"], (dir) => {
      const ref = randomNotes(new Prng(35), 14);
      writeNotesJsonl(path.join(dir, "ref.jsonl"), ref);
      writeNotesJsonl(path.join(dir, "est.jsonl"), shiftOnsets(ref, 0.08));
    }),
    evaluateCase("eval-pitch-partial",
                 ["--metric", "inst_onset", "--report", "report.json"],
                 (dir) => {
      const ref = randomNotes(new Prng(36), 12, { drumFraction: 0 });
      const est = ref.map((n, i) =>
        i % 3 === 0 ? { ...n, pitch: n.pitch + 1 } : n,
      );
      writeNotesJsonl(path.join(dir, "ref.jsonl"), ref);
      writeNotesJsonl(path.join(dir, "est.jsonl"), est);
    }),
    evaluateCase("eval-mixed-drums",
                 ["--metric", "multi", "--report", "report.json"],
                 (dir) => {
      const ref = randomNotes(new Prng(37), 16, { drumFraction: 0.5 });
      const est = ref.map((n, i) =>
        i % 4 === 0 && !n.is_drum ? { ...n, program: (n.program + 8) % 96 } : n,
      );
      writeNotesJsonl(path.join(dir, "ref.jsonl"), ref);
      writeNotesJsonl(path.join(dir, "est.jsonl"), shiftOnsets(est, 0.02));
    }),
  );

  // Cross-stem augmentation runs.
  cases.push(
    augmentCase("aug-basic", 101, ["--count", "3"]),
    augmentCase("aug-audio", 102, ["--count", "3"], { withAudio: true }),
    augmentCase("aug-tau50", 103,
                ["--count", "4", "--tau", "50", "--p-intra", "1.0"]),
    augmentCase("aug-intra1", 104, ["--count", "2", "--p-intra", "1.0"]),
    augmentCase("aug-offset", 105, ["--count", "2", "--index-offset", "7"]),
    augmentCase("aug-maxlen", 106, ["--count", "3", "--max-len", "64"]),
    augmentCase("aug-cache", 107, ["--count", "3", "--cache-size", "4"],
                { segments: 8 }),
    augmentCase("aug-plot", 108, ["--count", "4", "--plot", "merges.png"]),
  );

  // Dataset sampling weights.
  const sizes = { slakh: 2100, maestro: 1276, guitarset: 360, mir_st500: 400 };
  cases.push(
    { id: "sw-preset", argv: ["sample-weights", "--preset"], prepare() {} },
    {
      id: "sw-t333",
      argv: ["sample-weights", "--sizes", "sizes.json"],
      prepare(dir) {
        fs.writeFileSync(path.join(dir, "sizes.json"),
                         JSON.stringify(sizes) + "\n");
      },
    },
    {
      id: "sw-t1",
      argv: ["sample-weights", "--sizes", "sizes.json", "--temperature", "1"],
      prepare(dir) {
        fs.writeFileSync(path.join(dir, "sizes.json"),
                         JSON.stringify(sizes) + "\n");
      },
    },
    {
      id: "sw-out",
      argv: ["sample-weights", "--sizes", "sizes.json", "--temperature",
             "1000000000", "--out", "weights.json"],
      prepare(dir) {
        fs.writeFileSync(path.join(dir, "sizes.json"),
                         JSON.stringify(sizes) + "\n");
      },
    },
  );

  // Model parameter accounting.
  for (const model of ["ymt3", "yptf", "yptf_moe"] as const) {
    cases.push({
      id: `pc-${model.replace("_", "-")}`,
      argv: ["param-count", "--model", model],
      prepare() {},
    });
  }

  // Mixture-of-experts kernel on saved tensors.
  cases.push(
    {
      id: "moe-top2",
      argv: ["kernel-moe", "--weights", "w.f64", "--input", "x.f64",
             "--output", "y.f64"],
      prepare(dir) {
        const { weights, input } = moeTensors(new Prng(71), 6, 8, 4, 5);
        writeWeights(path.join(dir, "w.f64"), weights);
        writeWeights(path.join(dir, "x.f64"), input);
      },
    },
    {
      id: "moe-top1",
      argv: ["kernel-moe", "--weights", "w.f64", "--input", "x.f64",
             "--output", "y.f64", "--top-k", "1"],
      prepare(dir) {
        const { weights, input } = moeTensors(new Prng(72), 4, 5, 3, 7);
        writeWeights(path.join(dir, "w.f64"), weights);
        writeWeights(path.join(dir, "x.f64"), input);
      },
    },
  );

  return cases;
}
