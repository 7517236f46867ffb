import * as fs from "node:fs";

/** One note event; times in seconds, pitch/program as MIDI numbers.
 * Velocity is a binary onset indicator (0 or 1), not a MIDI level. */
export interface Note {
  onset_s: number;
  offset_s: number;
  pitch: number;
  program: number;
  velocity: number;
  is_drum: boolean;
}

export function note(
  onset: number,
  offset: number,
  pitch: number,
  program = 0,
  velocity = 1,
): Note {
  return {
    onset_s: onset,
    offset_s: offset,
    pitch,
    program,
    velocity,
    is_drum: false,
  };
}

/** Drum hits carry no meaningful offset; the reader re-derives it. */
export function drumNote(onset: number, pitch: number, program = 0): Note {
  return {
    onset_s: onset,
    offset_s: onset,
    pitch,
    program,
    velocity: 1,
    is_drum: true,
  };
}

/** Serializes one note as the JSONL line shape the CLI writes: times at
 * 6-decimal precision, fixed key order. */
export function noteToJsonLine(n: Note): string {
  return (
    `{"onset_s": ${n.onset_s.toFixed(6)}, ` +
    `"offset_s": ${n.offset_s.toFixed(6)}, ` +
    `"pitch": ${n.pitch}, "program": ${n.program}, ` +
    `"velocity": ${n.velocity}, "is_drum": ${n.is_drum}}`
  );
}

export function notesToJsonl(notes: Note[]): string {
  return notes.map((n) => noteToJsonLine(n) + "\n").join("");
}

export function writeNotesJsonl(path: string, notes: Note[]): void {
  fs.writeFileSync(path, notesToJsonl(notes), "utf-8");
}

export function parseNotesJsonl(text: string): Note[] {
  const out: Note[] = [];
  for (const line of text.split("\n")) {
    const trimmed = line.trim();
    if (!trimmed) continue;
    const record = JSON.parse(trimmed);
    out.push({
      onset_s: record.onset_s,
      offset_s: record.offset_s,
      pitch: record.pitch,
      program: record.program ?? 0,
      velocity: record.velocity ?? 1,
      is_drum: record.is_drum ?? false,
    });
  }
  return out;
}

export function readNotesJsonl(path: string): Note[] {
  return parseNotesJsonl(fs.readFileSync(path, "utf-8"));
}
