import * as fs from "node:fs";
import * as path from "node:path";

import { Note, writeNotesJsonl } from "./notes.js";

/** Fixed per-segment audio length the augmenter expects, in samples. */
export const AUDIO_FRAMES = 32767;

/** One stem: its identity plus note events and optional audio. */
export interface StemSpec {
  segmentId: string;
  stemId: string;
  datasetId: string;
  notes: Note[];
  /** Mono samples; padded/validated to AUDIO_FRAMES. Omit for silence. */
  audio?: Float32Array;
}

export function writeAudioF32(filePath: string, samples: Float32Array): void {
  if (samples.length !== AUDIO_FRAMES) {
    throw new Error(
      `audio must have ${AUDIO_FRAMES} samples, got ${samples.length}`,
    );
  }
  const buf = Buffer.alloc(samples.length * 4);
  for (let i = 0; i < samples.length; i++) {
    buf.writeFloatLE(samples[i], i * 4);
  }
  fs.writeFileSync(filePath, buf);
}

export function constantAudio(value: number): Float32Array {
  return new Float32Array(AUDIO_FRAMES).fill(value);
}

/** Writes a stem manifest plus its per-stem note (and audio) files.
 *
 * Every referenced path is stored relative to the manifest so the whole
 * directory can be copied or mounted anywhere.
 */
export function writeManifest(manifestPath: string, stems: StemSpec[]): void {
  const dir = path.dirname(manifestPath);
  const lines: string[] = [];
  for (const stem of stems) {
    const notesName = `${stem.stemId}.jsonl`;
    writeNotesJsonl(path.join(dir, notesName), stem.notes);
    const record: Record<string, string> = {
      segment_id: stem.segmentId,
      stem_id: stem.stemId,
      dataset_id: stem.datasetId,
      notes: notesName,
    };
    if (stem.audio) {
      const audioName = `${stem.stemId}.f32`;
      writeAudioF32(path.join(dir, audioName), stem.audio);
      record.audio = audioName;
    }
    lines.push(JSON.stringify(record));
  }
  fs.writeFileSync(manifestPath, lines.join("\n") + "\n", "utf-8");
}

/** Per-element entry of the augment run statistics JSON. */
export interface AugmentElement {
  attempts: number;
  base_segment: string;
  external_token_length: number;
  index: number;
  merged_segments: string[];
  merges: number;
  peak_normalized: boolean;
  stems: number;
}

export interface AugmentStats {
  elements: AugmentElement[];
  summary: {
    count: number;
    mean_merges: number;
    merge_histogram: Record<string, number>;
    seed: number;
  };
}

export function readAugmentStats(filePath: string): AugmentStats {
  return JSON.parse(fs.readFileSync(filePath, "utf-8")) as AugmentStats;
}
