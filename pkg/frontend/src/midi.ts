import * as fs from "node:fs";

/** One timed event in a standard MIDI file track, for fixture building. */
export type MidiEvent =
  | { tick: number; kind: "on"; channel: number; pitch: number; velocity: number }
  | { tick: number; kind: "off"; channel: number; pitch: number }
  | { tick: number; kind: "program"; channel: number; program: number }
  | { tick: number; kind: "tempo"; usPerQuarter: number };

function vlq(value: number): number[] {
  const bytes = [value & 0x7f];
  let rest = value >> 7;
  while (rest > 0) {
    bytes.unshift((rest & 0x7f) | 0x80);
    rest >>= 7;
  }
  return bytes;
}

function trackChunk(events: MidiEvent[]): Buffer {
  const sorted = [...events].sort((a, b) => a.tick - b.tick);
  const body: number[] = [];
  let lastTick = 0;
  for (const event of sorted) {
    body.push(...vlq(event.tick - lastTick));
    lastTick = event.tick;
    switch (event.kind) {
      case "on":
        body.push(0x90 | event.channel, event.pitch, event.velocity);
        break;
      case "off":
        body.push(0x80 | event.channel, event.pitch, 0);
        break;
      case "program":
        body.push(0xc0 | event.channel, event.program);
        break;
      case "tempo":
        body.push(
          0xff,
          0x51,
          0x03,
          (event.usPerQuarter >> 16) & 0xff,
          (event.usPerQuarter >> 8) & 0xff,
          event.usPerQuarter & 0xff,
        );
        break;
    }
  }
  body.push(0x00, 0xff, 0x2f, 0x00); // end of track
  const header = Buffer.alloc(8);
  header.write("MTrk", 0, "ascii");
  header.writeUInt32BE(body.length, 4);
  return Buffer.concat([header, Buffer.from(body)]);
}

/** Builds a standard MIDI file from per-track event lists. */
export function buildMidi(
  division: number,
  tracks: MidiEvent[][],
  format?: number,
): Buffer {
  const fmt = format ?? (tracks.length > 1 ? 1 : 0);
  const header = Buffer.alloc(14);
  header.write("MThd", 0, "ascii");
  header.writeUInt32BE(6, 4);
  header.writeUInt16BE(fmt, 8);
  header.writeUInt16BE(tracks.length, 10);
  header.writeUInt16BE(division, 12);
  return Buffer.concat([header, ...tracks.map(trackChunk)]);
}

export function writeMidi(
  path: string,
  division: number,
  tracks: MidiEvent[][],
  format?: number,
): void {
  fs.writeFileSync(path, buildMidi(division, tracks, format));
}
