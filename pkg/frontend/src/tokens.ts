import * as fs from "node:fs";

/** Sidecar metadata written next to every token payload. */
export interface TokenSidecar {
  channels: number;
  format: string;
  n_tokens: number;
  segment_start_s: number;
  vocabulary: string;
}

export interface TokenFile {
  sidecar: TokenSidecar;
  /** One id array per channel, each of length sidecar.n_tokens. */
  sequences: Uint16Array[];
}

export const TOKEN_FILE_FORMAT = "amtkit-tokens-v1";

/** Reads a token payload (little-endian u16) plus its JSON sidecar. */
export function readTokenFile(path: string): TokenFile {
  const sidecar = JSON.parse(
    fs.readFileSync(path + ".json", "utf-8"),
  ) as TokenSidecar;
  if (sidecar.format !== TOKEN_FILE_FORMAT) {
    throw new Error(`unknown token file format ${JSON.stringify(sidecar.format)}`);
  }
  const raw = fs.readFileSync(path);
  const expected = sidecar.channels * sidecar.n_tokens * 2;
  if (raw.length !== expected) {
    throw new Error(
      `token payload is ${raw.length} bytes, expected ${expected}`,
    );
  }
  const sequences: Uint16Array[] = [];
  for (let channel = 0; channel < sidecar.channels; channel++) {
    const ids = new Uint16Array(sidecar.n_tokens);
    const base = channel * sidecar.n_tokens * 2;
    for (let i = 0; i < sidecar.n_tokens; i++) {
      ids[i] = raw.readUInt16LE(base + i * 2);
    }
    sequences.push(ids);
  }
  return { sidecar, sequences };
}
