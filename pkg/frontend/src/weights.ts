import * as fs from "node:fs";

/** Named float64 tensor: flat values plus a shape. */
export interface Tensor {
  shape: number[];
  values: Float64Array;
}

export const WEIGHTS_FILE_FORMAT = "amtkit-weights-v1";

interface WeightsSidecar {
  dtype: string;
  format: string;
  tensors: Record<string, { offset: number; shape: number[] }>;
}

function elementCount(shape: number[]): number {
  return shape.reduce((a, b) => a * b, 1);
}

/** Writes tensors as one flat little-endian float64 payload with a JSON
 * sidecar at <path>.json, tensors laid out in sorted-name order. */
export function writeWeights(
  path: string,
  tensors: Record<string, Tensor>,
): void {
  const names = Object.keys(tensors).sort();
  const manifest: WeightsSidecar["tensors"] = {};
  let offset = 0;
  const parts: Buffer[] = [];
  for (const name of names) {
    const tensor = tensors[name];
    const size = elementCount(tensor.shape);
    if (tensor.values.length !== size) {
      throw new Error(
        `tensor ${name}: ${tensor.values.length} values for shape ` +
          `[${tensor.shape}]`,
      );
    }
    manifest[name] = { shape: tensor.shape, offset };
    const buf = Buffer.alloc(size * 8);
    for (let i = 0; i < size; i++) buf.writeDoubleLE(tensor.values[i], i * 8);
    parts.push(buf);
    offset += size;
  }
  fs.writeFileSync(path, Buffer.concat(parts));
  const sidecar: WeightsSidecar = {
    dtype: "<f8",
    format: WEIGHTS_FILE_FORMAT,
    tensors: manifest,
  };
  fs.writeFileSync(path + ".json", stableJson(sidecar) + "\n", "utf-8");
}

/** Reads a tensor file written by writeWeights (or the Python library). */
export function readWeights(path: string): Record<string, Tensor> {
  const sidecar = JSON.parse(
    fs.readFileSync(path + ".json", "utf-8"),
  ) as WeightsSidecar;
  if (sidecar.format !== WEIGHTS_FILE_FORMAT) {
    throw new Error(
      `unknown weights format ${JSON.stringify(sidecar.format)}`,
    );
  }
  const raw = fs.readFileSync(path);
  const out: Record<string, Tensor> = {};
  for (const [name, meta] of Object.entries(sidecar.tensors)) {
    const size = elementCount(meta.shape);
    const values = new Float64Array(size);
    for (let i = 0; i < size; i++) {
      values[i] = raw.readDoubleLE((meta.offset + i) * 8);
    }
    out[name] = { shape: meta.shape, values };
  }
  return out;
}

/** JSON with sorted keys and 2-space indentation, matching the sidecar
 * style the Python side emits. */
function stableJson(value: unknown): string {
  const sorted = (v: unknown): unknown => {
    if (Array.isArray(v)) return v.map(sorted);
    if (v && typeof v === "object") {
      const entries = Object.entries(v as Record<string, unknown>).sort(
        ([a], [b]) => (a < b ? -1 : a > b ? 1 : 0),
      );
      return Object.fromEntries(entries.map(([k, val]) => [k, sorted(val)]));
    }
    return v;
  };
  return JSON.stringify(sorted(value), null, 2);
}
