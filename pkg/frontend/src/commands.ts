import { RunOptions, runCliChecked } from "./runner.js";

export interface TokenizeOptions {
  vocab?: string;
  channels?: "single" | "multi";
  segmentStart?: number;
  nTokens?: number;
  /** Channel indices carrying annotations; others become all-PAD. */
  annotated?: number[];
  report?: string;
}

export function tokenize(
  input: string,
  output: string,
  options: TokenizeOptions = {},
  run: RunOptions = {},
): void {
  const args = ["tokenize", input, output];
  if (options.vocab) args.push("--vocab", options.vocab);
  if (options.channels) args.push("--channels", options.channels);
  if (options.segmentStart !== undefined) {
    args.push("--segment-start", String(options.segmentStart));
  }
  if (options.nTokens !== undefined) {
    args.push("--n-tokens", String(options.nTokens));
  }
  if (options.annotated) args.push("--annotated", options.annotated.join(","));
  if (options.report) args.push("--report", options.report);
  runCliChecked(args, run);
}

export function detokenize(
  input: string,
  output: string,
  run: RunOptions = {},
): void {
  runCliChecked(["detokenize", input, output], run);
}

export interface AugmentOptions {
  count?: number;
  cacheSize?: number;
  pIntra?: number;
  tau?: number;
  maxIter?: number;
  maxLen?: number;
  indexOffset?: number;
  stats?: string;
  plot?: string;
}

export function augment(
  manifest: string,
  outDir: string,
  seed: number,
  options: AugmentOptions = {},
  run: RunOptions = {},
): void {
  runCliChecked(augmentArgs(manifest, outDir, seed, options), run);
}

export function augmentArgs(
  manifest: string,
  outDir: string,
  seed: number,
  options: AugmentOptions = {},
): string[] {
  const args = [
    "augment",
    "--manifest",
    manifest,
    "--out-dir",
    outDir,
    "--seed",
    String(seed),
  ];
  if (options.count !== undefined) args.push("--count", String(options.count));
  if (options.cacheSize !== undefined) {
    args.push("--cache-size", String(options.cacheSize));
  }
  if (options.pIntra !== undefined) args.push("--p-intra", String(options.pIntra));
  if (options.tau !== undefined) args.push("--tau", String(options.tau));
  if (options.maxIter !== undefined) {
    args.push("--max-iter", String(options.maxIter));
  }
  if (options.maxLen !== undefined) args.push("--max-len", String(options.maxLen));
  if (options.indexOffset !== undefined) {
    args.push("--index-offset", String(options.indexOffset));
  }
  if (options.stats) args.push("--stats", options.stats);
  if (options.plot) args.push("--plot", options.plot);
  return args;
}

export type MetricFamily = "inst_onset" | "agnostic" | "multi";

export interface EvaluateOptions {
  metric?: MetricFamily;
  onsetTol?: number;
  report?: string;
  plot?: string;
}

/** Scores estimated notes against a reference; returns the JSON report. */
export function evaluate(
  ref: string,
  est: string,
  options: EvaluateOptions = {},
  run: RunOptions = {},
): Record<string, unknown> {
  const args = ["evaluate", "--ref", ref, "--est", est];
  if (options.metric) args.push("--metric", options.metric);
  if (options.onsetTol !== undefined) {
    args.push("--onset-tol", String(options.onsetTol));
  }
  if (options.report) args.push("--report", options.report);
  if (options.plot) args.push("--plot", options.plot);
  const result = runCliChecked(args, run);
  if (options.report) return {};
  return JSON.parse(result.stdout.toString("utf-8"));
}

/** Sampling weights from per-dataset sizes, or the built-in preset. */
export function sampleWeights(
  source: { sizes: string; temperature?: number } | "preset",
  run: RunOptions = {},
): { weights: Record<string, number>; temperature?: number } {
  const args = ["sample-weights"];
  if (source === "preset") {
    args.push("--preset");
  } else {
    args.push("--sizes", source.sizes);
    if (source.temperature !== undefined) {
      args.push("--temperature", String(source.temperature));
    }
  }
  const result = runCliChecked(args, run);
  return JSON.parse(result.stdout.toString("utf-8"));
}

export type ModelName = "ymt3" | "yptf" | "yptf_moe";

/** Exact parameter counts for one of the model presets. */
export function paramCount(
  model: ModelName,
  run: RunOptions = {},
): Record<string, number | string | Record<string, number>> {
  const result = runCliChecked(["param-count", "--model", model], run);
  return JSON.parse(result.stdout.toString("utf-8"));
}

/** Runs the mixture-of-experts forward on saved tensors. */
export function kernelMoe(
  weights: string,
  input: string,
  output: string,
  topK?: number,
  run: RunOptions = {},
): void {
  const args = ["kernel-moe", "--weights", weights, "--input", input,
                "--output", output];
  if (topK !== undefined) args.push("--top-k", String(topK));
  runCliChecked(args, run);
}

export function version(run: RunOptions = {}): string {
  return runCliChecked(["version"], run).stdout.toString("utf-8").trim();
}
