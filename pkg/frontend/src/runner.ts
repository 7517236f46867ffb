import { spawn, spawnSync } from "node:child_process";

/** How the Python CLI is launched; override via AMTKIT_PYTHON. */
export const PYTHON = process.env.AMTKIT_PYTHON ?? "python3";
const MODULE_ARGS = ["-m", "amtkit"];

export interface CliResult {
  /** Process exit code (0 success, 2 runtime error, 64 usage error). */
  code: number;
  stdout: Buffer;
  stderr: Buffer;
}

export interface RunOptions {
  /** Working directory for the subprocess (paths in argv resolve here). */
  cwd?: string;
}

/** Structured error payload the CLI prints on stderr for exit code 2. */
export interface CliErrorPayload {
  message: string;
  type: string;
}

export class CliError extends Error {
  constructor(
    public readonly args: string[],
    public readonly result: CliResult,
    public readonly payload: CliErrorPayload | null,
  ) {
    super(
      payload
        ? `amtkit ${args[0]}: ${payload.type}: ${payload.message}`
        : `amtkit ${args.join(" ")} exited with code ${result.code}: ` +
          result.stderr.toString("utf-8").trim(),
    );
    this.name = "CliError";
  }
}

function parseErrorPayload(stderr: Buffer): CliErrorPayload | null {
  try {
    const parsed = JSON.parse(stderr.toString("utf-8"));
    if (parsed && typeof parsed === "object" && parsed.error) {
      return parsed.error as CliErrorPayload;
    }
  } catch {
    /* non-JSON stderr: usage errors go through argparse */
  }
  return null;
}

/** Runs one CLI invocation synchronously. */
export function runCli(args: string[], options: RunOptions = {}): CliResult {
  const proc = spawnSync(PYTHON, [...MODULE_ARGS, ...args], {
    cwd: options.cwd,
    maxBuffer: 64 * 1024 * 1024,
  });
  if (proc.error) throw proc.error;
  return {
    code: proc.status ?? -1,
    stdout: proc.stdout as Buffer,
    stderr: proc.stderr as Buffer,
  };
}

/** Runs one CLI invocation and throws CliError on a nonzero exit. */
export function runCliChecked(
  args: string[],
  options: RunOptions = {},
): CliResult {
  const result = runCli(args, options);
  if (result.code !== 0) {
    throw new CliError(args, result, parseErrorPayload(result.stderr));
  }
  return result;
}

/** Runs one CLI invocation without blocking, for parallel workloads. */
export function runCliAsync(
  args: string[],
  options: RunOptions = {},
): Promise<CliResult> {
  return new Promise((resolve, reject) => {
    const proc = spawn(PYTHON, [...MODULE_ARGS, ...args], {
      cwd: options.cwd,
    });
    const out: Buffer[] = [];
    const err: Buffer[] = [];
    proc.stdout.on("data", (chunk) => out.push(chunk));
    proc.stderr.on("data", (chunk) => err.push(chunk));
    proc.on("error", reject);
    proc.on("close", (code) => {
      const result: CliResult = {
        code: code ?? -1,
        stdout: Buffer.concat(out),
        stderr: Buffer.concat(err),
      };
      if (result.code !== 0) {
        reject(new CliError(args, result, parseErrorPayload(result.stderr)));
      } else {
        resolve(result);
      }
    });
  });
}
