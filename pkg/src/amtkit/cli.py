"""Command-line interface.

Subcommands cover the file-level workflow: tokenize/detokenize segment
token files, run stem augmentation over a manifest, evaluate estimated
notes against a reference, print sampling weights, and report model
parameter counts. A small kernel runner exposes the mixture-of-experts
forward for external callers.

Exit codes: 0 success, 2 invalid input (with a JSON error object on
stderr), 64 usage errors. Randomized subcommands require an explicit
--seed; rerunning any subcommand with identical arguments and seed
produces byte-identical outputs.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

import amtkit
from amtkit import augment as aug
from amtkit import codec, encoder_math, metrics, midi, notes as notes_mod, sampling

_USAGE_EXIT = 64
_INVALID_EXIT = 2

# Defaults that define the run configuration schema; their hash is part
# of the version string so config-affecting changes are visible.
_CONFIG_DEFAULTS = {
    "max_merges": 5,
    "max_token_length": codec.N_SINGLE,
    "n_multi": codec.N_MULTI,
    "n_single": codec.N_SINGLE,
    "onset_tolerance_s": metrics.ONSET_TOLERANCE_S,
    "p_intra": 0.7,
    "p_keep_singing": 0.7,
    "segment_seconds": codec.SEGMENT_SECONDS,
    "tau": 0.3,
    "vocabulary": codec.FULL_PLUS,
}


def config_schema_hash() -> str:
    blob = json.dumps(_CONFIG_DEFAULTS, sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:12]


def version_string() -> str:
    return f"amtkit {amtkit.__version__} config {config_schema_hash()}"


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(_USAGE_EXIT)


def _write_json(payload: dict, out_path: str | None) -> None:
    text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    if out_path:
        Path(out_path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _load_notes(path: str) -> list[notes_mod.Note]:
    if path.endswith((".mid", ".midi")):
        return midi.parse_midi_file(path)
    return notes_mod.read_notes_jsonl(path)


# ---------------------------------------------------------------------------
# Subcommands


def _cmd_tokenize(args: argparse.Namespace) -> int:
    vocab = codec.Vocabulary.from_name(args.vocab)
    note_list = _load_notes(args.input)
    segment = codec.slice_segment(note_list, args.segment_start)
    if args.channels == "single":
        n_tokens = args.n_tokens or codec.N_SINGLE
        result = codec.tokenize_segment(segment, vocab, n_tokens=n_tokens)
        codec.write_token_file(args.output, result.sequence, vocab, args.segment_start)
        truncated = [result.truncated_events]
    else:
        n_tokens = args.n_tokens or codec.N_MULTI
        annotated = None
        if args.annotated:
            annotated = [int(c) for c in args.annotated.split(",") if c != ""]
        targets = codec.build_multichannel_targets(
            segment, vocab, annotated_channels=annotated, n_tokens=n_tokens
        )
        codec.write_token_file(args.output, targets.sequences, vocab, args.segment_start)
        truncated = list(targets.truncated_events)
    summary = {
        "channels": args.channels,
        "n_tokens": n_tokens,
        "notes": len(segment.notes),
        "output": args.output,
        "segment_start_s": args.segment_start,
        "tie_notes": len(segment.tie_notes),
        "truncated_events": truncated,
        "vocabulary": vocab.variant,
    }
    _write_json(summary, args.report)
    return 0


def _cmd_detokenize(args: argparse.Namespace) -> int:
    sequences, vocab, meta = codec.read_token_file(args.input)
    start = float(meta.get("segment_start_s", 0.0))
    decoded: list[notes_mod.Note] = []
    for sequence in sequences:
        if sequence.is_masked:
            continue
        result = codec.detokenize(sequence, vocab, segment_start_s=start)
        decoded.extend(result.notes)
    decoded.sort(key=lambda n: (n.onset_s, n.program, n.pitch, n.offset_s, n.is_drum))
    notes_mod.write_notes_jsonl(args.output, decoded)
    return 0


def _cmd_augment(args: argparse.Namespace) -> int:
    cache = aug.load_manifest(args.manifest, limit=args.cache_size)
    params = aug.AugmentParams(
        p_intra=args.p_intra,
        tau=args.tau,
        max_merges=args.max_iter,
        max_token_length=args.max_len,
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    results = aug.augment_batch(
        cache, args.count, args.seed, params=params,
        index_offset=args.index_offset,
    )
    elements = []
    histogram: dict[int, int] = {}
    for k, result in enumerate(results):
        index = args.index_offset + k
        stem = out_dir / f"segment_{index:05d}"
        Path(f"{stem}.f32").write_bytes(
            result.audio.astype("<f4").tobytes()
        )
        notes_mod.write_notes_jsonl(f"{stem}.jsonl", result.notes)
        histogram[result.merges] = histogram.get(result.merges, 0) + 1
        elements.append({
            "attempts": result.attempts,
            "base_segment": result.base_segment_id,
            "external_token_length": result.external_token_length,
            "index": index,
            "merged_segments": list(result.merged_segment_ids),
            "merges": result.merges,
            "peak_normalized": result.peak_normalized,
            "stems": len(result.stems),
        })
    stats = {
        "elements": elements,
        "summary": {
            "count": len(results),
            "mean_merges": sum(r.merges for r in results) / len(results),
            "merge_histogram": {str(k): v for k, v in sorted(histogram.items())},
            "seed": args.seed,
        },
    }
    if args.stats:
        _write_json(stats, args.stats)
    if args.plot:
        from amtkit import reporting

        reporting.render_merge_histogram(stats, args.plot)
    return 0


def _cmd_evaluate(args: argparse.Namespace) -> int:
    ref = _load_notes(args.ref)
    est = _load_notes(args.est)
    if args.metric == "inst_onset":
        result = metrics.instrument_note_onset_f1(
            ref, est, onset_tolerance_s=args.onset_tol
        )
        report = {"metric": args.metric, "onset_tolerance_s": args.onset_tol}
        report.update(result.as_dict())
    elif args.metric == "agnostic":
        onset, offset = metrics.agnostic_f1(ref, est, onset_tolerance_s=args.onset_tol)
        report = {
            "metric": args.metric,
            "offset": offset.as_dict(),
            "onset": onset.as_dict(),
            "onset_tolerance_s": args.onset_tol,
        }
    else:  # multi
        result = metrics.multi_f1(ref, est, onset_tolerance_s=args.onset_tol)
        report = {"metric": args.metric, "onset_tolerance_s": args.onset_tol}
        report.update(result.as_dict())
    _write_json(report, args.report)
    if args.plot:
        from amtkit import reporting

        reporting.render_evaluation_figure(report, args.plot)
    return 0


def _cmd_sample_weights(args: argparse.Namespace) -> int:
    if args.preset:
        weights = sampling.default_rebalanced_weights()
        payload = {"preset": "rebalanced", "weights": weights.as_dict()}
    else:
        sizes = json.loads(Path(args.sizes).read_text(encoding="utf-8"))
        weights = sampling.temperature_weights(sizes, args.temperature)
        payload = {"temperature": args.temperature, "weights": weights.as_dict()}
    _write_json(payload, args.out)
    return 0


def _cmd_param_count(args: argparse.Namespace) -> int:
    model = encoder_math.model_config(args.model)
    counts = encoder_math.count_parameters(model)
    payload = {"model": args.model}
    payload.update(counts.as_dict())
    _write_json(payload, args.out)
    return 0


def _cmd_kernel_moe(args: argparse.Namespace) -> int:
    tensors = encoder_math.load_weights(args.weights)
    gate = tensors["gate"]
    n_experts = gate.shape[1]
    experts = []
    for e in range(n_experts):
        experts.append(encoder_math.ExpertWeights(
            w1=tensors[f"expert_{e}.w1"],
            v_gate=tensors[f"expert_{e}.v_gate"],
            w2=tensors[f"expert_{e}.w2"],
        ))
    inputs = encoder_math.load_weights(args.input)
    out, trace = encoder_math.moe_forward(inputs["x"], gate, experts, top_k=args.top_k)
    encoder_math.save_weights(args.output, {
        "gate_weights": trace.gate_weights,
        "indices": trace.indices.astype(np.float64),
        "out": out,
    })
    return 0


# ---------------------------------------------------------------------------
# Parser assembly


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="amtkit", description=__doc__)
    parser.add_argument("--version", action="version", version=version_string())
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("tokenize", help="encode one segment of a note file")
    p.add_argument("input", help="input .mid/.midi or notes .jsonl")
    p.add_argument("output", help="output token file (sidecar written alongside)")
    p.add_argument("--vocab", choices=[codec.MIDI_PLUS, codec.FULL_PLUS],
                   default=codec.FULL_PLUS)
    p.add_argument("--channels", choices=["single", "multi"], default="single")
    p.add_argument("--segment-start", type=float, default=0.0)
    p.add_argument("--n-tokens", type=int, default=None,
                   help="length limit (defaults per channel mode)")
    p.add_argument("--annotated", default=None,
                   help="comma-separated annotated channels (multi mode)")
    p.add_argument("--report", default=None, help="write the JSON summary here")
    p.set_defaults(func=_cmd_tokenize)

    p = sub.add_parser("detokenize", help="decode a token file back to notes")
    p.add_argument("input", help="token file with sidecar")
    p.add_argument("output", help="output notes .jsonl")
    p.set_defaults(func=_cmd_detokenize)

    p = sub.add_parser("augment", help="mix stem segments from a manifest")
    p.add_argument("--manifest", required=True, help="stem manifest .jsonl")
    p.add_argument("--out-dir", required=True, help="directory for mixed segments")
    p.add_argument("--count", type=int, default=1, help="elements to produce")
    p.add_argument("--cache-size", type=int, default=None,
                   help="use only the first N manifest segments")
    p.add_argument("--p-intra", type=float, default=0.7)
    p.add_argument("--tau", type=float, default=0.3)
    p.add_argument("--max-iter", type=int, default=5)
    p.add_argument("--max-len", type=int, default=codec.N_SINGLE)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--index-offset", type=int, default=0,
                   help="global index of the first element (for sharded runs)")
    p.add_argument("--stats", default=None, help="write run statistics JSON here")
    p.add_argument("--plot", default=None, help="render a merge histogram here")
    p.set_defaults(func=_cmd_augment)

    p = sub.add_parser("evaluate", help="score estimated notes against a reference")
    p.add_argument("--ref", required=True, help="reference .mid or notes .jsonl")
    p.add_argument("--est", required=True, help="estimated .mid or notes .jsonl")
    p.add_argument("--metric", choices=["inst_onset", "agnostic", "multi"],
                   default="multi")
    p.add_argument("--onset-tol", type=float, default=metrics.ONSET_TOLERANCE_S)
    p.add_argument("--report", default=None, help="write the JSON report here")
    p.add_argument("--plot", default=None, help="render an F1 bar chart here")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("sample-weights", help="dataset sampling weights")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--sizes", help="JSON file of per-dataset sizes")
    group.add_argument("--preset", action="store_true",
                       help="print the rebalanced ten-dataset preset")
    p.add_argument("--temperature", type=float, default=3.33)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_sample_weights)

    p = sub.add_parser("param-count", help="exact model parameter counts")
    p.add_argument("--model", choices=["ymt3", "yptf", "yptf_moe"], required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_param_count)

    p = sub.add_parser("kernel-moe", help="run the mixture-of-experts forward")
    p.add_argument("--weights", required=True,
                   help="tensor file with gate and expert_<i>.{w1,v_gate,w2}")
    p.add_argument("--input", required=True, help="tensor file with x")
    p.add_argument("--output", required=True, help="output tensor file")
    p.add_argument("--top-k", type=int, default=2)
    p.set_defaults(func=_cmd_kernel_moe)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        error = {"error": {"message": str(exc), "type": type(exc).__name__}}
        print(json.dumps(error, sort_keys=True), file=sys.stderr)
        return _INVALID_EXIT


if __name__ == "__main__":
    raise SystemExit(main())
