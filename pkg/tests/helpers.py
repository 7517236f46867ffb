"""Shared test utilities: random note generation, an independent
quantization oracle for codec round trips, a plan-driven MIDI byte
builder with its own timing oracle, and a brute-force matching oracle.

These deliberately avoid the library's own code paths wherever they act
as oracles: the MIDI builder computes expected times from the plan, not
from the bytes; the quantization oracle applies the documented rules
note by note without touching tokens; the matcher enumerates matchings
by dynamic programming instead of augmenting paths.
"""

from __future__ import annotations

import math
import struct

import numpy as np

from amtkit.codec import SEGMENT_SECONDS, Segment, Vocabulary
from amtkit.encoder_math import AttentionWeights, ExpertWeights
from amtkit.notes import DRUM_DURATION_S, Note

# ---------------------------------------------------------------------------
# Random segments with guaranteed-distinct (program, pitch) keys


def random_segment_notes(
    rng: np.random.Generator,
    n_notes: int,
    start_s: float = 0.0,
    duration_s: float = SEGMENT_SECONDS,
    programs: list[int] | None = None,
    drum_fraction: float = 0.2,
    spill: float = 0.5,
) -> list[Note]:
    """Timeline notes around a window, with unique (program, pitch) keys.

    Unique keys keep round trips unambiguous: offsets can never pair
    with the wrong onset. ``spill`` extends the sampled onset range both
    ways so slicing the window produces ties and still-open notes.
    """
    if programs is None:
        programs = [0, 8, 24, 32, 40, 56, 64, 72, 80, 88, 100]
    keys: set[tuple[int, int]] = set()
    notes: list[Note] = []
    low = max(start_s - spill, 0.0)
    high = start_s + duration_s + spill
    for _ in range(n_notes):
        is_drum = rng.random() < drum_fraction
        for _attempt in range(64):
            program = int(programs[rng.integers(len(programs))])
            pitch = int(rng.integers(128))
            key = (program, pitch, is_drum)
            if key not in keys:
                keys.add(key)
                break
        else:
            continue
        onset = float(rng.uniform(low, high))
        if is_drum:
            notes.append(Note(onset, onset + DRUM_DURATION_S, pitch, program, 1, True))
        else:
            offset = onset + float(rng.uniform(0.001, 1.5))
            notes.append(Note(onset, offset, pitch, program, 1, False))
    notes.sort(key=lambda n: (n.onset_s, n.program, n.pitch))
    return notes


def expected_quantized_notes(segment: Segment, vocab: Vocabulary) -> list[tuple]:
    """Independent quantization oracle for one segment's decode result.

    Applies the documented rules directly per note: 10 ms floor bins
    relative to the window start, a one-bin minimum duration, window-end
    materialization for notes without an offset event, drum programs
    collapsing to 0, and the vocabulary's program projection.
    """
    start = segment.start_s
    duration = segment.duration_s
    n_bins = vocab.shift_token_count

    def to_bin(rel: float) -> int:
        return min(int((rel + 1e-9) / 0.01), n_bins - 1)

    tie_keys = {
        (vocab.normalize_program(p), pitch) for p, pitch in segment.tie_notes
    }
    consumed: set[tuple[int, int]] = set()
    out: list[tuple] = []
    for note in segment.notes:
        if note.is_drum:
            onset_bin = to_bin(note.onset_s - start)
            onset = start + onset_bin * 0.01
            out.append((onset, onset + DRUM_DURATION_S, note.pitch, 0, True))
            continue
        program = vocab.normalize_program(note.program)
        key = (program, note.pitch)
        continuation = (
            key in tie_keys
            and key not in consumed
            and abs(note.onset_s - start) <= 1e-9
        )
        if continuation:
            consumed.add(key)
            onset_bin = 0
        else:
            onset_bin = to_bin(note.onset_s - start)
        onset = start + onset_bin * 0.01
        if note.offset_s - start < duration - 1e-9:
            offset_bin = min(max(to_bin(note.offset_s - start), onset_bin + 1),
                             n_bins - 1)
            offset = start + offset_bin * 0.01
        else:
            offset = max(start + duration, start + (onset_bin + 1) * 0.01)
        out.append((onset, offset, note.pitch, program, False))
    out.sort()
    return out


def decoded_note_tuples(notes) -> list[tuple]:
    out = [(n.onset_s, n.offset_s, n.pitch, n.program, n.is_drum) for n in notes]
    out.sort()
    return out


# ---------------------------------------------------------------------------
# Plan-driven Standard MIDI File builder (oracle side)


def _varint(value: int) -> bytes:
    out = [value & 0x7F]
    value >>= 7
    while value:
        out.append((value & 0x7F) | 0x80)
        value >>= 7
    return bytes(reversed(out))


def build_smf(
    division: int,
    tracks: list[list[tuple]],
    fmt: int | None = None,
    running_status: bool = False,
) -> bytes:
    """Builds SMF bytes from per-track absolute-tick event plans.

    Each event is (tick, kind, channel, a, b) with kinds "on", "off",
    "program", "tempo" (a = microseconds per quarter). Events are laid
    out in the given order with delta times derived from the ticks.
    """
    if fmt is None:
        fmt = 0 if len(tracks) == 1 else 1
    chunks = [b"MThd" + struct.pack(">IHHH", 6, fmt, len(tracks), division)]
    for events in tracks:
        body = bytearray()
        last_tick = 0
        last_status: int | None = None
        for tick, kind, channel, a, b in events:
            body += _varint(tick - last_tick)
            last_tick = tick
            if kind == "tempo":
                body += bytes([0xFF, 0x51, 0x03])
                body += int(a).to_bytes(3, "big")
                last_status = None
                continue
            if kind == "program":
                status = 0xC0 | channel
                data = bytes([a])
            elif kind == "on":
                status = 0x90 | channel
                data = bytes([a, b])
            else:  # off
                status = 0x80 | channel
                data = bytes([a, b])
            if running_status and status == last_status:
                body += data
            else:
                body += bytes([status]) + data
            last_status = status
        body += _varint(0) + bytes([0xFF, 0x2F, 0x00])
        chunks.append(b"MTrk" + struct.pack(">I", len(body)) + bytes(body))
    return b"".join(chunks)


def plan_seconds(
    division: int, tempo_changes: list[tuple[int, int]], tick: int
) -> float:
    """Oracle tick-to-seconds walker, float accumulation over the plan.

    ``tempo_changes`` is [(tick, us_per_quarter)] sorted by tick; tempo
    before the first change is 500000. Independent of the parser's exact
    rational path.
    """
    tempo = 500_000
    seconds = 0.0
    cursor = 0
    for change_tick, new_tempo in tempo_changes:
        if change_tick >= tick:
            break
        seconds += (change_tick - cursor) * tempo / (division * 1e6)
        cursor = change_tick
        tempo = new_tempo
    seconds += (tick - cursor) * tempo / (division * 1e6)
    return seconds


# ---------------------------------------------------------------------------
# Brute-force maximum matching oracle


def max_matching_bruteforce(adjacency: list[list[int]], n_right: int) -> int:
    """Maximum bipartite matching size by bitmask dynamic programming.

    f(i, used) = best matching over left nodes i.. with right set
    ``used`` taken. Exponential in the right side; callers keep
    n_right small.
    """
    from functools import lru_cache

    n_left = len(adjacency)

    @lru_cache(maxsize=None)
    def best(i: int, used: int) -> int:
        if i == n_left:
            return 0
        top = best(i + 1, used)  # leave left node i unmatched
        for j in adjacency[i]:
            if not used & (1 << j):
                top = max(top, 1 + best(i + 1, used | (1 << j)))
        return top

    result = best(0, 0)
    best.cache_clear()
    return result



# ---------------------------------------------------------------------------
# Scalar kernel oracles (explicit index loops, no vectorized shortcuts): explicit index loops, no vectorized shortcuts.


def rope_oracle(x, positions, base=10000.0):
    x = np.asarray(x, dtype=np.float64)
    out = np.array(x, copy=True)
    dim = x.shape[-1]
    flat = out.reshape(-1, x.shape[-2], dim)
    for b in range(flat.shape[0]):
        for s in range(flat.shape[1]):
            for i in range(dim // 2):
                theta = positions[s] * base ** (-2.0 * i / dim)
                c, sn = math.cos(theta), math.sin(theta)
                a, bb = flat[b, s, 2 * i], flat[b, s, 2 * i + 1]
                flat[b, s, 2 * i] = a * c - bb * sn
                flat[b, s, 2 * i + 1] = a * sn + bb * c
    return flat.reshape(x.shape)


def attention_oracle(q_in, kv_in, w, pos_q=None, pos_k=None):
    h_count = w.n_heads
    inner = w.wq.shape[1]
    dh = inner // h_count
    sq, sk = q_in.shape[0], kv_in.shape[0]
    d_out = w.wo.shape[1]
    q = q_in @ w.wq
    k = kv_in @ w.wk
    v = kv_in @ w.wv
    merged = np.zeros((sq, inner))
    attn = np.zeros((h_count, sq, sk))
    for h in range(h_count):
        qh = q[:, h * dh:(h + 1) * dh]
        kh = k[:, h * dh:(h + 1) * dh]
        vh = v[:, h * dh:(h + 1) * dh]
        if pos_q is not None:
            qh = rope_oracle(qh, pos_q)
        if pos_k is not None:
            kh = rope_oracle(kh, pos_k)
        for i in range(sq):
            scores = [
                sum(qh[i, d] * kh[j, d] for d in range(dh)) / math.sqrt(dh)
                for j in range(sk)
            ]
            top = max(scores)
            exps = [math.exp(s - top) for s in scores]
            z = sum(exps)
            for j in range(sk):
                attn[h, i, j] = exps[j] / z
            for d in range(dh):
                merged[i, h * dh + d] = sum(
                    attn[h, i, j] * vh[j, d] for j in range(sk)
                )
    return merged @ w.wo, attn


def expert_oracle(x, expert):
    dff, d = expert.w1.shape
    hidden = []
    for r in range(dff):
        a = sum(x[i] * expert.w1[r, i] for i in range(d))
        g = sum(x[i] * expert.v_gate[r, i] for i in range(d))
        hidden.append((a / (1.0 + math.exp(-a))) * g)
    return np.array([
        sum(expert.w2[o, r] * hidden[r] for r in range(dff))
        for o in range(expert.w2.shape[0])
    ])


def moe_oracle(tokens, gate_w, experts, top_k):
    n = len(experts)
    outs, idxs, gws = [], [], []
    for token in tokens:
        logits = [
            sum(token[i] * gate_w[i, e] for i in range(len(token)))
            for e in range(n)
        ]
        chosen = sorted(range(n), key=lambda e: (-logits[e], e))[:top_k]
        top = max(logits[e] for e in chosen)
        exps = [math.exp(logits[e] - top) for e in chosen]
        z = sum(exps)
        weights = [x / z for x in exps]
        out = np.zeros(experts[0].w2.shape[0])
        for wgt, e in zip(weights, chosen):
            out += wgt * expert_oracle(token, experts[e])
        outs.append(out)
        idxs.append(chosen)
        gws.append(weights)
    return np.array(outs), np.array(idxs), np.array(gws)


def rand_attention_weights(rng, d_q, d_kv, n_heads, d_head, d_out):
    inner = n_heads * d_head
    return AttentionWeights(
        wq=rng.normal(size=(d_q, inner)),
        wk=rng.normal(size=(d_kv, inner)),
        wv=rng.normal(size=(d_kv, inner)),
        wo=rng.normal(size=(inner, d_out)),
        n_heads=n_heads,
    )


def rand_experts(rng, n, d, dff):
    return [
        ExpertWeights(
            w1=rng.normal(size=(dff, d)),
            v_gate=rng.normal(size=(dff, d)),
            w2=rng.normal(size=(d, dff)),
        )
        for _ in range(n)
    ]
