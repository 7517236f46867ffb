"""Note-level transcription metrics over reference/estimate note lists.

Matching is a maximum-cardinality bipartite matching between reference
and estimated notes under an admissibility predicate, solved with
Hopcroft-Karp. A pair is admissible when:

  * both notes are drums or both are pitched;
  * onsets differ by at most the tolerance (closed interval, 50 ms by
    default);
  * pitches are equal;
  * if instrument identity is required, both notes map to the same
    instrument group channel;
  * if offsets are scored, offsets differ by at most
    max(0.05 s, 0.2 x reference duration); drum offsets are never scored.

Three metric families build on this:

  * instrument onset score: notes are bucketed by instrument group
    channel and matched per channel on onset + pitch;
  * instrument-agnostic score: drums are excluded and programs ignored;
    reported both onset-only and onset+offset;
  * combined score: one matching over all notes requiring onset, pitch,
    and instrument group, plus offsets for pitched notes.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field, replace
from typing import Sequence

from amtkit.notes import InstrumentGroupMap, Note, default_instrument_map

ONSET_TOLERANCE_S = 0.05
OFFSET_MIN_TOLERANCE_S = 0.05
OFFSET_DURATION_RATIO = 0.2

_UNMATCHED = -1


@dataclass(frozen=True)
class MatchConfig:
    """Admissibility switches for one matching run."""

    onset_tolerance_s: float = ONSET_TOLERANCE_S
    offset_enabled: bool = False
    offset_min_tolerance_s: float = OFFSET_MIN_TOLERANCE_S
    offset_duration_ratio: float = OFFSET_DURATION_RATIO
    require_instrument_group: bool = False

    def __post_init__(self) -> None:
        if self.onset_tolerance_s < 0:
            raise ValueError("onset tolerance must be >= 0")
        if self.offset_min_tolerance_s < 0 or self.offset_duration_ratio < 0:
            raise ValueError("offset tolerance terms must be >= 0")


@dataclass(frozen=True)
class EvalResult:
    """Precision/recall/F1 with match counts.

    ``per_instrument`` (when present) maps channel names to per-channel
    results; ``macro_f1`` is their unweighted mean over channels present
    in either the reference or the estimate.
    """

    precision: float
    recall: float
    f1: float
    matched: int
    n_ref: int
    n_est: int
    per_instrument: dict[str, "EvalResult"] | None = None
    macro_f1: float | None = None

    def as_dict(self) -> dict:
        out = {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "matched": self.matched,
            "n_ref": self.n_ref,
            "n_est": self.n_est,
        }
        if self.macro_f1 is not None:
            out["macro_f1"] = self.macro_f1
        if self.per_instrument is not None:
            out["per_instrument"] = {
                name: result.as_dict()
                for name, result in sorted(self.per_instrument.items())
            }
        return out


# Slack absorbing binary-float representation error so the tolerance
# boundary behaves as a closed interval for decimal inputs (e.g. an onset
# difference written as 0.05 must count as within +/-0.05). The slack is
# six orders of magnitude below the 10 ms time grid, so it can never flip
# a musically meaningful decision.
_BOUNDARY_SLACK_S = 1e-9


def _admissible(ref: Note, est: Note, cfg: MatchConfig, imap: InstrumentGroupMap) -> bool:
    if ref.is_drum != est.is_drum:
        return False
    if abs(ref.onset_s - est.onset_s) > cfg.onset_tolerance_s + _BOUNDARY_SLACK_S:
        return False
    if ref.pitch != est.pitch:
        return False
    if cfg.require_instrument_group:
        if imap.channel_of(ref.program, ref.is_drum) != imap.channel_of(
            est.program, est.is_drum
        ):
            return False
    if cfg.offset_enabled and not ref.is_drum:
        tolerance = max(
            cfg.offset_min_tolerance_s, cfg.offset_duration_ratio * ref.duration_s
        )
        if abs(ref.offset_s - est.offset_s) > tolerance + _BOUNDARY_SLACK_S:
            return False
    return True


def _hopcroft_karp(adjacency: list[list[int]], n_right: int) -> list[int]:
    """Maximum bipartite matching; returns right partner per left node.

    BFS layers the graph from free left nodes, then iterative DFS finds a
    maximal set of disjoint shortest augmenting paths per phase.
    """
    n_left = len(adjacency)
    inf = float("inf")
    match_left = [_UNMATCHED] * n_left
    match_right = [_UNMATCHED] * n_right
    dist = [inf] * n_left

    def bfs() -> bool:
        queue = deque()
        for u in range(n_left):
            if match_left[u] == _UNMATCHED:
                dist[u] = 0
                queue.append(u)
            else:
                dist[u] = inf
        found = False
        while queue:
            u = queue.popleft()
            for v in adjacency[u]:
                w = match_right[v]
                if w == _UNMATCHED:
                    found = True
                elif dist[w] == inf:
                    dist[w] = dist[u] + 1
                    queue.append(w)
        return found

    def dfs(root: int) -> bool:
        # path holds the (left, right) edges of the current walk; the last
        # entry is always the edge into the node being explored.
        stack = [(root, 0)]
        path: list[tuple[int, int]] = []
        while stack:
            u, edge_index = stack.pop()
            if edge_index >= len(adjacency[u]):
                dist[u] = inf  # exhausted in this phase
                if path:
                    path.pop()
                continue
            stack.append((u, edge_index + 1))
            v = adjacency[u][edge_index]
            w = match_right[v]
            if w == _UNMATCHED:
                path.append((u, v))
                for pu, pv in path:
                    match_left[pu] = pv
                    match_right[pv] = pu
                return True
            if dist[w] == dist[u] + 1:
                path.append((u, v))
                stack.append((w, 0))
        return False

    while bfs():
        for u in range(n_left):
            if match_left[u] == _UNMATCHED:
                dfs(u)
    return match_left


def match_notes(
    ref: Sequence[Note],
    est: Sequence[Note],
    cfg: MatchConfig | None = None,
    imap: InstrumentGroupMap | None = None,
) -> list[tuple[int, int]]:
    """Maximum matching of admissible (ref_index, est_index) pairs."""
    cfg = cfg or MatchConfig()
    imap = imap or default_instrument_map()
    adjacency = [
        [j for j, e in enumerate(est) if _admissible(r, e, cfg, imap)]
        for r in ref
    ]
    match_left = _hopcroft_karp(adjacency, len(est))
    return [(i, j) for i, j in enumerate(match_left) if j != _UNMATCHED]


def _score(matched: int, n_ref: int, n_est: int) -> EvalResult:
    precision = matched / n_est if n_est else 0.0
    recall = matched / n_ref if n_ref else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return EvalResult(precision, recall, f1, matched, n_ref, n_est)


def _match_score(
    ref: Sequence[Note],
    est: Sequence[Note],
    cfg: MatchConfig,
    imap: InstrumentGroupMap,
) -> EvalResult:
    matched = len(match_notes(ref, est, cfg, imap))
    return _score(matched, len(ref), len(est))


def _by_channel(
    notes: Sequence[Note], imap: InstrumentGroupMap
) -> dict[str, list[Note]]:
    buckets: dict[str, list[Note]] = {}
    for note in notes:
        name = imap.channel_name(imap.channel_of(note.program, note.is_drum))
        buckets.setdefault(name, []).append(note)
    return buckets


def _with_channel_breakdown(
    overall: EvalResult,
    ref: Sequence[Note],
    est: Sequence[Note],
    cfg: MatchConfig,
    imap: InstrumentGroupMap,
) -> EvalResult:
    ref_buckets = _by_channel(ref, imap)
    est_buckets = _by_channel(est, imap)
    names = sorted(set(ref_buckets) | set(est_buckets))
    per_instrument = {
        name: _match_score(ref_buckets.get(name, []), est_buckets.get(name, []),
                           cfg, imap)
        for name in names
    }
    macro = (
        sum(r.f1 for r in per_instrument.values()) / len(per_instrument)
        if per_instrument
        else 0.0
    )
    return replace(overall, per_instrument=per_instrument, macro_f1=macro)


def instrument_note_onset_f1(
    ref: Sequence[Note],
    est: Sequence[Note],
    imap: InstrumentGroupMap | None = None,
    onset_tolerance_s: float = ONSET_TOLERANCE_S,
) -> EvalResult:
    """Onset + pitch score requiring the instrument group to match.

    Because admissibility requires equal channels, the overall (micro)
    matching decomposes exactly into per-channel matchings; both views
    are reported.
    """
    imap = imap or default_instrument_map()
    cfg = MatchConfig(
        onset_tolerance_s=onset_tolerance_s, require_instrument_group=True
    )
    ref_buckets = _by_channel(ref, imap)
    est_buckets = _by_channel(est, imap)
    names = sorted(set(ref_buckets) | set(est_buckets))
    per_instrument = {
        name: _match_score(ref_buckets.get(name, []), est_buckets.get(name, []),
                           cfg, imap)
        for name in names
    }
    matched = sum(r.matched for r in per_instrument.values())
    overall = _score(matched, len(ref), len(est))
    macro = (
        sum(r.f1 for r in per_instrument.values()) / len(per_instrument)
        if per_instrument
        else 0.0
    )
    return replace(overall, per_instrument=per_instrument, macro_f1=macro)


def agnostic_f1(
    ref: Sequence[Note],
    est: Sequence[Note],
    onset_tolerance_s: float = ONSET_TOLERANCE_S,
    imap: InstrumentGroupMap | None = None,
) -> tuple[EvalResult, EvalResult]:
    """Instrument-agnostic (onset-only, onset+offset) scores, drums excluded."""
    imap = imap or default_instrument_map()
    ref_pitched = [n for n in ref if not n.is_drum]
    est_pitched = [n for n in est if not n.is_drum]
    onset_cfg = MatchConfig(onset_tolerance_s=onset_tolerance_s)
    offset_cfg = MatchConfig(onset_tolerance_s=onset_tolerance_s, offset_enabled=True)
    return (
        _match_score(ref_pitched, est_pitched, onset_cfg, imap),
        _match_score(ref_pitched, est_pitched, offset_cfg, imap),
    )


def multi_f1(
    ref: Sequence[Note],
    est: Sequence[Note],
    imap: InstrumentGroupMap | None = None,
    onset_tolerance_s: float = ONSET_TOLERANCE_S,
) -> EvalResult:
    """Combined score over all notes: onset, pitch, instrument group, and
    offsets for pitched notes; drum notes are scored without offsets."""
    imap = imap or default_instrument_map()
    cfg = MatchConfig(
        onset_tolerance_s=onset_tolerance_s,
        offset_enabled=True,
        require_instrument_group=True,
    )
    overall = _match_score(ref, est, cfg, imap)
    return _with_channel_breakdown(overall, ref, est, cfg, imap)
