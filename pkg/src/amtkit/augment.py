"""Stem-level segment augmentation: intra-stem dropout and cross-segment
stem merging under a mixing policy.

One training element starts from a base segment's stems. A Bernoulli
draw keeps each stem independently (redrawing if nothing survives), then
external segments are repeatedly sampled and their stems merged in, with
survival probability exp(-tau * j) after j successful merges, while the
merged external notes still fit the token budget and fewer than the
maximum number of merges have happened. A mixing policy filters each
candidate batch: no instrument-channel overlap with the stems already in
the mix, at most one drum stem, singing stems kept only with a fixed
probability, and a hard cap on total stems.

All randomness comes from per-element generators derived from a global
seed and the element index, so any element can be produced independently
and in parallel with identical results.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from amtkit.codec import N_SINGLE, SEGMENT_SECONDS, Segment, Vocabulary, _event_groups
from amtkit.notes import (
    InstrumentGroupMap,
    Note,
    SINGING_PROGRAMS,
    default_instrument_map,
    read_notes_jsonl,
)

# Fixed per-segment audio length in samples.
AUDIO_FRAMES = 32767

PITCH_SHIFT_SEMITONES = (-2, -1, 0, 1, 2)

_MAX_EMPTY_REDRAWS = 8

# Attempt cap per element: the survival check at j = 0 always passes, so
# an element whose candidates are always filtered away would otherwise
# loop forever.
_ATTEMPTS_PER_MERGE = 8


def derive_rng(seed: int, element_index: int) -> np.random.Generator:
    """Per-element generator; (seed, index) fully determines the stream."""
    return np.random.default_rng([seed, element_index])


@dataclass(frozen=True, eq=False)
class StemSegment:
    """One instrument stem of one fixed-length segment.

    ``channel_set`` holds the instrument-group channels its notes touch;
    the mixing policy treats two stems as overlapping when their channel
    sets intersect. Audio is a float32 vector of AUDIO_FRAMES samples.
    """

    stem_id: str
    dataset_id: str
    audio: np.ndarray
    notes: tuple[Note, ...]
    channel_set: frozenset[int]
    is_drum_stem: bool
    has_singing: bool

    def __post_init__(self) -> None:
        if self.audio.shape != (AUDIO_FRAMES,):
            raise ValueError(
                f"stem audio must have shape ({AUDIO_FRAMES},), got {self.audio.shape}"
            )
        if self.audio.dtype != np.float32:
            raise ValueError(f"stem audio must be float32, got {self.audio.dtype}")


def make_stem_segment(
    stem_id: str,
    dataset_id: str,
    notes: Iterable[Note],
    audio: np.ndarray | None = None,
    imap: InstrumentGroupMap | None = None,
) -> StemSegment:
    """Builds a stem, deriving channel set and drum/singing flags."""
    imap = imap or default_instrument_map()
    notes = tuple(notes)
    if audio is None:
        audio = np.zeros(AUDIO_FRAMES, dtype=np.float32)
    channels = {
        c for c in (imap.channel_of(n.program, n.is_drum) for n in notes)
        if c is not None
    }
    return StemSegment(
        stem_id=stem_id,
        dataset_id=dataset_id,
        audio=np.asarray(audio, dtype=np.float32),
        notes=notes,
        channel_set=frozenset(channels),
        is_drum_stem=any(n.is_drum for n in notes),
        has_singing=any(n.program in SINGING_PROGRAMS and not n.is_drum for n in notes),
    )


@dataclass(frozen=True)
class CachedSegment:
    """All stems of one source segment, keyed by segment id."""

    segment_id: str
    stems: tuple[StemSegment, ...]

    def __post_init__(self) -> None:
        if not self.stems:
            raise ValueError(f"segment {self.segment_id} has no stems")


class SegmentCache:
    """In-memory pool of segments the augmenter samples from."""

    def __init__(self, segments: Sequence[CachedSegment]):
        if not segments:
            raise ValueError("segment cache is empty")
        ids = [s.segment_id for s in segments]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate segment ids in cache")
        self._segments = list(segments)
        self._index = {s.segment_id: i for i, s in enumerate(self._segments)}

    def __len__(self) -> int:
        return len(self._segments)

    def __getitem__(self, index: int) -> CachedSegment:
        return self._segments[index]

    def get(self, segment_id: str) -> CachedSegment:
        return self._segments[self._index[segment_id]]

    def sample_excluding(
        self, segment_id: str, rng: np.random.Generator
    ) -> CachedSegment:
        """Uniformly samples a segment other than the given one."""
        candidates = [s for s in self._segments if s.segment_id != segment_id]
        if not candidates:
            raise ValueError("cache has no segment other than the base")
        return candidates[int(rng.integers(len(candidates)))]


@dataclass(frozen=True)
class MixingPolicy:
    """Constraints on which external stems may join a mix."""

    allow_channel_overlap: bool = False
    allow_multiple_drum_stems: bool = False
    max_stems: int = 12
    p_keep_singing: float = 0.7

    def __post_init__(self) -> None:
        if self.max_stems < 1:
            raise ValueError("max_stems must be >= 1")
        if not 0.0 <= self.p_keep_singing <= 1.0:
            raise ValueError("p_keep_singing must be in [0, 1]")


@dataclass(frozen=True)
class AugmentParams:
    """Knobs of the stem-merging loop."""

    p_intra: float = 0.7
    tau: float = 0.3
    max_merges: int = 5
    max_token_length: int = N_SINGLE

    def __post_init__(self) -> None:
        if not 0.0 <= self.p_intra <= 1.0:
            raise ValueError("p_intra must be in [0, 1]")
        if self.tau < 0:
            raise ValueError("tau must be >= 0")
        if self.max_merges < 0:
            raise ValueError("max_merges must be >= 0")
        if self.max_token_length < 2:
            raise ValueError("max_token_length must be >= 2")


def intra_stem_select(
    stems: Sequence[StemSegment], p: float, rng: np.random.Generator
) -> list[StemSegment]:
    """Keeps each stem independently with probability ``p``.

    Single-stem inputs pass through unchanged. An all-dropped draw is
    redrawn a bounded number of times; if every redraw comes up empty the
    full stem set is returned.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must be in [0, 1]")
    if len(stems) <= 1:
        return list(stems)
    for _ in range(_MAX_EMPTY_REDRAWS):
        kept = [s for s in stems if rng.random() < p]
        if kept:
            return kept
    return list(stems)


def filter_policy(
    candidates: Sequence[StemSegment],
    current: Sequence[StemSegment],
    policy: MixingPolicy,
    rng: np.random.Generator,
) -> list[StemSegment]:
    """Filters a candidate stem batch against the stems already mixed.

    Candidates are scanned in order; each is checked against the current
    stems plus the candidates already accepted, so the result never
    introduces a channel collision or a second drum stem. Singing
    candidates survive with probability ``p_keep_singing``. Accepted
    candidates are finally truncated so the total never exceeds
    ``max_stems``.
    """
    drums_present = any(s.is_drum_stem for s in current)
    blocked_channels = set()
    for stem in current:
        blocked_channels |= stem.channel_set

    accepted: list[StemSegment] = []
    for stem in candidates:
        if not policy.allow_channel_overlap and stem.channel_set & blocked_channels:
            continue
        if not policy.allow_multiple_drum_stems and stem.is_drum_stem and drums_present:
            continue
        if stem.has_singing and not rng.random() < policy.p_keep_singing:
            continue
        accepted.append(stem)
        blocked_channels |= stem.channel_set
        drums_present = drums_present or stem.is_drum_stem

    room = max(policy.max_stems - len(current), 0)
    return accepted[:room]


def merged_token_length(
    stems: Sequence[StemSegment], vocab: Vocabulary | None = None
) -> int:
    """Token count of the stems' merged notes, unlimited budget.

    Uses the single-sequence grammar over the full-resolution vocabulary
    with no length cap, counting tokens before padding.
    """
    vocab = vocab or Vocabulary.full_plus()
    notes = sorted(
        (note for stem in stems for note in stem.notes),
        key=lambda n: (n.onset_s, n.program, n.pitch, n.offset_s, n.is_drum),
    )
    segment = Segment(start_s=0.0, duration_s=SEGMENT_SECONDS, notes=tuple(notes))
    tie_groups, event_groups = _event_groups(segment, vocab)
    content = sum(len(g) for g in tie_groups) + sum(len(g) for g in event_groups)
    return content + 2  # TIE_SECTION_END and EOS


@dataclass(frozen=True)
class AugmentResult:
    """One augmented element: the mixed stems and their merged content."""

    base_segment_id: str
    stems: tuple[StemSegment, ...]
    notes: tuple[Note, ...]
    audio: np.ndarray
    merges: int
    attempts: int
    merged_segment_ids: tuple[str, ...]
    external_token_length: int
    peak_normalized: bool


def mix_stems(stems: Sequence[StemSegment]) -> tuple[np.ndarray, bool]:
    """Unit-gain sum of stem audio, peak-normalized only if it clips."""
    audio = np.zeros(AUDIO_FRAMES, dtype=np.float32)
    for stem in stems:
        audio = audio + stem.audio
    peak = float(np.max(np.abs(audio))) if len(stems) else 0.0
    clipped = peak > 1.0
    if clipped:
        audio = audio / peak
    return audio.astype(np.float32), clipped


def cross_stem_augment(
    base: CachedSegment,
    cache: SegmentCache,
    params: AugmentParams | None = None,
    policy: MixingPolicy | None = None,
    rng: np.random.Generator | None = None,
    vocab: Vocabulary | None = None,
) -> AugmentResult:
    """Builds one augmented element from a base segment.

    The merge loop tests, in order: the survival draw r < exp(-tau * j),
    the token budget of the merged external notes, and the merge-count
    cap. The merge counter advances only when a candidate batch survives
    the policy filter with at least one stem. A bounded number of total
    attempts guards against candidates that never survive.
    """
    params = params or AugmentParams()
    policy = policy or MixingPolicy()
    rng = rng if rng is not None else np.random.default_rng()
    vocab = vocab or Vocabulary.full_plus()

    stems_in = intra_stem_select(base.stems, params.p_intra, rng)
    external: list[StemSegment] = []
    merged_ids: list[str] = []
    merges = 0
    attempts = 0
    token_length = 0
    max_attempts = _ATTEMPTS_PER_MERGE * (params.max_merges + 1)

    while (
        rng.random() < math.exp(-params.tau * merges)
        and token_length < params.max_token_length
        and merges < params.max_merges
        and attempts < max_attempts
    ):
        attempts += 1
        candidate = cache.sample_excluding(base.segment_id, rng)
        kept = filter_policy(candidate.stems, [*stems_in, *external], policy, rng)
        if not kept:
            continue
        external.extend(kept)
        merged_ids.append(candidate.segment_id)
        merges += 1
        token_length = merged_token_length(external, vocab)

    stems = (*stems_in, *external)
    audio, clipped = mix_stems(stems)
    notes = sorted(
        (note for stem in stems for note in stem.notes),
        key=lambda n: (n.onset_s, n.program, n.pitch, n.offset_s, n.is_drum),
    )
    return AugmentResult(
        base_segment_id=base.segment_id,
        stems=stems,
        notes=tuple(notes),
        audio=audio,
        merges=merges,
        attempts=attempts,
        merged_segment_ids=tuple(merged_ids),
        external_token_length=token_length,
        peak_normalized=clipped,
    )


def augment_batch(
    cache: SegmentCache,
    count: int,
    seed: int,
    params: AugmentParams | None = None,
    policy: MixingPolicy | None = None,
    vocab: Vocabulary | None = None,
    index_offset: int = 0,
) -> list[AugmentResult]:
    """Produces ``count`` elements with per-element derived generators.

    Element k (global index ``index_offset + k``) derives its own
    generator from (seed, global index) and picks its own base segment,
    so disjoint index ranges computed anywhere, in any order, reproduce
    exactly the elements a single sequential run would produce.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    if index_offset < 0:
        raise ValueError("index_offset must be >= 0")
    results = []
    for k in range(count):
        element_index = index_offset + k
        rng = derive_rng(seed, element_index)
        base = cache[int(rng.integers(len(cache)))]
        results.append(
            cross_stem_augment(base, cache, params, policy, rng, vocab)
        )
    return results


# ---------------------------------------------------------------------------
# Pitch-shift label transforms


def assign_shift_groups(
    count: int,
    rng: np.random.Generator,
    semitones: Sequence[int] = PITCH_SHIFT_SEMITONES,
) -> np.ndarray:
    """Uniformly assigns one of the shift amounts to each element."""
    if count < 0:
        raise ValueError("count must be >= 0")
    choices = np.asarray(semitones, dtype=np.int64)
    return choices[rng.integers(len(choices), size=count)]


def pitch_shift_labels(notes: Iterable[Note], semitones: int) -> list[Note]:
    """Transposes pitched notes; drums are unchanged.

    Notes shifted outside the MIDI pitch range are dropped.
    """
    if semitones not in PITCH_SHIFT_SEMITONES:
        raise ValueError(
            f"semitones {semitones} not in {sorted(PITCH_SHIFT_SEMITONES)}"
        )
    out: list[Note] = []
    for note in notes:
        if note.is_drum or semitones == 0:
            out.append(note)
            continue
        pitch = note.pitch + semitones
        if not 0 <= pitch <= 127:
            continue
        out.append(
            Note(note.onset_s, note.offset_s, pitch, note.program,
                 note.velocity, False)
        )
    return out


# ---------------------------------------------------------------------------
# Manifest loading


def load_manifest(path: str | Path, limit: int | None = None) -> SegmentCache:
    """Loads a stem manifest into a segment cache.

    The manifest is JSON-lines, one stem per line:

        {"segment_id": ..., "stem_id": ..., "dataset_id": ...,
         "notes": "notes.jsonl", "audio": "audio.f32"}

    ``notes`` is a note JSONL path and ``audio`` an optional raw
    little-endian float32 file of AUDIO_FRAMES samples (silence when
    absent). Relative paths resolve against the manifest's directory.
    Stems group into segments by ``segment_id`` in first-seen order;
    ``limit`` keeps only the first segments.
    """
    path = Path(path)
    root = path.parent
    order: list[str] = []
    grouped: dict[str, list[StemSegment]] = {}
    text = path.read_text(encoding="utf-8")
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValueError(f"manifest line {line_no}: invalid JSON: {exc}") from exc
        try:
            segment_id = str(record["segment_id"])
            stem_id = str(record["stem_id"])
            dataset_id = str(record.get("dataset_id", ""))
            notes_path = record["notes"]
        except KeyError as exc:
            raise ValueError(f"manifest line {line_no}: missing field {exc}") from exc
        notes = read_notes_jsonl(root / notes_path)
        audio = None
        if record.get("audio"):
            raw = (root / record["audio"]).read_bytes()
            audio = np.frombuffer(raw, dtype="<f4")
            if audio.shape != (AUDIO_FRAMES,):
                raise ValueError(
                    f"manifest line {line_no}: audio has {audio.shape[0]} samples, "
                    f"expected {AUDIO_FRAMES}"
                )
        stem = make_stem_segment(stem_id, dataset_id, notes, audio)
        if segment_id not in grouped:
            order.append(segment_id)
            grouped[segment_id] = []
        grouped[segment_id].append(stem)
    if limit is not None:
        order = order[:limit]
    segments = [CachedSegment(sid, tuple(grouped[sid])) for sid in order]
    return SegmentCache(segments)
