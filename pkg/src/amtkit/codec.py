"""Token codec for fixed-length transcription segments.

A 2.048 s audio window is represented as a flat token sequence:

    [tie section] TIE_SECTION_END [timed events] EOS PAD...

The tie section declares notes already sounding when the window starts,
as (program, pitch) pairs sorted by program then pitch. Timed events are
chronological at 10 ms resolution: a shift token selects a time bin, and
the events inside one bin are sorted by (program, velocity, pitch) so
that offsets (velocity 0) precede onsets (velocity 1). Shift, program,
and velocity tokens are emitted only when their state changes, so no two
adjacent tokens of those kinds repeat a value.

Pitched onsets are [program?] [velocity?] pitch; pitched offsets reuse
the same pitch token under velocity 0. Drum hits are onset-only and use
a dedicated drum-pitch token family under velocity 1, with no program
token and no offset event. A note whose offset lies at or beyond the
window end emits no offset event and is reported as still open by the
decoder; the note is expected to continue into the next window's tie
section.

Two vocabulary variants share one layout. FULL_PLUS keeps all 128
programs distinct; MIDI_PLUS folds each program onto the first program
of its 8-wide General MIDI family (100 and 101, singing, stay distinct).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from amtkit.notes import (
    DRUM_DURATION_S,
    InstrumentGroupMap,
    Note,
    SINGING_PROGRAMS,
    default_instrument_map,
)

SEGMENT_SECONDS = 2.048
SHIFT_BIN_SECONDS = 0.01

# Bins 0..204 cover a 2.048 s window; bin 205 is reachable only by the
# minimum-duration push of an offset whose onset sits in the last bin.
SHIFT_TOKEN_COUNT = 206

N_SINGLE = 1024
N_MULTI = 256

PAD_ID = 0
EOS_ID = 1
TIE_SECTION_END_ID = 2

_PITCH_COUNT = 128
_VELOCITY_COUNT = 2
_PROGRAM_COUNT = 128
_DRUM_COUNT = 128

FULL_PLUS = "full_plus"
MIDI_PLUS = "midi_plus"

# Sort key placing drum events after all pitched programs within a bin,
# so drum hits never split a pitched program run.
_DRUM_SORT_PROGRAM = 128


class DecodeError(ValueError):
    """Ungrammatical token sequence. ``index`` locates the offending token."""

    def __init__(self, message: str, index: int):
        super().__init__(f"{message} (token {index})")
        self.index = index


class SegmentWindowError(ValueError):
    """A note lies outside the segment window it is being encoded into."""


@dataclass(frozen=True)
class Vocabulary:
    """Token id layout plus the program projection of one variant.

    Layout (fixed order): PAD, EOS, TIE_SECTION_END, then the shift,
    pitch, velocity, program, and drum-pitch families.
    """

    variant: str = FULL_PLUS
    shift_token_count: int = SHIFT_TOKEN_COUNT

    def __post_init__(self) -> None:
        if self.variant not in (FULL_PLUS, MIDI_PLUS):
            raise ValueError(f"unknown vocabulary variant {self.variant!r}")
        if self.shift_token_count < 1:
            raise ValueError("shift_token_count must be positive")

    # Family base offsets
    @property
    def shift_base(self) -> int:
        return 3

    @property
    def pitch_base(self) -> int:
        return self.shift_base + self.shift_token_count

    @property
    def velocity_base(self) -> int:
        return self.pitch_base + _PITCH_COUNT

    @property
    def program_base(self) -> int:
        return self.velocity_base + _VELOCITY_COUNT

    @property
    def drum_base(self) -> int:
        return self.program_base + _PROGRAM_COUNT

    @property
    def size(self) -> int:
        return self.drum_base + _DRUM_COUNT

    # Token constructors
    def shift_id(self, time_bin: int) -> int:
        if not 0 <= time_bin < self.shift_token_count:
            raise ValueError(f"time bin {time_bin} outside [0, {self.shift_token_count})")
        return self.shift_base + time_bin

    def pitch_id(self, pitch: int) -> int:
        if not 0 <= pitch < _PITCH_COUNT:
            raise ValueError(f"pitch {pitch} outside [0, 128)")
        return self.pitch_base + pitch

    def velocity_id(self, velocity: int) -> int:
        if velocity not in (0, 1):
            raise ValueError(f"velocity {velocity} not in {{0, 1}}")
        return self.velocity_base + velocity

    def program_id(self, program: int) -> int:
        if not 0 <= program < _PROGRAM_COUNT:
            raise ValueError(f"program {program} outside [0, 128)")
        return self.program_base + program

    def drum_id(self, pitch: int) -> int:
        if not 0 <= pitch < _DRUM_COUNT:
            raise ValueError(f"drum pitch {pitch} outside [0, 128)")
        return self.drum_base + pitch

    def classify(self, token_id: int) -> tuple[str, int]:
        """Returns (kind, value) for a token id.

        Kinds: pad, eos, tie_end, shift, pitch, velocity, program, drum.
        """
        if token_id == PAD_ID:
            return "pad", 0
        if token_id == EOS_ID:
            return "eos", 0
        if token_id == TIE_SECTION_END_ID:
            return "tie_end", 0
        if self.shift_base <= token_id < self.pitch_base:
            return "shift", token_id - self.shift_base
        if self.pitch_base <= token_id < self.velocity_base:
            return "pitch", token_id - self.pitch_base
        if self.velocity_base <= token_id < self.program_base:
            return "velocity", token_id - self.velocity_base
        if self.program_base <= token_id < self.drum_base:
            return "program", token_id - self.program_base
        if self.drum_base <= token_id < self.size:
            return "drum", token_id - self.drum_base
        raise ValueError(f"token id {token_id} outside vocabulary of size {self.size}")

    def normalize_program(self, program: int) -> int:
        """Applies the variant's program projection."""
        if not 0 <= program < _PROGRAM_COUNT:
            raise ValueError(f"program {program} outside [0, 128)")
        if self.variant == FULL_PLUS or program in SINGING_PROGRAMS:
            return program
        return (program // 8) * 8

    @classmethod
    def full_plus(cls) -> "Vocabulary":
        return cls(variant=FULL_PLUS)

    @classmethod
    def midi_plus(cls) -> "Vocabulary":
        return cls(variant=MIDI_PLUS)

    @classmethod
    def from_name(cls, name: str) -> "Vocabulary":
        return cls(variant=name)


def time_to_bin(rel_time_s: float, shift_token_count: int = SHIFT_TOKEN_COUNT) -> int:
    """Quantizes a window-relative time to a 10 ms bin, clamped to range."""
    if rel_time_s < 0:
        raise ValueError(f"relative time {rel_time_s} < 0")
    # Nudge against float error so exact bin edges land in their own bin.
    time_bin = int((rel_time_s + 1e-9) / SHIFT_BIN_SECONDS)
    return min(time_bin, shift_token_count - 1)


@dataclass(frozen=True)
class Segment:
    """Notes of one fixed-length window, with its tie declarations.

    ``tie_notes`` lists (program, pitch) pairs sounding at ``start_s``
    that began in an earlier window. A note in ``notes`` whose onset
    equals ``start_s`` and matches a tie entry is the continuation body
    of that tie and produces no onset event.
    """

    start_s: float
    duration_s: float = SEGMENT_SECONDS
    notes: tuple[Note, ...] = ()
    tie_notes: tuple[tuple[int, int], ...] = ()

    def __post_init__(self) -> None:
        if self.duration_s <= 0:
            raise ValueError("duration_s must be positive")

    @property
    def end_s(self) -> float:
        return self.start_s + self.duration_s


def slice_segment(
    notes: Iterable[Note], start_s: float, duration_s: float = SEGMENT_SECONDS
) -> Segment:
    """Cuts a window [start, start + duration) out of a full note list.

    Notes spanning the left edge become tie entries plus a clipped
    continuation note; offsets beyond the right edge are clipped to it
    (the codec then encodes them as still-open). Drum hits are kept when
    their onset falls inside the window.
    """
    end_s = start_s + duration_s
    kept: list[Note] = []
    ties: list[tuple[int, int]] = []
    for note in notes:
        if note.is_drum:
            if start_s <= note.onset_s < end_s:
                kept.append(
                    Note(note.onset_s, note.onset_s + DRUM_DURATION_S,
                         note.pitch, note.program, note.velocity, True)
                )
            continue
        if note.offset_s <= start_s or note.onset_s >= end_s:
            continue
        onset = note.onset_s
        if onset < start_s:
            ties.append((note.program, note.pitch))
            onset = start_s
        offset = min(note.offset_s, end_s)
        kept.append(Note(onset, offset, note.pitch, note.program, note.velocity, False))
    kept.sort(key=lambda n: (n.onset_s, n.program, n.pitch, n.offset_s, n.is_drum))
    ties.sort()
    return Segment(start_s=start_s, duration_s=duration_s,
                   notes=tuple(kept), tie_notes=tuple(ties))


@dataclass(frozen=True)
class TokenSequence:
    """A fixed-length token sequence for one target channel.

    Grammatical sequences hold exactly one EOS followed only by PAD.
    A fully masked sequence (unannotated channel) is all PAD with no EOS.
    """

    ids: tuple[int, ...]
    length_limit: int
    channel: int | None = None

    def __post_init__(self) -> None:
        if len(self.ids) != self.length_limit:
            raise ValueError(
                f"sequence length {len(self.ids)} != limit {self.length_limit}"
            )

    @property
    def is_masked(self) -> bool:
        return all(i == PAD_ID for i in self.ids)

    def content_length(self) -> int:
        """Number of tokens before padding, including EOS."""
        count = 0
        for token_id in self.ids:
            if token_id == PAD_ID:
                break
            count += 1
        return count

    def validate(self, vocab: Vocabulary) -> None:
        """Checks padding discipline and id range; masked form is allowed."""
        if self.is_masked:
            return
        seen_eos = False
        for index, token_id in enumerate(self.ids):
            vocab.classify(token_id)  # range check
            if seen_eos:
                if token_id != PAD_ID:
                    raise DecodeError("non-PAD token after EOS", index)
            elif token_id == EOS_ID:
                seen_eos = True
            elif token_id == PAD_ID:
                raise DecodeError("PAD before EOS", index)
        if not seen_eos:
            raise DecodeError("missing EOS", len(self.ids) - 1)


@dataclass(frozen=True)
class TokenizeResult:
    sequence: TokenSequence
    truncated_events: int


@dataclass(frozen=True)
class DecodeResult:
    """Notes recovered from one segment's tokens.

    ``tie_notes`` are the (program, pitch) pairs declared before
    TIE_SECTION_END. ``open_at_end`` are pairs whose notes had no offset
    event; their notes are materialized with offsets at the window end.
    """

    notes: tuple[Note, ...]
    tie_notes: tuple[tuple[int, int], ...]
    open_at_end: tuple[tuple[int, int], ...]


# ---------------------------------------------------------------------------
# Encoding


def _event_groups(
    segment: Segment, vocab: Vocabulary
) -> tuple[list[list[int]], list[list[int]]]:
    """Builds per-entry token groups for the tie section and the events.

    Each group is the token run one entry appends given the emission
    state reached by the previous groups, so truncation can drop whole
    trailing groups without breaking run-length state.
    """
    end_s = segment.end_s

    tie_entries = sorted({
        (vocab.normalize_program(program), pitch)
        for program, pitch in segment.tie_notes
    })
    tie_set = set(tie_entries)
    consumed: set[tuple[int, int]] = set()

    # (bin, sort_program, velocity, pitch, is_drum)
    events: list[tuple[int, int, int, int, bool]] = []
    for note in segment.notes:
        rel_onset = note.onset_s - segment.start_s
        if rel_onset < -1e-9 or note.onset_s > end_s + 1e-9:
            raise SegmentWindowError(
                f"note onset {note.onset_s} outside window "
                f"[{segment.start_s}, {end_s}]"
            )
        if note.is_drum:
            events.append((time_to_bin(rel_onset, vocab.shift_token_count),
                           _DRUM_SORT_PROGRAM, 1, note.pitch, True))
            continue
        if note.velocity != 1:
            raise ValueError("pitched note with velocity 0 cannot be encoded")
        if note.offset_s - end_s > 1e-9:
            raise SegmentWindowError(
                f"note offset {note.offset_s} outside window "
                f"[{segment.start_s}, {end_s}]"
            )
        program = vocab.normalize_program(note.program)
        onset_bin = time_to_bin(max(rel_onset, 0.0), vocab.shift_token_count)
        key = (program, note.pitch)
        is_continuation = (
            key in tie_set and key not in consumed and abs(rel_onset) <= 1e-9
        )
        if is_continuation:
            consumed.add(key)
            onset_bin = 0
        else:
            events.append((onset_bin, program, 1, note.pitch, False))

        rel_offset = note.offset_s - segment.start_s
        if rel_offset < segment.duration_s - 1e-9:
            # Minimum quantized duration is one bin: an offset never lands
            # in or before its onset's bin.
            offset_bin = max(time_to_bin(rel_offset, vocab.shift_token_count),
                             onset_bin + 1)
            offset_bin = min(offset_bin, vocab.shift_token_count - 1)
            events.append((offset_bin, program, 0, note.pitch, False))
        # else: still open at window end; no offset event.

    events.sort()

    tie_groups: list[list[int]] = []
    program_state: int | None = None
    for program, pitch in tie_entries:
        group: list[int] = []
        if program != program_state:
            group.append(vocab.program_id(program))
            program_state = program
        group.append(vocab.pitch_id(pitch))
        tie_groups.append(group)

    event_groups: list[list[int]] = []
    bin_state: int | None = None
    velocity_state: int | None = None
    for time_bin, sort_program, velocity, pitch, is_drum in events:
        group = []
        if time_bin != bin_state:
            group.append(vocab.shift_id(time_bin))
            bin_state = time_bin
        if is_drum:
            if velocity_state != 1:
                group.append(vocab.velocity_id(1))
                velocity_state = 1
            group.append(vocab.drum_id(pitch))
        else:
            if program_state != sort_program:
                group.append(vocab.program_id(sort_program))
                program_state = sort_program
            if velocity_state != velocity:
                group.append(vocab.velocity_id(velocity))
                velocity_state = velocity
            group.append(vocab.pitch_id(pitch))
        event_groups.append(group)

    return tie_groups, event_groups


def tokenize_segment(
    segment: Segment,
    vocab: Vocabulary,
    n_tokens: int = N_SINGLE,
    channel: int | None = None,
) -> TokenizeResult:
    """Encodes one segment into a padded sequence of at most ``n_tokens``.

    When the full encoding exceeds the limit, whole trailing events (then
    trailing tie entries, if the ties alone overflow) are dropped and
    counted in ``truncated_events``. A shift token attached to the first
    event of a bin is dropped together with that event.
    """
    if n_tokens < 2:
        raise ValueError("n_tokens must be at least 2 (TIE_SECTION_END + EOS)")
    tie_groups, event_groups = _event_groups(segment, vocab)

    budget = n_tokens - 2  # TIE_SECTION_END and EOS are always present
    tie_len = sum(len(g) for g in tie_groups)
    truncated = 0
    while tie_groups and tie_len > budget:
        tie_len -= len(tie_groups.pop())
        truncated += 1
    event_len = sum(len(g) for g in event_groups)
    while event_groups and tie_len + event_len > budget:
        event_len -= len(event_groups.pop())
        truncated += 1

    ids: list[int] = []
    for group in tie_groups:
        ids.extend(group)
    ids.append(TIE_SECTION_END_ID)
    for group in event_groups:
        ids.extend(group)
    ids.append(EOS_ID)
    ids.extend([PAD_ID] * (n_tokens - len(ids)))
    sequence = TokenSequence(ids=tuple(ids), length_limit=n_tokens, channel=channel)
    return TokenizeResult(sequence=sequence, truncated_events=truncated)


# ---------------------------------------------------------------------------
# Decoding


def detokenize(
    tokens: TokenSequence | Sequence[int],
    vocab: Vocabulary,
    segment_start_s: float = 0.0,
    duration_s: float = SEGMENT_SECONDS,
) -> DecodeResult:
    """Decodes one segment's tokens back into notes.

    Tie declarations open notes at the window start. Events open and
    close notes at their bin times; an offset closes the most recently
    opened note of its (program, pitch). Notes never closed are
    materialized with offsets at the window end and reported in
    ``open_at_end``. Drum hits decode with program 0.

    Raises DecodeError on ungrammatical input: a pitch with no program
    or velocity state, a non-increasing shift, an offset for a note that
    is not open, a drum under velocity 0, tokens after EOS, PAD before
    EOS, or a missing EOS.
    """
    ids = tuple(tokens.ids) if isinstance(tokens, TokenSequence) else tuple(tokens)
    end_s = segment_start_s + duration_s

    tie_notes: list[tuple[int, int]] = []
    notes: list[Note] = []
    # (program, pitch) -> stack of onset bins, most recent last
    open_stacks: dict[tuple[int, int], list[int]] = {}

    in_tie_section = True
    program_state: int | None = None
    velocity_state: int | None = None
    bin_state: int | None = None
    eos_at: int | None = None

    def bin_time(time_bin: int) -> float:
        return segment_start_s + time_bin * SHIFT_BIN_SECONDS

    for index, token_id in enumerate(ids):
        kind, value = vocab.classify(token_id)
        if eos_at is not None:
            if kind != "pad":
                raise DecodeError("non-PAD token after EOS", index)
            continue
        if kind == "pad":
            raise DecodeError("PAD before EOS", index)
        if kind == "eos":
            if in_tie_section:
                raise DecodeError("EOS before TIE_SECTION_END", index)
            eos_at = index
            continue
        if kind == "tie_end":
            if not in_tie_section:
                raise DecodeError("second TIE_SECTION_END", index)
            in_tie_section = False
            continue

        if in_tie_section:
            if kind == "program":
                program_state = value
            elif kind == "pitch":
                if program_state is None:
                    raise DecodeError("tie pitch before any program token", index)
                key = (program_state, value)
                tie_notes.append(key)
                open_stacks.setdefault(key, []).append(0)
            else:
                raise DecodeError(f"{kind} token inside tie section", index)
            continue

        if kind == "shift":
            if bin_state is not None and value <= bin_state:
                raise DecodeError(
                    f"shift bin {value} not after previous bin {bin_state}", index
                )
            bin_state = value
        elif kind == "program":
            program_state = value
        elif kind == "velocity":
            velocity_state = value
        elif kind == "drum":
            if velocity_state is None:
                raise DecodeError("drum token before any velocity token", index)
            if velocity_state == 0:
                raise DecodeError("drum token under velocity 0", index)
            if bin_state is None:
                raise DecodeError("drum token before any shift token", index)
            onset = bin_time(bin_state)
            notes.append(Note(onset, onset + DRUM_DURATION_S, value, 0, 1, True))
        elif kind == "pitch":
            if program_state is None:
                raise DecodeError("pitch token before any program token", index)
            if velocity_state is None:
                raise DecodeError("pitch token before any velocity token", index)
            if bin_state is None:
                raise DecodeError("event pitch before any shift token", index)
            key = (program_state, value)
            if velocity_state == 1:
                open_stacks.setdefault(key, []).append(bin_state)
            else:
                stack = open_stacks.get(key)
                if not stack:
                    raise DecodeError(
                        f"offset for program {key[0]} pitch {key[1]} "
                        "which is not open", index
                    )
                onset_bin = stack.pop()
                # Mirror the encoder's one-bin minimum duration so a close
                # in the onset's own bin still yields a valid note.
                offset_bin = max(bin_state, onset_bin + 1)
                notes.append(
                    Note(bin_time(onset_bin), bin_time(offset_bin), value,
                         key[0], 1, False)
                )
        else:  # pragma: no cover - classify() is exhaustive
            raise DecodeError(f"unexpected token kind {kind}", index)

    if eos_at is None:
        raise DecodeError("missing EOS", max(len(ids) - 1, 0))

    open_at_end: list[tuple[int, int]] = []
    for key in sorted(open_stacks):
        for onset_bin in open_stacks[key]:
            offset_s = max(end_s, bin_time(onset_bin + 1))
            notes.append(
                Note(bin_time(onset_bin), offset_s, key[1], key[0], 1, False)
            )
            open_at_end.append(key)

    notes.sort(key=lambda n: (n.onset_s, n.program, n.pitch, n.offset_s, n.is_drum))
    return DecodeResult(
        notes=tuple(notes),
        tie_notes=tuple(tie_notes),
        open_at_end=tuple(open_at_end),
    )


# ---------------------------------------------------------------------------
# Multi-channel targets


@dataclass(frozen=True)
class MultiChannelTargets:
    """Per-channel padded sequences for one segment.

    Unannotated channels are fully masked (all PAD, no EOS). Notes whose
    program maps to no channel are dropped.
    """

    sequences: tuple[TokenSequence, ...]
    truncated_events: tuple[int, ...]


def build_multichannel_targets(
    segment: Segment,
    vocab: Vocabulary,
    imap: InstrumentGroupMap | None = None,
    annotated_channels: Iterable[int] | None = None,
    n_tokens: int = N_MULTI,
) -> MultiChannelTargets:
    """Routes a segment's notes onto per-channel token sequences."""
    imap = imap or default_instrument_map()
    channels = range(imap.group_count)
    annotated = set(channels) if annotated_channels is None else set(annotated_channels)
    for channel in annotated:
        if not 0 <= channel < imap.group_count:
            raise ValueError(f"annotated channel {channel} outside [0, {imap.group_count})")

    notes_by_channel: dict[int, list[Note]] = {c: [] for c in channels}
    for note in segment.notes:
        channel = imap.channel_of(note.program, note.is_drum)
        if channel is not None:
            notes_by_channel[channel].append(note)
    ties_by_channel: dict[int, list[tuple[int, int]]] = {c: [] for c in channels}
    for program, pitch in segment.tie_notes:
        channel = imap.channel_of(program, False)
        if channel is not None:
            ties_by_channel[channel].append((program, pitch))

    sequences: list[TokenSequence] = []
    truncated: list[int] = []
    for channel in channels:
        if channel not in annotated:
            sequences.append(TokenSequence(
                ids=(PAD_ID,) * n_tokens, length_limit=n_tokens, channel=channel
            ))
            truncated.append(0)
            continue
        sub = Segment(
            start_s=segment.start_s,
            duration_s=segment.duration_s,
            notes=tuple(notes_by_channel[channel]),
            tie_notes=tuple(ties_by_channel[channel]),
        )
        result = tokenize_segment(sub, vocab, n_tokens=n_tokens, channel=channel)
        sequences.append(result.sequence)
        truncated.append(result.truncated_events)
    return MultiChannelTargets(
        sequences=tuple(sequences), truncated_events=tuple(truncated)
    )


# ---------------------------------------------------------------------------
# Truncation accounting


@dataclass(frozen=True)
class TruncationReport:
    """Token loss from length limits over a segment corpus."""

    total_tokens: int
    dropped_tokens: int
    rate: float
    per_channel: dict[int, float] | None = None


def _content_tokens(segment: Segment, vocab: Vocabulary, n_tokens: int | None) -> int:
    """Non-pad token count of a segment under an optional length limit."""
    tie_groups, event_groups = _event_groups(segment, vocab)
    full = sum(len(g) for g in tie_groups) + sum(len(g) for g in event_groups) + 2
    if n_tokens is None:
        return full
    return tokenize_segment(segment, vocab, n_tokens=n_tokens).sequence.content_length()


def truncation_loss_rate(
    segments: Sequence[Segment],
    vocab: Vocabulary,
    n_tokens: int,
    imap: InstrumentGroupMap | None = None,
) -> TruncationReport:
    """Fraction of content tokens dropped by a length limit.

    With ``imap`` the accounting is per channel over multi-channel
    targets (plus the aggregate); without it, over single flat sequences.
    """
    if not segments:
        raise ValueError("empty segment corpus")

    if imap is None:
        total = 0
        kept = 0
        for segment in segments:
            total += _content_tokens(segment, vocab, None)
            kept += _content_tokens(segment, vocab, n_tokens)
        dropped = total - kept
        return TruncationReport(total, dropped, dropped / total if total else 0.0)

    totals = {c: 0 for c in range(imap.group_count)}
    kepts = {c: 0 for c in range(imap.group_count)}
    for segment in segments:
        for channel in range(imap.group_count):
            notes = tuple(
                n for n in segment.notes
                if imap.channel_of(n.program, n.is_drum) == channel
            )
            ties = tuple(
                t for t in segment.tie_notes
                if imap.channel_of(t[0], False) == channel
            )
            sub = Segment(segment.start_s, segment.duration_s, notes, ties)
            totals[channel] += _content_tokens(sub, vocab, None)
            kepts[channel] += _content_tokens(sub, vocab, n_tokens)
    total = sum(totals.values())
    dropped = total - sum(kepts.values())
    per_channel = {
        c: (totals[c] - kepts[c]) / totals[c] if totals[c] else 0.0
        for c in totals
    }
    return TruncationReport(
        total, dropped, dropped / total if total else 0.0, per_channel
    )


# ---------------------------------------------------------------------------
# Token file serialization

TOKEN_FILE_FORMAT = "amtkit-tokens-v1"


def write_token_file(
    path: str | Path,
    sequences: TokenSequence | Sequence[TokenSequence],
    vocab: Vocabulary,
    segment_start_s: float = 0.0,
) -> None:
    """Writes sequences as little-endian u16 ids plus a JSON sidecar.

    Multi-channel targets concatenate their 13 sequences in channel
    order. The sidecar at ``<path>.json`` records the vocabulary
    variant, per-sequence length, channel count, and window start.
    """
    if isinstance(sequences, TokenSequence):
        sequences = [sequences]
    if not sequences:
        raise ValueError("no sequences to write")
    limit = sequences[0].length_limit
    if any(s.length_limit != limit for s in sequences):
        raise ValueError("sequences have mixed length limits")
    path = Path(path)
    payload = bytearray()
    for sequence in sequences:
        payload += struct.pack(f"<{limit}H", *sequence.ids)
    path.write_bytes(bytes(payload))
    sidecar = {
        "channels": len(sequences),
        "format": TOKEN_FILE_FORMAT,
        "n_tokens": limit,
        "segment_start_s": segment_start_s,
        "vocabulary": vocab.variant,
    }
    Path(str(path) + ".json").write_text(
        json.dumps(sidecar, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def read_token_file(
    path: str | Path,
) -> tuple[list[TokenSequence], Vocabulary, dict]:
    """Reads a token file and its sidecar written by write_token_file."""
    path = Path(path)
    sidecar_path = Path(str(path) + ".json")
    if not sidecar_path.exists():
        raise ValueError(f"missing token sidecar {sidecar_path}")
    meta = json.loads(sidecar_path.read_text(encoding="utf-8"))
    if meta.get("format") != TOKEN_FILE_FORMAT:
        raise ValueError(f"unknown token file format {meta.get('format')!r}")
    n_tokens = int(meta["n_tokens"])
    channels = int(meta["channels"])
    raw = path.read_bytes()
    expected = n_tokens * channels * 2
    if len(raw) != expected:
        raise ValueError(
            f"token payload is {len(raw)} bytes, expected {expected}"
        )
    vocab = Vocabulary.from_name(meta["vocabulary"])
    sequences = []
    for index in range(channels):
        ids = struct.unpack_from(f"<{n_tokens}H", raw, index * n_tokens * 2)
        sequences.append(TokenSequence(
            ids=tuple(ids),
            length_limit=n_tokens,
            channel=index if channels > 1 else None,
        ))
    return sequences, vocab, meta
