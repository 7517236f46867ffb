"""Note data model: pitched and drum notes, linked events, instrument groups.

A ``Note`` is the unit every other module consumes: the token codec turns
notes into token sequences, the augmentation engine merges note lists, and
the metrics compare reference and estimated note lists. Drum hits are
onset-only percussion events; they carry a short fixed duration so that a
note list stays uniform, but nothing downstream reads a drum offset.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

MIN_PITCH = 0
MAX_PITCH = 127
MIN_PROGRAM = 0
MAX_PROGRAM = 127

# Programs reserved for singing voice, outside the General MIDI melodic map.
SINGING_PROGRAMS = (100, 101)

# Materialized duration of a drum hit in seconds. Nothing downstream scores
# drum offsets; the value only keeps drum notes well formed.
DRUM_DURATION_S = 0.010

_TIME_EPS = 1e-9


@dataclass(frozen=True, slots=True)
class Note:
    """A note with linked onset and offset times in seconds.

    Attributes:
        onset_s: Onset time in seconds, >= 0.
        offset_s: Offset time in seconds. Strictly greater than ``onset_s``
            for pitched notes; ``onset_s + DRUM_DURATION_S`` for drums.
        pitch: MIDI pitch in [0, 127].
        program: Instrument program in [0, 127].
        velocity: Onset velocity, 0 or 1 (binary onset indicator).
        is_drum: True for onset-only percussion hits.
    """

    onset_s: float
    offset_s: float
    pitch: int
    program: int
    velocity: int = 1
    is_drum: bool = False

    def __post_init__(self) -> None:
        if not MIN_PITCH <= self.pitch <= MAX_PITCH:
            raise ValueError(f"pitch {self.pitch} outside [0, 127]")
        if not MIN_PROGRAM <= self.program <= MAX_PROGRAM:
            raise ValueError(f"program {self.program} outside [0, 127]")
        if self.velocity not in (0, 1):
            raise ValueError(f"velocity {self.velocity} not in {{0, 1}}")
        if self.onset_s < 0.0:
            raise ValueError(f"onset {self.onset_s} < 0")
        if self.is_drum:
            if abs(self.offset_s - (self.onset_s + DRUM_DURATION_S)) > _TIME_EPS:
                raise ValueError(
                    "drum note offset must equal onset + "
                    f"{DRUM_DURATION_S}, got {self.offset_s}"
                )
        elif self.offset_s <= self.onset_s:
            raise ValueError(
                f"offset {self.offset_s} not after onset {self.onset_s}"
            )

    @property
    def duration_s(self) -> float:
        return self.offset_s - self.onset_s


def drum_note(onset_s: float, pitch: int, program: int = 0, velocity: int = 1) -> Note:
    """Builds a drum hit with the canonical materialized duration."""
    return Note(
        onset_s=onset_s,
        offset_s=onset_s + DRUM_DURATION_S,
        pitch=pitch,
        program=program,
        velocity=velocity,
        is_drum=True,
    )


@dataclass(frozen=True, slots=True)
class NoteEvent:
    """One endpoint of a note, linked back to its note by ``link_id``.

    ``kind`` is "onset" or "offset". Offset events always carry velocity 0;
    onset events carry the note's velocity. Drum notes produce a single
    onset event and no offset event.
    """

    time_s: float
    kind: str
    pitch: int
    program: int
    velocity: int
    is_drum: bool
    link_id: int

    def __post_init__(self) -> None:
        if self.kind not in ("onset", "offset"):
            raise ValueError(f"kind {self.kind!r} not 'onset' or 'offset'")


def notes_to_events(notes: Iterable[Note]) -> list[NoteEvent]:
    """Expands notes into a chronological linked event stream.

    Events are sorted by (time, program, velocity, pitch), so at equal
    times lower programs come first and offsets (velocity 0) precede
    onsets (velocity 1) within a program.
    """
    events: list[NoteEvent] = []
    for link_id, note in enumerate(notes):
        events.append(
            NoteEvent(
                time_s=note.onset_s,
                kind="onset",
                pitch=note.pitch,
                program=note.program,
                velocity=note.velocity,
                is_drum=note.is_drum,
                link_id=link_id,
            )
        )
        if not note.is_drum:
            events.append(
                NoteEvent(
                    time_s=note.offset_s,
                    kind="offset",
                    pitch=note.pitch,
                    program=note.program,
                    velocity=0,
                    is_drum=False,
                    link_id=link_id,
                )
            )
    events.sort(
        key=lambda e: (e.time_s, e.program, e.velocity, e.pitch, e.is_drum, e.link_id)
    )
    return events


def events_to_notes(events: Iterable[NoteEvent]) -> list[Note]:
    """Rebuilds notes from a linked event stream.

    Every offset event must share a ``link_id`` with exactly one onset
    event; drum onsets need no offset. Raises ValueError on dangling or
    duplicated links.
    """
    onsets: dict[int, NoteEvent] = {}
    offsets: dict[int, NoteEvent] = {}
    for event in events:
        table = onsets if event.kind == "onset" else offsets
        if event.link_id in table:
            raise ValueError(f"duplicate {event.kind} for link {event.link_id}")
        table[event.link_id] = event

    notes: list[Note] = []
    for link_id, onset in sorted(onsets.items()):
        offset = offsets.pop(link_id, None)
        if onset.is_drum:
            if offset is not None:
                raise ValueError(f"drum link {link_id} has an offset event")
            notes.append(drum_note(onset.time_s, onset.pitch, onset.program, onset.velocity))
            continue
        if offset is None:
            raise ValueError(f"onset link {link_id} has no offset event")
        notes.append(
            Note(
                onset_s=onset.time_s,
                offset_s=offset.time_s,
                pitch=onset.pitch,
                program=onset.program,
                velocity=onset.velocity,
                is_drum=False,
            )
        )
    if offsets:
        link_id = sorted(offsets)[0]
        raise ValueError(f"offset link {link_id} has no onset event")
    notes.sort(key=lambda n: (n.onset_s, n.program, n.pitch, n.offset_s, n.is_drum))
    return notes


# ---------------------------------------------------------------------------
# Instrument grouping


# Channel indices and display names for the 13 target channels.
CHANNEL_NAMES = (
    "piano",
    "chromatic_percussion",
    "organ",
    "guitar",
    "bass",
    "strings",
    "brass",
    "reed",
    "pipe",
    "synth_lead",
    "synth_pad",
    "singing",
    "drums",
)

NUM_CHANNELS = len(CHANNEL_NAMES)
SINGING_CHANNEL = CHANNEL_NAMES.index("singing")
DRUM_CHANNEL = CHANNEL_NAMES.index("drums")

# Inclusive program ranges mapped to channel indices. Programs outside all
# ranges (sound effects and other non-target instruments) map to nothing.
_DEFAULT_RANGES = (
    (0, 7, 0),       # piano
    (8, 15, 1),      # chromatic percussion
    (16, 23, 2),     # organ
    (24, 31, 3),     # guitar
    (32, 39, 4),     # bass
    (40, 55, 5),     # strings and ensemble
    (56, 63, 6),     # brass
    (64, 71, 7),     # reed
    (72, 79, 8),     # pipe
    (80, 87, 9),     # synth lead
    (88, 95, 10),    # synth pad
    (100, 101, 11),  # singing voice
)


@dataclass(frozen=True)
class InstrumentGroupMap:
    """Projection of (program, is_drum) onto a fixed set of channels.

    ``ranges`` holds inclusive (low, high, channel) program ranges for
    pitched instruments; ranges must not overlap. Drums bypass the ranges
    and land on ``drum_channel``. Programs outside every range are
    unmapped and return None.
    """

    ranges: tuple[tuple[int, int, int], ...] = _DEFAULT_RANGES
    drum_channel: int = DRUM_CHANNEL
    singing_channel: int = SINGING_CHANNEL
    group_count: int = NUM_CHANNELS

    def __post_init__(self) -> None:
        claimed = set()
        for low, high, channel in self.ranges:
            if low > high:
                raise ValueError(f"range ({low}, {high}) is inverted")
            if not 0 <= channel < self.group_count:
                raise ValueError(f"channel {channel} outside [0, {self.group_count})")
            span = set(range(low, high + 1))
            if claimed & span:
                raise ValueError(f"range ({low}, {high}) overlaps another range")
            claimed |= span

    def channel_of(self, program: int, is_drum: bool) -> int | None:
        if is_drum:
            return self.drum_channel
        for low, high, channel in self.ranges:
            if low <= program <= high:
                return channel
        return None

    def channel_name(self, channel: int | None) -> str:
        if channel is None:
            return "unmapped"
        return CHANNEL_NAMES[channel]


_DEFAULT_MAP = InstrumentGroupMap()


def default_instrument_map() -> InstrumentGroupMap:
    """Returns the default 13-channel instrument group map."""
    return _DEFAULT_MAP


def map_program_to_channel(
    program: int, is_drum: bool, imap: InstrumentGroupMap | None = None
) -> int | None:
    """Maps a (program, is_drum) pair to its target channel, or None."""
    if not MIN_PROGRAM <= program <= MAX_PROGRAM:
        raise ValueError(f"program {program} outside [0, 127]")
    return (imap or _DEFAULT_MAP).channel_of(program, is_drum)


# ---------------------------------------------------------------------------
# JSON-lines serialization

# Times are written with fixed 6-decimal precision so that identical note
# lists always serialize to identical bytes.
_JSONL_TEMPLATE = (
    '{{"onset_s": {:.6f}, "offset_s": {:.6f}, "pitch": {}, '
    '"program": {}, "velocity": {}, "is_drum": {}}}'
)


def note_to_json_line(note: Note) -> str:
    return _JSONL_TEMPLATE.format(
        note.onset_s,
        note.offset_s,
        note.pitch,
        note.program,
        note.velocity,
        "true" if note.is_drum else "false",
    )


def notes_to_jsonl(notes: Iterable[Note]) -> str:
    return "".join(note_to_json_line(n) + "\n" for n in notes)


def write_notes_jsonl(path: str | Path, notes: Iterable[Note]) -> None:
    """Writes one JSON object per line with times at 6-decimal precision."""
    Path(path).write_text(notes_to_jsonl(notes), encoding="utf-8")


def _note_from_record(record: dict) -> Note:
    onset = float(record["onset_s"])
    is_drum = bool(record.get("is_drum", False))
    if is_drum:
        # Re-derive the offset so rounded drum durations stay canonical.
        offset = onset + DRUM_DURATION_S
    else:
        offset = float(record["offset_s"])
    return Note(
        onset_s=onset,
        offset_s=offset,
        pitch=int(record["pitch"]),
        program=int(record.get("program", 0)),
        velocity=int(record.get("velocity", 1)),
        is_drum=is_drum,
    )


def read_notes_jsonl(path: str | Path) -> list[Note]:
    """Reads a JSON-lines note file written by :func:`write_notes_jsonl`."""
    notes: list[Note] = []
    text = Path(path).read_text(encoding="utf-8")
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValueError(f"line {line_no}: invalid JSON: {exc}") from exc
        notes.append(_note_from_record(record))
    return notes
