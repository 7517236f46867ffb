"""Standard MIDI File reader producing note lists.

Reads format 0 and format 1 files. Tick times are converted to seconds
with exact rational arithmetic over the tempo map, so long files do not
accumulate floating-point drift; each note time is rounded to float only
once at the end. Channel 10 (index 9) is percussion: its note-ons become
drum hits and its note-offs are ignored.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass
from fractions import Fraction

from amtkit.notes import DRUM_DURATION_S, Note

DEFAULT_TEMPO_US = 500_000
DRUM_CHANNEL_INDEX = 9

_HEADER_MAGIC = b"MThd"
_TRACK_MAGIC = b"MTrk"


class MidiParseError(ValueError):
    """Malformed MIDI data. ``byte_offset`` locates the failure."""

    def __init__(self, message: str, byte_offset: int):
        super().__init__(f"{message} (byte {byte_offset})")
        self.byte_offset = byte_offset


class _Reader:
    """Cursor over the raw bytes with bounds-checked reads."""

    __slots__ = ("data", "pos")

    def __init__(self, data: bytes, pos: int = 0):
        self.data = data
        self.pos = pos

    def need(self, count: int) -> None:
        if self.pos + count > len(self.data):
            raise MidiParseError("unexpected end of data", self.pos)

    def bytes(self, count: int) -> bytes:
        self.need(count)
        out = self.data[self.pos : self.pos + count]
        self.pos += count
        return out

    def u8(self) -> int:
        self.need(1)
        value = self.data[self.pos]
        self.pos += 1
        return value

    def u16(self) -> int:
        return int.from_bytes(self.bytes(2), "big")

    def u32(self) -> int:
        return int.from_bytes(self.bytes(4), "big")

    def varint(self) -> int:
        """Variable-length quantity, at most 4 bytes."""
        value = 0
        for i in range(4):
            byte = self.u8()
            value = (value << 7) | (byte & 0x7F)
            if not byte & 0x80:
                return value
        raise MidiParseError("variable-length quantity over 4 bytes", self.pos - 1)


@dataclass(frozen=True, slots=True)
class _RawEvent:
    tick: int
    track: int
    seq: int
    kind: str  # "on" | "off" | "program"
    channel: int
    a: int  # pitch or program number
    b: int  # velocity, 0 for off/program


class _TickClock:
    """Maps absolute ticks to seconds under a tempo map, exactly.

    Cumulative times at each tempo change are kept as Fractions; a query
    adds the remaining ticks under the tempo in force. For SMPTE division
    the tick rate is fixed and tempo events are ignored.
    """

    def __init__(self, division: int, tempo_events: list[tuple[int, int]]):
        if division & 0x8000:
            fps = 256 - (division >> 8)
            ticks_per_frame = division & 0xFF
            if fps == 0 or ticks_per_frame == 0:
                raise MidiParseError("zero SMPTE tick rate", 12)
            self._smpte_rate = Fraction(1, fps * ticks_per_frame)
            self._changes = None
            return
        self._smpte_rate = None
        self._division = division
        # (tick, cumulative seconds, tempo in us/quarter from this tick)
        changes: list[tuple[int, Fraction, int]] = [(0, Fraction(0), DEFAULT_TEMPO_US)]
        for tick, tempo in tempo_events:
            last_tick, last_time, last_tempo = changes[-1]
            elapsed = Fraction((tick - last_tick) * last_tempo, division * 1_000_000)
            if tick == last_tick:
                changes[-1] = (tick, last_time, tempo)
            else:
                changes.append((tick, last_time + elapsed, tempo))
        self._changes = changes
        self._ticks = [c[0] for c in changes]

    def seconds(self, tick: int) -> float:
        if self._smpte_rate is not None:
            return float(tick * self._smpte_rate)
        idx = bisect.bisect_right(self._ticks, tick) - 1
        base_tick, base_time, tempo = self._changes[idx]
        exact = base_time + Fraction((tick - base_tick) * tempo, self._division * 1_000_000)
        return float(exact)


def _parse_track(
    reader: _Reader, track_index: int
) -> tuple[list[_RawEvent], list[tuple[int, int]], int]:
    """Parses one MTrk chunk into raw events, tempo events, and end tick."""
    magic_at = reader.pos
    if reader.bytes(4) != _TRACK_MAGIC:
        raise MidiParseError("expected MTrk chunk", magic_at)
    length = reader.u32()
    end = reader.pos + length
    if end > len(reader.data):
        raise MidiParseError("track length overruns file", reader.pos - 4)

    events: list[_RawEvent] = []
    tempos: list[tuple[int, int]] = []
    tick = 0
    seq = 0
    running_status: int | None = None

    while reader.pos < end:
        tick += reader.varint()
        status_at = reader.pos
        status = reader.u8()
        if status < 0x80:
            if running_status is None:
                raise MidiParseError("data byte with no running status", status_at)
            status = running_status
            reader.pos = status_at  # first data byte belongs to the event

        if status == 0xFF:
            running_status = None
            meta_type = reader.u8()
            meta_len = reader.varint()
            payload = reader.bytes(meta_len)
            if meta_type == 0x51:
                if meta_len != 3:
                    raise MidiParseError("set-tempo meta not 3 bytes", status_at)
                tempo = int.from_bytes(payload, "big")
                if tempo == 0:
                    raise MidiParseError("zero tempo", status_at)
                tempos.append((tick, tempo))
            elif meta_type == 0x2F:
                break  # end of track
            continue
        if status in (0xF0, 0xF7):
            running_status = None
            reader.bytes(reader.varint())
            continue
        if status < 0x80 or 0xF0 <= status < 0xFF:
            raise MidiParseError(f"unsupported status byte 0x{status:02X}", status_at)

        running_status = status
        kind = status & 0xF0
        channel = status & 0x0F
        if kind == 0x90:
            pitch, velocity = reader.u8(), reader.u8()
            name = "on" if velocity > 0 else "off"
            events.append(_RawEvent(tick, track_index, seq, name, channel, pitch, velocity))
        elif kind == 0x80:
            pitch, _velocity = reader.u8(), reader.u8()
            events.append(_RawEvent(tick, track_index, seq, "off", channel, pitch, 0))
        elif kind == 0xC0:
            program = reader.u8()
            events.append(_RawEvent(tick, track_index, seq, "program", channel, program, 0))
        elif kind in (0xA0, 0xB0, 0xE0):
            reader.bytes(2)
        elif kind == 0xD0:
            reader.bytes(1)
        else:
            raise MidiParseError(f"unsupported status byte 0x{status:02X}", status_at)
        seq += 1

    reader.pos = end
    return events, tempos, tick


def parse_midi(data: bytes) -> list[Note]:
    """Parses Standard MIDI File bytes into a sorted note list.

    Rules applied while assembling notes:
      * note-on with velocity 0 closes a note, like a note-off;
      * a re-triggered pitch on the same channel truncates the earlier
        note at the new onset;
      * notes still open at end of file are closed at the final tick;
      * percussion-channel hits become drum notes under the program last
        set on that channel (0 if never set), ignoring note-offs;
      * all velocities collapse to the binary onset indicator 1.

    Raises MidiParseError (with a byte offset) on malformed data,
    unsupported format 2, or a zero division/tempo.
    """
    reader = _Reader(data)
    if reader.bytes(4) != _HEADER_MAGIC:
        raise MidiParseError("expected MThd header", 0)
    header_len = reader.u32()
    if header_len != 6:
        raise MidiParseError(f"header length {header_len} != 6", 4)
    fmt = reader.u16()
    if fmt not in (0, 1):
        raise MidiParseError(f"unsupported format {fmt}", 8)
    n_tracks = reader.u16()
    division = reader.u16()
    if division == 0 or (not division & 0x8000 and division == 0):
        raise MidiParseError("zero time division", 12)
    if fmt == 0 and n_tracks != 1:
        raise MidiParseError(f"format 0 with {n_tracks} tracks", 10)

    all_events: list[_RawEvent] = []
    tempo_events: list[tuple[int, int]] = []
    end_tick = 0
    for track_index in range(n_tracks):
        events, tempos, track_end = _parse_track(reader, track_index)
        all_events.extend(events)
        tempo_events.extend(tempos)
        end_tick = max(end_tick, track_end)

    tempo_events.sort(key=lambda t: t[0])
    clock = _TickClock(division, tempo_events)
    all_events.sort(key=lambda e: (e.tick, e.track, e.seq))

    programs = [0] * 16
    open_notes: dict[tuple[int, int], tuple[int, int]] = {}  # (ch, pitch) -> (tick, program)
    notes: list[Note] = []

    def close(channel: int, pitch: int, program: int, onset_tick: int, offset_tick: int) -> None:
        onset_s = clock.seconds(onset_tick)
        offset_s = clock.seconds(offset_tick)
        if offset_s <= onset_s:
            return  # zero-length after truncation; drop
        notes.append(Note(onset_s, offset_s, pitch, program, 1, False))

    for event in all_events:
        if event.kind == "program":
            programs[event.channel] = event.a
            continue
        key = (event.channel, event.a)
        if event.channel == DRUM_CHANNEL_INDEX:
            if event.kind == "on":
                onset_s = clock.seconds(event.tick)
                notes.append(
                    Note(onset_s, onset_s + DRUM_DURATION_S, event.a,
                         programs[event.channel], 1, True)
                )
            continue
        if event.kind == "on":
            if key in open_notes:
                onset_tick, program = open_notes.pop(key)
                close(event.channel, event.a, program, onset_tick, event.tick)
            open_notes[key] = (event.tick, programs[event.channel])
        else:
            if key in open_notes:
                onset_tick, program = open_notes.pop(key)
                close(event.channel, event.a, program, onset_tick, event.tick)

    for (channel, pitch), (onset_tick, program) in open_notes.items():
        close(channel, pitch, program, onset_tick, end_tick)

    notes.sort(key=lambda n: (n.onset_s, n.program, n.pitch, n.offset_s, n.is_drum))
    return notes


def parse_midi_file(path) -> list[Note]:
    """Convenience wrapper reading a file path."""
    from pathlib import Path

    return parse_midi(Path(path).read_bytes())
