"""Toolkit for multi-instrument music transcription pipelines.

Provides the non-neural machinery around a transcription model: a note
data model with instrument grouping, a segment token codec, stem-level
data augmentation, temperature-based dataset sampling, note-level
evaluation metrics, and reference math kernels for the encoder stack.
"""

from amtkit.notes import (
    DRUM_DURATION_S,
    InstrumentGroupMap,
    Note,
    NoteEvent,
    default_instrument_map,
    drum_note,
    map_program_to_channel,
    notes_to_events,
    events_to_notes,
    read_notes_jsonl,
    write_notes_jsonl,
)
from amtkit.codec import (
    N_MULTI,
    N_SINGLE,
    SEGMENT_SECONDS,
    DecodeError,
    DecodeResult,
    Segment,
    TokenSequence,
    Vocabulary,
    build_multichannel_targets,
    detokenize,
    slice_segment,
    tokenize_segment,
    truncation_loss_rate,
)
from amtkit.midi import MidiParseError, parse_midi

__version__ = "0.1.0"

__all__ = [
    "DRUM_DURATION_S",
    "DecodeError",
    "DecodeResult",
    "InstrumentGroupMap",
    "MidiParseError",
    "N_MULTI",
    "N_SINGLE",
    "Note",
    "NoteEvent",
    "SEGMENT_SECONDS",
    "Segment",
    "TokenSequence",
    "Vocabulary",
    "__version__",
    "build_multichannel_targets",
    "default_instrument_map",
    "detokenize",
    "drum_note",
    "events_to_notes",
    "map_program_to_channel",
    "notes_to_events",
    "parse_midi",
    "read_notes_jsonl",
    "slice_segment",
    "tokenize_segment",
    "truncation_loss_rate",
    "write_notes_jsonl",
]
