"""Prompt engine: attribute extraction, incremental rendering, triplet emission."""

from .attributes import (
    ATTRIBUTE_KEYS,
    REAL_SCHEDULE,
    SYNTH_SCHEDULE,
    AttributeSet,
    attributes_from_filename,
    max_level,
    merge_attributes,
    required_attributes,
    schedule_for,
    validate_level,
)
from .render import render_prompt
from .triplets import (
    TripletEntry,
    emit_triplets,
    materialize_binary_masks,
    read_triplets,
    write_triplets,
)

__all__ = [
    "ATTRIBUTE_KEYS",
    "REAL_SCHEDULE",
    "SYNTH_SCHEDULE",
    "AttributeSet",
    "attributes_from_filename",
    "max_level",
    "merge_attributes",
    "required_attributes",
    "schedule_for",
    "validate_level",
    "render_prompt",
    "TripletEntry",
    "emit_triplets",
    "materialize_binary_masks",
    "read_triplets",
    "write_triplets",
]
