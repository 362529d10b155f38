"""Deterministic prompt rendering from attribute sets.

The sentence follows one fixed slot order regardless of the level at which
each attribute was introduced:

    <Structure>[ of <shape> shape][ in <view> view in the cardiac ultrasound]
    [ at the end of the <cycle> cycle][ of a (<age>-year-old )<sex>]
    [ with <quality> image quality].

Level 0 renders the empty string.  Slots are activated by the source's
attribute schedule (see :mod:`.attributes`); the age slot upgrades the sex
clause in place rather than adding a clause of its own.
"""

from __future__ import annotations

from ..errors import PromptError
from ..records import Phase, Source
from .attributes import AttributeSet, required_attributes

_CYCLE_WORDS = {Phase.END_DIASTOLE: "diastole", Phase.END_SYSTOLE: "systole"}


def render_prompt(attrs: AttributeSet, level: int, source: Source = Source.REAL) -> str:
    """Render the prompt for ``attrs`` at ``level``; pure and total over valid input."""
    active = required_attributes(level, source)
    if not active:
        return ""
    for key in active:
        if attrs.get(key) is None:
            raise PromptError(
                f"prompt level {level} requires attribute {key!r}, "
                f"which is absent for structure {attrs.structure!r}"
            )

    structure = attrs.structure
    parts = [structure[0].upper() + structure[1:]]
    if "shape" in active:
        parts.append(f" of {attrs.shape.value} shape")
    if "view" in active:
        parts.append(f" in {attrs.view.value} view in the cardiac ultrasound")
    if "phase" in active:
        parts.append(f" at the end of the {_CYCLE_WORDS[attrs.phase]} cycle")
    if "sex" in active:
        if "age" in active:
            parts.append(f" of a {attrs.age}-year-old {attrs.sex.value}")
        else:
            parts.append(f" of a {attrs.sex.value}")
    if "image_quality" in active:
        parts.append(f" with {attrs.image_quality.value} image quality")
    return "".join(parts) + "."
