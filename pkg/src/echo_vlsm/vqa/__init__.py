"""Shape attribute acquisition through an external VQA model."""

from .boxes import draw_green_box, mask_bounding_box, to_uint8_rgb
from .client import (
    HttpVqaClient,
    StubVqaClient,
    SubprocessVqaClient,
    VqaClientSpec,
    build_client,
    query_shape,
    query_shapes,
)
from .shapes import (
    SHAPE_QUESTION_TEMPLATE,
    ShapeCache,
    normalize_shape_answer,
    resolve_shapes,
    shape_question,
)

__all__ = [
    "draw_green_box",
    "mask_bounding_box",
    "to_uint8_rgb",
    "HttpVqaClient",
    "StubVqaClient",
    "SubprocessVqaClient",
    "VqaClientSpec",
    "build_client",
    "query_shape",
    "query_shapes",
    "SHAPE_QUESTION_TEMPLATE",
    "ShapeCache",
    "normalize_shape_answer",
    "resolve_shapes",
    "shape_question",
]
