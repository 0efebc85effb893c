from hexoct.dualmesh.extract import (
    TemplateError,
    TransitionRecord,
    detect_transitions,
    extract_dual,
)
from hexoct.dualmesh.templates import TEMPLATE_SIZES, edge_template, face_template, quad_template

__all__ = [
    "TEMPLATE_SIZES",
    "TemplateError",
    "TransitionRecord",
    "detect_transitions",
    "edge_template",
    "extract_dual",
    "face_template",
    "quad_template",
]
