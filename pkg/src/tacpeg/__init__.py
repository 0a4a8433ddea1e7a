"""Peg-in-hole contact simulation, tactile imaging, and policy evaluation."""

__version__ = "0.1.0"

from .geometry import (
    PegShape,
    ClearanceSpec,
    PoseError,
    ContactInfo,
    peg_polygon,
    hole_polygon,
    is_insertable,
    contact_state,
    allowable_deviation,
    sample_pose_error,
)
from .labeling import (
    Action,
    TokenizedAction,
    LabelParams,
    label_action,
    tokenize_action,
    detokenize_action,
)
from .tactile import ImprintParams, render_frame, compose_grid

__all__ = [
    "__version__",
    "PegShape",
    "ClearanceSpec",
    "PoseError",
    "ContactInfo",
    "peg_polygon",
    "hole_polygon",
    "is_insertable",
    "contact_state",
    "allowable_deviation",
    "sample_pose_error",
    "Action",
    "TokenizedAction",
    "LabelParams",
    "label_action",
    "tokenize_action",
    "detokenize_action",
    "ImprintParams",
    "render_frame",
    "compose_grid",
]
