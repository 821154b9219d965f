"""Screen geometry and pixel <-> degrees-of-visual-angle conversion.

Angles are measured per axis from the screen center with an atan model:
a gaze point offset by ``d`` cm from the center of a screen viewed at
distance ``D`` cm subtends ``atan(d / D)`` degrees. The conversion is
strictly monotone in the pixel offset and exactly invertible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

Axis = str  # "x" or "y"

#: Default lab setup: 1920x1080 px panel, 52x29 cm active area, 60 cm viewing
#: distance. Configurable everywhere; not a claim about any particular study.
DEFAULT_SCREEN = None  # set below, after the dataclass definition


@dataclass(frozen=True)
class ScreenGeometry:
    """Physical screen description used for all angle conversions."""

    screen_width_px: int
    screen_height_px: int
    screen_width_cm: float
    screen_height_cm: float
    viewing_distance_cm: float

    def __post_init__(self):
        for name in (
            "screen_width_px",
            "screen_height_px",
            "screen_width_cm",
            "screen_height_cm",
            "viewing_distance_cm",
        ):
            value = getattr(self, name)
            if not value > 0:
                raise ValueError(f"{name} must be strictly positive, got {value!r}")

    def cm_per_px(self, axis: Axis) -> float:
        if axis == "x":
            return self.screen_width_cm / self.screen_width_px
        if axis == "y":
            return self.screen_height_cm / self.screen_height_px
        raise ValueError(f"axis must be 'x' or 'y', got {axis!r}")

    def center_px(self, axis: Axis) -> float:
        if axis == "x":
            return self.screen_width_px / 2.0
        if axis == "y":
            return self.screen_height_px / 2.0
        raise ValueError(f"axis must be 'x' or 'y', got {axis!r}")


DEFAULT_SCREEN = ScreenGeometry(
    screen_width_px=1920,
    screen_height_px=1080,
    screen_width_cm=52.0,
    screen_height_cm=29.0,
    viewing_distance_cm=60.0,
)


def px_to_deg(p: float, axis: Axis, geom: ScreenGeometry) -> float:
    """Convert a pixel coordinate to degrees of visual angle from screen center."""
    if not math.isfinite(p):
        raise ValueError(f"pixel coordinate must be finite, got {p!r}")
    offset_cm = (p - geom.center_px(axis)) * geom.cm_per_px(axis)
    return math.degrees(math.atan2(offset_cm, geom.viewing_distance_cm))


def deg_to_px(deg: float, axis: Axis, geom: ScreenGeometry) -> float:
    """Inverse of :func:`px_to_deg`; round-trips within 1e-9 degrees."""
    if not math.isfinite(deg):
        raise ValueError(f"angle must be finite, got {deg!r}")
    offset_cm = geom.viewing_distance_cm * math.tan(math.radians(deg))
    return geom.center_px(axis) + offset_cm / geom.cm_per_px(axis)
