"""Final a-priori filtering of the detection list."""

from __future__ import annotations

from .._validation import check_interval
from ..types import Detection

__all__ = ["Detection", "gate_detections"]


def gate_detections(detections, range_window=(15.0, 60.0), speed_window=(-6.0, 6.0), min_power=-40.0):
    """Keep detections inside both windows (inclusive) with ``power >= min_power``.

    Order is preserved.
    """
    r_lo, r_hi = check_interval(range_window, "range_window")
    v_lo, v_hi = check_interval(speed_window, "speed_window")
    return [
        d
        for d in detections
        if r_lo <= d.range <= r_hi and v_lo <= d.speed <= v_hi and d.power >= min_power
    ]
