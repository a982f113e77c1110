"""Plain data records passed between the sensing, processing and tracking stages."""

from __future__ import annotations

from typing import NamedTuple

SPEED_OF_LIGHT = 299_792_458.0


class Detection(NamedTuple):
    """One pipeline output: range in m, radial speed in m/s, power in dB."""

    range: float
    speed: float
    power: float = 0.0
