"""Sensor models: an ideal range-Doppler point sensor and an OFDM CSI synthesiser."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._validation import (
    ContractError,
    check_interval,
    check_nonnegative,
    check_positive,
    check_probability,
)
from .types import SPEED_OF_LIGHT, Detection

__all__ = [
    "IdealSensorConfig",
    "OfdmGridConfig",
    "CsiFrame",
    "tdd_mask",
    "ideal_observe",
    "synthesize_frame",
    "target_amplitudes",
]


@dataclass(frozen=True)
class IdealSensorConfig:
    p_detect: float = 0.9
    sigma_range: float = 0.3
    sigma_speed: float = 0.1
    clutter_rate: float = 2.0
    clutter_range_window: tuple = (15.0, 60.0)

    def __post_init__(self):
        check_probability(self.p_detect, "p_detect")
        check_nonnegative(self.sigma_range, "sigma_range")
        check_nonnegative(self.sigma_speed, "sigma_speed")
        check_nonnegative(self.clutter_rate, "clutter_rate")
        object.__setattr__(
            self, "clutter_range_window", check_interval(self.clutter_range_window, "clutter_range_window")
        )


def ideal_observe(truth, cfg, rng_seed=None):
    """Simulated range-Doppler sensor with infinite resolution.

    Each true ``(range, speed)`` is reported with probability ``p_detect``
    after additive Gaussian noise.  A Poisson number of clutter detections is
    appended, uniform in range and at exactly zero speed.  All powers are 0 dB.
    """
    rng = np.random.default_rng(rng_seed)
    truth = np.asarray([t[:2] for t in truth], dtype=float).reshape(-1, 2)
    if not np.all(np.isfinite(truth)):
        raise ContractError("truth states must be finite")

    keep = rng.random(len(truth)) < cfg.p_detect
    noise = rng.standard_normal((len(truth), 2)) * (cfg.sigma_range, cfg.sigma_speed)
    detected = (truth + noise)[keep]

    n_clutter = rng.poisson(cfg.clutter_rate)
    lo, hi = cfg.clutter_range_window
    clutter_r = rng.uniform(lo, hi, n_clutter)

    out = [Detection(float(r), float(v), 0.0) for r, v in detected]
    out.extend(Detection(float(r), 0.0, 0.0) for r in clutter_r)
    return out


def tdd_mask(n_symbols, pattern="DDDSU", symbols_per_slot=14):
    """Boolean downlink mask for a repeating TDD slot pattern.

    Only ``D`` slots are usable for sensing; special (``S``) and uplink
    (``U``) slots are blanked.
    """
    pattern = pattern.upper()
    if not pattern or set(pattern) - set("DSU"):
        raise ContractError(f"TDD pattern must use the letters D, S, U; got {pattern!r}")
    slots = np.array([ch == "D" for ch in pattern])
    per_symbol = np.repeat(slots, symbols_per_slot)
    mask = np.resize(per_symbol, n_symbols)
    if not mask.any():
        raise ContractError("TDD mask has no downlink symbols")
    return mask


@dataclass(frozen=True)
class OfdmGridConfig:
    """Numerology of the sensing CSI grid.

    The defaults follow an FR2 carrier with 120 kHz subcarriers and a 10 ms
    frame.  :meth:`desk` gives a 256 x 112 grid with 4x wider subcarriers and
    10x longer symbols, keeping the range and speed resolution.
    """

    carrier_freq: float = 27.6e9
    subcarrier_spacing: float = 120e3
    n_subcarriers: int = 1024
    n_symbols: int = 1120
    symbol_duration: float = 8.92e-6
    tdd_mask: np.ndarray | None = field(default=None, compare=False)
    noise_power_db: float = 0.0
    # (range m, amplitude, phase rad) of zero-Doppler reflectors
    static_clutter_taps: tuple = ()
    target_amplitude: float = 1.0
    reference_range: float = 18.0

    def __post_init__(self):
        check_positive(self.carrier_freq, "carrier_freq")
        check_positive(self.subcarrier_spacing, "subcarrier_spacing")
        check_positive(self.symbol_duration, "symbol_duration")
        if int(self.n_subcarriers) < 1 or int(self.n_symbols) < 1:
            raise ContractError("grid dimensions must be >= 1")
        mask = self.tdd_mask
        if mask is None:
            mask = tdd_mask(self.n_symbols)
        mask = np.asarray(mask, dtype=bool).copy()
        if mask.shape != (self.n_symbols,):
            raise ContractError(f"tdd_mask must have length n_symbols={self.n_symbols}")
        if not mask.any():
            raise ContractError("tdd_mask needs at least one downlink symbol")
        mask.setflags(write=False)
        object.__setattr__(self, "tdd_mask", mask)
        object.__setattr__(self, "static_clutter_taps", tuple(tuple(t) for t in self.static_clutter_taps))

    @classmethod
    def desk(cls, **overrides):
        params = dict(
            subcarrier_spacing=480e3,
            n_subcarriers=256,
            n_symbols=112,
            symbol_duration=89.2e-6,
            tdd_mask=tdd_mask(112, "DDDSU", 3),
        )
        params.update(overrides)
        return cls(**params)

    @property
    def range_resolution(self):
        return SPEED_OF_LIGHT / (2 * self.n_subcarriers * self.subcarrier_spacing)

    @property
    def speed_resolution(self):
        return SPEED_OF_LIGHT / (2 * self.carrier_freq * self.n_symbols * self.symbol_duration)

    @property
    def max_range(self):
        return SPEED_OF_LIGHT / (2 * self.subcarrier_spacing)

    @property
    def max_speed(self):
        return SPEED_OF_LIGHT / (4 * self.carrier_freq * self.symbol_duration)

    @property
    def noise_variance(self):
        return 0.0 if np.isneginf(self.noise_power_db) else 10 ** (self.noise_power_db / 10)

    def range_steering(self, ranges):
        """``(n_subcarriers, k)`` fast-time phase ramps for the given ranges."""
        n = np.arange(self.n_subcarriers)[:, None]
        tau = 2 * np.asarray(ranges, dtype=float)[None, :] / SPEED_OF_LIGHT
        return np.exp(-2j * np.pi * n * self.subcarrier_spacing * tau)

    def speed_steering(self, speeds):
        """``(n_symbols, k)`` slow-time phase ramps for the given radial speeds."""
        m = np.arange(self.n_symbols)[:, None]
        f_d = 2 * np.asarray(speeds, dtype=float)[None, :] * self.carrier_freq / SPEED_OF_LIGHT
        return np.exp(2j * np.pi * m * self.symbol_duration * f_d)


@dataclass(frozen=True)
class CsiFrame:
    """Complex CSI over (subcarrier, OFDM symbol); blanked symbols are zero."""

    grid: np.ndarray
    mask: np.ndarray
    config: OfdmGridConfig | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=complex)
        mask = np.asarray(self.mask, dtype=bool)
        if grid.ndim != 2 or mask.shape != (grid.shape[1],):
            raise ContractError(f"grid {grid.shape} and mask {mask.shape} do not agree")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "mask", mask)

    @property
    def shape(self):
        return self.grid.shape

    def with_grid(self, grid):
        grid = np.array(grid, dtype=complex)
        grid[:, ~self.mask] = 0
        return CsiFrame(grid, self.mask, self.config)

    def energy(self):
        return float(np.sum(np.abs(self.grid) ** 2))


def target_amplitudes(ranges, cfg):
    """Complex echo amplitudes with r^-2 path loss and the carrier round-trip phase."""
    ranges = np.asarray(ranges, dtype=float)
    loss = (cfg.reference_range / ranges) ** 2
    phase = np.exp(-4j * np.pi * cfg.carrier_freq * ranges / SPEED_OF_LIGHT)
    return cfg.target_amplitude * loss * phase


def synthesize_frame(truth, cfg, rng_seed=None):
    """Synthesise one CSI frame for point targets plus the static clutter taps.

    ``truth`` holds ``(range, speed, amplitude)`` triples; ``amplitude`` may be
    complex.  The transmitted resource elements are taken as all ones, so
    the result is the CSI directly.  Uplink symbols are zeroed afterwards.
    """
    targets = [tuple(t) for t in truth]
    for t in cfg.static_clutter_taps:
        r, amp, phase = t
        targets.append((r, 0.0, amp * np.exp(1j * phase)))

    grid = np.zeros((cfg.n_subcarriers, cfg.n_symbols), dtype=complex)
    if targets:
        r = np.array([t[0] for t in targets], dtype=float)
        v = np.array([t[1] for t in targets], dtype=float)
        a = np.array([t[2] if len(t) > 2 else 1.0 for t in targets], dtype=complex)
        for i in range(len(targets)):
            if not 0 <= r[i] < cfg.max_range:
                raise ContractError(
                    f"target {i} at range {r[i]:.3f} m aliases (unambiguous range {cfg.max_range:.3f} m)"
                )
            if not abs(v[i]) < cfg.max_speed:
                raise ContractError(
                    f"target {i} at speed {v[i]:.3f} m/s aliases (unambiguous speed {cfg.max_speed:.3f} m/s)"
                )
        grid += (cfg.range_steering(r) * a) @ cfg.speed_steering(v).T

    sigma2 = cfg.noise_variance
    if sigma2 > 0:
        rng = np.random.default_rng(rng_seed)
        noise = rng.standard_normal((2,) + grid.shape)
        grid += np.sqrt(sigma2 / 2) * (noise[0] + 1j * noise[1])

    grid[:, ~cfg.tdd_mask] = 0
    return CsiFrame(grid, cfg.tdd_mask, cfg)
