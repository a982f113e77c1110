"""CSI extraction and range-Doppler periodograms."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .._validation import ContractError
from ..sensors import CsiFrame
from ..types import SPEED_OF_LIGHT

__all__ = [
    "Periodogram",
    "extract_csi",
    "periodogram",
    "matched_filter",
    "impulsive_sidelobes",
    "POWER_FLOOR_DB",
]

POWER_FLOOR_DB = -300.0


@dataclass(frozen=True)
class Periodogram:
    """Normalised power (dB, max = 0) over range bin x Doppler bin.

    ``peak_linear`` is the un-normalised maximum, so absolute powers can be
    related back to the frame maximum.
    """

    power: np.ndarray
    range_axis: np.ndarray
    speed_axis: np.ndarray
    zero_pad_factor: int = 1
    peak_linear: float = 0.0

    @property
    def shape(self):
        return self.power.shape

    def linear(self):
        return 10.0 ** (self.power / 10.0)

    def bin_of(self, rng, speed):
        """Nearest (range bin, Doppler bin) for a physical position."""
        p = int(np.argmin(np.abs(self.range_axis - rng)))
        q = int(np.argmin(np.abs(self.speed_axis - speed)))
        return p, q


def extract_csi(rx, tx):
    """Divide received by transmitted resource elements.

    Blanked symbols and resource elements with ``|tx| < 1e-12`` become 0.
    """
    if rx.shape != tx.shape or not np.array_equal(rx.mask, tx.mask):
        raise ContractError(f"rx {rx.shape} and tx {tx.shape} frames must share shape and mask")
    usable = (np.abs(tx.grid) >= 1e-12) & rx.mask[None, :]
    out = np.zeros(rx.shape, dtype=complex)
    np.divide(rx.grid, tx.grid, out=out, where=usable)
    return CsiFrame(out, rx.mask, rx.config)


def _window(name, n):
    if name is None or name == "rect" or name == "none":
        return np.ones(n)
    if name == "hann":
        return np.hanning(n)
    raise ContractError(f"unknown window {name!r}; use None, 'rect' or 'hann'")


def _axes(cfg, n_range, n_doppler):
    range_axis = np.arange(n_range) * SPEED_OF_LIGHT / (2 * n_range * cfg.subcarrier_spacing)
    q = np.fft.fftshift(np.fft.fftfreq(n_doppler)) * n_doppler
    speed_axis = q * SPEED_OF_LIGHT / (2 * cfg.carrier_freq * n_doppler * cfg.symbol_duration)
    return range_axis, speed_axis


def periodogram(csi, window=None, zero_pad_factor=1):
    """Range-Doppler periodogram of a CSI frame.

    IDFT over subcarriers (range) and DFT over symbols (Doppler), zero padded
    by ``zero_pad_factor`` in both dimensions.  The Doppler axis is centred
    on zero speed.
    """
    pad = int(zero_pad_factor)
    if pad < 1:
        raise ContractError("zero_pad_factor must be >= 1")
    if csi.config is None:
        raise ContractError("CSI frame carries no grid configuration")
    n, m = csi.shape
    grid = csi.grid * _window(window, n)[:, None] * _window(window, m)[None, :]
    n_pad, m_pad = n * pad, m * pad
    spec = np.fft.ifft(grid, n=n_pad, axis=0) * n_pad
    spec = np.fft.fftshift(np.fft.fft(spec, n=m_pad, axis=1), axes=1)
    power = spec.real**2 + spec.imag**2
    peak = float(power.max())
    if peak > 0:
        with np.errstate(divide="ignore"):
            power_db = 10 * np.log10(power / peak)
        power_db = np.maximum(power_db, POWER_FLOOR_DB)
    else:
        power_db = np.full(power.shape, POWER_FLOOR_DB)
    range_axis, speed_axis = _axes(csi.config, n_pad, m_pad)
    return Periodogram(power_db, range_axis, speed_axis, pad, peak)


def matched_filter(grid, cfg, ranges, speeds):
    """Evaluate the 2-D DTFT of ``grid`` at arbitrary ranges x speeds.

    Returns a complex ``(len(ranges), len(speeds))`` array on the same scale as
    the un-normalised periodogram amplitude.
    """
    a = cfg.range_steering(np.atleast_1d(ranges)).conj()
    b = cfg.speed_steering(np.atleast_1d(speeds)).conj()
    return a.T @ grid @ b


def impulsive_sidelobes(mask, oversample=16, excess_db=6.0):
    """Doppler offsets (in unpadded bins) of the sidelobes caused by a TDD mask.

    Local maxima of ``|DFT(mask)|^2`` outside the main lobe qualify when they
    stand more than ``excess_db`` above the sinc envelope of a gap-free
    window, so a mask without gaps predicts none.  Returns
    ``(offsets, relative_power)`` sorted by decreasing power.
    """
    mask = np.asarray(mask, dtype=float)
    m = len(mask)
    n_fft = m * oversample
    spec = np.abs(np.fft.fft(mask, n_fft)) ** 2
    spec /= spec[0]
    x = np.fft.fftfreq(n_fft) * m
    left = np.roll(spec, 1)
    right = np.roll(spec, -1)
    is_peak = (spec > left) & (spec >= right) & (np.abs(x) > 2.0)
    envelope = 1.0 / (np.pi * np.maximum(np.abs(x), 1e-9)) ** 2
    is_peak &= spec > envelope * 10 ** (excess_db / 10)
    idx = np.flatnonzero(is_peak)
    order = np.argsort(-spec[idx], kind="stable")
    idx = idx[order]
    return x[idx], spec[idx]
