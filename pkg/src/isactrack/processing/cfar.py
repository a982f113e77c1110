"""Two-dimensional cell-averaging CFAR on a periodogram."""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.ndimage import correlate1d
from sklearn.base import BaseEstimator

from .._validation import ContractError
from .spectrum import POWER_FLOOR_DB

__all__ = ["ca_cfar", "cfar_mask", "cfar_threshold_factor", "local_peaks", "CACFARDetector"]


def cfar_threshold_factor(n_train, pfa):
    """Scale on the training mean giving false-alarm rate ``pfa`` for exponential noise."""
    n_train = np.asarray(n_train, dtype=float)
    return n_train * (pfa ** (-1.0 / n_train) - 1.0)


def _band_sum(a, lo, hi, axis):
    """``out[i] = sum(a[i + d] for d in lo..hi)`` with zeros beyond the edges.

    Direct summation (no running sums), so an all-zero band sums to exactly 0.
    """
    reach = max(abs(lo), abs(hi))
    w = np.zeros(2 * reach + 1)
    w[lo + reach : hi + reach + 1] = 1.0
    return correlate1d(a, w, axis=axis, mode="constant", cval=0.0)


def _ring_sum(a, guard, train):
    gr, gd = guard
    tr, td = train
    full_cols = _band_sum(a, -(gd + td), gd + td, axis=1)
    side_cols = _band_sum(a, -(gd + td), -(gd + 1), axis=1) + _band_sum(a, gd + 1, gd + td, axis=1)
    above = _band_sum(full_cols, -(gr + tr), -(gr + 1), axis=0)
    below = _band_sum(full_cols, gr + 1, gr + tr, axis=0)
    beside = _band_sum(side_cols, -gr, gr, axis=0)
    return above + below + beside


@lru_cache(maxsize=32)
def _ring_count(shape, guard, train, pfa):
    count = _ring_sum(np.ones(shape), guard, train)
    valid = count > 0
    alpha = np.where(valid, cfar_threshold_factor(np.maximum(count, 1), pfa), np.inf)
    out = (np.maximum(count, 1), valid, alpha)
    for arr in out:
        arr.setflags(write=False)
    return out


def _check(guard, train, pfa):
    guard = tuple(int(g) for g in guard)
    train = tuple(int(t) for t in train)
    if len(guard) != 2 or len(train) != 2 or min(guard) < 0 or min(train) < 0:
        raise ContractError("guard and train must be pairs of non-negative integers")
    if train == (0, 0):
        raise ContractError("training window is empty")
    if not 0.0 < pfa < 1.0:
        raise ContractError("pfa must lie in (0, 1)")
    return guard, train


def cfar_mask(power_db, guard=(2, 2), train=(8, 8), pfa=1e-4):
    """Boolean detection map for a dB power grid.

    A cell is flagged when its linear power exceeds ``alpha`` times the mean
    of its training ring.  Rings are clipped at the grid border and
    ``alpha`` follows the clipped cell count.  Cells sitting at the
    periodogram power floor are never flagged.
    """
    guard, train = _check(guard, train, pfa)
    power_db = np.asarray(power_db, dtype=float)
    lin = 10.0 ** (power_db / 10.0)
    lin[power_db <= POWER_FLOOR_DB] = 0.0
    total = _ring_sum(lin, guard, train)
    count, valid, alpha = _ring_count(lin.shape, guard, train, float(pfa))
    return valid & (lin > alpha * (total / count)) & (lin > 0)


def ca_cfar(p, guard=(2, 2), train=(8, 8), pfa=1e-4):
    """Flagged cells of a :class:`Periodogram` as ``[((range_bin, doppler_bin), power_db), ...]``."""
    mask = cfar_mask(p.power, guard, train, pfa)
    idx = np.argwhere(mask)
    return [((int(i), int(j)), float(p.power[i, j])) for i, j in idx]


def local_peaks(mask, power_db):
    """Flagged cells that are maxima of their 3x3 neighbourhood, strongest first."""
    padded = np.pad(power_db, 1, constant_values=-np.inf)
    n, m = power_db.shape
    is_max = np.ones_like(mask)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            neigh = padded[1 + di : 1 + di + n, 1 + dj : 1 + dj + m]
            # ties resolved toward the lower index so a plateau yields one peak
            if (di, dj) < (0, 0):
                is_max &= power_db > neigh
            else:
                is_max &= power_db >= neigh
    idx = np.argwhere(mask & is_max)
    order = np.argsort(-power_db[idx[:, 0], idx[:, 1]], kind="stable")
    return [(int(i), int(j)) for i, j in idx[order]]


class CACFARDetector(BaseEstimator):
    """Estimator-style front end for :func:`ca_cfar`.

    ``fit`` only validates the parameters; ``predict`` returns the local
    peaks of the CFAR map as (range, speed, power) triples.
    """

    def __init__(self, guard=(2, 2), train=(8, 8), pfa=1e-4):
        self.guard = guard
        self.train = train
        self.pfa = pfa

    def fit(self, X=None, y=None):
        _check(self.guard, self.train, self.pfa)
        self.n_features_in_ = 2
        return self

    def transform(self, p):
        return cfar_mask(p.power, self.guard, self.train, self.pfa)

    def predict(self, p):
        mask = self.transform(p)
        return [
            (float(p.range_axis[i]), float(p.speed_axis[j]), float(p.power[i, j]))
            for i, j in local_peaks(mask, p.power)
        ]
