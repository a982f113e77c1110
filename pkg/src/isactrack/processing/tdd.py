"""Peak detection that rejects TDD-induced Doppler ghosts.

Blanked uplink symbols window the slow-time CSI periodically, which puts
attenuated copies of every target at fixed Doppler offsets.  The detector
walks CFAR candidates from strongest to weakest.  For each one it

1. refines range, speed and complex amplitude on a fine local grid,
2. re-synthesises that point target *with* the TDD mask and subtracts it
   from the residual CSI, and
3. compares the power at the predicted sidelobe offsets before and after.

A real target takes its sidelobes with it when subtracted; a ghost does not.
"""

from __future__ import annotations

import logging

import numpy as np
from sklearn.base import BaseEstimator

from .._validation import ContractError
from ..types import Detection
from .cfar import cfar_mask, local_peaks
from .spectrum import impulsive_sidelobes, matched_filter, periodogram

__all__ = ["refine_peak", "tdd_peak_detect", "naive_peak_detect", "TDDPeakDetector"]

log = logging.getLogger(__name__)


class RefinementError(RuntimeError):
    pass


def _parabolic(y_m, y_0, y_p):
    denom = y_m - 2 * y_0 + y_p
    if denom >= 0:
        return 0.0
    return float(np.clip(0.5 * (y_m - y_p) / denom, -0.5, 0.5))


def refine_peak(grid, cfg, rng, speed, oversample=16, max_iter=4):
    """Locate the local maximum of ``|DTFT|^2`` near ``(rng, speed)``.

    Searches a +-1 bin neighbourhood on an ``oversample``-times finer grid,
    re-centres if the maximum lands on the border, and finishes with a
    parabolic fit per axis.  Returns ``(range, speed, amplitude)`` where the
    amplitude is the least-squares complex gain of a masked point target.
    """
    dr, dv = cfg.range_resolution, cfg.speed_resolution
    steps = np.arange(-oversample, oversample + 1) / oversample
    mask = np.asarray(grid.any(axis=0)) if cfg.tdd_mask is None else cfg.tdd_mask
    gain = cfg.n_subcarriers * float(np.count_nonzero(mask))
    r0, v0 = float(rng), float(speed)
    for _ in range(max_iter):
        rs = r0 + steps * dr
        vs = v0 + steps * dv
        surf = np.abs(matched_filter(grid, cfg, rs, vs)) ** 2
        i, j = np.unravel_index(np.argmax(surf), surf.shape)
        r0, v0 = float(rs[i]), float(vs[j])
        if 0 < i < len(rs) - 1 and 0 < j < len(vs) - 1:
            di = _parabolic(surf[i - 1, j], surf[i, j], surf[i + 1, j])
            dj = _parabolic(surf[i, j - 1], surf[i, j], surf[i, j + 1])
            r_hat = r0 + di * dr / oversample
            v_hat = v0 + dj * dv / oversample
            amp = matched_filter(grid, cfg, [r_hat], [v_hat])[0, 0] / gain
            return r_hat, v_hat, amp
    raise RefinementError(f"no interior maximum near ({rng:.3f} m, {speed:.3f} m/s)")


def _point_target(cfg, mask, r, v, amp):
    s = amp * np.outer(cfg.range_steering([r])[:, 0], cfg.speed_steering([v])[:, 0])
    s[:, ~mask] = 0
    return s


def _in_window(r, v, search_window):
    if search_window is None:
        return True
    (r_lo, r_hi), (v_lo, v_hi) = search_window
    return r_lo <= r <= r_hi and v_lo <= v <= v_hi


def _candidates(power, range_axis, speed_axis, cfar_cfg, search_window):
    """CFAR local peaks as full-grid indices, strongest first.

    With a search window the CFAR runs on the window plus a margin wide
    enough to hold every training ring, which gives the same flags inside
    the window at a fraction of the cost.
    """
    if search_window is None:
        return local_peaks(cfar_mask(power, **cfar_cfg), power)
    (r_lo, r_hi), (v_lo, v_hi) = search_window
    guard = cfar_cfg.get("guard", (2, 2))
    train = cfar_cfg.get("train", (8, 8))
    mr, md = guard[0] + train[0] + 1, guard[1] + train[1] + 1
    rows = np.flatnonzero((range_axis >= r_lo) & (range_axis <= r_hi))
    cols = np.flatnonzero((speed_axis >= v_lo) & (speed_axis <= v_hi))
    if len(rows) == 0 or len(cols) == 0:
        return []
    i0, i1 = max(rows[0] - mr, 0), min(rows[-1] + mr + 1, power.shape[0])
    j0, j1 = max(cols[0] - md, 0), min(cols[-1] + md + 1, power.shape[1])
    block = power[i0:i1, j0:j1]
    # peaks on the crop border may not be true 3x3 maxima; they fall outside the window anyway
    peaks = local_peaks(cfar_mask(block, **cfar_cfg), block)
    return [(i + i0, j + j0) for i, j in peaks]


def _power_db(amp, gain, peak_linear):
    if peak_linear <= 0:
        return 0.0
    p = abs(amp) ** 2 * gain**2 / peak_linear
    return float(min(0.0, 10 * np.log10(max(p, 1e-30))))


def tdd_peak_detect(
    p,
    csi,
    cfar_cfg=None,
    sidelobe_drop_threshold=6.0,
    *,
    window=None,
    search_window=None,
    n_sidelobes=2,
    oversample=16,
    max_detections=64,
):
    """Iterative CFAR + PSF subtraction detector.

    Parameters
    ----------
    p : Periodogram
        Periodogram of ``csi``; its zero-pad factor is reused for the
        residual periodograms.
    csi : CsiFrame
        The frame ``p`` was computed from.
    cfar_cfg : dict, optional
        ``guard``, ``train`` and ``pfa`` forwarded to the CFAR.
    sidelobe_drop_threshold : float
        Minimum drop in dB of the power at the predicted sidelobe offsets
        for a candidate to be accepted as a target.
    search_window : ((r_lo, r_hi), (v_lo, v_hi)), optional
        Only candidates inside this region are examined.

    Returns
    -------
    list of Detection
        Accepted targets, strongest first, power relative to the maximum of ``p``.
    """
    cfg = csi.config
    if cfg is None:
        raise ContractError("CSI frame carries no grid configuration")
    cfar_cfg = dict(cfar_cfg or {})
    mask = csi.mask
    gain = cfg.n_subcarriers * float(np.count_nonzero(mask))
    offsets, _ = impulsive_sidelobes(mask)
    sidelobe_dv = offsets[:n_sidelobes] * cfg.speed_resolution
    dr, dv = cfg.range_resolution, cfg.speed_resolution

    residual = csi.grid.copy()
    current = p
    detections = []
    rejected = []

    def near(r, v, points, frac):
        return any(abs(r - a) < frac * dr and abs(v - b) < frac * dv for a, b in points)

    while len(detections) < max_detections:
        accepted_one = False
        for i, j in _candidates(current.power, current.range_axis, current.speed_axis, cfar_cfg, search_window):
            r_c, v_c = float(current.range_axis[i]), float(current.speed_axis[j])
            if not _in_window(r_c, v_c, search_window):
                continue
            if near(r_c, v_c, rejected, 0.5) or near(r_c, v_c, [d[:2] for d in detections], 1.0):
                continue
            try:
                r_hat, v_hat, amp = refine_peak(residual, cfg, r_c, v_c, oversample)
            except RefinementError as exc:
                log.debug("discarding candidate: %s", exc)
                rejected.append((r_c, v_c))
                continue
            if near(r_hat, v_hat, [d[:2] for d in detections], 1.0):
                rejected.append((r_c, v_c))
                continue

            psf = _point_target(cfg, mask, r_hat, v_hat, amp)
            if len(sidelobe_dv):
                probe_v = v_hat + sidelobe_dv
                before = np.sum(np.abs(matched_filter(residual, cfg, [r_hat], probe_v)) ** 2)
                after = np.sum(np.abs(matched_filter(residual - psf, cfg, [r_hat], probe_v)) ** 2)
                drop = np.inf if after <= 0 else 10 * np.log10(max(before, 1e-300) / after)
                if drop < sidelobe_drop_threshold:
                    log.debug("rejecting sidelobe candidate at (%.2f m, %.2f m/s): drop %.1f dB", r_hat, v_hat, drop)
                    rejected.append((r_c, v_c))
                    continue

            detections.append(Detection(float(r_hat), float(v_hat), _power_db(amp, gain, p.peak_linear)))
            residual = residual - psf
            current = periodogram(csi.with_grid(residual), window, p.zero_pad_factor)
            accepted_one = True
            break
        if not accepted_one:
            break
    return detections


def naive_peak_detect(p, csi, cfar_cfg=None, *, search_window=None, oversample=16):
    """CFAR local peaks, each refined on the original CSI; no ghost rejection."""
    cfg = csi.config
    cfar_cfg = dict(cfar_cfg or {})
    gain = cfg.n_subcarriers * float(np.count_nonzero(csi.mask))
    out = []
    for i, j in _candidates(p.power, p.range_axis, p.speed_axis, cfar_cfg, search_window):
        r_c, v_c = float(p.range_axis[i]), float(p.speed_axis[j])
        if not _in_window(r_c, v_c, search_window):
            continue
        try:
            r_hat, v_hat, amp = refine_peak(csi.grid, cfg, r_c, v_c, oversample)
        except RefinementError as exc:
            log.debug("discarding candidate: %s", exc)
            continue
        out.append(Detection(float(r_hat), float(v_hat), _power_db(amp, gain, p.peak_linear)))
    return out


class TDDPeakDetector(BaseEstimator):
    """Periodogram + detection front end with scikit-learn style parameters.

    ``predict`` maps one :class:`~isactrack.sensors.CsiFrame` to a list of
    :class:`~isactrack.types.Detection`.  With ``tdd_aware=False`` it falls
    back to plain CFAR peaks.
    """

    def __init__(
        self,
        guard=(2, 2),
        train=(8, 8),
        pfa=1e-4,
        sidelobe_drop_threshold=6.0,
        window=None,
        zero_pad_factor=1,
        tdd_aware=True,
        search_window=None,
    ):
        self.guard = guard
        self.train = train
        self.pfa = pfa
        self.sidelobe_drop_threshold = sidelobe_drop_threshold
        self.window = window
        self.zero_pad_factor = zero_pad_factor
        self.tdd_aware = tdd_aware
        self.search_window = search_window

    def fit(self, X=None, y=None):
        if int(self.zero_pad_factor) < 1:
            raise ContractError("zero_pad_factor must be >= 1")
        return self

    def predict(self, csi):
        p = periodogram(csi, self.window, self.zero_pad_factor)
        cfar_cfg = dict(guard=self.guard, train=self.train, pfa=self.pfa)
        if self.tdd_aware:
            return tdd_peak_detect(
                p,
                csi,
                cfar_cfg,
                self.sidelobe_drop_threshold,
                window=self.window,
                search_window=self.search_window,
            )
        return naive_peak_detect(p, csi, cfar_cfg, search_window=self.search_window)
