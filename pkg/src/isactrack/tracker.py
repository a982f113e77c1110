"""Gaussian-mixture PHD filter over the state ``[range, range-rate]``.

The intensity is stored as three arrays (weights, means, covariances) so the
predict and update steps vectorise over components.  Spawning is not
modelled; births are placed at the previous frame's measurements.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.special import logsumexp
from sklearn.base import BaseEstimator

from ._validation import ContractError, as_points, check_covariance, check_nonnegative, check_probability

__all__ = [
    "GaussianComponent",
    "Intensity",
    "MotionModel",
    "MeasurementModel",
    "PhdConfig",
    "predict",
    "update",
    "prune_merge",
    "adaptive_births",
    "extract",
    "step",
    "clutter_intensity",
    "GMPHDTracker",
]

log = logging.getLogger(__name__)

_LOG_2PI = np.log(2 * np.pi)


class GaussianComponent(NamedTuple):
    w: float
    m: np.ndarray
    P: np.ndarray


def _sym(P):
    return 0.5 * (P + np.swapaxes(P, -1, -2))


@dataclass(frozen=True)
class Intensity:
    """Weighted Gaussian mixture; ``total_weight`` is the expected object count."""

    w: np.ndarray = field(default_factory=lambda: np.zeros(0))
    m: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    P: np.ndarray = field(default_factory=lambda: np.zeros((0, 2, 2)))

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float).reshape(-1)
        m = np.asarray(self.m, dtype=float)
        dim = m.shape[-1] if m.ndim == 2 else (m.size // max(len(w), 1) or 2)
        m = m.reshape(len(w), dim)
        P = np.asarray(self.P, dtype=float).reshape(len(w), dim, dim)
        if not np.all(np.isfinite(w)) or np.any(w < 0):
            raise ContractError("component weights must be finite and non-negative")
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "P", P)

    @classmethod
    def from_components(cls, components):
        comps = list(components)
        if not comps:
            return cls()
        return cls(
            np.array([c.w for c in comps]),
            np.array([np.asarray(c.m, float) for c in comps]),
            np.array([np.asarray(c.P, float) for c in comps]),
        )

    def __len__(self):
        return len(self.w)

    @property
    def total_weight(self):
        return float(self.w.sum())

    @property
    def components(self):
        return [GaussianComponent(float(w), m, P) for w, m, P in zip(self.w, self.m, self.P)]

    def concat(self, other):
        if len(other) == 0:
            return self
        if len(self) == 0:
            return other
        return Intensity(
            np.concatenate([self.w, other.w]),
            np.concatenate([self.m, other.m]),
            np.concatenate([self.P, other.P]),
        )

    def to_json_list(self):
        return [{"w": float(w), "m": m.tolist(), "P": P.tolist()} for w, m, P in zip(self.w, self.m, self.P)]


@dataclass(frozen=True)
class MotionModel:
    F: np.ndarray
    Q: np.ndarray
    p_survival: float = 0.99

    def __post_init__(self):
        object.__setattr__(self, "F", np.asarray(self.F, dtype=float))
        object.__setattr__(self, "Q", check_covariance(self.Q, "Q", strict=False))
        check_probability(self.p_survival, "p_survival")

    @classmethod
    def constant_velocity(cls, dt=0.01, sigma_a=1.0, p_survival=0.99):
        """Nearly-constant-velocity model with continuous white-noise acceleration."""
        if dt <= 0:
            raise ContractError("dt must be > 0")
        F = np.array([[1.0, dt], [0.0, 1.0]])
        Q = sigma_a**2 * np.array([[dt**3 / 3, dt**2 / 2], [dt**2 / 2, dt]])
        return cls(F, Q, p_survival)


def clutter_intensity(rate, range_window=(15.0, 60.0), speed_window=(-6.0, 6.0)):
    """Uniform clutter density (per m * m/s) for ``rate`` false alarms per scan."""
    area = (range_window[1] - range_window[0]) * (speed_window[1] - speed_window[0])
    return float(rate) / area


@dataclass(frozen=True)
class MeasurementModel:
    R: np.ndarray = field(default_factory=lambda: np.diag([0.25, 0.04]))
    p_detect: float = 0.9
    clutter_intensity: float = clutter_intensity(2.0)
    H: np.ndarray = field(default_factory=lambda: np.eye(2))

    def __post_init__(self):
        object.__setattr__(self, "R", check_covariance(self.R, "R"))
        object.__setattr__(self, "H", np.asarray(self.H, dtype=float))
        check_probability(self.p_detect, "p_detect")
        check_nonnegative(self.clutter_intensity, "clutter_intensity")


@dataclass(frozen=True)
class PhdConfig:
    prune_threshold: float = 1e-5
    merge_threshold: float = 4.0
    max_components: int = 100
    birth_weight: float = 0.05
    birth_covariance: np.ndarray = field(default_factory=lambda: np.diag([4.0, 1.0]))
    extraction_threshold: float = 0.5

    def __post_init__(self):
        for name in ("prune_threshold", "merge_threshold", "birth_weight", "extraction_threshold"):
            check_nonnegative(getattr(self, name), name)
        if int(self.max_components) < 1:
            raise ContractError("max_components must be >= 1")
        object.__setattr__(self, "birth_covariance", check_covariance(self.birth_covariance, "birth_covariance"))


def predict(v, mm, births=None, spawn=None):
    """Prediction: surviving components through ``F, Q`` plus births.

    ``spawn`` is accepted for interface completeness; a non-empty spawn
    intensity is appended like births.
    """
    if len(v):
        F = mm.F
        w = mm.p_survival * v.w
        m = v.m @ F.T
        P = _sym(mm.Q + F @ v.P @ F.T)
        out = Intensity(w, m, P)
    else:
        out = Intensity()
    if spawn is not None:
        out = out.concat(spawn)
    if births is not None:
        out = out.concat(births)
    return out


def update(v_pred, z_list, meas):
    """Measurement update.

    Missed-detection copies come first, then one block of updated
    components per measurement, in measurement order.
    """
    z = as_points(z_list, "z_list")
    pd = meas.p_detect
    missed = Intensity(v_pred.w * (1.0 - pd), v_pred.m, v_pred.P)
    if len(v_pred) == 0 or len(z) == 0 or pd == 0.0:
        return missed

    H, R = meas.H, meas.R
    S = _sym(H @ v_pred.P @ H.T + R)
    ok = np.ones(len(v_pred), dtype=bool)
    chol = np.empty_like(S)
    for j in range(len(S)):
        try:
            chol[j] = np.linalg.cholesky(S[j])
        except np.linalg.LinAlgError:
            log.warning("skipping component %d: innovation covariance not positive definite", j)
            ok[j] = False
    if not ok.any():
        return missed

    w, m, P, S, chol = v_pred.w[ok], v_pred.m[ok], v_pred.P[ok], S[ok], chol[ok]
    S_inv = np.linalg.inv(S)
    K = P @ H.T @ S_inv
    P_upd = _sym(P - K @ S @ np.swapaxes(K, -1, -2))
    z_pred = m @ H.T

    # innovations: (n_meas, n_comp, dim_z)
    nu = z[:, None, :] - z_pred[None, :, :]
    maha = np.einsum("zji,jik,zjk->zj", nu, S_inv, nu)
    logdet = 2 * np.log(np.diagonal(chol, axis1=-2, axis2=-1)).sum(-1)
    log_q = -0.5 * (maha + logdet[None, :] + z.shape[1] * _LOG_2PI)
    with np.errstate(divide="ignore"):
        log_num = np.log(pd) + np.log(w)[None, :] + log_q
        log_kappa = np.log(meas.clutter_intensity) if meas.clutter_intensity > 0 else -np.inf
    log_den = logsumexp(np.concatenate([log_num, np.full((len(z), 1), log_kappa)], axis=1), axis=1)
    w_upd = np.exp(log_num - log_den[:, None])
    m_upd = m[None, :, :] + np.einsum("jik,zjk->zji", K, nu)

    n_z, n_c = w_upd.shape
    detected = Intensity(
        w_upd.reshape(-1),
        m_upd.reshape(n_z * n_c, -1),
        np.broadcast_to(P_upd, (n_z,) + P_upd.shape).reshape(n_z * n_c, *P_upd.shape[1:]),
    )
    return missed.concat(detected)


def _merge_pass(w, m, P, threshold):
    remaining = list(np.argsort(-w, kind="stable"))
    P_inv = np.linalg.inv(P)
    out_w, out_m, out_P = [], [], []
    while remaining:
        j = remaining[0]
        rest = np.array(remaining)
        d = m[rest] - m[j]
        maha = np.einsum("ni,nik,nk->n", d, P_inv[rest], d)
        group = rest[maha <= threshold]
        if len(group) == 1:
            out_w.append(w[j])
            out_m.append(m[j])
            out_P.append(P[j])
        else:
            wg = w[group]
            w_sum = wg.sum()
            m_new = (wg[:, None] * m[group]).sum(0) / w_sum
            diff = m[group] - m_new
            P_new = (wg[:, None, None] * (P[group] + diff[:, :, None] * diff[:, None, :])).sum(0) / w_sum
            out_w.append(w_sum)
            out_m.append(m_new)
            out_P.append(_sym(P_new))
        grouped = set(group.tolist())
        remaining = [i for i in remaining if i not in grouped]
    return np.array(out_w), np.array(out_m), np.array(out_P)


def prune_merge(v, cfg):
    """Prune weights below ``prune_threshold``, merge, then cap at ``max_components``.

    Merging is greedy around the heaviest remaining component and is
    repeated until no pair falls within ``merge_threshold`` (squared
    Mahalanobis distance), so applying this twice changes nothing.
    """
    keep = v.w >= cfg.prune_threshold
    if not keep.any():
        return Intensity()
    w, m, P = v.w[keep], v.m[keep], v.P[keep]
    while True:
        n_before = len(w)
        w, m, P = _merge_pass(w, m, P, cfg.merge_threshold)
        if len(w) == n_before:
            break
    if len(w) > cfg.max_components:
        top = np.argsort(-w, kind="stable")[: cfg.max_components]
        w, m, P = w[top], m[top], P[top]
    return Intensity(w, m, P)


def adaptive_births(prev_measurements, cfg):
    """One birth component per measurement of the previous frame."""
    z = as_points(prev_measurements, "prev_measurements")
    n = len(z)
    if n == 0:
        return Intensity()
    return Intensity(
        np.full(n, cfg.birth_weight),
        z.copy(),
        np.broadcast_to(cfg.birth_covariance, (n, 2, 2)).copy(),
    )


def _extract(v, cfg):
    sel = np.flatnonzero(v.w > cfg.extraction_threshold)
    counts = np.where(v.w[sel] > 1.5, np.floor(v.w[sel] + 0.5), 1).astype(int)
    idx = np.repeat(sel, counts)
    return v.m[idx], v.w[idx]


def extract(v, cfg):
    """State estimates: means of components above ``extraction_threshold``.

    A component with weight above 1.5 contributes ``round(w)`` copies.
    """
    means, _ = _extract(v, cfg)
    return [(float(r), float(s)) for r, s in means]


def step(v, z_list, models, cfg, prev_z=()):
    """One filter cycle: births, predict, update, prune/merge, extract.

    ``models`` is a ``(MotionModel, MeasurementModel)`` pair.
    """
    motion, meas = models
    births = adaptive_births(prev_z, cfg)
    posterior = prune_merge(update(predict(v, motion, births), z_list, meas), cfg)
    return posterior, extract(posterior, cfg)


class GMPHDTracker(BaseEstimator):
    """Frame-by-frame GM-PHD tracker with scikit-learn style parameters.

    ``fit`` consumes a whole measurement sequence (one ``(n, 2)`` array per
    frame) and leaves the per-frame outputs on the instance; ``partial_fit``
    advances the filter by one frame.
    """

    def __init__(
        self,
        dt=0.01,
        sigma_a=1.0,
        p_survival=0.99,
        p_detect=0.9,
        meas_noise=(0.25, 0.04),
        clutter_rate=2.0,
        range_window=(15.0, 60.0),
        speed_window=(-6.0, 6.0),
        prune_threshold=1e-5,
        merge_threshold=4.0,
        max_components=100,
        birth_weight=0.05,
        birth_var=(4.0, 1.0),
        extraction_threshold=0.5,
    ):
        self.dt = dt
        self.sigma_a = sigma_a
        self.p_survival = p_survival
        self.p_detect = p_detect
        self.meas_noise = meas_noise
        self.clutter_rate = clutter_rate
        self.range_window = range_window
        self.speed_window = speed_window
        self.prune_threshold = prune_threshold
        self.merge_threshold = merge_threshold
        self.max_components = max_components
        self.birth_weight = birth_weight
        self.birth_var = birth_var
        self.extraction_threshold = extraction_threshold

    def _models(self):
        motion = MotionModel.constant_velocity(self.dt, self.sigma_a, self.p_survival)
        meas = MeasurementModel(
            R=np.diag(np.asarray(self.meas_noise, dtype=float)),
            p_detect=self.p_detect,
            clutter_intensity=clutter_intensity(self.clutter_rate, self.range_window, self.speed_window),
        )
        cfg = PhdConfig(
            self.prune_threshold,
            self.merge_threshold,
            int(self.max_components),
            self.birth_weight,
            np.diag(np.asarray(self.birth_var, dtype=float)),
            self.extraction_threshold,
        )
        return motion, meas, cfg

    def reset(self):
        self.models_ = self._models()
        self.intensity_ = Intensity()
        self.prev_z_ = np.zeros((0, 2))
        self.estimates_ = []
        self.estimate_weights_ = []
        self.total_weight_ = []
        return self

    def partial_fit(self, z, y=None):
        if not hasattr(self, "models_"):
            self.reset()
        motion, meas, cfg = self.models_
        z = as_points(z, "z")
        births = adaptive_births(self.prev_z_, cfg)
        posterior = prune_merge(update(predict(self.intensity_, motion, births), z, meas), cfg)
        means, weights = _extract(posterior, cfg)
        self.intensity_ = posterior
        self.prev_z_ = z
        self.estimates_.append(means)
        self.estimate_weights_.append(weights)
        self.total_weight_.append(posterior.total_weight)
        return self

    def fit(self, Z, y=None):
        self.reset()
        for z in Z:
            self.partial_fit(z)
        return self

    def fit_predict(self, Z, y=None):
        return self.fit(Z).estimates_
