"""Static clutter removal on CSI frames.

Two interchangeable removers are provided, both as plain functions and as
scikit-learn style transformers so they drop into a ``Pipeline``:

* ECA-C style: per subcarrier, project the slow-time samples off a
  low-order polynomial subspace (order 1 is mean removal).  This kills
  zero-Doppler returns but also anything slower than about one speed bin.
* CRAP style: learn the dominant principal components of whole vectorised
  frames and project them out of each new frame.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .._validation import ContractError
from ..sensors import CsiFrame

__all__ = [
    "ClutterBasis",
    "eca_c_remove",
    "crap_acquire",
    "crap_remove",
    "ECACRemover",
    "CRAPRemover",
]


def _slow_time_basis(mask, order):
    used = np.flatnonzero(mask)
    t = np.linspace(-1.0, 1.0, len(mask))[used]
    vander = np.vander(t, order, increasing=True)
    q, _ = np.linalg.qr(vander)
    return used, q


def eca_c_remove(csi, order=2):
    """Remove the near-zero-Doppler subspace from every subcarrier.

    The subspace is spanned by polynomials of degree ``< order`` in slow
    time, evaluated on the downlink symbols only.
    """
    order = int(order)
    if order < 1:
        raise ContractError("order must be >= 1")
    used, q = _slow_time_basis(csi.mask, min(order, int(csi.mask.sum())))
    x = csi.grid[:, used]
    out = np.zeros_like(csi.grid)
    out[:, used] = x - (x @ q.conj()) @ q.T
    return CsiFrame(out, csi.mask, csi.config)


@dataclass(frozen=True)
class ClutterBasis:
    """Orthonormal clutter components (Frobenius inner product)."""

    components: tuple
    energy_fractions: tuple

    def __len__(self):
        return len(self.components)

    def matrix(self):
        """Components stacked as columns of a ``(n_cells, k)`` matrix."""
        if not self.components:
            return None
        return np.stack([c.ravel() for c in self.components], axis=1)


def crap_acquire(frames, n_components=3, min_energy_fraction=0.0):
    """Learn a clutter subspace from a set of CSI frames.

    Returns the leading ``n_components`` left singular vectors of the
    matrix of vectorised frames.  Components carrying less than
    ``min_energy_fraction`` of the total acquisition energy are dropped.
    """
    frames = list(frames)
    n_components = int(n_components)
    if n_components < 0:
        raise ContractError("n_components must be >= 0")
    if len(frames) < max(n_components, 1):
        raise ContractError(f"need at least {n_components} frames to acquire {n_components} components")
    shape = frames[0].shape
    if any(f.shape != shape for f in frames):
        raise ContractError("all acquisition frames must share one shape")
    if n_components == 0:
        return ClutterBasis((), ())

    data = np.stack([f.grid.ravel() for f in frames], axis=1)
    u, s, _ = np.linalg.svd(data, full_matrices=False)
    energy = s**2
    total = energy.sum()
    fractions = energy / total if total > 0 else np.zeros_like(energy)
    keep = [i for i in range(min(n_components, len(s))) if fractions[i] > min_energy_fraction]
    comps = tuple(u[:, i].reshape(shape) for i in keep)
    return ClutterBasis(comps, tuple(float(fractions[i]) for i in keep))


def crap_remove(csi, basis):
    """Orthogonal projection of ``csi`` off the clutter subspace."""
    mat = basis.matrix()
    if mat is None:
        return CsiFrame(csi.grid.copy(), csi.mask, csi.config)
    if mat.shape[0] != csi.grid.size:
        raise ContractError(f"basis of shape {basis.components[0].shape} does not fit frame {csi.shape}")
    x = csi.grid.ravel()
    coeff = mat.conj().T @ x
    out = (x - mat @ coeff).reshape(csi.shape)
    return CsiFrame(out, csi.mask, csi.config)


def _as_frames(X):
    if isinstance(X, CsiFrame):
        return [X], True
    frames = list(X)
    if not all(isinstance(f, CsiFrame) for f in frames):
        raise ContractError("expected a CsiFrame or a sequence of CsiFrame")
    return frames, False


class ECACRemover(TransformerMixin, BaseEstimator):
    """Transformer wrapper around :func:`eca_c_remove`.  Stateless."""

    def __init__(self, order=2):
        self.order = order

    def fit(self, X=None, y=None):
        if int(self.order) < 1:
            raise ContractError("order must be >= 1")
        self.n_frames_seen_ = 0 if X is None else len(_as_frames(X)[0])
        return self

    def transform(self, X):
        frames, single = _as_frames(X)
        out = [eca_c_remove(f, self.order) for f in frames]
        return out[0] if single else out


class CRAPRemover(TransformerMixin, BaseEstimator):
    """Learns a clutter basis in ``fit`` and projects it out in ``transform``.

    Parameters
    ----------
    n_components : int
        Maximum number of principal components treated as clutter.
    min_energy_fraction : float
        Components below this share of the acquisition energy are not
        treated as clutter; slow targets present during acquisition
        otherwise leak into the basis.
    """

    def __init__(self, n_components=3, min_energy_fraction=0.01):
        self.n_components = n_components
        self.min_energy_fraction = min_energy_fraction

    def fit(self, X, y=None):
        frames, _ = _as_frames(X)
        self.basis_ = crap_acquire(frames, self.n_components, self.min_energy_fraction)
        self.frame_shape_ = frames[0].shape
        return self

    def transform(self, X):
        check_is_fitted(self, "basis_")
        frames, single = _as_frames(X)
        out = [crap_remove(f, self.basis_) for f in frames]
        return out[0] if single else out
