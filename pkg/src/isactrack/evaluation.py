"""Label-free multi-object tracking metrics.

Estimates are associated with ground truth frame by frame through a gated
optimal assignment.  From the per-frame associations we derive range and
speed MAE, a windowed probability of detection, false alarms per scan and
a smoothed cardinality curve.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from ._validation import ContractError, as_points

__all__ = [
    "GATE_SENTINEL",
    "AssociationResult",
    "MetricsReport",
    "hungarian",
    "associate_frame",
    "windowed_pd",
    "false_alarm_rate",
    "smoothed_cardinality",
    "mae",
    "evaluate",
]

GATE_SENTINEL = 1e9


def _assign_rows(cost):
    """Minimum-cost assignment of every row; requires ``n_rows <= n_cols``.

    Shortest augmenting path with row/column potentials (O(n^2 m)).
    """
    n, m = cost.shape
    u = np.zeros(n + 1)
    v = np.zeros(m + 1)
    col_owner = np.zeros(m + 1, dtype=int)  # 1-based row assigned to column, 0 = free
    way = np.zeros(m + 1, dtype=int)
    for i in range(1, n + 1):
        col_owner[0] = i
        j0 = 0
        minv = np.full(m + 1, np.inf)
        used = np.zeros(m + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = col_owner[j0]
            free = ~used[1:]
            reduced = cost[i0 - 1] - u[i0] - v[1:]
            better = free & (reduced < minv[1:])
            minv[1:][better] = reduced[better]
            way[1:][better] = j0
            cand = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(cand)) + 1
            delta = cand[j1 - 1]
            u[col_owner[used]] += delta
            v[used] -= delta
            minv[1:][free] -= delta
            j0 = j1
            if col_owner[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            col_owner[j0] = col_owner[j1]
            j0 = j1
    return [(int(col_owner[j]) - 1, j - 1) for j in range(1, m + 1) if col_owner[j]]


def hungarian(cost, sentinel=GATE_SENTINEL):
    """Optimal one-to-one assignment for a rectangular cost matrix.

    Returns ``(row, col)`` pairs sorted by row.  Pairs whose cost reaches
    ``sentinel`` (gated out) are dropped from the result.
    """
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2:
        raise ContractError("cost must be a 2-D matrix")
    if cost.size == 0:
        return []
    if not np.all(np.isfinite(cost)):
        raise ContractError("costs must be finite; encode gate violations with the sentinel")
    if cost.shape[0] <= cost.shape[1]:
        pairs = _assign_rows(cost)
    else:
        pairs = [(i, j) for j, i in _assign_rows(cost.T)]
    pairs.sort()
    if sentinel is not None:
        pairs = [(i, j) for i, j in pairs if cost[i, j] < sentinel]
    return pairs


@dataclass
class AssociationResult:
    pairs: list = field(default_factory=list)  # (truth_id, estimate_index, d_range, d_speed)
    unmatched_truth: list = field(default_factory=list)
    unmatched_estimates: list = field(default_factory=list)

    @property
    def truth_ids(self):
        return sorted([p[0] for p in self.pairs] + list(self.unmatched_truth))


def associate_frame(truth, estimates, range_gate=5.0, speed_gate=5.0):
    """Gated optimal association of one frame.

    ``truth`` holds ``(range, speed, id)`` entries.  The cost of a pair is
    ``|dr| / range_gate + |dv| / speed_gate`` when both gates hold and the
    sentinel otherwise.
    """
    truth = list(truth)
    est = as_points(estimates, "estimates")
    ids = [int(t[2]) if len(t) > 2 else k for k, t in enumerate(truth)]
    tr = as_points([t[:2] for t in truth], "truth")
    if len(tr) == 0 or len(est) == 0:
        return AssociationResult([], ids, list(range(len(est))))

    d_r = est[None, :, 0] - tr[:, None, 0]
    d_v = est[None, :, 1] - tr[:, None, 1]
    inside = (np.abs(d_r) <= range_gate) & (np.abs(d_v) <= speed_gate)
    cost = np.where(inside, np.abs(d_r) / range_gate + np.abs(d_v) / speed_gate, GATE_SENTINEL)
    pairs = [(i, j) for i, j in hungarian(cost) if inside[i, j]]

    matched_t = {i for i, _ in pairs}
    matched_e = {j for _, j in pairs}
    return AssociationResult(
        [(ids[i], j, float(d_r[i, j]), float(d_v[i, j])) for i, j in pairs],
        [ids[i] for i in range(len(tr)) if i not in matched_t],
        [j for j in range(len(est)) if j not in matched_e],
    )


def _centred_sum(x, half):
    """``out[k] = sum(x[k-half : k+half+1])`` clipped at the ends; same length as ``x``."""
    full = np.convolve(x, np.ones(2 * half + 1), mode="full")
    return full[half : half + len(x)]


def windowed_pd(per_frame_associations, window=11):
    """Fraction of alive object-frames with a match somewhere in a centred window.

    The window is clipped at the start and end of the trace.
    """
    window = int(window)
    if window < 1 or window % 2 == 0:
        raise ContractError("window must be a positive odd number of frames")
    n_frames = len(per_frame_associations)
    alive, matched = {}, {}
    for k, res in enumerate(per_frame_associations):
        for obj in res.unmatched_truth:
            alive.setdefault(obj, np.zeros(n_frames, bool))[k] = True
        for obj, *_ in res.pairs:
            alive.setdefault(obj, np.zeros(n_frames, bool))[k] = True
            matched.setdefault(obj, np.zeros(n_frames, bool))[k] = True
    total = sum(int(a.sum()) for a in alive.values())
    if total == 0:
        return float("nan")
    hits = 0
    for obj, a in alive.items():
        m = matched.get(obj)
        if m is None:
            continue
        near = _centred_sum(m.astype(float), window // 2) > 0
        hits += int((near & a).sum())
    return hits / total


def false_alarm_rate(per_frame_associations):
    """Mean number of unmatched estimates per frame."""
    if not per_frame_associations:
        return 0.0
    return float(np.mean([len(r.unmatched_estimates) for r in per_frame_associations]))


def smoothed_cardinality(estimate_counts, window=51):
    """Centred moving average; edge windows average over the frames that exist."""
    counts = np.asarray(estimate_counts, dtype=float)
    if counts.size == 0:
        return counts
    half = int(window) // 2
    return _centred_sum(counts, half) / _centred_sum(np.ones_like(counts), half)


def mae(per_frame_associations):
    """``(mae_range, mae_speed)`` over all matched pairs; NaN when nothing matched."""
    d = [(abs(p[2]), abs(p[3])) for res in per_frame_associations for p in res.pairs]
    if not d:
        return float("nan"), float("nan")
    arr = np.asarray(d)
    return float(arr[:, 0].mean()), float(arr[:, 1].mean())


def _clean(x):
    return None if isinstance(x, float) and math.isnan(x) else x


@dataclass
class MetricsReport:
    mae_range: float
    mae_speed: float
    prob_detection: float
    false_alarms_per_scan: float
    cardinality_series: list = field(default_factory=list)
    scenario: str = ""
    mode: str = ""

    CSV_COLUMNS = ("scenario", "mode", "mae_range_m", "mae_speed_mps", "pd", "fa_per_scan")

    def to_dict(self):
        d = asdict(self)
        return {k: _clean(v) for k, v in d.items()}

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    def csv_row(self):
        return (
            self.scenario,
            self.mode,
            _clean(self.mae_range),
            _clean(self.mae_speed),
            _clean(self.prob_detection),
            self.false_alarms_per_scan,
        )

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.CSV_COLUMNS)
        writer.writerow(self.csv_row())
        return buf.getvalue()

    @classmethod
    def from_dict(cls, d):
        nan = float("nan")
        return cls(
            nan if d["mae_range"] is None else d["mae_range"],
            nan if d["mae_speed"] is None else d["mae_speed"],
            nan if d["prob_detection"] is None else d["prob_detection"],
            d["false_alarms_per_scan"],
            list(d.get("cardinality_series", [])),
            d.get("scenario", ""),
            d.get("mode", ""),
        )


def evaluate(truth_per_frame, estimates_per_frame, *, pd_window=11, cardinality_window=51,
             range_gate=5.0, speed_gate=5.0, scenario="", mode=""):
    """Run the full metric suite over aligned per-frame truth and estimates."""
    if len(truth_per_frame) != len(estimates_per_frame):
        raise ContractError("truth and estimates must cover the same frames")
    assoc = [
        associate_frame(t, e, range_gate, speed_gate)
        for t, e in zip(truth_per_frame, estimates_per_frame)
    ]
    mae_r, mae_v = mae(assoc)
    counts = [len(e) for e in estimates_per_frame]
    report = MetricsReport(
        mae_r,
        mae_v,
        windowed_pd(assoc, pd_window),
        false_alarm_rate(assoc),
        [float(c) for c in smoothed_cardinality(counts, cardinality_window)],
        scenario,
        mode,
    )
    return report, assoc
