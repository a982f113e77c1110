import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from isactrack._validation import ContractError
from isactrack.evaluation import (
    GATE_SENTINEL,
    AssociationResult,
    MetricsReport,
    associate_frame,
    evaluate,
    false_alarm_rate,
    hungarian,
    mae,
    smoothed_cardinality,
    windowed_pd,
)


def brute_force_cost(cost):
    n, m = cost.shape
    best = math.inf
    if n <= m:
        for cols in itertools.permutations(range(m), n):
            best = min(best, sum(cost[i, c] for i, c in enumerate(cols)))
    else:
        for rows in itertools.permutations(range(n), m):
            best = min(best, sum(cost[r, j] for j, r in enumerate(rows)))
    return best


class TestHungarian:
    def test_scalar(self):
        assert hungarian([[3.0]]) == [(0, 0)]

    def test_all_gated(self):
        assert hungarian(np.full((3, 2), GATE_SENTINEL)) == []

    def test_empty(self):
        assert hungarian(np.zeros((0, 4))) == []

    def test_avoids_greedy_trap(self):
        # greedy picks (0,0)=1 then (1,1)=10; optimum is 2 + 2
        assert hungarian([[1.0, 2.0], [2.0, 10.0]]) == [(0, 1), (1, 0)]

    @settings(max_examples=200, deadline=None)
    @given(st.integers(1, 5), st.integers(1, 5), st.integers(0, 2**31))
    def test_matches_brute_force(self, n, m, seed):
        cost = np.random.default_rng(seed).uniform(0, 10, (n, m))
        pairs = hungarian(cost, sentinel=None)
        assert len(pairs) == min(n, m)
        assert len({i for i, _ in pairs}) == len({j for _, j in pairs}) == len(pairs)
        assert sum(cost[i, j] for i, j in pairs) == pytest.approx(brute_force_cost(cost))

    @pytest.mark.parametrize("bad", [np.zeros(3), [[1.0, np.nan]], [[np.inf]]])
    def test_contract(self, bad):
        with pytest.raises(ContractError):
            hungarian(bad)


class TestAssociate:
    def test_basic_pairs_and_residuals(self):
        res = associate_frame([(30.0, 1.0, 7), (50.0, -2.0, 9)], [(50.5, -2.2), (29.0, 1.0), (20.0, 0.0)])
        assert [(p[0], p[1]) for p in res.pairs] == [(7, 1), (9, 0)]
        assert res.pairs[0][2:] == pytest.approx((-1.0, 0.0))
        assert res.unmatched_estimates == [2] and res.unmatched_truth == []

    def test_gate_is_conjunctive(self):
        res = associate_frame([(30.0, 0.0, 0)], [(34.0, 5.5)])
        assert res.pairs == [] and res.unmatched_truth == [0] and res.unmatched_estimates == [0]

    def test_gate_inclusive(self):
        assert len(associate_frame([(30.0, 0.0, 0)], [(35.0, 5.0)]).pairs) == 1

    def test_empty_sides(self):
        assert associate_frame([], [(30.0, 0.0)]).unmatched_estimates == [0]
        assert associate_frame([(30.0, 0.0, 4)], np.zeros((0, 2))).unmatched_truth == [4]

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**31), st.integers(1, 5), st.integers(0, 5))
    def test_permutation_invariant(self, seed, n_t, n_e):
        rng = np.random.default_rng(seed)
        truth = [(float(rng.uniform(15, 60)), float(rng.uniform(-6, 6)), k) for k in range(n_t)]
        est = rng.uniform([15, -6], [60, 6], (n_e, 2))
        perm = rng.permutation(n_e)
        a = associate_frame(truth, est)
        b = associate_frame(truth[::-1], est[perm])
        cost = lambda r: sum(abs(p[2]) / 5 + abs(p[3]) / 5 for p in r.pairs)
        assert len(a.pairs) == len(b.pairs)
        assert cost(a) == pytest.approx(cost(b))


def _trace(alive, hit):
    out = []
    for a, h in zip(alive, hit):
        if not a:
            out.append(AssociationResult())
        elif h:
            out.append(AssociationResult([(0, 0, 0.1, -0.1)]))
        else:
            out.append(AssociationResult([], [0]))
    return out


class TestWindowedPd:
    def test_every_tenth_frame_is_enough(self):
        # life spans frames 0..100 so the clipped end windows also hold a hit
        hit = [k % 10 == 0 for k in range(101)]
        assert windowed_pd(_trace([True] * 101, hit), 11) == 1.0

    def test_trace_shorter_than_window(self):
        assert windowed_pd(_trace([True] * 3, [False, True, False]), 11) == 1.0

    def test_sparser_hits_leave_gaps(self):
        hit = [k % 20 == 0 for k in range(100)]
        # hits at 0, 20, .., 80 cover 5 frames either side; frame 0's window is clipped -> 6 + 4 * 11
        assert windowed_pd(_trace([True] * 100, hit), 11) == pytest.approx(0.50)

    def test_never_detected(self):
        assert windowed_pd(_trace([True] * 30, [False] * 30)) == 0.0

    def test_nothing_alive(self):
        assert math.isnan(windowed_pd(_trace([False] * 5, [False] * 5)))

    def test_window_one_is_raw_rate(self):
        hit = [k % 3 == 0 for k in range(90)]
        assert windowed_pd(_trace([True] * 90, hit), 1) == pytest.approx(1 / 3)

    @settings(max_examples=30)
    @given(st.lists(st.booleans(), min_size=1, max_size=60))
    def test_monotone_in_window(self, hit):
        tr = _trace([True] * len(hit), hit)
        vals = [windowed_pd(tr, w) for w in (1, 3, 11, 31)]
        assert all(a <= b + 1e-12 for a, b in zip(vals, vals[1:]))

    def test_even_window_rejected(self):
        with pytest.raises(ContractError):
            windowed_pd([], 10)


def test_false_alarm_rate():
    res = [AssociationResult([], [], [0, 1]), AssociationResult(), AssociationResult([], [], [3])]
    assert false_alarm_rate(res) == pytest.approx(1.0)
    assert false_alarm_rate([]) == 0.0


class TestSmoothedCardinality:
    def test_constant(self):
        np.testing.assert_allclose(smoothed_cardinality([3] * 200, 51), 3.0)

    def test_impulse_spreads_to_plateau(self):
        counts = np.zeros(201)
        counts[100] = 51
        out = smoothed_cardinality(counts, 51)
        np.testing.assert_allclose(out[75:126], 1.0)
        assert out[74] == 0 and out[126] == 0

    def test_shorter_than_window(self):
        np.testing.assert_allclose(smoothed_cardinality([1, 2, 3], 51), 2.0)
        assert smoothed_cardinality([], 51).size == 0

    def test_edges_average_existing_frames(self):
        out = smoothed_cardinality([2, 4, 6, 8], 3)
        np.testing.assert_allclose(out, [3, 4, 6, 7])


def test_mae_and_nan():
    res = [AssociationResult([(0, 0, 0.2, -0.1), (1, 1, -0.4, 0.3)])]
    assert mae(res) == pytest.approx((0.3, 0.2))
    assert all(math.isnan(x) for x in mae([AssociationResult([], [0])]))


class TestReport:
    def _report(self):
        truth = [[(30.0, 1.0, 0)], [(30.01, 1.0, 0)], []]
        est = [np.array([[30.2, 1.1]]), np.array([[30.0, 0.9], [50.0, 0.0]]), np.zeros((0, 2))]
        return evaluate(truth, est, cardinality_window=3, scenario="preset1", mode="ideal")

    def test_values(self):
        rep, assoc = self._report()
        assert rep.mae_range == pytest.approx(0.105)
        assert rep.prob_detection == 1.0
        assert rep.false_alarms_per_scan == pytest.approx(1 / 3)
        assert rep.cardinality_series == pytest.approx([1.5, 1.0, 1.0])
        assert len(assoc) == 3

    def test_json_round_trip(self):
        rep, _ = self._report()
        back = MetricsReport.from_dict(json.loads(rep.to_json()))
        assert back == rep

    def test_nan_serialised_as_null(self):
        rep = MetricsReport(float("nan"), float("nan"), float("nan"), 0.0)
        d = json.loads(rep.to_json())
        assert d["mae_range"] is None and d["prob_detection"] is None
        assert math.isnan(MetricsReport.from_dict(d).mae_range)

    def test_csv(self):
        rep, _ = self._report()
        header, row = rep.to_csv().strip().split("\n")
        assert header == "scenario,mode,mae_range_m,mae_speed_mps,pd,fa_per_scan"
        assert row.startswith("preset1,ideal,")

    def test_length_mismatch(self):
        with pytest.raises(ContractError):
            evaluate([[]], [])
