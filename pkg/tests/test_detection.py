import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from conftest import on_grid
from isactrack._validation import ContractError
from isactrack.processing import (
    CACFARDetector,
    TDDPeakDetector,
    ca_cfar,
    cfar_mask,
    cfar_threshold_factor,
    gate_detections,
    local_peaks,
    naive_peak_detect,
    periodogram,
    tdd_peak_detect,
)
from isactrack.processing.spectrum import POWER_FLOOR_DB
from isactrack.processing.tdd import _candidates
from isactrack.sensors import OfdmGridConfig, synthesize_frame
from isactrack.types import Detection


def _brute_cfar(power_db, guard, train, pfa):
    lin = np.where(power_db <= POWER_FLOOR_DB, 0.0, 10 ** (power_db / 10))
    n, m = lin.shape
    out = np.zeros_like(lin, dtype=bool)
    gr, gd = guard
    tr, td = train
    for i in range(n):
        for j in range(m):
            cells = []
            for a in range(i - gr - tr, i + gr + tr + 1):
                for b in range(j - gd - td, j + gd + td + 1):
                    if abs(a - i) <= gr and abs(b - j) <= gd:
                        continue
                    if 0 <= a < n and 0 <= b < m:
                        cells.append(lin[a, b])
            if not cells:
                continue
            k = len(cells)
            alpha = k * (pfa ** (-1 / k) - 1)
            out[i, j] = lin[i, j] > 0 and lin[i, j] > alpha * np.mean(cells)
    return out


class TestCfar:
    def test_threshold_factor_formula(self):
        assert cfar_threshold_factor(1, 0.5) == pytest.approx(1.0)
        # large-N limit is -ln(pfa)
        assert cfar_threshold_factor(10**7, 1e-4) == pytest.approx(-np.log(1e-4), rel=1e-5)

    @settings(max_examples=15, deadline=None)
    @given(
        seed=st.integers(0, 10_000),
        guard=st.tuples(st.integers(0, 2), st.integers(0, 2)),
        train=st.tuples(st.integers(1, 3), st.integers(0, 3)),
        pfa=st.sampled_from([1e-1, 1e-2, 1e-4]),
    )
    def test_matches_brute_force(self, seed, guard, train, pfa):
        rng = np.random.default_rng(seed)
        lin = rng.exponential(size=(14, 17))
        lin[rng.integers(0, 14, 3), rng.integers(0, 17, 3)] *= 200
        power = 10 * np.log10(lin)
        power[rng.integers(0, 14, 4), rng.integers(0, 17, 4)] = POWER_FLOOR_DB
        np.testing.assert_array_equal(cfar_mask(power, guard, train, pfa), _brute_cfar(power, guard, train, pfa))

    def test_floor_cells_never_flagged(self):
        power = np.full((40, 40), POWER_FLOOR_DB)
        assert not cfar_mask(power).any()
        power[20, 20] = 0.0
        flags = cfar_mask(power)
        assert flags.sum() == 1 and flags[20, 20]

    def test_single_peak_on_clean_floor(self, desk_full_mask):
        r, v = on_grid(desk_full_mask, 40, 7)
        p = periodogram(synthesize_frame([(r, v, 1.0)], desk_full_mask, 0))
        flagged = sorted(ca_cfar(p), key=lambda c: -c[1])
        assert flagged[0] == (p.bin_of(r, v), 0.0)
        # anything else is FFT roundoff just above the floor
        assert all(power < -250 for _, power in flagged[1:])

    def test_constant_field_not_flagged(self):
        assert not cfar_mask(np.zeros((30, 30))).any()

    @pytest.mark.parametrize("kwargs", [dict(train=(0, 0)), dict(guard=(-1, 2)), dict(pfa=1.5)])
    def test_invalid_parameters(self, kwargs):
        with pytest.raises(ContractError):
            cfar_mask(np.zeros((10, 10)), **kwargs)

    def test_detector_estimator(self, desk_full_mask):
        r, v = on_grid(desk_full_mask, 40, 7)
        p = periodogram(synthesize_frame([(r, v, 1.0)], desk_full_mask, 0))
        det = CACFARDetector(pfa=1e-3).fit()
        hit = det.predict(p)[0]
        assert hit == pytest.approx((r, v, 0.0))
        assert clone(det).get_params()["pfa"] == 1e-3


class TestLocalPeaks:
    def test_plateau_yields_one_peak(self):
        power = np.zeros((5, 5))
        power[2, 2] = power[2, 3] = 10.0
        peaks = local_peaks(power > 0, power)
        assert peaks == [(2, 2)]

    def test_strongest_first(self):
        power = np.zeros((9, 9))
        power[1, 1], power[6, 6] = 3.0, 7.0
        mask = power > 0
        assert local_peaks(mask, power) == [(6, 6), (1, 1)]

    def test_unflagged_maximum_ignored(self):
        power = np.zeros((5, 5))
        power[2, 2] = 4.0
        assert local_peaks(np.zeros((5, 5), bool), power) == []

    def test_cropped_candidates_match_full_grid(self):
        cfg = OfdmGridConfig.desk(noise_power_db=-10.0)
        csi = synthesize_frame([(25.0, 1.0, 1.0), (40.0, -2.0, 0.5), (52.0, 3.3, 0.3)], cfg, 4)
        p = periodogram(csi)
        window = ((15.0, 60.0), (-6.0, 6.0))
        full = local_peaks(cfar_mask(p.power), p.power)

        def inside(ij):
            return 15 <= p.range_axis[ij[0]] <= 60 and -6 <= p.speed_axis[ij[1]] <= 6

        cropped = _candidates(p.power, p.range_axis, p.speed_axis, {}, window)
        assert [c for c in cropped if inside(c)] == [c for c in full if inside(c)]
        assert len([c for c in full if inside(c)]) >= 3


def _dddsu(noise=-np.inf, taps=()):
    return OfdmGridConfig.desk(noise_power_db=noise, static_clutter_taps=taps)


class TestTddDetect:
    def test_single_target_no_noise(self):
        cfg = _dddsu()
        r, v = 30.37, 1.23
        csi = synthesize_frame([(r, v, 1.0)], cfg, 0)
        dets = tdd_peak_detect(periodogram(csi), csi, search_window=((15, 60), (-6, 6)))
        assert len(dets) == 1
        assert abs(dets[0].range - r) <= cfg.range_resolution / 32
        assert abs(dets[0].speed - v) <= cfg.speed_resolution / 32
        assert dets[0].power == pytest.approx(0.0, abs=0.5)

    def test_naive_sees_ghosts(self):
        cfg = _dddsu()
        csi = synthesize_frame([(30.37, 1.23, 1.0)], cfg, 0)
        naive = naive_peak_detect(periodogram(csi), csi, search_window=((15, 60), (-6, 6)))
        assert len(naive) >= 3
        ghost_speeds = sorted(abs(d.speed - 1.23) for d in naive)[1:3]
        step = 112 / 15 * cfg.speed_resolution
        assert np.allclose(ghost_speeds, step, atol=cfg.speed_resolution)

    def test_full_mask_equals_naive(self):
        cfg = OfdmGridConfig.desk(noise_power_db=-30.0, tdd_mask=np.ones(112, bool))
        csi = synthesize_frame([(30.37, 1.23, 1.0), (44.1, -2.2, 0.5)], cfg, 0)
        p = periodogram(csi)
        kw = dict(cfar_cfg=dict(pfa=1e-6), search_window=((15, 60), (-6, 6)))
        a = tdd_peak_detect(p, csi, **kw)
        b = naive_peak_detect(p, csi, **kw)
        assert len(a) == 2
        assert sorted((round(d.range, 3), round(d.speed, 3)) for d in a) == sorted(
            (round(d.range, 3), round(d.speed, 3)) for d in b
        )

    def test_two_targets_ten_db_apart(self):
        cfg = _dddsu()
        # the weaker target sits on the stronger one's first ghost offset in a neighbouring range cell
        step = 112 / 15 * cfg.speed_resolution
        r0, v0 = on_grid(cfg, 25, 2)  # on-grid so the periodogram peak is unscalloped
        truth = [(r0, v0, 1.0), (32.9, v0 + step + 0.4, 10 ** (-10 / 20))]
        csi = synthesize_frame(truth, cfg, 0)
        dets = tdd_peak_detect(periodogram(csi), csi, search_window=((15, 60), (-6, 6)))
        assert len(dets) == 2
        for r, v, _ in truth:
            assert any(abs(d.range - r) < 0.1 and abs(d.speed - v) < 0.05 for d in dets)
        assert dets[1].power == pytest.approx(-10.0, abs=1.0)

    @settings(max_examples=8, deadline=None)
    @given(seed=st.integers(0, 1000))
    def test_no_two_detections_in_one_cell(self, seed):
        cfg = _dddsu(noise=0.0)
        rng = np.random.default_rng(seed)
        truth = [(float(rng.uniform(18, 58)), float(rng.uniform(-5, 5)), 30.0) for _ in range(3)]
        csi = synthesize_frame(truth, cfg, seed)
        dets = tdd_peak_detect(periodogram(csi), csi, search_window=((15, 60), (-6, 6)))
        for a in range(len(dets)):
            for b in range(a + 1, len(dets)):
                assert not (
                    abs(dets[a].range - dets[b].range) < cfg.range_resolution
                    and abs(dets[a].speed - dets[b].speed) < cfg.speed_resolution
                )

    def test_deterministic(self):
        cfg = _dddsu(noise=0.0)
        csi = synthesize_frame([(25.0, 2.0, 20.0), (48.0, -1.0, 10.0)], cfg, 5)
        det = TDDPeakDetector(search_window=((15, 60), (-6, 6))).fit()
        assert det.predict(csi) == det.predict(csi)

    def test_estimator_params(self):
        det = TDDPeakDetector(pfa=1e-3, tdd_aware=False)
        assert clone(det).get_params()["tdd_aware"] is False
        with pytest.raises(ContractError):
            TDDPeakDetector(zero_pad_factor=0).fit()


class TestGating:
    def test_out_of_range_removed(self):
        assert gate_detections([Detection(61.0, 0.0, -3.0)]) == []

    def test_empty(self):
        assert gate_detections([]) == []

    def test_weak_but_inside_kept(self):
        d = Detection(30.0, -2.0, -39.9)
        assert gate_detections([d]) == [d]

    def test_bounds_inclusive_and_power_cut(self):
        keep = [Detection(15.0, -6.0, -40.0), Detection(60.0, 6.0, 0.0)]
        drop = [Detection(30.0, 0.0, -40.1), Detection(30.0, 6.01, 0.0)]
        assert gate_detections(keep + drop) == keep

    @settings(max_examples=50)
    @given(
        st.lists(
            st.builds(
                Detection,
                st.floats(0, 80, allow_nan=False),
                st.floats(-10, 10, allow_nan=False),
                st.floats(-80, 0, allow_nan=False),
            ),
            max_size=20,
        )
    )
    def test_order_preserved_subsequence(self, dets):
        out = gate_detections(dets)
        it = iter(dets)
        assert all(any(d is e for e in it) for d in out)
        assert all(15 <= d.range <= 60 and -6 <= d.speed <= 6 and d.power >= -40 for d in out)

    def test_bad_window(self):
        with pytest.raises(ContractError):
            gate_detections([], range_window=(60.0, 15.0))
