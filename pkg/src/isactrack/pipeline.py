"""End-to-end experiment runner: scenario -> sensor -> processing -> tracker -> metrics."""

from __future__ import annotations

import copy
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomli

from . import io as artifacts
from ._validation import ContractError
from .evaluation import evaluate
from .processing import (
    CRAPRemover,
    ECACRemover,
    TDDPeakDetector,
    gate_detections,
    periodogram,
)
from .scenario import Scenario, ground_truth_at, scenario_preset
from .sensors import IdealSensorConfig, OfdmGridConfig, ideal_observe, synthesize_frame, tdd_mask
from .sensors import target_amplitudes
from .tracker import GMPHDTracker

__all__ = ["ConfigError", "ExperimentConfig", "RunResult", "load_config", "run_experiment", "DEFAULTS"]

log = logging.getLogger(__name__)

# RNG streams derived from the experiment seed
_STREAM_SENSOR = 1
_STREAM_ACQUISITION = 2


class ConfigError(ContractError):
    """Invalid experiment configuration; the message names the offending field."""


# Tracker settings per sensor mode.  The ideal sensor puts all clutter at
# exactly zero Doppler, so its clutter density is modelled over a narrow
# speed span instead of the full gate.
DEFAULTS = {
    "sensor": {
        "ideal": dict(p_detect=0.9, sigma_range=0.3, sigma_speed=0.1, clutter_rate=2.0,
                      clutter_range_window=[15.0, 60.0]),
        "ofdm": dict(grid="desk", noise_power_db=0.0, target_amplitude=1.0, reference_range=18.0,
                     tdd_pattern="DDDSU", symbols_per_slot=3,
                     static_clutter_taps=[[24.0, 10.0, 0.0], [45.0, 10.0, 1.0]]),
    },
    "processing": dict(clutter_removal="crap", tdd_detect=True, window="rect", zero_pad_factor=1,
                       guard=[2, 2], train=[8, 8], pfa=1e-4, sidelobe_drop_threshold=6.0,
                       eca_order=2, crap_components=3, crap_min_energy_fraction=0.01,
                       crap_acquisition_frames=300, range_window=[15.0, 60.0],
                       speed_window=[-6.0, 6.0], min_power=-40.0),
    "tracker": {
        "ideal": dict(speed_window=[-0.2, 0.2], birth_weight=0.02),
        "ofdm": dict(),
    },
    "evaluation": dict(pd_window=11, cardinality_window=51, range_gate=5.0, speed_gate=5.0),
    "output": dict(dir="out", dump_every=100),
}

_TRACKER_KEYS = set(GMPHDTracker().get_params())
_TOP_KEYS = {"sensor_mode", "scenario", "sensor", "processing", "tracker", "evaluation", "seed", "output"}


@dataclass
class ExperimentConfig:
    sensor_mode: str
    scenario: dict
    sensor: dict
    processing: dict
    tracker: dict
    evaluation: dict
    seed: int = 0
    output: dict = field(default_factory=dict)
    base_dir: Path = field(default_factory=Path.cwd)

    @classmethod
    def from_dict(cls, raw, base_dir=None):
        raw = dict(raw)
        if "sensor_mode" not in raw:
            raise ConfigError("missing required field 'sensor_mode' (ideal | ofdm)")
        mode = raw["sensor_mode"]
        if mode not in ("ideal", "ofdm"):
            raise ConfigError(f"sensor_mode must be 'ideal' or 'ofdm', got {mode!r}")
        base_dir = Path(base_dir) if base_dir is not None else Path.cwd()
        for k in raw:
            if k not in _TOP_KEYS:
                raise ConfigError(f"unknown field {k!r}")
        for k in raw.get("sensor", {}):
            if k not in DEFAULTS["sensor"]:
                raise ConfigError(f"unknown field sensor.{k}")

        scen = dict(raw.get("scenario", {"preset": 1}))
        for k in scen:
            if k not in ("preset", "file"):
                raise ConfigError(f"unknown field scenario.{k}")
        if ("preset" in scen) == ("file" in scen):
            raise ConfigError("scenario needs exactly one of 'preset' or 'file'")
        if "file" in scen:
            path = (base_dir / scen["file"]).resolve()
            if not path.is_file():
                raise ConfigError(f"scenario.file {str(path)!r} does not exist")
            scen["file"] = str(path)
        elif int(scen["preset"]) not in (1, 2, 3, 4):
            raise ConfigError("scenario.preset must be 1, 2, 3 or 4")

        sensor = _merged(DEFAULTS["sensor"][mode], raw.get("sensor", {}).get(mode, {}), f"sensor.{mode}")
        if mode == "ofdm" and sensor["grid"] not in ("desk", "full"):
            raise ConfigError("sensor.ofdm.grid must be 'desk' or 'full'")
        processing = _merged(DEFAULTS["processing"], raw.get("processing", {}), "processing")
        if processing["clutter_removal"] not in ("none", "eca_c", "crap"):
            raise ConfigError("processing.clutter_removal must be none, eca_c or crap")
        tracker = dict(DEFAULTS["tracker"][mode])
        for k, v in raw.get("tracker", {}).items():
            if k not in _TRACKER_KEYS:
                raise ConfigError(f"unknown field tracker.{k}")
            tracker[k] = v
        evaluation = _merged(DEFAULTS["evaluation"], raw.get("evaluation", {}), "evaluation")
        output = _merged(DEFAULTS["output"], raw.get("output", {}), "output")
        try:
            seed = int(raw.get("seed", 0))
        except (TypeError, ValueError):
            raise ConfigError("seed must be an integer") from None
        if seed < 0:
            raise ConfigError("seed must be non-negative")
        return cls(mode, scen, sensor, processing, tracker, evaluation, seed, output, base_dir)

    def to_dict(self):
        return {
            "sensor_mode": self.sensor_mode,
            "seed": self.seed,
            "scenario": self.scenario,
            "sensor": {self.sensor_mode: self.sensor},
            "processing": self.processing,
            "tracker": self.tracker,
            "evaluation": self.evaluation,
            "output": self.output,
        }

    def replace(self, **changes):
        new = copy.deepcopy(self)
        for k, v in changes.items():
            setattr(new, k, v)
        return new

    def build_scenario(self):
        if "file" in self.scenario:
            return Scenario.load_json(self.scenario["file"])
        return scenario_preset(int(self.scenario["preset"]), seed=self.seed)

    def scenario_label(self):
        if "file" in self.scenario:
            return Path(self.scenario["file"]).stem
        return f"preset{int(self.scenario['preset'])}"

    def build_tracker(self, dt):
        return GMPHDTracker(**{"dt": dt, **self.tracker})

    def grid_config(self):
        s = self.sensor
        base = OfdmGridConfig.desk if s["grid"] == "desk" else OfdmGridConfig
        n_symbols = 112 if s["grid"] == "desk" else 1120
        return base(
            tdd_mask=tdd_mask(n_symbols, s["tdd_pattern"], int(s["symbols_per_slot"])),
            noise_power_db=float(s["noise_power_db"]),
            target_amplitude=float(s["target_amplitude"]),
            reference_range=float(s["reference_range"]),
            static_clutter_taps=tuple(tuple(float(x) for x in t) for t in s["static_clutter_taps"]),
        )


def _merged(defaults, overrides, section):
    out = dict(defaults)
    for k, v in overrides.items():
        if k not in defaults:
            raise ConfigError(f"unknown field {section}.{k}")
        out[k] = v
    return out


def load_config(path):
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {str(path)!r} does not exist")
    try:
        raw = tomli.loads(path.read_text())
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"config is not valid TOML: {exc}") from None
    return ExperimentConfig.from_dict(raw, base_dir=path.parent)


def _frame_seed(seed, stream, frame):
    return np.random.SeedSequence([seed, stream, frame])


@dataclass
class RunResult:
    report: object
    detections: list
    estimates: list
    estimate_weights: list
    total_weight: list
    truth: list
    scenario: Scenario
    elapsed: float
    final_intensity: object = None


# --- OFDM front end ---------------------------------------------------------

class _FrontEnd:
    """Per-frame OFDM synthesis and detection.  Picklable for worker processes."""

    def __init__(self, cfg, grid, remover, scenario):
        self.seed = cfg.seed
        self.grid = grid
        self.remover = remover
        p = cfg.processing
        self.detector = TDDPeakDetector(
            guard=tuple(p["guard"]),
            train=tuple(p["train"]),
            pfa=float(p["pfa"]),
            sidelobe_drop_threshold=float(p["sidelobe_drop_threshold"]),
            window=None if p["window"] == "rect" else p["window"],
            zero_pad_factor=int(p["zero_pad_factor"]),
            tdd_aware=bool(p["tdd_detect"]),
            search_window=(tuple(p["range_window"]), tuple(p["speed_window"])),
        ).fit()
        self.gates = (tuple(p["range_window"]), tuple(p["speed_window"]), float(p["min_power"]))
        self.scenario = scenario

    def synthesize(self, frame, stream=_STREAM_SENSOR):
        truth = ground_truth_at(self.scenario, frame)
        r = np.array([t[0] for t in truth])
        amps = target_amplitudes(r, self.grid) if len(r) else []
        targets = [(t[0], t[1], a) for t, a in zip(truth, amps)]
        return synthesize_frame(targets, self.grid, _frame_seed(self.seed, stream, frame))

    def clean(self, csi):
        return csi if self.remover is None else self.remover.transform(csi)

    def detect(self, frame):
        csi = self.clean(self.synthesize(frame))
        dets = self.detector.predict(csi)
        return gate_detections(dets, *self.gates)

    def detect_many(self, frames):
        return [self.detect(k) for k in frames]


def _make_remover(cfg, front, n_frames):
    p = cfg.processing
    kind = p["clutter_removal"]
    if kind == "none":
        return None
    if kind == "eca_c":
        return ECACRemover(order=int(p["eca_order"])).fit()
    n_acq = max(int(p["crap_acquisition_frames"]), int(p["crap_components"]), 1)
    frames = np.unique(np.linspace(0, n_frames - 1, n_acq).round().astype(int))
    acq = [front.synthesize(int(k), _STREAM_ACQUISITION) for k in frames]
    return CRAPRemover(int(p["crap_components"]), float(p["crap_min_energy_fraction"])).fit(acq)


def _ofdm_detections(cfg, scenario, parallel, dump_dir=None):
    grid = cfg.grid_config()
    front = _FrontEnd(cfg, grid, None, scenario)
    front.remover = _make_remover(cfg, front, scenario.n_frames)
    frames = list(range(scenario.n_frames))
    if parallel > 1:
        chunks = [frames[i::parallel] for i in range(parallel)]
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            parts = list(pool.map(front.detect_many, chunks))
        dets = [None] * len(frames)
        for chunk, part in zip(chunks, parts):
            for k, d in zip(chunk, part):
                dets[k] = d
    else:
        dets = front.detect_many(frames)

    if dump_dir is not None:
        _dump_grids(cfg, front, scenario.n_frames, dump_dir)
    return dets


def _dump_grids(cfg, front, n_frames, dump_dir):
    every = max(int(cfg.output["dump_every"]), 1)
    dump_csi, dump_pg = dump_dir
    p = cfg.processing
    for k in range(0, n_frames, every):
        csi = front.clean(front.synthesize(k))
        if dump_csi is not None:
            artifacts.write_csi_dump(dump_csi / f"frame_{k:05d}.bin", csi)
        if dump_pg is not None:
            win = None if p["window"] == "rect" else p["window"]
            pg = periodogram(csi, win, int(p["zero_pad_factor"]))
            artifacts.write_periodogram_dump(dump_pg / f"frame_{k:05d}.bin", pg)


def _ideal_detections(cfg, scenario):
    s = cfg.sensor
    sensor = IdealSensorConfig(
        p_detect=float(s["p_detect"]),
        sigma_range=float(s["sigma_range"]),
        sigma_speed=float(s["sigma_speed"]),
        clutter_rate=float(s["clutter_rate"]),
        clutter_range_window=tuple(s["clutter_range_window"]),
    )
    p = cfg.processing
    gates = (tuple(p["range_window"]), tuple(p["speed_window"]), float(p["min_power"]))
    out = []
    for k in range(scenario.n_frames):
        z = ideal_observe(ground_truth_at(scenario, k), sensor, _frame_seed(cfg.seed, _STREAM_SENSOR, k))
        out.append(gate_detections(z, *gates))
    return out


def run_experiment(cfg, parallel=1, dump_csi_dir=None, dump_periodogram_dir=None):
    """Run one experiment in memory and return a :class:`RunResult`.

    Results do not depend on ``parallel``: every frame draws from its own
    seed derived from ``cfg.seed``.
    """
    t0 = time.perf_counter()
    scenario = cfg.build_scenario()
    if cfg.sensor_mode == "ideal":
        dets = _ideal_detections(cfg, scenario)
    else:
        dump = None
        if dump_csi_dir is not None or dump_periodogram_dir is not None:
            dump = (dump_csi_dir, dump_periodogram_dir)
        dets = _ofdm_detections(cfg, scenario, max(int(parallel), 1), dump)

    tracker = cfg.build_tracker(scenario.dt).reset()
    for z in dets:
        tracker.partial_fit([d[:2] for d in z])

    truth = [ground_truth_at(scenario, k) for k in range(scenario.n_frames)]
    e = cfg.evaluation
    report, _ = evaluate(
        truth,
        tracker.estimates_,
        pd_window=int(e["pd_window"]),
        cardinality_window=int(e["cardinality_window"]),
        range_gate=float(e["range_gate"]),
        speed_gate=float(e["speed_gate"]),
        scenario=cfg.scenario_label(),
        mode=cfg.sensor_mode,
    )
    return RunResult(
        report,
        dets,
        tracker.estimates_,
        tracker.estimate_weights_,
        tracker.total_weight_,
        truth,
        scenario,
        time.perf_counter() - t0,
        tracker.intensity_,
    )


def default_parallelism():
    return os.cpu_count() or 1


def run_to_directory(cfg, out_dir, parallel=1, dump_csi=False, dump_periodogram=False):
    """Run an experiment and write every artifact into ``out_dir``.

    On failure a ``FAILED`` marker with the error text is left next to any
    artifacts already written, and the exception is re-raised.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    marker = out / "FAILED"
    if marker.exists():
        marker.unlink()
    csi_dir = out / "csi" if dump_csi else None
    pg_dir = out / "periodogram" if dump_periodogram else None
    for d in (csi_dir, pg_dir):
        if d is not None:
            d.mkdir(exist_ok=True)
    try:
        res = run_experiment(cfg, parallel, csi_dir, pg_dir)
        artifacts.write_detections_csv(out / "detections.csv", res.detections)
        artifacts.write_tracks_csv(out / "tracks.csv", res.estimates, res.estimate_weights)
        artifacts.write_intensity_json(out / "intensity_final.json", res.final_intensity)
        (out / "metrics.json").write_text(res.report.to_json() + "\n")
        (out / "metrics.csv").write_text(res.report.to_csv())
        info = {"config": cfg.to_dict(), "tracker_params": cfg.build_tracker(res.scenario.dt).get_params(),
                "n_frames": res.scenario.n_frames, "elapsed_s": res.elapsed, "parallel": parallel}
        (out / "run_info.json").write_text(json.dumps(info, indent=2, default=str) + "\n")
    except Exception as exc:
        marker.write_text(f"{type(exc).__name__}: {exc}\n")
        raise
    return res
