"""Artifact readers and writers: binary grid dumps, CSV tables, JSON snapshots."""

from __future__ import annotations

import csv
import json
import struct
from pathlib import Path

import numpy as np

from ._validation import ContractError

__all__ = [
    "write_csi_dump",
    "read_csi_dump",
    "write_periodogram_dump",
    "read_periodogram_dump",
    "write_detections_csv",
    "read_detections_csv",
    "write_tracks_csv",
    "write_intensity_json",
    "DETECTION_COLUMNS",
    "TRACK_COLUMNS",
]

DETECTION_COLUMNS = ("frame", "range_m", "speed_mps", "power_db")
TRACK_COLUMNS = ("frame", "est_index", "range_m", "speed_mps", "weight")
_HEADER = struct.Struct("<II")


def _encode_grid(values, mask):
    rows, cols = values.shape
    mask = np.asarray(mask, dtype=bool).reshape(-1)
    if len(mask) != cols:
        raise ContractError(f"mask length {len(mask)} does not match {cols} columns")
    return _HEADER.pack(rows, cols) + mask.astype(np.uint8).tobytes() + values.astype("<f4").tobytes()


def _decode_header(buf):
    if len(buf) < _HEADER.size:
        raise ContractError("dump is shorter than its header")
    rows, cols = _HEADER.unpack_from(buf)
    mask = np.frombuffer(buf, dtype=np.uint8, count=cols, offset=_HEADER.size).astype(bool)
    return rows, cols, mask, _HEADER.size + cols


def _check_payload(buf, offset, n_floats):
    if len(buf) - offset != 4 * n_floats:
        raise ContractError(f"expected {n_floats} float32 values, found {len(buf) - offset} payload bytes")


def write_csi_dump(path, csi):
    """``<u32 N><u32 M><M mask bytes><N*M interleaved f32 (re, im)>``, row-major."""
    grid = np.asarray(csi.grid, dtype=np.complex64)
    pairs = np.stack([grid.real, grid.imag], axis=-1).reshape(grid.shape[0], -1)
    data = _HEADER.pack(*grid.shape) + np.asarray(csi.mask, np.uint8).tobytes() + pairs.astype("<f4").tobytes()
    Path(path).write_bytes(data)


def read_csi_dump(path):
    """Returns ``(grid complex64, mask bool)``."""
    buf = Path(path).read_bytes()
    n, m, mask, off = _decode_header(buf)
    _check_payload(buf, off, 2 * n * m)
    flat = np.frombuffer(buf, dtype="<f4", offset=off).reshape(n, m, 2)
    return (flat[..., 0] + 1j * flat[..., 1]).astype(np.complex64), mask


def write_periodogram_dump(path, p):
    """Same layout as the CSI dump, with one f32 dB power per cell and an all-ones mask."""
    power = np.asarray(p.power)
    Path(path).write_bytes(_encode_grid(power, np.ones(power.shape[1], dtype=bool)))


def read_periodogram_dump(path):
    buf = Path(path).read_bytes()
    n, m, _, off = _decode_header(buf)
    _check_payload(buf, off, n * m)
    return np.frombuffer(buf, dtype="<f4", offset=off).reshape(n, m).copy()


def _fmt(x):
    return repr(float(x))


def write_detections_csv(path, detections_per_frame):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DETECTION_COLUMNS)
        for k, dets in enumerate(detections_per_frame):
            for d in dets:
                w.writerow((k, _fmt(d[0]), _fmt(d[1]), _fmt(d[2] if len(d) > 2 else 0.0)))


def read_detections_csv(path):
    """Rows as ``(frame, range, speed, power)`` tuples."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [(int(r["frame"]), float(r["range_m"]), float(r["speed_mps"]), float(r["power_db"])) for r in rows]


def write_tracks_csv(path, estimates_per_frame, weights_per_frame):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACK_COLUMNS)
        for k, (est, wts) in enumerate(zip(estimates_per_frame, weights_per_frame)):
            for i, (x, wt) in enumerate(zip(est, wts)):
                w.writerow((k, i, _fmt(x[0]), _fmt(x[1]), _fmt(wt)))


def write_intensity_json(path, intensity):
    Path(path).write_text(json.dumps(intensity.to_json_list()))
