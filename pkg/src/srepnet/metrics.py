"""Positional and skeletal quality metrics for predicted s-reps.

Angles are in radians and computed as ``atan2(|u x v|, u . v)``, which stays
accurate for nearly parallel vectors where ``arccos`` of the dot product does not.
"""
from __future__ import annotations

import csv
import os
from dataclasses import astuple, dataclass
from typing import Callable, Sequence

import numpy as np

from .srep import BoundaryMesh, Srep, SrepError, boundary_mesh, build_graph

COLUMNS = ("mse", "mae", "rmse", "medialness", "angle", "orthogonality")
HEADER = ("MSE", "MAE", "RMSE", "Medialness", "Angle", "Orthogonality")


def angle_between(u, v) -> np.ndarray:
    u, v = np.asarray(u, dtype=np.float64), np.asarray(v, dtype=np.float64)
    return np.arctan2(np.linalg.norm(np.cross(u, v), axis=-1), np.einsum("...i,...i->...", u, v))


def _lengths(spokes, what: str) -> np.ndarray:
    lengths = np.linalg.norm(spokes, axis=-1)
    if np.any(lengths == 0):
        raise SrepError(f"zero-length {what} spoke")
    return lengths


def positional_metrics(pred, gt) -> tuple[float, float, float]:
    """(MSE, MAE, RMSE) of per-node Euclidean distances."""
    pred, gt = np.asarray(pred, dtype=np.float64), np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValueError(f"node count mismatch: {pred.shape} vs {gt.shape}")
    err = np.linalg.norm(pred - gt, axis=-1)
    mse = float(np.mean(err * err))
    return mse, float(np.mean(err)), float(np.sqrt(mse))


def medialness(srep: Srep) -> float:
    """Mean over skeletal points of min(|up|, |down|) / max(|up|, |down|)."""
    up = _lengths(srep.up_spokes, "up")
    down = _lengths(srep.down_spokes, "down")
    return float(np.mean(np.minimum(up, down) / np.maximum(up, down)))


def spoke_angle(pred: Srep, gt: Srep) -> float:
    """Mean angle between corresponding up, down and crest spokes."""
    if (pred.rings, pred.angular_samples) != (gt.rings, gt.angular_samples):
        raise SrepError(f"grid mismatch: {(pred.rings, pred.angular_samples)} vs "
                        f"{(gt.rings, gt.angular_samples)}")
    a, b = pred.all_spokes(), gt.all_spokes()
    _lengths(a, "predicted")
    _lengths(b, "ground-truth")
    return float(np.mean(angle_between(a, b)))


def orthogonality(srep: Srep, mesh: BoundaryMesh | None = None) -> float:
    """Mean angle between each spoke and the boundary normal at its tip.

    ``mesh`` defaults to the s-rep's own boundary mesh; its vertices must be
    the spoke tips in (up, down, crest) order.
    """
    if mesh is None:
        mesh = boundary_mesh(srep)
    spokes = srep.all_spokes()
    if mesh.vertex_normals.shape != spokes.shape:
        raise SrepError(f"mesh has {len(mesh.vertex_normals)} normals for {len(spokes)} spokes")
    _lengths(spokes, "any")
    return float(np.mean(angle_between(spokes, mesh.vertex_normals)))


@dataclass
class MetricsReport:
    mse: float
    mae: float
    rmse: float
    medialness: float
    angle: float
    orthogonality: float

    def row(self) -> tuple[float, ...]:
        return astuple(self)


def evaluate_pair(pred: Srep, gt: Srep) -> MetricsReport:
    mse, mae, rmse = positional_metrics(build_graph(pred).coords, build_graph(gt).coords)
    return MetricsReport(mse, mae, rmse, medialness(pred), spoke_angle(pred, gt), orthogonality(pred))


def aggregate(reports: Sequence[MetricsReport]) -> tuple[MetricsReport, MetricsReport]:
    """Per-metric mean and (population) standard deviation."""
    if not reports:
        raise ValueError("no reports to aggregate")
    table = np.array([r.row() for r in reports])
    return MetricsReport(*table.mean(axis=0)), MetricsReport(*table.std(axis=0))


def evaluate_dataset(manifest, split: str = "test", checkpoint: str | os.PathLike | None = None,
                     predictor: Callable | None = None):
    """Run inference on every sample of ``split`` and score it against its ground truth.

    ``predictor(mask) -> Srep`` overrides ``checkpoint``; passing neither
    scores the ground truth against itself.  Returns ``(rows, mean, std)``
    where ``rows`` pairs sample ids with reports.
    """
    from .fileio import load_srep
    from .mask import read_nrrd

    entries = manifest.split(split)
    if not entries:
        raise ValueError(f"split {split!r} is empty")
    if predictor is None and checkpoint is not None:
        from .model import load_model

        model = load_model(checkpoint)
        predictor = model.infer
    rows = []
    for entry in entries:
        mask_path, srep_path = manifest.path(entry.mask), manifest.path(entry.srep)
        for p in (mask_path, srep_path):
            if not os.path.exists(p):
                raise FileNotFoundError(p)
        gt = load_srep(srep_path)
        pred = gt if predictor is None else predictor(read_nrrd(mask_path))
        rows.append((entry.id, evaluate_pair(pred, gt)))
    mean, std = aggregate([r for _, r in rows])
    return rows, mean, std


def write_report_csv(path: str | os.PathLike, rows, mean: MetricsReport, std: MetricsReport) -> None:
    """Per-sample rows then ``mean`` and ``std`` rows, columns in reporting order."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("id",) + HEADER)
        for sample_id, rep in rows:
            w.writerow((sample_id,) + tuple(repr(float(v)) for v in rep.row()))
        w.writerow(("mean",) + tuple(repr(float(v)) for v in mean.row()))
        w.writerow(("std",) + tuple(repr(float(v)) for v in std.row()))

