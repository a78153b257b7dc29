"""TAC-fidelity and parameter-recovery metrics.

Covers the curve-level scores (MSE, MAE, cosine similarity), organ-level
aggregation of parameter maps, and the per-axial-slice cosine-similarity
profile used to localize model mismatch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kinetics import ForwardModel, InputFunction
from .volumes import DynamicVolume, LabelMap, ParametricVolume

__all__ = ["ZeroNormError", "TacMetrics", "tac_metrics", "tac_metrics_arrays",
           "OrganRow", "OrganReport", "organ_aggregate", "per_slice_cs",
           "normalized_max_deviation"]


class ZeroNormError(ValueError):
    """Cosine similarity is undefined against an all-zero curve."""


@dataclass(frozen=True)
class TacMetrics:
    """Curve agreement scores; (0, 0, 1) iff the curves are identical and
    non-zero."""

    mse: float
    mae: float
    cosine_similarity: float


def tac_metrics(measured, modeled) -> TacMetrics:
    """MSE, MAE and cosine similarity between two aligned curves.

    Raises ZeroNormError when either curve has zero norm: air voxels must be
    masked out upstream rather than silently scored.
    """
    x = np.asarray(measured, dtype=np.float64)
    y = np.asarray(modeled, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"curves must be equal-length 1-D, got {x.shape} vs {y.shape}")
    nx = float(np.linalg.norm(x))
    ny = float(np.linalg.norm(y))
    if nx == 0.0 or ny == 0.0:
        raise ZeroNormError("cosine similarity undefined for a zero-norm curve")
    diff = x - y
    cs = float(np.clip(x @ y / (nx * ny), -1.0, 1.0))
    return TacMetrics(float(np.mean(diff * diff)), float(np.mean(np.abs(diff))), cs)


def tac_metrics_arrays(measured: np.ndarray, modeled: np.ndarray
                       ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Row-wise (mse, mae, cs) for [n, T] curve matrices; cs is NaN for
    zero-norm rows (callers decide how to treat them)."""
    x = np.asarray(measured, dtype=np.float64)
    y = np.asarray(modeled, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 2:
        raise ValueError("expected matching [n, T] matrices")
    diff = x - y
    mse = np.mean(diff * diff, axis=1)
    mae = np.mean(np.abs(diff), axis=1)
    nx = np.linalg.norm(x, axis=1)
    ny = np.linalg.norm(y, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        cs = np.sum(x * y, axis=1) / (nx * ny)
    cs = np.where((nx == 0) | (ny == 0), np.nan, np.clip(cs, -1.0, 1.0))
    return mse, mae, cs


def normalized_max_deviation(candidate, reference) -> float:
    """sup_i |candidate_i - reference_i| normalized by max |reference|."""
    c = np.asarray(candidate, dtype=np.float64)
    r = np.asarray(reference, dtype=np.float64)
    scale = float(np.max(np.abs(r)))
    if scale == 0.0:
        return float(np.max(np.abs(c)))
    return float(np.max(np.abs(c - r)) / scale)


@dataclass(frozen=True)
class OrganRow:
    """Aggregate of one labeled region."""

    label: int
    name: str
    n_voxels: int
    mean: np.ndarray          # (k1, k2, k3, vb)
    std: np.ndarray
    tac: TacMetrics | None = None


@dataclass(frozen=True)
class OrganReport:
    rows: tuple[OrganRow, ...]

    def row(self, name: str) -> OrganRow:
        for r in self.rows:
            if r.name == name:
                return r
        raise KeyError(f"no organ named {name!r}")

    def __iter__(self):
        return iter(self.rows)


def organ_aggregate(pv: ParametricVolume, labelmap: LabelMap,
                    volume: DynamicVolume | None = None,
                    input_function: InputFunction | None = None,
                    labels: list[int] | None = None) -> OrganReport:
    """Per-organ mean and std of each kinetic channel.

    When the measured dynamic volume and its input function are also given,
    each row carries the organ-mean TAC metrics between the measured curves
    and the curves reconstructed from the parameter map (voxel-wise scores
    averaged over the region).
    """
    if labelmap.labels.shape != pv.spatial_shape:
        raise ValueError("label map does not match the parameter map")
    wanted = sorted(labelmap.legend) if labels is None else [int(l) for l in labels]
    params = pv.param_matrix()
    flat_labels = labelmap.labels.reshape(-1)

    recon_scores: dict[int, TacMetrics] = {}
    if volume is not None:
        if input_function is None:
            raise ValueError("input_function is required to score TACs")
        model = ForwardModel(input_function, volume.schedule)
        sel = np.flatnonzero(flat_labels != 0)
        recon = model.batch_tac(params[sel])
        measured = volume.data.reshape(volume.n_frames, -1).T[sel]
        mse, mae, cs = tac_metrics_arrays(measured, recon)
        for lab in wanted:
            pick = flat_labels[sel] == lab
            if np.any(pick):
                recon_scores[lab] = TacMetrics(
                    float(np.nanmean(mse[pick])), float(np.nanmean(mae[pick])),
                    float(np.nanmean(cs[pick])))

    rows = []
    for lab in wanted:
        pick = flat_labels == lab
        n = int(np.count_nonzero(pick))
        if n == 0:
            raise ValueError(f"label {lab} is absent from the label map")
        block = params[pick]
        rows.append(OrganRow(lab, labelmap.legend.get(lab, str(lab)), n,
                             block.mean(axis=0), block.std(axis=0),
                             recon_scores.get(lab)))
    return OrganReport(tuple(rows))


def per_slice_cs(volume: DynamicVolume, pv: ParametricVolume,
                 input_function: InputFunction,
                 mask: LabelMap | np.ndarray | None = None,
                 strict: bool = True) -> np.ndarray:
    """Mean voxel-wise cosine similarity per axial slice.

    Scores measured TACs against curves reconstructed from the parameter map;
    the profile has one entry per z slice. Slices with no scoreable voxel
    raise (strict) or yield NaN.
    """
    if pv.spatial_shape != volume.spatial_shape:
        raise ValueError("parameter map does not match the volume")
    shape = volume.spatial_shape
    if mask is None:
        m = np.ones(shape, dtype=bool)
    else:
        m = mask.labels != 0 if isinstance(mask, LabelMap) else np.asarray(mask) != 0
        if m.shape != shape:
            raise ValueError(f"mask shape {m.shape} vs volume {shape}")

    model = ForwardModel(input_function, volume.schedule)
    params = pv.param_matrix()
    flat_m = m.reshape(-1)
    sel = np.flatnonzero(flat_m)
    measured = volume.data.reshape(volume.n_frames, -1).T[sel]
    recon = model.batch_tac(params[sel])
    _, _, cs = tac_metrics_arrays(measured, recon)

    z_of = np.repeat(np.arange(shape[0]), shape[1] * shape[2])[sel]
    profile = np.full(shape[0], np.nan)
    for z in range(shape[0]):
        vals = cs[z_of == z]
        vals = vals[~np.isnan(vals)]
        if vals.size == 0:
            if strict:
                raise ZeroNormError(f"slice {z} has no voxel with a non-zero TAC")
            continue
        profile[z] = float(vals.mean())
    return profile
