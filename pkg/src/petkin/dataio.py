"""File formats: raw+sidecar volumes, IDIF CSV, and report CSVs.

Volume format
-------------
A volume is a pair of files sharing a base name: `<base>.raw` holds the
little-endian C-order array payload and `<base>.json` is the sidecar with
everything needed to interpret it:

    magic          "petkin-volume"
    format_version "1.0"
    kind           "dynamic" | "labels" | "parametric"
    dtype          numpy dtype string ("<f4" for volumes, "|u1" for labels)
    dims           [T, Z, Y, X], [Z, Y, X] or [C, Z, Y, X] per kind
    spacing_mm     [z, y, x]
    frame_schedule {"starts_s": [...], "durations_s": [...]}   (dynamic)
    channels       ["k1", ...]                                 (parametric)
    legend         {"1": "liver", ...}                         (labels)

Round-trips are bit-exact on the payload. Reads verify the magic, the major
format version, the payload byte count and the dims/schedule consistency.

IDIF CSV
--------
Header `frame_start_s,duration_s,activity_bq_ml`; one row per frame,
contiguous from t = 0. Values are the blood activity at the frame mid-times.
"""

from __future__ import annotations

import csv
import json
import os

import numpy as np

from .kinetics import FrameSchedule, InputFunction
from .metrics import OrganReport, TacMetrics
from .volumes import DynamicVolume, LabelMap, ParametricVolume

__all__ = ["FormatError", "write_volume", "read_volume",
           "write_idif", "read_idif",
           "write_organ_report_csv", "write_slice_profile_csv",
           "write_tac_metrics_csv", "write_tac_csv", "read_tac_csv"]

MAGIC = "petkin-volume"
FORMAT_VERSION = "1.0"


class FormatError(ValueError):
    """Raised for unreadable, inconsistent or truncated dataset files."""


def _base(path: str | os.PathLike) -> str:
    p = os.fspath(path)
    return p[:-4] if p.endswith(".raw") else p


def write_volume(path: str | os.PathLike,
                 vol: DynamicVolume | LabelMap | ParametricVolume) -> None:
    """Write a volume as `<base>.raw` plus `<base>.json`."""
    base = _base(path)
    meta: dict = {"magic": MAGIC, "format_version": FORMAT_VERSION}
    if isinstance(vol, DynamicVolume):
        arr = vol.data
        meta.update(kind="dynamic", spacing_mm=list(vol.spacing_mm),
                    frame_schedule={
                        "starts_s": vol.schedule.starts.tolist(),
                        "durations_s": vol.schedule.durations.tolist()})
    elif isinstance(vol, LabelMap):
        arr = vol.labels
        meta.update(kind="labels", spacing_mm=list(vol.spacing_mm),
                    legend={str(k): v for k, v in sorted(vol.legend.items())})
    elif isinstance(vol, ParametricVolume):
        arr = vol.data
        meta.update(kind="parametric", spacing_mm=list(vol.spacing_mm),
                    channels=list(vol.channels))
    else:
        raise TypeError(f"cannot serialize {type(vol).__name__}")
    meta["dtype"] = arr.dtype.str
    meta["dims"] = list(arr.shape)
    arr.tofile(base + ".raw")
    with open(base + ".json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_volume(path: str | os.PathLike
                ) -> DynamicVolume | LabelMap | ParametricVolume:
    """Read a `<base>.raw` + `<base>.json` pair back into a typed volume."""
    base = _base(path)
    sidecar = base + ".json"
    payload = base + ".raw"
    if not os.path.exists(sidecar):
        raise FormatError(f"missing sidecar {sidecar}")
    if not os.path.exists(payload):
        raise FormatError(f"missing payload {payload}")
    with open(sidecar) as fh:
        try:
            meta = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"unparseable sidecar {sidecar}: {exc}") from exc
    if meta.get("magic") != MAGIC:
        raise FormatError(f"{sidecar}: magic {meta.get('magic')!r} is not {MAGIC!r}")
    version = str(meta.get("format_version", ""))
    if version.split(".")[0] != FORMAT_VERSION.split(".")[0]:
        raise FormatError(
            f"{sidecar}: format version {version!r} is incompatible with "
            f"{FORMAT_VERSION!r}")
    try:
        dims = tuple(int(d) for d in meta["dims"])
        dtype = np.dtype(meta["dtype"])
        kind = meta["kind"]
        spacing = tuple(float(v) for v in meta["spacing_mm"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{sidecar}: bad or missing field ({exc})") from exc

    expected = int(np.prod(dims)) * dtype.itemsize
    actual = os.path.getsize(payload)
    if expected != actual:
        raise FormatError(
            f"{payload}: expected {expected} bytes for dims {list(dims)} "
            f"dtype {dtype.str}, found {actual}")
    arr = np.fromfile(payload, dtype=dtype).reshape(dims)

    if kind == "dynamic":
        try:
            fs = meta["frame_schedule"]
            schedule = FrameSchedule(np.asarray(fs["starts_s"], dtype=float),
                                     np.asarray(fs["durations_s"], dtype=float))
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"{sidecar}: bad frame_schedule ({exc})") from exc
        if schedule.n_frames != dims[0]:
            raise FormatError(
                f"{sidecar}: {dims[0]} frames in dims vs "
                f"{schedule.n_frames} in frame_schedule")
        return DynamicVolume(arr, schedule, spacing)
    if kind == "labels":
        legend = {int(k): str(v) for k, v in meta.get("legend", {}).items()}
        return LabelMap(arr, legend, spacing)
    if kind == "parametric":
        return ParametricVolume(arr, tuple(meta.get("channels", ())), spacing)
    raise FormatError(f"{sidecar}: unknown kind {kind!r}")


def write_idif(path: str | os.PathLike, input_function: InputFunction,
               schedule: FrameSchedule) -> None:
    """Write the input curve sampled at the frame mid-times."""
    mids = schedule.mid_times
    vals = input_function(mids)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frame_start_s", "duration_s", "activity_bq_ml"])
        for s, d, v in zip(schedule.starts, schedule.durations, vals):
            w.writerow([f"{s:.6g}", f"{d:.6g}", repr(float(v))])


def read_idif(path: str | os.PathLike) -> tuple[InputFunction, FrameSchedule]:
    """Parse an IDIF CSV into the input curve and its frame schedule.

    The curve's sample times are the frame mid-times. Validates the header,
    frame contiguity (monotone, gap-free times) and non-negative activity.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    rows = [r for r in rows if r and any(c.strip() for c in r)]
    if not rows:
        raise FormatError(f"{path}: empty IDIF file")
    header = [c.strip() for c in rows[0]]
    if header != ["frame_start_s", "duration_s", "activity_bq_ml"]:
        raise FormatError(f"{path}: unexpected header {header}")
    if len(rows) < 3:
        raise FormatError(f"{path}: need at least 2 frames")
    try:
        table = np.array([[float(c) for c in r] for r in rows[1:]])
    except ValueError as exc:
        raise FormatError(f"{path}: non-numeric row ({exc})") from exc
    starts, durs, vals = table.T
    if np.any(vals < 0):
        raise FormatError(f"{path}: negative activity values")
    try:
        schedule = FrameSchedule(starts, durs)
    except ValueError as exc:
        raise FormatError(f"{path}: bad frame times ({exc})") from exc
    return InputFunction(schedule.mid_times, vals), schedule


def write_tac_csv(path: str | os.PathLike, schedule: FrameSchedule,
                  tac: np.ndarray) -> None:
    """One modeled/measured TAC with its frame windows."""
    tac = np.asarray(tac, dtype=float)
    if tac.size != schedule.n_frames:
        raise ValueError(f"TAC length {tac.size} vs {schedule.n_frames} frames")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["frame_start_s", "duration_s", "activity_bq_ml"])
        for s, d, v in zip(schedule.starts, schedule.durations, tac):
            w.writerow([f"{s:.6g}", f"{d:.6g}", repr(float(v))])


def read_tac_csv(path: str | os.PathLike) -> tuple[np.ndarray, FrameSchedule]:
    """Inverse of write_tac_csv (same schema as the IDIF files)."""
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows or [c.strip() for c in rows[0]] != [
            "frame_start_s", "duration_s", "activity_bq_ml"]:
        raise FormatError(f"{path}: not a TAC CSV")
    table = np.array([[float(c) for c in r] for r in rows[1:]])
    schedule = FrameSchedule(table[:, 0], table[:, 1])
    return table[:, 2], schedule


def write_organ_report_csv(path: str | os.PathLike, report: OrganReport) -> None:
    """Schema: organ,label,n_voxels,{k1,k2,k3,vb}_{mean,std}[,mse,mae,cosine_similarity]."""
    have_tac = any(r.tac is not None for r in report)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        head = ["organ", "label", "n_voxels"]
        for ch in ("k1", "k2", "k3", "vb"):
            head += [f"{ch}_mean", f"{ch}_std"]
        if have_tac:
            head += ["mse", "mae", "cosine_similarity"]
        w.writerow(head)
        for r in report:
            row = [r.name, r.label, r.n_voxels]
            for k in range(4):
                row += [repr(float(r.mean[k])), repr(float(r.std[k]))]
            if have_tac:
                t = r.tac
                row += ["", "", ""] if t is None else \
                    [repr(t.mse), repr(t.mae), repr(t.cosine_similarity)]
            w.writerow(row)


def write_slice_profile_csv(path: str | os.PathLike,
                            profile: np.ndarray) -> None:
    """Schema: slice_index,cosine_similarity (NaN rows left empty)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["slice_index", "cosine_similarity"])
        for z, v in enumerate(np.asarray(profile, dtype=float)):
            w.writerow([z, "" if np.isnan(v) else repr(float(v))])


def write_tac_metrics_csv(path: str | os.PathLike, indices,
                          metrics: list[TacMetrics]) -> None:
    """Generic score table, one row per index (epoch, organ, slice...).

    Schema: index,mse,mae,cosine_similarity.
    """
    if len(list(indices)) != len(metrics):
        raise ValueError("indices and metrics must align")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "mse", "mae", "cosine_similarity"])
        for i, m in zip(indices, metrics):
            w.writerow([i, repr(m.mse), repr(m.mae), repr(m.cosine_similarity)])
