"""Bundled organ-level reference parameter tables.

Two estimation methods are shipped as versioned CSV assets: "dnn"
(voxel-wise network estimates averaged per VoI) and "curve_fit" (VoI-mean
TAC fit). The tables drive the default phantom presets and the agreement
checks in the eval CLI.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .kinetics import KineticParams

__all__ = ["OrganReference", "load_reference_params", "REFERENCE_TABLES"]

REFERENCE_TABLES = ("dnn", "curve_fit")


@dataclass(frozen=True)
class OrganReference:
    """One organ row: mean parameters plus their reported spread."""

    name: str
    label: int
    mean: KineticParams
    std: np.ndarray

    def __post_init__(self):
        std = np.asarray(self.std, dtype=np.float64)
        if std.shape != (4,) or np.any(std < 0):
            raise ValueError("std must be 4 non-negative values")
        std.flags.writeable = False
        object.__setattr__(self, "std", std)


def _parse_rows(lines) -> dict[str, OrganReference]:
    rows = [ln for ln in lines if ln.strip() and not ln.lstrip().startswith("#")]
    out: dict[str, OrganReference] = {}
    for rec in csv.DictReader(rows):
        name = rec["organ"].strip()
        mean = KineticParams(float(rec["k1_mean"]), float(rec["k2_mean"]),
                             float(rec["k3_mean"]), float(rec["vb_mean"]))
        std = np.array([float(rec["k1_std"]), float(rec["k2_std"]),
                        float(rec["k3_std"]), float(rec["vb_std"])])
        out[name] = OrganReference(name, int(rec["label"]), mean, std)
    return out


def load_reference_params(table: str = "dnn",
                          path: str | None = None) -> dict[str, OrganReference]:
    """Load a reference table by name, or any CSV in the same schema.

    The file schema is a header row
    organ,label,k1_mean,k1_std,k2_mean,k2_std,k3_mean,k3_std,vb_mean,vb_std
    preceded by optional '#' comment lines.
    """
    if path is not None:
        with open(path, "r", newline="") as fh:
            return _parse_rows(fh.readlines())
    if table not in REFERENCE_TABLES:
        raise ValueError(f"unknown table {table!r}; have {REFERENCE_TABLES}")
    text = resources.files("petkin.data").joinpath(
        f"reference_params_{table}.csv").read_text()
    return _parse_rows(text.splitlines())
