"""Command-line interface.

Subcommands: simulate (phantom dataset), tacgen (model TAC from parameters),
fit (voxel-wise or VoI parameter estimation), patlak (graphical Ki map) and
eval (reports against ground truth / reference tables). Every artifact one
subcommand writes is readable by the consumer subcommands. Exit status is 0
on success, 1 on runtime errors (diagnostic on stderr), 2 on usage errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time

import numpy as np

from .fitting import FitConfig, fit_voi, fit_voxelwise, patlak_map
from .kinetics import FrameSchedule, KineticParams, wb_fdg_schedule
from .metrics import organ_aggregate, per_slice_cs
from .phantom import (
    InputFunctionModel,
    NoiseModel,
    OrganRegion,
    PhantomSpec,
    build_phantom,
    default_input_model,
    default_phantom_spec,
    synth_input,
)
from .reference import REFERENCE_TABLES, load_reference_params
from .volumes import DynamicVolume, LabelMap, ParametricVolume
from . import dataio


def _load_phantom_config(path: str | None, seed: int | None,
                         noise_kind: str | None = None,
                         noise_level: float | None = None
                         ) -> tuple[PhantomSpec, InputFunctionModel, FrameSchedule]:
    """Declarative phantom config (JSON). Every key is optional:

    {"dims": [32,64,64], "spacing_mm": [2.5,2.5,2.5], "seed": 0,
     "noise": {"kind": "none|gaussian-fraction|scaled-poisson", "level": 0.05},
     "schedule": {"durations_s": [...]},
     "input_function": {"a1":..,"a2":..,"a3":..,"l1":..,"l2":..,"l3":..,"t0_s":..},
     "preset_table": "dnn",
     "organs": [{"label":1,"name":"liver","shape":"ellipsoid",
                 "center":[z,y,x],"semi_axes":[z,y,x],
                 "params":[k1,k2,k3,vb]}, ...]}
    """
    cfg: dict = {}
    if path:
        with open(path) as fh:
            cfg = json.load(fh)
    if noise_kind is not None:
        cfg.setdefault("noise", {})
        cfg["noise"]["kind"] = noise_kind
    if noise_level is not None:
        cfg.setdefault("noise", {"kind": "gaussian-fraction"})
        cfg["noise"]["level"] = noise_level

    schedule = wb_fdg_schedule()
    if "schedule" in cfg:
        schedule = FrameSchedule.from_durations(cfg["schedule"]["durations_s"])
    model = (InputFunctionModel(**cfg["input_function"])
             if "input_function" in cfg else default_input_model())

    noise = NoiseModel(**cfg.get("noise", {"kind": "none", "level": 0.05}))
    use_seed = seed if seed is not None else int(cfg.get("seed", 0))

    if "organs" in cfg:
        organs = tuple(
            OrganRegion(int(o["label"]), o["name"], o.get("shape", "ellipsoid"),
                        tuple(o["center"]), tuple(o["semi_axes"]),
                        KineticParams(*o["params"]))
            for o in cfg["organs"])
        spec = PhantomSpec(dims=tuple(cfg.get("dims", (32, 64, 64))),
                           spacing_mm=tuple(cfg.get("spacing_mm", (2.5,) * 3)),
                           organs=organs, noise=noise, seed=use_seed)
    else:
        base = default_phantom_spec(noise=noise, seed=use_seed)
        spec = PhantomSpec(dims=tuple(cfg.get("dims", base.dims)),
                           spacing_mm=tuple(cfg.get("spacing_mm", base.spacing_mm)),
                           organs=base.organs, noise=noise, seed=use_seed)
    return spec, model, schedule


def _cmd_simulate(args) -> int:
    spec, model, schedule = _load_phantom_config(args.config, args.seed,
                                                 args.noise, args.noise_level)
    aif = synth_input(model, schedule, args.fine_step_s)
    vol, labels, truth = build_phantom(spec, aif, schedule, args.fine_step_s)
    os.makedirs(args.out, exist_ok=True)
    dataio.write_volume(os.path.join(args.out, "dynamic"), vol)
    dataio.write_volume(os.path.join(args.out, "labels"), labels)
    dataio.write_volume(os.path.join(args.out, "truth"), truth)
    dataio.write_idif(os.path.join(args.out, "idif.csv"), aif, schedule)
    n_lab = int(np.count_nonzero(labels.labels))
    print(f"wrote dataset to {args.out}: dims {spec.dims}, "
          f"{schedule.n_frames} frames, {n_lab} labeled voxels, "
          f"noise {spec.noise.kind}, seed {spec.seed}")
    return 0


def _params_from_args(args) -> KineticParams:
    if args.preset:
        table = load_reference_params(args.table)
        if args.preset not in table:
            raise ValueError(
                f"unknown preset {args.preset!r}; have {sorted(table)}")
        return table[args.preset].mean
    vals = (args.k1, args.k2, args.k3, args.vb)
    if any(v is None for v in vals):
        raise ValueError("give --preset or all of --k1 --k2 --k3 --vb")
    return KineticParams(*vals)


def _cmd_tacgen(args) -> int:
    params = _params_from_args(args)
    if args.idif:
        aif, schedule = dataio.read_idif(args.idif)
    else:
        schedule = wb_fdg_schedule()
        aif = synth_input(default_input_model(), schedule, args.fine_step_s)
    from .kinetics import model_tac
    tac = model_tac(params, aif, schedule, args.fine_step_s)
    if args.out:
        dataio.write_tac_csv(args.out, schedule, tac)
        print(f"wrote {tac.size}-frame TAC to {args.out}")
    else:
        for v in tac:
            print(repr(float(v)))
    return 0


def _fit_config(args) -> FitConfig:
    kw = dict(engine=args.engine, fine_step_s=args.fine_step_s)
    if args.bounds == "clamp":
        return FitConfig.clamp_box(**kw)
    return FitConfig(**kw)


def _cmd_fit(args) -> int:
    vol = dataio.read_volume(args.volume)
    if not isinstance(vol, DynamicVolume):
        raise ValueError(f"{args.volume} is not a dynamic volume")
    aif, _ = dataio.read_idif(args.idif)
    cfg = _fit_config(args)
    mask = None
    if args.mask:
        mask = dataio.read_volume(args.mask)
        if not isinstance(mask, LabelMap):
            raise ValueError(f"{args.mask} is not a label map")

    if args.voi is not None:
        if mask is None:
            raise ValueError("--voi needs --mask")
        res = fit_voi(vol, mask, args.voi, aif, cfg)
        payload = {
            "label": args.voi,
            "organ": mask.legend.get(args.voi, str(args.voi)),
            "params": {"k1": res.params.k1, "k2": res.params.k2,
                       "k3": res.params.k3, "vb": res.params.vb},
            "mse": res.cost, "converged": res.converged,
            "iterations": res.iterations, "at_bounds": list(res.at_bounds),
        }
        text = json.dumps(payload, indent=2)
        print(text)
        if args.out:
            with open(args.out, "w") as fh:
                fh.write(text + "\n")
        return 0

    t0 = time.time()
    pv = fit_voxelwise(vol, aif, cfg, mask=mask, workers=args.threads)
    n = int(np.count_nonzero(mask.labels)) if mask is not None \
        else int(np.prod(vol.spatial_shape))
    if not args.out:
        raise ValueError("voxel-wise fit needs --out")
    dataio.write_volume(args.out, pv)
    print(f"fitted {n} voxels in {time.time() - t0:.1f} s "
          f"({args.engine}, {args.bounds} bounds) -> {args.out}")
    return 0


def _cmd_patlak(args) -> int:
    vol = dataio.read_volume(args.volume)
    if not isinstance(vol, DynamicVolume):
        raise ValueError(f"{args.volume} is not a dynamic volume")
    aif, _ = dataio.read_idif(args.idif)
    mask = None
    if args.mask:
        mask = dataio.read_volume(args.mask)
    pv = patlak_map(vol, aif, args.t_star, mask=mask)
    dataio.write_volume(args.out, pv)
    print(f"wrote Patlak map (ki, intercept, r_squared) -> {args.out}")
    return 0


def _cmd_eval(args) -> int:
    pv = dataio.read_volume(args.params)
    labels = dataio.read_volume(args.mask)
    if not isinstance(pv, ParametricVolume) or not isinstance(labels, LabelMap):
        raise ValueError("--params must be parametric, --mask a label map")
    os.makedirs(args.out_dir, exist_ok=True)

    vol = aif = None
    if args.volume:
        if not args.idif:
            raise ValueError("--volume needs --idif to reconstruct TACs")
        vol = dataio.read_volume(args.volume)
        aif, _ = dataio.read_idif(args.idif)

    report = organ_aggregate(pv, labels, vol, aif)
    dataio.write_organ_report_csv(os.path.join(args.out_dir, "organ_params.csv"),
                                  report)
    lines = [f"{'organ':<10} {'n':>6}  " + "  ".join(
        f"{c:>9}" for c in ("k1", "k2", "k3", "vb"))]
    for r in report:
        lines.append(f"{r.name:<10} {r.n_voxels:>6}  "
                     + "  ".join(f"{r.mean[k]:9.4f}" for k in range(4)))

    if vol is not None:
        profile = per_slice_cs(vol, pv, aif, mask=labels, strict=False)
        dataio.write_slice_profile_csv(
            os.path.join(args.out_dir, "per_slice_cs.csv"), profile)
        ok = profile[~np.isnan(profile)]
        if ok.size:
            lines.append(f"per-slice CS: min {ok.min():.3f} "
                         f"max {ok.max():.3f} over {ok.size} slices")

    def error_rows(ref_means, source):
        rows = []
        for r in report:
            ref = ref_means.get(r.name)
            if ref is None:
                continue
            for k, ch in enumerate(("k1", "k2", "k3", "vb")):
                est, true = float(r.mean[k]), float(ref[k])
                abs_err = abs(est - true)
                rel_err = abs_err / abs(true) if true else float("inf")
                tol_ok = (abs_err <= args.vb_tol) if ch == "vb" \
                    else (rel_err <= args.rel_tol)
                rows.append([r.name, r.label, ch, repr(est), repr(true),
                             repr(abs_err), repr(rel_err), int(tol_ok), source])
        return rows

    header = ["organ", "label", "channel", "estimated_mean", "reference_mean",
              "abs_error", "rel_error", "within_tol", "reference"]
    if args.truth:
        truth = dataio.read_volume(args.truth)
        truth_report = organ_aggregate(truth, labels)
        ref_means = {r.name: r.mean for r in truth_report}
        rows = error_rows(ref_means, "ground_truth")
        import csv as _csv
        with open(os.path.join(args.out_dir, "param_errors.csv"), "w",
                  newline="") as fh:
            w = _csv.writer(fh)
            w.writerow(header)
            w.writerows(rows)
        worst = max((float(r[6]) for r in rows if r[2] == "k1"), default=0.0)
        n_bad = sum(1 for r in rows if not r[7])
        lines.append(f"vs ground truth: worst organ k1 rel err {worst:.2%}, "
                     f"{n_bad}/{len(rows)} channel checks outside tolerance")

    if args.reference:
        table = (load_reference_params(args.reference)
                 if args.reference in REFERENCE_TABLES
                 else load_reference_params(path=args.reference))
        ref_means = {name: ref.mean.as_array() for name, ref in table.items()}
        rows = error_rows(ref_means, f"reference:{args.reference}")
        import csv as _csv
        with open(os.path.join(args.out_dir, "reference_agreement.csv"), "w",
                  newline="") as fh:
            w = _csv.writer(fh)
            w.writerow(header)
            w.writerows(rows)
        n_bad = sum(1 for r in rows if not r[7])
        lines.append(f"vs {args.reference} table: {n_bad}/{len(rows)} channel "
                     "checks outside tolerance")

    print("\n".join(lines))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="petkin",
        description="Compartment-model kinetics toolkit for dynamic PET")
    sub = p.add_subparsers(dest="command", required=True)

    def add_fine_step(q):
        q.add_argument("--fine-step-s", type=float, default=1.0,
                       help="internal model grid step in seconds (default 1)")

    q = sub.add_parser("simulate", help="generate a synthetic phantom dataset")
    q.add_argument("--out", required=True, help="output directory")
    q.add_argument("--config", help="phantom config JSON (see docs)")
    q.add_argument("--seed", type=int, default=None,
                   help="override the config seed")
    q.add_argument("--noise", choices=("none", "gaussian-fraction",
                                       "scaled-poisson"), default=None,
                   help="override the config noise kind")
    q.add_argument("--noise-level", type=float, default=None,
                   help="override the config noise level")
    add_fine_step(q)
    q.set_defaults(func=_cmd_simulate)

    q = sub.add_parser("tacgen", help="model TAC for given parameters")
    q.add_argument("--preset", help="organ preset name (e.g. liver)")
    q.add_argument("--table", default="dnn", choices=list(REFERENCE_TABLES),
                   help="reference table for --preset")
    q.add_argument("--k1", type=float)
    q.add_argument("--k2", type=float)
    q.add_argument("--k3", type=float)
    q.add_argument("--vb", type=float)
    q.add_argument("--idif", help="IDIF CSV (default: synthetic curve)")
    q.add_argument("--out", help="TAC CSV path (default: print values)")
    add_fine_step(q)
    q.set_defaults(func=_cmd_tacgen)

    q = sub.add_parser("fit", help="voxel-wise or VoI parameter estimation")
    q.add_argument("--volume", required=True, help="dynamic volume (.raw)")
    q.add_argument("--idif", required=True, help="IDIF CSV")
    q.add_argument("--out", help="output parametric volume (.raw)")
    q.add_argument("--mask", help="label map (.raw); restricts fitting")
    q.add_argument("--voi", type=int, default=None,
                   help="fit the mean TAC of this label instead of voxels")
    q.add_argument("--bounds", choices=("paper", "clamp"), default="paper",
                   help="curve-fit protocol bounds or the clamp box")
    q.add_argument("--engine", choices=("lm", "trf"), default="lm")
    q.add_argument("--threads", type=int, default=1)
    add_fine_step(q)
    q.set_defaults(func=_cmd_fit)

    q = sub.add_parser("patlak", help="voxel-wise graphical Ki map")
    q.add_argument("--volume", required=True)
    q.add_argument("--idif", required=True)
    q.add_argument("--out", required=True)
    q.add_argument("--t-star", type=float, default=1200.0,
                   help="linear-regime start time in seconds (default 1200)")
    q.add_argument("--mask")
    q.set_defaults(func=_cmd_patlak)

    q = sub.add_parser("eval", help="organ reports and agreement checks")
    q.add_argument("--params", required=True, help="parametric volume (.raw)")
    q.add_argument("--mask", required=True, help="label map (.raw)")
    q.add_argument("--out-dir", required=True)
    q.add_argument("--truth", help="ground-truth parametric volume (.raw)")
    q.add_argument("--volume", help="dynamic volume for TAC metrics")
    q.add_argument("--idif", help="IDIF CSV for TAC metrics")
    q.add_argument("--reference", help="bundled table name or CSV path")
    q.add_argument("--rel-tol", type=float, default=0.10,
                   help="relative agreement tolerance for k1/k2/k3")
    q.add_argument("--vb-tol", type=float, default=0.05,
                   help="absolute agreement tolerance for vb")
    q.set_defaults(func=_cmd_eval)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # argparse handles usage errors itself
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
