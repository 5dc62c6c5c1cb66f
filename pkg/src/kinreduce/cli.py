"""Batch front door: reduce / reference / audit / estimate.

Exit codes: 0 success (audit failures are *reported*, not fatal),
2 configuration or input mismatch, 3 runtime solver error.
Given identical configs the data outputs are byte-identical across
runs; manifests additionally carry wall-clock timings.
"""

from __future__ import annotations

import argparse
import json
import sys
import time as _time
from pathlib import Path

import numpy as np

from . import io as kio
from .ansatz import ConservativeMoment
from .config import ScenarioConfig, load_config
from .errors import ConfigurationError, KinReduceError, ParameterError
from .error_estimator import (
    actual_error,
    gronwall_bound,
    lipschitz_estimate,
    residual_norm_series,
)
from .kinetic import CollisionModel, MomentState
from .reduced_solver import ReducedTrajectory, run_reduced
from .reference_solver import run_reference
from .stability import (
    HermiteSpace,
    assemble_yong_report,
    gusc_check,
    hyperbolicity_audit,
    linearized_collision_matrix,
    propagation_speed_audit,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _config_hash(cfg: ScenarioConfig) -> str:
    return kio.sha256_text(json.dumps(cfg.raw, sort_keys=True, separators=(",", ":")))


def _manifest(cfg, out_dir: Path, outputs: list[str], timings: dict, extra=None) -> None:
    chash = _config_hash(cfg)
    payload = {
        "config": cfg.raw,
        "config_sha256": chash,
        "outputs": {
            name: {"sha256": kio.sha256_file(out_dir / name), "config_sha256": chash}
            for name in outputs
        },
        "timings_seconds": timings,
    }
    if extra:
        payload.update(extra)
    kio.write_json(out_dir / "manifest.json", payload)


def cmd_reduce(cfg: ScenarioConfig, out_dir: Path) -> int:
    t0 = _time.perf_counter()
    traj = run_reduced(
        cfg.manifold(),
        cfg.model(),
        cfg.initial_field(),
        cfg.final_time,
        cfl=cfg.cfl,
        output_interval=cfg.output_interval,
    )
    elapsed = _time.perf_counter() - t0
    header = ["time", *traj.moment_labels, "entropy"]
    rows = [
        [traj.times[i], *traj.moment_totals[i], traj.entropy[i]]
        for i in range(traj.times.size)
    ]
    kio.write_csv(out_dir / "trajectory.csv", header, rows)
    kio.write_snapshots(
        out_dir / "omega_snapshots.bin", traj.omegas, traj.grid.half_width, traj.mesh.dx
    )
    _manifest(
        cfg,
        out_dir,
        ["trajectory.csv", "omega_snapshots.bin"],
        {"solve": elapsed},
        extra={
            "kind": "reduce",
            "times": [format(t, ".17g") for t in traj.times],
            "mesh": {"cells": traj.mesh.cells, "length": traj.mesh.length},
            "velocity_grid": {
                "half_width": traj.grid.half_width,
                "nodes": len(traj.grid),
            },
        },
    )
    return EXIT_OK


def cmd_reference(cfg: ScenarioConfig, out_dir: Path) -> int:
    t0 = _time.perf_counter()
    traj = run_reference(
        cfg.model(),
        cfg.initial_field(),
        cfg.final_time,
        cfl=cfg.cfl,
        output_interval=cfg.output_interval,
    )
    elapsed = _time.perf_counter() - t0
    header = ["time", "c0", "c1", "c2", "entropy"]
    rows = [
        [traj.times[i], *traj.moment_totals[i], traj.entropy[i]]
        for i in range(traj.times.size)
    ]
    kio.write_csv(out_dir / "trajectory.csv", header, rows)
    kio.write_snapshots(
        out_dir / "snapshots.bin", traj.snapshots, traj.grid.half_width, traj.mesh.dx
    )
    _manifest(
        cfg,
        out_dir,
        ["trajectory.csv", "snapshots.bin"],
        {"solve": elapsed},
        extra={
            "kind": "reference",
            "times": [format(t, ".17g") for t in traj.times],
            "mesh": {"cells": traj.mesh.cells, "length": traj.mesh.length},
            "velocity_grid": {
                "half_width": traj.grid.half_width,
                "nodes": len(traj.grid),
            },
        },
    )
    return EXIT_OK


def cmd_audit(cfg: ScenarioConfig, out_dir: Path) -> int:
    t0 = _time.perf_counter()
    manifold = cfg.manifold()
    grid = cfg.grid()
    hyp = hyperbolicity_audit(manifold, cfg.audit_samples, grid, seed=cfg.audit_seed)
    speed = propagation_speed_audit(manifold, cfg.audit_samples, grid, seed=cfg.audit_seed)

    gusc = {}
    for kind in ("bgk", "shakhov", "esbgk"):
        dim = cfg.audit_dimension
        prandtl = cfg.prandtl
        if kind == "esbgk":
            prandtl = max(prandtl, (dim - 1) / dim + 1e-9)
        model = CollisionModel(kind=kind, tau=cfg.tau, prandtl=prandtl)
        space = HermiteSpace(dim, cfg.audit_max_degree)
        D = linearized_collision_matrix(model, space)
        lam = min(prandtl, 1.0) / cfg.tau if kind != "bgk" else 1.0 / cfg.tau
        if cfg.audit_lambda_claim is not None and kind == cfg.collision_kind:
            lam = cfg.audit_lambda_claim
        rep = gusc_check(D, space.w0_projector(), lam)
        gusc[kind] = {
            "worst_quotient": rep.worst_quotient,
            "lambda_claim": rep.lambda_claim,
            "pass": rep.passed,
            "gwsc_pass": rep.gwsc_passed,
            "kernel_defect": rep.kernel_defect,
        }

    yong = assemble_yong_report(manifold, cfg.model(), grid)
    payload = {
        "hyperbolicity": {
            "samples": hyp.samples,
            "max_asymmetry": hyp.max_asymmetry,
            "pass": hyp.passed,
        },
        "speed": {
            "max_radius": speed.max_radius,
            "L": speed.bound,
            "margin": speed.margin,
            "pass": speed.passed,
        },
        "gusc": gusc,
        "yong": {
            "block_defect": yong.block_defect,
            "block_pass": yong.block_passed,
            "symmetry_defect": yong.symmetry_defect,
            "symmetry_pass": yong.symmetry_passed,
            "dissipativity_constant": yong.dissipativity_constant,
            "dissipativity_pass": yong.dissipativity_passed,
            "gwsc_pass": yong.gwsc_passed,
        },
        "config_sha256": _config_hash(cfg),
        "timings_seconds": {"audit": _time.perf_counter() - t0},
    }
    kio.write_json(out_dir / "stability.json", payload)
    return EXIT_OK


def _load_reduce_outputs(reduce_dir: Path):
    manifest = json.loads((reduce_dir / "manifest.json").read_text(encoding="utf-8"))
    if manifest.get("kind") != "reduce":
        raise ParameterError(f"{reduce_dir} does not hold reduce outputs")
    omegas, half_width, dx = kio.read_snapshots(reduce_dir / "omega_snapshots.bin")
    return manifest, omegas, half_width, dx


def _load_reference_outputs(ref_dir: Path):
    manifest = json.loads((ref_dir / "manifest.json").read_text(encoding="utf-8"))
    if manifest.get("kind") != "reference":
        raise ParameterError(f"{ref_dir} does not hold reference outputs")
    snaps, half_width, dx = kio.read_snapshots(ref_dir / "snapshots.bin")
    return manifest, snaps, half_width, dx


def cmd_estimate(reduce_dir: Path, ref_dir: Path, out_dir: Path) -> int:
    from .config import parse_config
    from .kinetic import SpatialMesh
    from .reference_solver import KineticTrajectory

    red_man, omegas, r_hw, r_dx = _load_reduce_outputs(reduce_dir)
    ref_man, snaps, f_hw, f_dx = _load_reference_outputs(ref_dir)
    red_cfg = parse_config(red_man["config"])
    ref_cfg = parse_config(ref_man["config"])
    if red_man["mesh"] != ref_man["mesh"] or red_man["velocity_grid"] != ref_man["velocity_grid"]:
        raise ParameterError("reduce/reference manifests describe different grids")
    times_red = np.array([float(t) for t in red_man["times"]])
    times_ref = np.array([float(t) for t in ref_man["times"]])
    if times_red.shape != times_ref.shape or not np.allclose(
        times_red, times_ref, rtol=0.0, atol=1e-10
    ):
        raise ParameterError("reduce/reference output times do not match")

    manifold = red_cfg.manifold()
    grid = red_cfg.grid()
    mesh = SpatialMesh(cells=red_man["mesh"]["cells"], length=red_man["mesh"]["length"])
    model = red_cfg.model()
    traj = ReducedTrajectory(
        manifold=manifold,
        grid=grid,
        mesh=mesh,
        times=times_red,
        omegas=omegas,
        moment_totals=np.zeros((times_red.size, 1)),
        entropy=np.zeros(times_red.size),
        model=model,
    )
    ref = KineticTrajectory(
        grid=grid,
        mesh=mesh,
        times=times_ref,
        snapshots=snaps,
        moment_totals=np.zeros((times_ref.size, 1)),
        entropy=np.zeros(times_ref.size),
    )
    p = red_cfg.p
    res = residual_norm_series(traj, model, p)
    act = actual_error(traj, ref, p)
    samples = [MomentState(rho=1.0, u=0.0, theta=1.0)]
    mid = omegas.shape[0] // 2
    if isinstance(manifold, ConservativeMoment):
        for t_idx in (0, mid, omegas.shape[0] - 1):
            vals = manifold.values_batch(omegas[t_idx, 0], grid.nodes)[0]
            wts = grid.weights
            rho = float(vals @ wts)
            u = float(vals @ (grid.nodes * wts)) / rho
            th = float(vals @ ((grid.nodes - u) ** 2 * wts)) / rho
            samples.append(MomentState(rho=rho, u=u, theta=th))
    lip = lipschitz_estimate(model, samples, grid=grid, p=p, seed=red_cfg.audit_seed)
    bound = gronwall_bound(act[0], times_red, res, lip)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(act > 0, bound / act, np.inf)

    kio.write_csv(
        out_dir / "error.csv",
        ["time", "residual_norm", "bound", "actual", "ratio"],
        [
            [times_red[i], res[i], bound[i], act[i], ratio[i]]
            for i in range(times_red.size)
        ],
    )
    kio.write_json(
        out_dir / "error_summary.json",
        {
            "p": p,
            "lipschitz": lip,
            "lipschitz_kind": "empirical",
            "bound_final": float(bound[-1]),
            "actual_final": float(act[-1]),
            "dominated": bool(np.all(act <= bound * (1.0 + 1e-12))),
            "reduce_config_sha256": red_man["config_sha256"],
            "reference_config_sha256": ref_man["config_sha256"],
        },
    )
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="kinreduce",
        description="reduced kinetic moment models: runs, audits and error bounds",
    )
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_ in (
        ("reduce", "integrate the reduced moment system"),
        ("reference", "integrate the discrete-velocity reference solver"),
        ("audit", "run the stability audits"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="scenario JSON path")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--threads", type=int, default=0, help="0 = auto")
    p = sub.add_parser("estimate", help="a posteriori error report from two runs")
    p.add_argument("--reduce-dir", required=True, help="directory with reduce outputs")
    p.add_argument("--reference-dir", required=True, help="directory with reference outputs")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--threads", type=int, default=0, help="0 = auto")
    return ap


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.threads < 0:
        print("error: --threads must be >= 0", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = Path(args.out)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"error: cannot create output directory: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command == "estimate":
            reduce_dir = Path(args.reduce_dir)
            ref_dir = Path(args.reference_dir)
            for d in (reduce_dir, ref_dir):
                if not (d / "manifest.json").is_file():
                    print(f"error: missing manifest in {d}", file=sys.stderr)
                    return EXIT_CONFIG
            try:
                return cmd_estimate(reduce_dir, ref_dir, out_dir)
            except (ParameterError, ConfigurationError, OSError, KeyError) as exc:
                print(f"error: {exc}", file=sys.stderr)
                return EXIT_CONFIG
        cfg = load_config(args.config)
        if args.command == "reduce":
            return cmd_reduce(cfg, out_dir)
        if args.command == "reference":
            return cmd_reference(cfg, out_dir)
        return cmd_audit(cfg, out_dir)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except KinReduceError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
