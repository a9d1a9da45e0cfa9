"""Batch front-end: ``cbrscoex --config scenario.yaml --command NAME --out DIR``.

Each run writes its result tables plus ``manifest.json`` (resolved config,
seed, version and a SHA-256 per output). Nothing time-dependent is written,
so a rerun with the same config and seed reproduces every byte.

Exit status: 0 on success (an infeasible allocation is a valid result),
2 on configuration errors, 1 on any other failure. Failures also leave a
machine-readable ``error.json`` in the output directory when possible.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import COMMANDS, ConfigError, RunSettings, build, load_resolved
from .interference import (
    analytic_sinr_cdf,
    monte_carlo_sinr_cdfs,
    protection_distance_sweep,
    sweep_csv,
    sweep_json,
    with_protection_distance,
)
from .power_control import (
    allocate_method1,
    allocate_method2,
    allocate_with_density,
    coverage_fraction,
    verify_allocation,
)
from .scenario import deployment_csv, generate_deployment, sectorize

log = logging.getLogger("cbrscoex")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="cbrscoex", description=__doc__.splitlines()[0])
    ap.add_argument("--config", required=True, metavar="PATH", help="scenario YAML file")
    ap.add_argument("--command", choices=COMMANDS, help="overrides 'command' in the config")
    ap.add_argument("--out", required=True, metavar="DIR", help="output directory (created if missing)")
    ap.add_argument("--seed", type=int, help="master seed for Monte Carlo trials")
    ap.add_argument("--trials", type=int)
    ap.add_argument("--r-min", type=float, nargs="+", metavar="KM", help="protection distance(s)")
    ap.add_argument("--r-target", type=float, nargs="+", metavar="KM", help="radar target range(s)")
    ap.add_argument("--fdr-db", type=float, help="constant FDR rejection; switches to adjacent-channel mode")
    ap.add_argument(
        "--i-th-dbm",
        type=float,
        help="interference ceiling: overrides the INR-derived value for sinr-sweep/cdf-single "
        "and the allocation threshold for allocate/density-plan/verify",
    )
    ap.add_argument("--sectors", type=int)
    ap.add_argument("--power-step-db", type=float)
    ap.add_argument("--method", type=int, choices=(1, 2))
    ap.add_argument("--workers", type=int)
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def apply_overrides(resolved: dict, args: argparse.Namespace) -> dict:
    if args.command:
        resolved["command"] = args.command
    sim, pc, ch = resolved["simulation"], resolved["power_control"], resolved["channel"]
    if args.seed is not None:
        sim["seed"] = args.seed
    if args.trials is not None:
        sim["trials"] = args.trials
    if args.workers is not None:
        sim["workers"] = args.workers
    if args.r_min is not None:
        sim["r_min_km"] = list(args.r_min)
    if args.r_target is not None:
        sim["target_ranges_km"] = list(args.r_target)
    if args.fdr_db is not None:
        ch["mode"] = "adjacent"
        ch["fdr_table"] = [[ch["fdr_offset_mhz"], args.fdr_db]]
    if args.i_th_dbm is not None:
        if resolved["command"] in ("sinr-sweep", "cdf-single"):
            resolved["radar"]["i_th_override_dbm"] = args.i_th_dbm
        else:
            pc["i_th_dbm"] = args.i_th_dbm
    if args.sectors is not None:
        pc["sectors"] = args.sectors
    if args.power_step_db is not None:
        pc["power_step_db"] = args.power_step_db
    if args.method is not None:
        pc["method"] = args.method
    return resolved


def _grid(s: RunSettings) -> np.ndarray:
    start, stop, step = s.grid
    n = int(round((stop - start) / step))
    return np.round(start + step * np.arange(n + 1), 10)


def _km(x: float) -> str:
    return f"{x:g}"


class Outputs:
    def __init__(self, root: Path):
        self.root = root
        self.written: dict[str, str] = {}

    def write(self, name: str, text: str):
        data = text.encode()
        (self.root / name).write_bytes(data)
        self.written[name] = hashlib.sha256(data).hexdigest()


def _meta(s: RunSettings) -> dict:
    return {"mode": s.mode.value, "seed": s.seed, "trials": s.trials}


def cmd_sinr_sweep(s: RunSettings, out: Outputs):
    rows = protection_distance_sweep(
        s.scenario,
        s.r_min_km,
        s.target_ranges_m,
        trials=s.trials,
        mode=s.mode,
        fdr=s.fdr,
        seed=s.seed,
        i_th_override_dbm=s.i_th_override_dbm,
        workers=s.workers,
        grid=_grid(s),
    )
    out.write("sweep.csv", sweep_csv(rows))
    out.write(
        "sweep.json",
        sweep_json(rows, target_ranges_km=[t / 1e3 for t in s.target_ranges_m], i_th_dbm=rows[0].distributions[0].i_th_dbm, **_meta(s)),
    )
    for row in rows:
        for dist in row.distributions:
            out.write(f"cdf_rmin{_km(row.r_min_km)}km_rt{_km(dist.target_range_m / 1e3)}km.csv", dist.to_csv())


def cmd_cdf_single(s: RunSettings, out: Outputs):
    scenario = with_protection_distance(s.scenario, s.r_min_km[0])
    target = s.target_ranges_m[0]
    (dist,) = monte_carlo_sinr_cdfs(
        scenario,
        [target],
        trials=s.trials,
        mode=s.mode,
        fdr=s.fdr,
        seed=s.seed,
        grid=_grid(s),
        i_th_override_dbm=s.i_th_override_dbm,
        workers=s.workers,
    )
    out.write("cdf.csv", dist.to_csv())
    out.write("cdf.json", dist.to_json())
    # analytic reference on one fixed deployment drawn from the deployment seed
    fixed = generate_deployment(scenario, s.deployment_seed)
    ana = analytic_sinr_cdf(fixed, target, _grid(s), s.mode, s.fdr, s.i_th_override_dbm)
    out.write("cdf_analytic.csv", ana.to_csv())


def _allocate(s: RunSettings):
    scenario = generate_deployment(with_protection_distance(s.scenario, s.r_min_km[0]), s.deployment_seed)
    scenario = sectorize(scenario, s.sectors)
    if s.method == 1:
        alloc = allocate_method1(scenario, s.power_i_th_dbm, s.power_step_db, s.mode, s.fdr)
    else:
        alloc = allocate_method2(scenario, s.power_i_th_dbm, s.power_step_db, s.mode, s.fdr)
    return scenario, alloc


def cmd_allocate(s: RunSettings, out: Outputs):
    scenario, alloc = _allocate(s)
    out.write("deployment.csv", deployment_csv(scenario))
    out.write("allocation.csv", alloc.to_csv(scenario))
    out.write("allocation.json", alloc.to_json(r_min_km=s.r_min_km[0], sectors=s.sectors, power_step_db=s.power_step_db))


def cmd_density_plan(s: RunSettings, out: Outputs):
    scenario = sectorize(with_protection_distance(s.scenario, s.r_min_km[0]), s.sectors)
    plan = allocate_with_density(scenario, s.power_i_th_dbm, s.power_step_db, s.coverage_budget(scenario), s.mode, s.fdr)
    covered = coverage_fraction(scenario, plan, s.coverage_samples, seed=s.seed)
    out.write("density_plan.csv", plan.to_csv())
    out.write(
        "density_plan.json",
        plan.to_json(
            r_min_km=s.r_min_km[0],
            power_step_db=s.power_step_db,
            coverage_fraction=[round(c, 6) for c in covered],
        ),
    )


def cmd_verify(s: RunSettings, out: Outputs):
    scenario, alloc = _allocate(s)
    out.write("allocation.csv", alloc.to_csv(scenario))
    if not alloc.feasible:
        doc = {"feasible": False, "i_th_dbm": alloc.i_th_dbm, "bootstrap_i_agg_dbm": round(alloc.achieved_i_agg_dbm, 6)}
        out.write("verification.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")
        return
    report = verify_allocation(scenario, alloc, s.trials, s.seed, s.mode, s.fdr, s.workers)
    out.write("verification.json", report.to_json(feasible=True, method=alloc.method.value, r_min_km=s.r_min_km[0]))


HANDLERS = {
    "sinr-sweep": cmd_sinr_sweep,
    "cdf-single": cmd_cdf_single,
    "allocate": cmd_allocate,
    "density-plan": cmd_density_plan,
    "verify": cmd_verify,
}


def _fail(out_dir: Path | None, record: dict, status: int) -> int:
    text = json.dumps(record, indent=2, sort_keys=True) + "\n"
    sys.stderr.write(text)
    if out_dir is not None:
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
            (out_dir / "error.json").write_text(text)
        except OSError:
            pass
    return status


def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    out_dir = Path(args.out)
    try:
        resolved = apply_overrides(load_resolved(args.config), args)
        if resolved["command"] is None:
            raise ConfigError("no command given (use --command or a top-level 'command' key)", "command")
        settings = build(resolved)
    except ConfigError as exc:
        return _fail(out_dir, exc.to_record(), 2)

    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        stale = out_dir / "error.json"
        if stale.exists():
            stale.unlink()
        out = Outputs(out_dir)
        HANDLERS[settings.command](settings, out)
        manifest = {
            "tool": "cbrscoex",
            "version": __version__,
            "command": settings.command,
            "seed": settings.seed,
            "trials": settings.trials,
            "config": resolved,
            "outputs": out.written,
        }
        (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    except Exception as exc:  # reported as a structured record, not a traceback
        log.debug("command failed", exc_info=True)
        return _fail(out_dir, {"error": "runtime", "type": type(exc).__name__, "message": str(exc)}, 1)
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
