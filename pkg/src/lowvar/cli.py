"""Command-line entry point: ``lowvar {filter,oracle,sweep,validate} --config FILE``.

Exit codes: 0 success, 1 unexpected failure (or no sweep row succeeded),
2 configuration error, 3 norm collapse, 4 infeasible parameters,
5 size guard, 6 evolution error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .diagnostics import (
    SweepPlan,
    config_hash,
    entropy_vs_bond_report,
    fit_power_law,
    initial_state,
    run_sweep,
    write_csv,
)
from .evolution import EvolutionError
from .filter import (
    FilterParams,
    InfeasibleParams,
    NormCollapse,
    apply_filter_mps,
    default_y,
    suggest_params,
)
from .hamiltonian import MAX_DENSE_SITES, HamiltonianSpec, build_mpo
from .mps import MpsState, expectation, mpo_product, product_state, save_tensor_train
from .oracle import (
    berry_esseen_error,
    characteristic_function,
    diagonalize,
    exact_filtered_moments,
)
from .tensor import TruncationPolicy

log = logging.getLogger("lowvar")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_COLLAPSE = 3
EXIT_INFEASIBLE = 4
EXIT_SIZE = 5
EXIT_EVOLUTION = 6

ENV_OUT = "LOWVAR_OUT"


class SizeGuard(ValueError):
    pass


def _header(cfg: RunConfig, schema: str) -> dict:
    # the thread count never changes results, so it stays out of the hash
    settings = {k: v for k, v in cfg.to_dict().items() if k != "threads"}
    return {"config_hash": config_hash(settings), "version": __version__, "schema": schema}


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n")


def _build_state(cfg: RunConfig) -> MpsState:
    if cfg.state_kind == "custom":
        return product_state([np.array(v, dtype=np.complex128) for v in cfg.state_vectors])
    return initial_state(cfg.n_sites, cfg.state_kind, cfg.seed)


def _energy_stats(psi: MpsState, spec: HamiltonianSpec):
    H = build_mpo(spec)
    mean = expectation(psi, H).real
    second = expectation(psi, mpo_product(H, H)).real
    return mean, math.sqrt(max(second - mean * mean, 0.0))


def _filter_params(cfg: RunConfig, mean: float, sigma: float) -> FilterParams:
    n = cfg.n_sites
    E = mean if cfg.E_center is None else cfg.E_center
    if cfg.target_delta is not None:
        p = suggest_params(n, cfg.target_delta, cfg.zeta_hint, E_center=E, epsilon_total=cfg.epsilon_total,
                           s_ratio=sigma / math.sqrt(n), s_floor=cfg.s_floor)
        y = p.y if cfg.y is None else cfg.y
        return FilterParams(p.M, y, E, cfg.epsilon_total, cfg.denominator)
    M = cfg.M
    if cfg.zeta_hint is not None and M > n / cfg.zeta_hint ** 2:
        raise InfeasibleParams(f"M={M} exceeds the Berry-Esseen ceiling N/zeta^2={n / cfg.zeta_hint ** 2:.4g}")
    y = default_y(n, n / math.sqrt(M)) if cfg.y is None else cfg.y
    return FilterParams(M, y, E, cfg.epsilon_total, cfg.denominator)


def _summary_lines(report, ent) -> list:
    return [
        f"mu        = {report.mu:.12g}",
        f"delta2    = {report.delta2:.12g}",
        f"log_norm  = {report.log_norm:.12g}",
        f"max_bond  = {report.max_bond}",
        f"bound     = {report.error_bound:.3g} (epsilon_total {report.params['epsilon_total']:.3g})",
        f"S1_max    = {ent.max_entropy():.12g}",
        f"S1 by cut = {', '.join(f'{s:.6g}' for s in ent.S1)}",
        f"S2 by cut = {', '.join(f'{s:.6g}' for s in ent.S2)}",
    ]


def cmd_filter(cfg: RunConfig, out: Path) -> int:
    if not cfg.has_filter:
        raise ConfigError("filter", "section missing")
    spec = cfg.spec
    psi = _build_state(cfg)
    mean, sigma = _energy_stats(psi, spec)
    params = _filter_params(cfg, mean, sigma)
    t0 = time.perf_counter()
    try:
        state, report = apply_filter_mps(psi, params, spec, cfg.policy, route=cfg.route, method=cfg.method,
                                         threads=cfg.threads)
    except NormCollapse as exc:
        if exc.report is not None:
            _dump(out / "report.json", {"header": _header(cfg, "filter-report/1"),
                                        "report": exc.report.to_dict(timings=False)})
        raise
    ent = entropy_vs_bond_report(state)
    body = {"header": _header(cfg, "filter-report/1"), "report": report.to_dict(timings=False),
            "input": {"mean": mean, "sigma": sigma, "s_ratio": sigma / math.sqrt(cfg.n_sites)},
            "entropy": ent.to_dict()}
    if "json" in cfg.formats:
        _dump(out / "report.json", body)
    if "checkpoint" in cfg.formats:
        save_tensor_train(out / "state.lvtt", state)
    if "csv" in cfg.formats:
        rows = [{"cut": c, "bond_dim": d, "S1": s1, "S2": s2, "slack": sl}
                for c, d, s1, s2, sl in zip(ent.cuts, ent.bond_dims, ent.S1, ent.S2, ent.slack)]
        write_csv(out / "entropy.csv", ["cut", "bond_dim", "S1", "S2", "slack"], rows,
                  _header(cfg, "entropy/1"))
    lines = _summary_lines(report, ent)
    (out / "summary.txt").write_text("\n".join(lines) + "\n")
    _dump(out / "timings.json", {**report.timings, "total": time.perf_counter() - t0})
    print("\n".join(lines))
    return EXIT_OK


def cmd_oracle(cfg: RunConfig, out: Path) -> int:
    if cfg.n_sites > MAX_DENSE_SITES:
        raise SizeGuard(f"oracle limited to N <= {MAX_DENSE_SITES}, got {cfg.n_sites}")
    spec = cfg.spec
    psi = _build_state(cfg)
    data = diagonalize(spec, psi)
    zeta, where = berry_esseen_error(data)
    meta = _header(cfg, "spectrum/1")
    data.write_csv(out / "spectrum.csv", meta)
    summary = {"header": _header(cfg, "oracle/1"), "n_sites": cfg.n_sites, "mean": data.mean,
               "std_dev": data.std_dev, "s_ratio": data.s_ratio, "zeta": zeta, "argmax": where,
               "zeta_sqrt_n": zeta * math.sqrt(cfg.n_sites)}
    _dump(out / "zeta.json", summary)
    t = np.linspace(-cfg.t_max, cfg.t_max, cfg.n_t)
    phi = characteristic_function(data, t)
    write_csv(out / "phi.csv", ["t", "re", "im"],
              [{"t": float(a), "re": float(b.real), "im": float(b.imag)} for a, b in zip(t, phi)],
              _header(cfg, "phi/1"))
    if cfg.has_filter:
        params = _filter_params(cfg, data.mean, data.std_dev)
        mom = exact_filtered_moments(data, params)
        _dump(out / "filtered_moments.json", {"header": _header(cfg, "filtered-moments/1"),
                                              "params": params.to_dict(), "mu": mom.mu, "delta2": mom.delta2,
                                              "norm2": mom.norm2})
    print(f"zeta = {zeta:.12g} at E = {where:.12g}; zeta*sqrt(N) = {zeta * math.sqrt(cfg.n_sites):.6g}")
    return EXIT_OK


def _sweep_plan(cfg: RunConfig, out: Path) -> SweepPlan:
    sw = cfg.sweep
    specs = []
    for n in sw.n_sites:
        try:
            specs.append(HamiltonianSpec(n, cfg.model, cfg.couplings, cfg.normalize))
        except ValueError as exc:
            raise ConfigError("sweep.n_sites", str(exc)) from None
    policies = [TruncationPolicy(b, t) for b in sw.max_bond for t in sw.threshold]
    return SweepPlan(specs, M_grid=sw.M, target_deltas=sw.target_delta, y_rule=sw.y, policies=policies,
                     seeds=sw.seeds, state=cfg.state_kind if cfg.state_kind != "custom" else "plus",
                     path=sw.path, epsilon_total=cfg.epsilon_total)


def cmd_sweep(cfg: RunConfig, out: Path) -> int:
    if cfg.sweep is None:
        raise ConfigError("sweep", "section missing")
    plan = _sweep_plan(cfg, out)
    table = run_sweep(plan, threads=cfg.threads)
    table.write(out / "sweep.csv", out / "sweep_timings.csv")
    for r in table.rows:
        if "_report" in r:
            _dump(out / f"cell_{r['cell']:04d}_report.json",
                  {"header": {"plan_hash": table.plan_hash, "version": __version__, "schema": "filter-report/1"},
                   "report": r["_report"].to_dict(timings=False)})
    fits = {}
    ok = table.ok()
    for n in sorted({r["n_sites"] for r in ok}):
        rows = [r for r in ok if r["n_sites"] == n]
        Ms = [r["M"] for r in rows]
        if len(set(Ms)) >= 4:
            try:
                fits[f"delta2_vs_M_N{n}"] = fit_power_law(Ms, [r["delta2"] for r in rows]).to_dict()
            except ValueError as exc:
                fits[f"delta2_vs_M_N{n}"] = {"error": str(exc)}
    _dump(out / "fits.json", {"header": {"plan_hash": table.plan_hash, "version": __version__,
                                         "schema": "fits/1"}, "fits": fits,
                              "failed_cells": [{"cell": r["cell"], "error": r["error"]}
                                               for r in table.rows if r["status"] != "ok"]})
    print(f"{len(ok)}/{len(table.rows)} cells succeeded")
    return EXIT_OK if ok else EXIT_FAILURE


def cmd_validate(cfg: RunConfig, out: Optional[Path]) -> int:
    print(json.dumps(cfg.to_dict(), indent=2, sort_keys=True, default=str))
    return EXIT_OK


COMMANDS = {"filter": cmd_filter, "oracle": cmd_oracle, "sweep": cmd_sweep, "validate": cmd_validate}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lowvar", description="Low-variance filtering of product states.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in [("filter", "filter a product state as an MPS"),
                           ("oracle", "exact-diagonalization ground truth (N <= 14)"),
                           ("sweep", "run a parameter sweep"), ("validate", "check a config file")]:
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True, metavar="PATH", help="INI configuration file")
        p.add_argument("--out", metavar="DIR", help=f"output directory (default: ${ENV_OUT} or [output] directory)")
        p.add_argument("--threads", type=int, metavar="K", help="worker threads")
        p.add_argument("--seed", type=int, metavar="S", help="random seed, overrides [run] seed")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def _out_dir(args, cfg: Optional[RunConfig]) -> Path:
    if args.out:
        return Path(args.out)
    if os.environ.get(ENV_OUT):
        return Path(os.environ[ENV_OUT])
    if cfg is not None and cfg.output_dir:
        return Path(cfg.output_dir)
    return Path("lowvar_out")


def _fail(out: Optional[Path], code: int, exc: BaseException, **extra) -> int:
    payload = {"error": type(exc).__name__, "message": str(exc), "exit_code": code, **extra}
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)
    if out is not None:
        try:
            out.mkdir(parents=True, exist_ok=True)
            _dump(out / "error.json", payload)
        except OSError:
            pass
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    cfg = None
    out = None
    try:
        cfg = load_config(args.config, seed=args.seed, threads=args.threads)
        if args.command == "validate":
            return cmd_validate(cfg, None)
        out = _out_dir(args, cfg)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, out)
    except ConfigError as exc:
        return _fail(out if out is not None else (_out_dir(args, None) if args.command != "validate" else None),
                     EXIT_CONFIG, exc, field=exc.field)
    except NormCollapse as exc:
        return _fail(out, EXIT_COLLAPSE, exc, log_norm=exc.log_norm)
    except InfeasibleParams as exc:
        return _fail(out, EXIT_INFEASIBLE, exc)
    except SizeGuard as exc:
        return _fail(out, EXIT_SIZE, exc)
    except EvolutionError as exc:
        return _fail(out, EXIT_EVOLUTION, exc, best_bound=exc.best_bound)
    except Exception as exc:  # noqa: BLE001 - reported as structured JSON
        log.debug("unexpected failure", exc_info=True)
        return _fail(out, EXIT_FAILURE, exc)


if __name__ == "__main__":
    sys.exit(main())
