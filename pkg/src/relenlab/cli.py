"""Command-line entry point.

Every subcommand takes ``--config <file.json>`` and ``--out <dir>`` and writes
the resolved configuration, a CSV of per-case rows and a JSON summary of the
checks. Exit status is 0 when every check passes, 1 on a tolerance failure and
2 on a configuration or runtime error.
"""
from __future__ import annotations

import argparse
import csv
import inspect
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import energy as en
from . import experiments as ex
from .dynamics import SYSTEM_MODELS, SystemSpec
from .errors import AdmissibilityError, ConfigError, NonFiniteError
from .torus import TorusGrid, save_snapshot

log = logging.getLogger("relenlab")

COMMANDS = ("simulate", "verify-noether", "verify-identity", "twin-stability", "model-convergence",
            "check-convexity", "check-variational")

GRID_KEYS = {"dim", "N", "L", "dealias"}
SYSTEM_KEYS = {"system", "zeta", "lambda", "mu", "dt", "t_end", "integrator", "force_form", "cfl",
               "check_cfl"}
MODEL_KEYS = {"type", "h", "kappa", "beta", "alpha", "epsilon", "band"}
OUTPUT_KEYS = {"directory", "snapshot_every", "csv"}
TOP_KEYS = {"grid", "system", "model", "experiment", "output", "seed"}


def _strict(block, allowed: set, where: str) -> dict:
    if block is None:
        return {}
    if not isinstance(block, dict):
        raise ConfigError(f"{where} must be an object")
    unknown = sorted(set(block) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")
    return dict(block)


def _positive(value, name: str) -> float:
    try:
        v = float(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name} must be a number") from exc
    if not (np.isfinite(v) and v > 0):
        raise ConfigError(f"{name} must be positive, got {value}")
    return v


@dataclass
class RunConfig:
    grid: dict = field(default_factory=dict)
    system: dict = field(default_factory=dict)
    model: dict = field(default_factory=dict)
    experiment: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    seed: int = 0

    @classmethod
    def from_dict(cls, raw: dict) -> "RunConfig":
        raw = _strict(raw, TOP_KEYS, "config")
        cfg = cls(
            grid=_strict(raw.get("grid"), GRID_KEYS, "grid"),
            system=_strict(raw.get("system"), SYSTEM_KEYS, "system"),
            model=_strict(raw.get("model"), MODEL_KEYS, "model"),
            experiment=_strict(raw.get("experiment"), {"name", "params"}, "experiment"),
            output=_strict(raw.get("output"), OUTPUT_KEYS, "output"),
            seed=raw.get("seed", 0),
        )
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if not isinstance(self.seed, int) or isinstance(self.seed, bool):
            raise ConfigError("seed must be an integer")
        g = self.grid
        if "dim" in g and g["dim"] not in (1, 2, 3):
            raise ConfigError("grid.dim must be 1, 2 or 3")
        if "N" in g and (not isinstance(g["N"], int) or g["N"] < 8 or g["N"] % 2):
            raise ConfigError("grid.N must be an even integer >= 8")
        if "L" in g:
            _positive(g["L"], "grid.L")
        s = self.system
        if "system" in s and s["system"] not in SYSTEM_MODELS:
            raise ConfigError(f"system.system must be one of {sorted(SYSTEM_MODELS)}")
        for key in ("dt", "t_end", "cfl"):
            if key in s:
                _positive(s[key], f"system.{key}")
        if "zeta" in s and not float(s["zeta"]) >= 0:
            raise ConfigError("system.zeta must be nonnegative")
        if "mu" in s and not float(s["mu"]) >= 0:
            raise ConfigError("system.mu must be nonnegative")
        if self.model:
            if "type" not in self.model or "h" not in self.model:
                raise ConfigError("model needs at least 'type' and 'h'")
            band = self.model.get("band", en.DEFAULT_BAND)
            if len(band) != 2 or not 0 <= band[0] < band[1]:
                raise ConfigError("model.band must be [rho_min, rho_max] with 0 <= rho_min < rho_max")
        o = self.output
        if "snapshot_every" in o and (not isinstance(o["snapshot_every"], int) or o["snapshot_every"] < 0):
            raise ConfigError("output.snapshot_every must be a nonnegative integer")
        params = self.experiment.get("params", {})
        if not isinstance(params, dict):
            raise ConfigError("experiment.params must be an object")

    @property
    def params(self) -> dict:
        return dict(self.experiment.get("params", {}))

    def build_grid(self) -> TorusGrid:
        g = self.grid
        return TorusGrid(dim=int(g.get("dim", 1)), n=int(g.get("N", 256)),
                         length=float(g.get("L", 2.0 * np.pi)), dealias=bool(g.get("dealias", True)))

    def build_model(self):
        if not self.model:
            return None
        try:
            return en.model_from_config(self.model, self.model.get("band", en.DEFAULT_BAND))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid model block: {exc}") from exc

    def build_spec(self, model, grid) -> SystemSpec:
        s = self.system
        if "system" not in s:
            raise ConfigError("this command needs system.system")
        try:
            return SystemSpec(
                system=s["system"], model=model, grid=grid, zeta=float(s.get("zeta", 0.0)),
                lam=float(s.get("lambda", 0.0)), mu=float(s.get("mu", 0.0)), dt=float(s.get("dt", 1e-3)),
                t_end=float(s.get("t_end", 1.0)), integrator=s.get("integrator", "RK4"),
                force_form=s.get("force_form", "conservative"), cfl=float(s.get("cfl", 0.3)),
                check_cfl=bool(s.get("check_cfl", True)))
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        return {"grid": self.grid, "system": self.system, "model": self.model,
                "experiment": self.experiment, "output": self.output, "seed": self.seed}


def _bind(fn, params: dict, reserved=("grid", "cases", "models", "model", "local", "threads")) -> dict:
    """Validate ``params`` against ``fn``'s keyword defaults and return the resolved set."""
    sig = inspect.signature(fn)
    allowed = {k: p.default for k, p in sig.parameters.items() if k not in reserved}
    unknown = sorted(set(params) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown experiment parameter(s) for {fn.__name__}: {', '.join(unknown)}")
    resolved = {k: params.get(k, v) for k, v in allowed.items()}
    for k, v in resolved.items():
        if isinstance(v, list):
            resolved[k] = tuple(v)
    return resolved


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, (str, int, float, bool)) or obj is None:
        return obj
    return repr(obj)


def write_rows(path: Path, rows: list) -> None:
    keys = []
    for row in rows:
        keys.extend(k for k in row if k not in keys)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=keys)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: (repr(float(v)) if isinstance(v, (float, np.floating)) else v)
                             for k, v in row.items()})


def _emit(out: Path, cfg: RunConfig, command: str, results: list, resolved: dict) -> int:
    out.mkdir(parents=True, exist_ok=True)
    echo = cfg.to_dict()
    echo["experiment"] = {"name": command, "params": resolved}
    (out / "config.json").write_text(json.dumps(_jsonable(echo), indent=2, sort_keys=True))
    summary = {"command": command, "passed": all(r.passed for r in results), "experiments": []}
    for r in results:
        name = cfg.output.get("csv") if len(results) == 1 and cfg.output.get("csv") else f"{r.name}.csv"
        if r.rows:
            write_rows(out / name, r.rows)
        plain = {k: v for k, v in r.summary.items() if not k.endswith("/terms")}
        plain = {k: ({kk: vv for kk, vv in v.items() if kk != "reports"} if isinstance(v, dict) else v)
                 for k, v in plain.items()}
        summary["experiments"].append({
            "name": r.name, "passed": r.passed, "summary": _jsonable(plain),
            "checks": [{"name": c.name, "passed": c.passed, "detail": c.detail} for c in r.checks]})
        for c in r.checks:
            print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.detail}")
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    return 0 if summary["passed"] else 1


# -- commands ----------------------------------------------------------------------------
def cmd_simulate(cfg: RunConfig, out: Path) -> int:
    grid, model = cfg.build_grid(), cfg.build_model()
    if model is None:
        raise ConfigError("simulate needs a model block")
    spec = cfg.build_spec(model, grid)
    params = _bind(ex.modal_state, cfg.params, reserved=("grid",))
    s0 = ex.modal_state(grid, **params)
    every = int(cfg.output.get("snapshot_every", 0))
    diag_every = every or max(1, int(round(spec.t_end / spec.dt / 100)))
    traj, rows = ex.simulate(spec, s0, every=diag_every)
    out.mkdir(parents=True, exist_ok=True)
    if every:
        for i, s in enumerate(traj.states):
            save_snapshot(out / "snapshots", grid, {"rho": s.rho, "m": s.m}, name=f"snap_{i:05d}",
                          extra={"t": s.time, "system": spec.system})
    (out / "config.json").write_text(json.dumps(_jsonable(
        {**cfg.to_dict(), "experiment": {"name": "simulate", "params": params}}), indent=2, sort_keys=True))
    write_rows(out / cfg.output.get("csv", "diagnostics.csv"), rows)
    print(f"simulated {spec.system} to t = {traj.states[-1].time:.6g} ({len(rows)} diagnostic rows)")
    return 0


def _single_case(cfg: RunConfig):
    model = cfg.build_model()
    system = cfg.system.get("system")
    if model is None and system is None:
        return None, None
    if model is None or system is None:
        raise ConfigError("give both system.system and a model block, or neither")
    return system, model


def cmd_verify_noether(cfg, out):
    grid, model = cfg.build_grid(), cfg.build_model()
    params = _bind(ex.run_noether_battery, {"seed": cfg.seed, **cfg.params})
    res = ex.run_noether_battery(grid, {"configured": model} if model else None, **params)
    return _emit(out, cfg, "verify-noether", [res], params)


def cmd_verify_identity(cfg, out):
    grid = cfg.build_grid()
    system, model = _single_case(cfg)
    p = cfg.params
    local = bool(p.pop("local", True))
    params = _bind(ex.run_identity_study, p)
    cases = None if model is None else {system: (system, model, float(cfg.system.get("zeta", 0.0)))}
    results = [ex.run_identity_study(grid, cases, **params)]
    korteweg = model is None or isinstance(model, (en.Korteweg, en.QHD))
    if local and korteweg and system != "NSK":
        lparams = _bind(ex.run_local_identity_study,
                        {k: v for k, v in p.items() if k in ("t_end", "every", "delta")})
        lcases = None if model is None else {system: (system, model)}
        results.append(ex.run_local_identity_study(grid, lcases, **lparams))
    return _emit(out, cfg, "verify-identity", results, {**params, "local": local})


def cmd_twin_stability(cfg, out):
    grid = cfg.build_grid()
    system, model = _single_case(cfg)
    p = cfg.params
    functional = p.pop("functional", "phi")
    params = _bind(ex.run_twin_stability, p)
    cases = None
    if model is not None:
        cases = {f"{system}/{functional}": dict(system=system, model=model, kind=functional,
                                                 lam=float(cfg.system.get("lambda", 0.0)),
                                                 mu=float(cfg.system.get("mu", 0.0)),
                                                 zeta=float(cfg.system.get("zeta", 0.0)))}
    res = ex.run_twin_stability(grid, cases, **params)
    return _emit(out, cfg, "twin-stability", [res], {**params, "functional": functional})


def cmd_model_convergence(cfg, out):
    grid = cfg.build_grid()
    params = _bind(ex.run_model_convergence, cfg.params)
    local = en.local_from_config(cfg.model["h"]) if cfg.model.get("h") else None
    if params["bulk"] <= 0:
        raise ConfigError("model convergence needs lambda + (2/3) mu > 0")
    res = ex.run_model_convergence(grid, local=local, **params)
    return _emit(out, cfg, "model-convergence", [res], params)


def cmd_check_convexity(cfg, out):
    params = _bind(ex.run_convexity, cfg.params)
    cases = None
    model = cfg.build_model()
    if model is not None:
        if not isinstance(model, (en.Korteweg, en.QHD)):
            raise ConfigError("check-convexity needs a Korteweg or QHD model")
        cases = {"configured": (model.cap, model.local)}
    res = ex.run_convexity(cases, **params)
    return _emit(out, cfg, "check-convexity", [res], params)


def cmd_check_variational(cfg, out):
    grid = cfg.build_grid() if cfg.grid else None
    model = cfg.build_model()
    params = _bind(ex.run_variational, {"seed": cfg.seed, **cfg.params})
    results = [ex.run_variational(grid, {"configured": model} if model else None, **params),
               ex.run_elliptic_approximation(seed=cfg.seed), ex.run_structural(seed=cfg.seed)]
    return _emit(out, cfg, "check-variational", results, params)


HANDLERS = {
    "simulate": cmd_simulate,
    "verify-noether": cmd_verify_noether,
    "verify-identity": cmd_verify_identity,
    "twin-stability": cmd_twin_stability,
    "model-convergence": cmd_model_convergence,
    "check-convexity": cmd_check_convexity,
    "check-variational": cmd_check_variational,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="relenlab", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="run configuration (JSON); defaults apply when omitted")
        p.add_argument("--out", type=Path, help="output directory (overrides RELENLAB_OUT and the config)")
    return parser


def load_config(path: Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return RunConfig.from_dict(raw)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        out = args.out or os.environ.get("RELENLAB_OUT") or cfg.output.get("directory") or "relenlab_out"
        if cfg.experiment.get("name") not in (None, args.command):
            raise ConfigError(f"config is for {cfg.experiment['name']!r}, not {args.command!r}")
        return HANDLERS[args.command](cfg, Path(out))
    except (ConfigError, AdmissibilityError, NonFiniteError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
