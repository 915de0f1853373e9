"""Command-line front end: ``utilityforge <command> [options]``.

Every command prints a schema-versioned JSON report on stdout. Curves and
profiles go to ``--output`` as CSV (17 significant digits) when given.
Engine errors print an error JSON and exit with status 1; configuration
errors exit with status 2.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
from typing import Any, Optional, Sequence

import numpy as np

from . import __version__
from . import discrete as disc
from . import distributions as dist
from . import efficiency as eff
from . import risk_aversion as ra
from . import utility as ut
from .errors import ConfigError, InvalidParameter, UtilityForgeError
from .market import BsParams, PricingKernel, bs_kernel, kernel_from_dict
from .numerics import Tolerance, default_tolerance

SCHEMA_VERSION = 1

COMMANDS = (
    "infer-utility", "infer-generalized", "price", "efficient-payoff", "audit",
    "optimal-payoff", "risk-aversion", "dara-test", "rationalize-discrete", "validate",
)

# target flags -> NamedLaw parameter names
_LAW_FLAGS = ("M", "Sigma", "lam", "m", "alpha", "lo", "hi", "k", "G", "s", "x1", "x2", "p1", "csv")


def fmt(v: float) -> str:
    return format(float(v), ".17g")


# ---------------------------------------------------------------------------
# Config parsing


def _load_json(text_or_path: str, what: str) -> Any:
    text = text_or_path
    if not text_or_path.lstrip().startswith("{"):
        if not os.path.exists(text_or_path):
            raise ConfigError(f"{what} file not found: {text_or_path}", field=what)
        with open(text_or_path) as fh:
            text = fh.read()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{what}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}",
                          field=what) from exc


def _number(data: dict, key: str, where: str) -> float:
    if key not in data:
        raise ConfigError(f"{where}: missing field '{key}'", field=key)
    v = data[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"{where}: field '{key}' must be a finite number", field=key)
    return float(v)


def validate_market(data: Any) -> PricingKernel:
    if not isinstance(data, dict):
        raise ConfigError("market must be a JSON object", field="market")
    model = data.get("model", "black-scholes")
    if model == "black-scholes":
        vals = {k: _number(data, k, "market") for k in ("mu", "sigma", "r", "T")}
        vals["S0"] = _number(data, "S0", "market") if "S0" in data else 1.0
        for key in ("sigma", "T", "S0"):
            if not vals[key] > 0:
                raise ConfigError(f"market: field '{key}' must be > 0", field=key)
        if vals["mu"] == vals["r"]:
            raise ConfigError("market: mu == r makes the kernel constant", field="mu")
        return bs_kernel(BsParams(**vals))
    if model == "custom-kernel":
        if "law" not in data:
            raise ConfigError("market: custom-kernel needs a 'law'", field="law")
        validate_law(data["law"])
        try:
            return kernel_from_dict(data)
        except InvalidParameter as exc:
            raise ConfigError(f"market: {exc}", field="law") from exc
    raise ConfigError(f"market: unknown model {model!r}; expected black-scholes or custom-kernel",
                      field="model")


_POSITIVE = {"Sigma", "lam", "m", "alpha", "s", "G"}


def validate_law(data: Any) -> dist.Distribution:
    if not isinstance(data, dict) or "family" not in data:
        raise ConfigError("target law must be an object with a 'family' field", field="family")
    fam = data["family"]
    if fam not in dist.FAMILIES:
        raise ConfigError(f"unknown family {fam!r}; valid families: {', '.join(dist.FAMILIES)}",
                          field="family")
    params = data.get("params", {})
    if not isinstance(params, dict):
        raise ConfigError("'params' must be an object", field="params")
    for key in _POSITIVE:
        if key in params and not (isinstance(params[key], (int, float)) and params[key] > 0):
            raise ConfigError(f"{fam}: parameter '{key}' must be > 0", field=key)
    try:
        return dist.make(data)
    except (InvalidParameter, OSError) as exc:
        raise ConfigError(f"{fam}: {exc}", field="params") from exc


def _market(args) -> PricingKernel:
    if args.market:
        return validate_market(_load_json(args.market, "market"))
    flags = {k: getattr(args, k) for k in ("mu", "sigma", "r", "T")}
    if any(v is None for v in flags.values()):
        raise ConfigError("give --market or all of --mu --sigma --r --T", field="market")
    flags["S0"] = args.S0
    flags["model"] = "black-scholes"
    return validate_market(flags)


def _target_spec(args) -> dict:
    t = args.target
    if t is None:
        raise ConfigError("--target is required", field="target")
    if t.lstrip().startswith("{") or t.endswith(".json"):
        return _load_json(t, "target")
    params = {}
    for key in _LAW_FLAGS:
        v = getattr(args, f"law_{key}", None)
        if v is not None:
            params[key] = v
    if t == "empirical-grid" and "csv" in params and not os.path.exists(params["csv"]):
        raise ConfigError(f"empirical-grid csv not found: {params['csv']}", field="csv")
    return {"family": t, "params": params}


def _grid_size(args) -> int:
    n = int(args.grid_size)
    if n < 2:
        raise ConfigError("--grid-size must be >= 2", field="grid-size")
    return n


# ---------------------------------------------------------------------------
# Output helpers


def _csv_text(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


class Run:
    def __init__(self, args, command: str):
        self.args = args
        self.command = command
        self.outputs: dict[str, Any] = {}
        self.files: list[str] = []
        self.warnings: list[str] = []

    def emit_csv(self, header, rows, key: str = "rows") -> None:
        text = _csv_text(header, rows)
        if self.args.output:
            with open(self.args.output, "w", newline="") as fh:
                fh.write(text)
            self.files.append(self.args.output)
        elif self.args.format == "csv":
            sys.stdout.write(text)
        else:
            self.outputs[key] = {"columns": list(header), "data": [[float(v) for v in r] for r in rows]}

    def report(self, inputs: dict) -> dict:
        canon = json.dumps(inputs, sort_keys=True, default=str)
        return {
            "schema_version": SCHEMA_VERSION,
            "tool_version": __version__,
            "command": self.command,
            "inputs": inputs,
            "inputs_digest": hashlib.sha256(canon.encode()).hexdigest(),
            "outputs": self.outputs,
            "files": self.files,
            "warnings": self.warnings,
        }


def _inputs(args) -> dict:
    skip = {"func"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip and v is not None}


# ---------------------------------------------------------------------------
# Commands


def _fit_family(name: str, args, F: dist.Distribution, k: PricingKernel) -> ut.ParametricFamily:
    if args.fit_params:
        params = _load_json(args.fit_params, "fit-params")
        return ut.ParametricFamily(name, params)
    p = k.params
    if name == "crra" and isinstance(F, dist.LogNormal) and p is not None:
        return ut.ParametricFamily("crra", {"gamma": abs(p.theta) * math.sqrt(p.T) / F.Sigma})
    if name == "cara" and isinstance(F, dist.Normal) and p is not None:
        return ut.ParametricFamily("cara", {"gamma": abs(p.theta) * math.sqrt(p.T) / F.Sigma})
    if name == "log":
        return ut.ParametricFamily("log", {})
    raise ConfigError(f"--fit {name} needs --fit-params for this target", field="fit-params")


def cmd_infer(args, generalized: bool) -> dict:
    run = Run(args, args.command)
    k = _market(args)
    F = validate_law(_target_spec(args))
    tol = _tol(args)
    n = _grid_size(args)
    if not generalized and (F.atoms or F.flats()):
        run.warnings.append("target has atoms or flat pieces; routed to generalized inference")
        generalized = True
    infer = ut.infer_generalized_utility if generalized else ut.infer_utility
    u = infer(F, k, args.anchor, tol)
    grid = np.unique(F.quantile(np.linspace(args.p_lo, args.p_hi, n)))
    if generalized:
        grid = grid[(grid > u.a) & (grid < u.b)]
    if grid.size < 2:
        run.warnings.append("support interior has fewer than two grid points; no curve rows emitted")
    run.emit_csv(["x", "value", "marginal"], ut.curve_rows(u, grid) if grid.size >= 2 else [])
    run.outputs.update({"curve": u.describe(), "generalized": generalized,
                        "distributional_price": u.info.get("price")})
    if args.fit:
        fam = _fit_family(args.fit, args, F, k)
        fit_grid = dist.quantile_grid(F, 0.05, 0.95, 101)
        fit = ut.affine_fit(u, fam, fit_grid)
        run.outputs["fit"] = {"family": fam.to_dict(), **fit.to_dict()}
    return run.report(_inputs(args))


def _payoff(args, k: PricingKernel) -> eff.Payoff:
    if args.payoff:
        return eff.parse_payoff(args.payoff, k)
    if args.target:
        return eff.efficient_payoff(validate_law(_target_spec(args)), k, _tol(args))
    raise ConfigError("give --payoff or --target", field="payoff")


def cmd_price(args) -> dict:
    run = Run(args, "price")
    k = _market(args)
    tol = _tol(args)
    if args.payoff:
        run.outputs["cost"] = eff.cost(eff.parse_payoff(args.payoff, k), k, tol)
    if args.target:
        F = validate_law(_target_spec(args))
        run.outputs["distributional_price"] = eff.distributional_price(F, k, tol)
    if not run.outputs:
        raise ConfigError("give --payoff or --target", field="payoff")
    return run.report(_inputs(args))


def _xi_grid(k: PricingKernel, n: int) -> np.ndarray:
    u = np.linspace(5e-4, 1 - 5e-4, n)
    return np.asarray(k.law.quantile(u))


def cmd_efficient(args) -> dict:
    run = Run(args, "efficient-payoff")
    k = _market(args)
    F = validate_law(_target_spec(args))
    x = eff.efficient_payoff(F, k, _tol(args))
    xi = _xi_grid(k, _grid_size(args))
    run.emit_csv(["xi", "value"], list(zip(xi, x(xi))))
    run.outputs["price"] = x.info["price"]
    run.outputs["breaks"] = list(x.breaks)
    return run.report(_inputs(args))


def cmd_audit(args) -> dict:
    run = Run(args, "audit")
    k = _market(args)
    x = _payoff(args, k)
    law = validate_law(_target_spec(args)) if (args.payoff and args.target) else None
    run.outputs["report"] = eff.audit(x, k, law, _tol(args)).to_dict()
    return run.report(_inputs(args))


def cmd_optimal(args) -> dict:
    run = Run(args, "optimal-payoff")
    k = _market(args)
    if not args.utility:
        raise ConfigError("--utility is required", field="utility")
    params = _load_json(args.utility_params, "utility-params") if args.utility_params else {}
    if args.utility not in ut.FAMILY_NAMES:
        raise ConfigError(f"unknown utility family {args.utility!r}; valid: {', '.join(ut.FAMILY_NAMES)}",
                          field="utility")
    try:
        u = ut.ParametricFamily(args.utility, params).curve()
    except InvalidParameter as exc:
        raise ConfigError(str(exc), field="utility-params") from exc
    if args.budget is None:
        raise ConfigError("--budget is required", field="budget")
    x = ut.optimal_payoff(u, k, args.budget, _tol(args))
    xi = _xi_grid(k, _grid_size(args))
    run.emit_csv(["xi", "value"], list(zip(xi, x(xi))))
    run.outputs.update({"lambda": x.info["lambda"], "cost": eff.cost(x, k, _tol(args))})
    if args.utility == "yaari-piecewise":
        run.warnings.append("digital level B is matched to the budget through B e^{-rT} Phi(d) = X0; "
                            "the closed form X0 e^{rT} Phi(d) does not meet the budget")
    return run.report(_inputs(args))


def cmd_risk(args) -> dict:
    run = Run(args, "risk-aversion")
    k = _market(args)
    F = validate_law(_target_spec(args))
    prof = ra.profile(F, k, n=_grid_size(args))
    run.emit_csv(["x", "p", "ara", "rra"], prof.rows())
    run.outputs["ara_range"] = [float(prof.ara.min()), float(prof.ara.max())]
    return run.report(_inputs(args))


def cmd_dara(args) -> dict:
    run = Run(args, "dara-test")
    k = _market(args)
    F = validate_law(_target_spec(args))
    verdicts = {}
    crit = args.criterion
    if crit in ("bs", "all"):
        if k.params is None and crit == "bs":
            raise ConfigError("criterion 'bs' needs a black-scholes market", field="criterion")
        if k.params is not None:
            verdicts["bs-convexity"] = ra.dara_bs(F).to_dict()
    if crit in ("general", "all"):
        verdicts["transform-convexity"] = ra.dara_general(F, k.h_law).to_dict()
    if crit in ("hazard", "all"):
        verdicts["hazard-sufficient"] = ra.dara_hazard_sufficient(F).to_dict()
    primary = verdicts.get("bs-convexity") or verdicts.get("transform-convexity") \
        or verdicts["hazard-sufficient"]
    run.outputs.update({"is_dara": primary["is_dara"], "verdicts": verdicts})
    return run.report(_inputs(args))


def cmd_discrete(args) -> dict:
    run = Run(args, "rationalize-discrete")
    if not args.input:
        raise ConfigError("--input is required", field="input")
    data = _load_json(args.input, "input")
    for key in ("xi", "xstar"):
        if key not in data or not isinstance(data[key], list):
            raise ConfigError(f"discrete market needs a list '{key}'", field=key)
    if "N" in data and data["N"] != len(data["xi"]):
        raise ConfigError("N does not match the length of xi", field="N")
    try:
        m = disc.DiscreteMarket(tuple(data["xi"]), tuple(data.get("probs", ())))
    except InvalidParameter as exc:
        raise ConfigError(str(exc), field="xi") from exc
    xstar = [float(v) for v in data["xstar"]]
    builders = {"paper-step": disc.paper_step_utility, "peleg-yaari": disc.peleg_yaari_utility}
    kinds = list(builders) if args.construction == "both" else [args.construction]
    rng = np.random.default_rng(args.seed)
    rows = []
    reports = {}
    for kind in kinds:
        u = builders[kind](m, xstar)
        reports[kind] = disc.verify_optimality(m, u, xstar, args.trials, rng).to_dict()
        rows += [(kinds.index(kind), *r) for r in u.to_rows()]
    run.emit_csv(["construction", "breakpoint", "value", "left_slope"], rows)
    run.outputs.update({"constructions": kinds, "verification": reports,
                        "rearranged": disc.rearrange_antimonotone(m, xstar) if m.is_equiprobable else None})
    return run.report(_inputs(args))


def cmd_validate(args) -> dict:
    run = Run(args, "validate")
    if not args.config:
        raise ConfigError("--config is required", field="config")
    data = _load_json(args.config, "config")
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object", field="config")
    checked = []
    if "command" in data:
        if data["command"] not in COMMANDS:
            raise ConfigError(f"unknown command {data['command']!r}; valid: {', '.join(COMMANDS)}",
                              field="command")
        checked.append("command")
        if "grid_size" in data and not (isinstance(data["grid_size"], int) and data["grid_size"] >= 2):
            raise ConfigError("grid_size must be an integer >= 2", field="grid_size")
    if "market" in data:
        validate_market(data["market"])
        checked.append("market")
    if "target" in data:
        validate_law(data["target"])
        checked.append("target")
    if "family" in data:
        validate_law(data)
        checked.append("law")
    if "model" in data or {"mu", "sigma"} & set(data):
        validate_market(data)
        checked.append("market")
    if not checked:
        raise ConfigError("nothing to validate: expected a market, a law or a run config", field="config")
    run.outputs.update({"ok": True, "checked": checked})
    return run.report(_inputs(args))


def _tol(args) -> Tolerance:
    if args.tol:
        try:
            return Tolerance.from_string(args.tol)
        except InvalidParameter as exc:
            raise ConfigError(str(exc), field="tol") from exc
    return default_tolerance()


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="utilityforge", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--market", help="market JSON (file path or inline)")
    for name in ("mu", "sigma", "r", "T"):
        common.add_argument(f"--{name}", type=float)
    common.add_argument("--S0", type=float, default=1.0)
    common.add_argument("--target", help="law family name, or law JSON (file path or inline)")
    for name in _LAW_FLAGS:
        common.add_argument(f"--{name}", dest=f"law_{name}", type=str if name == "csv" else float)
    common.add_argument("--output", help="CSV output path")
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--grid-size", type=int, default=201)
    common.add_argument("--p-lo", type=float, default=0.005)
    common.add_argument("--p-hi", type=float, default=0.995)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--tol", help="e.g. '1e-9' or 'abs_tol=1e-10,rel_tol=1e-8,max_iter=60'")

    for name in ("infer-utility", "infer-generalized"):
        p = sub.add_parser(name, parents=[common])
        p.add_argument("--anchor", type=float)
        p.add_argument("--fit", choices=ut.FAMILY_NAMES)
        p.add_argument("--fit-params", help="family parameters as JSON")
        p.set_defaults(func=lambda a, g=(name == "infer-generalized"): cmd_infer(a, g))

    p = sub.add_parser("price", parents=[common])
    p.add_argument("--payoff", help="constant:C | stock | put:K | call:K | digital:C:B | csv:PATH")
    p.set_defaults(func=cmd_price)

    p = sub.add_parser("efficient-payoff", parents=[common])
    p.set_defaults(func=cmd_efficient)

    p = sub.add_parser("audit", parents=[common])
    p.add_argument("--payoff")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("optimal-payoff", parents=[common])
    p.add_argument("--utility", help=f"one of {', '.join(ut.FAMILY_NAMES)}")
    p.add_argument("--utility-params", help="family parameters as JSON")
    p.add_argument("--budget", type=float)
    p.set_defaults(func=cmd_optimal)

    p = sub.add_parser("risk-aversion", parents=[common])
    p.set_defaults(func=cmd_risk)

    p = sub.add_parser("dara-test", parents=[common])
    p.add_argument("--criterion", choices=("bs", "general", "hazard", "all"), default="all")
    p.set_defaults(func=cmd_dara)

    p = sub.add_parser("rationalize-discrete", parents=[common])
    p.add_argument("--input", help="JSON {N, xi[], probs[], xstar[]}")
    p.add_argument("--construction", choices=("paper-step", "peleg-yaari", "both"), default="both")
    p.add_argument("--trials", type=int, default=10_000)
    p.set_defaults(func=cmd_discrete)

    p = sub.add_parser("validate", parents=[common])
    p.add_argument("--config", help="JSON file to check")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        report = args.func(args)
    except ConfigError as exc:
        print(json.dumps({"schema_version": SCHEMA_VERSION, "command": args.command, **exc.to_dict()}))
        return 2
    except UtilityForgeError as exc:
        print(json.dumps({"schema_version": SCHEMA_VERSION, "command": args.command, **exc.to_dict()}))
        return 1
    if not (args.format == "csv" and not args.output):
        print(json.dumps(_clean(report), indent=2, sort_keys=True, default=_json_default, allow_nan=False))
    return 0


def _clean(o):
    """Replace non-finite floats by tagged strings so the JSON stays strict."""
    if isinstance(o, dict):
        return {k: _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    if isinstance(o, (float, np.floating)) and not math.isfinite(o):
        return "nan" if math.isnan(o) else ("+inf" if o > 0 else "-inf")
    return o


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    return str(o)


if __name__ == "__main__":
    sys.exit(main())
