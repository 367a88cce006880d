"""Command line front end.

Exit codes: 0 success (``capital``: finite), 1 input or solver error,
2 unbounded below, 3 no scenarios, 4 selftest failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .acceptability import Status, capital_report, is_acceptable
from .errors import CapreqError
from .hedging import (
    HedgeProblem,
    TwoFactorModel,
    alpha_sweep,
    build_two_factor_tree,
    call_payoff,
    cap_sweep,
    martingale_vertices,
    superhedge,
)
from .market import load_market, market_to_dict
from .risk import RiskSpec, capital_identity_check, rho, rho_G_solution
from .scenarios import load_scenarios
from .selftest import DEFAULT_TOL, SelftestConfig, run_selftest

log = logging.getLogger("capreq")

EXIT_OK, EXIT_ERROR, EXIT_UNBOUNDED, EXIT_EMPTY, EXIT_SELFTEST = 0, 1, 2, 3, 4
STATUS_EXIT = {Status.FINITE: EXIT_OK, Status.UNBOUNDED_BELOW: EXIT_UNBOUNDED, Status.SCENARIOS_EMPTY: EXIT_EMPTY}
LOG_ENV = "CAPREQ_LOG"
WITNESS_NOTE = (
    "the finite engine always extracts a hedging witness; existence of an optimal "
    "strategy is a finite-dimensional strengthening, not a general claim"
)


@dataclass
class RunConfig:
    command: str
    inputs: dict = field(default_factory=dict)
    out: Optional[str] = None
    seed: int = 0
    tol: float = DEFAULT_TOL


# --------------------------------------------------------------------------
# output helpers


def _num(v, flag: str = "undefined"):
    """Finite floats pass through (json writes the shortest round-trip form);
    anything else becomes an explicit flag."""
    if v is None:
        return None
    v = float(v)
    if math.isfinite(v):
        return v
    if v == -math.inf:
        return "unbounded"
    return flag


def _csv_num(v) -> str:
    v = float(v)
    return repr(v) if math.isfinite(v) else "empty"


def write_atomic(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, allow_nan=False) + "\n"


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        write_atomic(out, text)
    else:
        sys.stdout.write(text)


def _parse_floats(text: str) -> list:
    text = text.strip()
    if not text:
        return []
    try:
        return [float(v) for v in text.split(",")]
    except ValueError:
        raise CapreqError(f"expected a comma-separated list of numbers, got {text!r}") from None


def _load_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def load_claim(path, n: int) -> np.ndarray:
    """A claim file holds a list of payoffs or {"claim": [...]}."""
    d = _load_json(path)
    vals = d.get("claim") if isinstance(d, dict) else d
    arr = np.asarray(vals, dtype=float)
    if arr.shape != (n,) or not np.all(np.isfinite(arr)):
        raise CapreqError(f"claim must list {n} finite payoffs")
    return arr


# --------------------------------------------------------------------------
# commands


def run_capital(cfg: RunConfig) -> int:
    market = load_market(cfg.inputs["market"])
    scen = load_scenarios(cfg.inputs["scenarios"], market.probs)
    samples = int(cfg.inputs.get("certificate_samples", 0))
    report = capital_report(scen, market, seed=cfg.seed, certificate_samples=samples)
    out = report.to_dict()
    out["tolerance"] = cfg.tol
    if report.status is Status.FINITE and report.gap > cfg.tol:
        log.warning("duality gap %.3g exceeds tolerance %.3g", report.gap, cfg.tol)
    _emit(dump_json(out), cfg.out)
    return STATUS_EXIT[report.status]


def run_accept(cfg: RunConfig) -> int:
    market = load_market(cfg.inputs["market"])
    scen = load_scenarios(cfg.inputs["scenarios"], market.probs)
    x = float(cfg.inputs["x"])
    ok, strategy = is_acceptable(x, scen, market)
    out = {"x": x, "acceptable": ok, "witness": strategy.to_dict() if strategy is not None else None, "seed": cfg.seed}
    _emit(dump_json(out), cfg.out)
    return EXIT_OK


def run_rho(cfg: RunConfig) -> int:
    market = load_market(cfg.inputs["market"])
    scen = load_scenarios(cfg.inputs["scenarios"], market.probs, floor_key="penalty")
    claim = load_claim(cfg.inputs["claim"], market.n_outcomes)
    spec = RiskSpec(market.probs, scen.densities, scen.floors, claim)
    hedged = rho_G_solution(claim, spec, market)
    check = capital_identity_check(spec, market, tol=cfg.tol)
    out = {
        "rho": _num(rho(claim, spec)),
        "rho_G": _num(hedged.value),
        "hedge": [float(v) for v in hedged.hedge] if hedged.hedge is not None else None,
        "identity": {"min_capital": _num(check.lhs), "rho_G": _num(check.rhs), "passed": check.passed},
        "tolerance": cfg.tol,
        "seed": cfg.seed,
    }
    _emit(dump_json(out), cfg.out)
    return EXIT_OK if check.passed else EXIT_ERROR


def _hedge_setup(cfg: RunConfig):
    inp = cfg.inputs
    if inp.get("market"):
        market = load_market(inp["market"])
        if inp.get("claim"):
            claim = load_claim(inp["claim"], market.n_outcomes)
        else:
            claim = call_payoff(market, inp["strike"])
        params = {"market": str(inp["market"]), "claim": str(inp.get("claim")), "strike": inp["strike"]}
        return market, claim, params
    model = TwoFactorModel(inp["mu"], inp["sigma1"], inp["sigma2"], inp["steps"], inp["horizon"], inp["s0"])
    market = build_two_factor_tree(model)
    params = {
        "mu": model.mu,
        "sigma1": model.sigma1,
        "sigma2": model.sigma2,
        "sigma_star": model.sigma_star,
        "z": model.market_price_of_risk,
        "steps": model.steps,
        "horizon": model.horizon,
        "s0": model.s0,
        "strike": inp["strike"],
    }
    return market, call_payoff(market, inp["strike"]), params


def _row_json(row, key: str) -> dict:
    out = {key: row.param, "price": _num(row.price, "empty"), "status": row.status}
    sol = row.solution
    if sol is not None:
        out.update(
            norm2=sol.norm2,
            cap_binding=sol.cap_binding,
            cap_multiplier=sol.ridge,
            iterations=sol.iterations,
            density=[float(v) for v in sol.density],
        )
    return out


def _sweep_command(cfg: RunConfig, key: str) -> int:
    market, claim, params = _hedge_setup(cfg)
    inp = cfg.inputs
    q = float(inp["q"])
    cap = inp.get("cap")
    prob = HedgeProblem(claim, q, float(inp.get("alpha", 0.0)), cap)
    if key == "alpha":
        values = _parse_floats(inp["alphas"])
        rows = alpha_sweep(prob, market, values, seed=cfg.seed)
    else:
        values = _parse_floats(inp["caps"])
        rows = cap_sweep(prob, market, values, seed=cfg.seed)

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow([key, "price", "status"])
    for row in rows:
        w.writerow([repr(row.param), _csv_num(row.price), row.status])

    sup = superhedge(claim, market)
    report = {
        "command": cfg.command,
        "model": params,
        "q": q,
        "p": _num(prob.p, "inf"),
        "alpha": prob.alpha if key == "cap" else None,
        "cap": cap,
        "q_above_two": prob.q_above_two,
        "superhedge_price": _num(sup.price, "empty"),
        "superhedge_primal": _num(sup.primal),
        "vertices": int(martingale_vertices(market).shape[0]),
        "rows": [_row_json(r, key) for r in rows],
        "seed": cfg.seed,
        "note": WITNESS_NOTE,
    }
    if not prob.q_above_two:
        report["warning"] = "q <= 2: the shortfall norm is outside the uniformly smooth range (q > 2)"
    _emit(buf.getvalue(), cfg.out)
    report_path = inp.get("report") or (str(Path(cfg.out).with_suffix(".json")) if cfg.out else None)
    if report_path:
        write_atomic(report_path, dump_json(report))
    return EXIT_OK


def run_hedge(cfg: RunConfig) -> int:
    return _sweep_command(cfg, "alpha")


def run_sweep(cfg: RunConfig) -> int:
    return _sweep_command(cfg, "cap")


def run_selftest_command(cfg: RunConfig) -> int:
    st = SelftestConfig(seed=cfg.seed, tol=cfg.tol)
    failed = 0

    def show(res):
        nonlocal failed
        failed += not res.ok
        mark = "PASS" if res.ok else "FAIL"
        print(f"{mark} {res.name}: {res.passed}/{res.total} (worst {res.worst:.3g})", flush=True)

    run_selftest(st, show)
    print(f"seed {cfg.seed}: {'all suites passed' if not failed else f'{failed} suite(s) failed'}")
    return EXIT_OK if not failed else EXIT_SELFTEST


COMMANDS = {
    "capital": run_capital,
    "accept": run_accept,
    "rho": run_rho,
    "hedge": run_hedge,
    "sweep": run_sweep,
    "selftest": run_selftest_command,
}


# --------------------------------------------------------------------------
# argument parsing


def _seed(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return v


class _Parser(argparse.ArgumentParser):
    # usage errors share exit code 1 with other input errors; 2 means unbounded
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="capreq", description="Minimal acceptable capital in finite scenario-tree markets.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, out_help="output file (default: standard output)"):
        p.add_argument("--seed", type=_seed, default=0, help="random seed, recorded in the output")
        p.add_argument("--tol", type=float, default=DEFAULT_TOL, help="tolerance for duality and identity checks")
        p.add_argument("--out", help=out_help)

    def market_args(p, scenarios=True):
        p.add_argument("--market", required=True, help="market JSON file")
        if scenarios:
            p.add_argument("--scenarios", required=True, help="scenario JSON file")

    p = sub.add_parser("capital", help="minimal acceptable capital, primal and dual")
    market_args(p)
    p.add_argument("--certificate-samples", type=int, default=0, help="hull points for the sampled certificate check")
    common(p)

    p = sub.add_parser("accept", help="test whether an initial capital is acceptable")
    p.add_argument("--x", type=float, required=True)
    market_args(p)
    common(p)

    p = sub.add_parser("rho", help="risk of a claim before and after hedging")
    p.add_argument("--claim", required=True, help="claim JSON file")
    market_args(p)
    common(p)

    for name, key, help_ in (
        ("hedge", "alphas", "seller's price across shortfall levels"),
        ("sweep", "caps", "seller's price across density norm caps"),
    ):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--mu", type=float, default=0.1)
        p.add_argument("--sigma1", type=float, default=0.3)
        p.add_argument("--sigma2", type=float, default=0.4)
        p.add_argument("--steps", type=int, default=1)
        p.add_argument("--horizon", type=float, default=1.0)
        p.add_argument("--s0", type=float, default=1.0)
        p.add_argument("--strike", type=float, default=1.0)
        p.add_argument("--market", help="market JSON file instead of the two-factor tree")
        p.add_argument("--claim", help="claim JSON file (default: call at --strike)")
        p.add_argument("--q", type=float, default=2.0, help="shortfall moment order")
        if name == "hedge":
            p.add_argument("--alphas", default="0", help="comma-separated, ascending")
            p.add_argument("--cap", type=float, default=None, help="L2 cap on densities")
        else:
            p.add_argument("--caps", required=True, help="comma-separated, ascending")
            p.add_argument("--alpha", type=float, default=0.0)
        p.add_argument("--report", help="JSON report path (default: --out with .json suffix)")
        common(p, "CSV output file (default: standard output)")

    p = sub.add_parser("selftest", help="run the randomized suites")
    p.add_argument("--seed", type=_seed, default=42)
    p.add_argument("--tol", type=float, default=DEFAULT_TOL)
    return ap


def config_from_args(args: argparse.Namespace) -> RunConfig:
    skip = {"command", "out", "seed", "tol"}
    inputs = {k: v for k, v in vars(args).items() if k not in skip}
    return RunConfig(args.command, inputs, getattr(args, "out", None), args.seed, args.tol)


def _setup_logging() -> None:
    level = os.environ.get(LOG_ENV, "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    cfg = config_from_args(args)
    try:
        return COMMANDS[cfg.command](cfg)
    except (CapreqError, OSError, ValueError, KeyError, TypeError) as exc:
        print(f"capreq {cfg.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
