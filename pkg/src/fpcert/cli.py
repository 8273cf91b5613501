"""Command-line front end.

Four subcommands: ``certify`` writes a certificate JSON, ``solve`` a trace
CSV plus summary JSON, ``rates`` a trace CSV plus rate-fit JSON and the
trajectory inequality reports, ``region`` a membership-grid CSV.

Exit codes: 0 on PASS / converged, 2 on FAIL / diverged / non-converged,
1 on a usage error (malformed config, missing file, bad field).  Runs with a
fixed seed are byte-for-byte reproducible.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import operators, problems, reports
from .certify import SamplingPlan, certify, estimate_mu, range_region
from .iterate import (
    StopReason,
    check_residual_summability,
    check_sandwich,
    fit_rate,
    little_o_proxy,
    picard,
)
from .metrics import L1, L2, primal_dual_metric

__all__ = ["main", "execute", "RunConfig", "UsageError"]

COMMANDS = ("certify", "solve", "rates", "region")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FAIL = 2


class UsageError(ValueError):
    """Configuration problem; the message names the offending field."""


@dataclass
class RunConfig:
    command: str
    problem: Optional[str] = None
    operator: Optional[str] = None
    params: dict = field(default_factory=dict)
    output_dir: Optional[str] = None
    property_name: str = "gan"
    norm: str = "l2"
    raw: dict = field(default_factory=dict)

    def validate(self):
        if self.command not in COMMANDS:
            raise UsageError(f"field 'command' must be one of {COMMANDS}")
        if self.command == "certify":
            if bool(self.problem) == bool(self.operator):
                raise UsageError(
                    "field 'problem'/'operator': certify needs exactly one of them"
                )
        if self.command in ("solve", "rates"):
            if not self.problem and not self.operator:
                raise UsageError(
                    f"field 'problem': {self.command} needs a problem or operator config"
                )
        if self.command == "region":
            for key in ("x", "xhat"):
                point = self.raw.get(key)
                if not isinstance(point, list) or len(point) != 2:
                    raise UsageError(f"field '{key}': region needs a 2-D point")
        if self.norm not in ("l2", "l1", "w"):
            raise UsageError("field 'norm' must be 'l2', 'l1' or 'w'")


def load_run_config(path, command, overrides):
    try:
        with open(path, "r", encoding="utf-8") as handle:
            raw = json.load(handle)
    except FileNotFoundError as err:
        raise UsageError(f"field 'config': file not found: {path}") from err
    except json.JSONDecodeError as err:
        raise UsageError(f"field 'config': not valid JSON ({err})") from err
    if not isinstance(raw, dict):
        raise UsageError("field 'config': top level must be an object")

    base = os.path.dirname(os.path.abspath(path))

    def resolve(entry):
        return None if entry is None else os.path.join(base, entry)

    params = dict(raw.get("params", {}))
    for key, value in overrides.items():
        if value is not None:
            params[key] = value
    config = RunConfig(
        command=command,
        problem=resolve(raw.get("problem")),
        operator=resolve(raw.get("operator")),
        params=params,
        output_dir=overrides.get("out") or raw.get("output_dir"),
        property_name=str(raw.get("property", "gan")),
        norm=str(raw.get("norm", "l2")),
        raw=raw,
    )
    config.validate()
    return config


def load_operator_config(path):
    """Build an Operator from a small JSON description."""
    try:
        with open(path, "r", encoding="utf-8") as handle:
            config = json.load(handle)
    except FileNotFoundError as err:
        raise UsageError(f"field 'operator': file not found: {path}") from err
    except json.JSONDecodeError as err:
        raise UsageError(f"field 'operator': not valid JSON ({err})") from err
    kind = config.get("type")
    if kind == "soft_threshold":
        lam = float(config.get("lambda", 1.0))
        dim = int(config.get("dim", 1))
        return operators.prox_operator(
            operators.l1_prox(lam), 1.0, dim,
            fixed_point_hint=np.zeros(dim), label=f"soft-threshold(lam={lam:g})",
        )
    if kind == "block_soft_threshold":
        lam = float(config.get("lambda", 1.0))
        dim = int(config.get("dim", 1))
        return operators.prox_operator(
            operators.l2_prox(lam), 1.0, dim,
            fixed_point_hint=np.zeros(dim), label=f"block-soft-threshold(lam={lam:g})",
        )
    if kind == "affine":
        alpha = float(config.get("alpha", 1.0))
        z = np.asarray(config.get("z", [0.0]), dtype=float)
        return operators.affine(alpha, z)
    if kind == "identity":
        return operators.identity(int(config.get("dim", 1)))
    raise UsageError(f"field 'type': unknown operator type {config.get('type')!r}")


def _resolve_target(config):
    """Return (operator, problem, step sizes) for the configured target."""
    problem = None
    beta = config.params.get("beta")
    eta = config.params.get("eta")
    lam = config.params.get("lambda")
    if config.problem:
        try:
            problem = problems.load_problem(config.problem, lam=lam)
        except FileNotFoundError as err:
            raise UsageError(f"field 'problem': file not found: {config.problem}") from err
        except (ValueError, json.JSONDecodeError) as err:
            raise UsageError(f"field 'problem': {err}") from err
        beta, eta = problems.default_step_sizes(problem, beta, eta)
        op = problems.build_operator(problem, beta, eta)
    else:
        op = load_operator_config(config.operator)
    return op, problem, beta, eta


def _norm_spec(config, problem, beta, eta):
    if config.norm == "l2":
        return L2
    if config.norm == "l1":
        return L1
    if problem is None or problem.kind != "analysis_l1":
        raise UsageError("field 'norm': 'w' needs an analysis_l1 problem")
    return primal_dual_metric(beta, eta, problem.b_mat).norm_spec()


def _plan(config, dim):
    params = config.params
    seed = int(params.get("seed", 0))
    n_pairs = int(params.get("n_pairs", 250))
    scales = config.raw.get("radius_scales")
    kwargs = {"n_pairs": n_pairs, "seed": seed}
    if scales:
        kwargs["radius_scales"] = tuple(float(s) for s in scales)
    return SamplingPlan(**kwargs)


def _output_dir(config):
    out = config.output_dir
    if out is None:
        stamp = time.strftime("%Y%m%d-%H%M%S")
        out = f"{config.command}-{stamp}"
    reports.ensure_dir(out)
    return out


def _run_certify(config):
    op, problem, beta, eta = _resolve_target(config)
    norm_spec = _norm_spec(config, problem, beta, eta)
    plan = _plan(config, op.dim)
    params = {
        key: float(config.params[key])
        for key in ("gamma", "mu", "rho")
        if config.params.get(key) is not None
    }
    tol = float(config.params.get("tol", 1e-10))
    try:
        cert = certify(op, config.property_name, params, norm_spec, plan, tol=tol)
    except ValueError as err:
        raise UsageError(f"field 'params': {err}") from err
    out = _output_dir(config)
    reports.write_json(os.path.join(out, "certificate.json"), cert.to_dict())
    return EXIT_OK if cert.passed else EXIT_FAIL


def _solve_trace(config, op, problem, norm_spec):
    params = config.params
    max_iter = int(params.get("max_iter", 100_000))
    res_tol = float(params.get("tol", 1e-10))
    x0 = config.raw.get("x0")
    if x0 is not None:
        x0 = np.asarray(x0, dtype=float)
        if x0.shape != (op.dim,):
            raise UsageError(f"field 'x0': expected {op.dim} entries")
    else:
        x0 = np.zeros(op.dim)
    ref = None
    if problem is not None and problem.exact_solution is not None:
        ref = problem.exact_solution
    return picard(op, x0, max_iter=max_iter, res_tol=res_tol, ref=ref,
                  norm_spec=norm_spec)


def _run_solve(config):
    op, problem, beta, eta = _resolve_target(config)
    norm_spec = _norm_spec(config, problem, beta, eta)
    trace = _solve_trace(config, op, problem, norm_spec)
    out = _output_dir(config)
    step_params = {}
    if beta is not None:
        step_params["beta"] = float(beta)
    if eta is not None:
        step_params["eta"] = float(eta)
    reports.write_trace_csv(os.path.join(out, "trace.csv"), trace, step_params)
    summary = {
        "stop_reason": trace.stop_reason.value,
        "k_final": trace.k_final,
        "final_residual": trace.final_residual,
        "norm": trace.norm_spec.describe(),
        "operator": trace.label,
    }
    summary.update(step_params)
    reports.write_json(os.path.join(out, "summary.json"), summary)
    return EXIT_OK if trace.converged else EXIT_FAIL


def _run_rates(config):
    op, problem, beta, eta = _resolve_target(config)
    norm_spec = _norm_spec(config, problem, beta, eta)
    trace = _solve_trace(config, op, problem, norm_spec)
    out = _output_dir(config)
    step_params = {} if beta is None else {"beta": float(beta)}
    if eta is not None:
        step_params["eta"] = float(eta)
    reports.write_trace_csv(os.path.join(out, "trace.csv"), trace, step_params)

    gamma = float(config.params.get("gamma", 2.0))
    model = str(config.raw.get("model", "exponential"))
    failed = trace.stop_reason is StopReason.DIVERGED
    checks = {}

    try:
        fit = fit_rate(trace.residuals, model)
        reports.write_json(os.path.join(out, "rate_fit.json"), fit.to_dict())
    except ValueError as err:
        reports.write_json(os.path.join(out, "rate_fit.json"), {"error": str(err)})
        fit = None

    proxy = little_o_proxy(trace.residuals, gamma)
    checks["little_o_proxy"] = proxy.to_dict()
    if not proxy.verdict:
        failed = True

    xhat = None
    if op.fixed_point_hint is not None:
        xhat = op.fixed_point_hint
    elif problem is not None and problem.exact_solution is not None:
        xhat = problem.exact_solution
    if xhat is not None:
        mu = config.params.get("mu")
        mu = float(mu) if mu is not None else estimate_mu(
            op, gamma, norm_spec, _plan(config, op.dim)
        )
        summ = check_residual_summability(trace, gamma, mu, xhat)
        checks["summability"] = summ.to_dict()
        if not summ.verdict:
            failed = True
        if trace.converged and 0 < mu <= 1:
            sandwich = check_sandwich(trace, xhat, mu)
            checks["sandwich"] = sandwich.to_dict()
            if not sandwich.verdict:
                failed = True
        else:
            checks["sandwich"] = {"skipped": "needs a converged trace and mu <= 1"}
    else:
        checks["summability"] = {"skipped": "no fixed point available"}
        checks["sandwich"] = {"skipped": "no fixed point available"}

    checks["stop_reason"] = trace.stop_reason.value
    reports.write_json(os.path.join(out, "checks.json"), checks)
    return EXIT_FAIL if failed else EXIT_OK


def _run_region(config):
    params = config.params
    x = np.asarray(config.raw["x"], dtype=float)
    xhat = np.asarray(config.raw["xhat"], dtype=float)
    gamma = float(params.get("gamma", 2.0))
    mu = float(params.get("mu", 1.0))
    resolution = int(config.raw.get("resolution", 201))
    try:
        grid = range_region(x, xhat, gamma, mu, resolution)
    except ValueError as err:
        raise UsageError(f"field 'x'/'xhat': {err}") from err
    out = _output_dir(config)
    reports.write_region_csv(os.path.join(out, "region.csv"), grid)
    return EXIT_OK


def execute(config):
    """Run a validated RunConfig; returns the process exit status."""
    config.validate()
    runner = {
        "certify": _run_certify,
        "solve": _run_solve,
        "rates": _run_rates,
        "region": _run_region,
    }[config.command]
    return runner(config)


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on usage problems; the documented usage
    # exit code here is 1, so convert instead of exiting.
    def error(self, message):
        raise UsageError(message)


def build_parser():
    parser = _Parser(prog="fpcert", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, doc in (
        ("certify", "sample an operator-class inequality and write a certificate"),
        ("solve", "run the fixed-point iteration and write its trace"),
        ("rates", "run, fit decay rates, and check trajectory inequalities"),
        ("region", "emit the admissible-range membership grid"),
    ):
        cmd = sub.add_parser(name, help=doc)
        cmd.add_argument("--config", required=True, help="run config JSON")
        cmd.add_argument("--out", help="output directory (default: command + timestamp)")
        cmd.add_argument("--seed", type=int, help="override the sampling seed")
        cmd.add_argument("--gamma", type=float, help="exponent parameter")
        cmd.add_argument("--mu", type=float, help="averagedness parameter")
        cmd.add_argument("--rho", type=float, help="contraction factor")
        cmd.add_argument("--beta", type=float, help="primal step size")
        cmd.add_argument("--eta", type=float, help="dual step size")
        cmd.add_argument("--lambda", dest="lam", type=float,
                         help="regularization weight override")
        cmd.add_argument("--tol", type=float, help="tolerance (slack or residual)")
        cmd.add_argument("--max-iter", dest="max_iter", type=int,
                         help="iteration budget")
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        overrides = {
            "seed": args.seed,
            "gamma": args.gamma,
            "mu": args.mu,
            "rho": args.rho,
            "beta": args.beta,
            "eta": args.eta,
            "lambda": args.lam,
            "tol": args.tol,
            "max_iter": args.max_iter,
            "out": args.out,
        }
        config = load_run_config(args.config, args.command, overrides)
        return execute(config)
    except UsageError as err:
        print(f"fpcert: error: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
