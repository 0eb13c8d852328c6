"""Command line front end: ``gdm <subcommand> --scenario FILE [--out DIR] [--n N] [--gamma G]``.

Every subcommand writes ``<subcommand>.json`` (deterministic: sorted keys,
floats with 17 significant digits, the SHA-256 of the scenario file) and a
``<subcommand>.timing.json`` sidecar with wall-clock runtimes.  ``flow``
also writes ``flow.csv`` (``t,D,I``) and ``flow_densities.csv`` (``t`` then
the flattened density); ``geodesic`` writes ``geodesic.csv`` (``t,H,misfit``).

Exit codes: 0 all checks pass, 1 an inequality/identity check failed,
2 input error, 3 solver failure, 4 only not-applicable checks.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import kernels
from .errors import InputError, SolverFailure
from .flow import estimate_decay_rate, run_flow
from .functionals import DensityField
from .gamma_calculus import be_criterion_ratio, criterion_kappa, poincare_bound, prop52_check
from .geodesic import wasserstein_gamma
from .geometry import yano_check
from .scenarios import load_scenario, probe_potential, random_density
from .verify import (VerifyReport, poincare_eigenpair, verify_hypercontractivity, verify_lsi, verify_ph1i,
                     verify_poincare, verify_talagrand)

EXIT_OK, EXIT_VIOLATED, EXIT_INPUT, EXIT_SOLVER, EXIT_NA = 0, 1, 2, 3, 4
COMMANDS = ("yano", "kappa", "poincare", "flow", "lsi", "talagrand", "ph1i", "geodesic", "gamma2", "selftest")
MAX_SNAPSHOTS = 50


# ------------------------------------------------------------ serialization
def _encode(obj):
    if isinstance(obj, dict):
        items = sorted((str(k), v) for k, v in obj.items())
        return "{" + ", ".join(json.dumps(k) + ": " + _encode(v) for k, v in items) + "}"
    if isinstance(obj, (list, tuple)):
        return "[" + ", ".join(_encode(v) for v in obj) + "]"
    if isinstance(obj, (bool, np.bool_)):
        return "true" if obj else "false"
    if obj is None:
        return "null"
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return "%.17g" % x if math.isfinite(x) else "null"
    if isinstance(obj, np.ndarray):
        return _encode(obj.tolist())
    return json.dumps(str(obj))


def dumps(obj) -> str:
    """Deterministic JSON text (sorted keys, ``%.17g`` floats, NaN/inf -> null)."""
    return _encode(obj) + "\n"


def write_atomic(path, text):
    folder = os.path.dirname(os.path.abspath(path))
    os.makedirs(folder, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(header, rows):
    lines = [",".join(header)]
    lines.extend(",".join("%.17g" % float(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------- commands
class Outcome:
    def __init__(self):
        self.reports: list[VerifyReport] = []
        self.results: dict = {}
        self.files: dict = {}  # name -> text

    def add(self, rep):
        self.reports.append(rep)
        return rep

    def check(self, name, lhs, rhs, passed, **extra):
        """Record an identity/tolerance check as a report (margin = rhs - lhs)."""
        rep = VerifyReport(name, float(lhs), float(rhs), float(rhs) - float(lhs), bool(passed), True, {}, 0.0, extra)
        return self.add(rep)


def _kappa_info(rep):
    return {"kappa": rep.kappa, "positive": rep.positive, "branch": rep.branch}


def cmd_yano(sc, grid, mu, rho0, out):
    for which in (0, 1):
        lhs, rhs, gap = yano_check(mu, sc.gamma, probe_potential(grid, which))
        out.check(f"yano_potential_{which}", gap, sc.tol, gap <= sc.tol, side_lhs=lhs, side_rhs=rhs, relative_gap=gap)
        out.results[f"potential_{which}"] = {"lhs": lhs, "rhs": rhs, "relative_gap": gap}


def cmd_kappa(sc, grid, mu, rho0, out):
    out.results["criterion"] = _kappa_info(criterion_kappa(mu, sc.gamma))
    out.results["poincare_bound"] = _kappa_info(poincare_bound(mu, sc.gamma))


def cmd_poincare(sc, grid, mu, rho0, out):
    lam, f = poincare_eigenpair(mu, sc.gamma, seed=sc.seed)
    bound = poincare_bound(mu, sc.gamma).kappa
    out.results.update({"lambda_opt": lam, "lambda_bound": bound})
    out.check("lambda_opt_vs_bound", bound - 1e-3, lam, lam >= bound - 1e-3)
    out.add(verify_poincare(f, mu, sc.gamma, lam))
    rng = np.random.default_rng(sc.seed)
    g = random_density(grid, rng).values
    g = g - grid.integrate(g * mu.values) / grid.integrate(mu.values)
    rep = verify_poincare(g, mu, sc.gamma, bound)
    rep.name = "poincare_bound_random"
    out.add(rep)


def cmd_flow(sc, grid, mu, rho0, out):
    nsteps = max(1, int(round(sc.tmax / sc.dt)))
    every = max(1, nsteps // MAX_SNAPSHOTS)
    trace = run_flow(rho0, mu, sc.gamma, sc.tmax, sc.dt, record_every=every)
    kappa = criterion_kappa(mu, sc.gamma).kappa
    out.add(verify_hypercontractivity(trace, kappa))
    out.check("mass_conservation", trace.mass_drift, 1e-10, trace.mass_drift <= 1e-10)
    out.results.update({
        "kappa": kappa,
        "steps": nsteps,
        "final_D": trace.divergence_series[-1],
        "final_I": trace.fisher_series[-1],
        "mass_drift": trace.mass_drift,
        "min_density": trace.min_density,
    })
    n = len(trace.times)
    if n >= 5 and np.all(trace.divergence_series > 0):
        out.results["decay_rate"] = estimate_decay_rate(trace, (n // 2, n))
    rows = zip(trace.times, trace.divergence_series, trace.fisher_series)
    out.files["flow.csv"] = csv_text(("t", "D", "I"), rows)
    header = ["t"] + [f"rho{i}" for i in range(grid.size)]
    out.files["flow_densities.csv"] = csv_text(header, ([t, *np.ravel(r)] for t, r in zip(trace.density_times, trace.densities)))


def cmd_lsi(sc, grid, mu, rho0, out):
    kappa = criterion_kappa(mu, sc.gamma).kappa
    out.add(verify_lsi(rho0, mu, sc.gamma, kappa))


def cmd_talagrand(sc, grid, mu, rho0, out):
    kappa = criterion_kappa(mu, sc.gamma).kappa
    out.add(verify_talagrand(rho0, mu, sc.gamma, kappa))


def cmd_ph1i(sc, grid, mu, rho0, out):
    out.add(verify_ph1i(rho0, mu))


def cmd_geodesic(sc, grid, mu, rho0, out):
    res = wasserstein_gamma(rho0, mu, sc.gamma)
    if not res.converged:
        raise SolverFailure(f"shooting did not converge (misfit {res.misfit:.3e})")
    path = res.path
    miss = [np.sqrt(grid.integrate((path.densities[k] - mu.values) ** 2)) for k in range(len(path.times))]
    out.results.update({
        "distance": res.distance,
        "misfit": res.misfit,
        "hamiltonian_drift": path.hamiltonian_drift,
    })
    out.files["geodesic.csv"] = csv_text(("t", "H", "misfit"), zip(path.times, path.hamiltonian_series, miss))


def cmd_gamma2(sc, grid, mu, rho0, out):
    for which in (0, 1):
        lhs, rhs, gap = prop52_check(rho0, mu, sc.gamma, probe_potential(grid, which))
        out.check(f"gamma2_identity_{which}", gap, sc.tol, gap <= sc.tol, side_lhs=lhs, side_rhs=rhs, relative_gap=gap)
    if not np.array_equal(rho0.values, mu.values):
        out.results["be_ratio"] = be_criterion_ratio(rho0, mu, sc.gamma)
        out.results["kappa"] = criterion_kappa(mu, sc.gamma).kappa


SCENARIO_COMMANDS = {
    "yano": cmd_yano,
    "kappa": cmd_kappa,
    "poincare": cmd_poincare,
    "flow": cmd_flow,
    "lsi": cmd_lsi,
    "talagrand": cmd_talagrand,
    "ph1i": cmd_ph1i,
    "geodesic": cmd_geodesic,
    "gamma2": cmd_gamma2,
}


# ---------------------------------------------------------------- selftest
def _selftest_cases():
    from .elliptic import h_minus1_distance
    from .functionals import divergence_gamma, fisher_gamma
    from .gamma_calculus import gamma1
    from .geometry import grad_divergence, hessian_at_equilibrium, j_form
    from .grid import build_grid
    from .scenarios import parse_scenario

    g1 = build_grid(dim=1, topology="periodic", n=32)
    g2 = build_grid(dim=2, topology="reflecting", n=(16, 20), extent=(1.0, 1.5))
    x = g1.coords()[0]
    rho = DensityField.normalized(g1, 1.0 + 0.2 * np.sin(2 * np.pi * x))
    uni = DensityField.uniform(g1)

    def sbp():
        rng = np.random.default_rng(0)
        f, p = rng.standard_normal(g2.shape), rng.standard_normal(g2.shape)
        lhs = g2.l2_inner(g2.gradient(f), g2.gradient(p))
        return abs(lhs + g2.integrate(f * g2.divergence(g2.gradient(p)))) <= 1e-12 * max(1.0, abs(lhs))

    def bad_gamma():
        try:
            parse_scenario("dim=1\nn=64\ngamma=abc\nmu=uniform\n")
        except InputError as exc:
            return exc.line == 3
        return False

    return {
        "summation_by_parts": sbp,
        "divergence_at_equilibrium": lambda: divergence_gamma(uni, uni, 0.5) == 0.0 and fisher_gamma(uni, uni, 0.5) == 0.0,
        "gradient_at_equilibrium": lambda: not np.any(grad_divergence(rho, rho, 0.5)),
        "kappa_uniform": lambda: criterion_kappa(uni, 0.5).kappa == 0.0,
        "hessian_constant_potential": lambda: hessian_at_equilibrium(rho, 1.0, np.ones(g1.shape)) == 0.0,
        "gamma1_constant": lambda: not np.any(gamma1(np.sin(2 * np.pi * x), np.ones(g1.shape), rho, 0.5)),
        "j_form_uniform": lambda: j_form(uni, uni, np.sin(2 * np.pi * x)).value == 0.0,
        "h_minus1_self": lambda: h_minus1_distance(rho, rho) == 0.0,
        "lsi_equilibrium": lambda: verify_lsi(rho, rho, 1.0, 1.0).passed,
        "ph1i_equilibrium": lambda: verify_ph1i(rho, rho).passed,
        "poincare_zero": lambda: verify_poincare(np.zeros(g1.shape), rho, 1.0, 1.0).passed,
        "hyper_not_applicable": lambda: not verify_hypercontractivity(([0.0, 1.0], [1.0, 0.5]), 0.0).applicable,
        "minimal_scenario": lambda: parse_scenario("dim=1\nn=64\ngamma=1\nmu=uniform\nrho0=trig:a1=0.1").tmax == 0.1,
        "bad_gamma_line": bad_gamma,
    }


def _threads():
    raw = os.environ.get("GDM_THREADS", "")
    try:
        return max(1, int(raw)) if raw else 1
    except ValueError:
        raise InputError(f"GDM_THREADS must be an integer, got {raw!r}") from None


def run_selftest(out):
    cases = _selftest_cases()

    def run(name):
        try:
            return name, bool(cases[name]())
        except Exception as exc:  # a crashing case is a failing case
            return name, f"error: {exc}"

    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        results = dict(pool.map(run, sorted(cases)))
    for name, ok in results.items():
        out.check(name, 0.0, 0.0, ok is True)
        out.results[name] = ok


# ------------------------------------------------------------------- main
def build_parser():
    parser = argparse.ArgumentParser(prog="gdm", description="Generalized density manifold checks.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--scenario", help="scenario file (key = value lines)")
    parser.add_argument("--out", default=".", help="output directory (default: current)")
    parser.add_argument("--n", type=int, default=None, help="override grid size")
    parser.add_argument("--gamma", type=float, default=None, help="override gamma")
    return parser


def exit_code(reports):
    if not reports:
        return EXIT_OK
    applicable = [r for r in reports if r.applicable]
    if not applicable:
        return EXIT_NA
    return EXIT_OK if all(r.passed for r in applicable) else EXIT_VIOLATED


def main(argv=None):
    args = build_parser().parse_args(argv)
    out = Outcome()
    started = time.perf_counter()
    doc = {"command": args.command, "backend": kernels.BACKEND}
    code = EXIT_OK
    try:
        if args.command == "selftest":
            run_selftest(out)
        else:
            if not args.scenario:
                raise InputError(f"{args.command} needs --scenario")
            sc = load_scenario(args.scenario).with_overrides(n=args.n, gamma=args.gamma)
            doc.update({"scenario_digest": sc.digest, "scenario": sc.to_dict(),
                        "overrides": {"n": args.n, "gamma": args.gamma}})
            grid = sc.grid()
            mu, rho0 = sc.densities(grid)
            SCENARIO_COMMANDS[args.command](sc, grid, mu, rho0, out)
        code = exit_code(out.reports)
    except InputError as exc:
        code = EXIT_INPUT
        doc["error"] = str(exc)
    except SolverFailure as exc:
        code = EXIT_SOLVER
        doc["error"] = str(exc)
    elapsed = time.perf_counter() - started
    doc.update({
        "reports": [r.to_dict() for r in out.reports],
        "results": out.results,
        "pass": code == EXIT_OK,
        "exit_code": code,
    })
    folder = args.out
    try:
        write_atomic(os.path.join(folder, f"{args.command}.json"), dumps(doc))
        write_atomic(os.path.join(folder, f"{args.command}.timing.json"), dumps({"command": args.command, "seconds": elapsed}))
        for name, text in out.files.items():
            write_atomic(os.path.join(folder, name), text)
    except OSError as exc:
        print(f"gdm: cannot write outputs to {folder}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    status = {EXIT_OK: "pass", EXIT_VIOLATED: "violated", EXIT_INPUT: "input error",
              EXIT_SOLVER: "solver failure", EXIT_NA: "not applicable"}[code]
    msg = f"gdm {args.command}: {status}"
    if "error" in doc:
        msg += f" ({doc['error']})"
    print(msg, file=sys.stderr if code in (EXIT_INPUT, EXIT_SOLVER) else sys.stdout)
    return code


if __name__ == "__main__":
    sys.exit(main())
