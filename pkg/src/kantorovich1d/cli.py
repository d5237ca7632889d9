"""Command-line front end: config parsing, solve/sweep/verify/oracle modes.

Config files are YAML documents with the keys

    omega:      {lo, hi, density: {kind, ...}}
    omega_star: {lo, hi, density: {kind, ...}}
    k_values:   [1, 2, 4, ...]          # optional, default geometric 1..1024
    tolerances: {quad_abs_tol, root_abs_tol, max_quad_depth, max_root_iters}
    output:     path.csv                # optional

Unknown keys are rejected with the offending key named.  Exit codes:
0 success, 2 config error, 3 numerical failure, 4 invariant failure.
"""

from __future__ import annotations

import argparse
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
import yaml

from . import energy as energy_mod
from . import oracle as oracle_mod
from .density import (
    Density,
    DensitySpec,
    TransportProblem,
    make_density,
    make_problem,
    normalize,
    validate_problem,
)
from .dual_algebra import K_CAP, lambda_from_slope
from .errors import (
    BalanceError,
    ConfigError,
    LayoutError,
    PositivityError,
    QuadratureError,
    SolverError,
)
from .numerics import Tolerances
from .potential import PotentialSolution, solve_experimental, solve_potential

DEFAULT_K_VALUES = tuple(float(2 ** i) for i in range(11))  # 1, 2, 4, ..., 1024

SWEEP_HEADER = "k,C_k,D_k,I_primal,I_dual,gap,K_k,K_tent,deficit,sup_slope,sup_u,el_residual,wall_ms"
SAMPLES_HEADER = "x,side,theta,lambda,eta,u"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_INVARIANT = 4


@dataclass(frozen=True)
class RunConfig:
    problem: TransportProblem
    k_values: Tuple[float, ...]
    tolerances: Tolerances
    output: Optional[str]
    mode: str = "solve"
    experimental: bool = False


def _require_mapping(node, name):
    if not isinstance(node, dict):
        raise ConfigError(f"'{name}' must be a mapping, got {type(node).__name__}")
    return node


def _reject_unknown(node: dict, allowed, name):
    unknown = set(node) - set(allowed)
    if unknown:
        key = sorted(unknown)[0]
        raise ConfigError(f"unknown key '{key}' in '{name}' (expected one of {sorted(allowed)})")


def _parse_density(node, name) -> Density:
    node = _require_mapping(node, name)
    _reject_unknown(node, {"lo", "hi", "density"}, name)
    for req in ("lo", "hi", "density"):
        if req not in node:
            raise ConfigError(f"'{name}' is missing required key '{req}'")
    dens = _require_mapping(node["density"], f"{name}.density")
    _reject_unknown(dens, {"kind", "coefficients", "nodes", "values"}, f"{name}.density")
    kind = dens.get("kind")
    if kind not in ("uniform", "polynomial", "tabulated"):
        raise ConfigError(
            f"'{name}.density.kind' must be uniform|polynomial|tabulated, got {kind!r}"
        )
    try:
        spec = DensitySpec(
            kind=kind,
            interval=(float(node["lo"]), float(node["hi"])),
            coefficients=tuple(dens["coefficients"]) if "coefficients" in dens else None,
            nodes=tuple(dens["nodes"]) if "nodes" in dens else None,
            values=tuple(dens["values"]) if "values" in dens else None,
        )
        return make_density(spec)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad '{name}' section: {exc}") from exc


def parse_config(text: str, mode: str = "solve", experimental: bool = False) -> RunConfig:
    """Parse and validate a YAML config document into a RunConfig."""
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from exc
    doc = _require_mapping(doc, "config")
    _reject_unknown(doc, {"omega", "omega_star", "k_values", "tolerances", "output"}, "config")
    for req in ("omega", "omega_star"):
        if req not in doc:
            raise ConfigError(f"config is missing required section '{req}'")

    source = _parse_density(doc["omega"], "omega")
    sink = _parse_density(doc["omega_star"], "omega_star")
    problem = make_problem(source, sink)
    if problem.layout != "disjoint" and not experimental:
        raise ConfigError(
            f"supports are {problem.layout}; pass --experimental-overlap to run anyway"
        )

    ks = doc.get("k_values", list(DEFAULT_K_VALUES))
    if not isinstance(ks, list) or not ks:
        raise ConfigError("'k_values' must be a non-empty list of reals")
    try:
        ks = [float(k) for k in ks]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"'k_values' entries must be reals: {exc}") from exc
    if any(b < a for a, b in zip(ks, ks[1:])):
        raise ConfigError("k_values must be ascending")
    if ks[0] < 1.0 or ks[-1] > K_CAP:
        raise ConfigError(f"k_values must lie in [1, {K_CAP:.0f}]")

    tnode = _require_mapping(doc.get("tolerances", {}), "tolerances")
    _reject_unknown(
        tnode, {"quad_abs_tol", "root_abs_tol", "max_quad_depth", "max_root_iters"}, "tolerances"
    )
    try:
        tol = Tolerances(
            quad_abs_tol=float(tnode.get("quad_abs_tol", 1e-10)),
            root_abs_tol=float(tnode.get("root_abs_tol", 1e-12)),
            max_quad_depth=int(tnode.get("max_quad_depth", 40)),
            max_root_iters=int(tnode.get("max_root_iters", 200)),
        )
    except ValueError as exc:
        raise ConfigError(f"bad 'tolerances' section: {exc}") from exc

    output = doc.get("output")
    if output is not None and not isinstance(output, str):
        raise ConfigError("'output' must be a path string")

    return RunConfig(
        problem=problem,
        k_values=tuple(ks),
        tolerances=tol,
        output=output,
        mode=mode,
        experimental=experimental,
    )


def _fmt(v: float) -> str:
    return f"{float(v):.17g}"


@dataclass(frozen=True)
class SweepRow:
    k: float
    C_k: float
    D_k: float
    I_primal: float
    I_dual: float
    gap: float
    K_k: float
    K_tent: float
    deficit: float
    sup_slope: float
    sup_u: float
    el_residual: float
    wall_ms: float

    def as_csv(self) -> str:
        return ",".join(
            _fmt(v)
            for v in (
                self.k,
                self.C_k,
                self.D_k,
                self.I_primal,
                self.I_dual,
                self.gap,
                self.K_k,
                self.K_tent,
                self.deficit,
                self.sup_slope,
                self.sup_u,
                self.el_residual,
                self.wall_ms,
            )
        )


def emit_csv(rows: Sequence[SweepRow], path) -> None:
    """Write the sweep table: fixed header, 17 significant digits, LF endings."""
    lines = [SWEEP_HEADER] + [r.as_csv() for r in rows]
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


def sweep_row(k: float, problem: TransportProblem, tol: Tolerances) -> SweepRow:
    start = time.perf_counter()
    sol = solve_potential(k, problem, tol)
    I_p = energy_mod.primal_energy(k, sol, tol=tol)
    I_d = energy_mod.dual_energy(k, sol, tol=tol)
    K_k = energy_mod.kantorovich_value(sol, tol=tol)
    K_tent = oracle_mod.tent_value(problem)
    res = energy_mod.el_residual(k, sol)
    wall_ms = (time.perf_counter() - start) * 1e3
    return SweepRow(
        k=k,
        C_k=sol.C_k,
        D_k=sol.D_k,
        I_primal=I_p,
        I_dual=I_d,
        gap=abs(I_p - I_d),
        K_k=K_k,
        K_tent=K_tent,
        deficit=K_tent - K_k,
        sup_slope=sol.sup_slope,
        sup_u=sol.sup_u,
        el_residual=res.finite_difference,
        wall_ms=wall_ms,
    )


def run_sweep(config: RunConfig, max_workers: Optional[int] = None) -> List[SweepRow]:
    """Solve every k (in parallel threads) and return rows sorted by k."""
    ks = config.k_values
    if max_workers is None:
        max_workers = min(len(ks), 8)
    if max_workers <= 1 or len(ks) == 1:
        rows = [sweep_row(k, config.problem, config.tolerances) for k in ks]
    else:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            rows = list(pool.map(lambda k: sweep_row(k, config.problem, config.tolerances), ks))
    return sorted(rows, key=lambda r: r.k)


def write_samples_csv(sol: PotentialSolution, path) -> None:
    """Potential samples on the two 2049-point grids, plot-ready."""
    lines = [SAMPLES_HEADER]
    for samples in (sol.source, sol.sink):
        for i in range(samples.x.size):
            lines.append(
                ",".join(
                    [
                        _fmt(samples.x[i]),
                        samples.side,
                        _fmt(samples.theta[i]),
                        _fmt(samples.lam[i]),
                        _fmt(samples.eta[i]),
                        _fmt(samples.u[i]),
                    ]
                )
            )
    Path(path).write_text("\n".join(lines) + "\n", encoding="ascii")


# ---------------------------------------------------------------------------
# Verification suite
# ---------------------------------------------------------------------------

FAULT_INJECTIONS = ("boundary", "slope", "stress")


def _inject_fault(sol: PotentialSolution, fault: str) -> PotentialSolution:
    """Deliberately corrupt one aspect of a solution (test hook)."""
    src = sol.source
    if fault == "boundary":
        u = src.u.copy()
        u[-1] += 1e-5
        src = replace(src, u=u)
    elif fault == "slope":
        src = replace(src, eta=src.eta * 1.02)
    elif fault == "stress":
        src = replace(src, theta=src.theta + 0.05)
    else:
        raise ConfigError(f"unknown fault {fault!r}; choose from {FAULT_INJECTIONS}")
    return replace(sol, source=src)


def verification_failures(
    k: float,
    problem: TransportProblem,
    tol: Tolerances,
    sol: Optional[PotentialSolution] = None,
    n_variations: int = 8,
) -> List[str]:
    """Run the full invariant suite for one k; return failure descriptions.

    A prebuilt (possibly tampered) solution can be passed in, which is how
    the fault-injection tests exercise the suite.
    """
    checks: List[str] = []
    if sol is None:
        sol = solve_potential(k, problem, tol)

    def check(name, ok, detail):
        if not ok:
            checks.append(f"{name}: {detail}")

    bnd = max(abs(v) for v in sol.boundary_values)
    check("boundary_values", bnd <= 10.0 * tol.quad_abs_tol, f"max |u| at endpoints = {bnd:.3e}")

    check("gradient_bound", sol.sup_slope <= 1.0 + 1e-9, f"sup |eta| = {sol.sup_slope!r}")

    for samples, sgn in ((sol.source, 1.0), (sol.sink, -1.0)):
        lo, hi = samples.x[0], samples.x[-1]
        tent = np.minimum(samples.x - lo, hi - samples.x)
        uu = sgn * samples.u
        ok = bool(np.all(uu >= -1e-9) and np.all(uu <= tent + 1e-9))
        check(f"tent_dominance_{samples.side}", ok, "samples escape [0, tent]")

    check(
        "constants_in_unit_interval",
        0.0 < sol.C_k < 1.0 and 0.0 < sol.D_k < 1.0,
        f"C={sol.C_k!r}, D={sol.D_k!r}",
    )

    # DAE substitution identity on the sampled slopes of this solve.
    for samples in (sol.source, sol.sink):
        lam = lambda_from_slope(k, samples.eta)
        lhs = lam * lam * (1.0 + (2.0 / k) * np.where(lam > 0, np.log(np.where(lam > 0, lam, 1.0)), 0.0))
        lhs = np.where(lam > 0, lhs, 0.0)
        rhs = (samples.eta * lam) ** 2
        dae = float(np.abs(lhs - rhs).max())
        check(f"dae_identity_{samples.side}", dae <= 1e-12, f"max residual {dae:.3e}")

    res = energy_mod.el_residual(k, sol)
    check("el_exact_form", res.exact_form <= 1e-9, f"{res.exact_form:.3e}")
    h = sol.source.x[1] - sol.source.x[0]
    check("el_conservation_fd", res.finite_difference <= 1e-6 + 50.0 * h * h,
          f"{res.finite_difference:.3e}")

    I_p = energy_mod.primal_energy(k, sol, tol=tol)
    I_d = energy_mod.dual_energy(k, sol, tol=tol)
    Xi = energy_mod.total_complementary(k, sol, tol=tol)
    scale = 1e-6 * (1.0 + abs(I_p))
    check("duality_gap", abs(I_p - I_d) <= scale, f"|{I_p!r} - {I_d!r}| > {scale:.3e}")
    check("chain_equality", abs(Xi - I_p) <= scale and abs(Xi - I_d) <= scale, f"Xi = {Xi!r}")

    K_k = energy_mod.kantorovich_value(sol, tol=tol)
    K_tent = oracle_mod.tent_value(problem)
    bound = problem.domain_length / k + 1e-8
    check(
        "sandwich_bound",
        -1e-8 <= K_tent - K_k <= bound,
        f"deficit {K_tent - K_k:.3e} outside [0, {bound:.3e}]",
    )

    from .potential import DualField, balance_mismatch

    grid_t = np.linspace(0.1, 0.9, 9)
    m_vals = [
        balance_mismatch(k, DualField("source", problem.source, float(t)), tol) for t in grid_t
    ]
    n_vals = [
        balance_mismatch(k, DualField("sink", problem.sink, float(t)), tol) for t in grid_t
    ]
    check("balance_monotone_source", bool(np.all(np.diff(m_vals) > 0)), "M_k not increasing")
    check("balance_monotone_sink", bool(np.all(np.diff(n_vals) < 0)), "N_k not decreasing")

    min_p = np.inf
    max_d = -np.inf
    for tf in energy_mod.test_function_family(problem, n_variations, seed=0):
        sv_p = energy_mod.second_variation_primal(k, sol, tf.dphi, tol, breaks=tf.breaks)
        try:
            sv_d = energy_mod.second_variation_dual(k, sol, tf.phi, tol, breaks=tf.breaks)
        except QuadratureError as exc:
            sv_d = exc.best_estimate
        min_p = min(min_p, sv_p)
        max_d = max(max_d, sv_d)
    check("second_variation_signs", min_p >= -1e-8 and max_d <= 1e-8,
          f"min primal {min_p:.3e}, max dual {max_d:.3e}")

    return checks


# ---------------------------------------------------------------------------
# Modes
# ---------------------------------------------------------------------------


def _pick_k(config: RunConfig, k_flag: Optional[float]) -> float:
    if k_flag is not None:
        if not 1.0 <= k_flag <= K_CAP:
            raise ConfigError(f"--k must lie in [1, {K_CAP:.0f}], got {k_flag}")
        return float(k_flag)
    if len(config.k_values) == 1:
        return config.k_values[0]
    raise ConfigError("this mode needs --k (or a single-entry k_values list)")


def _out_path(config: RunConfig, out_flag: Optional[str], default: str) -> Path:
    return Path(out_flag or config.output or default)


def run(mode: str, config: RunConfig, k_flag=None, out_flag=None, fault=None) -> int:
    """Execute one mode; returns the process exit code."""
    problem = config.problem
    tol = config.tolerances

    if mode == "oracle":
        validate_problem(problem)
        k_tent = oracle_mod.tent_value(problem)
        c_lim = oracle_mod.limit_constant(problem, "source")
        d_lim = oracle_mod.limit_constant(problem, "sink")
        text = "K_tent,C_limit,D_limit\n" + ",".join(_fmt(v) for v in (k_tent, c_lim, d_lim)) + "\n"
        if out_flag or config.output:
            _out_path(config, out_flag, "oracle.csv").write_text(text, encoding="ascii")
        sys.stdout.write(text)
        return EXIT_OK

    if config.experimental and problem.layout != "disjoint":
        k = _pick_k(config, k_flag)
        comps = solve_experimental(k, problem, tol)
        for comp in comps:
            sys.stdout.write(
                f"component side={comp.piece.side} interval={comp.piece.interval} "
                f"mass={_fmt(comp.piece.mass)} constant={_fmt(comp.constant)} "
                f"boundary_residual={_fmt(comp.boundary_residual)}\n"
            )
        return EXIT_OK

    if mode == "solve":
        k = _pick_k(config, k_flag)
        sol = solve_potential(k, problem, tol)
        path = _out_path(config, out_flag, f"potential_k{k:g}.csv")
        write_samples_csv(sol, path)
        report = energy_mod.energy_report(k, sol, tol)
        for name in (
            "k",
            "I_primal",
            "I_dual",
            "Xi",
            "K_value",
            "duality_gap",
            "sup_slope",
            "el_residual",
            "el_residual_exact",
            "second_var_min_primal",
            "second_var_max_dual",
        ):
            sys.stdout.write(f"{name}={_fmt(getattr(report, name))}\n")
        sys.stdout.write(f"samples={path}\n")
        return EXIT_OK

    if mode == "sweep":
        rows = run_sweep(config)
        path = _out_path(config, out_flag, "sweep.csv")
        emit_csv(rows, path)
        sys.stdout.write(f"rows={len(rows)} output={path}\n")
        return EXIT_OK

    if mode == "verify":
        k = _pick_k(config, k_flag)
        sol = solve_potential(k, problem, tol)
        if fault is not None:
            sol = _inject_fault(sol, fault)
        failures = verification_failures(k, problem, tol, sol=sol)
        if failures:
            for f in failures:
                sys.stdout.write(f"FAIL {f}\n")
            return EXIT_INVARIANT
        sys.stdout.write(f"ok k={k:g}: all invariants hold\n")
        return EXIT_OK

    raise ConfigError(f"unknown mode {mode!r}")


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = argparse.ArgumentParser(
        prog="kantorovich1d",
        description="Approximate 1-D Kantorovich potentials via the dual stress construction",
    )
    sub = parser.add_subparsers(dest="mode", required=True)
    for name in ("solve", "sweep", "verify", "oracle"):
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="YAML problem/config file")
        p.add_argument("--k", type=float, default=None, help="regularization index")
        p.add_argument("--out", default=None, help="output path (overrides config)")
        p.add_argument(
            "--experimental-overlap",
            action="store_true",
            help="allow touching/overlapping supports (uncertified path)",
        )
        if name == "verify":
            p.add_argument(
                "--inject-fault",
                choices=FAULT_INJECTIONS,
                default=None,
                help="corrupt the solution before checking (test hook)",
            )
    args = parser.parse_args(argv)

    try:
        text = Path(args.config).read_text(encoding="utf-8")
    except OSError as exc:
        sys.stderr.write(f"ERROR kind=ConfigError exit={EXIT_CONFIG} msg={exc}\n")
        return EXIT_CONFIG

    try:
        config = parse_config(text, mode=args.mode, experimental=args.experimental_overlap)
        return run(
            args.mode,
            config,
            k_flag=args.k,
            out_flag=args.out,
            fault=getattr(args, "inject_fault", None),
        )
    except (ConfigError, BalanceError, PositivityError, LayoutError) as exc:
        sys.stderr.write(f"ERROR kind={type(exc).__name__} exit={EXIT_CONFIG} msg={exc}\n")
        return EXIT_CONFIG
    except SolverError as exc:
        sys.stderr.write(f"ERROR kind={type(exc).__name__} exit={EXIT_NUMERICAL} msg={exc}\n")
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
