"""Command-line interface: simulate, analytic, diagram, verify.

Numeric CSV cells are rendered with 17 significant digits and JSON floats
with shortest round-trip repr, so regenerated outputs compare byte for byte.
Files are written to a temporary sibling and renamed into place, leaving no
partial artifacts on error.  Exit codes: 0 success, 1 failed verification,
2 bad flags.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .amplitudes import AmplitudeForm, amplitudes_closed, amplitudes_exact
from .analytic import DensityProfile, grid_profile
from .diagramsum import Couplings, full_split, geometric_tail_bound, log_gw, truncated_no_change
from .ensemble import (
    DetectorMode,
    KappaDistribution,
    ModelParams,
    RngSeed,
    draw_microstate,
)
from .mc import SelectionScheme, SimConfig, run_simulation
from .transition import (
    QubitState,
    log_total_rate,
    normalized_final_state_from_amplitudes,
    purity_defect,
    rate_matrix,
)

_ENV_THREADS = "BIFURCATION_LAB_THREADS"


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _timestamp() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def write_records_csv(path: Path, result) -> None:
    lines = ["y,outcome,weight,p_plus,log_w"]
    for y, o, w, p, lw in zip(
        result.ys, result.outcomes, result.weights, result.p_plus, result.log_rates
    ):
        lines.append(f"{_fmt(y)},{int(o):+d},{_fmt(w)},{_fmt(p)},{_fmt(lw)}")
    _atomic_write(path, "\n".join(lines) + "\n")


def write_profile_csv(path: Path, profile: DensityProfile) -> None:
    lines = ["y,q,Q,Q_plus,Q_minus"]
    for i in range(len(profile.grid)):
        lines.append(
            ",".join(
                _fmt(col[i])
                for col in (profile.grid, profile.q, profile.Q, profile.Q_plus, profile.Q_minus)
            )
        )
    _atomic_write(path, "\n".join(lines) + "\n")


def write_manifest(path: Path, config_echo: dict, output_paths: list[str]) -> None:
    manifest = {
        "config_echo": config_echo,
        "tool_version": __version__,
        "timestamp": _timestamp(),
        "output_paths": output_paths,
    }
    _atomic_write(path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# simulate


def _simulate_echo(args, params: ModelParams, config: SimConfig) -> dict:
    lo, hi = config.resolved_y_range()
    return {
        "psi_plus_sq": args.psi_plus_sq,
        "psi_plus_arg": args.psi_plus_arg,
        "xi": params.xi,
        "n_steps": params.n_steps,
        "kappa": params.kappa,
        "kappa_dist": params.kappa_dist.value,
        "mode": params.mode.value,
        "samples": args.samples,
        "seed": args.seed,
        "stream_index": 0,
        "selection": config.selection.value,
        "amp_form": config.amplitude_form.value,
        "histogram_bins": config.histogram_bins,
        "y_min": lo,
        "y_max": hi,
    }


def config_from_echo(echo: dict) -> SimConfig:
    """Rebuild the exact SimConfig recorded in a manifest's config echo."""
    if echo["n_steps"] is not None:
        params = ModelParams.from_steps(
            echo["n_steps"],
            echo["kappa"],
            KappaDistribution(echo["kappa_dist"]),
            DetectorMode(echo["mode"]),
        )
    else:
        params = ModelParams.from_xi(
            echo["xi"], KappaDistribution(echo["kappa_dist"]), DetectorMode(echo["mode"])
        )
    return SimConfig(
        params=params,
        qubit=QubitState.from_prob(echo["psi_plus_sq"], echo["psi_plus_arg"]),
        n_samples=echo["samples"],
        seed=RngSeed(echo["seed"], echo["stream_index"]),
        selection=SelectionScheme(echo["selection"]),
        amplitude_form=AmplitudeForm(echo["amp_form"]),
        histogram_bins=echo["histogram_bins"],
        y_range=(echo["y_min"], echo["y_max"]),
    )


def _resolve_params(parser: argparse.ArgumentParser, args) -> ModelParams:
    step_flags = args.n_steps is not None or args.kappa is not None
    if args.xi is not None and step_flags:
        parser.error("--xi cannot be combined with --n-steps/--kappa")
    if args.xi is None and not step_flags:
        parser.error("give either --xi or both --n-steps and --kappa")
    mode = DetectorMode(args.mode)
    if args.xi is not None:
        if args.amp_form == "exact":
            parser.error("--amp-form exact requires --n-steps/--kappa")
        if args.kappa_dist == "rademacher":
            parser.error("--kappa-dist rademacher requires --n-steps/--kappa")
        dist = KappaDistribution(args.kappa_dist or "gaussian")
        if args.xi < 0.0:
            parser.error("--xi must be nonnegative")
        return ModelParams.from_xi(args.xi, dist, mode)
    if args.n_steps is None or args.kappa is None:
        parser.error("--n-steps and --kappa must be given together")
    dist = KappaDistribution(args.kappa_dist or "rademacher")
    try:
        return ModelParams.from_steps(args.n_steps, args.kappa, dist, mode)
    except ValueError as exc:
        parser.error(str(exc))


def cmd_simulate(parser: argparse.ArgumentParser, args) -> int:
    if not (0.0 <= args.psi_plus_sq <= 1.0):
        parser.error("--psi-plus-sq must lie in [0, 1]")
    params = _resolve_params(parser, args)
    y_range = None
    if (args.y_min is None) != (args.y_max is None):
        parser.error("--y-min and --y-max must be given together")
    if args.y_min is not None:
        y_range = (args.y_min, args.y_max)
    config = SimConfig(
        params=params,
        qubit=QubitState.from_prob(args.psi_plus_sq, args.psi_plus_arg),
        n_samples=args.samples,
        seed=RngSeed(args.seed),
        selection=SelectionScheme(args.selection),
        amplitude_form=AmplitudeForm(args.amp_form),
        histogram_bins=args.bins,
        y_range=y_range,
        threads=args.threads,
    )
    try:
        result = run_simulation(config)
    except (RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    echo = _simulate_echo(args, params, config)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    paths: list[str] = []
    if args.format in ("csv", "both"):
        records_path = out.with_name(out.name + ".records.csv")
        write_records_csv(records_path, result)
        paths.append(str(records_path))
    if args.format in ("json", "both"):
        summary = {
            "born_plus": result.born_plus,
            "born_ci": result.born_ci_halfwidth,
            "mean_w": result.mean_w,
            "ess": result.ess,
            "accepted_count": result.accepted_count,
            "clamped_count": result.clamped_count,
            "config_echo": echo,
        }
        if result.ks_stat is not None:
            summary["ks_stat"] = result.ks_stat
        if result.chi2_stat is not None:
            summary["chi2_stat"] = result.chi2_stat
            summary["chi2_dof"] = result.chi2_dof
        summary_path = out.with_name(out.name + ".summary.json")
        _atomic_write(summary_path, json.dumps(summary, indent=2, sort_keys=True) + "\n")
        paths.append(str(summary_path))
    manifest_path = out.with_name(out.name + ".manifest.json")
    write_manifest(manifest_path, echo, paths)
    print(f"wrote {', '.join(paths + [str(manifest_path)])}")
    return 0


# ---------------------------------------------------------------------------
# analytic


def cmd_analytic(parser: argparse.ArgumentParser, args) -> int:
    if not (0.0 <= args.psi_plus_sq <= 1.0):
        parser.error("--psi-plus-sq must lie in [0, 1]")
    qubit = QubitState.from_prob(args.psi_plus_sq, args.psi_plus_arg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    paths: list[str] = []
    grids = []
    for xi in args.xi:
        try:
            profile = grid_profile(xi, qubit, args.y_min, args.y_max, args.step)
        except ValueError as exc:
            parser.error(str(exc))
        path = out.with_name(f"{out.name}_xi{xi:g}.csv")
        write_profile_csv(path, profile)
        paths.append(str(path))
        grids.append(
            {
                "xi": xi,
                "y_min": float(profile.grid[0]),
                "y_max": float(profile.grid[-1]),
                "step": args.step,
                "points": len(profile.grid),
            }
        )
    echo = {
        "psi_plus_sq": args.psi_plus_sq,
        "psi_plus_arg": args.psi_plus_arg,
        "grids": grids,
    }
    manifest_path = out.with_name(out.name + ".manifest.json")
    write_manifest(manifest_path, echo, paths)
    print(f"wrote {', '.join(paths + [str(manifest_path)])}")
    return 0


# ---------------------------------------------------------------------------
# diagram


def cmd_diagram(parser: argparse.ArgumentParser, args) -> int:
    if not (0.0 <= args.psi_plus_sq <= 1.0):
        parser.error("--psi-plus-sq must lie in [0, 1]")
    if args.g < 0.0:
        parser.error("--g must be nonnegative")
    qubit = QubitState.from_prob(args.psi_plus_sq, args.psi_plus_arg)
    couplings = Couplings(j_sq=args.g, f_sq=1.0)
    split = full_split(qubit, args.xi, args.y, couplings)
    payload = {
        "p_no_change": split.p_no_change,
        "p_plus": split.p_plus,
        "p_minus": split.p_minus,
        "log_p_no_change": split.log_p_no_change,
        "log_p_plus": split.log_p_plus,
        "log_p_minus": split.log_p_minus,
    }
    if args.kmax is not None:
        if args.kmax < 0:
            parser.error("--kmax must be nonnegative")
        partial, converged = truncated_no_change(qubit, args.xi, args.y, couplings, args.kmax)
        payload["partial_sum"] = partial
        payload["converged"] = converged
        gw = math.exp(log_gw(qubit, args.xi, args.y, couplings))
        payload["error_bound"] = geometric_tail_bound(gw, args.kmax) if gw < 1.0 else None
    print(json.dumps(payload, indent=2, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------
# verify


def _verify_checks(seed: int, trials: int):
    rng = np.random.default_rng(seed)
    n = max(1, trials)

    def random_state() -> QubitState:
        return QubitState.from_prob(rng.uniform(0.0, 1.0), rng.uniform(0.0, 2.0 * math.pi))

    # trace of the rate matrix against the log-sum-exp rate, purity, spectrum
    worst_trace = worst_purity = worst_eig = 0.0
    for _ in range(n):
        xi = float(np.exp(rng.uniform(np.log(1e-3), np.log(1e3))))
        y = rng.normal(0.0, 1.0 / math.sqrt(xi))
        qubit = random_state()
        amps = amplitudes_closed(y, xi)
        r = rate_matrix(qubit, amps)
        w = math.exp(log_total_rate(qubit, amps))
        worst_trace = max(worst_trace, abs(r.trace - w) / w)
        rho = normalized_final_state_from_amplitudes(qubit, amps)
        worst_purity = max(worst_purity, purity_defect(rho))
        eig = np.linalg.eigvalsh(rho.entries)
        worst_eig = max(worst_eig, float(np.max(np.abs(np.sort(eig) - np.array([0.0, 1.0])))))
    yield "trace-equals-rate", worst_trace <= 1e-12, f"max rel dev {worst_trace:.2e}"
    yield "purity-defect", worst_purity <= 1e-12, f"max defect {worst_purity:.2e}"
    yield "final-state-spectrum", worst_eig <= 1e-10, f"max eig dev {worst_eig:.2e}"

    # amplitude product identities
    params = ModelParams.from_steps(200, 0.1)
    worst_closed = worst_exact = 0.0
    target = params.n_steps * math.log1p(-params.kappa**2)
    for i in range(min(n, 2000)):
        gen = RngSeed(seed, 1).generator(i)
        ms = draw_microstate(params, gen)
        closed = amplitudes_closed(ms.y, params.xi)
        worst_closed = max(
            worst_closed, abs(closed.log_b_plus_sq + closed.log_b_minus_sq + params.xi)
        )
        exact = amplitudes_exact(ms, params)
        dev = abs(math.expm1(exact.log_b_plus_sq + exact.log_b_minus_sq - target))
        worst_exact = max(worst_exact, dev)
    yield "closed-product-identity", worst_closed <= 1e-12, f"max |sum + xi| {worst_closed:.2e}"
    yield "exact-product-identity", worst_exact <= 1e-12, f"max rel dev {worst_exact:.2e}"

    # ensemble-mean rate equals one (xi = 1 exercise)
    params_mean = ModelParams.from_xi(1.0)
    cfg = SimConfig(
        params=params_mean,
        qubit=QubitState.from_prob(0.7),
        n_samples=max(2, n),
        seed=RngSeed(seed, 2),
    )
    result = run_simulation(cfg)
    se = float(np.std(result.weights, ddof=1)) / math.sqrt(len(result.weights))
    dev = abs(result.mean_w - 1.0)
    yield "mean-rate-one", dev <= 5.0 * max(se, 1e-15), f"mean_w {result.mean_w:.6f} ({dev / max(se, 1e-300):.1f} se)"

    # diagram unitarity, including extreme sizes
    worst_sum = 0.0
    for _ in range(n):
        xi = float(np.exp(rng.uniform(np.log(1e-3), np.log(1e3))))
        y = rng.normal(0.0, 1.0 / math.sqrt(xi)) if rng.random() < 0.5 else rng.choice([-1.0, 1.0])
        g = float(np.exp(rng.uniform(np.log(1e-6), np.log(1e6))))
        split = full_split(random_state(), xi, y, Couplings(g, 1.0))
        worst_sum = max(worst_sum, abs(split.p_no_change + split.p_plus + split.p_minus - 1.0))
    yield "diagram-unitarity", worst_sum <= 1e-12, f"max |sum - 1| {worst_sum:.2e}"

    # no selection effect at xi = 0
    cfg0 = SimConfig(
        params=ModelParams.from_xi(0.0),
        qubit=QubitState.from_prob(0.3),
        n_samples=max(2, n),
        seed=RngSeed(seed, 3),
    )
    res0 = run_simulation(cfg0)
    weights_one = bool(np.all(res0.weights == 1.0))
    m = len(res0.ys)
    mean_ok = abs(float(res0.ys.mean())) <= 5.0 / math.sqrt(m)
    var_ok = abs(float(res0.ys.var(ddof=1)) - 1.0) <= 5.0 * math.sqrt(2.0 / (m - 1))
    born_ok = abs(res0.born_plus - 0.3) <= max(res0.born_ci_halfwidth * 5.0 / 3.0, 1e-9)
    ok0 = weights_one and mean_ok and var_ok and born_ok
    yield "xi-zero-null", ok0, f"weights==1 {weights_one}, moments ok {mean_ok and var_ok}, born {res0.born_plus:.4f}"

    # log-space paths stay finite at xi = 1000
    cfg_big = SimConfig(
        params=ModelParams.from_xi(1e3),
        qubit=QubitState.from_prob(0.7),
        n_samples=max(2, min(n, 5000)),
        seed=RngSeed(seed, 4),
    )
    res_big = run_simulation(cfg_big)
    finite = bool(
        np.all(np.isfinite(res_big.weights))
        and np.all(np.isfinite(res_big.log_rates))
        and np.all(np.isfinite(res_big.p_plus))
        and math.isfinite(res_big.born_plus)
    )
    yield "extreme-xi-finite", finite, f"born {res_big.born_plus:.4f}, max weight {res_big.weights.max():.3f}"


def cmd_verify(parser: argparse.ArgumentParser, args) -> int:
    failures = 0
    for name, ok, detail in _verify_checks(args.seed, args.trials):
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
        failures += 0 if ok else 1
    if failures:
        print(f"{failures} invariant(s) failed")
        return 1
    print("all invariants passed")
    return 0


# ---------------------------------------------------------------------------
# parser


def _env_threads() -> int:
    raw = os.environ.get(_ENV_THREADS, "")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bifurcation-lab",
        description="Rate-selected measurement bifurcation: simulation, densities, diagram sums.",
    )
    parser.add_argument("--version", action="version", version=f"bifurcation-lab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run the record ensemble and write CSV/JSON outputs")
    sim.add_argument("--psi-plus-sq", type=float, required=True)
    sim.add_argument("--psi-plus-arg", type=float, default=0.0)
    sim.add_argument("--xi", type=float, default=None)
    sim.add_argument("--n-steps", type=int, default=None)
    sim.add_argument("--kappa", type=float, default=None)
    sim.add_argument("--samples", type=int, default=10000)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--selection", choices=["importance", "rejection"], default="importance")
    sim.add_argument("--amp-form", choices=["exact", "closed"], default="closed")
    sim.add_argument("--kappa-dist", choices=["rademacher", "gaussian"], default=None)
    sim.add_argument("--mode", choices=["symmetric", "asymmetric"], default="symmetric")
    sim.add_argument("--bins", type=int, default=60)
    sim.add_argument("--y-min", type=float, default=None)
    sim.add_argument("--y-max", type=float, default=None)
    sim.add_argument("--threads", type=int, default=_env_threads())
    sim.add_argument("--out", required=True)
    sim.add_argument("--format", choices=["csv", "json", "both"], default="both")

    ana = sub.add_parser("analytic", help="tabulate bias densities on a grid")
    ana.add_argument("--xi", type=float, action="append", required=True)
    ana.add_argument("--psi-plus-sq", type=float, default=0.5)
    ana.add_argument("--psi-plus-arg", type=float, default=0.0)
    ana.add_argument("--y-min", type=float, default=None)
    ana.add_argument("--y-max", type=float, default=None)
    ana.add_argument("--step", type=float, default=None)
    ana.add_argument("--out", required=True)

    dia = sub.add_parser("diagram", help="print the all-orders process split as JSON")
    dia.add_argument("--xi", type=float, required=True)
    dia.add_argument("--y", type=float, required=True)
    dia.add_argument("--psi-plus-sq", type=float, required=True)
    dia.add_argument("--psi-plus-arg", type=float, default=0.0)
    dia.add_argument("--g", type=float, required=True)
    dia.add_argument("--kmax", type=int, default=None)

    ver = sub.add_parser("verify", help="run the seeded invariant suite")
    ver.add_argument("--seed", type=int, default=0)
    ver.add_argument("--trials", type=int, default=10000)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "simulate": cmd_simulate,
        "analytic": cmd_analytic,
        "diagram": cmd_diagram,
        "verify": cmd_verify,
    }
    return handlers[args.command](parser, args)


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
