"""Command-line front end: deterministic experiment runs and CSV artifacts.

Every artifact is a pure function of (configuration, command): identical
invocations produce byte-identical files, whatever the host's thread count,
because all randomness flows through per-path counter-based streams.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 acceptance or self-test failure.
"""

import argparse
import os
import sys

import numpy as np

from .chain import ChainModel, simulate_chain, validate_chain_model
from .config import OUTPUT_DIR_ENV, RunConfig, case_config_path, echo_config, load_config
from .errors import ConfigError, SurplusGameError, ValidationError
from .filtering import (
    Observations,
    exact_discrete_filter,
    filter_gap,
    filtered_coefficients,
    run_filter,
)
from .game import (
    ClosedFormInvestment,
    QuadraticPenalty,
    closed_form_controls,
    make_game_state,
    optimal_pi,
    optimal_pi_arrays,
    two_state_example_pi,
    value_at_zero,
    verify_saddle,
)
from .market import simulate_market
from .risk import ClosedFormScenario, ScenarioControl, risk_measure, simulate_density
from .surplus import simulate_surplus

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_ACCEPTANCE = 4


def _fmt(value) -> str:
    if isinstance(value, (float, np.floating)):
        return str(float(value))
    return str(value)


def _write_csv(path: str, header: list[str], rows) -> None:
    with open(path, "w", newline="") as handle:
        handle.write(",".join(header) + "\n")
        for row in rows:
            handle.write(",".join(_fmt(v) for v in row) + "\n")


def _ensure_out(cfg: RunConfig) -> str:
    os.makedirs(cfg.out_dir, exist_ok=True)
    return cfg.out_dir


def _echo_resolved(cfg: RunConfig) -> None:
    out = _ensure_out(cfg)
    with open(os.path.join(out, "resolved.cfg"), "w") as handle:
        handle.write(echo_config(cfg))


def _simulate_pipeline(cfg: RunConfig, path_index: int = 0):
    chain = simulate_chain(cfg.model.chain, cfg.horizon, cfg.dt, cfg.seed, path=path_index)
    market = simulate_market(cfg.model, chain, cfg.dt, cfg.seed, s0=cfg.s0, path=path_index)
    obs = Observations.from_market(market)
    fp = run_filter(cfg.model, obs)
    return chain, market, obs, fp


def cmd_simulate(cfg: RunConfig) -> int:
    """Write chain / market / surplus trajectories of the seed path."""
    out = _ensure_out(cfg)
    chain, market, obs, fp = _simulate_pipeline(cfg)
    coeffs = filtered_coefficients(cfg.model, fp.lambda_hat[:-1])
    pi = optimal_pi_arrays(
        coeffs.alpha_hat, coeffs.r_hat, coeffs.claim_m1, coeffs.asset_m2,
        cfg.model.beta, cfg.penalty.one_minus_delta,
    )
    surplus = simulate_surplus(cfg.model, cfg.delay, market, chain, pi, cfg.x0, cfg.seed)

    t = chain.grid.times
    _write_csv(os.path.join(out, "chain.csv"), ["t", "state"], zip(t, chain.states))
    _write_csv(
        os.path.join(out, "market.csv"),
        ["t", "bond", "stock", "claim_count", "aggregate_claims"],
        zip(t, market.bond, market.stock, market.claim_count, market.aggregate_claims),
    )
    _write_csv(
        os.path.join(out, "asset_marks.csv"),
        ["time", "size"],
        zip(market.asset_marks.times, market.asset_marks.sizes),
    )
    _write_csv(
        os.path.join(out, "claim_marks.csv"),
        ["time", "size"],
        zip(market.claim_marks.times, market.claim_marks.sizes),
    )
    _write_csv(
        os.path.join(out, "surplus.csv"),
        ["t", "x", "y", "ybar", "u", "flow"],
        zip(t, surplus.x, surplus.y, surplus.ybar, surplus.u, surplus.flow),
    )
    print(f"wrote chain/market/surplus CSVs to {out}")
    return EXIT_OK


def cmd_filter(cfg: RunConfig) -> int:
    """Write the filtered state trajectory and the oracle-gap summary."""
    out = _ensure_out(cfg)
    _, _, obs, fp = _simulate_pipeline(cfg)
    oracle = exact_discrete_filter(cfg.model, obs)
    d = cfg.model.num_states
    header = ["t"] + [f"qbar_{j + 1}" for j in range(d)] + [f"lambda_hat_{j + 1}" for j in range(d)]
    rows = (
        [t, *fp.qbar[k], *fp.lambda_hat[k]]
        for k, t in enumerate(fp.grid.times)
    )
    _write_csv(os.path.join(out, "filter.csv"), header, rows)
    gap = filter_gap(fp, oracle)
    _write_csv(os.path.join(out, "filter_oracle_gap.csv"), ["sup_gap"], [[gap]])
    print(f"filter written; sup-norm gap to the discrete Bayes oracle: {gap:.3e}")
    return EXIT_OK


def _state_at_start(cfg: RunConfig):
    return make_game_state(
        cfg.model, cfg.delay, t=0.0, x=cfg.x0, y=0.0, u=cfg.x0,
        lambda_hat=cfg.model.chain.initial_distribution, g=1.0, horizon=cfg.horizon,
    )


def cmd_optimal(cfg: RunConfig) -> int:
    """Print the closed-form controls at the time-zero state."""
    state = _state_at_start(cfg)
    controls = closed_form_controls(state, cfg.penalty, model=cfg.model)
    print(f"pi_star = {controls.pi_star:.5f}")
    print(f"theta0_star = {controls.theta0_star:.5f}")
    print(f"theta1_star = {controls.theta1_star:.5f}")
    print(f"theta2_slope = {controls.theta2_slope:.5f}")
    if not controls.scenario_admissible:
        print("warning: worst-case scenario leaves the admissible set (slope z <= -1 possible)")
    return EXIT_OK


def cmd_saddle_check(cfg: RunConfig) -> int:
    """Grid-search audit of the saddle at the time-zero state."""
    import json

    out = _ensure_out(cfg)
    state = _state_at_start(cfg)
    report = verify_saddle(state, cfg.bounds, cfg.penalty, grid_n=cfg.grid_n)
    payload = {
        "inf_sup": report.inf_sup,
        "sup_inf": report.sup_inf,
        "gap": report.gap,
        "resolution_bound": report.resolution_bound,
        "arg_inf_sup": report.arg_inf_sup,
        "arg_sup_inf": report.arg_sup_inf,
        "closed_form": {
            "pi": report.closed_form.pi_star,
            "theta0": report.closed_form.theta0_star,
            "theta1": report.closed_form.theta1_star,
            "theta2_slope": report.closed_form.theta2_slope,
        },
        "within_one_cell": report.within_one_cell,
        "closed_form_interior": report.closed_form_interior,
        "grid_n": report.grid_n,
    }
    with open(os.path.join(out, "saddle.jsonl"), "w") as handle:
        handle.write(json.dumps(payload, sort_keys=True) + "\n")
    print(
        f"inf-sup {report.inf_sup:.6f}  sup-inf {report.sup_inf:.6f}  "
        f"gap {report.gap:.2e} (bound {report.resolution_bound:.2e})"
    )
    if not report.closed_form_interior:
        print("closed-form controls sit outside the search box; localization not asserted")
        return EXIT_OK
    if report.gap > report.resolution_bound or not report.within_one_cell:
        print("saddle check FAILED")
        return EXIT_ACCEPTANCE
    print("saddle check passed")
    return EXIT_OK


def _default_scenarios(cfg: RunConfig):
    return [
        ("neutral", ScenarioControl(0.0, 0.0, 0.0)),
        ("worst_case_response", ClosedFormScenario(cfg.penalty)),
        ("tilt_up", ScenarioControl(0.25, 0.25, 0.25)),
        ("tilt_down", ScenarioControl(-0.25, -0.25, -0.25)),
    ]


def cmd_risk(cfg: RunConfig) -> int:
    """Risk of the closed-form investment over the default scenario family."""
    out = _ensure_out(cfg)
    names, family = zip(*_default_scenarios(cfg))
    report = risk_measure(
        ClosedFormInvestment(cfg.penalty), list(family), cfg.model, cfg.delay,
        cfg.penalty, cfg.horizon, cfg.dt, cfg.paths, cfg.seed, x0=cfg.x0,
    )
    rows = []
    for name, row in zip(names, report.rows):
        rows.append([name, row.rho_hat, row.stderr, row.mean_g_terminal, row.penalty_hat])
    _write_csv(
        os.path.join(out, "risk.csv"),
        ["scenario", "rho_hat", "stderr", "mean_g_terminal", "penalty_hat"],
        rows,
    )
    best = names[family.index(report.argmax_scenario)]
    print(f"rho_hat = {report.rho_hat:.6f} +- {report.stderr:.6f}  (argmax scenario: {best})")
    return EXIT_OK


def cmd_value(cfg: RunConfig) -> int:
    """Monte Carlo game value under the closed-form controls."""
    out = _ensure_out(cfg)
    j, se = value_at_zero(
        cfg.model, cfg.delay, cfg.penalty, cfg.x0, cfg.horizon, cfg.dt, cfg.paths, cfg.seed
    )
    _write_csv(os.path.join(out, "value.csv"), ["j_hat", "stderr"], [[j, se]])
    print(f"J = {j:.6f} +- {se:.6f}")
    return EXIT_OK


def cmd_reproduce(cfg: RunConfig, case: str) -> int:
    """Benchmark-case audit tables."""
    if case == "case1":
        coeffs = filtered_coefficients(cfg.model, cfg.model.chain.initial_distribution)
        pi = optimal_pi(coeffs, cfg.penalty)
        reported = 0.24074
        gap = abs(pi - reported)
        print("case 1: single regime, unit asset jumps, no claims")
        print(f"  computed pi*   : {pi:.5f}")
        print(f"  reported value : {reported:.5f}")
        print(f"  absolute gap   : {gap:.2e}")
        ok = gap <= 1e-5
        print(f"  agreement (1e-5): {'PASS' if ok else 'FAIL'}")
        return EXIT_OK if ok else EXIT_ACCEPTANCE

    # case 2: evaluate the general formula and the printed two-state formula
    weights = cfg.model.chain.initial_distribution
    coeffs = filtered_coefficients(cfg.model, weights)
    general = optimal_pi(coeffs, cfg.penalty)
    printed = two_state_example_pi(
        alpha1=cfg.model.alpha[0], alpha2=cfg.model.alpha[1],
        r1=cfg.model.r[0], r2=cfg.model.r[1], beta=cfg.model.beta,
        asset_lam1=cfg.model.asset_intensity[0], asset_lam2=cfg.model.asset_intensity[1],
        claim_lam1=cfg.model.claim_intensity[0], claim_lam2=cfg.model.claim_intensity[1],
        delta=cfg.penalty.delta, p1=weights[0],
    )
    rel = abs(general - printed) / max(1.0, abs(printed))

    rng = np.random.default_rng(20240602)
    worst = 0.0
    for _ in range(1000):
        a1, a2 = rng.uniform(0.0, 0.2, 2)
        r1, r2 = rng.uniform(0.0, 0.1, 2)
        beta = rng.uniform(0.05, 0.5)
        al1, al2, cl1, cl2 = rng.uniform(0.05, 2.0, 4)
        delta = rng.uniform(-1.0, 0.9)
        p1 = rng.uniform(0.0, 1.0)
        omd = 1.0 - delta
        gen = (a1 * p1 + a2 * (1 - p1) - (r1 * p1 + r2 * (1 - p1))
               + omd * beta * (cl1 * p1 + cl2 * (1 - p1))) / (
            omd * (beta * beta + al1 * p1 + al2 * (1 - p1))
        )
        two = two_state_example_pi(a1, a2, r1, r2, beta, al1, al2, cl1, cl2, delta, p1)
        worst = max(worst, abs(gen - two) / max(1.0, abs(two)))

    reported = 0.28
    print("case 2: two regimes, unit-jump driving measures, filter weight 0.7 / 0.3")
    print(f"  general formula           : {general:.5f}")
    print(f"  printed two-state formula : {printed:.5f}")
    print(f"  relative gap              : {rel:.2e}")
    print(f"  reported value            : {reported:.5f}")
    print(f"  |computed - reported|     : {abs(general - reported):.5f}")
    print(f"  worst identity gap over 1000 random draws: {worst:.2e}")
    ok = rel <= 1e-12 and worst <= 1e-12
    print(f"  formula identity (1e-12)  : {'PASS' if ok else 'FAIL'}")
    print("  note: agreement with the reported 0.28 is recorded, not asserted")
    return EXIT_OK if ok else EXIT_ACCEPTANCE


def _selftest_checks(cfg: RunConfig):
    from .errors import GeneratorColumnSumError
    from .risk import DensityPath

    def chain_validation():
        try:
            validate_chain_model(
                ChainModel(2, np.array([[-0.5, 0.3], [0.4, -0.3]]), np.array([0.5, 0.5]))
            )
        except GeneratorColumnSumError:
            return True
        return False

    def determinism():
        a = _simulate_pipeline(cfg)[1]
        b = _simulate_pipeline(cfg)[1]
        return np.array_equal(a.stock, b.stock) and np.array_equal(
            a.claim_marks.sizes, b.claim_marks.sizes
        )

    def filter_simplex():
        _, _, obs, fp = _simulate_pipeline(cfg)
        return bool(
            np.all(fp.lambda_hat >= -1e-15)
            and np.abs(fp.lambda_hat.sum(axis=1) - 1.0).max() <= 1e-9
        )

    def neutral_density():
        _, market, obs, fp = _simulate_pipeline(cfg)
        chain = simulate_chain(cfg.model.chain, cfg.horizon, cfg.dt, cfg.seed)
        spath = simulate_surplus(cfg.model, cfg.delay, market, chain, 0.0, cfg.x0, cfg.seed)
        dens = simulate_density(
            ScenarioControl(0.0, 0.0, 0.0), cfg.model, obs, fp, spath.dw1
        )
        return bool(np.allclose(dens.g, 1.0))

    def delay_identity():
        chain, market, _, _ = _simulate_pipeline(cfg)
        spath = simulate_surplus(cfg.model, cfg.delay, market, chain, 0.0, cfg.x0, cfg.seed)
        m = round(cfg.delay.rho / cfg.dt)
        for k in range(spath.grid.n_steps + 1):
            expected = spath.x[k - m] if k - m >= 0 else cfg.x0
            if spath.u[k] != expected:
                return False
        return True

    def saddle_stationarity():
        from .game import hamiltonian_gradient_fd

        state = _state_at_start(cfg)
        controls = closed_form_controls(state, cfg.penalty)
        grad = hamiltonian_gradient_fd(
            state, controls.pi_star,
            (controls.theta0_star, controls.theta1_star, controls.theta2_slope),
            cfg.penalty,
        )
        return bool(np.abs(grad).max() <= 1e-6)

    return [
        ("chain validation rejects bad generators", chain_validation),
        ("simulation is seed-deterministic", determinism),
        ("filtered state stays on the simplex", filter_simplex),
        ("neutral scenario density is identically one", neutral_density),
        ("pointwise delay identity U(t) = X(t - rho)", delay_identity),
        ("closed-form controls are stationary points", saddle_stationarity),
    ]


def cmd_selftest(cfg: RunConfig) -> int:
    """Fast invariant battery; exits nonzero on the first failure."""
    failed = 0
    for name, check in _selftest_checks(cfg):
        try:
            ok = check()
        except SurplusGameError as exc:
            ok = False
            name = f"{name} ({exc})"
        status = "ok" if ok else "FAILED"
        print(f"selftest: {name}: {status}")
        failed += 0 if ok else 1
    return EXIT_OK if failed == 0 else EXIT_ACCEPTANCE


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="surplusgame",
        description="Regime-switching insurer surplus: simulation, filtering, "
        "and the robust investment game.",
    )
    parser.add_argument("--config", help="run configuration file")
    parser.add_argument("--out", help="output directory (overrides config)")
    parser.add_argument("--seed", type=int, help="master seed (overrides config)")
    parser.add_argument("--paths", type=int, help="Monte Carlo path count (overrides config)")
    parser.add_argument("--dt", type=float, help="grid step (overrides config)")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("simulate", "filter", "optimal", "saddle-check", "risk", "value", "selftest"):
        sub.add_parser(name)
    repro = sub.add_parser("reproduce")
    repro.add_argument("case", choices=("case1", "case2"))
    return parser


def _load(args) -> RunConfig:
    path = args.config
    if path is None:
        if args.command == "reproduce":
            path = case_config_path(args.case)
        elif args.command == "selftest":
            path = case_config_path("case2")
        else:
            raise ConfigError("--config is required for this command")
    cfg = load_config(path)
    if args.out is not None:
        cfg.out_dir = args.out
        cfg.resolved["output"]["directory"] = args.out
    if args.seed is not None:
        cfg.seed = args.seed
        cfg.resolved["simulation"]["seed"] = str(args.seed)
    if args.paths is not None:
        cfg.paths = args.paths
        cfg.resolved["simulation"]["paths"] = str(args.paths)
    if args.dt is not None:
        from .grid import Grid

        Grid.from_horizon(cfg.horizon, args.dt).steps_of(cfg.delay.rho, "rho")
        cfg.dt = args.dt
        cfg.resolved["simulation"]["dt"] = str(args.dt)
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _load(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        _echo_resolved(cfg)
        if args.command == "simulate":
            return cmd_simulate(cfg)
        if args.command == "filter":
            return cmd_filter(cfg)
        if args.command == "optimal":
            return cmd_optimal(cfg)
        if args.command == "saddle-check":
            return cmd_saddle_check(cfg)
        if args.command == "risk":
            return cmd_risk(cfg)
        if args.command == "value":
            return cmd_value(cfg)
        if args.command == "reproduce":
            return cmd_reproduce(cfg, args.case)
        if args.command == "selftest":
            return cmd_selftest(cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SurplusGameError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
