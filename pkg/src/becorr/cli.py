"""
Command-line interface. Each subcommand maps to one library operation; results are written as CSV
(12 significant digits) to stdout or to --output, logs go to stderr.
Exit codes: 0 success, 2 invalid input or configuration, 3 no break-even solution.
"""

import argparse
import logging
import sys
from functools import partial

import numpy as np
import pandas as pd

from .breakeven import breakeven_weighted_closed_form, build_breakeven_matrix, solve_breakeven_flat
from .common import parse_float_list, uniform_correlation
from .config import RunConfig, load_config
from .copula import kernel_for, sigma_from_beta
from .drift import check_replication_pde, drift_gauss, drift_general
from .dynamics import PathSet, clayton_replication_vols, clayton_spread_corr, simulate, simulate_clayton, time_grid
from .errors import ConsistencyError, NoSolutionError, PricingError
from .hedging import CANDIDATE_RHO2, breakeven_summary, empirical_breakeven, hedge_pnl_grid, run_hedge
from .model import BasketPayoff, CopulaFamily, CopulaSpec, DynamicsSpec, MarketState, XiFamily, XiSchedule
from .pricing import deltas, price
from .quotes import ingest_quotes, market_states, read_matrix_csv
from .study import breakeven_table, run_scenario_study

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s | %(levelname)-8s | %(name)s | %(message)s"
FLOAT_FORMAT = "%.12g"
DEFAULT_SURVIVAL = 0.95
EXIT_OK, EXIT_INPUT, EXIT_NO_SOLUTION = 0, 2, 3


def fmt(x):
    return format(float(x), ".12g")


def _pick(flag, fallback):
    return flag if flag is not None else fallback


def _floats(flag, fallback=()):
    return parse_float_list(flag) if flag is not None else [float(v) for v in fallback]


def _emit(frame: pd.DataFrame, output):
    if output:
        frame.to_csv(output, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        logger.info("Wrote %d rows to %s", len(frame), output)
    else:
        frame.to_csv(sys.stdout, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def _name_count(args, config):
    candidates = [getattr(args, "n", None), config.market.n]
    for values in (getattr(args, "q", None), getattr(args, "hazard", None), getattr(args, "beta", None),
                   getattr(args, "sigma_bar", None), getattr(args, "rho", None)):
        if values is not None and len(parse_float_list(values)) > 1:
            candidates.append(len(parse_float_list(values)))
    for values in (config.market.survival, config.market.hazards, config.dynamics.betas, config.dynamics.sigma_bar):
        if len(values) > 1:
            candidates.append(len(values))
    n = next((c for c in candidates if c is not None), None)
    if n is None:
        raise ValueError("Number of names unknown: use --n or give one value per name")
    return int(n)


def _per_name(values, n, label):
    values = np.asarray(values, dtype=float)
    if values.size == 1:
        return np.full(n, float(values[0]))
    if values.size != n:
        raise ValueError(f"Expected 1 or {n} values for {label}, got {values.size}")
    return values


def _market(args, config) -> MarketState:
    quotes = _pick(getattr(args, "quotes", None), config.market.quotes)
    if quotes:
        states = market_states(ingest_quotes(quotes))
        if states.empty:
            raise ValueError(f"No quotes in {quotes}")
        date = getattr(args, "date", None)
        if date is None:
            return states.iloc[-1]
        if date not in states.index:
            raise ValueError(f"No quotes on {date} in {quotes}")
        return states[date]
    n = _name_count(args, config)
    maturity = _pick(getattr(args, "maturity", None), config.market.maturity)
    time = _pick(getattr(args, "time", None), config.market.time)
    recovery = _pick(getattr(args, "recovery", None), config.market.recovery)
    hazards = _floats(getattr(args, "hazard", None), config.market.hazards)
    if hazards:
        return MarketState.from_hazards(_per_name(hazards, n, "--hazard"), maturity, recovery, time)
    survival = _floats(getattr(args, "q", None), config.market.survival)
    if not survival:
        logger.warning("No survival probabilities given, using %s for every name", DEFAULT_SURVIVAL)
        survival = [DEFAULT_SURVIVAL]
    return MarketState.from_survival(_per_name(survival, n, "--q"), recovery, maturity, time)


def _copula(args, config, n) -> CopulaSpec:
    family = CopulaFamily(_pick(getattr(args, "copula", None), config.copula.family))
    if family == CopulaFamily.CLAYTON:
        theta = _pick(getattr(args, "theta", None), config.copula.theta)
        if theta is None:
            raise ValueError("Clayton copula needs --theta")
        return CopulaSpec.clayton(theta)
    if family == CopulaFamily.GAUSS_PF:
        if getattr(args, "rho_matrix", None) is None:
            raise ValueError("p-factor copula needs --rho-matrix (CSV of loadings, one row per name)")
        return CopulaSpec.gauss_pf(pd.read_csv(args.rho_matrix, header=None).to_numpy(dtype=float))
    rho = _floats(getattr(args, "rho", None), config.copula.rho) or [0.0]
    return CopulaSpec.gauss1f(_per_name(rho, n, "--rho"))


def _nodes(args, config, copula):
    if getattr(args, "nodes", None) is not None:
        return args.nodes
    if copula.family == CopulaFamily.CLAYTON:
        return config.quadrature.laguerre_nodes
    if copula.family == CopulaFamily.GAUSS_PF:
        return config.quadrature.tensor_nodes
    return config.quadrature.hermite_nodes


def _payoff(args, market) -> BasketPayoff:
    n = market.n
    if args.fptd is not None:
        return BasketPayoff.fptd(n, args.fptd, market.common_recovery())
    if args.stop_loss is not None:
        return BasketPayoff.stop_loss(n, args.stop_loss, market.common_recovery())
    if args.tranche is not None:
        attachment, detachment = parse_float_list(args.tranche)
        return BasketPayoff.tranche(n, attachment, detachment, market.common_recovery())
    if args.worst_of_digital:
        return BasketPayoff.worst_of_digital(n)
    raise ValueError("Choose a payoff: --fptd, --stop-loss, --tranche or --worst-of-digital")


def _spread_corr(args, config, n, names=None):
    path = _pick(getattr(args, "spread_corr_file", None), config.dynamics.spread_corr_file)
    if path:
        return read_matrix_csv(path, names)
    value = _pick(getattr(args, "spread_corr", None), config.dynamics.spread_corr)
    if value is None:
        raise ValueError("Spread correlations needed: --spread-corr or --spread-corr-file")
    return uniform_correlation(n, value)


def _betas(args, config, n):
    betas = _floats(getattr(args, "beta", None), config.dynamics.betas)
    if not betas:
        raise ValueError("Betas needed: --beta")
    return _per_name(betas, n, "--beta")


def _dynamics(args, config, market) -> DynamicsSpec:
    sigma_bar = _floats(getattr(args, "sigma_bar", None), config.dynamics.sigma_bar)
    if not sigma_bar:
        raise ValueError("Spread volatilities needed: --sigma-bar")
    family = XiFamily(_pick(getattr(args, "xi", None), config.dynamics.xi))
    if family == XiFamily.MERTON:
        xi = XiSchedule.merton(market.maturity)
    elif family == XiFamily.POWER_ALPHA:
        xi = XiSchedule.power_alpha(market.maturity, _pick(getattr(args, "alpha", None), config.dynamics.alpha))
    else:
        raise ValueError(f"Unsupported schedule on the command line: {family.value}")
    corr = _spread_corr(args, config, market.n, market.names)
    return DynamicsSpec(_per_name(sigma_bar, market.n, "--sigma-bar"), xi, corr)


def cmd_price(args, config):
    market = _market(args, config)
    copula = _copula(args, config, market.n)
    result = price(_payoff(args, market), market, copula, _nodes(args, config, copula), with_deltas=False)
    if args.output:
        row = (result.value, result.error_estimate, result.n_nodes)
        _emit(pd.DataFrame([row], columns=["value", "error_estimate", "n_nodes"]), args.output)
    else:
        print(fmt(result.value))
    return EXIT_OK


def cmd_deltas(args, config):
    market = _market(args, config)
    copula = _copula(args, config, market.n)
    values = deltas(_payoff(args, market), market, copula, args.mode, n_nodes=_nodes(args, config, copula))
    _emit(pd.DataFrame({"name": market.names, "delta": values}, columns=["name", "delta"]), args.output)
    return EXIT_OK


def cmd_drift(args, config):
    market = _market(args, config)
    copula = _copula(args, config, market.n)
    payoff = _payoff(args, market)
    corr = _spread_corr(args, config, market.n, market.names)
    n_nodes = _nodes(args, config, copula)
    if copula.is_gaussian:
        report = drift_gauss(payoff, market, copula, _betas(args, config, market.n), corr, n_nodes)
    else:
        kernel = kernel_for(copula, n_nodes)
        vols = clayton_replication_vols(copula.theta, _pick(args.sigma0, 1.0), market.survival)
        report = drift_general(payoff, market, kernel, vols, corr)
    rows = [(market.names[i], market.names[j], term) for (i, j), term in report.pair_terms.items()]
    rows += [("eta", "", report.eta), ("total", "", report.total)]
    _emit(pd.DataFrame(rows, columns=["name_i", "name_j", "drift"]), args.output)
    return EXIT_OK


def cmd_breakeven(args, config):
    market = _market(args, config)
    betas = _betas(args, config, market.n)
    corr = _spread_corr(args, config, market.n, market.names)
    if args.closed_form:
        print(fmt(breakeven_weighted_closed_form(betas, corr)))
        return EXIT_OK
    order = _pick(args.order, 1)
    result = solve_breakeven_flat(order, market, betas, corr, n_nodes=args.nodes)
    if not result.converged:
        raise NoSolutionError(f"No break-even correlation for order {order}: {result.message}")
    if args.output:
        columns = ["rho2", "beta_factor", "drift_at_root", "iterations"]
        row = (result.rho2, result.beta_factor, result.drift_at_root, result.iterations)
        _emit(pd.DataFrame([row], columns=columns), args.output)
    else:
        print(fmt(result.rho2))
    return EXIT_OK


def cmd_matrix(args, config):
    sigma_bar = _floats(args.sigma_bar, config.dynamics.sigma_bar)
    n = _pick(args.n, len(sigma_bar))
    names = tuple(f"name{i + 1}" for i in range(n))
    result = build_breakeven_matrix(_per_name(sigma_bar, n, "--sigma-bar"), _spread_corr(args, config, n), args.rank)
    logger.info("Break-even matrix rank %d, min eigenvalue %.3g", result.rank_p, result.min_eigenvalue)
    _emit(pd.DataFrame(result.sigma_tilde, columns=names), args.output)
    if args.rank is not None:
        logger.info("Rank-%d loadings residual %.3g", args.rank, result.residual)
        loadings = pd.DataFrame(result.factor_loadings, columns=[f"factor{k + 1}" for k in range(args.rank)])
        _emit(loadings.assign(name=names)[["name"] + list(loadings.columns)], args.loadings_output)
    return EXIT_OK


def _grid(args, config, market):
    n_steps = _pick(args.steps, config.simulation.n_steps)
    dt = _pick(args.dt, config.simulation.dt)
    return time_grid(market.time, dt, n_steps, market.maturity)


def _simulate(args, config, market):
    seed = _pick(args.seed, config.seed)
    n_paths = _pick(args.paths, config.simulation.n_paths)
    grid = _grid(args, config, market)
    scheme = _pick(args.scheme, config.simulation.scheme)
    if scheme == "clayton":
        theta = _pick(args.theta, config.copula.theta)
        return simulate_clayton(theta, _pick(args.sigma0, 1.0), market, grid, n_paths, seed)
    return simulate(_dynamics(args, config, market), market, grid, n_paths, seed, scheme)


def cmd_simulate(args, config):
    market = _market(args, config)
    paths = _simulate(args, config, market)
    logger.info("Simulated %d paths, clamp rate %.3g", paths.n_paths, paths.clamp_rate)
    _emit(paths.to_frame(), args.output)
    return EXIT_OK


def cmd_hedge(args, config):
    market = _market(args, config)
    if args.paths_file:
        paths = PathSet.from_frame(pd.read_csv(args.paths_file), market.maturity, _pick(args.seed, config.seed))
    else:
        paths = _simulate(args, config, market)
    orders = [int(p) for p in _floats(args.orders, config.hedge.orders)]
    payoffs = [BasketPayoff.fptd(paths.n, p, market.common_recovery()) for p in orders]
    nodes = _pick(args.nodes, config.quadrature.hermite_nodes)
    if args.rho is not None:
        copula = _copula(args, config, paths.n)
        rows = []
        for p, payoff in zip(orders, payoffs):
            ledger = run_hedge(paths, payoff, copula, market.recovery, nodes)
            logger.info("Order %d: max financing gap %.3g", p, ledger.financing_gap())
            rows += [(p, path, total) for path, total in enumerate(ledger.total_pnl)]
        _emit(pd.DataFrame(rows, columns=["order", "path", "pnl"]), args.output)
        return EXIT_OK
    candidates = _floats(args.candidates, config.hedge.candidates) or CANDIDATE_RHO2
    grid = hedge_pnl_grid(paths, payoffs, candidates, market.recovery, nodes)
    window = _pick(args.window, config.hedge.window)
    rows = []
    for k, p in enumerate(orders):
        series = empirical_breakeven(grid.pnl[k], grid.candidates, window)
        summary = breakeven_summary(series)
        logger.info("Order %d: mean break-even %.4g (%d missing)", p, summary.mean, summary.n_missing)
        rows += [(p, path, w, value) for (path, w), value in np.ndenumerate(series)]
    _emit(pd.DataFrame(rows, columns=["order", "path", "window", "breakeven"]), args.output)
    return EXIT_OK


def cmd_scenario(args, config):
    table = next((k for k in (1, 2, 3) if getattr(args, f"table{k}")), None)
    study = "four_name" if table else _pick(args.study, config.scenario.study)
    kwargs = dict(
        method=_pick(args.method, config.scenario.method),
        seed=_pick(args.seed, config.seed),
        threads=_pick(args.threads, config.scenario.threads),
    )
    n_paths = _pick(args.paths, config.scenario.n_paths)
    if n_paths is not None:
        kwargs["n_paths"] = n_paths
    orders = _floats(args.orders, config.scenario.orders)
    if table:
        kwargs["orders"] = (table,)
    elif orders:
        kwargs["orders"] = tuple(int(p) for p in orders)
    frame = run_scenario_study(study, **kwargs)
    if table:
        grid = breakeven_table(frame, table)
        frame = grid.reset_index().rename(columns=lambda c: c if c == "lambda_34" else f"lambda_12={c:g}")
    _emit(frame, args.output)
    return EXIT_OK


def cmd_check_pde(args, config):
    n = _name_count(args, config)
    q_values = np.linspace(0.05, 0.95, args.grid)
    q_grid = [np.full(n, q) for q in q_values] + [np.linspace(0.1, 0.9, n)]
    family = CopulaFamily(_pick(args.copula, config.copula.family))
    if family == CopulaFamily.CLAYTON:
        theta = _pick(args.theta, config.copula.theta)
        if theta is None:
            raise ValueError("Clayton copula needs --theta")
        kernel = kernel_for(CopulaSpec.clayton(theta), _pick(args.nodes, config.quadrature.laguerre_nodes))
        sigma0 = _pick(args.sigma0, 1.0)
        vols, corr = partial(clayton_replication_vols, theta, sigma0), partial(clayton_spread_corr, theta)
        residual = check_replication_pde(kernel, vols, corr, q_grid)
    elif family == CopulaFamily.GAUSS_1F:
        copula = _copula(args, config, n)
        kernel = kernel_for(copula, _pick(args.nodes, config.quadrature.hermite_nodes))
        betas = _betas(args, config, n)
        corr = _spread_corr(args, config, n)
        residual = check_replication_pde(kernel, lambda q: sigma_from_beta(betas, q), corr, q_grid)
    else:
        raise ValueError("Replication check needs a one-factor kernel (gauss1f or clayton)")
    print(fmt(residual.max_residual))
    return EXIT_OK


def _market_arguments(parser):
    parser.add_argument("--n", "--names", dest="n", type=int, help="number of names")
    parser.add_argument("--q", type=str, help="survival probabilities, one value or one per name")
    parser.add_argument("--hazard", type=str, help="flat hazard rates instead of survival probabilities")
    parser.add_argument("--recovery", type=float, help="common recovery rate")
    parser.add_argument("--maturity", type=float, help="maturity in years")
    parser.add_argument("--time", type=float, help="valuation time in years")
    parser.add_argument("--quotes", type=str, help="quote CSV, see becorr.quotes")
    parser.add_argument("--date", type=str, help="quote date to use, defaults to the last one")


def _copula_arguments(parser):
    parser.add_argument("--copula", type=str, choices=[f.value for f in CopulaFamily])
    parser.add_argument("--rho", type=str, help="one-factor loadings, one value or one per name")
    parser.add_argument("--rho-matrix", type=str, help="CSV of p-factor loadings without header")
    parser.add_argument("--theta", type=float, help="Clayton dependence parameter")
    parser.add_argument("--nodes", type=int, help="quadrature nodes (per axis)")


def _payoff_arguments(parser):
    group = parser.add_mutually_exclusive_group()
    group.add_argument("--fptd", type=int, help="first-p-to-default of order p")
    group.add_argument("--stop-loss", type=int, help="stop-loss of order p")
    group.add_argument("--tranche", type=str, help="attachment,detachment")
    group.add_argument("--worst-of-digital", action="store_true")


def _dynamics_arguments(parser):
    parser.add_argument("--beta", type=str, help="beta factors of the spread dynamics")
    parser.add_argument("--sigma-bar", type=str, help="spread volatilities")
    parser.add_argument("--spread-corr", type=float, help="uniform spread correlation")
    parser.add_argument("--spread-corr-file", type=str, help="square CSV of spread correlations with a name header")
    parser.add_argument("--xi", type=str, choices=[XiFamily.MERTON.value, XiFamily.POWER_ALPHA.value])
    parser.add_argument("--alpha", type=float, help="exponent of the power schedule")
    parser.add_argument("--sigma0", type=float, help="volatility level of the Clayton dynamics")


def _simulation_arguments(parser):
    parser.add_argument("--paths", type=int, help="number of paths")
    parser.add_argument("--steps", type=int, help="number of time steps")
    parser.add_argument("--dt", type=float, help="time step in years")
    parser.add_argument("--scheme", type=str, choices=["exact_z", "euler", "clayton"])


def build_parser():
    parser = argparse.ArgumentParser(
        prog="becorr",
        description="Break-even correlations of basket credit derivatives under factor copulas",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  becorr price --fptd 1 --n 4 --rho 0 --q 0.95 --recovery 0
  becorr breakeven --names 2 --beta 1,1 --spread-corr 0.3
  becorr scenario --table1 --output table1.csv
        """,
    )
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=str, help="YAML configuration file")
    common.add_argument("--output", type=str, help="output CSV, stdout when omitted")
    common.add_argument("--seed", type=int, help="random seed")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("price", parents=[common], help="price a basket")
    for add in (_market_arguments, _copula_arguments, _payoff_arguments):
        add(p)
    p.set_defaults(handler=cmd_price)

    p = sub.add_parser("deltas", parents=[common], help="dV/dQ per name")
    for add in (_market_arguments, _copula_arguments, _payoff_arguments):
        add(p)
    p.add_argument("--mode", type=str, default="analytic", choices=["analytic", "bump"])
    p.set_defaults(handler=cmd_deltas)

    p = sub.add_parser("drift", parents=[common], help="drift of the delta-hedged basket per pair of names")
    for add in (_market_arguments, _copula_arguments, _payoff_arguments, _dynamics_arguments):
        add(p)
    p.set_defaults(handler=cmd_drift)

    p = sub.add_parser("breakeven", parents=[common], help="flat break-even correlation")
    for add in (_market_arguments, _dynamics_arguments):
        add(p)
    p.add_argument("--order", type=int, help="order p of the first-p-to-default basket (default 1)")
    p.add_argument("--closed-form", action="store_true", help="homogeneous-basket closed form")
    p.add_argument("--nodes", type=int, help="quadrature nodes")
    p.set_defaults(handler=cmd_breakeven)

    p = sub.add_parser("matrix", parents=[common], help="break-even correlation matrix")
    p.add_argument("--n", "--names", dest="n", type=int, help="number of names")
    _dynamics_arguments(p)
    p.add_argument("--rank", type=int, help="rank of the factor loadings to extract")
    p.add_argument("--loadings-output", type=str, help="CSV for the loadings, stdout when omitted")
    p.set_defaults(handler=cmd_matrix)

    p = sub.add_parser("simulate", parents=[common], help="simulate survival-probability paths")
    for add in (_market_arguments, _dynamics_arguments, _simulation_arguments):
        add(p)
    p.add_argument("--theta", type=float, help="Clayton dependence parameter")
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("hedge", parents=[common], help="delta-hedging P&L and empirical break-even")
    for add in (_market_arguments, _copula_arguments, _dynamics_arguments, _simulation_arguments):
        add(p)
    p.add_argument("--paths-file", type=str, help="path CSV (path, step, time, name, survival_prob)")
    p.add_argument("--orders", type=str, help="orders p of the hedged baskets")
    p.add_argument("--candidates", type=str, help="candidate flat rho^2 values")
    p.add_argument("--window", type=int, help="rolling window in steps, whole horizon when omitted")
    p.set_defaults(handler=cmd_hedge)

    p = sub.add_parser("scenario", parents=[common], help="simulated break-even studies")
    p.add_argument("--study", type=str, choices=["four_name", "skew"])
    for k in (1, 2, 3):
        p.add_argument(f"--table{k}", action="store_true", help=f"four-name grid for order {k}")
    p.add_argument("--method", type=str, choices=["instantaneous", "hedge"])
    p.add_argument("--orders", type=str)
    p.add_argument("--paths", type=int)
    p.add_argument("--threads", type=int, help="worker threads (default: BECORR_THREADS or 1)")
    p.set_defaults(handler=cmd_scenario)

    p = sub.add_parser("check-pde", parents=[common], help="residual of the replication condition")
    p.add_argument("--n", "--names", dest="n", type=int, help="number of names")
    for add in (_copula_arguments, _dynamics_arguments):
        add(p)
    p.add_argument("--grid", type=int, default=19, help="number of homogeneous survival levels")
    p.set_defaults(handler=cmd_check_pde)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format=LOG_FORMAT, stream=sys.stderr)
    try:
        config = load_config(args.config) if args.config else RunConfig()
        args.output = args.output or config.output
        return args.handler(args, config)
    except NoSolutionError as exc:
        logger.error("%s", exc)
        return EXIT_NO_SOLUTION
    except (ValueError, ConsistencyError, PricingError, FloatingPointError, OSError) as exc:
        logger.error("%s", exc)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
