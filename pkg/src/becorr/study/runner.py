"""
Simulated break-even studies: the four-name block-correlation grid over spot intensities and the
ten-name skew study across spread volatility, intensity and beta-factor scenarios.

Every cell uses the same seed, so the cells differ by their parameters and not by sampling noise.
"""

import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pandas as pd

from ..config import default_threads
from ..dynamics import simulate_exact, time_grid
from ..errors import DomainError
from ..hedging import (
    CANDIDATE_RHO2,
    breakeven_summary,
    empirical_breakeven,
    hedge_pnl_grid,
    instantaneous_breakeven_path,
)
from ..model import BasketPayoff, DynamicsSpec, MarketState, XiSchedule
from .tables import (
    BLOCK_RHO_12,
    BLOCK_RHO_34,
    FOUR_NAMES,
    INTENSITY_GRID,
    REFERENCE_BREAKEVEN,
    SCENARIOS,
    SKEW_SCENARIOS,
    STUDY_DT,
    STUDY_MATURITY,
    STUDY_ORDERS,
    STUDY_PATHS,
    STUDY_SIGMA_BAR,
    STUDY_STEPS,
    TEN_NAMES,
    Quantity,
    Variant,
)

logger = logging.getLogger(__name__)

METHODS = ("instantaneous", "hedge")
RESULT_COLUMNS = ["order", "breakeven", "std_error", "n_valid", "n_missing"]


def block_spread_corr(rho_12=BLOCK_RHO_12, rho_34=BLOCK_RHO_34):
    corr = np.eye(4)
    corr[0, 1] = corr[1, 0] = rho_12
    corr[2, 3] = corr[3, 2] = rho_34
    return corr


def factor_spread_corr(betas):
    """Spread correlations beta_i beta_j with unit diagonal."""
    betas = np.asarray(betas, dtype=float)
    corr = np.outer(betas, betas)
    np.fill_diagonal(corr, 1.0)
    return corr


def breakeven_cell(
    market: MarketState,
    spec: DynamicsSpec,
    orders,
    method="instantaneous",
    n_paths=STUDY_PATHS,
    n_steps=STUDY_STEPS,
    dt=STUDY_DT,
    seed=0,
    n_nodes=None,
):
    """
    Break-even rho^2 of first-p-to-default baskets averaged over simulated paths.
    instantaneous: theoretical break-even at every grid time, averaged along each path.
    hedge: flat correlation at which the hedged P&L over the whole horizon vanishes, per path.
    Returns:
        one dict per order with the keys of RESULT_COLUMNS
    """
    if method not in METHODS:
        raise ValueError(f"Unsupported study method: {method}")
    paths = simulate_exact(spec, market, time_grid(market.time, dt, n_steps, market.maturity), n_paths, seed)
    if method == "instantaneous":
        _, rho2 = instantaneous_breakeven_path(paths, orders, spec, n_nodes=n_nodes)
        with np.errstate(invalid="ignore"):
            per_path = [np.nanmean(rho2[k], axis=1) for k in range(len(orders))]
    else:
        payoffs = [BasketPayoff.fptd(market.n, p, market.common_recovery()) for p in orders]
        grid = hedge_pnl_grid(paths, payoffs, CANDIDATE_RHO2, market.recovery, n_nodes)
        per_path = [empirical_breakeven(grid.pnl[k], grid.candidates)[:, 0] for k in range(len(orders))]
    rows = []
    for p, series in zip(orders, per_path):
        summary = breakeven_summary(series)
        rows.append(
            dict(
                order=p,
                breakeven=summary.mean,
                std_error=summary.std_error,
                n_valid=summary.n_valid,
                n_missing=summary.n_missing,
            )
        )
    return rows


def _run_cells(jobs, threads):
    """Runs the jobs (callables) on a thread pool; results come back in job order."""
    threads = default_threads() if threads is None else threads
    if threads <= 1:
        return [job() for job in jobs]
    with ThreadPoolExecutor(max_workers=threads) as executor:
        futures = [executor.submit(job) for job in jobs]
        return [future.result() for future in futures]


def four_name_study(
    orders=STUDY_ORDERS,
    intensities=INTENSITY_GRID,
    method="instantaneous",
    n_paths=STUDY_PATHS,
    n_steps=STUDY_STEPS,
    seed=0,
    sigma_bar=STUDY_SIGMA_BAR,
    maturity=STUDY_MATURITY,
    threads=None,
    n_nodes=None,
) -> pd.DataFrame:
    """
    Break-even correlations of the four-name basket with block spread correlations, for every pair of spot
    intensities (lambda_12 of names 1 and 2, lambda_34 of names 3 and 4).
    """
    spec = DynamicsSpec(np.full(4, sigma_bar), XiSchedule.merton(maturity), block_spread_corr())
    cells = [(l12, l34) for l34 in intensities for l12 in intensities]

    def job(l12, l34):
        market = MarketState.from_hazards([l12, l12, l34, l34], maturity, names=FOUR_NAMES)
        logger.info("Four-name cell lambda_12 = %g, lambda_34 = %g", l12, l34)
        rows = breakeven_cell(market, spec, orders, method, n_paths, n_steps, STUDY_DT, seed, n_nodes)
        return [dict(lambda_12=l12, lambda_34=l34, **row) for row in rows]

    results = _run_cells([lambda cell=cell: job(*cell) for cell in cells], threads)
    return pd.DataFrame([row for rows in results for row in rows], columns=["lambda_12", "lambda_34"] + RESULT_COLUMNS)


def breakeven_table(frame: pd.DataFrame, order) -> pd.DataFrame:
    """Break-even correlations of one order in percent; rows lambda_34, columns lambda_12."""
    subset = frame[frame["order"] == order]
    return subset.pivot(index="lambda_34", columns="lambda_12", values="breakeven") * 100


def reference_table(order, intensities=INTENSITY_GRID) -> pd.DataFrame:
    """Published break-even levels of the four-name study in the layout of breakeven_table."""
    if order not in REFERENCE_BREAKEVEN:
        raise DomainError(f"No reference levels for order {order}")
    index = pd.Index(intensities, name="lambda_34")
    columns = pd.Index(intensities, name="lambda_12")
    return pd.DataFrame(np.asarray(REFERENCE_BREAKEVEN[order], dtype=float), index=index, columns=columns)


def scenario_inputs(vol=Variant.CORE, intensity=Variant.CORE, beta=Variant.CORE):
    """Spread volatilities, intensities and spread correlations of a ten-name scenario."""
    sigma_bar = np.asarray(SCENARIOS[Quantity.SPREAD_VOL][Variant(vol)].values)
    hazards = np.asarray(SCENARIOS[Quantity.INTENSITY][Variant(intensity)].values)
    corr = factor_spread_corr(SCENARIOS[Quantity.BETA][Variant(beta)].values)
    return sigma_bar, hazards, corr


def skew_study(
    scenarios=SKEW_SCENARIOS,
    orders=tuple(range(1, 11)),
    method="instantaneous",
    n_paths=1,
    n_steps=STUDY_STEPS,
    seed=0,
    maturity=STUDY_MATURITY,
    threads=None,
    n_nodes=None,
) -> pd.DataFrame:
    """
    Break-even correlation and beta factor (its square root) per order for each ten-name scenario
    given as (spread vol, intensity, beta) variants.
    """

    def job(scenario):
        vol, intensity, beta = (Variant(v) for v in scenario)
        sigma_bar, hazards, corr = scenario_inputs(vol, intensity, beta)
        spec = DynamicsSpec(sigma_bar, XiSchedule.merton(maturity), corr)
        market = MarketState.from_hazards(hazards, maturity, names=TEN_NAMES)
        logger.info("Skew scenario vol=%s intensity=%s beta=%s", vol.value, intensity.value, beta.value)
        rows = breakeven_cell(market, spec, orders, method, n_paths, n_steps, STUDY_DT, seed, n_nodes)
        labels = dict(spread_vol=vol.value, intensity=intensity.value, beta=beta.value)
        return [dict(labels, **row, beta_factor=np.sqrt(row["breakeven"])) for row in rows]

    results = _run_cells([lambda scenario=scenario: job(scenario) for scenario in scenarios], threads)
    columns = ["spread_vol", "intensity", "beta"] + RESULT_COLUMNS + ["beta_factor"]
    return pd.DataFrame([row for rows in results for row in rows], columns=columns)


def run_scenario_study(study="four_name", **kwargs) -> pd.DataFrame:
    if study == "four_name":
        return four_name_study(**kwargs)
    if study == "skew":
        return skew_study(**kwargs)
    raise ValueError(f"Unsupported study: {study}")
