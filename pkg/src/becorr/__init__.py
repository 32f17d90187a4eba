# Re-exporting internal functionality
from .errors import ConfigError, ConsistencyError, CapacityError, DomainError, NoSolutionError, PricingError, ShapeError
from .common import correlation_factor, uniform_correlation, validate_correlation_matrix
from .model import (
    BasketPayoff,
    BreakevenResult,
    CopulaFamily,
    CopulaSpec,
    DriftReport,
    DynamicsSpec,
    MarketState,
    XiFamily,
    XiSchedule,
    hazard_from_survival,
    survival_from_hazard,
)
from .quadrature import hermite_rule, laguerre_rule, tensor_hermite_rule
from .copula import ArchimedeanKernel, ClaytonKernel, GaussianKernel, kernel_for
from .pricing import (
    PriceResult,
    deltas,
    digital_put_price,
    price,
    price_count,
    price_fptd,
    price_generic,
    price_stop_loss,
    price_tranche,
    price_worst_of_digital,
)
from .drift import (
    a_star,
    betas_from_dynamics,
    betas_from_vols,
    check_replication_pde,
    drift_count,
    drift_fptd,
    drift_gauss,
    drift_general,
)
from .breakeven import (
    BreakevenMatrix,
    breakeven_flat_batch,
    breakeven_uniform,
    breakeven_weighted_closed_form,
    breakeven_weights,
    build_breakeven_matrix,
    solve_breakeven_flat,
)
from .dynamics import PathSet, Scheme, simulate, simulate_clayton, simulate_euler, simulate_exact, time_grid
from .merton import MertonSpec, check_conditional_martingale, merton_asset_correlation, merton_beta_from_psi
from .hedging import (
    HedgeLedger,
    breakeven_summary,
    empirical_breakeven,
    hedge_pnl_grid,
    instantaneous_breakeven_path,
    run_hedge,
    smooth_breakeven,
)
from .quotes import ingest_quotes, market_states, read_matrix_csv
from .config import RunConfig, dump_config, load_config
