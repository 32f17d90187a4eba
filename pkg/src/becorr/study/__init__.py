# Re-exporting internal functionality
from .runner import run_scenario_study, four_name_study, skew_study, breakeven_cell
from .runner import breakeven_table, reference_table, scenario_inputs, block_spread_corr, factor_spread_corr
from .tables import ScenarioTable, Quantity, Variant, SCENARIOS, SKEW_SCENARIOS
from .tables import INTENSITY_GRID, REFERENCE_BREAKEVEN, TABLE_TOLERANCE
