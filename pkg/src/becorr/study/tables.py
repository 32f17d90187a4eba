"""
Parameters of the simulated break-even studies and the break-even levels they are compared with.
"""

from dataclasses import dataclass
from enum import Enum

# Four-name study
FOUR_NAMES = ("name1", "name2", "name3", "name4")
STUDY_MATURITY = 5.0  # years
STUDY_STEPS = 180  # daily steps
STUDY_DT = 1 / 365
STUDY_PATHS = 100
STUDY_SIGMA_BAR = 0.50  # same spread volatility for all names
BLOCK_RHO_12 = 0.30  # spread correlation of names 1 and 2
BLOCK_RHO_34 = 0.70  # spread correlation of names 3 and 4, other pairs uncorrelated
INTENSITY_GRID = (0.001, 0.01, 0.05, 0.30)  # spot intensities of each pair of names
STUDY_ORDERS = (1, 2, 3)

# Break-even correlations in percent, rows: intensity of names 3 and 4, columns: intensity of names 1 and 2
FTD_BREAKEVEN = (
    (18, 20, 26, 30),
    (45, 17, 17, 27),
    (68, 39, 16, 18),
    (69, 69, 53, 16),
)
F2TD_BREAKEVEN = (
    (18, 12, 15, 32),
    (15, 17, 12, 19),
    (11, 15, 16, 11),
    (28, 18, 12, 16),
)
F3TD_BREAKEVEN = (
    (20, 22, 51, 70),
    (17, 18, 25, 69),
    (16, 15, 16, 53),
    (29, 25, 19, 18),
)
REFERENCE_BREAKEVEN = {1: FTD_BREAKEVEN, 2: F2TD_BREAKEVEN, 3: F3TD_BREAKEVEN}
TABLE_TOLERANCE = 5  # percentage points

# Ten-name skew study
TEN_NAMES = tuple(f"name{i + 1}" for i in range(10))
CORE_SIGMA_BAR = 0.50
CORE_INTENSITY = 0.05
CORE_BETA = 0.50  # spread correlations are beta_i beta_j


class Quantity(str, Enum):
    SPREAD_VOL = "spread_vol"
    INTENSITY = "intensity"
    BETA = "beta"


class Variant(str, Enum):
    CORE = "core"
    UP = "up"
    DOWN = "down"


@dataclass(frozen=True)
class ScenarioTable:
    """Per-name values of one quantity for the ten-name basket."""

    quantity: Quantity
    variant: Variant
    values: tuple

    def __post_init__(self):
        object.__setattr__(self, "quantity", Quantity(self.quantity))
        object.__setattr__(self, "variant", Variant(self.variant))
        if any(not value > 0 for value in self.values):
            raise ValueError(f"Scenario values must be positive, got {self.values}")
        if self.variant == Variant.CORE and len(set(self.values)) != 1:
            raise ValueError("Core scenario must be constant across names")


_paired = lambda *levels: tuple(level for level in levels for _ in range(2))

SCENARIOS = {
    Quantity.SPREAD_VOL: {
        Variant.CORE: ScenarioTable(Quantity.SPREAD_VOL, Variant.CORE, (CORE_SIGMA_BAR,) * 10),
        Variant.UP: ScenarioTable(Quantity.SPREAD_VOL, Variant.UP, _paired(0.22, 0.33, 0.50, 0.75, 1.13)),
        Variant.DOWN: ScenarioTable(Quantity.SPREAD_VOL, Variant.DOWN, _paired(1.13, 0.75, 0.50, 0.33, 0.22)),
    },
    Quantity.INTENSITY: {
        Variant.CORE: ScenarioTable(Quantity.INTENSITY, Variant.CORE, (CORE_INTENSITY,) * 10),
        Variant.UP: ScenarioTable(Quantity.INTENSITY, Variant.UP, _paired(0.02, 0.03, 0.05, 0.08, 0.11)),
        Variant.DOWN: ScenarioTable(Quantity.INTENSITY, Variant.DOWN, _paired(0.11, 0.08, 0.05, 0.03, 0.02)),
    },
    Quantity.BETA: {
        Variant.CORE: ScenarioTable(Quantity.BETA, Variant.CORE, (CORE_BETA,) * 10),
        Variant.UP: ScenarioTable(Quantity.BETA, Variant.UP, _paired(0.22, 0.33, 0.50, 0.75, 0.99)),
        Variant.DOWN: ScenarioTable(Quantity.BETA, Variant.DOWN, _paired(0.99, 0.75, 0.50, 0.33, 0.22)),
    },
}

# (spread vol, intensity, beta) variants: the core basket and each one-dimensional deformation
SKEW_SCENARIOS = (
    (Variant.CORE, Variant.CORE, Variant.CORE),
    (Variant.UP, Variant.CORE, Variant.CORE),
    (Variant.DOWN, Variant.CORE, Variant.CORE),
    (Variant.CORE, Variant.UP, Variant.CORE),
    (Variant.CORE, Variant.DOWN, Variant.CORE),
    (Variant.CORE, Variant.CORE, Variant.UP),
    (Variant.CORE, Variant.CORE, Variant.DOWN),
)
