"""Closed-form bounds, simulation and coverage for hybrid mono/bi-static OFDM sensing."""

__version__ = "0.1.0"

from .scenario import (  # noqa: E402
    LinkBudget,
    OfdmConfig,
    Scenario,
    ScenarioError,
    SceneGeometry,
    derive_geometry,
    load_scenario,
    paper_scenario,
    receive_snr,
    scenario_from_dict,
)
from .fisher import FisherOptions, FisherSet, fisher_from_snr, fisher_set  # noqa: E402
from .crlb import (  # noqa: E402
    crlb_fusion_gain,
    crlb_hybrid_position,
    crlb_mono_from_fisher,
    crlb_mono_position,
    crlb_numeric_oracle,
    crlb_position_limit,
    crlb_single_antenna_position,
    crlb_table,
    crlb_velocity,
    optimal_bistatic_angle,
)
from .coverage import (  # noqa: E402
    CoverageQuery,
    UeRegion,
    coverage_mono_closed,
    coverage_numeric,
    optimal_ue_sweep,
    peb_cdf,
    ue_admissible_region,
)
from .kernels import BACKEND  # noqa: E402
