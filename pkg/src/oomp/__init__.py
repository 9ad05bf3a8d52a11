"""Online greedy support recovery for random-design sparse linear regression.

The package provides:

* ``model``       -- synthetic bounded-design linear models with analytically
                     known population quantities (covariance, restricted risk
                     minimizers, residual correlations, eigenvalue and
                     irrepresentability constants).
* ``datasource``  -- per-coordinate query access to fresh or stored rows with
                     exact cost accounting and subroutine isolation barriers.
* ``optim``       -- projected averaged SGD for the restricted squared risk.
* ``tryselect``   -- empirical-Bernstein feature races (shared-row stream and
                     per-arm database variants).
* ``driver``      -- the outer selection loop with halving/quartering schedules
                     and a per-phase complexity ledger.
* ``baseline``    -- batch greedy selection, its population idealization, and
                     batch sample-size / complexity proxies.
* ``experiments`` -- the dimension-sweep harness with CSV/JSON emission and a
                     command line interface.
"""

from .model import (
    CovarianceSpec,
    ModelSpec,
    PopulationOracle,
    build_oracle,
    load_model_spec,
    population_beta,
    population_w,
    population_z,
    restricted_sample_batch,
    risk_gap,
    sample,
    sample_batch,
)
from .datasource import BudgetExceeded, DataSource, FeatureSet, QueryLedger
from .optim import OptimConfig, OptimResult, optim, project_ball
from .tryselect import (
    ArmState,
    ConfParams,
    PriorityIndex,
    TrySelectOutcome,
    conf_radius,
    try_select_db,
    try_select_stream,
    update_arm,
)
from .driver import ComplexityLedger, RunResult, SelectConfig, StepStats, oomp, select
from .baseline import (
    BatchData,
    OmpResult,
    draw_batch,
    n_omp,
    omp,
    omp_complexity_proxies,
    oracle_omp,
)
from .experiments import DecayScheme, ExperimentConfig, ResultRow, emit, run_sweep

__version__ = "0.1.0"
