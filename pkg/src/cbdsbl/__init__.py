"""Decentralized joint-sparse recovery with sparse Bayesian learning and bridge-node ADMM.

Modules
-------
model   JSM-2 ground truth and noisy per-node measurements
graph   topologies, bridge selection, constraint matrices, rate constants
sbl     centralized M-SBL (E-step, M-step, EM loop, thresholding)
admm    bridge-node consensus ADMM and its convergence diagnostics
sim     synchronous-round network simulator with message ledger and failures
metrics NMSE and NSER
bench   Monte-Carlo trials, sweeps and phase boundaries
plotting SVG figures for sweep tables
cli     ``cbdsbl run | sweep | topology``
"""

from .errors import (
    CBDSBLError,
    ConsensusImpossibleError,
    DegenerateSNRError,
    InvalidArgumentError,
    NumericError,
    TopologyGenerationError,
)
from .model import MeasurementSet, NodeMeasurement, SparseEnsemble, generate_ensemble, generate_measurements
from .graph import (
    ConstraintMatrices,
    NetworkTopology,
    RateConstants,
    build_constraints,
    cbdsbl_rate_constants,
    delta_general,
    generate_erdos_renyi,
    make_topology,
    rho_opt,
    select_bridges,
    validate_bridges,
)
from .sbl import SolverConfig, e_step, genie_lmmse, m_step_centralized, msbl_solve, threshold_support
from .admm import AdmmState, GNormMonitor, admm_mstep, gnorm_gap, solve_reference
from .metrics import nmse, nmse_db, nser
from .sim import FailureSchedule, MessageLedger, consensus_gap, run_cbdsbl

__version__ = "0.1.0"
