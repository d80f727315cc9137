from .checks import (
    ERGODIC,
    NOT_CONCLUDED,
    STABLE,
    ErgodicityReport,
    StabilityReport,
    check_ergodicity,
    check_stability,
    stability_verdict,
)
from .convergence import ConvergenceReport, Reference, fit_order, strong_convergence
from .ensemble import (
    CouplingResult,
    EnsembleStats,
    coupled_pair,
    coupling_experiment,
    ensemble_statistics,
    lyapunov_ensemble,
    run_ensemble,
    simulate_paths,
)
from .estimators import (
    DegenerateTail,
    LyapunovEstimate,
    MartingaleCheck,
    ellipsoid_time_average,
    estimate_lyapunov,
    exp_martingale_check,
    fit_log_slope,
    time_average,
)
