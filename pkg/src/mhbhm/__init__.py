"""Bayesian hierarchical damage model for compound natural hazards.

Damage from an event is the exposure-weighted sum of a logistic vulnerability
of several hazard intensities, observed with multiplicative log-normal error.
The package simulates synthetic catalogs on spatial grids, fits the model by
Metropolis-Hastings, draws posterior predictive damages for new events and
summarizes them with tail-risk metrics.
"""

from .damage import (
    DegenerateMeanError,
    ErrorParams,
    EventCatalog,
    EventRecord,
    ScenarioConfig,
    expected_damage,
    generate_holdout_events,
    generate_synthetic_catalog,
    log_likelihood,
    scenario,
    scenario_names,
    simulate_damage,
)
from .grids import (
    CrossMaternParams,
    ExposureField,
    FactorizationError,
    HazardFieldSet,
    MaternParams,
    SpatialGrid,
    UrbanCenterSpec,
    matern_covariance,
    normalize_hazards,
    sample_exposure_field,
    sample_gaussian_field,
    sample_multihazard_fields,
)
from .inference import (
    DiagnosticsReport,
    Gamma,
    LogPosterior,
    McmcConfig,
    ModelFamily,
    PosteriorSamples,
    Uniform,
    default_priors,
    gelman_rubin,
    run_chain,
    run_mcmc,
    summarize,
)
from .predict import (
    BALDWIN,
    EBERENZ,
    DeterministicBaseline,
    PredictiveSample,
    baseline_predict,
    percentile_of_truth,
    posterior_predict,
    truth_damage_sample,
)
from .risk import (
    RiskReport,
    build_risk_report,
    dev_asym,
    dev_sym,
    dev_weighted,
    exceedance_curve,
    tvar,
    var,
    wasserstein_1d,
)
from .vulnerability import (
    EmanuelParams,
    LogisticVulnParams,
    LogNormalVulnParams,
    VulnerabilityModel,
    emanuel_fraction,
    logistic_fraction,
    lognormal_fraction,
    vulnerability_surface,
)

__version__ = "0.1.0"
