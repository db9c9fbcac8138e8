"""Local large deviations of random sums and claim surplus processes: exact lattice
oracles, Monte Carlo estimators, index estimators and ratio scans."""

__version__ = "0.1.0"

from .distributions import (  # noqa: F401
    DeltaWindow,
    Discretized,
    LatticeGrid,
    LatticePmf,
    Pareto,
    ShiftedBy,
    StepPareto,
    discretize,
    point_mass,
    severity_from_spec,
)
from .indices import (  # noqa: F401
    IndexEstimates,
    PotterCertificate,
    analytic_indices,
    certify_potter,
    check_lemma44,
    estimate_local_indices,
    estimate_matuszewska,
)
from .counting import (  # noqa: F401
    DeterministicCount,
    FiniteMixing,
    HomPoisson,
    MixedPoisson,
    ParetoMixing,
    check_condition_31,
    check_condition_32,
    lower_tail,
    truncated_p_moment,
    verify_lemma43,
)
from .compound import (  # noqa: F401
    CompoundPmf,
    KmaxTooSmall,
    NegativeBinomial,
    Poisson,
    convolution_pmf,
    panjer_pmf,
)
from .montecarlo import (  # noqa: F401
    CompoundPoissonPremium,
    DeterministicLinear,
    RiskModelSpec,
    estimate_centered_interval,
)
from .bounds import (  # noqa: F401
    RatioReport,
    corollary31_ratio_scan,
    lemma41_bound,
    lemma41_constants,
    lemma42_ratio_scan,
    theorem31_ratio_scan,
    theorem32_ratio_scan,
)
