"""Joint inference of the quantile parameter and model parameters under the normalised quantile Huber loss."""

__version__ = "0.1.0"

from .errors import ConvergenceError, DomainError, ParseError, StagnationError, UnsupportedError
from .losses import (
    LossParams,
    TauCalculus,
    moreau_oracle,
    quantile_huber,
    quantile_huber_dr,
    quantile_loss,
    tau_calculus,
    total_loss,
)
from .normalizer import (
    NormalizationEval,
    NormalizedTauCalculus,
    c_quadrature_oracle,
    convexity_certificate,
    normalization,
    normalized_loss,
    std_normal_cdf,
)
from .tau_inference import TauSolveConfig, solve_tau
from .varpro import (
    AffineModel,
    JointSolution,
    SolverConfig,
    fit_fixed_tau,
    least_squares,
    lemma1_check,
    objective,
    projected_gradient,
    solve_joint,
)
