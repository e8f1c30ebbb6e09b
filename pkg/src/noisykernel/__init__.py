"""Online kernel learning from noise-corrupted instances.

The package provides randomized unbiased estimators for analytic
functions of a mean, unbiased feature-map estimates for dot-product and
Gaussian kernels, the noisy-input online gradient descent learner with
its query-count accounting, adversarial noise environments including a
matched-distribution pair showing that one noisy copy per round is not
enough, and a seeded experiment harness.
"""

from .errors import (ConfigError, DimensionMismatchError,
                     EstimateMismatchError, HorizonExceededError,
                     IndexCapExceededError, InvalidParameterError,
                     NumericFaultError, QueryBudgetExceededError)
from .series import (CoefficientStream, FixedIndexLaw, GeometricLaw,
                     estimate_scalar, sample_geometric, second_moment_bound)
from .kernels import (DotProductKernel, GaussianKernel, eval_kernel,
                      kernel_catalogue, kernel_from_config)
from .features import (FeatureEstimate, NoisyInstanceOracle, feature_from_json,
                       feature_to_json, map_estimate, map_estimate_dot,
                       map_estimate_gaussian, prod_exact, prod_pair)
from .losses import (AnalyticLoss, deriv_plus_bound, loss_catalogue,
                     loss_from_config, smoothed_absolute, smoothed_hinge)
from .learner import (Hypothesis, LearnerConfig, RoundLog, baseline_ogd,
                      batch_comparator, grad_length_estimate, predict,
                      run_online, two_copy_linear_squared)
from .environments import (BudgetedOracle, Environment, environment_from_config,
                           impossibility_experiment, impossibility_pair,
                           make_oracle, true_loss_hook)
from .harness import ExperimentSpec, run_experiment

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
