"""Renormalized Green-kernel ridge regression with capacitary obstacles."""
from .errors import (ConvergenceError, DimensionError, FactorizationError, GeometryError, ObstacleRidgeError,
                     ParamError, ShapeError, SingularSystemError)
from .estimator import (Dataset, FittedModel, Schedule, erm_fit, fit, load_model, predict, save_model,
                        schedule_params, smoothed_predict)
from .gram import GramMatrix, assemble_gram, gram_entry, psd_jitter
from .kernel import EuclideanGreenKernel, GreenKernel, SpaceParams, green_constant, green_eval, level_radius
from .obstacle import Obstacle, capacitary_mean, equilibrium_potential, make_obstacle, sphere_quadrature
from .solve import erm_solve, ridge_solve

__version__ = "0.1.0"
