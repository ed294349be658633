"""Numerical laboratory for diffusion phenomena of damped wave equations with variable coefficients."""

from .coeffs import DampingModel, PerturbationModel, predict_rates
from .fields import Grid
from .model import Model
from .nonlinearity import Monomial, NonlinearityModel

__all__ = ["DampingModel", "PerturbationModel", "predict_rates", "Grid", "Model", "Monomial",
           "NonlinearityModel"]
__version__ = "0.1.0"
