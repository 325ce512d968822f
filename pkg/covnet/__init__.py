"""Gaussian Bayesian network structure learning for data with exogenous covariates."""

from .network import CovNetModel
from .version import __version__
