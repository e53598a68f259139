"""Full, two-step and cut Bayesian inference for two-module pipelines."""

__version__ = "0.1.0"
