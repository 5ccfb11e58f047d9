"""Information-theoretic level-set estimation and Bayesian optimisation on GP surrogates."""

__version__ = "0.1.0"
