"""Monte Carlo inference for semiparametric Bayesian transformation models."""
