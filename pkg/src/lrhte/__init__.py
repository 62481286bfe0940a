"""Joint low-rank estimation of heterogeneous treatment effects across
multiple experiments and outcome metrics, with independent per-experiment
baselines, synthetic data generators, risk metrics, and rank diagnostics.
"""

__version__ = "0.1.0"
