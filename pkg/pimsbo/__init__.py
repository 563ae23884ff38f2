"""
pimsbo - Gaussian-process Bayesian optimization with Thompson sampling and PIMS

A command-line engine to run TS, PIMS and GP-UCB style policies on synthetic
GP objectives, and to check their Bayesian regret bounds empirically.
"""

__version__ = "0.3.0"
__author__ = "Kazluu"
__license__ = "MIT"
