"""
DualPL - Domain-aware pseudo-labeling with dual classifiers.

Main package for semi-supervised domain generalization training.
"""

from src import config

__version__ = config.APP_VERSION
__author__ = "DualPL Team"

__all__ = ["config"]
