"""Operator-learning toolkit for reconstructing continuous scalar fields
at arbitrary query coordinates from sparse multivariate sensor sequences."""

__version__ = "0.1.0"
