"""Preconditioner-diagonalization optimizers with SVD gradient projection."""

from ._precondiag import *  # noqa: F401,F403

__version__ = "0.1.0"
