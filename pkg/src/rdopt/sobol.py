"""Unscrambled Sobol points and their scaling into box domains.

The generator uses the Joe & Kuo direction numbers shipped with
``scipy.stats.qmc``; the first point of every sequence is the origin.
"""

from __future__ import annotations

import warnings

import numpy as np
from scipy.stats import qmc

from .domain import BoxDomain
from .errors import ShapeError, UnsupportedDimensionError

MAX_DIM = qmc.Sobol.MAXDIM


def sobol_sequence(dim: int, count: int, skip: int = 0) -> np.ndarray:
    """Return ``count`` consecutive Sobol points after discarding ``skip``.

    Parameters
    ----------
    dim : int
        Dimension of the unit cube, ``1 <= dim <= MAX_DIM``.
    count : int
        Number of points, at least 1. Powers of two keep the balance
        properties of the sequence.
    skip : int
        Number of leading points to discard.

    Returns
    -------
    ndarray, shape (count, dim)
        Points in ``[0, 1)``.
    """
    dim, count, skip = int(dim), int(count), int(skip)
    if dim < 1:
        raise ValueError(f"dim must be positive, got {dim}")
    if dim > MAX_DIM:
        raise UnsupportedDimensionError(f"Sobol dimension {dim} exceeds the supported maximum {MAX_DIM}")
    if count < 1:
        raise ValueError(f"count must be positive, got {count}")
    if skip < 0:
        raise ValueError(f"skip must be non-negative, got {skip}")
    engine = qmc.Sobol(dim, scramble=False)
    with warnings.catch_warnings():
        # balance warnings for non power-of-two counts are expected here
        warnings.simplefilter("ignore", UserWarning)
        if skip:
            engine.fast_forward(skip)
        return engine.random(count)


def scale_to_domain(samples, domain: BoxDomain) -> np.ndarray:
    """Affinely map unit-cube samples into ``domain``."""
    u = np.atleast_2d(np.asarray(samples, dtype=float))
    if u.shape[1] != domain.dim:
        raise ShapeError(f"samples have dimension {u.shape[1]}, domain has {domain.dim}")
    return domain.lower + u * (domain.upper - domain.lower)


def sobol_in_domain(domain: BoxDomain, count: int, skip: int = 0) -> np.ndarray:
    """Convenience wrapper: Sobol points scaled to ``domain``."""
    return scale_to_domain(sobol_sequence(domain.dim, count, skip), domain)
