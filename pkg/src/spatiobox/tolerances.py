"""Numerical tolerances shared across the package.

Every comparison threshold lives here so that a run can override them from a
single config map (see :func:`overridden`).
"""

from __future__ import annotations

import contextlib
from typing import Iterator, Mapping

DEFAULTS: dict[str, float] = {
    # coefficient-level equality (round trips, normalization, no-signalling)
    "coeff": 1e-12,
    # grid-then-refine suprema / infima
    "sup": 1e-8,
    # |C| <= 1 acceptance when building boxes from correlation functions
    "bounded": 1e-9,
    # probabilities may dip this far below zero on the validation grid
    "nonneg": 1e-10,
    # conditional boxes are undefined below this marginal
    "marginal": 1e-12,
    # affine / bilinear fit residual that counts as "transforms fundamentally"
    "affine": 1e-10,
    # equality of conditional Haar averages across outcomes
    "unbiased": 1e-9,
    # unitality of a bilinear form
    "unital": 1e-12,
    # cone positivity
    "positive": 1e-9,
    # density-matrix validity
    "hermitian": 1e-12,
    "psd": 1e-10,
}

_active: dict[str, float] = dict(DEFAULTS)


def tol(name: str) -> float:
    return _active[name]


@contextlib.contextmanager
def overridden(values: Mapping[str, float]) -> Iterator[None]:
    """Temporarily replace some tolerances; unknown names raise ``KeyError``."""
    unknown = set(values) - set(DEFAULTS)
    if unknown:
        raise KeyError(f"unknown tolerance name(s): {sorted(unknown)}")
    saved = dict(_active)
    _active.update({k: float(v) for k, v in values.items()})
    try:
        yield
    finally:
        _active.clear()
        _active.update(saved)
