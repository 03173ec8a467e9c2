"""Correlation functions of two angles as bounded trigonometric series.

A series is stored as a constant plus coefficients on canonical frequency
pairs ``(m, n)``, each term reading ``cos_coeff*cos(m*a - n*b) +
sin_coeff*sin(m*a - n*b)``.  Canonical means ``m >= 0`` and ``n > 0`` when
``m == 0``; the pair ``(0, 0)`` is folded into the constant.  The spin bound
is carried as the integer ``two_j`` (``2J``) and caps ``|m|, |n| <= 2J``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Mapping

import numpy as np
from scipy.optimize import minimize

from .tolerances import tol

TWO_PI = 2.0 * math.pi

#: Grid density per axis for suprema scans.
GRID_POINTS = 720
#: Number of grid local extrema refined by quasi-Newton steps.
REFINE_CANDIDATES = 8


class NotRelationalError(ValueError):
    pass


class DegenerateSamplesError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class FreqPair:
    m: int
    n: int

    def __post_init__(self) -> None:
        if self.m < 0 or (self.m == 0 and self.n <= 0):
            raise ValueError(f"non-canonical frequency pair ({self.m}, {self.n})")


def canonical_pair(m: int, n: int) -> tuple[int, int, int]:
    """Return ``(m', n', sign)`` so that ``sin(m a - n b) = sign*sin(m' a - n' b)``.

    Cosines are unchanged by the flip.  ``(0, 0)`` comes back as itself.
    """
    m, n = int(m), int(n)
    if m < 0 or (m == 0 and n < 0):
        return -m, -n, -1
    return m, n, 1


@dataclass(frozen=True, eq=False)
class CorrelationFunction:
    """Trigonometric series ``C(alpha, beta)`` with spin bound ``two_j/2``.

    ``bounded`` is an optional certificate: ``True`` when a constructor
    guarantees ``|C| <= 1`` (e.g. built from a valid probability table),
    ``None`` when unchecked.  Use :func:`is_bounded` to check numerically.
    """

    two_j: int
    constant: float = 0.0
    terms: Mapping[FreqPair, tuple[float, float]] = field(default_factory=dict)
    bounded: bool | None = None

    def __post_init__(self) -> None:
        if int(self.two_j) != self.two_j or self.two_j < 0:
            raise ValueError(f"two_j must be a non-negative integer, got {self.two_j!r}")
        clean: dict[FreqPair, tuple[float, float]] = {}
        for key, (c, s) in self.terms.items():
            pair = key if isinstance(key, FreqPair) else FreqPair(*key)
            if pair.m > self.two_j or abs(pair.n) > self.two_j:
                raise ValueError(
                    f"frequency pair ({pair.m}, {pair.n}) exceeds spin bound 2J={self.two_j}"
                )
            clean[pair] = (float(c), float(s))
        ordered = dict(sorted(clean.items()))
        object.__setattr__(self, "two_j", int(self.two_j))
        object.__setattr__(self, "constant", float(self.constant))
        object.__setattr__(self, "terms", MappingProxyType(ordered))
        m = np.array([p.m for p in ordered], dtype=float)
        n = np.array([p.n for p in ordered], dtype=float)
        cs = np.array(list(ordered.values()), dtype=float).reshape(-1, 2)
        object.__setattr__(self, "_m", m)
        object.__setattr__(self, "_n", n)
        object.__setattr__(self, "_c", cs[:, 0].copy())
        object.__setattr__(self, "_s", cs[:, 1].copy())

    # -- construction helpers -------------------------------------------------

    @classmethod
    def from_terms(
        cls,
        two_j: int,
        terms: Iterable[tuple[int, int, float, float]],
        constant: float = 0.0,
    ) -> "CorrelationFunction":
        """Build from possibly redundant ``(m, n, cos, sin)`` tuples.

        Pairs are canonicalized and duplicates summed, so redundant
        parametrizations with negative ``n`` at ``m = 0`` are accepted.
        """
        acc: dict[tuple[int, int], list[float]] = {}
        for m, n, c, s in terms:
            mm, nn, sign = canonical_pair(m, n)
            if mm == 0 and nn == 0:
                constant += c
                continue
            slot = acc.setdefault((mm, nn), [0.0, 0.0])
            slot[0] += c
            slot[1] += sign * s
        return cls(two_j, constant, {FreqPair(*k): tuple(v) for k, v in acc.items()})

    @classmethod
    def relational(
        cls,
        two_j: int,
        cos: Mapping[int, float] | None = None,
        sin: Mapping[int, float] | None = None,
        constant: float = 0.0,
    ) -> "CorrelationFunction":
        """Series depending only on ``theta = alpha - beta``."""
        cos = dict(cos or {})
        sin = dict(sin or {})
        items = [(m, m, cos.get(m, 0.0), sin.get(m, 0.0)) for m in sorted(set(cos) | set(sin))]
        return cls.from_terms(two_j, items, constant)

    @property
    def spin(self) -> float:
        return self.two_j / 2

    @property
    def n_terms(self) -> int:
        return len(self.terms)

    def is_relational(self) -> bool:
        return all(p.m == p.n for p in self.terms)

    def coefficient(self, m: int, n: int) -> tuple[float, float]:
        """``(cos, sin)`` coefficient of the canonical pair ``(m, n)``, zero if absent."""
        if m == 0 and n == 0:
            return (self.constant, 0.0)
        return self.terms.get(FreqPair(m, n), (0.0, 0.0))

    # -- arithmetic -------------------------------------------------------------

    def _combine(self, other: "CorrelationFunction", sign: float) -> "CorrelationFunction":
        merged = {p: list(v) for p, v in self.terms.items()}
        for p, (c, s) in other.terms.items():
            slot = merged.setdefault(p, [0.0, 0.0])
            slot[0] += sign * c
            slot[1] += sign * s
        return CorrelationFunction(
            max(self.two_j, other.two_j),
            self.constant + sign * other.constant,
            {p: tuple(v) for p, v in merged.items()},
        )

    def __add__(self, other: "CorrelationFunction") -> "CorrelationFunction":
        return self._combine(other, 1.0)

    def __sub__(self, other: "CorrelationFunction") -> "CorrelationFunction":
        return self._combine(other, -1.0)

    def scaled(self, k: float, shift: float = 0.0) -> "CorrelationFunction":
        """``k*C + shift``."""
        return CorrelationFunction(
            self.two_j,
            k * self.constant + shift,
            {p: (k * c, k * s) for p, (c, s) in self.terms.items()},
        )

    def __neg__(self) -> "CorrelationFunction":
        return self.scaled(-1.0)

    def with_spin(self, two_j: int) -> "CorrelationFunction":
        return CorrelationFunction(two_j, self.constant, dict(self.terms), self.bounded)

    def certified(self) -> "CorrelationFunction":
        return CorrelationFunction(self.two_j, self.constant, dict(self.terms), True)

    def pruned(self, atol: float = 0.0) -> "CorrelationFunction":
        kept = {p: v for p, v in self.terms.items() if abs(v[0]) > atol or abs(v[1]) > atol}
        return CorrelationFunction(self.two_j, self.constant, kept, self.bounded)

    def allclose(self, other: "CorrelationFunction", atol: float | None = None) -> bool:
        """Coefficient-level comparison; absent pairs count as zero."""
        atol = tol("coeff") if atol is None else atol
        if abs(self.constant - other.constant) > atol:
            return False
        for p in set(self.terms) | set(other.terms):
            a = self.terms.get(p, (0.0, 0.0))
            b = other.terms.get(p, (0.0, 0.0))
            if abs(a[0] - b[0]) > atol or abs(a[1] - b[1]) > atol:
                return False
        return True

    def l2_norm_sq(self) -> float:
        """``constant**2 + sum(c**2 + s**2)/2``; at most 1 for any function bounded by 1."""
        return self.constant**2 + 0.5 * float(np.sum(self._c**2 + self._s**2))

    def coefficient_energy(self) -> float:
        """``sum(c**2 + s**2)`` over the angle-dependent terms."""
        return float(np.sum(self._c**2 + self._s**2))

    # -- evaluation -----------------------------------------------------------

    def __call__(self, alpha, beta):
        return evaluate(self, alpha, beta)

    def relational_value(self, theta):
        """``C(theta, 0)``; for relational functions this is ``C`` at ``alpha - beta = theta``."""
        return evaluate(self, theta, 0.0)

    # -- serialization ----------------------------------------------------------

    def to_json(self) -> dict:
        return {
            "two_j": self.two_j,
            "constant": self.constant,
            "terms": [
                {"m": p.m, "n": p.n, "cos": c, "sin": s} for p, (c, s) in self.terms.items()
            ],
        }

    @classmethod
    def from_json(cls, data: Mapping) -> "CorrelationFunction":
        if not isinstance(data, Mapping):
            raise ValueError("correlation function JSON must be an object")
        if "two_j" not in data:
            raise ValueError("field 'two_j' is missing")
        two_j = data["two_j"]
        constant = data.get("constant", 0.0)
        raw = data.get("terms", [])
        if not isinstance(two_j, int) or isinstance(two_j, bool):
            raise ValueError(f"field 'two_j': expected integer, got {two_j!r}")
        if not isinstance(constant, (int, float)) or isinstance(constant, bool):
            raise ValueError(f"field 'constant': expected number, got {constant!r}")
        if not isinstance(raw, list):
            raise ValueError("field 'terms': expected a list")
        terms: dict[FreqPair, tuple[float, float]] = {}
        for i, t in enumerate(raw):
            if not isinstance(t, dict):
                raise ValueError(f"field 'terms[{i}]': expected an object")
            for key in ("m", "n", "cos", "sin"):
                if key not in t:
                    raise ValueError(f"field 'terms[{i}].{key}' is missing")
            m, n = t["m"], t["n"]
            if not all(isinstance(v, int) and not isinstance(v, bool) for v in (m, n)):
                raise ValueError(f"field 'terms[{i}]': m and n must be integers")
            try:
                pair = FreqPair(m, n)
            except ValueError as exc:
                raise ValueError(f"field 'terms[{i}]': {exc}") from None
            if pair in terms:
                raise ValueError(f"field 'terms[{i}]': duplicate pair ({m}, {n})")
            for key in ("cos", "sin"):
                v = t[key]
                if not isinstance(v, (int, float)) or isinstance(v, bool):
                    raise ValueError(f"field 'terms[{i}].{key}': expected number, got {v!r}")
            terms[pair] = (float(t["cos"]), float(t["sin"]))
        return cls(two_j, constant, terms)


# ---------------------------------------------------------------------------
# evaluation


def evaluate(f: CorrelationFunction, alpha, beta):
    """Evaluate the series; broadcasts over array-valued angles."""
    a = np.mod(np.asarray(alpha, dtype=float), TWO_PI)
    b = np.mod(np.asarray(beta, dtype=float), TWO_PI)
    out = np.full(np.broadcast(a, b).shape, f.constant)
    for m, n, c, s in zip(f._m, f._n, f._c, f._s):
        phase = m * a - n * b
        out = out + c * np.cos(phase) + s * np.sin(phase)
    return out if out.ndim else float(out)


def _derivatives(f: CorrelationFunction, x: np.ndarray) -> tuple[float, np.ndarray, np.ndarray]:
    """Value of the angle-dependent part, gradient and Hessian at ``x = (alpha, beta)``."""
    phase = f._m * x[0] - f._n * x[1]
    cos, sin = np.cos(phase), np.sin(phase)
    val = float(np.sum(f._c * cos + f._s * sin))
    d = -f._c * sin + f._s * cos  # derivative w.r.t. the phase
    dd = -(f._c * cos + f._s * sin)
    grad = np.array([np.sum(f._m * d), -np.sum(f._n * d)])
    hess = np.array(
        [
            [np.sum(f._m**2 * dd), -np.sum(f._m * f._n * dd)],
            [-np.sum(f._m * f._n * dd), np.sum(f._n**2 * dd)],
        ]
    )
    return val, grad, hess


def grid_values(f: CorrelationFunction, points: int = GRID_POINTS) -> tuple[np.ndarray, np.ndarray]:
    """Angle-dependent part of ``f`` on a ``points x points`` grid over ``[0, 2pi)^2``.

    Uses the separable form ``Re sum (c - i s) e^{i m a} e^{-i n b}`` so the
    cost is two small matrix products.
    """
    grid = np.arange(points) * (TWO_PI / points)
    tj = f.two_j
    coeff = np.zeros((tj + 1, 2 * tj + 1), dtype=complex)
    for p, (c, s) in f.terms.items():
        coeff[p.m, p.n + tj] += c - 1j * s
    ea = np.exp(1j * np.outer(np.arange(tj + 1), grid))
    eb = np.exp(-1j * np.outer(np.arange(-tj, tj + 1), grid))
    return grid, np.real(ea.T @ coeff @ eb)


def _local_maxima(values: np.ndarray, k: int) -> list[tuple[int, int]]:
    neighbours = [np.roll(np.roll(values, i, 0), j, 1) for i in (-1, 0, 1) for j in (-1, 0, 1) if i or j]
    is_peak = np.all([values >= nb for nb in neighbours], axis=0)
    idx = np.flatnonzero(is_peak)
    if idx.size == 0:
        idx = np.array([int(np.argmax(values))])
    best = idx[np.argsort(values.ravel()[idx])[::-1][:k]]
    return [tuple(int(v) for v in np.unravel_index(i, values.shape)) for i in best]


def extremum(f: CorrelationFunction, sign: float = 1.0, points: int = GRID_POINTS) -> tuple[float, float, float]:
    """Maximize ``sign*(C - constant)`` over the torus.

    Dense grid scan, then quasi-Newton refinement from the best grid
    local maxima.  Returns ``(value, alpha, beta)`` with ``value`` the
    maximum of ``sign*(C - constant)``.
    """
    if not f.terms:
        return 0.0, 0.0, 0.0
    grid, vals = grid_values(f, points)
    vals = sign * vals
    best = (float(vals.max()),) + tuple(float(grid[i]) for i in np.unravel_index(np.argmax(vals), vals.shape))

    def objective(x):
        v, g, _ = _derivatives(f, x)
        return -sign * v, -sign * g

    # BFGS rather than Newton: relational maxima sit on flat diagonal ridges
    # where the Hessian is singular.
    for i, j in _local_maxima(vals, REFINE_CANDIDATES):
        res = minimize(
            objective,
            np.array([grid[i], grid[j]]),
            jac=True,
            method="BFGS",
            options={"gtol": 1e-11, "maxiter": 200},
        )
        value = -float(res.fun)
        if value > best[0]:
            best = (value, float(np.mod(res.x[0], TWO_PI)), float(np.mod(res.x[1], TWO_PI)))
    return best


def max_deviation(f: CorrelationFunction, points: int = GRID_POINTS) -> float:
    """``sup |C - constant|`` over all angle pairs."""
    if not f.terms:
        return 0.0
    return max(extremum(f, 1.0, points)[0], extremum(f, -1.0, points)[0])


def value_range(f: CorrelationFunction, points: int = GRID_POINTS) -> tuple[float, float]:
    """``(inf C, sup C)`` over the torus."""
    if not f.terms:
        return f.constant, f.constant
    return f.constant - extremum(f, -1.0, points)[0], f.constant + extremum(f, 1.0, points)[0]


def max_abs(f: CorrelationFunction, points: int = GRID_POINTS) -> float:
    lo, hi = value_range(f, points)
    return max(abs(lo), abs(hi))


def is_bounded(f: CorrelationFunction, atol: float | None = None) -> bool:
    """``|C| <= 1`` everywhere, up to ``atol``; trusts a ``bounded=True`` certificate."""
    if f.bounded:
        return True
    atol = tol("bounded") if atol is None else atol
    return max_abs(f) <= 1.0 + atol


# ---------------------------------------------------------------------------
# relational part


def relational_core(f: CorrelationFunction) -> CorrelationFunction:
    """Keep the constant and the ``m == n`` terms (average over a shared rotation)."""
    return CorrelationFunction(
        f.two_j, f.constant, {p: v for p, v in f.terms.items() if p.m == p.n}, f.bounded
    )


def second_derivative_bound(two_j: int) -> float:
    """Bound on ``|d^2 C/d theta^2|`` for a relational series bounded by 1.

    Equals ``sqrt(2) * sum_{m=1}^{2J} m^2 = sqrt(2) J(2J+1)(4J+1)/3``.
    """
    if two_j < 0:
        raise ValueError("two_j must be non-negative")
    j = two_j / 2
    return math.sqrt(2.0) * j * (2 * j + 1) * (4 * j + 1) / 3


@dataclass(frozen=True)
class PolarForm:
    """``A0 + sum_m A_m cos(m*theta - phi_m)`` with ``theta = alpha - beta``."""

    A0: float
    amplitudes: Mapping[int, float]
    phases: Mapping[int, float]

    def __call__(self, theta):
        theta = np.asarray(theta, dtype=float)
        out = np.full(theta.shape, self.A0)
        for m, amp in self.amplitudes.items():
            out = out + amp * np.cos(m * theta - self.phases[m])
        return out if out.ndim else float(out)

    def second_derivative(self, theta):
        theta = np.asarray(theta, dtype=float)
        out = np.zeros(theta.shape)
        for m, amp in self.amplitudes.items():
            out = out - m * m * amp * np.cos(m * theta - self.phases[m])
        return out if out.ndim else float(out)


def polar_form(f: CorrelationFunction) -> PolarForm:
    """Amplitude/phase form of a relational series.

    Phases use the quadrant-aware arctangent, folded into ``[-pi, pi)``.
    For ``C_m = 0`` this gives ``+pi/2`` or ``-pi/2`` by the sign of ``S_m``.
    Terms with zero amplitude are omitted.
    """
    bad = [(p.m, p.n) for p, (c, s) in f.terms.items() if p.m != p.n and (c or s)]
    if bad:
        raise NotRelationalError(f"series has non-relational terms {bad}")
    amps: dict[int, float] = {}
    phases: dict[int, float] = {}
    for p, (c, s) in f.terms.items():
        if p.m != p.n or (c == 0.0 and s == 0.0):
            continue
        amps[p.m] = math.hypot(c, s)
        phi = math.atan2(s, c)
        phases[p.m] = -math.pi if phi >= math.pi else phi
    return PolarForm(f.constant, MappingProxyType(amps), MappingProxyType(phases))


# ---------------------------------------------------------------------------
# fitting


def canonical_pairs(two_j: int) -> list[FreqPair]:
    """All canonical pairs with ``|m|, |n| <= 2J``; there are ``4J(2J+1)``."""
    return [
        FreqPair(m, n)
        for m in range(two_j + 1)
        for n in range(-two_j, two_j + 1)
        if m > 0 or n > 0
    ]


@dataclass(frozen=True)
class TrigFit:
    function: CorrelationFunction
    residual_rms: float
    n_samples: int


def fit_trig_series(samples, two_j: int) -> TrigFit:
    """Least-squares fit of a spin-``two_j/2`` series to ``(alpha, beta, value)`` rows.

    Raises :class:`DegenerateSamplesError` when the samples do not determine
    all ``1 + 8J(2J+1)`` real coefficients.
    """
    data = np.asarray(samples, dtype=float)
    if data.ndim != 2 or data.shape[1] != 3:
        raise ValueError("samples must be rows of (alpha, beta, value)")
    pairs = canonical_pairs(two_j)
    a, b, y = data.T
    cols = [np.ones_like(a)]
    for p in pairs:
        phase = p.m * a - p.n * b
        cols.extend((np.cos(phase), np.sin(phase)))
    design = np.column_stack(cols)
    coef, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    if rank < design.shape[1]:
        raise DegenerateSamplesError(
            f"sample set has rank {rank}, need {design.shape[1]} for 2J={two_j}"
        )
    resid = y - design @ coef
    terms = {p: (float(coef[1 + 2 * i]), float(coef[2 + 2 * i])) for i, p in enumerate(pairs)}
    fitted = CorrelationFunction(two_j, float(coef[0]), terms)
    return TrigFit(fitted, float(np.sqrt(np.mean(resid**2))), len(y))


def scifi_correlation() -> CorrelationFunction:
    """``(2/7) cos 3(alpha-beta) - cos(alpha-beta)``: bounded but super-quantum."""
    return CorrelationFunction.relational(3, cos={1: -1.0, 3: 2.0 / 7.0})
