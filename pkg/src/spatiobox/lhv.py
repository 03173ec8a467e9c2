"""Explicit local hidden-variable models for two-angle correlations.

The main construction shares ``N`` independent uniform angles ``phi_j``.  Alice
answers +1 only if every rotated angle ``phi_j + m_j*alpha`` falls inside the
window ``[-xi, xi]``; Bob answers +1 with probability affine in
``sum_j b_j . (cos, sin)(phi_j + n_j*beta)``.  The resulting correlation is
``scale * f`` with ``scale = sqrt(2/N) (xi/pi)^(N-1) sin(xi)/pi``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import corrfn, rng
from .corrfn import CorrelationFunction, FreqPair

TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# the gamma constants


def optimal_window(n_terms: int) -> float:
    """Window half-width maximizing ``(x/pi)^(N-1) sin(x)``.

    The stationarity condition ``(N-1)/x + cot(x) = 0`` has exactly one root
    in ``(0, pi)`` because the left side is strictly decreasing there.
    """
    if n_terms < 1:
        raise ValueError("need at least one term")
    if n_terms == 1:
        return math.pi / 2
    k = n_terms - 1
    return brentq(lambda x: k / x + math.cos(x) / math.sin(x), math.pi / 2, math.pi * (1 - 1e-15), xtol=1e-15, rtol=1e-15)


def window_scale(n_terms: int, xi: float) -> float:
    """Prefactor achieved by the window model with ``N`` terms and half-width ``xi``."""
    if not 0.0 < xi < math.pi:
        raise ValueError("xi must lie in (0, pi)")
    return math.sqrt(2.0 / n_terms) * (xi / math.pi) ** (n_terms - 1) * math.sin(xi) / math.pi


def gamma_n(n_terms: int) -> float:
    """Largest noise prefactor the window model reaches with ``N`` terms."""
    return window_scale(n_terms, optimal_window(n_terms))


def gamma_lower_bound(n_terms: int) -> float:
    """``sqrt(2) e^-1 N^(-3/2)``, a lower bound on :func:`gamma_n` for ``N >= 4``."""
    return math.sqrt(2.0) / math.e * n_terms ** -1.5


def max_terms(two_j: int) -> int:
    """Number of canonical frequency pairs at spin ``two_j/2``: ``4J(2J+1)``."""
    return two_j * (two_j + 1) * 2


def gamma_j(two_j: int) -> float:
    """Worst-case noise threshold for spin ``two_j/2`` (uses ``N = 4J(2J+1)``)."""
    if two_j < 1:
        raise ValueError("spin must be at least 1/2: a spin-0 function has no angle dependence")
    return gamma_lower_bound(max_terms(two_j))


# ---------------------------------------------------------------------------
# the window model


@dataclass(frozen=True)
class LhvModel:
    """Window model reproducing ``scale * f`` for a bounded, constant-free ``f``."""

    xi: float
    freq_pairs: tuple[FreqPair, ...]
    b_vectors: np.ndarray  # shape (N, 2), rows (c_j, -s_j)
    scale: float
    two_j: int

    @property
    def n_terms(self) -> int:
        return len(self.freq_pairs)

    def target(self) -> CorrelationFunction:
        """The bounded function ``f`` the model is built around."""
        terms = {p: (float(b[0]), float(-b[1])) for p, b in zip(self.freq_pairs, self.b_vectors)}
        return CorrelationFunction(self.two_j, 0.0, terms)

    def exact_correlation(self) -> CorrelationFunction:
        return self.target().scaled(self.scale)

    def alice_plus_probability(self) -> float:
        return (self.xi / math.pi) ** self.n_terms

    def probabilities(self, alpha, beta) -> np.ndarray:
        """Closed-form ``P(a, b | alpha, beta)``, shape ``(2, 2) + broadcast shape``."""
        n = self.n_terms
        f = np.asarray(corrfn.evaluate(self.target(), alpha, beta))
        base = 0.5 * (self.xi / math.pi) ** n
        swing = (self.xi / math.pi) ** (n - 1) * math.sin(self.xi) / math.pi / (2 * math.sqrt(2 * n))
        pp, pm = base + swing * f, base - swing * f
        return np.stack([pp, pm, 0.5 - pp, 0.5 - pm]).reshape((2, 2) + f.shape)

    def sample(self, alpha: float, beta: float, shots: int, gen: np.random.Generator):
        """Draw ``shots`` outcome pairs; returns two int arrays of +-1."""
        n = self.n_terms
        m = np.array([p.m for p in self.freq_pairs], dtype=float)
        nb = np.array([p.n for p in self.freq_pairs], dtype=float)
        phi = gen.uniform(0.0, TWO_PI, size=(shots, n))
        u = gen.uniform(size=shots)
        rotated_a = np.mod(phi + m * alpha + math.pi, TWO_PI) - math.pi
        a = np.where(np.all(np.abs(rotated_a) <= self.xi, axis=1), 1, -1)
        rotated_b = phi + nb * beta
        drive = np.cos(rotated_b) @ self.b_vectors[:, 0] + np.sin(rotated_b) @ self.b_vectors[:, 1]
        q_plus = 0.5 * (1.0 + drive / math.sqrt(2 * n))
        b = np.where(u < q_plus, 1, -1)
        return a, b

    def to_json(self) -> dict:
        return {
            "n_terms": self.n_terms,
            "xi": self.xi,
            "two_j": self.two_j,
            "scale": self.scale,
            "freq_pairs": [[p.m, p.n] for p in self.freq_pairs],
            "b_vectors": self.b_vectors.tolist(),
        }


def build_lhv(f: CorrelationFunction, xi: float | None = None) -> LhvModel:
    """Window model whose correlation is ``scale * f``.

    ``f`` must have zero constant and satisfy ``|f| <= 1``; ``xi`` defaults to
    the optimal window, where ``scale`` equals :func:`gamma_n`.
    """
    if f.constant != 0.0:
        raise ValueError("build_lhv needs a function without constant term; use realize_lhv")
    g = f.pruned()
    if g.n_terms == 0:
        raise ValueError("function has no angle-dependent terms")
    energy = g.coefficient_energy()
    if energy > 2.0 + 1e-12:
        raise ValueError(f"coefficient energy {energy:.6g} > 2: function cannot be bounded by 1")
    if not corrfn.is_bounded(g):
        raise ValueError("function is not bounded by 1")
    n = g.n_terms
    xi = optimal_window(n) if xi is None else float(xi)
    pairs = tuple(g.terms)
    bvec = np.array([[c, -s] for c, s in g.terms.values()], dtype=float)
    return LhvModel(xi, pairs, bvec, window_scale(n, xi), g.two_j)


# ---------------------------------------------------------------------------
# certificates with a constant term


@dataclass(frozen=True)
class LocalityCertificate:
    passed: bool
    deviation: float
    bound: float
    gamma: float
    constant: float
    n_terms: int
    mode: str  # "spin" (worst case over the spin bound) or "terms" (actual term count)

    @property
    def verdict(self) -> str:
        return "PASS" if self.passed else "INCONCLUSIVE"


def theorem_2a_check(f: CorrelationFunction, mode: str = "spin") -> LocalityCertificate:
    """Certify a local model from noisiness: ``max|C - C00| <= gamma (1 - |C00|)``.

    ``mode="spin"`` uses the worst-case threshold for the spin bound;
    ``mode="terms"`` uses ``gamma_n`` for the function's actual term count,
    which is never smaller.
    """
    g = f.pruned()
    c0 = g.constant
    if g.n_terms == 0:
        ok = abs(c0) <= 1.0
        return LocalityCertificate(ok, 0.0, 1.0 - abs(c0), 0.0, c0, 0, mode)
    if mode == "spin":
        gamma = gamma_j(g.two_j)
    elif mode == "terms":
        gamma = gamma_n(g.n_terms)
    else:
        raise ValueError(f"mode must be 'spin' or 'terms', got {mode!r}")
    dev = corrfn.max_deviation(g)
    bound = gamma * (1.0 - abs(c0))
    return LocalityCertificate(abs(c0) < 1.0 and dev <= bound, dev, bound, gamma, c0, g.n_terms, mode)


@dataclass(frozen=True)
class LhvRealization:
    """Mixture: with probability ``weight`` output the deterministic ``sign`` model."""

    weight: float
    sign: int
    model: LhvModel | None
    two_j: int

    def exact_correlation(self) -> CorrelationFunction:
        const = CorrelationFunction(self.two_j, self.sign * self.weight)
        if self.model is None:
            return const
        return const + self.model.exact_correlation().scaled(1.0 - self.weight)

    def probabilities(self, alpha, beta) -> np.ndarray:
        shape = np.broadcast(np.asarray(alpha), np.asarray(beta)).shape
        det = np.zeros((2, 2) + shape)
        det[0, 0 if self.sign > 0 else 1] = 1.0
        if self.model is None:
            return det
        return self.weight * det + (1.0 - self.weight) * self.model.probabilities(alpha, beta)

    def sample(self, alpha: float, beta: float, shots: int, gen: np.random.Generator):
        fixed = gen.uniform(size=shots) < self.weight
        a = np.ones(shots, dtype=int)
        b = np.full(shots, self.sign, dtype=int)
        if self.model is not None:
            ma, mb = self.model.sample(alpha, beta, shots, gen)
            a = np.where(fixed, a, ma)
            b = np.where(fixed, b, mb)
        return a, b


def realize_lhv(f: CorrelationFunction, mode: str = "terms") -> LhvRealization:
    """Local model whose exact correlation equals ``f``, when noisy enough.

    Splits ``f = |c0| (sign 1) + (1 - |c0|) h`` and realizes ``h`` with the
    optimal window model.  Raises ``ValueError`` if the certificate fails.
    """
    cert = theorem_2a_check(f, mode)
    if not cert.passed:
        raise ValueError(
            f"no locality certificate: deviation {cert.deviation:.6g} > bound {cert.bound:.6g}"
        )
    g = f.pruned()
    c0 = g.constant
    sign = 1 if c0 >= 0 else -1
    w = abs(c0)
    if g.n_terms == 0:
        return LhvRealization(w, sign, None, g.two_j)
    h = CorrelationFunction(g.two_j, 0.0, dict(g.terms)).scaled(1.0 / (1.0 - w))
    gamma = gamma_n(h.n_terms)
    model = build_lhv(h.scaled(1.0 / gamma), optimal_window(h.n_terms))
    return LhvRealization(w, sign, model, g.two_j)


# ---------------------------------------------------------------------------
# sampling


@dataclass(frozen=True)
class SampleEstimate:
    alpha: float
    beta: float
    samples: int
    correlation: float
    stderr: float


def sample_lhv(model, alpha: float, beta: float, shots: int, seed: int = 0, workers: int = 1):
    """All outcome pairs for ``shots`` draws, chunked per the stream contract."""
    parts = rng.run_chunks(lambda n, g: model.sample(alpha, beta, n, g), shots, seed, workers)
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


def empirical_correlation(
    model, alpha: float, beta: float, shots: int, seed: int = 0, workers: int = 1
) -> SampleEstimate:
    a, b = sample_lhv(model, alpha, beta, shots, seed, workers)
    prod = a * b
    mean = float(prod.mean())
    se = float(prod.std(ddof=1) / math.sqrt(shots)) if shots > 1 else float("inf")
    return SampleEstimate(alpha, beta, shots, mean, se)


# ---------------------------------------------------------------------------
# square-wave model


@dataclass(frozen=True)
class SquareWaveModel:
    """Both parties output ``f(angle + lambda)`` for a square wave ``f`` of period ``2pi/n``.

    Its correlation is relational, equals +1 at zero angle difference and -1
    at ``m*pi/n`` for odd ``m``, and is local by construction for every ``n``.
    """

    m: int
    n: int
    two_j: int | None = field(default=None)  # infinite spin: no finite series

    @property
    def theta_minus(self) -> float:
        return self.m * math.pi / self.n

    def response(self, x):
        return np.where(np.floor(np.mod(x, TWO_PI) * self.n / math.pi) % 2 == 0, 1, -1)

    def relational_value(self, theta):
        """Exact correlation at ``alpha - beta = theta`` by piecewise integration."""
        theta = np.asarray(theta, dtype=float)
        out = np.array([self._overlap(float(t)) for t in theta.ravel()]).reshape(theta.shape)
        return out if out.ndim else float(out)

    def _overlap(self, theta: float) -> float:
        # f(theta + l) f(l) is constant between consecutive jumps of either factor
        h = math.pi / self.n
        shift = math.fmod(theta, TWO_PI)
        cuts = np.concatenate([np.arange(2 * self.n) * h, np.mod(np.arange(2 * self.n) * h - shift, TWO_PI)])
        cuts = np.unique(np.concatenate([cuts, [0.0, TWO_PI]]))
        mids = 0.5 * (cuts[:-1] + cuts[1:])
        widths = np.diff(cuts)
        vals = self.response(mids + theta) * self.response(mids)
        return float(np.dot(widths, vals) / TWO_PI)

    def __call__(self, alpha, beta):
        return self.relational_value(np.asarray(alpha, dtype=float) - np.asarray(beta, dtype=float))

    def sample(self, alpha: float, beta: float, shots: int, gen: np.random.Generator):
        lam = gen.uniform(0.0, TWO_PI, size=shots)
        return self.response(alpha + lam), self.response(beta + lam)


def build_squarewave_lhv(m: int, n: int) -> SquareWaveModel:
    if n < 1:
        raise ValueError("n must be a positive integer")
    if m % 2 == 0:
        raise ValueError("m must be odd")
    if m > n or m < 1:
        raise ValueError("need 1 <= m <= n")
    return SquareWaveModel(int(m), int(n))
