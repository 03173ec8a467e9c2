"""Boxes whose inputs are unit vectors in ``R^d`` (SO(d)-boxes) with binary outcomes.

A bipartite evaluator is any object with an integer attribute ``d`` and a
method ``probabilities(x, y)`` returning an array of shape ``(2, 2) + batch``
indexed ``[a_idx, b_idx]`` (index 0 is outcome +1) for batches of unit
vectors ``x, y`` of shape ``batch + (d,)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .jointbox import UndefinedConditionalError
from .tolerances import tol

MIN_D, MAX_D = 2, 16
OUTCOMES = (1, -1)
HAAR_MC_POINTS = 100_000
POSITIVITY_STARTS = 32
ORACLE_POINTS = 100


class DegenerateDirectionsError(ValueError):
    pass


class PremiseError(ValueError):
    pass


def check_dimension(d: int) -> int:
    if not MIN_D <= int(d) <= MAX_D:
        raise ValueError(f"dimension d must lie in [{MIN_D}, {MAX_D}], got {d}")
    return int(d)


def random_directions(gen: np.random.Generator, count: int, d: int) -> np.ndarray:
    v = gen.standard_normal((count, d))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _require_unit(x: np.ndarray, what: str = "x") -> None:
    if np.any(np.abs(np.linalg.norm(x, axis=-1) - 1.0) > 1e-9):
        raise ValueError(f"{what} must be a unit vector")


# ---------------------------------------------------------------------------
# single-party affine boxes


@dataclass(frozen=True, eq=False)
class AffineBox:
    """``P(a|x) = c0[a] + c[a].x`` with rows ordered (+1, -1)."""

    c0: np.ndarray  # shape (2,)
    c: np.ndarray  # shape (2, d)

    def __post_init__(self) -> None:
        c0 = np.asarray(self.c0, dtype=float).reshape(2)
        c = np.asarray(self.c, dtype=float)
        if c.ndim != 2 or c.shape[0] != 2:
            raise ValueError("c must have shape (2, d)")
        check_dimension(c.shape[1])
        if abs(c0.sum() - 1.0) > tol("coeff") or np.abs(c.sum(axis=0)).max() > tol("coeff"):
            raise ValueError("affine box must satisfy sum c0 = 1 and sum c = 0")
        norms = np.linalg.norm(c, axis=1)
        if np.any(c0 < -tol("coeff")) or np.any(norms > np.minimum(c0, 1 - c0) + tol("coeff")):
            raise ValueError("affine box leaves [0, 1]: need |c[a]| <= min(c0[a], 1 - c0[a])")
        object.__setattr__(self, "c0", c0)
        object.__setattr__(self, "c", c)

    @property
    def d(self) -> int:
        return self.c.shape[1]

    @classmethod
    def binary(cls, c0: float, vec) -> "AffineBox":
        vec = np.asarray(vec, dtype=float)
        return cls(np.array([c0, 1 - c0]), np.stack([vec, -vec]))

    def probabilities(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        _require_unit(x)
        return self.c0.reshape((2,) + (1,) * (x.ndim - 1)) + np.moveaxis(x @ self.c.T, -1, 0)


def evaluate_affine(box: AffineBox, a: int, x) -> float:
    return box.probabilities(x)[0 if a == 1 else 1]


# ---------------------------------------------------------------------------
# Haar averages


def sphere_rule(d: int, points: int | None = None, seed: int = 0) -> tuple[np.ndarray, np.ndarray, bool]:
    """Nodes, weights and an ``exact`` flag for averaging over ``S^{d-1}``.

    ``d = 2``: equally spaced circle points (exact for trig degree < points).
    ``d = 3``: Gauss-Legendre in ``cos(polar)`` times equally spaced azimuth.
    ``d > 3``: normalized Gaussian Monte Carlo, each point paired with its
    antipode, so affine functions are still averaged exactly.
    """
    check_dimension(d)
    if d == 2:
        n = points or 64
        t = np.arange(n) * (2 * math.pi / n)
        return np.column_stack([np.cos(t), np.sin(t)]), np.full(n, 1.0 / n), True
    if d == 3:
        n = points or 24
        z, wz = np.polynomial.legendre.leggauss(n)
        phi = np.arange(2 * n) * (math.pi / n)
        zz, pp = np.meshgrid(z, phi, indexing="ij")
        r = np.sqrt(1 - zz**2)
        nodes = np.stack([r * np.cos(pp), r * np.sin(pp), zz], axis=-1).reshape(-1, 3)
        w = np.repeat(wz / 2, 2 * n) / (2 * n)
        return nodes, w, True
    n = (points or HAAR_MC_POINTS) // 2
    half = random_directions(np.random.default_rng(seed), n, d)
    return np.concatenate([half, -half]), np.full(2 * n, 1.0 / (2 * n)), False


def haar_average(fn: Callable[[np.ndarray], np.ndarray], d: int, points: int | None = None, seed: int = 0):
    """``(mean, stderr)`` of ``fn`` over the sphere; ``stderr`` is 0 for the fixed rules."""
    nodes, w, exact = sphere_rule(d, points, seed)
    vals = np.asarray(fn(nodes), dtype=float)
    mean = vals @ w
    if exact:
        return mean, 0.0
    pair = 0.5 * (vals[: len(vals) // 2] + vals[len(vals) // 2 :])
    return mean, float(pair.std(ddof=1) / math.sqrt(len(pair)))


# ---------------------------------------------------------------------------
# affine fitting


@dataclass(frozen=True)
class AffineFit:
    c0: np.ndarray  # (n_outcomes,)
    c: np.ndarray  # (n_outcomes, d)
    residual: float  # max abs residual

    @property
    def transforms_fundamentally(self) -> bool:
        return self.residual <= tol("affine")

    def box(self) -> AffineBox:
        return AffineBox(self.c0, self.c)


def fit_affine(xs, probs) -> AffineFit:
    """Least-squares fit of ``P(a|x) = c0[a] + c[a].x``.

    ``probs`` has one row per direction and one column per outcome (a 1-D
    array is treated as a single outcome).
    """
    xs = np.asarray(xs, dtype=float)
    y = np.asarray(probs, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    k, d = xs.shape
    design = np.column_stack([np.ones(k), xs])
    coef, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    if rank < d + 1:
        raise DegenerateDirectionsError(f"directions span rank {rank}, need {d + 1} in general position")
    resid = float(np.abs(y - design @ coef).max())
    return AffineFit(coef[0], coef[1:].T, resid)


# ---------------------------------------------------------------------------
# conditional structure of bipartite boxes


@dataclass(frozen=True)
class LocalStructure:
    """Affine fits of every probed marginal and conditional box."""

    affine_residual: float
    bias: float  # largest outcome spread of fitted constants
    conditionings: int

    @property
    def transforms_fundamentally_locally(self) -> bool:
        return self.affine_residual <= tol("affine")

    def unbiased(self, tolerance: float | None = None) -> bool:
        return self.bias <= (tol("unbiased") if tolerance is None else tolerance)


def _slices(box, free: np.ndarray, fixed: np.ndarray, party: str) -> np.ndarray:
    """Joint probabilities with ``party``'s input fixed; shape (2, 2, K)."""
    rep = np.broadcast_to(fixed, free.shape)
    return box.probabilities(free, rep) if party == "B" else box.probabilities(rep, free)


def local_structure(box, d: int | None = None, probes: int = 4, samples: int | None = None, seed: int = 0) -> LocalStructure:
    """Fit each single-party box: marginals and conditionals at ``probes`` inputs.

    For the party left free, ``samples`` random directions (default
    ``max(24, 4(d+1))``) are used in the fit.  Raises
    :class:`UndefinedConditionalError` when a conditioning marginal vanishes.
    """
    d = check_dimension(box.d if d is None else d)
    gen = np.random.default_rng(seed)
    k = samples or max(24, 4 * (d + 1))
    worst_res, worst_bias, count = 0.0, 0.0, 0
    for party in ("A", "B"):  # party whose input is fixed
        free = random_directions(gen, k, d)
        for probe in random_directions(gen, probes, d):
            joint = _slices(box, free, probe, party)
            # outcome axis of the free party: joint[free_idx, fixed_idx, k]
            joint = joint if party == "B" else joint.transpose(1, 0, 2)
            marg_free = joint.sum(axis=1).T  # (K, 2): unconditioned free box
            fits = [fit_affine(free, marg_free)]
            for j, b in enumerate(OUTCOMES):
                p_fixed = float(joint[:, j, :].sum(axis=0).mean())
                if p_fixed <= tol("marginal"):
                    raise UndefinedConditionalError(
                        f"marginal of party {party} outcome {b:+d} is {p_fixed:.3g}; conditional box undefined"
                    )
                fits.append(fit_affine(free, joint[:, j, :].T / p_fixed))
            for f in fits:
                worst_res = max(worst_res, f.residual)
                worst_bias = max(worst_bias, float(np.ptp(f.c0)))
                count += 1
    return LocalStructure(worst_res, worst_bias, count)


@dataclass(frozen=True)
class Verdict:
    ok: bool
    value: float


def check_transforms_fundamentally_locally(box, d: int | None = None, seed: int = 0) -> Verdict:
    s = local_structure(box, d, seed=seed)
    return Verdict(s.transforms_fundamentally_locally, s.affine_residual)


def check_locally_unbiased(box, d: int | None = None, tolerance: float | None = None, seed: int = 0) -> Verdict:
    s = local_structure(box, d, seed=seed)
    return Verdict(s.unbiased(tolerance), s.bias)


# ---------------------------------------------------------------------------
# bilinear forms


def _signs(d: int, a: int) -> np.ndarray:
    return np.concatenate([[1.0], np.full(d, float(a))])


def _ext(x: np.ndarray) -> np.ndarray:
    return np.concatenate([np.ones(x.shape[:-1] + (1,)), x], axis=-1)


@dataclass(frozen=True, eq=False)
class OmegaBox:
    """``P(a,b|x,y) = (1, a x)^T Omega (1, b y)``."""

    omega: np.ndarray

    def __post_init__(self) -> None:
        om = np.asarray(self.omega, dtype=float)
        if om.ndim != 2 or om.shape[0] != om.shape[1]:
            raise ValueError("Omega must be square")
        check_dimension(om.shape[0] - 1)
        object.__setattr__(self, "omega", om)

    @property
    def d(self) -> int:
        return self.omega.shape[0] - 1

    def probabilities(self, x, y) -> np.ndarray:
        ex, ey = np.broadcast_arrays(_ext(np.asarray(x, float)), _ext(np.asarray(y, float)))
        out = np.empty((2, 2) + ex.shape[:-1])
        for i, a in enumerate(OUTCOMES):
            for j, b in enumerate(OUTCOMES):
                w = _signs(self.d, a)[:, None] * self.omega * _signs(self.d, b)[None, :]
                out[i, j] = np.einsum("...i,ij,...j->...", ex, w, ey)
        return out


def box_from_omega(omega) -> OmegaBox:
    return OmegaBox(omega)


def probe_basis(d: int) -> tuple[list[tuple[int, np.ndarray]], np.ndarray]:
    """Probe inputs ``(+,e1), (-,e1), (+,e2), ..., (+,ed)`` and the matrix of their ``(1, a x)``."""
    eye = np.eye(d)
    probes = [(1, eye[0]), (-1, eye[0])] + [(1, eye[k]) for k in range(1, d)]
    return probes, np.array([_ext(a * x) for a, x in probes])


def omega_from_box(box, d: int | None = None, check_premises: bool = True, seed: int = 0) -> np.ndarray:
    """Recover ``Omega`` from ``(d+1)^2`` probe evaluations.

    With ``check_premises`` the box must first pass the local affine and
    unbiasedness checks, else :class:`PremiseError` names the failed premise.
    """
    d = check_dimension(box.d if d is None else d)
    if check_premises:
        s = local_structure(box, d, seed=seed)
        if not s.transforms_fundamentally_locally:
            raise PremiseError(f"box does not transform fundamentally locally (residual {s.affine_residual:.3g})")
        if not s.unbiased():
            raise PremiseError(f"box is not locally unbiased (outcome spread {s.bias:.3g})")
    probes, v = probe_basis(d)
    m = np.empty((d + 1, d + 1))
    for i, (a, x) in enumerate(probes):
        for j, (b, y) in enumerate(probes):
            m[i, j] = box.probabilities(x, y)[0 if a == 1 else 1, 0 if b == 1 else 1]
    vinv = np.linalg.inv(v)
    return vinv @ m @ vinv.T


@dataclass(frozen=True)
class LocalBilinearFit:
    """``P(a,b|x,y) = (1,x)^T W[a,b] (1,y)`` fitted to sampled rows."""

    w: np.ndarray  # (2, 2, d+1, d+1)
    residual: float

    @property
    def d(self) -> int:
        return self.w.shape[-1] - 1

    def bias(self) -> float:
        """Outcome spread of Haar-averaged conditionals (zero iff locally unbiased)."""
        alice = np.abs(self.w[0, :, 0, :] - self.w[1, :, 0, :]).max()
        bob = np.abs(self.w[:, 0, :, 0] - self.w[:, 1, :, 0]).max()
        return float(max(alice, bob))

    def omega(self) -> np.ndarray:
        """Average of ``S_a W[a,b] S_b``; exact when the box has the ``Omega`` form."""
        d = self.d
        acc = np.zeros((d + 1, d + 1))
        for i, a in enumerate(OUTCOMES):
            for j, b in enumerate(OUTCOMES):
                acc += _signs(d, a)[:, None] * self.w[i, j] * _signs(d, b)[None, :]
        return acc / 4


def fit_local_bilinear(xs, ys, probs) -> LocalBilinearFit:
    """Fit sampled rows; ``probs`` has shape ``(K, 4)`` in order ``pp, pm, mp, mm``."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    p = np.asarray(probs, dtype=float)
    k, d = xs.shape
    if ys.shape != (k, d) or p.shape != (k, 4):
        raise ValueError("need x and y of shape (K, d) and probabilities of shape (K, 4)")
    design = np.einsum("ki,kj->kij", _ext(xs), _ext(ys)).reshape(k, -1)
    coef, _, rank, _ = np.linalg.lstsq(design, p, rcond=None)
    if rank < (d + 1) ** 2:
        raise DegenerateDirectionsError(f"direction pairs span rank {rank}, need {(d + 1) ** 2}")
    resid = float(np.abs(p - design @ coef).max())
    return LocalBilinearFit(coef.T.reshape(2, 2, d + 1, d + 1), resid)


@dataclass(frozen=True)
class PositivityVerdict:
    unital: bool
    unital_value: float  # u^T Omega u with u = (2, 0, ..., 0)
    positive: bool
    minimum: float
    ray: tuple = field(default=())  # (a, x, b, y) attaining the minimum
    oracle_minimum: float = math.nan

    @property
    def ok(self) -> bool:
        return self.unital and self.positive


def _sphere_min(c: float, v: np.ndarray) -> tuple[float, np.ndarray]:
    norm = float(np.linalg.norm(v))
    if norm == 0.0:
        x = np.zeros_like(v)
        x[0] = 1.0
        return c, x
    return c - norm, -v / norm


def check_unital_positive(omega, starts: int = POSITIVITY_STARTS, seed: int = 0) -> PositivityVerdict:
    """Unitality and minimum of ``(1,x)^T Omega (1,y)`` over pairs of unit vectors.

    Minimization alternates the closed-form minimum over each sphere from
    ``starts`` random points; an independent scan of a 100 x 100 product grid
    of directions is reported as ``oracle_minimum``.  Since ``a x`` ranges
    over the sphere with ``x``, this covers all outcome signs.
    """
    om = np.asarray(omega, dtype=float)
    d = check_dimension(om.shape[0] - 1)
    unital_value = 4.0 * om[0, 0]
    gen = np.random.default_rng(seed)
    best = (math.inf, None, None)
    for y in random_directions(gen, starts, d):
        prev = math.inf
        for _ in range(1000):
            val, x = _sphere_min(om[0, 0] + om[0, 1:] @ y, om[1:, 0] + om[1:, 1:] @ y)
            val, y = _sphere_min(om[0, 0] + x @ om[1:, 0], om[0, 1:] + om[1:, 1:].T @ x)
            if prev - val <= 1e-15:
                break
            prev = val
        if val < best[0]:
            best = (val, x, y)
    grid = _oracle_directions(d, gen)
    g = _ext(grid)
    oracle = float((g @ om @ g.T).min())
    value, x, y = best
    return PositivityVerdict(
        abs(unital_value - 1.0) <= tol("unital"),
        float(unital_value),
        value >= -tol("positive"),
        float(value),
        (1, x, 1, y),
        oracle,
    )


def _oracle_directions(d: int, gen: np.random.Generator) -> np.ndarray:
    if d == 2:
        t = np.arange(ORACLE_POINTS) * (2 * math.pi / ORACLE_POINTS)
        return np.column_stack([np.cos(t), np.sin(t)])
    return random_directions(gen, ORACLE_POINTS, d)


# ---------------------------------------------------------------------------
# specific boxes


def pr_box_table() -> np.ndarray:
    """``P0[a_idx, b_idx, r, t] = 1/2`` when ``a XOR b = r AND t`` (bits: +1 -> 0)."""
    p = np.zeros((2, 2, 2, 2))
    for i in range(2):
        for j in range(2):
            for r in range(2):
                for t in range(2):
                    p[i, j, r, t] = 0.5 if (i ^ j) == (r & t) else 0.0
    return p


def deterministic_table(a_of_r: Sequence[int], b_of_t: Sequence[int]) -> np.ndarray:
    """Local deterministic table with outputs ``a_of_r[r]``, ``b_of_t[t]`` (each +-1)."""
    p = np.zeros((2, 2, 2, 2))
    for r in range(2):
        for t in range(2):
            p[0 if a_of_r[r] == 1 else 1, 0 if b_of_t[t] == 1 else 1, r, t] = 1.0
    return p


def check_table(p0) -> np.ndarray:
    p = np.asarray(p0, dtype=float)
    if p.shape != (2, 2, 2, 2):
        raise ValueError("base table must have shape (2, 2, 2, 2) = [a, b, r, t]")
    if p.min() < -tol("nonneg"):
        raise ValueError("base table has negative entries")
    if np.abs(p.sum(axis=(0, 1)) - 1).max() > tol("coeff"):
        raise ValueError("base table is not normalized for every (r, t)")
    pa = p.sum(axis=1)  # [a, r, t]
    pb = p.sum(axis=0)  # [b, r, t]
    if np.abs(pa[:, :, 0] - pa[:, :, 1]).max() > tol("coeff") or np.abs(pb[:, 0, :] - pb[:, 1, :]).max() > tol("coeff"):
        raise ValueError("base table signals")
    return p


@dataclass(frozen=True, eq=False)
class TableEmbedding:
    """Interpolates a (2,2,2) table: input ``r`` is chosen with weight ``(1 +- x_1)/2``."""

    table: np.ndarray
    d: int

    def probabilities(self, x, y) -> np.ndarray:
        x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
        la = np.stack([0.5 * (1 + x[..., 0]), 0.5 * (1 - x[..., 0])])
        lb = np.stack([0.5 * (1 + y[..., 0]), 0.5 * (1 - y[..., 0])])
        return np.einsum("abrt,r...,t...->ab...", self.table, la, lb)

    def axis_inputs(self) -> tuple[np.ndarray, np.ndarray]:
        """Directions reproducing setting 0 and setting 1: ``+e1`` and ``-e1``."""
        e = np.zeros(self.d)
        e[0] = 1.0
        return e, -e


def pr_box_embedding(p0=None, d: int = 3) -> TableEmbedding:
    return TableEmbedding(check_table(pr_box_table() if p0 is None else p0), check_dimension(d))


@dataclass(frozen=True, eq=False)
class ProductBox:
    alice: AffineBox
    bob: AffineBox

    def __post_init__(self) -> None:
        if self.alice.d != self.bob.d:
            raise ValueError("both parties need the same dimension")

    @property
    def d(self) -> int:
        return self.alice.d

    def probabilities(self, x, y) -> np.ndarray:
        pa = self.alice.probabilities(x)
        pb = self.bob.probabilities(y)
        return pa[:, None] * pb[None, :]


@dataclass(frozen=True, eq=False)
class MixtureBox:
    boxes: tuple
    weights: np.ndarray

    @property
    def d(self) -> int:
        return self.boxes[0].d

    def probabilities(self, x, y) -> np.ndarray:
        return sum(w * b.probabilities(x, y) for w, b in zip(self.weights, self.boxes))


def convex_mix(boxes: Sequence, weights: Sequence[float]) -> MixtureBox:
    w = np.asarray(weights, dtype=float)
    if len(boxes) == 0 or w.shape != (len(boxes),):
        raise ValueError("need one weight per box")
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
        raise ValueError("weights must be non-negative and sum to 1")
    if len({b.d for b in boxes}) != 1:
        raise ValueError("all boxes need the same dimension")
    return MixtureBox(tuple(boxes), w)


def box_correlation(box, x, y):
    """``sum_ab ab P(a,b|x,y)``."""
    p = box.probabilities(x, y)
    return p[0, 0] - p[0, 1] - p[1, 0] + p[1, 1]


def signalling_residual(box, d: int | None = None, pairs: int = 100, seed: int = 0) -> float:
    """Largest change of a party's marginal when only the other party's input changes."""
    d = check_dimension(box.d if d is None else d)
    gen = np.random.default_rng(seed)
    x, y1, y2 = (random_directions(gen, pairs, d) for _ in range(3))
    pa1 = box.probabilities(x, y1).sum(axis=1)
    pa2 = box.probabilities(x, y2).sum(axis=1)
    pb1 = box.probabilities(y1, x).sum(axis=0)
    pb2 = box.probabilities(y2, x).sum(axis=0)
    return float(max(np.abs(pa1 - pa2).max(), np.abs(pb1 - pb2).max()))
