"""CHSH and chained (Braunstein-Caves) Bell inequalities, and the two-angle witness.

Angles enter correlations as ``C(alpha, beta)``; relational functions depend
on ``theta = alpha - beta``.  Chained settings are laid out so that the three
angle differences that matter are ``a_1 - b_2 = Theta_+ + delta``,
``a_3 - b_2 = Theta_+ - delta`` and ``a_1 - b_N = Theta_-`` (mod 2 pi).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from . import corrfn, rng
from .corrfn import CorrelationFunction

TWO_PI = 2.0 * math.pi
CHSH_GRID = 24
DEFAULT_CAP = 10_000
DEFAULT_SIGMAS = 4.0
OFFSET_GRID = 720


def _as_callable(C) -> Callable:
    return C if callable(C) else (lambda a, b: corrfn.evaluate(C, a, b))


# ---------------------------------------------------------------------------
# CHSH


def chsh_value(C, a1: float, b2: float, a3: float, b4: float) -> float:
    """``C(a1,b2) + C(a3,b2) + C(a3,b4) - C(a1,b4)``."""
    f = _as_callable(C)
    return float(f(a1, b2) + f(a3, b2) + f(a3, b4) - f(a1, b4))


@dataclass(frozen=True)
class ChshOptimum:
    value: float
    angles: tuple[float, float, float, float]  # (a1, b2, a3, b4)


def maximize_chsh(C, grid: int = CHSH_GRID) -> ChshOptimum:
    """Largest ``|S|`` over angle quadruples: grid scan, then local polish.

    The reported ``value`` keeps its sign, so a negative value means the
    mirrored inequality is the one that is violated.
    """
    f = _as_callable(C)
    pts = np.arange(grid) * (TWO_PI / grid)
    G = np.asarray(f(pts[:, None], pts[None, :]), dtype=float)
    # S[i1, j2, i3, j4]
    S = G[:, :, None, None] + G.T[None, :, :, None] + G[None, None, :, :] - G[:, None, None, :]
    best = None
    for sign in (1.0, -1.0):
        flat = np.argsort(sign * S, axis=None)[-4:]
        for idx in flat:
            x0 = pts[list(np.unravel_index(idx, S.shape))]
            res = minimize(
                lambda x: -sign * chsh_value(f, *x),
                x0,
                method="Nelder-Mead",
                options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 4000},
            )
            val = -res.fun * sign
            if best is None or abs(val) > abs(best.value):
                best = ChshOptimum(float(val), tuple(float(v) for v in np.mod(res.x, TWO_PI)))
    return best


# ---------------------------------------------------------------------------
# chained inequalities


@dataclass(frozen=True)
class ChainedSetting:
    n_settings: int
    theta_plus: float
    theta_minus: float
    delta_n: float
    alice_angles: tuple[float, ...]  # a_1, a_3, ..., a_{N-1}
    bob_angles: tuple[float, ...]  # b_2, b_4, ..., b_N

    @classmethod
    def build(cls, n_settings: int, theta_plus: float, theta_minus: float) -> "ChainedSetting":
        n = int(n_settings)
        if n < 4 or n % 2:
            raise ValueError(f"chained inequality needs an even number of settings >= 4, got {n_settings}")
        span = (theta_minus - theta_plus) % TWO_PI
        delta = span / (n - 1)
        alice = tuple(-(i - 1) * delta for i in range(1, n, 2))
        bob = tuple(-theta_plus - (i - 1) * delta for i in range(2, n + 1, 2))
        return cls(n, float(theta_plus), float(theta_minus), delta, alice, bob)

    def pairs(self) -> list[tuple[float, float, int]]:
        """``(alpha, beta, sign)`` for each term of the chain."""
        a, b = self.alice_angles, self.bob_angles
        out = []
        for k in range(len(a)):
            out.append((a[k], b[k], 1))
            if k + 1 < len(a):
                out.append((a[k + 1], b[k], 1))
        out.append((a[0], b[-1], -1))
        return out

    def angles_json(self) -> dict:
        return {
            "theta_plus": self.theta_plus,
            "theta_minus": self.theta_minus,
            "delta": self.delta_n,
            "alice": list(self.alice_angles),
            "bob": list(self.bob_angles),
        }


@dataclass(frozen=True)
class WitnessReport:
    lhs: float
    classical_bound: float
    violated: bool
    n_settings: int
    margin: float = 0.0
    angles: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "n": self.n_settings,
            "lhs": self.lhs,
            "bound": self.classical_bound,
            "violated": self.violated,
            "margin": self.margin,
            "angles": self.angles,
        }


def _report(lhs: float, n: int, margin: float = 0.0, angles: dict | None = None) -> WitnessReport:
    bound = float(n - 2)
    return WitnessReport(float(lhs), bound, bool(lhs > bound + margin), n, margin, angles or {})


def bci_value(C, setting: ChainedSetting, offset: float = 0.0) -> WitnessReport:
    """Chained-inequality left side, all terms evaluated directly.

    ``offset`` shifts every angle of both parties by the same amount.
    """
    f = _as_callable(C)
    pairs = setting.pairs()
    alpha = np.array([p[0] for p in pairs]) + offset
    beta = np.array([p[1] for p in pairs]) + offset
    sign = np.array([p[2] for p in pairs], dtype=float)
    lhs = float(np.dot(sign, np.asarray(f(alpha, beta), dtype=float)))
    return _report(lhs, setting.n_settings, angles=setting.angles_json())


def relational_lhs(r: Callable, theta_plus: float, theta_minus: float, n_settings) -> np.ndarray:
    """Closed form of the chain for a relational ``r(theta)``, vectorized over ``N``."""
    n = np.asarray(n_settings, dtype=float)
    delta = ((theta_minus - theta_plus) % TWO_PI) / (n - 1)
    return (n / 2) * r(theta_plus + delta) + (n / 2 - 1) * r(theta_plus - delta) - r(theta_minus)


# ---------------------------------------------------------------------------
# the spin-dependent thresholds


def k_j(two_j: int) -> float:
    """``sqrt(2) pi^2 J(2J+1)(4J+1)/3`` for spin ``two_j/2``."""
    if two_j < 1:
        raise ValueError("spin must be at least 1/2")
    return math.pi**2 * corrfn.second_derivative_bound(two_j)


def epsilon_j(two_j: int, delta: float) -> float:
    """Purity threshold ``-K + sqrt(K^2 + Delta^2/4)`` (cancellation-free form)."""
    if not 0.0 < delta <= 2.0:
        raise ValueError("Delta must lie in (0, 2]")
    k = k_j(two_j)
    q = delta * delta / 4.0
    return q / (k + math.sqrt(k * k + q))


def epsilon_j_asymptotic(two_j: int, delta: float) -> float:
    return delta * delta / (8.0 * k_j(two_j))


def n_window(eps: float, delta: float, curvature: float, span: float) -> tuple[float, float] | None:
    """Open interval of ``N`` where ``eps (N-1)^2 - Delta (N-1) + (K/2) span^2 < 0``.

    ``curvature`` bounds ``|r''|``.  Returns ``None`` when the quadratic has no
    negative part.
    """
    c = 0.5 * curvature * span * span
    if eps <= 0.0:
        if delta <= 0.0:
            return None
        return (1.0 + c / delta, math.inf)
    disc = delta * delta - 4.0 * eps * c
    if disc <= 0.0:
        return None
    root = math.sqrt(disc)
    return (1.0 + (delta - root) / (2 * eps), 1.0 + (delta + root) / (2 * eps))


# ---------------------------------------------------------------------------
# the witness


@dataclass(frozen=True)
class WitnessResult:
    report: WitnessReport
    setting: ChainedSetting | None
    status: str  # "violation" | "no-violation-within-cap"
    epsilon: float
    delta: float
    epsilon_bound: float
    guaranteed: bool
    window: tuple[float, float] | None
    offset: float | None = None  # shared shift lifting the violation to the original C

    def to_json(self) -> dict:
        out = self.report.to_json()
        out.update(
            status=self.status,
            epsilon=self.epsilon,
            Delta=self.delta,
            epsilon_bound=self.epsilon_bound,
            guaranteed=self.guaranteed,
            window=None if self.window is None else list(self.window),
            offset=self.offset,
        )
        return out


def _search_order(window, cap: int, eps: float) -> np.ndarray:
    ns = np.arange(4, cap + 1, 2)
    if window is None or eps <= 0.0:
        return ns
    inside = (ns > window[0]) & (ns < window[1])
    return np.concatenate([ns[inside], ns[~inside]])


def theorem_2b_witness(
    C: CorrelationFunction,
    theta_plus: float,
    theta_minus: float,
    cap: int = DEFAULT_CAP,
    relocate: bool = True,
    lift: bool = True,
) -> WitnessResult:
    """Search chained inequalities violated by the relational core of ``C``.

    Settings built on the supplied ``Theta_+`` are tried first; with
    ``relocate`` the global maximum of the core is tried next, which is the
    choice under which ``epsilon < epsilon_J(Delta)`` guarantees success.
    With ``lift`` and a non-relational ``C``, a common angle shift is chosen
    so that ``C`` itself violates the inequality found for its core.
    """
    core = corrfn.relational_core(C)
    r = core.relational_value
    eps = 1.0 - float(r(theta_plus))
    delta = 1.0 - float(r(theta_minus))
    two_j = max(core.two_j, 1)
    curvature = corrfn.second_derivative_bound(two_j)
    bound = epsilon_j(two_j, delta) if 0.0 < delta <= 2.0 else 0.0
    guaranteed = 0.0 < delta <= 2.0 and eps < bound
    window = n_window(eps, delta, curvature, (theta_minus - theta_plus) % TWO_PI)

    starts = [float(theta_plus)]
    if relocate and core.n_terms:
        top, alpha, beta = corrfn.extremum(core, 1.0)
        peak = (alpha - beta) % TWO_PI
        if top + core.constant > r(theta_plus) + 1e-12:
            starts.append(peak)

    best: tuple[float, int, float] | None = None
    for start in starts:
        order = _search_order(window, cap, eps)
        lhs = relational_lhs(r, start, theta_minus, order)
        excess = lhs - (order - 2)
        hits = np.nonzero(excess > 1e-12)[0]
        if hits.size:
            k = int(hits[0])
            best = (float(excess[k]), int(order[k]), start)
            break
        k = int(np.argmax(excess))
        if best is None or excess[k] > best[0]:
            best = (float(excess[k]), int(order[k]), start)

    _, n, start = best
    setting = ChainedSetting.build(n, start, theta_minus)
    report = bci_value(core, setting)
    offset = None
    if report.violated and lift and not C.is_relational():
        offset, lifted = _best_offset(C, setting)
        report = lifted
    status = "violation" if report.violated else "no-violation-within-cap"
    return WitnessResult(report, setting, status, eps, delta, bound, guaranteed, window, offset)


def _best_offset(C: CorrelationFunction, setting: ChainedSetting) -> tuple[float, WitnessReport]:
    # The core's chain value is the average over shifts of C's chain value,
    # so some shift does at least as well; find the best one.
    grid = np.arange(OFFSET_GRID) * (TWO_PI / OFFSET_GRID)
    pairs = setting.pairs()
    a = np.array([p[0] for p in pairs])
    b = np.array([p[1] for p in pairs])
    s = np.array([p[2] for p in pairs], dtype=float)
    vals = np.asarray(corrfn.evaluate(C, a[None, :] + grid[:, None], b[None, :] + grid[:, None])) @ s
    k = int(np.argmax(vals))
    step = TWO_PI / OFFSET_GRID
    res = minimize_scalar(
        lambda t: -bci_value(C, setting, t).lhs,
        bounds=(grid[k] - step, grid[k] + step),
        method="bounded",
        options={"xatol": 1e-12},
    )
    t = float(res.x) if -res.fun >= vals[k] else float(grid[k])
    report = bci_value(C, setting, t)
    angles = dict(report.angles, offset=t)
    return t % TWO_PI, WitnessReport(report.lhs, report.classical_bound, report.violated, report.n_settings, 0.0, angles)


# ---------------------------------------------------------------------------
# two-angle protocol


@dataclass(frozen=True)
class ProtocolResult:
    r_plus: float
    se_plus: float
    shots_plus: int
    r_minus: float
    se_minus: float
    shots_minus: int
    epsilon_hat: float  # conservative: 1 - r_plus + k*se_plus
    delta_hat: float  # conservative: 1 - r_minus - k*se_minus
    epsilon_bound: float  # epsilon_hat below this guarantees witnessed
    witnessed: bool
    report: WitnessReport

    def to_json(self) -> dict:
        out = {
            "r_plus": self.r_plus,
            "se_plus": self.se_plus,
            "shots_plus": self.shots_plus,
            "r_minus": self.r_minus,
            "se_minus": self.se_minus,
            "shots_minus": self.shots_minus,
            "epsilon_hat": self.epsilon_hat,
            "Delta_hat": self.delta_hat,
            "epsilon_bound": self.epsilon_bound,
            "witnessed": self.witnessed,
        }
        out["report"] = self.report.to_json()
        return out


def _protocol_chunk(box, theta_plus, theta_minus, flip_b):
    def job(n: int, gen: np.random.Generator):
        lam = gen.uniform(0.0, TWO_PI, size=n)
        pick_plus = gen.uniform(size=n) < 0.5
        u = gen.uniform(size=n)
        alpha = np.where(pick_plus, theta_plus, theta_minus) + lam
        probs = np.asarray(box.probabilities(alpha, lam)).reshape(4, n)
        # outcome pairs in order ++, +-, -+, --
        cum = np.cumsum(probs, axis=0)
        idx = np.minimum((u[None, :] >= cum).sum(axis=0), 3)
        prod = np.array([1, -1, -1, 1])[idx]
        if flip_b:
            prod = -prod
        return (
            int(pick_plus.sum()), float(prod[pick_plus].sum()), float((prod[pick_plus] ** 2).sum()),
            int((~pick_plus).sum()), float(prod[~pick_plus].sum()),
        )

    return job


def _mean_se(total: float, count: int) -> tuple[float, float]:
    if count == 0:
        return float("nan"), float("inf")
    mean = total / count
    if count == 1:
        return mean, float("inf")
    # products are +-1, so the sample variance is (1 - mean^2) n/(n-1)
    var = max(1.0 - mean * mean, 0.0) * count / (count - 1)
    return mean, math.sqrt(var / count)


def protocol_verdict(
    r_plus: float, se_plus: float, r_minus: float, se_minus: float, two_j: int, sigmas: float = DEFAULT_SIGMAS
) -> tuple[float, float, float, bool, WitnessReport]:
    """Certified verdict from estimates of the relational core at ``Theta_+-``.

    Uses the worst-case angular span ``2 pi`` and reports the guaranteed
    lower bound on the chain value at the best ``N``; ``margin`` is the shift
    of that bound produced by ``sigmas`` standard errors.
    """
    eps_hat = max(1.0 - r_plus + sigmas * se_plus, 0.0)
    delta_hat = 1.0 - r_minus - sigmas * se_minus
    if not 0.0 < delta_hat <= 2.0:
        return eps_hat, delta_hat, 0.0, False, _report(-math.inf, 4, math.inf)
    bound = epsilon_j(two_j, delta_hat)
    k = k_j(two_j)
    ns = np.arange(4, DEFAULT_CAP + 1, 2, dtype=float)

    def lower(eps, dlt):
        return (ns - 1) * (1.0 - eps) - 2.0 * k / (ns - 1) - (1.0 - dlt)

    cons = lower(eps_hat, delta_hat) - (ns - 2)
    hits = np.nonzero(cons > 0.0)[0]
    i = int(hits[0]) if hits.size else int(np.argmax(cons))
    n = int(ns[i])
    point = float(lower(1.0 - r_plus, 1.0 - r_minus)[i])
    margin = sigmas * ((n - 1) * se_plus + se_minus)
    report = _report(point, n, margin)
    return eps_hat, delta_hat, bound, report.violated, report


def simulate_witness_protocol(
    box,
    theta_plus: float,
    theta_minus: float,
    shots: int,
    two_j: int,
    seed: int = 0,
    workers: int = 1,
    flip_b: bool = False,
    sigmas: float = DEFAULT_SIGMAS,
) -> ProtocolResult:
    """Run the shared-random-angle protocol against any ``box.probabilities`` source.

    Each shot draws ``lambda`` uniformly, gives Bob ``lambda`` and Alice
    ``Theta + lambda`` with ``Theta`` chosen uniformly from ``{Theta_+, Theta_-}``.
    ``flip_b`` relabels Bob's outcomes, turning anti-correlation into correlation.
    """
    if shots < 1:
        raise ValueError("shots must be >= 1")
    parts = rng.run_chunks(_protocol_chunk(box, theta_plus, theta_minus, flip_b), shots, seed, workers)
    n_p = sum(p[0] for p in parts)
    n_m = sum(p[3] for p in parts)
    r_p, se_p = _mean_se(sum(p[1] for p in parts), n_p)
    r_m, se_m = _mean_se(sum(p[4] for p in parts), n_m)
    eps_hat, delta_hat, bound, witnessed, report = protocol_verdict(r_p, se_p, r_m, se_m, two_j, sigmas)
    report = replace(report, angles=ChainedSetting.build(report.n_settings, theta_plus, theta_minus).angles_json())
    return ProtocolResult(r_p, se_p, n_p, r_m, se_m, n_m, eps_hat, delta_hat, bound, witnessed, report)
