"""Quantum reference behaviours.

Two qubits measured with polarizers give spin-1 boxes on SO(2) x SO(2); the
same states measured with Bloch-vector POVMs give SO(d) boxes.  A finite-level
oscillator gives a single-party box on the time-translation group.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import expm

from .corrfn import CorrelationFunction
from .jointbox import JointBox
from .tolerances import tol

I2 = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = (SX, SY, SZ)

# polarizer spin: spin-1 in the angle (frequencies up to 2)
POLARIZER_TWO_J = 2


def _check_density(rho: np.ndarray, what: str = "rho") -> None:
    if not np.allclose(rho, rho.conj().T, atol=tol("hermitian"), rtol=0):
        raise ValueError(f"{what} is not Hermitian")
    tr = np.trace(rho).real
    if abs(tr - 1.0) > tol("hermitian"):
        raise ValueError(f"{what} has trace {tr:.15g}, expected 1")
    low = np.linalg.eigvalsh(rho).min()
    if low < -tol("psd"):
        raise ValueError(f"{what} has negative eigenvalue {low:.3g}")


@dataclass(frozen=True, eq=False)
class TwoQubitState:
    rho: np.ndarray

    def __post_init__(self) -> None:
        rho = np.array(self.rho, dtype=complex)
        if rho.shape != (4, 4):
            raise ValueError(f"rho must be 4x4, got {rho.shape}")
        _check_density(rho)
        rho.setflags(write=False)
        object.__setattr__(self, "rho", rho)

    def expectation(self, op: np.ndarray) -> float:
        return float(np.trace(self.rho @ op).real)

    def bloch(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Local Bloch vectors and correlation matrix ``T_ij = <s_i x s_j>``."""
        a = np.array([self.expectation(np.kron(s, I2)) for s in PAULI])
        b = np.array([self.expectation(np.kron(I2, s)) for s in PAULI])
        t = np.array([[self.expectation(np.kron(s, r)) for r in PAULI] for s in PAULI])
        return a, b, t

    def to_json(self) -> dict:
        return {"re": self.rho.real.tolist(), "im": self.rho.imag.tolist()}

    @classmethod
    def from_json(cls, data) -> "TwoQubitState":
        for key in ("re", "im"):
            if key not in data:
                raise ValueError(f"state JSON is missing field '{key}'")
        return cls(np.asarray(data["re"], dtype=float) + 1j * np.asarray(data["im"], dtype=float))


SINGLET = np.array([0, 1, -1, 0], dtype=complex) / math.sqrt(2)


def werner_state(p: float) -> TwoQubitState:
    """``p |psi-><psi-| + (1-p) I/4``."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"Werner weight p must lie in [0, 1], got {p}")
    return TwoQubitState(p * np.outer(SINGLET, SINGLET.conj()) + (1 - p) * np.eye(4) / 4)


def random_pure_state(gen: np.random.Generator) -> TwoQubitState:
    """Eight standard normals, read as four complex amplitudes, normalized."""
    v = gen.standard_normal(8)
    psi = v[:4] + 1j * v[4:]
    psi /= np.linalg.norm(psi)
    return TwoQubitState(np.outer(psi, psi.conj()))


def random_mixed_state(gen: np.random.Generator) -> TwoQubitState:
    """Hilbert-Schmidt random state ``G G^dag / tr`` from a complex Ginibre ``G``."""
    g = gen.standard_normal((4, 4)) + 1j * gen.standard_normal((4, 4))
    rho = g @ g.conj().T
    rho = 0.5 * (rho + rho.conj().T) / np.trace(rho).real
    return TwoQubitState(rho)


# ---------------------------------------------------------------------------
# polarizer measurements


def polarizer_observable(theta: float) -> np.ndarray:
    c, s = math.cos(2 * theta), math.sin(2 * theta)
    return np.array([[c, s], [s, -c]], dtype=complex)


def _polarizer_axes(theta) -> np.ndarray:
    # M_theta = cos(2 theta) Z + sin(2 theta) X, embedded in (X, Y, Z)
    t = np.asarray(theta, dtype=float)
    return np.stack([np.sin(2 * t), np.zeros_like(t), np.cos(2 * t)], axis=-1)


def quantum_correlation(state: TwoQubitState, theta_a, theta_b):
    """``tr[rho (M_a x M_b)]``, vectorized over broadcastable angles."""
    _, _, t = state.bloch()
    u, v = np.broadcast_arrays(_polarizer_axes(theta_a), _polarizer_axes(theta_b))
    out = np.einsum("...i,ij,...j->...", u, t, v)
    return out if out.ndim else float(out)


@dataclass(frozen=True, eq=False)
class QuantumBox:
    """``P(a,b|alpha,beta) = tr[rho (E_a(alpha) x E_b(beta))]``, ``E_+- = (I +- M)/2``."""

    state: TwoQubitState

    def probabilities(self, alpha, beta) -> np.ndarray:
        sa, sb, t = self.state.bloch()
        u, v = np.broadcast_arrays(_polarizer_axes(alpha), _polarizer_axes(beta))
        ea, eb = u @ sa, v @ sb
        corr = np.einsum("...i,ij,...j->...", u, t, v)
        out = np.empty((2, 2) + corr.shape)
        for i, a in enumerate((1, -1)):
            for j, b in enumerate((1, -1)):
                out[i, j] = 0.25 * (1 + a * ea + b * eb + a * b * corr)
        return out

    def correlation(self, alpha, beta):
        return quantum_correlation(self.state, alpha, beta)

    def correlation_function(self) -> CorrelationFunction:
        """Exact spin-1 series of the correlation."""
        _, _, t = self.state.bloch()
        return _bilinear_series(t[np.ix_([2, 0], [2, 0])])

    def joint_box(self) -> JointBox:
        """Exact series for each of the four outcome probabilities."""
        sa, sb, t = self.state.bloch()
        ta = _linear_series(sa[[2, 0]], alice=True)
        tb = _linear_series(sb[[2, 0]], alice=False)
        tc = _bilinear_series(t[np.ix_([2, 0], [2, 0])])
        blocks = {}
        for key, a, b in (("pp", 1, 1), ("pm", 1, -1), ("mp", -1, 1), ("mm", -1, -1)):
            blocks[key] = (ta.scaled(a) + tb.scaled(b) + tc.scaled(a * b)).scaled(0.25, 0.25)
        return JointBox(blocks)


def quantum_box(state: TwoQubitState) -> QuantumBox:
    return QuantumBox(state)


def _linear_series(vec: np.ndarray, alice: bool) -> CorrelationFunction:
    # vec = (z, x) weights of cos 2t and sin 2t
    # (0, -2) reads cos(2 beta), sin(2 beta) directly; from_terms canonicalizes
    pair = (2, 0) if alice else (0, -2)
    return CorrelationFunction.from_terms(POLARIZER_TWO_J, [(*pair, vec[0], vec[1])]).pruned(tol("coeff"))


def _bilinear_series(t: np.ndarray) -> CorrelationFunction:
    # t rows/cols in (cos 2t, sin 2t) order; expand products with sum/difference angles
    (zz, zx), (xz, xx) = t
    terms = [
        (2, 2, 0.5 * (zz + xx), 0.5 * (xz - zx)),
        (2, -2, 0.5 * (zz - xx), 0.5 * (xz + zx)),
    ]
    # drop rounding residue, e.g. zz - xx for isotropic states
    return CorrelationFunction.from_terms(POLARIZER_TWO_J, terms).pruned(tol("coeff"))


# ---------------------------------------------------------------------------
# Bloch-vector POVMs on SO(d)


def bloch_embedding(v) -> np.ndarray:
    """First three components of ``v``; zero-padded when ``d = 2``."""
    v = np.asarray(v, dtype=float)
    d = v.shape[-1]
    if d < 2:
        raise ValueError("dimension must be at least 2")
    if d >= 3:
        return v[..., :3]
    return np.concatenate([v, np.zeros(v.shape[:-1] + (1,))], axis=-1)


def _check_unit(v: np.ndarray, what: str = "direction") -> None:
    norms = np.linalg.norm(v, axis=-1)
    if np.any(np.abs(norms - 1.0) > 1e-9):
        raise ValueError(f"{what} must be a unit vector (norm {np.max(np.abs(norms - 1)) + 1:.12g})")


def bloch_povm(a: int, direction) -> np.ndarray:
    """Effect ``(I + a P(v).sigma)/2`` for outcome ``a`` at unit direction ``v``."""
    if a not in (1, -1):
        raise ValueError("outcome must be +1 or -1")
    v = np.asarray(direction, dtype=float)
    _check_unit(v)
    r = bloch_embedding(v)
    return 0.5 * (I2 + a * sum(c * s for c, s in zip(r, PAULI)))


@dataclass(frozen=True, eq=False)
class BlochBox:
    """Two qubits measured with :func:`bloch_povm` effects on unit ``d``-vectors."""

    state: TwoQubitState
    d: int

    def probabilities(self, x, y) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        _check_unit(x, "x")
        _check_unit(y, "y")
        sa, sb, t = self.state.bloch()
        px, py = bloch_embedding(x), bloch_embedding(y)
        px, py = np.broadcast_arrays(px, py)
        ea, eb = px @ sa, py @ sb
        corr = np.einsum("...i,ij,...j->...", px, t, py)
        out = np.empty((2, 2) + corr.shape)
        for i, a in enumerate((1, -1)):
            for j, b in enumerate((1, -1)):
                out[i, j] = 0.25 * (1 + a * ea + b * eb + a * b * corr)
        return out

    def omega(self) -> np.ndarray:
        """Analytic bilinear form: ``P = (1, a x)^T Omega (1, b y)``."""
        sa, sb, t = self.state.bloch()
        proj = np.zeros((3, self.d))
        for i in range(min(3, self.d)):
            proj[i, i] = 1.0
        om = np.zeros((self.d + 1, self.d + 1))
        om[0, 0] = 0.25
        om[0, 1:] = 0.25 * sb @ proj
        om[1:, 0] = 0.25 * proj.T @ sa
        om[1:, 1:] = 0.25 * proj.T @ t @ proj
        return om


# ---------------------------------------------------------------------------
# oscillator


@dataclass(frozen=True, eq=False)
class OscillatorSpec:
    """Finite-level state of ``H = omega * n`` (hbar = 1) and a measurement.

    ``levels`` are the occupied energy indices ``n``; ``state`` is either an
    amplitude vector or a density matrix over those levels; ``effects`` are
    Hermitian matrices over the same levels summing to the identity.
    """

    levels: tuple[int, ...]
    state: np.ndarray
    omega: float
    effects: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        levels = tuple(int(n) for n in self.levels)
        if len(set(levels)) != len(levels) or any(n < 0 for n in levels):
            raise ValueError("levels must be distinct non-negative integers")
        k = len(levels)
        st = np.asarray(self.state, dtype=complex)
        rho = np.outer(st, st.conj()) / np.vdot(st, st).real if st.ndim == 1 else st
        if rho.shape != (k, k):
            raise ValueError(f"state must have dimension {k} to match levels")
        _check_density(rho, "state")
        effects = tuple(np.asarray(e, dtype=complex) for e in self.effects)
        if not effects or any(e.shape != (k, k) for e in effects):
            raise ValueError(f"effects must be {k}x{k} matrices")
        if not np.allclose(sum(effects), np.eye(k), atol=tol("hermitian")):
            raise ValueError("effects do not sum to the identity")
        for i, e in enumerate(effects):
            if not np.allclose(e, e.conj().T, atol=tol("hermitian")) or np.linalg.eigvalsh(e).min() < -tol("psd"):
                raise ValueError(f"effects[{i}] is not a positive semidefinite Hermitian matrix")
        if not self.omega > 0:
            raise ValueError("omega must be positive")
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "state", rho)
        object.__setattr__(self, "effects", effects)

    @property
    def energies(self) -> np.ndarray:
        return self.omega * np.array(self.levels, dtype=float)

    def energy_differences(self) -> set[int]:
        """Positive level differences ``n_k - n_l``, in units of ``omega``."""
        return {abs(p - q) for p in self.levels for q in self.levels if p != q}


def oscillator_box(spec: OscillatorSpec, t) -> np.ndarray:
    """``P(a|t) = tr[M_a U rho U^dag]`` with ``U = exp(-iHt)``; shape ``(n_effects,) + t.shape``."""
    t = np.asarray(t, dtype=float)
    h = np.diag(spec.energies).astype(complex)
    out = np.empty((len(spec.effects),) + t.shape)
    for idx in np.ndindex(t.shape):
        u = expm(-1j * h * t[idx])
        rho_t = u @ spec.state @ u.conj().T
        for a, m in enumerate(spec.effects):
            out[(a,) + idx] = np.trace(m @ rho_t).real
    return out


def oscillator_series(spec: OscillatorSpec, outcome: int = 0) -> CorrelationFunction:
    """Exact series of ``P(outcome|t)`` in the angle ``omega*t``.

    Stored as a two-angle series with only ``(k, 0)`` pairs, so that
    ``f(omega*t, 0)`` gives the probability; ``k`` runs over level differences.
    """
    rho = spec.state
    m = spec.effects[outcome]
    lv = spec.levels
    const = 0.0
    acc: dict[int, complex] = {}
    for k in range(len(lv)):
        for l in range(len(lv)):
            z = rho[k, l] * m[l, k]
            d = lv[k] - lv[l]
            if d == 0:
                const += z.real
            elif d > 0:
                acc[d] = acc.get(d, 0) + z
    two_j = max(acc, default=0)
    terms = [(d, 0, 2 * z.real, 2 * z.imag) for d, z in acc.items()]
    return CorrelationFunction.from_terms(two_j, terms, const)


@dataclass(frozen=True)
class HarmonicFit:
    constant: float
    coefficients: dict[int, tuple[float, float]]  # k -> (cos, sin) of k*omega*t
    residual_rms: float

    def frequencies(self, omega: float, atol: float = 1e-9) -> list[float]:
        return [k * omega for k, (c, s) in sorted(self.coefficients.items()) if math.hypot(c, s) > atol]


def fit_harmonics(times: Sequence[float], values: Sequence[float], omega: float, max_k: int) -> HarmonicFit:
    """Least-squares fit of ``c0 + sum_k c_k cos(k w t) + s_k sin(k w t)``, ``k <= max_k``."""
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    cols = [np.ones_like(t)]
    for k in range(1, max_k + 1):
        cols.extend((np.cos(k * omega * t), np.sin(k * omega * t)))
    design = np.column_stack(cols)
    coef, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    if rank < design.shape[1]:
        raise ValueError(f"time samples have rank {rank}, need {design.shape[1]}")
    resid = y - design @ coef
    coeffs = {k: (float(coef[2 * k - 1]), float(coef[2 * k])) for k in range(1, max_k + 1)}
    return HarmonicFit(float(coef[0]), coeffs, float(np.sqrt(np.mean(resid**2))))
