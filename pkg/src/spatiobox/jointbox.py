"""Bipartite probability tables ``P(a, b | alpha, beta)`` for binary outcomes.

Each of the four outcome pairs carries its own trigonometric series.  Blocks
are keyed ``"pp", "pm", "mp", "mm"`` (first letter Alice, ``p`` for +1).
Array-valued results index outcomes as ``[a_idx, b_idx]`` with index 0 for +1
and 1 for -1.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from . import corrfn
from .corrfn import CorrelationFunction, FreqPair
from .tolerances import tol

KEYS = ("pp", "pm", "mp", "mm")
OUTCOMES = (1, -1)


class SignallingError(ValueError):
    pass


class UndefinedConditionalError(ValueError):
    pass


def outcome_index(x: int) -> int:
    if x == 1:
        return 0
    if x == -1:
        return 1
    raise ValueError(f"outcome must be +1 or -1, got {x!r}")


def _key(a: int, b: int) -> str:
    return ("p" if outcome_index(a) == 0 else "m") + ("p" if outcome_index(b) == 0 else "m")


@dataclass(frozen=True, eq=False)
class JointBox:
    """Four outcome series whose sum is identically one.

    Normalization is enforced at the coefficient level on construction.
    Non-negativity is a numerical property; see :func:`check_nonnegative`.
    """

    blocks: Mapping[str, CorrelationFunction]

    def __post_init__(self) -> None:
        if set(self.blocks) != set(KEYS):
            raise ValueError(f"blocks must be keyed {KEYS}, got {sorted(self.blocks)}")
        two_j = max(b.two_j for b in self.blocks.values())
        blocks = {k: self.blocks[k].with_spin(two_j) for k in KEYS}
        total = blocks["pp"] + blocks["pm"] + blocks["mp"] + blocks["mm"]
        if not total.allclose(CorrelationFunction(two_j, 1.0)):
            raise ValueError("outcome series do not sum to 1 at the coefficient level")
        object.__setattr__(self, "blocks", blocks)

    @property
    def two_j(self) -> int:
        return self.blocks["pp"].two_j

    def probabilities(self, alpha, beta) -> np.ndarray:
        """Array of shape ``(2, 2) + broadcast(alpha, beta).shape``."""
        vals = [np.asarray(corrfn.evaluate(self.blocks[k], alpha, beta)) for k in KEYS]
        return np.stack(vals).reshape((2, 2) + vals[0].shape)

    def to_json(self) -> dict:
        return {k: self.blocks[k].to_json() for k in KEYS}

    @classmethod
    def from_json(cls, data: Mapping) -> "JointBox":
        missing = [k for k in KEYS if k not in data]
        if missing:
            raise ValueError(f"joint box JSON is missing block(s) {missing}")
        blocks = {}
        for k in KEYS:
            try:
                blocks[k] = CorrelationFunction.from_json(data[k])
            except ValueError as exc:
                raise ValueError(f"block '{k}': {exc}") from None
        return cls(blocks)


def evaluate_joint(box: JointBox, a: int, b: int, alpha, beta):
    return corrfn.evaluate(box.blocks[_key(a, b)], alpha, beta)


def from_correlation(f: CorrelationFunction) -> JointBox:
    """``P(a,b) = 1/4 + ab C/4``: uniform marginals, correlation ``C``."""
    if not corrfn.is_bounded(f):
        raise ValueError("correlation function exceeds |C| <= 1")
    plus = f.scaled(0.25, 0.25)
    minus = f.scaled(-0.25, 0.25)
    return JointBox({"pp": plus, "mm": plus, "pm": minus, "mp": minus})


def correlation_of(box: JointBox) -> CorrelationFunction:
    """``P(++) + P(--) - P(+-) - P(-+)`` computed on coefficients."""
    b = box.blocks
    return ((b["pp"] + b["mm"]) - (b["pm"] + b["mp"])).certified()


def uniform_box(two_j: int = 0) -> JointBox:
    return from_correlation(CorrelationFunction(two_j, 0.0))


def deterministic_box(a: int, b: int, two_j: int = 0) -> JointBox:
    """Outputs ``(a, b)`` with certainty for every input pair."""
    target = _key(a, b)
    return JointBox({k: CorrelationFunction(two_j, 1.0 if k == target else 0.0) for k in KEYS})


@dataclass(frozen=True)
class NoSignallingVerdict:
    ok: bool
    residual: float

    def __bool__(self) -> bool:
        return self.ok


def _marginal_series(box: JointBox, party: str, outcome: int) -> CorrelationFunction:
    o = "p" if outcome_index(outcome) == 0 else "m"
    if party == "A":
        return box.blocks[o + "p"] + box.blocks[o + "m"]
    if party == "B":
        return box.blocks["p" + o] + box.blocks["m" + o]
    raise ValueError(f"party must be 'A' or 'B', got {party!r}")


def check_no_signalling(box: JointBox, atol: float | None = None) -> NoSignallingVerdict:
    """Alice's marginal series may not contain ``beta`` (``n != 0``) and vice versa.

    The residual is the largest offending coefficient magnitude.
    """
    atol = tol("coeff") if atol is None else atol
    worst = 0.0
    for a in OUTCOMES:
        for p, (c, s) in _marginal_series(box, "A", a).terms.items():
            if p.n != 0:
                worst = max(worst, abs(c), abs(s))
    for b in OUTCOMES:
        for p, (c, s) in _marginal_series(box, "B", b).terms.items():
            if p.m != 0:
                worst = max(worst, abs(c), abs(s))
    return NoSignallingVerdict(worst <= atol, worst)


def marginal(box: JointBox, party: str, outcome: int, angle):
    """Single-party outcome probability; raises :class:`SignallingError` if undefined."""
    verdict = check_no_signalling(box)
    if not verdict:
        raise SignallingError(f"box signals (residual {verdict.residual:.3g})")
    series = _marginal_series(box, party, outcome)
    return corrfn.evaluate(series, angle, 0.0) if party == "A" else corrfn.evaluate(series, 0.0, angle)


def conditional_box(box: JointBox, party: str, outcome: int, angle: float) -> Callable:
    """Conditional box of the *other* party given ``party`` saw ``outcome`` at ``angle``.

    Returns ``g(free_angle) -> array`` of shape ``(2,) + free_angle.shape``
    holding the conditional probabilities of outcomes +1 and -1.
    """
    p_cond = float(marginal(box, party, outcome, angle))
    if p_cond <= tol("marginal"):
        raise UndefinedConditionalError(
            f"marginal P_{party}({outcome:+d}|{angle}) = {p_cond:.3g} is too small to condition on"
        )
    idx = outcome_index(outcome)

    def conditional(free):
        if party == "B":
            probs = box.probabilities(free, angle)[:, idx]
        else:
            probs = box.probabilities(angle, free)[idx, :]
        return probs / p_cond

    return conditional


@dataclass(frozen=True)
class NonNegativityVerdict:
    ok: bool
    minimum: float


def check_nonnegative(box: JointBox, atol: float | None = None) -> NonNegativityVerdict:
    """Smallest probability over the torus (grid scan plus refinement)."""
    atol = tol("nonneg") if atol is None else atol
    lowest = min(corrfn.value_range(box.blocks[k])[0] for k in KEYS)
    return NonNegativityVerdict(lowest >= -atol, lowest)


def is_valid(box: JointBox) -> bool:
    return check_nonnegative(box).ok


def grid_csv(box, points: int = 73) -> str:
    """CSV table ``alpha,beta,p_pp,p_pm,p_mp,p_mm`` over a uniform grid.

    Accepts anything with a ``probabilities(alpha, beta)`` method.
    """
    grid = np.linspace(0.0, 2.0 * np.pi, points)
    a, b = np.meshgrid(grid, grid, indexing="ij")
    probs = np.asarray(box.probabilities(a, b)).reshape(4, -1)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["alpha", "beta", "p_pp", "p_pm", "p_mp", "p_mm"])
    for i, (x, y) in enumerate(zip(a.ravel(), b.ravel())):
        writer.writerow([f"{v:.12g}" for v in (x, y, *probs[:, i])])
    return buf.getvalue()


def signalling_example(strength: float = 0.1) -> JointBox:
    """Uniform box plus a ``beta``-dependent term in Alice's +1 marginal.

    Used to exercise the no-signalling checks.
    """
    pair = FreqPair(0, 1)
    pp = CorrelationFunction(1, 0.25, {pair: (strength, 0.0)})
    pm = CorrelationFunction(1, 0.25)
    mp = CorrelationFunction(1, 0.25, {pair: (-strength, 0.0)})
    mm = CorrelationFunction(1, 0.25)
    return JointBox({"pp": pp, "pm": pm, "mp": mp, "mm": mm})
