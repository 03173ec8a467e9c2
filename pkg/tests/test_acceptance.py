"""End-to-end acceptance criteria, one test per criterion.

A PASS/FAIL line per criterion is printed in the terminal summary.
"""

import math
import time

import numpy as np
import pytest

from conftest import random_bounded
from spatiobox import bci, corrfn, lhv, quantum, sodbox
from spatiobox.corrfn import CorrelationFunction

pytestmark = pytest.mark.acceptance

TWO_PI = 2 * math.pi
TSIRELSON = 2 * math.sqrt(2)


class Budget:
    """Wall-clock limit stated alongside a criterion."""

    def __init__(self, seconds):
        self.seconds = seconds

    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start
        if exc[0] is None:
            assert self.elapsed < self.seconds, f"took {self.elapsed:.1f} s, limit {self.seconds} s"


def test_ac01_scifi_chsh():
    with Budget(1.0):
        value = bci.chsh_value(corrfn.scifi_correlation(), 1.5, 3.9, 0.0, 2.3)
    assert abs(value - 3.63) <= 0.005


def test_ac02_tsirelson():
    with Budget(30):
        box = quantum.QuantumBox(quantum.werner_state(1.0))
        opt = bci.maximize_chsh(box.correlation)
        gen = np.random.default_rng(2)
        a1, b2, a3, b4 = gen.uniform(0, TWO_PI, (4, 100_000))
        c = box.correlation
        sampled = np.abs(c(a1, b2) + c(a3, b2) + c(a3, b4) - c(a1, b4)).max()
    assert abs(opt.value) >= 2.828
    assert abs(opt.value) <= TSIRELSON + 1e-6
    assert sampled <= TSIRELSON + 1e-6


def test_ac03_gamma_constants():
    with Budget(1.0):
        assert lhv.gamma_n(1) == pytest.approx(math.sqrt(2) / math.pi, abs=1e-5)
        assert lhv.gamma_n(2) == pytest.approx(0.184375, abs=1e-5)
        assert lhv.gamma_n(3) == pytest.approx(0.103893, abs=1e-5)
        for n in range(4, 101):
            assert lhv.gamma_n(n) >= math.sqrt(2) / math.e * n**-1.5


def test_ac04_werner_analytics():
    gen = np.random.default_rng(4)
    with Budget(1.0):
        worst = 0.0
        for p, a, b in zip(gen.uniform(0, 1, 1000), *gen.uniform(0, TWO_PI, (2, 1000))):
            got = quantum.quantum_correlation(quantum.werner_state(p), a, b)
            worst = max(worst, abs(got + p * math.cos(2 * (a - b))))
    assert worst <= 1e-12


def test_ac05_lhv_reproduction():
    gen = np.random.default_rng(5)
    with Budget(60):
        for k in range(20):
            f = random_bounded(gen, int(gen.integers(1, 4)), int(gen.integers(1, 5)))
            model = lhv.build_lhv(f)
            assert model.exact_correlation().allclose(f.scaled(model.scale), atol=1e-12)
            for alpha, beta in gen.uniform(0, TWO_PI, (10, 2)):
                est = lhv.empirical_correlation(model, alpha, beta, 100_000, seed=1000 * k + int(1e3 * alpha))
                assert abs(est.correlation - model.scale * f(alpha, beta)) <= 4 * est.stderr


def test_ac06_lhv_classicality():
    gen = np.random.default_rng(6)
    with Budget(30):
        models = [lhv.build_lhv(random_bounded(gen, int(gen.integers(1, 4)), int(gen.integers(1, 5)))).exact_correlation()
                  for _ in range(10)]
        for c in models:
            assert abs(bci.maximize_chsh(c, grid=12).value) <= 2 + 1e-9
        for _ in range(500):
            c = models[gen.integers(len(models))]
            n = int(2 * gen.integers(2, 51))
            setting = bci.ChainedSetting.build(n, *gen.uniform(0, TWO_PI, 2))
            assert bci.bci_value(c, setting, offset=gen.uniform(0, TWO_PI)).lhs <= n - 2 + 1e-9


def test_ac07_bci_closed_form():
    cos = CorrelationFunction.relational(1, cos={1: 1.0})
    for n in (4, 6, 8, 20):
        setting = bci.ChainedSetting.build(n, 0.0, math.pi)
        rep = bci.bci_value(cos, setting)
        direct = sum(sign * cos(a, b) for a, b, sign in setting.pairs())
        closed = (n - 1) * math.cos(math.pi / (n - 1)) + 1
        assert abs(rep.lhs - closed) <= 1e-12 and abs(direct - closed) <= 1e-12
        assert rep.violated
    assert bci.bci_value(cos, bci.ChainedSetting.build(4, 0.0, math.pi)).lhs == pytest.approx(2.5, abs=1e-12)
    assert bci.bci_value(cos, bci.ChainedSetting.build(6, 0.0, math.pi)).lhs == pytest.approx(5.045, abs=1e-3)


def test_ac08_square_wave_necessity():
    model = lhv.build_squarewave_lhv(1, 2)
    assert model.relational_value(0.0) == 1.0
    assert model.relational_value(math.pi / 2) == -1.0
    gen = np.random.default_rng(8)
    for _ in range(500):
        n = int(2 * gen.integers(2, 101))
        tp, tm, offset = gen.uniform(0, TWO_PI, 3)
        setting = bci.ChainedSetting.build(n, tp, tm)
        assert bci.bci_value(model, setting, offset=offset).lhs <= n - 2 + 1e-9
    # the witness angles themselves
    for n in (4, 6, 100, 10_000):
        assert bci.relational_lhs(model.relational_value, 0.0, math.pi / 2, n) <= n - 2 + 1e-9


def test_ac09_pr_box_embedding():
    box = sodbox.pr_box_embedding()
    s = sodbox.local_structure(box)
    assert s.affine_residual < 1e-10
    assert not s.unbiased()
    e0, e1 = box.axis_inputs()
    corr = lambda x, y: float(sodbox.box_correlation(box, x, y))
    assert corr(e0, e0) + corr(e0, e1) + corr(e1, e0) - corr(e1, e1) == pytest.approx(4.0, abs=1e-12)


def test_ac10_quantum_premise_pipeline():
    gen = np.random.default_rng(10)
    with Budget(60):
        for k in range(100):
            state = quantum.random_pure_state(gen) if k % 2 else quantum.random_mixed_state(gen)
            box = quantum.BlochBox(state, 3)
            s = sodbox.local_structure(box, seed=k)
            assert s.transforms_fundamentally_locally and s.unbiased()
            verdict = sodbox.check_unital_positive(sodbox.omega_from_box(box, check_premises=False), seed=k)
            assert verdict.unital
            assert verdict.minimum >= -1e-9 and verdict.oracle_minimum >= -1e-9


def test_ac11_oscillator_frequencies():
    omega = 0.9
    v = np.ones(3) / math.sqrt(3)
    effect = np.outer(v, v)
    spec = quantum.OscillatorSpec((0, 1, 3), [1.0, 0.5 - 0.5j, 0.7], omega, (effect, np.eye(3) - effect))
    t = np.linspace(0, 30, 300)
    fit = quantum.fit_harmonics(t, quantum.oscillator_box(spec, t)[0], omega, 8)
    assert fit.residual_rms < 1e-9
    assert sorted(fit.frequencies(omega)) == pytest.approx(sorted(omega * k for k in spec.energy_differences()))


def test_ac12_certificate_and_witness_agree():
    gen = np.random.default_rng(12)
    passed = violated = 0
    for _ in range(200):
        two_j = int(gen.integers(1, 4))
        f = random_bounded(gen, two_j, int(gen.integers(1, 5)))
        # straddle the certificate threshold so both verdicts occur
        f = f.scaled(gen.uniform(0.5, 1.5) * lhv.gamma_n(f.n_terms)) if gen.uniform() < 0.7 else f
        cert = lhv.theorem_2a_check(f)
        found = bci.theorem_2b_witness(f, *gen.uniform(0, TWO_PI, 2)).report.violated
        passed += cert.passed
        violated += found
        assert not (cert.passed and found)
    assert passed > 0 and violated > 0
