import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spatiobox import jointbox as jb, quantum as q, sodbox as sb

SINGLET_OMEGA = np.diag([0.25, -0.25, -0.25, -0.25])


def quadratic_box(d=3):
    class Quadratic:
        def __init__(self):
            self.d = d

        def probabilities(self, x, y):
            px = 0.5 * (1 + 0.5 * np.asarray(x)[..., 0] ** 2 - 0.25)
            p = np.stack([px, 1 - px])
            return p[:, None] * np.full((2,) + px.shape, 0.5)[None, :]

    return Quadratic()


def sampled_rows(box, d, k, seed):
    gen = np.random.default_rng(seed)
    xs, ys = sb.random_directions(gen, k, d), sb.random_directions(gen, k, d)
    return xs, ys, box.probabilities(xs, ys).reshape(4, k).T


# -- single-party boxes -----------------------------------------------------------


def test_affine_box_examples():
    box = sb.AffineBox.binary(0.5, [0.3, 0, 0])
    assert sb.evaluate_affine(box, 1, [1.0, 0, 0]) == pytest.approx(0.8)
    assert sb.evaluate_affine(box, -1, [1.0, 0, 0]) == pytest.approx(0.2)
    with pytest.raises(ValueError, match=r"\[0, 1\]"):
        sb.AffineBox.binary(0.2, [0.3, 0, 0])
    with pytest.raises(ValueError, match="unit"):
        box.probabilities([2.0, 0, 0])


@settings(max_examples=30)
@given(st.integers(2, 8), st.floats(0.0, 1.0), st.integers(0, 2**31))
def test_affine_box_in_unit_interval(d, c0, seed):
    gen = np.random.default_rng(seed)
    v = sb.random_directions(gen, 1, d)[0] * min(c0, 1 - c0) * gen.uniform()
    p = sb.AffineBox.binary(c0, v).probabilities(sb.random_directions(gen, 200, d))
    assert p.min() >= -1e-12 and p.max() <= 1 + 1e-12
    assert np.allclose(p.sum(axis=0), 1)


@pytest.mark.parametrize("d", [2, 3, 5])
def test_haar_average_of_affine_is_constant(d):
    box = sb.AffineBox.binary(0.6, np.full(d, 0.3 / math.sqrt(d)))
    mean, se = sb.haar_average(lambda xs: box.probabilities(xs)[0], d)
    assert mean == pytest.approx(0.6, abs=1e-12)


@pytest.mark.parametrize("d", [2, 3])
def test_haar_second_moment(d):
    mean, _ = sb.haar_average(lambda xs: xs[:, 0] ** 2, d)
    assert mean == pytest.approx(1 / d, abs=1e-12)


def test_haar_monte_carlo_second_moment():
    mean, se = sb.haar_average(lambda xs: xs[:, 0] ** 2, 6, seed=3)
    assert se > 0 and abs(mean - 1 / 6) < 5 * se


def test_fit_affine_recovers_and_rejects_degenerate():
    gen = np.random.default_rng(1)
    box = sb.AffineBox.binary(0.4, [0.1, -0.2, 0.05])
    xs = sb.random_directions(gen, 30, 3)
    fit = sb.fit_affine(xs, box.probabilities(xs).T)
    assert fit.transforms_fundamentally and fit.residual < 1e-12
    assert np.allclose(fit.c0, [0.4, 0.6]) and np.allclose(fit.c[0], [0.1, -0.2, 0.05])
    e = np.eye(3)
    with pytest.raises(sb.DegenerateDirectionsError):
        sb.fit_affine(np.array([e[0], -e[0], e[1], -e[1]] * 3), np.full(12, 0.5))


def test_dimension_range():
    with pytest.raises(ValueError, match="dimension"):
        sb.check_dimension(1)
    with pytest.raises(ValueError, match="dimension"):
        sb.check_dimension(17)
    assert sb.check_dimension(16) == 16


# -- local structure -----------------------------------------------------------------


def test_quadratic_box_not_affine():
    verdict = sb.check_transforms_fundamentally_locally(quadratic_box())
    assert not verdict.ok and verdict.value > 1e-3


def test_constant_box_passes():
    box = sb.ProductBox(sb.AffineBox.binary(0.5, [0, 0, 0]), sb.AffineBox.binary(0.5, [0, 0, 0]))
    assert sb.check_transforms_fundamentally_locally(box).ok
    assert sb.check_locally_unbiased(box).ok


def test_biased_product_box():
    box = sb.ProductBox(sb.AffineBox.binary(0.7, [0.1, 0, 0]), sb.AffineBox.binary(0.5, [0, 0.2, 0]))
    assert sb.check_transforms_fundamentally_locally(box).ok
    v = sb.check_locally_unbiased(box)
    assert not v.ok and v.value == pytest.approx(0.4, abs=1e-9)


@pytest.mark.parametrize("seed", range(5))
def test_quantum_boxes_unbiased(seed):
    gen = np.random.default_rng(seed)
    box = q.BlochBox(q.random_mixed_state(gen), 3)
    s = sb.local_structure(box, seed=seed)
    assert s.transforms_fundamentally_locally and s.unbiased()


def test_werner_bloch_box_unbiased():
    s = sb.local_structure(q.BlochBox(q.werner_state(0.8), 4))
    assert s.affine_residual < 1e-10 and s.bias < 1e-9


def test_deterministic_conditional_undefined():
    box = sb.ProductBox(sb.AffineBox.binary(1.0, [0, 0, 0]), sb.AffineBox.binary(0.5, [0, 0, 0]))
    with pytest.raises(jb.UndefinedConditionalError):
        sb.local_structure(box)


# -- bilinear forms ------------------------------------------------------------------


def test_uniform_and_singlet_omega():
    uniform = sb.ProductBox(sb.AffineBox.binary(0.5, [0, 0, 0]), sb.AffineBox.binary(0.5, [0, 0, 0]))
    om = sb.omega_from_box(uniform)
    assert np.allclose(om, np.diag([0.25, 0, 0, 0]), atol=1e-12)
    singlet = sb.omega_from_box(q.BlochBox(q.werner_state(1.0), 3))
    assert np.allclose(singlet, SINGLET_OMEGA, atol=1e-12)


@pytest.mark.parametrize("d", [2, 3, 5])
def test_omega_round_trip(d):
    gen = np.random.default_rng(d)
    box = q.BlochBox(q.random_mixed_state(gen), d)
    om = sb.omega_from_box(box)
    assert np.allclose(om, box.omega(), atol=1e-12)
    rebuilt = sb.box_from_omega(om)
    xs, ys = sb.random_directions(gen, 100, d), sb.random_directions(gen, 100, d)
    assert np.abs(rebuilt.probabilities(xs, ys) - box.probabilities(xs, ys)).max() < 1e-10


def test_bilinear_fit_matches_probe_route():
    gen = np.random.default_rng(2)
    box = q.BlochBox(q.random_pure_state(gen), 3)
    fit = sb.fit_local_bilinear(*sampled_rows(box, 3, 80, seed=3))
    assert fit.residual < 1e-12 and fit.bias() < 1e-12
    assert np.allclose(fit.omega(), sb.omega_from_box(box), atol=1e-12)


def test_bilinear_fit_rejects_bad_shapes():
    with pytest.raises(ValueError, match="shape"):
        sb.fit_local_bilinear(np.ones((5, 3)), np.ones((4, 3)), np.ones((5, 4)))
    gen = np.random.default_rng(0)
    xs = sb.random_directions(gen, 5, 3)
    with pytest.raises(sb.DegenerateDirectionsError):
        sb.fit_local_bilinear(xs, xs, np.full((5, 4), 0.25))


# -- positivity ----------------------------------------------------------------------


def test_quantum_omega_positive():
    gen = np.random.default_rng(4)
    for _ in range(10):
        box = q.BlochBox(q.random_mixed_state(gen), 3)
        v = sb.check_unital_positive(box.omega())
        assert v.ok and v.minimum >= -1e-9
        assert v.minimum <= v.oracle_minimum + 1e-12


def test_singlet_minimum_is_zero():
    v = sb.check_unital_positive(SINGLET_OMEGA)
    assert v.ok and v.minimum == pytest.approx(0.0, abs=1e-12)


def test_positivity_failure_locates_ray():
    om = np.diag([0.25, -0.5, 0.0, 0.0])
    v = sb.check_unital_positive(om)
    assert v.unital and not v.positive
    assert v.minimum == pytest.approx(-0.25, abs=1e-12)
    _, x, _, y = v.ray
    value = np.concatenate([[1], x]) @ om @ np.concatenate([[1], y])
    assert value == pytest.approx(v.minimum, abs=1e-12)
    assert abs(abs(x[0]) - 1) < 1e-9 and x[0] * y[0] > 0


def test_non_unital_detected():
    v = sb.check_unital_positive(np.diag([0.3, 0, 0, 0]))
    assert not v.unital and v.unital_value == pytest.approx(1.2)


# -- PR embedding and mixtures --------------------------------------------------------


def test_pr_embedding():
    box = sb.pr_box_embedding()
    e0, e1 = box.axis_inputs()
    corr = lambda x, y: float(sb.box_correlation(box, x, y))
    chsh = corr(e0, e0) + corr(e0, e1) + corr(e1, e0) - corr(e1, e1)
    assert chsh == pytest.approx(4.0, abs=1e-12)
    assert sb.signalling_residual(box) < 1e-12
    s = sb.local_structure(box)
    assert s.affine_residual < 1e-10 and not s.unbiased()
    with pytest.raises(sb.PremiseError, match="unbiased"):
        sb.omega_from_box(box)
    gen = np.random.default_rng(5)
    p = box.probabilities(sb.random_directions(gen, 500, 3), sb.random_directions(gen, 500, 3))
    assert p.min() >= -1e-12


def test_deterministic_table_chsh():
    box = sb.pr_box_embedding(sb.deterministic_table([1, 1], [1, -1]))
    e0, e1 = box.axis_inputs()
    corr = lambda x, y: float(sb.box_correlation(box, x, y))
    assert corr(e0, e0) + corr(e0, e1) + corr(e1, e0) - corr(e1, e1) == pytest.approx(2.0)


def test_bad_tables_rejected():
    with pytest.raises(ValueError, match="shape"):
        sb.check_table(np.zeros((2, 2, 2)))
    with pytest.raises(ValueError, match="normalized"):
        sb.check_table(np.zeros((2, 2, 2, 2)))
    sig = np.zeros((2, 2, 2, 2))
    sig[0, 0, :, 0] = 1
    sig[1, 0, :, 1] = 1
    with pytest.raises(ValueError, match="signals"):
        sb.check_table(sig)


def test_convex_mix_properties():
    gen = np.random.default_rng(6)
    b1 = q.BlochBox(q.random_pure_state(gen), 3)
    b2 = q.BlochBox(q.werner_state(0.5), 3)
    mix = sb.convex_mix([b1, b2], [0.3, 0.7])
    xs, ys = sb.random_directions(gen, 50, 3), sb.random_directions(gen, 50, 3)
    assert np.allclose(mix.probabilities(xs, ys), 0.3 * b1.probabilities(xs, ys) + 0.7 * b2.probabilities(xs, ys))
    assert np.allclose(sb.omega_from_box(mix), 0.3 * b1.omega() + 0.7 * b2.omega(), atol=1e-12)
    with pytest.raises(ValueError):
        sb.convex_mix([b1, b2], [0.5, 0.6])
    with pytest.raises(ValueError):
        sb.convex_mix([b1, q.BlochBox(q.werner_state(0.5), 4)], [0.5, 0.5])


def test_mixing_in_biased_box_breaks_unbiasedness():
    gen = np.random.default_rng(7)
    good = q.BlochBox(q.random_pure_state(gen), 3)
    mix = sb.convex_mix([good, sb.pr_box_embedding()], [0.5, 0.5])
    assert not sb.check_locally_unbiased(mix).ok
