"""Loss catalogue: worked values, oracle consistency, references, round-trips."""

import math

import numpy as np
import pytest

from helpers import ALL_FAMILIES, VECTOR_FAMILIES, instance_cycle, random_instance
from proxkit import datagen, problems
from proxkit.errors import NonCertifiedError
from proxkit.problems import (Dataset, Sample, batch_subgrad, ensure_reference,
                              hinge_dual_solve, inf_value, load_dataset,
                              loss_value, objective, project_capped_simplex,
                              prox, reference_optimum, save_dataset, subgrad)
from proxkit.rng import RngStream

A10 = np.array([1.0, 0.0])
X20 = np.array([2.0, 0.0])


# ---------------------------------------------------------------- eval

def test_eval_worked_examples():
    assert loss_value("LeastSquares", Sample(A10, 0.0), X20) == 2.0
    assert math.isclose(loss_value("Logistic", Sample(A10, 1.0), np.zeros(2)),
                        math.log(2.0), rel_tol=1e-15)
    # includes the log(b!) constant: log 2 + e^0 - 0
    assert math.isclose(loss_value("Poisson", Sample(A10, 2.0), np.zeros(2)),
                        1.0 + math.log(2.0), rel_tol=1e-15)


def test_eval_stable_at_extreme_margins():
    big = np.array([1e4, 0.0])
    for b in (1.0, -1.0):
        assert np.isfinite(loss_value("Logistic", Sample(A10, b), big))
        assert np.isfinite(loss_value("Logistic", Sample(A10, b), -big))
    # exp argument is capped, so the value saturates instead of overflowing
    assert np.isfinite(loss_value("Poisson", Sample(A10, 2.0), np.array([800.0, 0.0])))
    assert np.isfinite(subgrad("Poisson", Sample(A10, 2.0), np.array([800.0, 0.0]))[0])


def test_convexity_probe():
    stream = RngStream(41, "convexity")
    count = 0
    for family, sample, x, _, k in instance_cycle(42, 10_000):
        y = stream.gaussians(x.size)
        t = float(stream.uniforms(1)[0])
        mid = loss_value(family, sample, t * x + (1 - t) * y, k)
        chord = (t * loss_value(family, sample, x, k)
                 + (1 - t) * loss_value(family, sample, y, k))
        assert mid <= chord + 1e-9, family
        count += 1
    assert count == 10_000


# ---------------------------------------------------------------- subgrad

def test_subgrad_worked_examples():
    assert np.array_equal(subgrad("LeastSquares", Sample(A10, 0.0), X20), [2.0, 0.0])
    # exact fit: sign(0) = 0 inside the subdifferential
    assert np.array_equal(subgrad("AbsoluteLoss", Sample(A10, 0.0), np.array([0.0, 5.0])),
                          np.zeros(2))
    g = subgrad("HalfspaceDist", Sample(np.array([3.0, 4.0]), 0.0), np.array([3.0, 4.0]))
    assert loss_value("HalfspaceDist", Sample(np.array([3.0, 4.0]), 0.0),
                      np.array([3.0, 4.0])) == 5.0
    np.testing.assert_allclose(g, [0.6, 0.8], rtol=0, atol=1e-15)


def test_subgrad_convexity_lower_bound():
    stream = RngStream(43, "lowerbound")
    for family, sample, x, _, k in instance_cycle(44, 2000):
        g = subgrad(family, sample, x, k)
        y = stream.gaussians(x.size)
        f_x = loss_value(family, sample, x, k)
        f_y = loss_value(family, sample, y, k)
        assert f_y >= f_x + float(g @ (y - x)) - 1e-9, family


def test_hinge_subgrad_ties_break_to_lowest_index():
    # classes 1 and 2 violate the margin equally; class 1 must be picked
    sample = Sample(np.array([1.0]), 0.0)
    x = np.array([0.0, 0.0, 0.0])
    g = subgrad("MulticlassHinge", sample, x, 3)
    assert np.array_equal(g, [-1.0, 1.0, 0.0])


def test_hinge_subgrad_zero_when_margins_met():
    sample = Sample(np.array([1.0]), 0.0)
    x = np.array([5.0, 0.0, 0.0])  # label score clears every margin by 4
    assert np.array_equal(subgrad("MulticlassHinge", sample, x, 3), np.zeros(3))
    assert loss_value("MulticlassHinge", sample, x, 3) == 0.0


# ---------------------------------------------------------------- inf_value

def test_inf_value_worked_examples():
    assert inf_value("Logistic", Sample(A10, 1.0)) == 0.0
    assert inf_value("Poisson", Sample(A10, 0.0)) == 0.0
    assert math.isclose(inf_value("Poisson", Sample(A10, 2.0)),
                        2.0 - math.log(2.0), rel_tol=1e-15)
    for family in ("LeastSquares", "AbsoluteLoss", "HalfspaceDist",
                   "MulticlassHinge"):
        assert inf_value(family, Sample(A10, 0.0)) == 0.0


def test_inf_value_is_lower_bound_with_witness():
    stream = RngStream(45, "witness")
    for family, sample, x, _, k in instance_cycle(46, 1200):
        assert loss_value(family, sample, x, k) >= inf_value(family, sample) - 1e-12
    # attaining witnesses for the piecewise-linear and quadratic families
    for _ in range(50):
        a = stream.gaussians(4)
        aa = float(a @ a)
        b = float(stream.gaussians(1)[0])
        x_fit = (b / aa) * a
        assert abs(loss_value("LeastSquares", Sample(a, b), x_fit)) <= 1e-12
        assert abs(loss_value("AbsoluteLoss", Sample(a, b), x_fit)) <= 1e-12
        x_in = ((b - 1.0) / aa) * a
        assert loss_value("HalfspaceDist", Sample(a, b), x_in) == 0.0
    # Poisson attains its infimum at margin log(b)
    s = Sample(np.array([2.0]), 3.0)
    x_star = np.array([math.log(3.0) / 2.0])
    assert math.isclose(loss_value("Poisson", s, x_star), inf_value("Poisson", s),
                        rel_tol=1e-14)


def test_poisson_value_meets_infimum_at_log_count():
    s = Sample(np.array([1.0]), 2.0)
    x = np.array([math.log(2.0)])
    assert loss_value("Poisson", s, x) == inf_value("Poisson", s)


# ---------------------------------------------------------------- prox

def test_prox_worked_examples():
    assert np.array_equal(prox("LeastSquares", Sample(A10, 0.0), X20, 1.0), [1.0, 0.0])
    # 1-D logistic: the optimality condition is t = 1/(1 + e^t)
    t = 0.5
    for _ in range(200):
        t = 1.0 / (1.0 + math.exp(t))
    y = prox("Logistic", Sample(np.array([1.0]), 1.0), np.array([0.0]), 1.0)
    assert abs(float(y[0]) - t) <= 1e-10
    yh = prox("MulticlassHinge", Sample(np.array([1.0]), 0.0), np.zeros(2), 1.0, 2)
    np.testing.assert_allclose(yh, [0.5, -0.5], rtol=0, atol=1e-10)


def test_prox_satisfied_halfspace_is_identity():
    sample = Sample(np.array([3.0, 4.0]), 10.0)
    x = np.array([0.1, 0.2])
    assert np.array_equal(prox("HalfspaceDist", sample, x, 2.0), x)


def test_prox_first_order_residual():
    """(x - y)/alpha must be a subgradient of the loss at y."""
    for family, sample, x, alpha, k in instance_cycle(47, 600,
                                                      families=VECTOR_FAMILIES):
        y = prox(family, sample, x, alpha, k)
        g = (x - y) / alpha
        # validity via the convexity gap at probe points around y
        probe_stream = RngStream(48, family)
        f_y = loss_value(family, sample, y, k)
        for _ in range(3):
            z = y + probe_stream.gaussians(x.size) * 0.5
            f_z = loss_value(family, sample, z, k)
            assert f_z >= f_y + float(g @ (z - y)) - 1e-9 * max(1.0, abs(f_z))


def test_hinge_prox_beats_two_d_grid():
    """K=2, n=1: exhaustive grid over both coordinates around the start."""
    stream = RngStream(49, "hingegrid")
    span = np.linspace(-1.0, 1.0, 1001)
    for trial in range(6):
        a = float(stream.gaussians(1)[0])
        while abs(a) < 0.3:
            a = float(stream.gaussians(1)[0])
        label = int(stream.uniforms(1)[0] * 2)
        x = stream.gaussians(2)
        alpha = 10.0 ** float(stream.uniforms(1)[0] * 2 - 1)
        sample = Sample(np.array([a]), float(label))
        y = prox("MulticlassHinge", sample, x, alpha, 2)

        def fval(u0, u1):
            gap = (u1 - u0) if label == 0 else (u0 - u1)
            return np.maximum(1.0 + a * gap, 0.0)

        width = 2.0 * max(1.0, alpha * abs(a))
        g0 = x[0] + width * span[:, None]
        g1 = x[1] + width * span[None, :]
        vals = fval(g0, g1) + ((g0 - x[0]) ** 2 + (g1 - x[1]) ** 2) / (2 * alpha)
        returned = (fval(y[0], y[1])
                    + float(np.sum((y - x) ** 2)) / (2 * alpha))
        assert returned <= float(vals.min()) + 1e-8


def test_hinge_prox_kkt_residual_k10():
    stream = RngStream(50, "k10")
    for _ in range(50):
        a = stream.gaussians(6)
        x = stream.gaussians(60)
        label = int(stream.uniforms(1)[0] * 10)
        alpha = 10.0 ** float(stream.uniforms(1)[0] * 4 - 2)
        t = a @ x.reshape(10, 6).T
        others = [j for j in range(10) if j != label]
        c = np.array([1.0 + t[j] - t[label] for j in others])
        _, res, _ = hinge_dual_solve(c, alpha * float(a @ a), 10)
        assert res <= 1e-9


def test_hinge_dual_worked_example():
    lam, res, _ = hinge_dual_solve(np.array([1.0]), 1.0, 2)
    assert abs(float(lam[0]) - 0.5) <= 1e-10
    assert res <= 1e-10


def test_capped_simplex_projection():
    stream = RngStream(51, "simplex")
    for _ in range(200):
        dim = 1 + int(stream.uniforms(1)[0] * 8)
        v = stream.gaussians(dim) * 2.0
        w = project_capped_simplex(v)
        assert w.min() >= 0.0 and w.sum() <= 1.0 + 1e-12
        # projection property: no feasible point is closer to v
        for _ in range(20):
            u = stream.uniforms(dim)
            u = u / max(1.0, u.sum() / float(stream.uniforms(1)[0]))
            assert np.sum((w - v) ** 2) <= np.sum((u - v) ** 2) + 1e-9


def test_capped_simplex_identity_inside():
    v = np.array([0.2, 0.1, 0.3])
    assert np.array_equal(project_capped_simplex(v), v)


# ---------------------------------------------------------------- objective

def test_objective_single_sample_equals_eval():
    for family, sample, x, _, k in instance_cycle(52, 12):
        ds = Dataset(family, sample.a[None, :], np.array([sample.b]), n_classes=k)
        assert math.isclose(objective(ds, x), loss_value(family, sample, x, k),
                            rel_tol=1e-12, abs_tol=1e-300)


def test_objective_is_arithmetic_mean():
    # two least-squares samples engineered to have values 1 and 3
    x = np.array([math.sqrt(2.0)])
    A = np.array([[1.0], [1.0]])
    b = np.array([0.0, math.sqrt(2.0) - math.sqrt(6.0)])
    ds = Dataset("LeastSquares", A, b)
    assert math.isclose(objective(ds, x), 2.0, rel_tol=1e-12)


def test_objective_zero_at_planted_noiseless():
    ds = datagen.generate(datagen.GenSpec("LeastSquares", m=50, n=6, seed=9))
    assert abs(objective(ds, ds.planted)) <= 1e-12


def test_batch_subgrad_matches_sample_mean():
    for family in ALL_FAMILIES:
        kw = {"K": 3} if family == "MulticlassHinge" else {}
        sig = {"sigma": 0.4} if family in ("LeastSquares", "AbsoluteLoss") else {}
        ds = datagen.generate(datagen.GenSpec(family, m=25, n=4, seed=5, **kw, **sig))
        x = RngStream(53, family).gaussians(ds.dim) * 0.3
        g = batch_subgrad(ds, x)
        acc = np.zeros(ds.dim)
        for i in range(ds.m):
            acc += subgrad(family, ds.sample(i), x, ds.n_classes)
        np.testing.assert_allclose(g, acc / ds.m, rtol=1e-12, atol=1e-14)


# ---------------------------------------------------------------- reference

def test_reference_least_squares_orthogonality():
    ds = datagen.generate(datagen.GenSpec("LeastSquares", m=80, n=10,
                                          sigma=0.7, seed=3))
    ref = reference_optimum(ds)
    assert ref.method == "normal_equations"
    resid = ds.A @ ref.x_hat - ds.b
    assert float(np.linalg.norm(ds.A.T @ resid)) <= 1e-8
    assert math.isclose(ref.f_star, 0.5 * float(np.mean(resid ** 2)), rel_tol=1e-12)


def test_reference_noiseless_witness_families():
    for family in ("AbsoluteLoss", "HalfspaceDist"):
        ds = datagen.generate(datagen.GenSpec(family, m=60, n=6, seed=4))
        ref = reference_optimum(ds)
        assert ref.f_star == 0.0
        assert ref.tolerance <= 1e-12
        assert ref.method == "witness"


def test_reference_separable_logistic_has_no_minimizer():
    ds = datagen.generate(datagen.GenSpec("Logistic", m=60, n=6, seed=6))
    ref = reference_optimum(ds)
    assert ref.f_star == 0.0 and ref.x_hat is None
    assert ref.method == "separable"


def test_reference_poisson_newton_stationarity():
    ds = datagen.generate(datagen.GenSpec("Poisson", m=80, n=5, seed=7))
    ref = reference_optimum(ds)
    assert ref.method == "damped_newton"
    assert float(np.linalg.norm(batch_subgrad(ds, ref.x_hat))) <= 1e-10
    assert objective(ds, ref.x_hat) >= ref.f_star


def test_reference_polyak_fallback_on_noisy_absolute():
    ds = datagen.generate(datagen.GenSpec("AbsoluteLoss", m=40, n=4,
                                          sigma=0.3, seed=8))
    ref = reference_optimum(ds, subgrad_iters=20_000, subgrad_window=2_000)
    assert ref.method == "polyak_subgradient"
    assert np.isfinite(ref.f_star) and ref.tolerance >= 0.0
    # certified value is a genuine lower envelope for probe points
    stream = RngStream(54, "probes")
    for _ in range(20):
        z = ds.planted + 0.1 * stream.gaussians(ds.n)
        assert objective(ds, z) >= ref.f_star - ref.tolerance - 1e-9


def test_ensure_reference_fills_lazily_and_certifies():
    # the long-horizon fallback is deferred until someone needs f_star
    ds = datagen.generate(datagen.GenSpec("AbsoluteLoss", m=30, n=4,
                                          sigma=0.3, seed=2))
    assert ds.f_star is None
    ensure_reference(ds, subgrad_iters=20_000, subgrad_window=2_000)
    assert ds.f_star is not None and np.isfinite(ds.f_star)
    assert ds.meta["f_star_method"] == "polyak_subgradient"


def test_ensure_reference_blocks_uncertified_configs():
    ds = Dataset("AbsoluteLoss", np.ones((3, 2)), np.zeros(3),
                 f_star=0.0, f_star_tolerance=1.0)
    with pytest.raises(NonCertifiedError):
        ensure_reference(ds, epsilon=0.05)
    # without the epsilon gate the dataset passes through untouched
    assert ensure_reference(ds) is ds


# ---------------------------------------------------------------- round-trip

def test_save_load_round_trip(tmp_path):
    for family in ALL_FAMILIES:
        kw = {"K": 4} if family == "MulticlassHinge" else {}
        sig = ({"sigma": 0.25} if family in ("LeastSquares", "AbsoluteLoss",
                                             "Poisson", "HalfspaceDist")
               else {"p": 0.1})
        ds = datagen.generate(datagen.GenSpec(family, m=20, n=3, seed=11,
                                              **kw, **sig))
        path = tmp_path / f"{family}.txt"
        save_dataset(ds, str(path))
        back = load_dataset(str(path))
        assert back.family == ds.family and back.n_classes == ds.n_classes
        np.testing.assert_array_equal(back.A, ds.A)
        np.testing.assert_array_equal(back.b, ds.b)
        # a second save of the loaded dataset is byte-identical
        path2 = tmp_path / f"{family}_2.txt"
        save_dataset(back, str(path2))
        assert path.read_bytes() == path2.read_bytes()


def test_load_rejects_malformed_rows(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("LeastSquares 1 3 0 0.0\n1.0 2.0\n")
    with pytest.raises(ValueError):
        load_dataset(str(path))
