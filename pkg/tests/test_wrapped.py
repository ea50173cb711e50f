"""Wrapped Gaussian laws: covariance algebra, wrapping, densities, symmetry."""

import math

import numpy as np
import pytest

from spdgauss.exceptions import (
    DimensionMismatchError,
    DomainError,
    InvalidInputError,
)
from spdgauss.geometry import (
    airm_dist,
    diag_coord_indices,
    diag_indicator,
    exp_map,
    log_map,
    tangent_dim,
    unvectorize,
    vectorize,
)
from spdgauss.linalg import expm, logm, validate_spd
from spdgauss.wrapped import (
    Covariance,
    EllipticalGenerator,
    WgParams,
    clt_statistic,
    density,
    from_standard,
    jacobian_det,
    log_density,
    log_density_ec,
    log_jacobian_det,
    minimal_representative,
    sample,
    standardize_map,
    translate_class,
    unwrap_point,
    wrap_point,
)

from conftest import rand_spd, rand_sym


def small_params(rng, d: int = 2, kind: str = "full") -> WgParams:
    n = tangent_dim(d)
    p = rand_spd(rng, d)
    mu = 0.3 * rng.standard_normal(n)
    if kind == "full":
        a = 0.3 * rng.standard_normal((n, n))
        sigma = Covariance.full(a @ a.T + 0.2 * np.eye(n))
    else:
        sigma = Covariance.diagonal(0.1 + rng.random(n))
    return WgParams(p, mu, sigma)


# ---------------------------------------------------------------------------
# Covariance
# ---------------------------------------------------------------------------


def test_covariance_logdet_matches_slogdet(rng):
    sig = small_params(rng, 3).sigma
    sign, ld = np.linalg.slogdet(sig.matrix())
    assert sign == 1.0
    assert sig.logdet() == pytest.approx(ld, rel=1e-12)
    diag = Covariance.diagonal(np.array([0.5, 2.0, 4.0]))
    assert diag.logdet() == pytest.approx(np.log(0.5 * 2.0 * 4.0), rel=1e-12)


def test_covariance_mahalanobis_matches_solve(rng):
    sig = small_params(rng, 2).sigma
    dev = rng.standard_normal((7, sig.n))
    expected = np.einsum("ij,ij->i", dev, np.linalg.solve(sig.matrix(), dev.T).T)
    assert np.allclose(sig.mahalanobis(dev), expected, rtol=1e-11)
    assert np.isscalar(float(sig.mahalanobis(dev[0])))


def test_covariance_diagonal_agrees_with_dense_equivalent(rng):
    entries = 0.1 + rng.random(5)
    diag = Covariance.diagonal(entries)
    full = Covariance.full(np.diag(entries))
    dev = rng.standard_normal((4, 5))
    assert np.allclose(diag.mahalanobis(dev), full.mahalanobis(dev), rtol=1e-12)
    assert diag.logdet() == pytest.approx(full.logdet(), rel=1e-12)
    t = rng.standard_normal(5)
    assert np.allclose(diag.apply_half_power(t), full.apply_half_power(t))


def test_covariance_sampling_factor_reconstructs(rng):
    sig = small_params(rng, 2).sigma
    fac = sig.sampling_factor()
    assert np.allclose(fac @ fac.T, sig.matrix(), atol=1e-12)
    t = rng.standard_normal(sig.n)
    back = sig.apply_half_power(sig.apply_half_power(t), inverse=True)
    assert np.allclose(back, t, atol=1e-11)


def test_covariance_rejects_bad_values():
    with pytest.raises(DomainError):
        Covariance.diagonal([1.0, 0.0])
    with pytest.raises(DomainError):
        Covariance.full([[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(InvalidInputError):
        Covariance("banded", np.eye(2))
    with pytest.raises(InvalidInputError):
        Covariance.diagonal([[1.0, 2.0]])
    with pytest.raises(DimensionMismatchError):
        Covariance.diagonal([1.0, 2.0]).mahalanobis(np.zeros(3))


def test_covariance_dict_round_trip(rng):
    for kind in ("full", "diagonal"):
        sig = small_params(rng, 2, kind).sigma
        back = Covariance.from_dict(sig.to_dict())
        assert back.kind == sig.kind
        assert np.array_equal(back.values, sig.values)


# ---------------------------------------------------------------------------
# Wrapping
# ---------------------------------------------------------------------------


def test_wrap_unwrap_inverse_pair(rng):
    for d in (2, 4):
        p = rand_spd(rng, d)
        t = rng.standard_normal((6, tangent_dim(d)))
        x = wrap_point(p, t)
        validate_spd(x)
        assert np.allclose(unwrap_point(p, x), t, atol=1e-9)
        assert np.allclose(wrap_point(p, np.zeros(tangent_dim(d))), p, atol=1e-12)


def test_unwrap_norm_is_distance(rng):
    p, q = rand_spd(rng, 3), rand_spd(rng, 3)
    t = unwrap_point(p, q)
    assert np.linalg.norm(t) == pytest.approx(airm_dist(p, q), rel=1e-10)
    assert np.allclose(unvectorize(p, t), log_map(p, q), atol=1e-10)


# ---------------------------------------------------------------------------
# Jacobian of the exponential
# ---------------------------------------------------------------------------


def fd_volume_jacobian(p: np.ndarray, u: np.ndarray, h: float = 1e-5) -> float:
    """Volume distortion of the exponential by central differences.

    Columns are the orthonormal coordinates at Exp_p(u) of the velocity of
    the curve h -> Exp_p(u + h * basis_k).
    """
    d = p.shape[0]
    n = tangent_dim(d)
    q = exp_map(p, u)
    cols = []
    for k in range(n):
        e = np.zeros(n)
        e[k] = h
        w = unvectorize(p, e)
        diff = (exp_map(p, u + w) - exp_map(p, u - w)) / (2.0 * h)
        cols.append(vectorize(q, diff))
    return abs(float(np.linalg.det(np.column_stack(cols))))


def test_jacobian_at_zero_is_one(rng):
    for d in (1, 2, 3):
        p = rand_spd(rng, d)
        assert jacobian_det(p, np.zeros((d, d))) == pytest.approx(1.0, abs=1e-12)


def test_jacobian_closed_form_commuting_case():
    a, b = 1.3, -0.4
    u = np.diag([a, b])
    gap = a - b
    expected = 2.0 * math.sinh(0.5 * gap) / gap
    assert jacobian_det(np.eye(2), u) == pytest.approx(expected, rel=1e-12)


def test_jacobian_matches_finite_differences(rng):
    for d in (2, 3):
        p = rand_spd(rng, d)
        u = rand_sym(rng, d)
        analytic = jacobian_det(p, u)
        assert analytic >= 1.0
        assert fd_volume_jacobian(p, u) == pytest.approx(analytic, rel=1e-5)


def test_jacobian_never_below_one(rng):
    p = rand_spd(rng, 3)
    logs = [log_jacobian_det(p, rand_sym(rng, 3, scale=s)) for s in (0.1, 1.0, 5.0)]
    assert all(lj >= 0.0 for lj in logs)
    # the one-dimensional manifold is flat
    assert log_jacobian_det(np.array([[2.0]]), np.array([[0.7]])) == pytest.approx(
        0.0, abs=1e-15
    )


def test_jacobian_broadcasts_over_stacks(rng):
    p = rand_spd(rng, 2)
    us = np.stack([rand_sym(rng, 2) for _ in range(5)])
    stacked = log_jacobian_det(p, us)
    assert stacked.shape == (5,)
    singles = [log_jacobian_det(p, u) for u in us]
    assert np.allclose(stacked, singles, rtol=1e-12)


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


def test_sample_is_deterministic_and_spd(rng):
    theta = small_params(rng, 2)
    xs1 = sample(theta, 64, rng=np.random.SeedSequence([7]))
    xs2 = sample(theta, 64, rng=np.random.SeedSequence([7]))
    assert np.array_equal(xs1, xs2)
    xs3 = sample(theta, 64, rng=np.random.SeedSequence([8]))
    assert not np.array_equal(xs1, xs3)
    validate_spd(xs1)
    with pytest.raises(InvalidInputError):
        sample(theta, 0)


def test_sample_moments_match_tangent_law(rng):
    theta = small_params(rng, 2, kind="diagonal")
    xs = sample(theta, 60000, rng=np.random.SeedSequence([21]))
    t = unwrap_point(theta.p, xs)
    assert np.allclose(t.mean(axis=0), theta.mu, atol=0.03)
    assert np.allclose(np.cov(t, rowvar=False), theta.sigma.matrix(), atol=0.03)


# ---------------------------------------------------------------------------
# Densities
# ---------------------------------------------------------------------------


def test_density_d1_matches_scalar_lognormal_form():
    # On 1x1 matrices the unwrapped coordinate is log(x / p) and the
    # exponential is volume preserving, so the density in the invariant
    # measure is the plain normal density of that coordinate.
    theta = WgParams(
        np.array([[1.7]]), np.array([0.4]), Covariance.diagonal(np.array([0.3]))
    )
    for x in (0.2, 1.0, 3.5):
        t = math.log(x / 1.7)
        expected = -0.5 * math.log(2.0 * math.pi * 0.3) - 0.5 * (t - 0.4) ** 2 / 0.3
        assert log_density(theta, np.array([[x]])) == pytest.approx(
            expected, rel=1e-12
        )


def test_density_d1_integrates_to_one_in_invariant_measure():
    theta = WgParams(
        np.array([[0.8]]), np.array([-0.2]), Covariance.full(np.array([[0.5]]))
    )
    # invariant measure on the positive half line is dx / x; substitute
    # x = exp(s) and integrate the density over s
    s = np.linspace(-10.0, 10.0, 20001)
    vals = density(theta, np.exp(s)[:, None, None])
    total = np.trapezoid(vals, s)
    assert total == pytest.approx(1.0, abs=1e-8)


def test_density_decomposes_into_tangent_gaussian_and_jacobian(rng):
    theta = small_params(rng, 3)
    x = rand_spd(rng, 3)
    t = unwrap_point(theta.p, x)
    dev = t - theta.mu
    manual = (
        -0.5 * theta.n * math.log(2.0 * math.pi)
        - 0.5 * theta.sigma.logdet()
        - 0.5 * float(dev @ np.linalg.solve(theta.sigma.matrix(), dev))
    )
    lj = log_jacobian_det(theta.p, log_map(theta.p, x))
    assert log_density(theta, x) == pytest.approx(manual - lj, rel=1e-11)
    assert density(theta, x) == pytest.approx(math.exp(manual - lj), rel=1e-10)


def test_density_broadcasts(rng):
    theta = small_params(rng, 2)
    xs = sample(theta, 5, rng=np.random.SeedSequence([3]))
    batch = log_density(theta, xs)
    assert batch.shape == (5,)
    assert np.allclose(batch, [log_density(theta, x) for x in xs], rtol=1e-12)


def test_elliptical_generator_gaussian_path_is_identical(rng):
    theta = small_params(rng, 2)
    xs = sample(theta, 10, rng=np.random.SeedSequence([5]))
    lg = log_density_ec(theta, EllipticalGenerator.gaussian(), xs)
    assert np.array_equal(lg, log_density(theta, xs))


def test_student_t_generator_approaches_gaussian(rng):
    theta = small_params(rng, 2)
    xs = sample(theta, 10, rng=np.random.SeedSequence([9]))
    heavy = log_density_ec(theta, EllipticalGenerator.student_t(1e8), xs)
    assert np.allclose(heavy, log_density(theta, xs), atol=1e-5)
    modest = log_density_ec(theta, EllipticalGenerator.student_t(3.0), xs)
    assert not np.allclose(modest, log_density(theta, xs), atol=1e-3)


def test_student_t_d1_integrates_to_one():
    theta = WgParams(
        np.array([[1.0]]), np.array([0.0]), Covariance.full(np.array([[0.7]]))
    )
    gen = EllipticalGenerator.student_t(4.0)
    s = np.linspace(-250.0, 250.0, 2000001)
    vals = np.exp(log_density_ec(theta, gen, np.exp(s)[:, None, None]))
    assert np.trapezoid(vals, s) == pytest.approx(1.0, abs=1e-4)


def test_generator_validation():
    with pytest.raises(InvalidInputError):
        EllipticalGenerator("gaussian", dof=3.0)
    with pytest.raises(InvalidInputError):
        EllipticalGenerator.student_t(0.0)
    with pytest.raises(InvalidInputError):
        EllipticalGenerator("cauchy")


# ---------------------------------------------------------------------------
# Equivalence class and standardization
# ---------------------------------------------------------------------------


def test_translate_class_leaves_density_unchanged(rng):
    theta = small_params(rng, 2)
    probes = sample(theta, 8, rng=np.random.SeedSequence([11]))
    base_vals = log_density(theta, probes)
    for t in (-2.0, -0.5, 0.3, 1.0, 4.0):
        shifted = translate_class(theta, t)
        assert np.allclose(shifted.p, math.exp(t) * theta.p)
        assert np.allclose(log_density(shifted, probes), base_vals, atol=1e-9)


def test_minimal_representative_is_orthogonal_and_idempotent(rng):
    theta = small_params(rng, 3)
    minimal = minimal_representative(theta)
    nu = diag_indicator(3)
    assert abs(float(minimal.mu @ nu)) < 1e-12
    again = minimal_representative(minimal)
    assert np.allclose(again.p, minimal.p, atol=1e-14)
    assert np.allclose(again.mu, minimal.mu, atol=1e-14)
    # the covariance rides along untouched
    assert np.array_equal(minimal.sigma.values, theta.sigma.values)
    probes = sample(theta, 4, rng=np.random.SeedSequence([13]))
    assert np.allclose(
        log_density(minimal, probes), log_density(theta, probes), atol=1e-9
    )


def test_diag_coord_sum_drives_the_minimal_shift(rng):
    theta = small_params(rng, 2)
    minimal = minimal_representative(theta)
    idx = diag_coord_indices(2)
    shift = float(np.sum(theta.mu[idx])) / 2.0
    assert np.allclose(minimal.p, math.exp(shift) * theta.p, rtol=1e-12)


def test_standardize_round_trip_and_law(rng):
    theta = small_params(rng, 2)
    xs = sample(theta, 20000, rng=np.random.SeedSequence([17]))
    ys = standardize_map(theta, xs)
    assert np.allclose(from_standard(theta, ys), xs, atol=1e-8)
    t = unwrap_point(np.eye(2), ys)
    assert np.allclose(t.mean(axis=0), 0.0, atol=0.03)
    assert np.allclose(np.cov(t, rowvar=False), np.eye(3), atol=0.04)


# ---------------------------------------------------------------------------
# Central limit statistic
# ---------------------------------------------------------------------------


def test_clt_statistic_single_sample_closed_form(rng):
    x = rand_spd(rng, 2)
    mu = 0.2 * rng.standard_normal(3)
    stat = clt_statistic(x[None], mu)
    expected = expm(logm(x) - unvectorize(np.eye(2), mu))
    assert np.allclose(stat, expected, atol=1e-12)


def test_clt_statistic_scales_by_root_n(rng):
    xs = np.stack([rand_spd(rng, 2) for _ in range(4)])
    mu = np.zeros(3)
    stat = clt_statistic(xs, mu)
    total = np.sum([logm(x) for x in xs], axis=0)
    assert np.allclose(logm(stat), total / 2.0, atol=1e-10)


def test_clt_statistic_at_base_point(rng):
    base = rand_spd(rng, 2)
    xs = np.stack([rand_spd(rng, 2) for _ in range(3)])
    mu = 0.1 * rng.standard_normal(3)
    stat = clt_statistic(xs, mu, base=base)
    shift = unvectorize(base, mu)
    total = np.sum([log_map(base, x) - shift for x in xs], axis=0)
    expected = exp_map(base, total / np.sqrt(3.0))
    assert np.allclose(stat, expected, atol=1e-10)


def test_clt_statistic_rejects_bad_shapes(rng):
    with pytest.raises(InvalidInputError):
        clt_statistic(rand_spd(rng, 2), np.zeros(3))
    with pytest.raises(InvalidInputError):
        clt_statistic(np.zeros((0, 2, 2)), np.zeros(3))


# ---------------------------------------------------------------------------
# Parameter container
# ---------------------------------------------------------------------------


def test_wg_params_validation(rng):
    p = rand_spd(rng, 2)
    sig = Covariance.diagonal(np.ones(3))
    with pytest.raises(DimensionMismatchError):
        WgParams(p, np.zeros(4), sig)
    with pytest.raises(DimensionMismatchError):
        WgParams(p, np.zeros(3), Covariance.diagonal(np.ones(4)))
    with pytest.raises(InvalidInputError):
        WgParams(p, np.array([np.nan, 0.0, 0.0]), sig)


def test_wg_params_dict_round_trip(rng):
    theta = small_params(rng, 2, kind="diagonal")
    back = WgParams.from_dict(theta.to_dict())
    assert np.array_equal(back.p, theta.p)
    assert np.array_equal(back.mu, theta.mu)
    assert back.sigma.kind == theta.sigma.kind
    assert np.array_equal(back.sigma.values, theta.sigma.values)
