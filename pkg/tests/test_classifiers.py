"""Classifier behavior: decision rules, invariances, shared-base parity."""

import numpy as np
import pytest

from spdgauss.classifiers import (
    LabeledSpdDataset,
    MdmModel,
    TsdaModel,
    WdaModel,
    fit_mdm,
    fit_tsda,
    fit_wda,
    predict_log_proba,
    predict_mdm,
    predict_tsda,
    predict_wda,
)
from spdgauss.estimation import MleOptions, fit_mle, neg_log_lik
from spdgauss.exceptions import DimensionMismatchError, InvalidInputError
from spdgauss.geometry import congruence, karcher_mean
from spdgauss.wrapped import Covariance, WgParams, sample

from conftest import rand_spd


def two_class_data(rng, n_per: int = 40, spread: float = 0.05):
    p1 = np.eye(2)
    p2 = np.diag([20.0, 0.05])
    sig = Covariance.full(spread * np.eye(3))
    t1 = WgParams(p1, np.zeros(3), sig)
    t2 = WgParams(p2, np.zeros(3), sig)
    xs = np.concatenate(
        [
            sample(t1, n_per, rng=np.random.SeedSequence([41])),
            sample(t2, n_per, rng=np.random.SeedSequence([42])),
        ]
    )
    ys = np.array([0] * n_per + [1] * n_per)
    return LabeledSpdDataset(xs, ys, 2), (t1, t2)


# ---------------------------------------------------------------------------
# Dataset container
# ---------------------------------------------------------------------------


def test_dataset_validation(rng):
    mats = np.stack([rand_spd(rng, 2) for _ in range(4)])
    with pytest.raises(InvalidInputError):
        LabeledSpdDataset(mats, np.array([0, 1, 2, 3]), 3)  # label out of range
    with pytest.raises(InvalidInputError):
        LabeledSpdDataset(mats, np.array([0.5, 0, 1, 1]), 2)  # fractional label
    with pytest.raises(InvalidInputError):
        LabeledSpdDataset(mats, np.array([0, 0, 1]), 2)  # count mismatch
    data = LabeledSpdDataset(mats, np.array([1, 0, 1, 1]), 2)
    assert list(data.class_counts()) == [1, 3]
    assert len(data) == 4
    assert data.d == 2


def test_dataset_from_arrays_infers_label_space(rng):
    mats = np.stack([rand_spd(rng, 2) for _ in range(3)])
    data = LabeledSpdDataset.from_arrays(mats, [0, 2, 2])
    assert data.n_classes == 3
    sub = data.subset([0, 1])
    assert sub.n_classes == 3  # label space survives subsetting
    assert len(sub) == 2


# ---------------------------------------------------------------------------
# Minimum distance to mean
# ---------------------------------------------------------------------------


def test_mdm_separates_and_recovers_means(rng):
    data, _ = two_class_data(rng)
    model = fit_mdm(data)
    assert np.mean(predict_mdm(model, data.matrices) == data.labels) == 1.0
    for k in (0, 1):
        direct = karcher_mean(data.class_members(k))
        assert np.allclose(model.class_means[k], direct, atol=1e-9)


def test_mdm_single_matrix_and_tie_break(rng):
    mean = rand_spd(rng, 2)
    model = MdmModel(np.stack([mean, mean]), np.log([0.5, 0.5]))
    # equidistant from both identical means: smallest label wins
    assert predict_mdm(model, rand_spd(rng, 2)) == 0
    out = predict_mdm(model, np.stack([mean, mean, mean]))
    assert out.shape == (3,)
    assert np.all(out == 0)


def test_mdm_is_congruence_invariant(rng):
    data, _ = two_class_data(rng)
    model = fit_mdm(data)
    a = rng.standard_normal((2, 2)) + 3 * np.eye(2)
    probes = np.stack([rand_spd(rng, 2, scale=2.0) for _ in range(20)])
    moved = MdmModel(congruence(a, model.class_means), model.log_priors)
    assert np.array_equal(
        predict_mdm(moved, congruence(a, probes)), predict_mdm(model, probes)
    )


# ---------------------------------------------------------------------------
# Tangent-space discriminant analysis
# ---------------------------------------------------------------------------


def test_tsda_lda_and_qda_separate(rng):
    data, _ = two_class_data(rng)
    for kind in ("lda", "qda"):
        model = fit_tsda(data, kind=kind)
        assert np.mean(predict_tsda(model, data.matrices) == data.labels) == 1.0
    with pytest.raises(InvalidInputError):
        fit_tsda(data, kind="cubic")


def test_tsda_diag_variant(rng):
    data, _ = two_class_data(rng)
    model = fit_tsda(data, kind="qda", diag=True)
    assert model.diag
    assert model.cov[0].kind == "diagonal"
    assert np.mean(predict_tsda(model, data.matrices) == data.labels) == 1.0


def test_tsda_base_is_global_karcher_mean(rng):
    data, _ = two_class_data(rng)
    model = fit_tsda(data)
    assert np.allclose(model.base, karcher_mean(data.matrices), atol=1e-9)


def test_priors_follow_counts_unless_uniform(rng):
    mats = np.stack([rand_spd(rng, 2) for _ in range(6)])
    data = LabeledSpdDataset(mats, np.array([0, 0, 0, 0, 1, 1]), 2)
    model = fit_tsda(data)
    assert np.allclose(model.log_priors, np.log([4.0 / 6.0, 2.0 / 6.0]))
    uniform = fit_tsda(data, uniform_priors=True)
    assert np.allclose(uniform.log_priors, np.log([0.5, 0.5]))


# ---------------------------------------------------------------------------
# Wrapped discriminant analysis
# ---------------------------------------------------------------------------


def test_hewda_separates_and_stores_minimal_params(rng):
    data, _ = two_class_data(rng)
    model = fit_wda(data, shared_sigma=False, options=MleOptions(max_iter=200))
    assert not model.shared_sigma
    assert np.mean(predict_wda(model, data.matrices) == data.labels) == 1.0
    from spdgauss.geometry import diag_indicator

    nu = diag_indicator(2)
    for theta in model.class_params:
        assert abs(float(theta.mu @ nu)) < 1e-10


def test_howda_shares_one_covariance_and_descends(rng):
    data, _ = two_class_data(rng, n_per=30)
    model = fit_wda(data, shared_sigma=True, options=MleOptions(max_iter=150))
    assert model.shared_sigma
    s0, s1 = model.class_params[0].sigma, model.class_params[1].sigma
    assert np.array_equal(s0.values, s1.values)
    trace = model.fit_cost_trace
    assert len(trace) >= 2
    assert all(b <= a + 1e-12 for a, b in zip(trace, trace[1:]))
    assert np.mean(predict_wda(model, data.matrices) == data.labels) == 1.0


def test_howda_single_class_matches_plain_mle(rng):
    # with one class the alternation and the plain fit solve the same
    # problem; both may stall on the flat basin floor, so compare the
    # achieved per-sample likelihood rather than the iterates
    theta = WgParams(rand_spd(rng, 2), np.zeros(3), Covariance.full(0.1 * np.eye(3)))
    xs = sample(theta, 60, rng=np.random.SeedSequence([55]))
    data = LabeledSpdDataset(xs, np.zeros(60, dtype=int), 1)
    model = fit_wda(data, shared_sigma=True)
    direct, _ = fit_mle(xs)
    got = neg_log_lik(model.class_params[0], xs) / 60.0
    ref = neg_log_lik(direct, xs) / 60.0
    assert got == pytest.approx(ref, abs=2e-3)


# ---------------------------------------------------------------------------
# Shared-base parity between tangent and wrapped discriminants
# ---------------------------------------------------------------------------


def test_wda_at_common_base_equals_tsda(rng):
    # when every class sits at one base point the per-class Jacobian terms
    # coincide and cancel from the argmax, leaving exactly the tangent rule
    base = rand_spd(rng, 2)
    mus = np.stack([0.4 * rng.standard_normal(3) for _ in range(3)])
    shared = Covariance.full(0.3 * np.eye(3) + 0.05)
    log_priors = np.log([0.2, 0.5, 0.3])
    tsda = TsdaModel(base, mus, shared, "lda", False, log_priors)
    wda = WdaModel(
        tuple(WgParams(base, mu, shared) for mu in mus), True, log_priors, 0, ()
    )
    probes = sample(
        WgParams(base, np.zeros(3), Covariance.full(np.eye(3))),
        200,
        rng=np.random.SeedSequence([66]),
    )
    assert np.array_equal(predict_wda(wda, probes), predict_tsda(tsda, probes))

    covs = tuple(
        Covariance.full(0.2 * np.eye(3) + 0.1 * k * np.diag([1.0, 0.5, 0.25]))
        for k in range(3)
    )
    tsda_q = TsdaModel(base, mus, covs, "qda", False, log_priors)
    wda_q = WdaModel(
        tuple(WgParams(base, mu, c) for mu, c in zip(mus, covs)),
        False,
        log_priors,
        0,
        (),
    )
    assert np.array_equal(predict_wda(wda_q, probes), predict_tsda(tsda_q, probes))


# ---------------------------------------------------------------------------
# Posterior probabilities
# ---------------------------------------------------------------------------


def test_log_proba_normalizes_and_matches_argmax(rng):
    data, _ = two_class_data(rng)
    model = fit_tsda(data)
    probes = data.matrices[::5]
    lp = predict_log_proba(model, probes)
    assert lp.shape == (len(probes), 2)
    assert np.allclose(np.exp(lp).sum(axis=-1), 1.0, atol=1e-12)
    assert np.array_equal(np.argmax(lp, axis=-1), predict_tsda(model, probes))
    single = predict_log_proba(model, probes[0])
    assert single.shape == (2,)
    with pytest.raises(InvalidInputError):
        predict_log_proba(fit_mdm(data), probes)


# ---------------------------------------------------------------------------
# Error paths and shape handling
# ---------------------------------------------------------------------------


def test_empty_class_is_rejected(rng):
    mats = np.stack([rand_spd(rng, 2) for _ in range(4)])
    data = LabeledSpdDataset(mats, np.array([0, 0, 0, 0]), 2)
    for fitter in (fit_mdm, fit_tsda, fit_wda):
        with pytest.raises(InvalidInputError, match="class 1"):
            fitter(data)


def test_predict_dimension_mismatch(rng):
    data, _ = two_class_data(rng)
    model = fit_mdm(data)
    with pytest.raises(DimensionMismatchError):
        predict_mdm(model, rand_spd(rng, 3))


def test_indistinguishable_classes_stay_near_chance(rng):
    # one distribution, labels assigned at random: no rule can do better
    # than the larger prior; verify nothing overfits its way above it
    theta = WgParams(np.eye(2), np.zeros(3), Covariance.full(0.2 * np.eye(3)))
    xs = sample(theta, 300, rng=np.random.SeedSequence([77]))
    ys = np.random.default_rng(7).integers(0, 2, 300)
    data = LabeledSpdDataset(xs, ys, 2)
    holdout = sample(theta, 400, rng=np.random.SeedSequence([78]))
    hold_labels = np.random.default_rng(8).integers(0, 2, 400)
    model = fit_tsda(data)
    acc = np.mean(predict_tsda(model, holdout) == hold_labels)
    assert 0.35 < acc < 0.65


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def test_model_dict_round_trips(rng):
    data, _ = two_class_data(rng, n_per=20)
    probes = data.matrices[::3]

    mdm = fit_mdm(data)
    mdm2 = MdmModel.from_dict(mdm.to_dict())
    assert np.array_equal(predict_mdm(mdm2, probes), predict_mdm(mdm, probes))

    tsda = fit_tsda(data, kind="qda")
    tsda2 = TsdaModel.from_dict(tsda.to_dict())
    assert np.array_equal(predict_tsda(tsda2, probes), predict_tsda(tsda, probes))
    assert np.array_equal(tsda2.class_mu, tsda.class_mu)

    wda = fit_wda(data, shared_sigma=False, options=MleOptions(max_iter=100))
    wda2 = WdaModel.from_dict(wda.to_dict())
    assert np.array_equal(predict_wda(wda2, probes), predict_wda(wda, probes))
    assert wda2.shared_sigma == wda.shared_sigma
