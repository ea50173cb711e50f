"""Experiment configuration: defaults, INI layering, validation, generators."""

import numpy as np
import pytest

from spdgauss.exceptions import DataFormatError, DomainError, InvalidInputError
from spdgauss.geometry import diag_indicator
from spdgauss.harness.config import CLASSIFIER_NAMES, ExperimentConfig
from spdgauss.harness.synthetic import normalize_cov_kind, random_spd, random_wg_params
from spdgauss.linalg import validate_spd


# ---------------------------------------------------------------------------
# ExperimentConfig
# ---------------------------------------------------------------------------


def test_config_defaults_are_valid():
    config = ExperimentConfig()
    assert config.kind == "mle_curve"
    assert config.classifiers == CLASSIFIER_NAMES
    assert config.k_folds == 5
    assert config.seed == 0


def test_config_validation():
    with pytest.raises(InvalidInputError):
        ExperimentConfig(n_grid=())
    with pytest.raises(InvalidInputError):
        ExperimentConfig(n_grid=(1,))
    with pytest.raises(InvalidInputError):
        ExperimentConfig(k_folds=1)
    with pytest.raises(InvalidInputError):
        ExperimentConfig(classifiers=("mdm", "svm"))
    with pytest.raises(InvalidInputError):
        ExperimentConfig(strategy="quasi")
    with pytest.raises(InvalidInputError):
        ExperimentConfig(shrinkage=1.5)
    with pytest.raises(InvalidInputError):
        ExperimentConfig(threads=0)
    with pytest.raises(InvalidInputError):
        ExperimentConfig(kind="benchmarkery")


def test_config_updated_ignores_none():
    config = ExperimentConfig(d=3, seed=9)
    same = config.updated(d=None, seed=None)
    assert same == config
    changed = config.updated(d=4, cov_kind="diag")
    assert changed.d == 4
    assert changed.cov_kind == "diagonal"
    assert changed.seed == 9


def test_config_from_ini_layering(tmp_path):
    ini = tmp_path / "exp.ini"
    ini.write_text(
        "[experiment]\n"
        "d = 3\n"
        "seeds = 0, 1, 2\n"
        "cov_kind = diag\n"
        "deterministic = yes\n"
        "[override]\n"
        "d = 4\n"
    )
    config = ExperimentConfig.from_ini(ini)
    assert config.d == 4  # later sections win
    assert config.seeds == (0, 1, 2)
    assert config.cov_kind == "diagonal"
    assert config.deterministic is True


def test_config_from_ini_rejects_unknown_keys(tmp_path):
    ini = tmp_path / "bad.ini"
    ini.write_text("[x]\nwarp_speed = 9\n")
    with pytest.raises(DataFormatError):
        ExperimentConfig.from_ini(ini)


def test_config_from_ini_missing_file(tmp_path):
    with pytest.raises(DataFormatError):
        ExperimentConfig.from_ini(tmp_path / "none.ini")


def test_normalize_cov_kind():
    assert normalize_cov_kind("diag") == "diagonal"
    assert normalize_cov_kind("diagonal") == "diagonal"
    assert normalize_cov_kind("full") == "full"
    with pytest.raises(InvalidInputError):
        normalize_cov_kind("sparse")


# ---------------------------------------------------------------------------
# Synthetic generators
# ---------------------------------------------------------------------------


def test_random_spd_is_reproducible_and_valid():
    a = random_spd(3, seed=42)
    b = random_spd(3, seed=42)
    assert np.array_equal(a, b)
    validate_spd(a)
    c = random_spd(3, seed=43)
    assert not np.array_equal(a, c)


def test_random_spd_zero_spread_is_deterministic_scalar():
    got = random_spd(4, center=0.1, spread=0.0, seed=7)
    assert np.allclose(got, np.exp(0.01) * np.eye(4), atol=1e-12)


def test_random_wg_params_shapes_and_minimality():
    for d, kind in ((2, "full"), (3, "diagonal")):
        theta = random_wg_params(d, kind, seed=5)
        n = d * (d + 1) // 2
        assert theta.d == d
        assert theta.mu.shape == (n,)
        assert theta.sigma.kind == kind
        # generated parameters are minimal representatives
        assert abs(float(theta.mu @ diag_indicator(d))) < 1e-12


def test_random_wg_params_diagonal_entries_in_unit_interval():
    theta = random_wg_params(4, "diag", seed=11)
    assert np.all(theta.sigma.values > 0.0)
    assert np.all(theta.sigma.values <= 1.0)


def test_random_wg_params_same_seed_same_truth():
    a = random_wg_params(2, "full", seed=123)
    b = random_wg_params(2, "full", seed=123)
    assert np.array_equal(a.p, b.p)
    assert np.array_equal(a.mu, b.mu)
    assert np.array_equal(a.sigma.values, b.sigma.values)
