import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vbgpcm import (CovDecomposition, Dataset, MixturePoint, ModelId, free_covariance_params,
                    log_gaussian_density, mixture_log_likelihood, reconstruct_sigma)
from vbgpcm.models import Constraint, UnsupportedModelError


def rotation(t):
    return np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])


@pytest.mark.parametrize("model,expected", [("EII", 1), ("VVV", 9), ("VEV", 7)])
def test_free_covariance_params_table_values(model, expected):
    assert free_covariance_params(model, 3, 2) == expected


def test_unsupported_models_raise():
    for name in ("EVE", "VVE", "XYZ"):
        with pytest.raises(UnsupportedModelError):
            ModelId.parse(name)
    assert len(ModelId) == 12


def test_constraint_letters():
    assert ModelId.VEI.volume is Constraint.VARIABLE
    assert ModelId.VEI.shape is Constraint.EQUAL
    assert ModelId.VEI.orientation is Constraint.NONE
    assert ModelId.VII.shape is Constraint.NONE
    assert ModelId.EEV.uses_gibbs and ModelId.VEV.uses_gibbs
    assert not ModelId.VVV.uses_gibbs


def test_reconstruct_identity_and_diagonal():
    dec = CovDecomposition(lam=[2.0], A=[[1.0, 1.0]], D=np.eye(2))
    np.testing.assert_allclose(reconstruct_sigma(dec, 0), 2 * np.eye(2))
    dec = CovDecomposition(lam=[1.0], A=[[2.0, 0.5]], D=np.eye(2))
    np.testing.assert_allclose(reconstruct_sigma(dec, 0), np.diag([2.0, 0.5]))


def test_reconstruct_rotated_matches_direct_product():
    R = rotation(math.pi / 4)
    dec = CovDecomposition(lam=[1.0], A=[[2.0, 0.5]], D=R)
    S = reconstruct_sigma(dec, 0)
    # hand product: R diag(2, .5) R'
    expected = R @ np.diag([2.0, 0.5]) @ R.T
    np.testing.assert_allclose(S, expected, atol=1e-14)
    assert S[0, 1] == pytest.approx(0.75)


def test_decomposition_rejects_bad_shapes():
    with pytest.raises(ValueError):
        CovDecomposition(lam=[1.0], A=[[2.0, 2.0]], D=np.eye(2))
    with pytest.raises(ValueError):
        CovDecomposition(lam=[1.0], A=[[1.0, 1.0]], D=np.ones((2, 2)))


@settings(max_examples=50, deadline=None)
@given(lam=st.floats(0.1, 10), a=st.floats(0.2, 5), t=st.floats(0, 2 * math.pi))
def test_reconstruct_is_spd_with_volume_determinant(lam, a, t):
    dec = CovDecomposition(lam=[lam], A=[[a, 1 / a]], D=rotation(t))
    S = reconstruct_sigma(dec, 0)
    assert np.all(np.linalg.eigvalsh(S) > 0)
    assert np.linalg.det(S) == pytest.approx(lam ** 2, rel=1e-9)


def test_log_density_examples():
    assert log_gaussian_density([0.0], [0.0], [[1.0]]) == pytest.approx(-0.9189385332046727)
    T = np.array([[2.0, 0.3], [0.3, 1.0]])
    assert log_gaussian_density([1, 2], [1, 2], T) == pytest.approx(
        -math.log(2 * math.pi) + 0.5 * math.log(np.linalg.det(T)))
    assert log_gaussian_density([1, 0], [0, 0], np.eye(2)) == pytest.approx(
        -2 * 0.9189385332046727 - 0.5)


def test_log_density_rejects_non_spd():
    with pytest.raises(ValueError):
        log_gaussian_density([0, 0], [0, 0], [[1.0, 2.0], [2.0, 1.0]])


def test_mixture_loglik_single_and_duplicated(rng):
    Y = rng.normal(size=(7, 2))
    T = np.array([[1.5, 0.2], [0.2, 0.7]])
    one = MixturePoint([1.0], [[0.1, -0.2]], T)
    direct = sum(log_gaussian_density(y, [0.1, -0.2], T) for y in Y)
    assert mixture_log_likelihood(Y, one) == pytest.approx(direct)
    two = MixturePoint([0.5, 0.5], [[0.1, -0.2]] * 2, [T, T])
    assert mixture_log_likelihood(Y, two) == pytest.approx(direct)


def test_mixture_loglik_naive_double_loop():
    Y = np.array([[0.0, 0.0], [1.0, 2.0], [-1.0, 0.5]])
    rho = np.array([0.3, 0.7])
    mu = np.array([[0.0, 0.0], [1.0, 1.0]])
    T = np.array([np.eye(2), [[2.0, 0.5], [0.5, 1.0]]])
    naive = 0.0
    for y in Y:
        s = 0.0
        for g in range(2):
            r = y - mu[g]
            s += rho[g] * math.sqrt(np.linalg.det(T[g])) / (2 * math.pi) * math.exp(-0.5 * r @ T[g] @ r)
        naive += math.log(s)
    assert mixture_log_likelihood(Dataset(Y), MixturePoint(rho, mu, T)) == pytest.approx(naive, rel=1e-12)


def test_mixture_point_validation():
    with pytest.raises(ValueError):
        MixturePoint([0.5, 0.6], [[0.0], [1.0]], [[[1.0]], [[1.0]]])
    with pytest.raises(ValueError):
        MixturePoint([1.0], [[0.0], [1.0]], [[[1.0]]])


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset(np.array([[np.nan, 1.0]]))
    with pytest.raises(ValueError):
        Dataset(np.zeros((3, 2)), labels=[1, 2])
    ds = Dataset(np.zeros((3, 2)), labels=[0, 2, 1])
    assert ds.known.tolist() == [False, True, True]
