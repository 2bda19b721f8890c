from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from eigenzeros.models import random_points, sphere2_eigenbasis, circle_eigenbasis, fd_gradients
from eigenzeros.sampling import (haar_rotation, sample_subspace, system_eval, system_eval_and_jacobian,
                                 system_jacobian, trial_rng)


def test_trial_streams_are_reproducible_and_distinct():
    a = trial_rng(7, 3).standard_normal(5)
    assert np.array_equal(a, trial_rng(7, 3).standard_normal(5))
    assert not np.array_equal(a, trial_rng(7, 4).standard_normal(5))
    assert not np.array_equal(a, trial_rng(8, 3).standard_normal(5))


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 9), st.integers(0, 2 ** 32))
def test_haar_is_special_orthogonal(N, seed):
    R = haar_rotation(N, np.random.default_rng(seed))
    assert R @ R.T == pytest.approx(np.eye(N), abs=1e-12)
    assert np.linalg.det(R) == pytest.approx(1.0)


def test_haar_moments():
    rng = np.random.default_rng(5)
    N, draws = 4, 4000
    Rs = np.array([haar_rotation(N, rng) for _ in range(draws)])
    # E R = 0 and E R_ij^2 = 1/N
    assert np.max(np.abs(Rs.mean(axis=0))) < 5 / math.sqrt(N * draws)
    assert np.max(np.abs((Rs ** 2).mean(axis=0) - 1 / N)) < 0.02


def test_line_angle_uniform_in_plane():
    basis = circle_eigenbasis(1)
    ang = []
    for i in range(3000):
        c = sample_subspace(basis, 1, trial_rng(11, i)).coeffs[:, 0]
        ang.append(math.atan2(c[1], c[0]) % math.pi)  # a line, so angle mod pi
    assert stats.kstest(np.array(ang) / math.pi, "uniform").pvalue > 1e-3


def test_line_direction_law_is_rotation_invariant():
    # |<c, e>| is uniform on [0, 1] for a uniform line in R^3, in any fixed direction
    basis = sphere2_eigenbasis(1)
    R = haar_rotation(3, np.random.default_rng(99))
    raw, rot = [], []
    for i in range(4000):
        c = sample_subspace(basis, 1, trial_rng(12, i)).coeffs[:, 0]
        raw.append(abs(c[2]))
        rot.append(abs((R @ c)[2]))
    edges = np.linspace(0, 1, 11)
    for sample in (raw, rot):
        observed, _ = np.histogram(sample, edges)
        assert stats.chisquare(observed).pvalue > 1e-3


@pytest.mark.parametrize("k", [1, 2, 3])
def test_frames_are_orthonormal(k):
    basis = sphere2_eigenbasis(2)
    fr = sample_subspace(basis, k, trial_rng(0, 1))
    assert fr.k == k
    assert fr.coeffs.T @ fr.coeffs == pytest.approx(np.eye(k), abs=1e-12)
    with pytest.raises(ValueError):
        sample_subspace(basis, 6, trial_rng(0, 1))


def test_system_jacobian(torus2, rng):
    fr = sample_subspace(torus2, 2, rng)
    pts = random_points(torus2.model, 20, rng)
    J = system_jacobian(fr, torus2, pts)
    fd = np.einsum("pni,nk->pki", fd_gradients(torus2, pts), fr.coeffs)
    assert J == pytest.approx(fd, abs=1e-7)
    u, J2 = system_eval_and_jacobian(fr, torus2, pts)
    assert np.array_equal(u, system_eval(fr, torus2, pts))
    assert np.array_equal(J, J2)
