from __future__ import annotations

import math
from dataclasses import replace

import numpy as np
import pytest

from eigenzeros.errors import DegenerateFrame
from eigenzeros.models import (aspect_torus, circle_eigenbasis, geodesic_distance, rotated_basis,
                               sphere2_eigenbasis, torus_eigenbasis)
from eigenzeros.sampling import SubspaceFrame, haar_rotation, sample_subspace, system_eval, trial_rng
from eigenzeros.zeros import (ZeroOptions, count_zeros_degenerate_check, count_zeros_newton,
                              torus_reduction_oracle, torus_reduction_zeros)


def _frame(N, *columns):
    c = np.zeros((N, len(columns)))
    for j, i in enumerate(columns):
        c[i, j] = 1.0
    return SubspaceFrame(c)


def test_coordinate_pair_has_eight_zeros(torus2):
    # sin x cos 2y = 0 = cos x sin 2y
    fr = _frame(4, 0, 3)
    assert torus_reduction_oracle(fr, torus2) == 8
    z = count_zeros_newton(fr, torus2)
    assert z.count == 8 and z.certified


def test_shared_factor_is_degenerate(torus2):
    # sin x cos 2y and sin x sin 2y vanish together on the circles sin x = 0
    with pytest.raises(DegenerateFrame):
        torus_reduction_zeros(_frame(4, 0, 1), torus2)
    assert count_zeros_degenerate_check(_frame(4, 0, 1), torus2) == math.inf


@pytest.mark.parametrize("a", [1.0, 2.0, 1.5])
def test_newton_matches_reduction(a):
    basis = torus_eigenbasis(aspect_torus(a), (1, 1))
    for i in range(40):
        fr = sample_subspace(basis, 2, trial_rng(3, i))
        z = count_zeros_newton(fr, basis)
        exact = torus_reduction_zeros(fr, basis)
        assert z.certified
        assert z.count == len(exact)
        if len(exact):
            assert geodesic_distance(basis.model, exact, z.points).min(axis=1).max() < 1e-8


def test_zeros_are_zeros(torus2):
    fr = sample_subspace(torus2, 2, trial_rng(4, 0))
    z = count_zeros_newton(fr, torus2)
    assert np.max(np.abs(system_eval(fr, torus2, z.points))) < 1e-10


@pytest.mark.parametrize("l", [1, 2, 7])
def test_circle_has_2l_zeros(l):
    basis = circle_eigenbasis(l)
    for i in range(20):
        assert count_zeros_newton(sample_subspace(basis, 1, trial_rng(5, i)), basis).count == 2 * l


def test_sphere_degree_one_has_antipodal_pair():
    basis = sphere2_eigenbasis(1)
    z = count_zeros_newton(sample_subspace(basis, 2, trial_rng(6, 0)), basis)
    assert z.count == 2
    assert z.points[0] == pytest.approx(-z.points[1], abs=1e-10)


@pytest.mark.parametrize("l", [2, 3])
def test_seed_density_does_not_change_counts(l):
    basis = sphere2_eigenbasis(l)
    fine = ZeroOptions(grid_per_wavelength=16)
    for i in range(15):
        fr = sample_subspace(basis, 2, trial_rng(7, i))
        assert count_zeros_newton(fr, basis).count == count_zeros_newton(fr, basis, fine).count


def test_rotation_equivariance():
    basis = sphere2_eigenbasis(3)
    R = haar_rotation(3, np.random.default_rng(8))
    turned = rotated_basis(basis, R)
    for i in range(5):
        fr = sample_subspace(basis, 2, trial_rng(9, i))
        z = count_zeros_newton(fr, basis)
        zr = count_zeros_newton(fr, turned)
        assert z.count == zr.count
        # zeros of f(R^T x) are R times the zeros of f
        d = geodesic_distance(basis.model, z.points @ R.T, zr.points)
        assert d.min(axis=1).max() < 1e-8


def test_square_system_required(torus2):
    with pytest.raises(ValueError):
        count_zeros_newton(sample_subspace(torus2, 1, trial_rng(0, 0)), torus2)


def test_partial_frequency_basis_has_no_isolated_zeros():
    basis = torus_eigenbasis(aspect_torus(2.0), (1, 0))
    for i in range(10):
        c = count_zeros_degenerate_check(sample_subspace(basis, 2, trial_rng(10, i)), basis)
        assert c == 0 or c == math.inf


def test_transversality_reported(torus2):
    z = count_zeros_newton(_frame(4, 0, 3), torus2)
    assert z.min_jacobian_det > ZeroOptions().transversality_tol
    assert len(z.jacobian_dets) == z.count
