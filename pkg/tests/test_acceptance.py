"""Acceptance criteria, each at its stated tolerance and runtime."""

from __future__ import annotations

import math
import time

import numpy as np
import pytest

from conftest import record_criterion
from eigenzeros.averaging import (EQUALITY, STRICT, Region, mean_and_stderr, run_degenerate_average,
                                  run_local_average, run_nodal_average, run_zero_average)
from eigenzeros.cli import verify_identities
from eigenzeros.crofton import (crofton_average, embed_image_mesh, great_circle_mesh, small_circle_mesh)
from eigenzeros.embedding import beta_spectrum
from eigenzeros.models import aspect_torus, circle_eigenbasis, sphere2_eigenbasis, torus_eigenbasis
from eigenzeros.nodal import nodal_length_s2
from eigenzeros.sampling import sample_subspace, trial_rng
from eigenzeros.zeros import count_zeros_newton, torus_reduction_oracle

SEED = 20240601
TWO_PI = 2 * math.pi


def _torus(a):
    return torus_eigenbasis(aspect_torus(a), (1, 1))


@pytest.fixture(scope="module")
def torus_a2_report():
    return run_zero_average(_torus(2.0), 2000, SEED, threads=1)


def test_criterion_01_circle_exactness():
    rep = run_zero_average(circle_eigenbasis(5), 200, SEED)
    counts = {r["count"] for r in rep.per_trial}
    ok = (counts == {10} and rep.stderr == 0 and rep.bound == pytest.approx(10)
          and rep.verdict == EQUALITY and rep.elapsed_seconds < 1.0)
    assert record_criterion(1, ok, f"counts {sorted(counts)}, stderr {rep.stderr}, bound {rep.bound:.6g}, "
                                   f"{rep.elapsed_seconds:.2f} s")


def test_criterion_02_sphere_degree_one():
    rep = run_zero_average(sphere2_eigenbasis(1), 2000, SEED)
    counts = {r["count"] for r in rep.per_trial if r["certified"]}
    ok = (counts == {2} and rep.theory == pytest.approx(2) and rep.bound == pytest.approx(2)
          and rep.elapsed_seconds < 30)
    assert record_criterion(2, ok, f"certified counts {sorted(counts)}, {rep.elapsed_seconds:.1f} s")


@pytest.mark.parametrize("number,l,target,tol,limit", [(3, 2, 6.0, 0.3, 300), (4, 3, 12.0, 0.6, 600)])
def test_criteria_03_04_sphere_equality(number, l, target, tol, limit):
    rep = run_zero_average(sphere2_eigenbasis(l), 2000, SEED)
    ok = (abs(rep.estimate - target) <= 3 * rep.stderr and abs(rep.estimate - target) < tol
          and rep.verdict == EQUALITY and rep.elapsed_seconds < limit)
    assert record_criterion(number, ok, f"l={l}: {rep.estimate:.4f} +/- {rep.stderr:.4f} vs {target:g}, "
                                        f"{rep.verdict}, {rep.elapsed_seconds:.1f} s")


def test_criterion_05_torus_strictness(torus_a2_report):
    rep = torus_a2_report
    basis = _torus(2.0)
    oracle = []
    for row in rep.per_trial:
        frame = sample_subspace(basis, 2, trial_rng(SEED, row["trial"]))
        oracle.append(torus_reduction_oracle(frame, basis))
    certified = [(r["count"], o) for r, o in zip(rep.per_trial, oracle) if r["certified"]]
    matches = sum(a == b for a, b in certified)
    om, os_ = mean_and_stderr(oracle)
    ok = (abs(rep.estimate - TWO_PI) <= 3 * rep.stderr
          and rep.estimate + 3 * rep.stderr < 2.5 * math.pi
          and rep.bound == pytest.approx(2.5 * math.pi)
          and rep.verdict == STRICT
          and matches == len(certified)
          and abs(om - rep.estimate) <= 3 * math.hypot(os_, rep.stderr))
    assert record_criterion(5, ok, f"{rep.estimate:.4f} +/- {rep.stderr:.4f}, bound {rep.bound:.4f}, "
                                   f"{rep.verdict}; oracle {om:.4f}, per-trial match "
                                   f"{matches}/{len(certified)}")


def test_criterion_06_torus_equality():
    rep = run_zero_average(_torus(1.0), 2000, SEED + 1)
    ok = (abs(rep.estimate - TWO_PI) <= 3 * rep.stderr and rep.bound == pytest.approx(TWO_PI)
          and rep.verdict == EQUALITY)
    assert record_criterion(6, ok, f"{rep.estimate:.4f} +/- {rep.stderr:.4f}, bound {rep.bound:.4f}, "
                                   f"{rep.verdict}")


def test_criterion_07_degenerate():
    basis = torus_eigenbasis(aspect_torus(2.0), (1, 0))
    rep = run_degenerate_average(basis, 500, SEED)
    counts = {r["count"] for r in rep.per_trial}
    ok = counts == {0} and rep.estimate == 0 and rep.elapsed_seconds < 5
    assert record_criterion(7, ok, f"counts {sorted(counts, key=str)}, estimate {rep.estimate}, "
                                   f"{rep.elapsed_seconds:.2f} s")


def test_criterion_08_identities():
    bases = ([circle_eigenbasis(l) for l in (1, 2, 5)] + [sphere2_eigenbasis(l) for l in (1, 2, 3, 4)]
             + [_torus(a) for a in (1.0, 2.0, 1.5, 0.5)])
    failures = []
    for b in bases:
        rep = verify_identities(b, points=10_000)
        for name in ("unsold_max_residual", "gram_deviation", "trace_residual"):
            if not rep["checks"][name]["ok"]:
                failures.append(f"{b.label}:{name}")
    for a in (1.0, 2.0, 1.5, 0.5):
        betas = sorted(beta_spectrum(_torus(a)).betas)
        if not np.allclose(betas, sorted([1.0, a * a]), rtol=0, atol=1e-6):
            failures.append(f"torus a={a}: betas {betas}")
    assert record_criterion(8, not failures, f"{len(bases)} bases checked; failures: {failures or 'none'}")


def test_criterion_09_nodal_lengths():
    one = run_nodal_average(sphere2_eigenbasis(1), 1, 500, SEED)
    worst = max(abs(r["length"] - TWO_PI) / TWO_PI for r in one.per_trial)
    two = run_nodal_average(sphere2_eigenbasis(2), 1, 500, SEED)
    exact2 = TWO_PI * math.sqrt(3)
    zonal = np.zeros(5)
    zonal[2] = 1.0
    y20 = nodal_length_s2(zonal, sphere2_eigenbasis(2))
    exact_y20 = 4 * math.pi * math.sqrt(2 / 3)
    ok = (one.uncertified == 0 and worst <= 0.01 and abs(two.estimate - exact2) <= 0.02 * exact2
          and abs(y20 - exact_y20) <= 0.01 * exact_y20)
    assert record_criterion(9, ok, f"l=1 worst rel err {worst:.2e}; l=2 mean {two.estimate:.4f} vs "
                                   f"{exact2:.4f}; Y20 {y20:.4f} vs {exact_y20:.4f}")


def test_criterion_10_crofton(torus_a2_report):
    t0 = time.perf_counter()
    great = crofton_average(great_circle_mesh(), 10_000, SEED)
    small = crofton_average(small_circle_mesh(math.pi / 6), 10_000, SEED)
    mesh = embed_image_mesh(_torus(2.0), 64)
    image = crofton_average(mesh, 10_000, SEED)
    elapsed = time.perf_counter() - t0
    z = torus_a2_report
    area = mesh.total_volume
    ok = (all(r["count"] == 2 for r in great.per_trial) and great.estimate == 2
          and abs(small.estimate - 1.0) <= 3 * small.stderr
          and abs(area - 4 * math.pi ** 2) <= 0.01 * 4 * math.pi ** 2
          and abs(image.estimate - TWO_PI) <= 3 * image.stderr
          and abs(image.estimate - z.estimate) <= 3 * math.hypot(image.stderr, z.stderr)
          and elapsed < 300)
    assert record_criterion(10, ok, f"great {great.estimate:g}; small {small.estimate:.4f} +/- "
                                    f"{small.stderr:.4f}; image area {area:.4f} vs {4 * math.pi ** 2:.4f}; "
                                    f"image {image.estimate:.4f} +/- {image.stderr:.4f} vs zeros "
                                    f"{z.estimate:.4f}; {elapsed:.1f} s")


def test_criterion_11_local():
    rect = Region.rectangle(0, math.pi, 0, math.pi / 2)
    tor = run_local_average(_torus(2.0), rect, 2000, SEED + 2)
    cap = Region.cap((0, 0, 1), math.pi / 2)
    sph = run_local_average(sphere2_eigenbasis(2), cap, 2000, SEED + 3)
    ok = (rect.volume(_torus(2.0)) == pytest.approx(math.pi ** 2 / 2)
          and abs(tor.estimate - math.pi / 2) <= 3 * tor.stderr
          and abs(sph.estimate - 3.0) <= 3 * sph.stderr)
    assert record_criterion(11, ok, f"torus rectangle {tor.estimate:.4f} +/- {tor.stderr:.4f} vs "
                                    f"{math.pi / 2:.4f}; hemisphere {sph.estimate:.4f} +/- "
                                    f"{sph.stderr:.4f} vs 3")


def test_criterion_12_reproducibility(torus_a2_report):
    many = run_zero_average(_torus(2.0), 2000, SEED, threads=8)
    same = torus_a2_report.to_json(timing=False) == many.to_json(timing=False)
    assert record_criterion(12, same, f"1 vs 8 threads, report JSON identical: {same}")
