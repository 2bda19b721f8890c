from __future__ import annotations

import json
from dataclasses import replace

import numpy as np
import pytest
import yaml

from eigenzeros.cli import (EXIT_CONFIG, EXIT_INCONSISTENT, EXIT_NUMERICAL, EXIT_OK, bundled_suite, load_suite,
                            main, run_suite, verify_identities)
from eigenzeros.config import ExperimentConfig
from eigenzeros.errors import ConfigError
from eigenzeros.models import sphere2_eigenbasis


def _suite(tmp_path, entries):
    p = tmp_path / "suite.yaml"
    p.write_text(yaml.safe_dump({"experiments": entries}))
    return p


CIRCLE = {"experiment": "zeros", "model": {"kind": "circle"}, "basis": {"l": 5}, "trials": 200}


# --- config ---------------------------------------------------------------

def test_unknown_keys_rejected():
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({**CIRCLE, "tirals": 5})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({**CIRCLE, "model": {"kind": "circle", "radius": 2}})
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({**CIRCLE, "zeros": {"grid": 3}})


def test_bad_values_rejected():
    for bad in ({"trials": 0}, {"seed": -1}, {"threads": 0}, {"experiment": "volume"},
                {"model": {"kind": "klein"}}, {"trials": "ten"}):
        with pytest.raises(ConfigError):
            ExperimentConfig.from_dict({**CIRCLE, **bad})


def test_hash_ignores_threads_and_outputs():
    a = ExperimentConfig.from_dict({**CIRCLE, "threads": 1})
    b = ExperimentConfig.from_dict({**CIRCLE, "threads": 8, "output": {"report": "x.json"}})
    c = ExperimentConfig.from_dict({**CIRCLE, "seed": 3})
    assert a.hash() == b.hash() != c.hash()


def test_torus_model_forms():
    cfg = ExperimentConfig.from_dict({"experiment": "zeros", "model": {"kind": "torus", "periods": ["2pi", "pi"]},
                                      "basis": {"frequency": [1, 1]}})
    assert cfg.build_basis().lam == pytest.approx(5.0)
    with pytest.raises(ConfigError):
        ExperimentConfig.from_dict({"model": {"kind": "torus", "a": 2, "periods": [1, 1]}}).build_basis()


# --- identities -----------------------------------------------------------

def test_identities_pass_for_sphere():
    rep = verify_identities(sphere2_eigenbasis(3))
    assert rep["ok"]
    assert rep["betas"] == pytest.approx([6.0, 6.0], abs=1e-6)


def test_identities_fail_for_misscaled_basis():
    b = sphere2_eigenbasis(2)
    bad = replace(b, transform=1.1 * b.transform)
    rep = verify_identities(bad, points=1000)
    assert not rep["ok"]
    assert not rep["checks"]["unsold_max_residual"]["ok"]
    assert not rep["checks"]["gram_deviation"]["ok"]


def test_bases_verify_exit_codes(capsys):
    assert main(["bases", "verify", "--model", "torus", "--a", "2"]) == EXIT_OK
    assert "unsold_max_residual" in capsys.readouterr().out
    assert main(["bases", "verify", "--model", "torus", "--a", "2", "--indices", "0,1"]) == EXIT_INCONSISTENT


def test_embed_check_json(capsys):
    assert main(["embed", "check", "--model", "sphere", "--l", "2", "--points", "500"]) == EXIT_OK
    rep = json.loads(capsys.readouterr().out)
    assert rep["predicted_average"] == pytest.approx(6.0)
    assert rep["weyl_bound"] == pytest.approx(6.0)


# --- average --------------------------------------------------------------

def test_average_writes_report_and_csv(tmp_path, capsys):
    out, rows = tmp_path / "r.json", tmp_path / "t.csv"
    code = main(["average", "zeros", "--model", "circle", "--l", "5", "--trials", "200", "--seed", "4",
                 "--out", str(out), "--csv", str(rows)])
    assert code == EXIT_OK
    rep = json.loads(out.read_text())
    assert rep["estimate"] == 10 and rep["verdict"] == "EqualityConfirmed"
    assert rep["config"]["seed"] == 4
    assert rows.read_text().splitlines()[0].startswith("trial,count")
    assert len(rows.read_text().splitlines()) == 201


def test_report_reruns_bit_exactly(tmp_path):
    first, second = tmp_path / "a.json", tmp_path / "b.json"
    main(["average", "zeros", "--model", "torus", "--a", "2", "--trials", "20", "--seed", "9",
          "--out", str(first)])
    main(["average", "zeros", "--config", str(first), "--threads", "3", "--out", str(second)])
    a, b = json.loads(first.read_text()), json.loads(second.read_text())
    a.pop("elapsed_seconds"), b.pop("elapsed_seconds")
    assert a == b


def test_flags_override_file(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(yaml.safe_dump({**CIRCLE, "trials": 3}))
    out = tmp_path / "r.json"
    main(["average", "zeros", "--config", str(cfg), "--l", "2", "--trials", "7", "--out", str(out)])
    rep = json.loads(out.read_text())
    assert rep["trials"] == 7 and rep["estimate"] == 4


def test_config_error_exit(capsys):
    assert main(["average", "zeros", "--model", "torus", "--a", "1", "--frequency", "1,0"]) == EXIT_CONFIG
    assert main(["average", "local", "--model", "sphere", "--l", "2", "--trials", "5"]) == EXIT_CONFIG
    assert main(["average", "local", "--model", "sphere", "--l", "2", "--region", "rect:0,1,0,1",
                 "--trials", "5"]) == EXIT_CONFIG


def test_numerical_failure_exit(capsys):
    code = main(["average", "nodal", "--model", "sphere", "--l", "2", "--mesh-start", "2",
                 "--refine-limit", "2", "--trials", "5"])
    assert code == EXIT_NUMERICAL


def test_inconsistent_exit(capsys):
    # too few trials for a 3-sigma verdict
    assert main(["average", "zeros", "--model", "torus", "--a", "2", "--trials", "10"]) == EXIT_INCONSISTENT


def test_thread_env(monkeypatch, tmp_path):
    monkeypatch.setenv("EIGENZEROS_THREADS", "3")
    out = tmp_path / "r.json"
    assert main(["average", "zeros", "--model", "circle", "--l", "2", "--trials", "10", "--out", str(out)]) == 0
    monkeypatch.setenv("EIGENZEROS_THREADS", "many")
    assert main(["average", "zeros", "--model", "circle", "--l", "2", "--trials", "10"]) == EXIT_CONFIG


# --- crofton --------------------------------------------------------------

def test_crofton_export_and_run(tmp_path, capsys):
    mesh = tmp_path / "torus.mesh"
    assert main(["crofton", "export", "--model", "torus", "--a", "2", "--resolution", "16",
                 "--out", str(mesh)]) == EXIT_OK
    assert mesh.read_text().startswith("4 2\n")
    code = main(["crofton", "run", "--mesh", "great-circle", "--trials", "500", "--seed", "1"])
    assert code == EXIT_OK
    assert "estimate 2 " in capsys.readouterr().out
    assert main(["crofton", "run", "--mesh", str(tmp_path / "missing.mesh"), "--trials", "5"]) == EXIT_CONFIG


# --- suites ---------------------------------------------------------------

def test_bundled_suite_parses():
    entries = load_suite(bundled_suite())
    assert len(entries) >= 10
    assert all(ExperimentConfig.from_dict({**e["config"], "seed": 1}) for e in entries)


def test_empty_suite_is_config_error(tmp_path, capsys):
    p = tmp_path / "empty.yaml"
    p.write_text("experiments: []\n")
    assert main(["suite", "run", "--suite", str(p), "--seed", "1"]) == EXIT_CONFIG


def test_suite_requires_seed(tmp_path):
    with pytest.raises(SystemExit):
        main(["suite", "run", "--suite", str(tmp_path / "x.yaml")])


def test_small_suite_passes(tmp_path, capsys):
    p = _suite(tmp_path, [{"name": "circle", "expect": "EqualityConfirmed", "every_trial": 10, "config": CIRCLE}])
    assert run_suite(p, seed=1) == EXIT_OK
    out = capsys.readouterr().out
    assert "circle" in out and "pass" in out


def test_wrong_expectation_fails_but_others_run(tmp_path, capsys):
    torus = {"experiment": "zeros", "model": {"kind": "torus", "a": 2}, "basis": {"frequency": [1, 1]},
             "trials": 500}
    p = _suite(tmp_path, [
        {"name": "torus-equality", "expect": "EqualityConfirmed", "config": torus},
        {"name": "bad-model", "expect": "EqualityConfirmed", "config": {"model": {"kind": "cube"}}},
        {"name": "circle", "expect": "EqualityConfirmed", "config": CIRCLE},
    ])
    summary = tmp_path / "summary.json"
    assert main(["suite", "run", "--suite", str(p), "--seed", "2", "--out", str(summary)]) == EXIT_INCONSISTENT
    rows = {r["name"]: r for r in json.loads(summary.read_text())}
    assert rows["torus-equality"]["verdict"] == "StrictInequalityConfirmed"
    assert not rows["torus-equality"]["pass"]
    assert not rows["bad-model"]["pass"]
    assert rows["circle"]["pass"]
