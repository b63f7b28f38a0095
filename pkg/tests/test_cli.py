import json
import os
import subprocess
import sys

import numpy as np
import pytest

from anderloc.cli import CSV_COLUMNS, main
from anderloc.config import ConfigError, parse_spec
from anderloc.oracles import free_chain_eigenvalues

FREE_CHAIN = """
[experiment]
kind = spectrum
seed = 3

[domain]
sites = 10

[disorder]
eta_max = 0
"""


def write(tmp_path, text, name="exp.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


def read_csv(path):
    lines = path.read_text().splitlines()
    return lines[0].split(","), [l.split(",") for l in lines[1:]]


def test_spectrum_free_chain(tmp_path):
    p = write(tmp_path, FREE_CHAIN)
    assert main(["run", str(p)]) == 0
    header, rows = read_csv(tmp_path / "exp.csv")
    assert header == CSV_COLUMNS["spectrum"]
    vals = np.array([float(r[2]) for r in rows])
    np.testing.assert_allclose(vals, free_chain_eigenvalues(10), atol=1e-10)
    doc = json.loads((tmp_path / "exp.json").read_text())
    assert doc["schema_version"] == 1 and doc["seed"] == 3 and doc["config_hash"]


def test_rerun_is_byte_identical(tmp_path):
    text = FREE_CHAIN.replace("eta_max = 0", "eta_max = 2").replace("seed = 3", "seed = 3\nrealizations = 4")
    p = write(tmp_path, text)
    assert main(["run", str(p)]) == 0
    first = (tmp_path / "exp.csv").read_bytes(), (tmp_path / "exp.json").read_bytes()
    assert main(["run", str(p), "--threads", "3"]) == 0
    assert first == ((tmp_path / "exp.csv").read_bytes(), (tmp_path / "exp.json").read_bytes())


def test_seed_override_changes_output(tmp_path):
    text = FREE_CHAIN.replace("eta_max = 0", "eta_max = 2")
    p = write(tmp_path, text)
    main(["run", str(p)])
    a = (tmp_path / "exp.csv").read_bytes()
    main(["run", str(p), "--seed", "99"])
    assert a != (tmp_path / "exp.csv").read_bytes()
    assert json.loads((tmp_path / "exp.json").read_text())["seed"] == 99


def test_provenance_roundtrip(tmp_path):
    text = FREE_CHAIN.replace("eta_max = 0", "eta_max = 2")
    p = write(tmp_path, text)
    main(["run", str(p), "--seed", "17"])
    doc = json.loads((tmp_path / "exp.json").read_text())
    q = write(tmp_path, doc["spec"], "again.cfg")
    assert main(["run", str(q)]) == 0
    assert (tmp_path / "again.csv").read_bytes() == (tmp_path / "exp.csv").read_bytes()


def test_parse_error_exit_code(tmp_path, capsys):
    p = write(tmp_path, "[experiment]\nkind = nonsense\n")
    assert main(["run", str(p)]) == 2
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "ConfigError"
    assert main(["run", str(tmp_path / "missing.cfg")]) == 2


def test_negative_alpha_rejected(tmp_path):
    p = write(tmp_path, FREE_CHAIN + "\n[model]\nalpha_w = -1\n")
    assert main(["validate", str(p)]) == 2


def test_covering_finding(tmp_path, capsys):
    text = FREE_CHAIN + """
[model]
mode = continuum-discretized
[grid]
h = 0.1
[single_site]
shape = box
r_u = 0.2
"""
    p = write(tmp_path, text)
    assert main(["validate", str(p)]) == 2
    assert "covering" in capsys.readouterr().err


def test_rescale_check_rejects_half(tmp_path):
    text = """
[experiment]
kind = rescale-check
[model]
n = 2
[interaction]
kind = exponential
c_w = 1
[constants]
nu2 = 1
s = 0.5
c = 1
[query]
L = 10
b_small = 0.1, 0.01
b_double = 0.1, 0.01
b_large = 0.01, 0.001
"""
    p = write(tmp_path, text)
    assert main(["validate", str(p)]) == 2
    assert main(["run", str(p)]) == 2
    ok = write(tmp_path, text.replace("s = 0.5", "s = 0.25"), "ok.cfg")
    assert main(["run", str(ok)]) == 0


def test_schedule_warning_and_violation(tmp_path, capsys):
    text = """
[experiment]
kind = schedule
[model]
n = 3
[interaction]
kind = polynomial
c_w = 1
p_w = 100
[query]
beta1 = 1
"""
    p = write(tmp_path, text)
    assert main(["validate", str(p)]) == 0
    assert "48d" in capsys.readouterr().out
    assert main(["run", str(p)]) == 4
    header, rows = read_csv(tmp_path / "exp.csv")
    assert [float(r[2]) for r in rows] == pytest.approx([1.0, 0.5, 1 / 3])


def test_iterate_runs(tmp_path):
    text = """
[experiment]
kind = iterate
[model]
n = 2
[interaction]
kind = exponential
c_w = 1
mu_w = 1
[constants]
nu2 = 1
s = 0.25
c = 1
[query]
variant = exp
c_prime = 1
q_prime = 17
l1 = 1e14
"""
    p = write(tmp_path, text)
    assert main(["run", str(p)]) == 0
    bad = write(tmp_path, text.replace("l1 = 1e14", "l1 = 100"), "bad.cfg")
    assert main(["run", str(bad)]) == 4


def test_fracmom_and_correlator(tmp_path):
    base = """
[experiment]
kind = {kind}
seed = 2
realizations = 20
[domain]
sites = 30
[disorder]
eta_max = 10
[query]
x = 8
separations = 2, 4, 6
s = 0.5
re_z = 7
im_z = 0.1
window_lo = 6
window_hi = 8
"""
    for kind in ("fracmom", "correlator", "bs-scan"):
        text = base.format(kind=kind) + ("L = 2, 4\n" if kind == "bs-scan" else "")
        p = write(tmp_path, text, f"{kind}.cfg")
        assert main(["run", str(p)]) == 0, kind
        header, rows = read_csv(tmp_path / f"{kind}.csv")
        assert header == CSV_COLUMNS[kind]
        assert rows


def test_numerical_failure_exit_code(tmp_path, capsys):
    # a query cell outside the domain holds no grid nodes
    text = FREE_CHAIN.replace("kind = spectrum", "kind = fracmom") + (
        "[query]\nx = 50\nseparations = 1, 2, 3\ns = 0.5\nre_z = 1\nim_z = 0.1\n")
    p = write(tmp_path, text)
    assert main(["run", str(p)]) == 3
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "SpectralError"


def test_oracle_subcommand(capsys):
    assert main(["oracle", "free-chain", "m=3"]) == 0
    out = json.loads(capsys.readouterr().out)
    np.testing.assert_allclose([out["E0"], out["E1"], out["E2"]], free_chain_eigenvalues(3))
    assert main(["oracle", "hausdorff", "x=[[0],[0]]", "y=[[3],[4]]"]) == 0
    assert json.loads(capsys.readouterr().out)["dist"] == 4
    assert main(["oracle", "bogus"]) == 2


def test_threads_env_fallback(tmp_path):
    text = FREE_CHAIN.replace("eta_max = 0", "eta_max = 2").replace("seed = 3", "seed = 3\nrealizations = 3")
    p = write(tmp_path, text)
    env = dict(os.environ, ANDERLOC_THREADS="2")
    out = subprocess.run([sys.executable, "-m", "anderloc.cli", "run", str(p)], env=env,
                         capture_output=True, text=True)
    assert out.returncode == 0, out.stderr
    a = (tmp_path / "exp.csv").read_bytes()
    assert main(["run", str(p), "--threads", "1"]) == 0
    assert a == (tmp_path / "exp.csv").read_bytes()


def test_parse_spec_types():
    spec = parse_spec(FREE_CHAIN)
    assert spec.kind == "spectrum" and spec.seed == 3 and spec.realizations == 1
    with pytest.raises(ConfigError):
        parse_spec("[experiment]\nkind = spectrum\nseed = x\n")
    with pytest.raises(ConfigError):
        parse_spec("no sections here")


def test_relative_spec_path_output(tmp_path, monkeypatch):
    sub = tmp_path / "specs"
    sub.mkdir()
    write(sub, FREE_CHAIN)
    monkeypatch.chdir(tmp_path)
    assert main(["run", "specs/exp.cfg"]) == 0
    assert (sub / "exp.csv").exists() and (sub / "exp.json").exists()
    write(sub, FREE_CHAIN.replace("seed = 3", "seed = 3\noutput = out/res"), "named.cfg")
    assert main(["run", "specs/named.cfg"]) == 0
    assert (sub / "out" / "res.csv").exists()
