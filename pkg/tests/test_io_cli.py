import json

import numpy as np
import pytest
import scipy.sparse as sp

from laplace_limits import cli, io, spectral
from laplace_limits.io import DataError


def test_csv_round_trip_is_exact(tmp_path, rng):
    a = rng.standard_normal((20, 3)) * 10.0 ** rng.integers(-8, 8, (20, 3))
    p = tmp_path / "a.csv"
    io.write_array_csv(p, a, ["x0", "x1", "x2"])
    b, header = io.read_array_csv(p)
    assert header == ["x0", "x1", "x2"]
    assert np.array_equal(a, b)


def test_matrix_round_trip(tmp_path, rng):
    M = sp.random(30, 30, density=0.1, random_state=1, format="csr")
    p = tmp_path / "m.mtx"
    io.write_matrix(p, M)
    assert abs(io.read_matrix(p) - M).max() == 0


def test_corrupt_and_missing_inputs(tmp_path):
    with pytest.raises(DataError):
        io.read_array_csv(tmp_path / "nope.csv")
    bad = tmp_path / "bad.csv"
    bad.write_text("x0,x1\n1,2\n3\n")
    with pytest.raises(DataError):
        io.read_array_csv(bad)
    nan = tmp_path / "nan.csv"
    nan.write_text("x0\nnan\n")
    with pytest.raises(DataError):
        io.read_array_csv(nan)
    mtx = tmp_path / "bad.mtx"
    mtx.write_text("garbage\n")
    with pytest.raises(DataError):
        io.read_matrix(mtx)
    with pytest.raises(DataError):
        io.read_sidecar(tmp_path / "nope.csv")


def test_config_hash_ignores_key_order():
    assert io.config_hash({"a": 1, "b": [1, 2]}) == io.config_hash({"b": [1, 2], "a": 1})
    assert io.config_hash({"a": 1}) != io.config_hash({"a": 2})
    assert len(io.config_hash({})) == 16


def _run(*argv):
    return cli.main([str(a) for a in argv])


def test_pipeline_and_byte_identical_rerun(tmp_path):
    pts = tmp_path / "pts.csv"
    assert _run("sample", "--manifold", "circle", "--n", 500, "--seed", 7, "--out", pts) == 0
    g = tmp_path / "g.mtx"
    assert _run("build", "--points", pts, "--construction", "knn_undirected_or", "--k", 8, "--out", g) == 0
    L = tmp_path / "L.mtx"
    assert _run("laplacian", "--graph", g, "--kind", "random_walk", "--m", 1, "--out", L) == 0
    emb = tmp_path / "emb.csv"
    assert _run("embed", "--graph", g, "--dim", 2, "--out", emb) == 0
    dens = tmp_path / "dens.csv"
    assert _run("density", "--points", pts, "--k", 20, "--m", 1, "--out", dens) == 0

    X, header = io.read_array_csv(pts)
    assert header == ["x0", "x1", "u0"]
    Y, _ = io.read_array_csv(emb)
    t = X[:, 2]
    assert spectral.procrustes_error(Y, np.column_stack([np.cos(t), np.sin(t)])) < 0.05
    Lm = io.read_matrix(L)
    assert np.allclose(Lm @ np.ones(500), 0, atol=1e-9)
    side = io.read_sidecar(L)
    assert side["laplacian"]["kind"] == "random_walk" and side["config_hash"]

    first = {p.name: p.read_bytes() for p in tmp_path.iterdir()}
    for p in tmp_path.iterdir():
        p.unlink()
    _run("sample", "--manifold", "circle", "--n", 500, "--seed", 7, "--out", pts)
    _run("build", "--points", pts, "--construction", "knn_undirected_or", "--k", 8, "--out", g)
    _run("laplacian", "--graph", g, "--kind", "random_walk", "--m", 1, "--out", L)
    _run("embed", "--graph", g, "--dim", 2, "--out", emb)
    _run("density", "--points", pts, "--k", 20, "--m", 1, "--out", dens)
    assert {p.name: p.read_bytes() for p in tmp_path.iterdir()} == first


def test_lle_embed(tmp_path):
    pts = tmp_path / "pts.csv"
    _run("sample", "--manifold", "circle", "--n", 300, "--out", pts)
    out = tmp_path / "y.csv"
    assert _run("embed", "--points", pts, "--method", "lle", "--k", 8, "--out", out) == 0
    assert io.read_array_csv(out)[0].shape == (300, 2)


def test_exit_codes(tmp_path, capsys):
    pts = tmp_path / "pts.csv"
    assert _run("sample", "--manifold", "circle", "--n", 50, "--out", pts) == 0
    # usage: missing parameter, bad sample size, unknown manifold
    assert _run("build", "--points", pts, "--construction", "r_neighborhood", "--out", tmp_path / "g.mtx") == 2
    assert _run("sample", "--manifold", "circle", "--n", 0, "--out", pts) == 2
    with pytest.raises(SystemExit) as exc:
        _run("sample", "--manifold", "nonexistent", "--n", 5, "--out", pts)
    assert exc.value.code == 2
    # data: missing input and corrupt input
    assert _run("density", "--points", tmp_path / "missing.csv", "--k", 3, "--m", 1, "--out", tmp_path / "d.csv") == 3
    junk = tmp_path / "junk.csv"
    junk.write_text("x0,x1\n1,a\n")
    assert _run("density", "--points", junk, "--k", 3, "--m", 1, "--out", tmp_path / "d.csv") == 3
    # numerical: isolated vertices, then an eigenmap of a disconnected graph
    sparse_g = tmp_path / "sparse.mtx"
    assert _run("build", "--points", pts, "--construction", "r_neighborhood", "--h", 1e-6, "--out", sparse_g) == 0
    assert _run("laplacian", "--graph", sparse_g, "--m", 1, "--out", tmp_path / "L.mtx") == 4
    two = tmp_path / "two.csv"
    io.write_array_csv(two, np.concatenate([np.arange(6.0), 100 + np.arange(6.0)])[:, None], ["x0"])
    g = tmp_path / "two.mtx"
    assert _run("build", "--points", two, "--construction", "knn_undirected_or", "--k", 2, "--out", g) == 0
    assert _run("embed", "--graph", g, "--dim", 1, "--out", tmp_path / "e.csv") == 4
    err = capsys.readouterr().err
    assert "numerical failure" in err


def test_validate_config(tmp_path, capsys):
    cfg = {
        "schema_version": 1,
        "name": "tiny",
        "output_dir": str(tmp_path),
        "manifold": {"name": "circle"},
        "suites": [{"kind": "sphere_moments", "m": [1], "h": 0.1, "N": 10000, "seed": 0}],
    }
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(cfg))
    assert _run("validate", "--config", p) == 0
    report = json.loads((tmp_path / "tiny.report.json").read_text())
    assert report["config_hash"] == io.config_hash(report["config"])
    assert "validate:" in capsys.readouterr().err
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert _run("validate", "--config", bad) == 3
    cfg["schema_version"] = 99
    p.write_text(json.dumps(cfg))
    assert _run("validate", "--config", p) == 3
