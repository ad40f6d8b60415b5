import json
import os

import numpy as np
import pytest

from ebnpmle.classifiers import LabeledDataset
from ebnpmle.cli import EXIT_DATA, EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, main
from ebnpmle.dataio import (
    atomic_write_text,
    load_dataset,
    read_observations,
    read_table,
    standardize,
    write_dataset,
)
from ebnpmle.errors import DataError


def write(path, text):
    path.write_text(text)
    return str(path)


def toy_split(tmp_path, seed=0, n=20, N=15, test_N=None):
    r = np.random.default_rng(seed)
    y = np.r_[np.zeros(n // 2), np.ones(n - n // 2)].astype(int)
    X = r.standard_normal((n, N))
    X[y == 1, :3] += 1.5
    tr = tmp_path / "train.csv"
    write_dataset(tr, LabeledDataset(X, y))
    te_N = N if test_N is None else test_N
    Xt = r.standard_normal((n, te_N))
    Xt[y == 1, :3] += 1.5
    te = tmp_path / "test.csv"
    write_dataset(te, LabeledDataset(Xt, y))
    return str(tr), str(te)


# loading

def test_load_small_file(tmp_path):
    p = write(tmp_path / "d.csv", "g1,g2,label\n0.5,1.5,0\n-1,2e-3,1\n3,4,1\n")
    ds = load_dataset(p)
    assert (ds.n, ds.N) == (3, 2)
    np.testing.assert_array_equal(ds.labels, [0, 1, 1])
    assert ds.features[1, 1] == 2e-3


def test_na_cell_reports_location(tmp_path):
    p = write(tmp_path / "d.csv", "a,b,c,d,label\n1,2,3,4,0\n1,2,3,NA,1\n")
    with pytest.raises(DataError, match=r"row 2, column 4"):
        load_dataset(p)


@pytest.mark.parametrize(
    "text, where",
    [
        ("a,label\n1,0\n2,1,5\n", "row 2"),
        ("a,label\n1,0\n2,7\n", "row 2, column 2"),
        ("a,label\n1,0\ninf,1\n", "row 2, column 1"),
    ],
)
def test_malformed_rows(tmp_path, text, where):
    with pytest.raises(DataError, match=where):
        load_dataset(write(tmp_path / "d.csv", text))


def test_label_by_name_and_no_header(tmp_path):
    p = write(tmp_path / "d.tsv", "y\tg1\tg2\n1\t0.1\t0.2\n0\t0.3\t0.4\n")
    ds = load_dataset(p, delimiter="\t", label_column="y")
    np.testing.assert_array_equal(ds.features, [[0.1, 0.2], [0.3, 0.4]])
    q = write(tmp_path / "e.csv", "0.1,0.2,1\n0.3,0.4,0\n")
    np.testing.assert_array_equal(load_dataset(q, has_header=False).labels, [1, 0])


def test_transposed_file(tmp_path):
    p = write(tmp_path / "t.csv", "name,s1,s2,s3\ng1,1,2,3\ng2,4,5,6\nlabel,0,1,1\n")
    t = read_table(p, label_column="label", transpose=True)
    np.testing.assert_array_equal(t.features, [[1, 4], [2, 5], [3, 6]])
    np.testing.assert_array_equal(t.labels, [0, 1, 1])
    assert t.feature_names == ["g1", "g2"]


def test_round_trip_is_lossless(tmp_path):
    r = np.random.default_rng(0)
    ds = LabeledDataset(r.standard_normal((7, 4)) * 10.0 ** r.integers(-8, 8, (7, 4)), [0, 1, 0, 1, 1, 0, 1])
    p = tmp_path / "rt.csv"
    write_dataset(p, ds)
    back = load_dataset(p)
    np.testing.assert_array_equal(back.features, ds.features)
    np.testing.assert_array_equal(back.labels, ds.labels)


def test_observation_file(tmp_path):
    p = write(tmp_path / "x.txt", "# header\n1.5\n\n-2  # trailing\n3e1\n")
    np.testing.assert_array_equal(read_observations(p), [1.5, -2.0, 30.0])
    with pytest.raises(DataError, match="row 2"):
        read_observations(write(tmp_path / "y.txt", "1\nabc\n"))


def test_atomic_write_leaves_no_temp_files(tmp_path):
    p = tmp_path / "sub" / "out.txt"
    atomic_write_text(p, "a\n")
    atomic_write_text(p, "b\n")
    assert p.read_text() == "b\n"
    assert os.listdir(tmp_path / "sub") == ["out.txt"]


# standardization

def test_standardize_examples():
    ds = LabeledDataset([[0.0, 5.0], [2.0, 5.0]], [0, 1])
    tr, te, rep = standardize(ds, np.array([[1.0, 1.0]]))
    np.testing.assert_allclose(tr.features[:, 0], [0, 2 / np.sqrt(2)])
    assert tr.features[:, 0].var(ddof=1) == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_array_equal(tr.features[:, 1], [5.0, 5.0])
    assert rep.zero_variance.tolist() == [1]
    np.testing.assert_allclose(te, [[1 / np.sqrt(2), 1.0]])


def test_standardized_variance_is_one(rng):
    ds = LabeledDataset(rng.standard_normal((9, 6)) * rng.uniform(0.1, 20, 6), [0, 1] * 4 + [1])
    tr, _, _ = standardize(ds)
    np.testing.assert_allclose(tr.features.var(axis=0, ddof=1), 1.0, atol=1e-12)


def test_standardize_uses_training_rows_only(rng):
    ds = LabeledDataset(rng.standard_normal((8, 5)), [0, 1] * 4)
    test = rng.standard_normal((4, 5))
    _, _, a = standardize(ds, test)
    _, _, b = standardize(ds, test * 100 + 7)
    np.testing.assert_array_equal(a.scales, b.scales)


# command line

def run(argv):
    return main([str(a) for a in argv])


def test_fit_identical_values(tmp_path):
    obs = write(tmp_path / "x.txt", "2.5\n2.5\n2.5\n")
    out = tmp_path / "fit.json"
    assert run(["fit", obs, "--format", "structured-text", "-o", out]) == EXIT_OK
    d = json.loads(out.read_text())
    assert d["atoms"] == [2.5] and d["weights"] == [1.0]
    manifest = json.loads((tmp_path / "fit.json.manifest.json").read_text())
    assert manifest["outputs"] == [str(out)]
    assert len(manifest["config_digest"]) == 64


def test_fit_csv_and_denoise(tmp_path):
    r = np.random.default_rng(1)
    x = np.r_[r.normal(-3, 1, 50), r.normal(3, 1, 50)]
    obs = write(tmp_path / "x.txt", "\n".join(repr(v) for v in x.tolist()) + "\n")
    fit_csv = tmp_path / "fit.csv"
    assert run(["fit", obs, "-o", fit_csv]) == EXIT_OK
    lines = fit_csv.read_text().splitlines()
    assert lines[0] == "atom,weight"
    assert sum(float(l.split(",")[1]) for l in lines[1:]) == pytest.approx(1.0, abs=1e-12)
    model = tmp_path / "fit.json"
    assert run(["fit", obs, "--format", "structured-text", "-o", model]) == EXIT_OK
    den = tmp_path / "den.csv"
    assert run(["denoise", obs, "--prior", model, "-o", den]) == EXIT_OK
    rows = den.read_text().splitlines()[1:]
    post = np.array([float(r.split(",")[2]) for r in rows])
    assert np.all((post >= x.min()) & (post <= x.max()))
    # shrinkage pulls each observation toward its cluster centre
    assert np.mean(np.abs(np.abs(post) - 3)) < np.mean(np.abs(np.abs(x) - 3))
    den2 = tmp_path / "den2.csv"
    assert run(["denoise", obs, "-o", den2]) == EXIT_OK


def test_fit_nonconvergence_is_numeric_failure(tmp_path):
    r = np.random.default_rng(2)
    obs = write(tmp_path / "x.txt", "\n".join(repr(v) for v in r.normal(0, 3, 200).tolist()) + "\n")
    assert run(["fit", obs, "--max-iters", "2", "-o", tmp_path / "f.csv"]) == EXIT_NUMERIC


def test_classify_dimension_mismatch(tmp_path, capsys):
    tr, te = toy_split(tmp_path, N=15, test_N=14)
    code = run(["classify", "--train", tr, "--test", te, "-o", tmp_path / "out"])
    assert code == EXIT_DATA
    assert "dimension mismatch" in capsys.readouterr().err


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["frobnicate"],
        ["fit"],
        ["fit", "x.txt", "--k", "many"],
        ["classify", "--train", "a.csv"],
        ["simulate", "c.toml", "--format", "xml"],
    ],
)
def test_usage_errors(argv):
    assert run(argv) == EXIT_USAGE


def test_unknown_method_is_usage_error(tmp_path):
    tr, te = toy_split(tmp_path)
    assert run(["classify", "--train", tr, "--test", te, "--methods", "svm"]) == EXIT_USAGE


def test_missing_file_is_data_error(tmp_path):
    assert run(["fit", tmp_path / "nope.txt"]) == EXIT_DATA


def test_classify_outputs_and_idempotence(tmp_path):
    tr, te = toy_split(tmp_path)
    outs = []
    for name in ("a", "b"):
        d = tmp_path / name
        argv = ["classify", "--train", tr, "--test", te, "--methods", "npmle,nb,gp,oracle_nb", "--standardize", "--screen",
                "--seed", "3", "--format", "structured-text", "-o", d]
        assert run(argv) == EXIT_OK
        outs.append(d)
    a, b = outs
    primary = sorted(f for f in os.listdir(a) if f != "manifest.json")
    assert "summary.csv" in primary and "predictions_npmle.csv" in primary and "model_gp.json" in primary
    for f in primary:
        assert (a / f).read_bytes() == (b / f).read_bytes()
    pred = (a / "predictions_nb.csv").read_text().splitlines()
    assert pred[0] == "id,label,score" and len(pred) == 21
    summary = (a / "summary.csv").read_text().splitlines()
    assert summary[0] == "method,errors,n_test,error_rate"
    m = json.loads((a / "manifest.json").read_text())
    assert m["seed"] == 3 and len(m["outputs"]) == len(primary)


def test_simulate_and_rate_check(tmp_path):
    cfg = write(tmp_path / "s.toml", 'N = 50\nreps = 3\nmethods = ["nb", "npmle"]\n\n[[scenario]]\nm = 5\ndelta = 3.0\n')
    out = tmp_path / "res.csv"
    svg = tmp_path / "res.svg"
    assert run(["simulate", cfg, "--seed", "1", "-o", out, "--svg", svg, "--workers", "2"]) == EXIT_OK
    assert out.read_text().startswith("N,m,delta,noise,rho,mu1_pattern,n0,n1,method,mean_rate,std_err,reps,failures\n")
    assert svg.read_text().lstrip().startswith("<?xml")
    rc = write(tmp_path / "r.toml", "N_values = [50, 200]\nreps = 2\ngrid_points = 2001\n")
    rout = tmp_path / "rate.json"
    assert run(["rate-check", rc, "--format", "structured-text", "-o", rout]) == EXIT_OK
    rows = json.loads(rout.read_text())
    assert [r["N"] for r in rows] == [50, 200]


def test_bad_config_is_data_error(tmp_path):
    cfg = write(tmp_path / "s.toml", "N = 50\nwidgets = 3\n")
    assert run(["simulate", cfg, "-o", tmp_path / "o.csv"]) == EXIT_DATA
