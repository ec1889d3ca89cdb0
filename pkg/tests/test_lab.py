import csv
import io

import numpy as np
import pytest

from haarlab.grid import GridSpec, read_step_function
from haarlab.lab import (
    Q_NAMES,
    SWEEP_COLUMNS,
    ExperimentConfig,
    SweepRow,
    UsageError,
    fit_slopes,
    main,
    parse_config_text,
    strip_timestamp,
    sweep_svg,
    ten_norms,
)
from haarlab.paraproducts import SymbolSequence
from haarlab.weights import WeightRecipe, generate


def read_rows(path):
    body = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(body))))


def test_config_parse():
    cfg = parse_config_text("# comment\nd = 2\nL=3  # inline\nsigma = ones\nsvg = false\n")
    assert (cfg.d, cfg.L, cfg.sigma, cfg.svg) == (2, 3, "ones", False)
    assert cfg.n_weights == ExperimentConfig().n_weights
    with pytest.raises(UsageError, match="unknown config key"):
        parse_config_text("colour = red")
    with pytest.raises(UsageError, match="cannot parse"):
        parse_config_text("d = two")
    with pytest.raises(UsageError, match="key = value"):
        parse_config_text("d 2")


def test_config_serialize_roundtrip():
    cfg = ExperimentConfig(d=2, L=3, sigma="zero", tol=1e-9)
    back = parse_config_text(cfg.serialize())
    assert back == ExperimentConfig(d=2, L=3, sigma="zero", tol=1e-9)


def test_exit_codes(tmp_path, capsys):
    assert main(["bogus"]) == 2
    assert main(["verify", "--set", "nope=1", "--out", str(tmp_path)]) == 2
    assert main(["verify", "--config", str(tmp_path / "missing.cfg")]) == 2
    assert main(["sweep", "--set", "method=magic", "--out", str(tmp_path)]) == 2
    assert main(["verify", "--L", "3", "--set", "n_weights=5", "--out", str(tmp_path / "v")]) == 0
    assert (tmp_path / "v" / "verify.csv").exists()
    rows = read_rows(tmp_path / "v" / "verify.csv")
    assert rows and all(r["passed"] == "True" for r in rows)
    assert read_rows(tmp_path / "v" / "verify_failures.csv") == []


def test_verify_corrupted_weight(tmp_path):
    bad = tmp_path / "w.txt"
    bad.write_text("1 2\n1.0\n-3.0\n2.0\n1.0\n")
    out = tmp_path / "out"
    assert main(["verify", "--set", f"weight={bad}", "--out", str(out)]) == 2
    assert not out.exists()
    bad.write_text("1 2\n1.0\n")
    assert main(["verify", "--set", f"weight={bad}", "--out", str(out)]) == 2
    assert not out.exists()


def test_verify_with_weight_file(tmp_path):
    good = tmp_path / "w.txt"
    good.write_text("1 2\n1.0\n3.0\n0.5\n2.0\n")
    assert main(["verify", "--set", f"weight={good}", "--set", "n_weights=3", "--L", "2", "--out", str(tmp_path / "o")]) == 0


def test_constant_weight_row():
    g = GridSpec(1, 4)
    w = generate(WeightRecipe.make("constant", 1, 4, c=1.0))
    norms, nc = ten_norms(SymbolSequence.constant(g, 1.0), w)
    assert norms["q_00_00"] == pytest.approx(1.0, rel=1e-10)
    assert all(abs(norms[q]) <= 1e-12 for q in Q_NAMES if q != "q_00_00")
    assert nc == pytest.approx(1.0, rel=1e-10)
    z, zc = ten_norms(SymbolSequence.zeros(g), w)
    assert all(v == 0 for v in z.values()) and zc == 0


def test_dense_and_power_paths_agree():
    w = generate(WeightRecipe.make("cascade", 1, 5, K=3.0, seed=4))
    sig = SymbolSequence.random_signs(w.grid, 1)
    a, ac = ten_norms(sig, w, 1e-12, "dense")
    b, bc = ten_norms(sig, w, 1e-12, "power")
    for q in Q_NAMES:
        assert b[q] == pytest.approx(a[q], rel=1e-6, abs=1e-12)
    assert bc == pytest.approx(ac, rel=1e-6)


def test_norms_matches_sweep_row(tmp_path):
    assert main(["norms", "--set", "sigma=ones", "--out", str(tmp_path / "n")]) == 0
    (row,) = read_rows(tmp_path / "n" / "norms.csv")
    assert row["triangle_ok"] == "True"
    assert float(row["q_00_00"]) == pytest.approx(1.0)
    assert main(["sweep", "--set", "sigma=ones", "--set", "n_weights=1", "--set", "a_max=1", "--out", str(tmp_path / "s")]) == 0
    (srow,) = read_rows(tmp_path / "s" / "sweep.csv")
    assert all(srow[k] == row[k] for k in SWEEP_COLUMNS)


def test_sweep_outputs_and_determinism(tmp_path):
    args = ["sweep", "--L", "4", "--set", "n_weights=6", "--set", "a_max=20"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b"), "--jobs", "2"]) == 0
    for name in ("sweep.csv", "fit.csv"):
        ta, tb = ((tmp_path / x / name).read_text() for x in ("a", "b"))
        assert ta.startswith("# haarlab sweep ")
        assert strip_timestamp(ta) == strip_timestamp(tb)
        assert "# d = 1" in ta
    rows = read_rows(tmp_path / "a" / "sweep.csv")
    assert len(rows) == 6 and list(rows[0]) == list(SWEEP_COLUMNS)
    fits = read_rows(tmp_path / "a" / "fit.csv")
    assert [f["operator"] for f in fits] == list(Q_NAMES) + ["norm_conjugated"]
    assert (tmp_path / "a" / "sweep.svg").read_text().startswith("<svg")


def test_fit_excludes_flagged_and_zero_rows():
    def row(a2, v, status="ok"):
        return SweepRow("x", "f", 0, a2, 1.0, {q: v for q in Q_NAMES}, v, status)

    rows = [row(1.0, 1.0), row(4.0, 2.0), row(16.0, 4.0), row(64.0, float("nan"), "nonconverged"), row(8.0, 1e-16)]
    fits = {f.operator: f for f in fit_slopes(rows)}
    f = fits["q_01_01"]
    assert f.n_points == 2 and f.slope == pytest.approx(0.5)
    assert f.passed
    # same data, tighter cap on the square-root terms
    assert fits["q_00_00"].slope_cap == 0.55 and fits["q_00_00"].passed
    assert "<svg" in sweep_svg(rows, list(fits.values()))


def test_generate_roundtrip(tmp_path):
    assert main(["generate", "--set", "n_weights=5", "--set", "d=2", "--L", "3", "--out", str(tmp_path)]) == 0
    recs = read_rows(tmp_path / "recipes.csv")
    assert len(recs) == 5
    for r in recs:
        w = read_step_function(tmp_path / "weights" / r["file"])
        again = generate(WeightRecipe.parse(r["recipe"]))
        assert np.array_equal(w.cells, again.cells)


def test_audit_counts(tmp_path):
    assert main(["audit", "--set", "n_weights=4", "--out", str(tmp_path)]) == 0
    summary = read_rows(tmp_path / "audit_summary.csv")
    ids = {r["inequality_id"] for r in summary}
    assert len(summary) == len(ids) * 4
    maxima = read_rows(tmp_path / "audit_max.csv")
    assert {m["inequality_id"] for m in maxima} == ids
    assert all(m["passed"] == "True" for m in maxima)
    for i in ids:
        assert len(read_rows(tmp_path / "audit" / f"{i}.csv")) == 4


def test_audit_constant_corpus(tmp_path):
    assert main(["audit", "--set", "n_weights=1", "--set", "a_max=1", "--out", str(tmp_path)]) == 0
    for r in read_rows(tmp_path / "audit_summary.csv"):
        if r["inequality_id"].startswith(("c_kest", "a2_set", "sqrt_avg", "dw_inverse", "square")):
            continue
        assert float(r["ratio"]) == 0.0, r["inequality_id"]
