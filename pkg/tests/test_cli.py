import csv
import io
import json

import pytest

from cf_extremes import cli


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def data_rows(text):
    lines = [l for l in text.splitlines() if not l.startswith("#")]
    return list(csv.DictReader(io.StringIO("\n".join(lines))))


def test_grids():
    assert cli.parse_n_grid("256:8192:6") == [256, 512, 1024, 2048, 4096, 8192]
    assert cli.parse_u_grid("0.5:4:8")[0] == 0.5 and len(cli.parse_u_grid("0.5:4:8")) == 8
    with pytest.raises(cli.ConfigError):
        cli.parse_n_grid("1:2")
    with pytest.raises(cli.ConfigError):
        cli.parse_n_grid("1:3:10")


def test_exceedance_grid_rows(capsys):
    code, out, _ = run(capsys, "exceedance", "--n", "200", "--u-grid", "0.5:4:8", "--trials", "500")
    assert code == 0
    rows = data_rows(out)
    assert len(rows) == 8
    assert {"seed", "config_hash", "discarded", "tv_poisson", "theorem1_bound"} <= set(rows[0])


def test_exceedance_deterministic_across_workers(capsys):
    args = ("exceedance", "--n", "300", "--u", "1", "--trials", "40000", "--seed", "4")
    _, a, _ = run(capsys, *args, "--workers", "1")
    _, b, _ = run(capsys, *args, "--workers", "2")
    assert data_rows(a) == data_rows(b)


def test_exact_sampler_option(capsys):
    code, out, _ = run(capsys, "exceedance", "--n", "5", "--u", "1", "--trials", "200",
                       "--sampler", "exact", "--initial-bits", "64")
    assert code == 0 and data_rows(out)[0]["discarded"] == "0"


def test_rate_sweep_validation(capsys):
    code, _, err = run(capsys, "rate-sweep", "--n-grid", "256:1024:3", "--trials", "10")
    assert code == 1 and "too small" in err
    code, _, _ = run(capsys, "rate-sweep", "--trials", "10")
    assert code == 1


def test_rate_sweep_refuses_noisy_slope(capsys):
    code, out, err = run(capsys, "rate-sweep", "--n-grid", "64:512:4", "--trials", "300")
    assert code == 0 and "noise floor" in err
    assert all(r["slope"] == "nan" for r in data_rows(out))


def test_rate_sweep_weighted_json(capsys):
    code, out, _ = run(capsys, "rate-sweep", "--n-grid", "32:256:4", "--u-grid", "0.5:2:3",
                       "--trials", "400", "--estimator", "weighted", "--format", "json")
    doc = json.loads(out)
    assert code == 0 and doc["schema_version"] == 1
    assert len(doc["rows"]) == 4 and "slope" in doc["summary"]


def test_fit_rate():
    assert cli.fit_rate([1, 2, 4, 8], [0.3] * 4) == (0.0, 0.0)
    slope, se = cli.fit_rate([1, 2, 4, 8], [1, 0.5, 0.25, 0.125])
    assert slope == pytest.approx(-1.0) and se == pytest.approx(0.0, abs=1e-12)


def test_maxima(capsys):
    code, out, _ = run(capsys, "maxima", "--n", "500", "--u", "1", "--k", "2", "--trials", "5000")
    row = data_rows(out)[0]
    assert code == 0 and float(row["limit_cdf"]) == pytest.approx(0.735759, abs=1e-6)


def test_pointprocess(capsys):
    code, out, _ = run(capsys, "pointprocess", "--n", "500", "--trials", "2000",
                       "--intervals", "1:2,3:inf")
    rows = data_rows(out)
    assert code == 0 and [r["check"] for r in rows] == ["mean", "mean", "avoidance"]
    code, _, _ = run(capsys, "pointprocess", "--n", "500", "--intervals", "2:1")
    assert code == 1


def test_bounds_json(capsys):
    code, out, _ = run(capsys, "bounds", "--n", "100000", "--delta", "1", "--C", "2", "--theta", "3.29",
                       "--format", "json")
    doc = json.loads(out)
    row = doc["rows"][0]
    assert code == 0
    assert row["theorem1_bound"] == pytest.approx(row["kappa"] * row["l_n"] / 1e5)
    assert doc["config"]["theta"] == 3.29 and len(doc["config_hash"]) == 16


def test_invalid_config(capsys):
    assert run(capsys, "bounds", "--n", "10", "--theta", "0.5")[0] == 1
    assert run(capsys, "maxima", "--n", "0", "--u", "1")[0] == 1
    assert run(capsys, "nonsense")[0] == 1


def test_verify_quick(capsys, tmp_path):
    path = tmp_path / "v.csv"
    code, _, _ = run(capsys, "verify", "--quick", "--trials", "50000", "--out", str(path))
    assert code == 0
    rows = data_rows(path.read_text())
    assert rows and all(r["passed"] == "true" for r in rows)


def test_verify_failure_exit_code(capsys, monkeypatch):
    real = cli.oracle.exact_exceedance_distribution

    def skewed(n, u, tail_truncation=cli.oracle.DEFAULT_TAIL_TRUNCATION):
        law = real(n, u, tail_truncation)
        pmf = list(law.pmf)
        if n == 2:
            pmf[0] += 0.05
            pmf[1] -= 0.05
        return cli.oracle.ExactLaw(law.n, law.u, law.threshold_m, tuple(pmf), law.error_bound)

    monkeypatch.setattr(cli.oracle, "exact_exceedance_distribution", skewed)
    code, _, err = run(capsys, "verify", "--trials", "20000")
    assert code == 2 and "verification failure" in err


def test_config_hash_ignores_workers():
    base = {"command": "x", "seed": 1, "trials": 5, "workers": 1, "out": None, "format": "csv"}
    other = dict(base, workers=8, out="f", format="json")
    assert cli.config_hash(base) == cli.config_hash(other)
    assert cli.config_hash(base) != cli.config_hash(dict(base, seed=2))
