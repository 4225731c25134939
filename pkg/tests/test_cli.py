import json
import math

import pytest

from activegms import cli, verify


def run(capsys, *argv):
    code = cli.main(list(argv))
    return code, capsys.readouterr().out


def test_bounds(capsys):
    code, out = run(capsys, "bounds", "--p", "100", "--d", "4", "--lam", "1")
    assert code == 0
    (report,) = json.loads(out)
    assert report["terms"][0]["prefactor"] == pytest.approx(1209.35, rel=1e-5)


def test_bounds_grid_and_appendix(capsys):
    _, out = run(capsys, "bounds", "--model", "gaussian", "--p", "50,100", "--d", "2", "--tau", "0.3,0.5")
    assert len(json.loads(out)) == 4
    _, out = run(capsys, "bounds", "--ensemble2a", "5,3,2", "--lam", "0.5")
    assert json.loads(out)[0]["n_lower"] == pytest.approx(1.5753, abs=1e-4)


def test_cardinality_bits(capsys):
    _, out = run(capsys, "cardinality", "--kind", "IsolatedEdges", "--p", "8", "--enumerate", "--bits")
    obj = json.loads(out)
    assert obj["enumerated_count"] == 105
    assert obj["log_exact"] == pytest.approx(math.log2(105))
    assert obj["unit"] == "bits"


def test_divergence_ops(capsys):
    _, out = run(capsys, "divergence", "worst-case", "--p", "6", "--m", "3", "--a", "1", "--nz", "4")
    assert json.loads(out)["allocation"] == [3, 1]
    _, out = run(capsys, "divergence", "edge-gaussian", "--tau", "0.5")
    obj = json.loads(out)
    assert obj["empty_vs_edge"] == pytest.approx(obj["closed_form"], abs=1e-12)
    _, out = run(capsys, "divergence", "clique-minus-one", "--d", "3", "--lam", "1")
    assert json.loads(out)["bound_valid"] is True
    _, out = run(capsys, "divergence", "f-beta", "--beta", "0.5")
    assert json.loads(out)["value"] == pytest.approx(2 * (math.log(2) - 0.5))


def test_mi(capsys):
    _, out = run(capsys, "mi", "--kind", "IsolatedEdges", "--p", "4", "--lam", "1", "--z", "1,1,0,0")
    assert json.loads(out)["mi"] == pytest.approx(0.0766921, abs=1e-7)


def _config(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(
        json.dumps(
            {
                "ensemble": {"kind": "IsolatedEdges", "p": 4},
                "lam": 1.0,
                "strategy": "fixed",
                "strategy_params": {"node_sets": [[0, 1], [2, 3]]},
                "budgets": [0, 4],
                "trials": 150,
                "seed": 3,
            }
        )
    )
    return path


def test_simulate_and_report(capsys, tmp_path):
    cfg = _config(tmp_path)
    code, out = run(capsys, "simulate", "--config", str(cfg))
    assert code == 0 and out.startswith("budget,avg_error,stderr,minimax_error,fano_floor,thm_bound\n")
    res = tmp_path / "res.json"
    run(capsys, "simulate", "--config", str(cfg), "--format", "json", "--out", str(res), "--workers", "2")
    _, again = run(capsys, "report", str(res))
    assert again == out
    _, other = run(capsys, "simulate", "--config", str(cfg), "--seed", "4")
    assert other != out


def test_verify_exit_codes(capsys, monkeypatch):
    code, out = run(capsys, "verify", "--scope", "experiment_harness")
    assert code == 0 and "checks passed" in out
    monkeypatch.setitem(verify.CHECKS, "experiment_harness", [("always_fails", lambda: (False, -1.0))])
    code, out = run(capsys, "verify", "--scope", "experiment_harness")
    assert code == 1 and "FAIL" in out


def test_usage_errors_exit_2(capsys):
    with pytest.raises(SystemExit) as e:
        cli.main(["cardinality", "--kind", "Bogus", "--p", "3"])
    assert e.value.code == 2
    with pytest.raises(SystemExit) as e:
        cli.main(["cardinality", "--kind", "DisjointCliques", "--p", "6"])  # missing --m
    assert e.value.code == 2
    with pytest.raises(SystemExit) as e:
        cli.main([])
    assert e.value.code == 2
