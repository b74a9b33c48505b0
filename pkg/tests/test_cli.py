import io
import json

import pandas as pd
import pytest
from fastcore.test import test_close, test_eq

from lanemden import __version__
from lanemden.cli import RunConfig, main, parse_config, run
from lanemden.errors import UsageError


def _json(capsys):
    out = capsys.readouterr().out
    return json.loads(out)


def test_constants(capsys):
    test_eq(main(["constants", "--n", "5", "--alpha", "2"]), 0)
    doc = _json(capsys)
    result = doc["result"]
    test_close(result["lambda"], 2.0)
    test_close(result["mu"], 1.0)
    test_close(result["lambda_bar"], 8 / 3)
    test_close(result["apriori_amplitude"], 10.0)
    test_eq(doc["header"]["regime"], "Intermediate")
    test_eq(doc["header"]["version"], __version__)
    test_eq(len(doc["header"]["config_hash"]), 64)


def test_config_hash_is_stable(capsys):
    main(["constants", "--n", "5", "--alpha", "2"])
    first = _json(capsys)["header"]["config_hash"]
    main(["constants", "--n", "5", "--alpha", "2.0"])
    test_eq(_json(capsys)["header"]["config_hash"], first)


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["constants", "--n", "5"],
        ["constants", "--n", "4", "--alpha", "4"],
        ["constants", "--n", "4", "--alpha", "2", "--bogus", "1"],
        ["family", "--n", "4"],
        ["residual-check", "--n", "4", "--family", "spiral", "--kappa", "0", "--kappa-star", "-0.01"],
        ["sweep", "--n", "4"],
        ["sweep", "--n", "4", "--kappa-range", "-0.5,0,3"],
        ["sweep", "--n", "4", "--alpha-range", "1.5,2,0.5"],
        ["family", "--n", "4", "--family", "critical-homogeneous", "--z", "1,2"],
        ["family", "--n", "4", "--family", "bubble", "--r-min", "0"],
        ["family", "--n", "4", "--family", "bubble", "--r-min", "2", "--r-max", "1"],
        ["family", "--n", "4", "--m", "2", "--family", "bubble", "--e", "1"],
        ["simulate", "--n", "3", "--system", "lower-critical", "--v0", "1", "--dv0", "0", "--span", "1"],
    ],
)
def test_usage_errors(argv, capsys):
    test_eq(main(argv), 2)
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    test_eq(err["code"], "usage")


def test_parse_config_resolves_params():
    config = parse_config(["family", "--n", "4", "--family", "spiral", "--kappa", "0", "--kappa-star", "-0.01"])
    test_eq(config.params.m, 2)
    test_close(config.params.alpha, 3.0)
    config = parse_config(
        ["simulate", "--n", "3", "--system", "lower-critical", "--v0", "1", "--dv0", "0", "--t0", "5", "--span", "1"]
    )
    test_close(config.params.alpha, 3.0)
    test_eq(config.v0, (1.0,))
    with pytest.raises(UsageError):
        parse_config(["simulate", "--n", "4", "--alpha", "3", "--v0", "1"])


def test_config_file(tmp_path, capsys):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"command": "constants", "n": 4, "alpha": 3.0}))
    test_eq(main(["--config", str(path)]), 0)
    test_eq(_json(capsys)["result"]["mu"], 0.0)
    path.write_text(json.dumps({"command": "constants", "n": 4, "alpha": 3.0, "colour": 1}))
    test_eq(main(["--config", str(path)]), 2)


def test_family_csv(tmp_path):
    out = tmp_path / "bubble.csv"
    argv = ["family", "--n", "4", "--family", "bubble", "--points", "20", "-o", str(out)]
    test_eq(main(argv), 0)
    lines = out.read_text().splitlines()
    assert lines[0].startswith("# ")
    header = json.loads(lines[0][2:])
    test_eq(header["config"]["family"], "bubble")
    frame = pd.read_csv(out, skiprows=1)
    test_eq(list(frame.columns), ["x_1", "x_2", "x_3", "x_4", "u_1"])
    test_eq(frame.shape[0], 20)


def test_simulate_csv(tmp_path):
    out = tmp_path / "orbit.csv"
    argv = ["simulate", "--n", "4", "--alpha", "3", "--v0", "1.4142135623730951", "--dv0", "0",
            "--span", "1", "--h", "0.01", "-o", str(out)]
    test_eq(main(argv), 0)
    frame = pd.read_csv(out, skiprows=1)
    test_eq(list(frame.columns), ["t", "v_1", "dv_1"])
    test_eq(frame.shape[0], 101)
    test_close(frame["v_1"].iloc[0], 2**0.5)


def test_simulate_divergence_exit_code(capsys):
    argv = ["simulate", "--n", "5", "--alpha", "2", "--v0", "1", "--dv0", "10000", "--span", "1"]
    test_eq(main(argv), 1)
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    test_eq(err["code"], "divergence")


def test_invariants_of_spiral(tmp_path, capsys):
    drift = tmp_path / "drift.csv"
    argv = ["invariants", "--n", "4", "--family", "spiral", "--kappa", "0", "--kappa-star", "-0.01",
            "--drift-output", str(drift)]
    test_eq(main(argv), 0)
    result = _json(capsys)["result"]
    test_close(result["kappa_star"], -0.01, eps=1e-9)
    test_close(result["k"][0][1], 0.1, eps=1e-9)
    test_close(result["fowler"]["rho_min"], 0.3204, eps=1e-4)
    frame = pd.read_csv(drift, skiprows=1)
    test_eq(list(frame.columns), ["t", "psi", "psi_star", "k_12"])


def test_classify_from_evidence(capsys):
    test_eq(main(["classify", "--n", "4", "--kappa", "-0.5", "--kappa-star", "0"]), 0)
    result = _json(capsys)["result"]
    test_eq(result["tag"], "CriticalHomogeneous")
    test_close(result["exponent"], -1.0)
    test_eq(main(["classify", "--n", "5", "--alpha", "2", "--phi-limit", "-2.6666666666666665"]), 0)
    test_eq(_json(capsys)["result"]["tag"], "SubcriticalSingular")


def test_classify_inadmissible_exit_code(capsys):
    test_eq(main(["classify", "--n", "4", "--kappa", "-1", "--kappa-star", "0"]), 1)
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    test_eq(err["code"], "inadmissible")


def test_classify_family(capsys):
    argv = ["classify", "--n", "4", "--family", "critical-homogeneous", "--order", "4"]
    test_eq(main(argv), 0)
    test_eq(_json(capsys)["result"]["tag"], "CriticalHomogeneous")


def test_kappa_sweep_keeps_grid_order(capsys):
    argv = ["sweep", "--n", "4", "--kappa-range", "-0.6,0,4", "--kappa-star-range", "-0.02,0,3",
            "--jobs", "3"]
    test_eq(main(argv), 0)
    lines = [json.loads(line) for line in capsys.readouterr().out.splitlines()]
    assert "header" in lines[0]
    cells = lines[1:]
    test_eq([c["index"] for c in cells], list(range(12)))
    test_eq(cells[0]["status"], "inadmissible")
    test_close(cells[0]["kappa"], -0.6)
    test_eq(cells[-1]["tag"], "Removable")
    assert any(c.get("status") == "oscillatory" for c in cells)


def test_alpha_sweep(capsys):
    test_eq(main(["sweep", "--n", "5", "--alpha-range", "1.5,2.5,3"]), 0)
    cells = [json.loads(line) for line in capsys.readouterr().out.splitlines()[1:]]
    test_eq([c["status"] for c in cells], ["ok", "ok", "range"])
    test_eq(cells[0]["regime"], "BelowSerrin")
    test_eq(cells[1]["regime"], "Intermediate")


def test_residual_check(capsys):
    argv = ["residual-check", "--n", "4", "--family", "bubble", "--points", "10"]
    test_eq(main(argv), 0)
    result = _json(capsys)["result"]
    test_eq(result["n_points"], 10)
    assert result["max_relative"] < 1e-6


def test_run_writes_to_stream():
    buffer = io.StringIO()
    test_eq(run(RunConfig(command="constants", n=4, alpha=3.0), out=buffer), 0)
    doc = json.loads(buffer.getvalue())
    test_eq(doc["result"]["regime"], "Critical")


def test_simulate_output_is_deterministic(tmp_path):
    out = tmp_path / "orbit.csv"
    argv = ["simulate", "--n", "4", "--alpha", "3", "--m", "2", "--v0", "1,0", "--dv0", "0,0.1",
            "--span", "50", "-o", str(out)]
    test_eq(main(argv), 0)
    first = out.read_bytes()
    test_eq(main(argv), 0)
    test_eq(out.read_bytes(), first)
