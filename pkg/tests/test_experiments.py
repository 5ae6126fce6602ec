import json
import subprocess
import sys

import pytest

from jobpar import cli
from jobpar.experiments import (SCHEMAS, ExperimentSpec, ResultTable, ValidationError, emit_default,
                                run_experiment, validate_spec)


def test_minimal_spec_gets_defaults():
    spec = validate_spec("kind = table1\nseed = 42")
    assert spec.kind == "table1" and spec.seed == 42
    assert spec.parameters["lambdas"] == (0.3, 0.9)
    assert spec.output_path == "table1.csv"


@pytest.mark.parametrize("kind", sorted(SCHEMAS))
def test_default_roundtrip(kind):
    spec = validate_spec(emit_default(kind))
    assert spec == ExperimentSpec(kind, {k: p.default for k, p in SCHEMAS[kind].items()}, 0)


def test_validation_errors():
    with pytest.raises(ValidationError, match=r"line 2: lambda: .*lambda < 1"):
        validate_spec("kind = cdf_compare\nlambda = 1.5\n")
    with pytest.raises(ValidationError, match="line 3: bogus"):
        validate_spec("# comment\nkind = table1\nbogus = 1\n")
    with pytest.raises(ValidationError, match="unknown kind"):
        validate_spec("kind = figure9\n")
    with pytest.raises(ValidationError, match="line 1"):
        validate_spec("kind table1\n")
    with pytest.raises(ValidationError, match="kind"):
        validate_spec("seed = 1\n")
    with pytest.raises(ValidationError, match="d: cannot read"):
        validate_spec("kind = cdf_compare\nd = two\n")
    with pytest.raises(ValidationError, match="not one of"):
        validate_spec("kind = insensitivity\nlaws = exponential, pareto\n")


def test_comments_and_blank_lines():
    spec = validate_spec("\n# header\nkind = meanfield_sweep  # trailing\n\nds = 2, 3\n")
    assert spec.parameters["ds"] == (2, 3)


def test_empty_grid_gives_empty_table(tmp_path):
    table = run_experiment(validate_spec("kind = meanfield_sweep\nlambdas =\n"), tmp_path)
    assert table.rows == 0
    assert (tmp_path / "meanfield_sweep.csv").read_text().strip() == "lambda,d,mean_q,heavy_traffic_bound,bound_applies"


def test_meanfield_sweep_d1_column(tmp_path):
    t = run_experiment(validate_spec("kind = meanfield_sweep\nlambdas = 0.5, 0.8\nds = 1, 2\n"), tmp_path)
    rows = list(zip(t.columns["lambda"], t.columns["d"], t.columns["mean_q"]))
    assert rows[0] == (0.5, 1, pytest.approx(1.0)) and rows[2] == (0.8, 1, pytest.approx(4.0))
    meta = json.loads((tmp_path / "meanfield_sweep.json").read_text())
    assert meta["columns"] == list(t.columns) and meta["seed"] == 0 and "version" in meta


def test_reproducible_csv(tmp_path):
    text = "kind = makespan_suite\ninstances = 6\nn_max = 15\nseed = 3\n"
    a = run_experiment(validate_spec(text), tmp_path / "a").to_csv()
    b = run_experiment(validate_spec(text), tmp_path / "b").to_csv()
    assert a == b
    assert (tmp_path / "a" / "makespan_suite.csv").read_bytes() == (tmp_path / "b" / "makespan_suite.csv").read_bytes()


def test_result_table_lengths():
    with pytest.raises(ValueError):
        ResultTable({"a": [1], "b": [1, 2]})


@pytest.mark.parametrize("text", [
    "kind = table1\nlambdas = 0.3\nds = 2\nns = 20\nsnapshots = 5\n",
    "kind = cdf_compare\nn = 20\nsnapshots = 5\n",
    "kind = transient_ccdf\nn = 20\nreplicas = 2\nhorizon = 2\n",
    "kind = insensitivity\nn = 20\nsnapshots = 5\n",
    "kind = coupling_suite\nn = 10\nevents = 200\n",
    "kind = tv_curve\nns = 10\ntimes = 0, 1\nreplicas = 3\n",
])
def test_every_kind_runs_small(text, tmp_path):
    table = run_experiment(validate_spec(text), tmp_path)
    assert table.rows > 0


def test_table1_layout(tmp_path):
    t = run_experiment(validate_spec("kind = table1\nns = 20, 30\nsnapshots = 5\n"), tmp_path)
    assert t.columns["row"].count("mean-field") == 4
    assert t.columns["row"].count("n=20") == 4 and t.columns["row"].count("n=30") == 4


def test_cli_exit_codes(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("kind = meanfield_sweep\nlambdas = 0.5\nds = 2\n")
    assert cli.main(["runexp", str(cfg), "--out", str(tmp_path / "o"), "--seed", "4"]) == 0
    assert json.loads((tmp_path / "o" / "meanfield_sweep.json").read_text())["seed"] == 4
    bad = tmp_path / "bad.cfg"
    bad.write_text("kind = table1\nlambdas = 1.5\n")
    assert cli.main(["runexp", str(bad)]) == 2
    assert cli.main(["runexp", str(tmp_path / "missing.cfg")]) == 4
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert cli.main(["runexp", str(cfg), "--out", str(blocker)]) == 4
    assert cli.main(["list-kinds"]) == 0
    assert "table1" in capsys.readouterr().out
    assert cli.main(["emit-default", "nope"]) == 2
    assert cli.main(["emit-default", "tv_curve"]) == 0
    assert "kind = tv_curve" in capsys.readouterr().out


def test_cli_runtime_error_code(tmp_path, monkeypatch):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("kind = meanfield_sweep\n")

    def boom(*a, **k):
        raise RuntimeError("solver exploded")
    monkeypatch.setattr(cli, "run_experiment", boom)
    assert cli.main(["runexp", str(cfg)]) == 3


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "jobpar", "list-kinds"], capture_output=True, text=True)
    assert out.returncode == 0 and "makespan_suite" in out.stdout
