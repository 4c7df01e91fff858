"""
Tests for the command handlers and their exit codes.
"""

import json

import pytest

from main import build_parser, command_arguments
from src.ui.commands import EXIT_INPUT, EXIT_OK, CommandRunner, report_body

MODEL = """
case = "lambda_x"
l = 1
p = 2
lambda_x = 3.0
family = "normal"
"""

SIMULATION = """
case = "lambda_x"
l = 1
p = 3
family = "normal"
group_size = {n_k}
q = 2
replications = 3
master_seed = 2024
"""


@pytest.fixture
def runner():
    messages = []
    return CommandRunner(echo=messages.append), messages


@pytest.fixture
def files(tmp_path):
    model = tmp_path / "model.toml"
    model.write_text(MODEL, encoding='utf-8')
    sim = tmp_path / "sim.toml"
    sim.write_text(SIMULATION.format(n_k=60).replace("p = 3", "p = 2"), encoding='utf-8')
    return tmp_path, model, sim


def generated(files, runner):
    tmp_path, model, sim = files
    cli, _ = runner
    data = tmp_path / "data.csv"
    assert cli.run("generate", sim_config_path=str(sim), out_path=str(data)) == EXIT_OK
    return data


class TestFitAndTest:
    """fit and test on a generated dataset."""

    def test_generate_then_fit(self, files, runner):
        tmp_path, model, _ = files
        data = generated(files, runner)
        assert (tmp_path / "data.csv.manifest.json").exists()
        out = tmp_path / "fit.json"
        cli, _ = runner
        code = cli.run("fit", data_path=str(data), model_config_path=str(model), out_path=str(out))
        assert code == EXIT_OK
        payload = json.loads(out.read_text(encoding='utf-8'))
        assert payload["fit"]["converged"] is True
        assert payload["manifest"]["command"] == "fit"
        assert len(payload["manifest"]["inputs"]) == 2

    def test_test_command(self, files, runner):
        tmp_path, model, _ = files
        data = generated(files, runner)
        out = tmp_path / "test.json"
        cli, _ = runner
        code = cli.run("test", data_path=str(data), model_config_path=str(model),
                       null_spec="beta1@1=0,beta1@2=0", out_path=str(out))
        assert code == EXIT_OK
        result = json.loads(out.read_text(encoding='utf-8'))["result"]
        assert result["q"] == 2
        assert result["lr"] >= 0.0

    def test_unknown_coordinate(self, files, runner):
        tmp_path, model, _ = files
        data = generated(files, runner)
        cli, messages = runner
        code = cli.run("test", data_path=str(data), model_config_path=str(model),
                       null_spec="gamma@1=0", out_path=str(tmp_path / "t.json"))
        assert code == EXIT_INPUT
        assert any("Unknown coordinate" in m for m in messages)

    def test_domain_violation(self, files, runner):
        tmp_path, model, _ = files
        data = generated(files, runner)
        cli, messages = runner
        code = cli.run("test", data_path=str(data), model_config_path=str(model),
                       null_spec="sigma2_u@1=-1", out_path=str(tmp_path / "t.json"))
        assert code == EXIT_INPUT
        assert any("domain violation" in m for m in messages)


class TestInputErrors:
    """Malformed inputs exit with code 2."""

    def test_missing_group_column(self, files, runner):
        tmp_path, model, _ = files
        data = tmp_path / "bad.csv"
        data.write_text("y1,x\n1.0,2.0\n", encoding='utf-8')
        cli, _ = runner
        code = cli.run("fit", data_path=str(data), model_config_path=str(model),
                       out_path=str(tmp_path / "fit.json"))
        assert code == EXIT_INPUT

    def test_too_few_rows(self, files, runner):
        tmp_path, model, _ = files
        data = tmp_path / "small.csv"
        data.write_text("group,y1,x\n1,1.0,2.0\n1,1.5,2.5\n2,0.5,1.0\n2,0.7,1.9\n",
                        encoding='utf-8')
        cli, _ = runner
        code = cli.run("fit", data_path=str(data), model_config_path=str(model),
                       out_path=str(tmp_path / "fit.json"))
        assert code == EXIT_INPUT

    def test_missing_data_file(self, files, runner):
        tmp_path, model, _ = files
        cli, _ = runner
        code = cli.run("fit", data_path=str(tmp_path / "none.csv"),
                       model_config_path=str(model), out_path=str(tmp_path / "fit.json"))
        assert code == EXIT_INPUT

    def test_zero_replications(self, files, runner):
        tmp_path, _, sim = files
        cli, _ = runner
        code = cli.run("simulate", sim_config_path=str(sim), out_path=str(tmp_path / "s.json"),
                       replications=0)
        assert code == EXIT_INPUT

    def test_unknown_command(self, runner):
        cli, _ = runner
        assert cli.run("plot") == EXIT_INPUT


class TestSimulate:
    """Rejection-rate study through the command layer."""

    def test_report_independent_of_threads(self, tmp_path, runner):
        sim = tmp_path / "sim.toml"
        sim.write_text(SIMULATION.format(n_k=20), encoding='utf-8')
        cli, _ = runner
        one, two = tmp_path / "one.json", tmp_path / "two.json"
        assert cli.run("simulate", sim_config_path=str(sim), out_path=str(one), threads=1) == EXIT_OK
        assert cli.run("simulate", sim_config_path=str(sim), out_path=str(two), threads=8) == EXIT_OK
        assert report_body(one) == report_body(two)
        table = (tmp_path / "one.txt").read_text(encoding='utf-8')
        assert table.startswith("# command: simulate\n")
        assert f"# inputs: {sim} " in table
        assert "# seed: " in table and "# elapsed_seconds: " in table
        assert "\nNull rejection rates (%)\n" in table


class TestParser:
    """Argument mapping."""

    def test_simulate_arguments(self):
        args = build_parser().parse_args(["simulate", "c.toml", "-o", "r.json", "--reps", "5",
                                          "--threads", "2"])
        assert command_arguments(args) == dict(sim_config_path="c.toml", out_path="r.json",
                                               replications=5, seed=None, threads=2)

    def test_test_arguments(self):
        args = build_parser().parse_args(["test", "d.csv", "m.toml", "--null", "beta1@1=0",
                                          "-o", "t.json", "--rho-exponent", "p-half"])
        kwargs = command_arguments(args)
        assert kwargs["null_spec"] == "beta1@1=0" and kwargs["rho_exponent"] == "p-half"
