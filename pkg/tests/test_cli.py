import json

from recontext.cli import main
from recontext.config import echo_config

from test_pipeline import build_config


def write_config_file(tmp_path, config) -> str:
    path = tmp_path / "run.cfg"
    path.write_text(echo_config(config), "utf-8")
    return str(path)


class TestRunCommand:
    def test_full_run_exits_zero(self, tmp_path, capsys):
        cfg = write_config_file(tmp_path, build_config(tmp_path, n_products=1))
        assert main(["run", "-c", cfg]) == 0
        out = capsys.readouterr().out
        assert "stage ingest" in out
        assert "stage report" in out

    def test_rank_without_outputs_exits_two(self, tmp_path, capsys):
        cfg = write_config_file(tmp_path, build_config(tmp_path, n_products=1))
        assert main(["run", "-c", cfg, "--stages", "rank"]) == 2
        assert "requires" in capsys.readouterr().err

    def test_unknown_stage_exits_two(self, tmp_path, capsys):
        cfg = write_config_file(tmp_path, build_config(tmp_path, n_products=1))
        assert main(["run", "-c", cfg, "--stages", "warp"]) == 2

    def test_config_error_exits_two(self, tmp_path, capsys):
        path = tmp_path / "bad.cfg"
        path.write_text("{}", "utf-8")
        assert main(["run", "-c", str(path)]) == 2
        assert "products" in capsys.readouterr().err

    def test_seed_flag_overrides_config(self, tmp_path):
        config = build_config(tmp_path, n_products=1)
        cfg = write_config_file(tmp_path, config)
        assert main(["run", "-c", cfg, "--seed", "7", "--stages", "ingest"]) == 0
        workdir = tmp_path / "out"
        run_dirs = list((workdir / "runs").iterdir())
        assert len(run_dirs) == 1
        echoed = json.loads((run_dirs[0] / "config_echo.json").read_text())
        assert echoed["seed"] == 7

    def test_stage_subset_run(self, tmp_path):
        cfg = write_config_file(tmp_path, build_config(tmp_path, n_products=1))
        assert main(["run", "-c", cfg, "--stages", "ingest,bank"]) == 0
        assert main(["run", "-c", cfg, "--stages", "augment,filter"]) == 0

    def test_mock_with_endpoints_warns(self, tmp_path, capsys):
        config = build_config(tmp_path, n_products=1)
        config["endpoints"] = {"base_url": "http://example.test"}
        cfg = write_config_file(tmp_path, config)
        assert main(["run", "-c", cfg, "--stages", "ingest"]) == 0
        assert "ignored" in capsys.readouterr().err


class TestReportCommand:
    def test_report_after_full_run(self, tmp_path):
        cfg = write_config_file(tmp_path, build_config(tmp_path, n_products=1))
        assert main(["run", "-c", cfg]) == 0
        assert main(["report", "-c", cfg]) == 0

    def test_report_before_rank_exits_two(self, tmp_path):
        cfg = write_config_file(tmp_path, build_config(tmp_path, n_products=1))
        assert main(["report", "-c", cfg]) == 2
