import numpy as np
import pytest

from percact import cli, env


def small_spec(tmp_path, **kw):
    base = dict(task="mug", mode="gradient", beta1=2.0, beta2=3.0, alpha_vw=0.01, alpha_eta=0.1, iters=200,
                stride=50, seed=3, out=str(tmp_path / "run"))
    base.update(kw)
    return cli.RunSpec(**base)


class TestRunSpec:
    def test_config_echo_round_trips(self, tmp_path):
        spec = small_spec(tmp_path, alpha_vw_grid=[0.1, 0.25], alpha_eta_grid=[1e-3], noise=0.05, unit="nats")
        assert cli.RunSpec.from_text(spec.to_text()) == spec
        resolved = spec.resolved()
        assert cli.RunSpec.from_text(resolved.to_text()) == resolved

    def test_resolved_fills_network_sizes(self, tmp_path):
        assert (small_spec(tmp_path).resolved().n_hidden, small_spec(tmp_path).resolved().n_percepts) == (4, 4)
        pp = cli.RunSpec(task="predator_prey").resolved()
        assert (pp.n_hidden, pp.n_percepts) == (20, 13)

    def test_echo_is_plain_key_value(self, tmp_path):
        lines = small_spec(tmp_path).to_text().splitlines()
        assert lines[0] == "task=mug"
        assert all("=" in ln for ln in lines)

    @pytest.mark.parametrize(
        "kw, field",
        [
            (dict(task="zoo"), "task"),
            (dict(task="file:/nonexistent/dir"), "task"),
            (dict(mode="fast"), "mode"),
            (dict(beta1=0.0), "beta1"),
            (dict(beta2=float("nan")), "beta2"),
            (dict(alpha_eta=-1.0), "alpha_eta"),
            (dict(iters=-5), "iters"),
            (dict(noise=1.5), "noise"),
            (dict(task="predator_prey", noise=0.1), "noise"),
            (dict(unit="bytes"), "unit"),
            (dict(mode="grid"), "alpha_vw_grid"),
        ],
    )
    def test_validation_names_field(self, tmp_path, kw, field):
        with pytest.raises(cli.ConfigError) as err:
            small_spec(tmp_path, **kw).validate()
        assert err.value.field == field

    def test_unknown_key_rejected(self):
        with pytest.raises(cli.ConfigError) as err:
            cli.RunSpec.from_text("task=mug\nspeed=3\n")
        assert err.value.field == "speed"

    def test_unparseable_value(self):
        with pytest.raises(cli.ConfigError) as err:
            cli.RunSpec.from_text("iters=many\n")
        assert err.value.field == "iters"


class TestRun:
    def test_gradient_artifacts(self, tmp_path):
        spec = small_spec(tmp_path)
        assert cli.run(spec) == cli.EXIT_OK
        out = tmp_path / "run"
        assert (out / "trace.csv").read_text().splitlines()[0] == "iteration,J,EU,I_omega_x_bits,I_x_a_bits"
        assert (out / "behavior.csv").read_text().splitlines()[0] == "world,a0,aL,aR,a2"
        assert cli.RunSpec.from_text((out / "config.txt").read_text()) == spec.resolved()
        summary = cli.read_summary(out / "summary.txt")
        assert summary["status"] == "ok" and float(summary["gradient_J"]) == pytest.approx(
            float((out / "trace.csv").read_text().splitlines()[-1].split(",")[1])
        )
        assert "np.float64" not in (out / "summary.txt").read_text()

    def test_rerun_is_byte_identical(self, tmp_path):
        spec = small_spec(tmp_path, mode="compare")
        cli.run(spec)
        first = {p.name: p.read_bytes() for p in (tmp_path / "run").iterdir()}
        cli.run(spec)
        second = {p.name: p.read_bytes() for p in (tmp_path / "run").iterdir()}
        assert first.keys() == second.keys()
        for name in first:
            if name == "summary.txt":
                strip = lambda b: [ln for ln in b.splitlines() if not ln.startswith(b"wall_clock_s=")]
                assert strip(first[name]) == strip(second[name])
            else:
                assert first[name] == second[name], name

    def test_analytic_mode(self, tmp_path):
        assert cli.run(small_spec(tmp_path, mode="analytic")) == cli.EXIT_OK
        out = tmp_path / "run"
        assert (out / "analytic_trace.csv").read_text().splitlines()[0] == "sweep,J,I_omega_x,I_x_a,max_change"
        assert not (out / "trace.csv").exists()
        summary = cli.read_summary(out / "summary.txt")
        assert summary["analytic_converged"] == "True"

    def test_compare_reports_gap(self, tmp_path):
        cli.run(small_spec(tmp_path, mode="compare"))
        s = cli.read_summary(tmp_path / "run" / "summary.txt")
        gap = abs(float(s["gradient_J"]) - float(s["analytic_J"])) / abs(float(s["analytic_J"]))
        assert float(s["relative_gap"]) == pytest.approx(gap)

    def test_units_in_nats(self, tmp_path):
        cli.run(small_spec(tmp_path, mode="compare", unit="nats"))
        s = cli.read_summary(tmp_path / "run" / "summary.txt")
        assert "gradient_I_omega_x_nats" in s and "analytic_I_x_a_nats" in s

    def test_config_error_exit(self, tmp_path, capsys):
        assert cli.run(small_spec(tmp_path, task="zoo")) == cli.EXIT_CONFIG
        assert "task" in capsys.readouterr().err

    def test_non_convergence_exit(self, tmp_path):
        code = cli.run(small_spec(tmp_path, mode="analytic", max_sweeps=1))
        assert code == cli.EXIT_NONCONVERGED
        assert cli.read_summary(tmp_path / "run" / "summary.txt")["status"] == "not_converged"

    def test_numeric_failure_exit(self, tmp_path):
        code = cli.run(small_spec(tmp_path, alpha_vw=1e308, alpha_eta=1e308, iters=50))
        assert code == cli.EXIT_NUMERIC
        s = cli.read_summary(tmp_path / "run" / "summary.txt")
        assert s["status"] == "numeric_failure" and "iteration" in s["error"]

    def test_file_task(self, tmp_path):
        task = tmp_path / "task"
        task.mkdir()
        env.save_utility(task / "utility.txt", np.array([[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]]))
        spec = cli.RunSpec(task=f"file:{task}", mode="compare", beta1=3.0, beta2=3.0, alpha_vw=0.05,
                           alpha_eta=0.1, iters=100, stride=50, out=str(tmp_path / "run"))
        assert cli.run(spec) == cli.EXIT_OK
        resolved = cli.RunSpec.from_text((tmp_path / "run" / "config.txt").read_text())
        assert resolved.n_percepts == 2  # defaults to |A| for file tasks
        assert len((tmp_path / "run" / "behavior.csv").read_text().splitlines()) == 4

    def test_grid_mode(self, tmp_path):
        spec = small_spec(tmp_path, mode="grid", iters=50, alpha_vw_grid=[0.01, 0.02], alpha_eta_grid=[0.1])
        assert cli.run(spec) == cli.EXIT_OK
        rows = (tmp_path / "run" / "grid.csv").read_text().splitlines()
        assert rows[0] == "rank,alpha_vw,alpha_eta,final_J,error" and len(rows) == 3
        assert rows[1].startswith("1,")


class TestMain:
    def test_run_verb(self, tmp_path):
        code = cli.main(["run", "--task", "mug", "--mode", "gradient", "--beta1", "2", "--beta2", "3", "--alpha-vw",
                         "0.01", "--alpha-eta", "0.1", "--iters", "20", "--stride", "10", "--out", str(tmp_path / "r")])
        assert code == 0
        spec = cli.RunSpec.from_text((tmp_path / "r" / "config.txt").read_text())
        assert (spec.alpha_vw, spec.iters, spec.mode) == (0.01, 20, "gradient")

    def test_config_file_with_override(self, tmp_path):
        cfg = small_spec(tmp_path, iters=30).to_text()
        (tmp_path / "c.txt").write_text(cfg)
        assert cli.main(["run", "--config", str(tmp_path / "c.txt"), "--seed", "9"]) == 0
        spec = cli.RunSpec.from_text((tmp_path / "run" / "config.txt").read_text())
        assert (spec.seed, spec.iters) == (9, 30)

    def test_grid_verb(self, tmp_path):
        code = cli.main(["grid", "--task", "mug", "--beta1", "2", "--beta2", "3", "--iters", "20", "--grid-vw",
                         "0.01,0.02", "--grid-eta", "0.1", "--out", str(tmp_path / "g")])
        assert code == 0
        assert (tmp_path / "g" / "grid.csv").exists()

    def test_unknown_task_exit_code(self, tmp_path, capsys):
        assert cli.main(["run", "--task", "zoo", "--out", str(tmp_path / "z")]) == 2
        assert "task" in capsys.readouterr().err

    def test_bad_flag_is_usage_error(self, capsys):
        with pytest.raises(SystemExit) as err:
            cli.main(["run", "--mode", "fast"])
        assert err.value.code == 2
        assert "usage" in capsys.readouterr().err

    def test_reproduce_batch(self, tmp_path):
        runs = cli.REFERENCE_RUNS[1:]  # the predator-prey cell is exercised by the acceptance suite
        code, rows = cli.reproduce(tmp_path, iters=30, runs=runs)
        assert code == 0 and [r["run"] for r in rows] == ["mug_high", "mug_low_action", "mug_low_both"]
        report = (tmp_path / "report.csv").read_text().splitlines()
        assert report[0].split(",") == list(cli.REPORT_COLUMNS) and len(report) == 4

    def test_reproduce_isolates_failures(self, tmp_path):
        runs = (("bad", "zoo", 1.0, 1.0, 0.1, 0.1), cli.REFERENCE_RUNS[3])
        code, rows = cli.reproduce(tmp_path, iters=20, runs=runs)
        assert code == cli.EXIT_CONFIG
        assert rows[0]["status"] == "failed" and rows[1]["status"] == "ok"
