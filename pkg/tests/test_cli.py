"""Command-line interface: subcommands, file outputs, and exit codes."""

import importlib.resources as resources
import json

import pytest

from parlink.cli import (
    EXIT_CONFIG,
    EXIT_CONTRACT,
    EXIT_NOCONV,
    EXIT_OK,
    main,
)
from parlink.errors import ConvergenceError

_BUNDLED = resources.files("parlink") / "configs"
SUB6 = str(_BUNDLED / "pure-sub6.cfg")
MMWAVE = str(_BUNDLED / "pure-mmwave.cfg")
MIXED = str(_BUNDLED / "mixed.cfg")

FAST_CONFIG = {
    "fps": 120, "frame_bits": 400000, "packet_bits": 40000,
    "deadline_slots": 1.5, "q_max": 4, "n_cap": 24,
    "links": [{"type": "exponential", "capacity_bps": 36e6}] * 2,
}


@pytest.fixture(scope="module")
def fast_config_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("configs") / "fast.cfg"
    path.write_text(json.dumps(FAST_CONFIG))
    return str(path)


@pytest.fixture(scope="module")
def sub6_policy_path(tmp_path_factory):
    """Solve the reference two-link queueing system once; reuse everywhere."""
    out = tmp_path_factory.mktemp("solved") / "sub6-policy.json"
    assert main(["solve", "--config", SUB6, "--out", str(out)]) == EXIT_OK
    return str(out)


class TestValidate:
    def test_summarizes_a_good_config(self, capsys):
        assert main(["validate", "--config", SUB6]) == EXIT_OK
        out = capsys.readouterr().out
        assert out.splitlines()[0] == "ok"
        assert "K 10  q_max 10  n_cap 24  states 121  actions 251  allow_drop True" in out
        assert "link 1: exponential 36000000 b/s (7.5 packets/slot)" in out

    def test_reports_onoff_links(self, capsys):
        assert main(["validate", "--config", MMWAVE]) == EXIT_OK
        out = capsys.readouterr().out
        assert "link 1: onoff p_out 0.2 mean_outage 5 slots" in out

    def test_unknown_field_exits_config(self, tmp_path, capsys):
        path = tmp_path / "bad.cfg"
        path.write_text(json.dumps({**FAST_CONFIG, "colour": "blue"}))
        assert main(["validate", "--config", str(path)]) == EXIT_CONFIG
        assert "colour" in capsys.readouterr().err

    def test_missing_file_exits_config(self):
        assert main(["validate", "--config", "/nonexistent.cfg"]) == EXIT_CONFIG

    def test_directory_exits_config(self, tmp_path):
        assert main(["validate", "--config", str(tmp_path)]) == EXIT_CONFIG

    def test_infeasible_link_exits_config(self, tmp_path):
        path = tmp_path / "infeasible.cfg"
        path.write_text(json.dumps({
            **FAST_CONFIG,
            "links": [{"type": "onoff", "p_out": 0.9, "mean_outage_slots": 1}],
            "n_cap": 20,
        }))
        assert main(["validate", "--config", str(path)]) == EXIT_CONFIG


class TestSolve:
    def test_writes_policy_and_figure(self, sub6_policy_path):
        import os

        data = json.loads(open(sub6_policy_path).read())
        assert data["gain"] == 0.963733153212
        assert data["iterations"] > 0
        assert len(data["policy"]) == 121
        base, _ = os.path.splitext(sub6_policy_path)
        assert os.path.exists(base + ".png")

    def test_stdout_mode(self, fast_config_path, capsys):
        assert main(["solve", "--config", fast_config_path]) == EXIT_OK
        captured = capsys.readouterr()
        document = json.loads(captured.out)
        assert set(document) >= {"config", "policy", "gain"}
        assert captured.err.startswith("gain 0.")

    def test_summary_line(self, fast_config_path, tmp_path, capsys):
        out = tmp_path / "policy.json"
        assert main(["solve", "--config", fast_config_path, "--out", str(out)]) == EXIT_OK
        summary = capsys.readouterr().out
        assert summary.startswith("gain 0.")
        assert "iterations" in summary and "residual" in summary

    def test_reruns_are_byte_identical(self, fast_config_path, tmp_path):
        first = tmp_path / "a.json"
        second = tmp_path / "b.json"
        main(["solve", "--config", fast_config_path, "--out", str(first)])
        main(["solve", "--config", fast_config_path, "--out", str(second)])
        assert first.read_bytes() == second.read_bytes()

    def test_nonconvergence_exits_3(self, fast_config_path, monkeypatch, capsys):
        def fail(mdp, **kwargs):
            raise ConvergenceError("no convergence in 5 iterations", residual=0.25)

        monkeypatch.setattr("parlink.cli.relative_value_iteration", fail)
        assert main(["solve", "--config", fast_config_path]) == EXIT_NOCONV
        assert "no convergence" in capsys.readouterr().err


class TestSimulate:
    def test_json_report(self, tmp_path, fast_config_path):
        out = tmp_path / "report.json"
        code = main(["simulate", "--config", fast_config_path, "--blocks", "2000",
                     "--seed", "1", "--out", str(out)])
        assert code == EXIT_OK
        report = json.loads(out.read_text())
        assert report["blocks_total"] == 2000
        assert report["seed"] == 1
        assert report["ci_low"] <= report["estimate"] <= report["ci_high"]
        assert sum(report["state_visit_histogram"].values()) == 2000
        assert (tmp_path / "report.png").exists()

    def test_reuses_saved_policy(self, sub6_policy_path, capsys):
        code = main(["simulate", "--config", SUB6, "--policy", sub6_policy_path,
                     "--blocks", "2000", "--seed", "4"])
        assert code == EXIT_OK
        captured = capsys.readouterr()
        assert "estimate 0." in captured.err
        assert json.loads(captured.out)["blocks_total"] == 2000

    def test_histogram_csv(self, fast_config_path, capsys):
        code = main(["simulate", "--config", fast_config_path, "--blocks", "500",
                     "--seed", "2", "--format", "csv"])
        assert code == EXIT_OK
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "state,count"
        assert sum(int(line.rsplit(",", 1)[1]) for line in lines[1:]) == 500

    def test_identical_seeds_identical_bytes(self, tmp_path, fast_config_path):
        outs = []
        for name in ("r1.json", "r2.json"):
            out = tmp_path / name
            main(["simulate", "--config", fast_config_path, "--blocks", "1000",
                  "--seed", "9", "--out", str(out)])
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_zero_blocks_exits_contract(self, fast_config_path):
        assert main(["simulate", "--config", fast_config_path, "--blocks", "0",
                     "--seed", "1"]) == EXIT_CONTRACT

    def test_corrupted_policy_exits_contract(self, tmp_path, fast_config_path,
                                             sub6_policy_path):
        data = json.loads(open(sub6_policy_path).read())
        data["policy"][0]["action"] = [99, 0]
        bad = tmp_path / "bad-policy.json"
        bad.write_text(json.dumps(data))
        assert main(["simulate", "--config", SUB6, "--policy", str(bad),
                     "--blocks", "100", "--seed", "1"]) == EXIT_CONTRACT

    def test_unparseable_policy_exits_contract(self, tmp_path, fast_config_path):
        bad = tmp_path / "garbage.json"
        bad.write_text("{nope")
        assert main(["simulate", "--config", fast_config_path, "--policy", str(bad),
                     "--blocks", "100", "--seed", "1"]) == EXIT_CONTRACT

    def test_missing_policy_file_exits_config(self, fast_config_path):
        assert main(["simulate", "--config", fast_config_path, "--policy",
                     "/nonexistent.json", "--blocks", "100",
                     "--seed", "1"]) == EXIT_CONFIG


class TestSweep:
    def test_default_outage_grid(self, tmp_path, capsys):
        out = tmp_path / "sweep.csv"
        code = main(["sweep", "--config", MMWAVE, "--param", "onoff.p_out",
                     "--workers", "2", "--out", str(out)])
        assert code == EXIT_OK
        lines = out.read_text().splitlines()
        assert lines[0] == "parameter,gain,sim_estimate,ci_low,ci_high"
        assert len(lines) == 22  # header + 21 grid points, 0 to 0.5 by 0.025
        assert lines[1].startswith("0,")
        gains = [float(line.split(",")[1]) for line in lines[1:]]
        assert abs(gains[0] - 1.0) < 1e-9
        assert all(a >= b - 1e-12 for a, b in zip(gains, gains[1:]))
        assert (tmp_path / "sweep.png").exists()

    def test_capacity_units_and_simulation_columns(self, tmp_path):
        out = tmp_path / "cap.csv"
        code = main(["sweep", "--config", SUB6, "--param", "exponential.capacity_bps",
                     "--from", "28.8 Mb/s", "--to", "36 Mb/s", "--step", "7.2 Mb/s",
                     "--blocks", "20000", "--seed", "3", "--out", str(out)])
        assert code == EXIT_OK
        lines = out.read_text().splitlines()
        assert len(lines) == 3
        assert lines[1].startswith("28800000,")
        assert lines[2].startswith("36000000,0.963733153212,")
        for line in lines[1:]:
            _, gain, estimate, low, high = line.split(",")
            assert float(low) <= float(estimate) <= float(high)
            assert 0.0 <= float(gain) <= 1.0

    def test_single_point_when_from_equals_to(self, fast_config_path, capsys):
        code = main(["sweep", "--config", fast_config_path,
                     "--param", "exponential.capacity_bps",
                     "--from", "36e6", "--to", "36e6", "--step", "1e6"])
        assert code == EXIT_OK
        lines = capsys.readouterr().out.splitlines()
        assert len(lines) == 2
        assert lines[1].startswith("36000000,")

    def test_worker_count_does_not_change_bytes(self, tmp_path, fast_config_path):
        texts = []
        for workers in ("1", "3"):
            out = tmp_path / f"w{workers}.csv"
            main(["sweep", "--config", fast_config_path,
                  "--param", "exponential.capacity_bps",
                  "--from", "24e6", "--to", "72e6", "--step", "12e6",
                  "--blocks", "5000", "--seed", "7",
                  "--workers", workers, "--out", str(out)])
            texts.append(out.read_bytes())
        assert texts[0] == texts[1]

    def test_blocks_without_seed_exits_config(self, fast_config_path):
        assert main(["sweep", "--config", fast_config_path,
                     "--param", "exponential.capacity_bps",
                     "--blocks", "1000"]) == EXIT_CONFIG

    def test_bad_grids_exit_config(self, fast_config_path):
        base = ["sweep", "--config", fast_config_path,
                "--param", "exponential.capacity_bps"]
        assert main(base + ["--step", "0"]) == EXIT_CONFIG
        assert main(base + ["--from", "2e6", "--to", "1e6"]) == EXIT_CONFIG
        assert main(base + ["--from", "nonsense"]) == EXIT_CONFIG

    def test_param_family_must_exist(self, fast_config_path):
        assert main(["sweep", "--config", fast_config_path,
                     "--param", "onoff.p_out"]) == EXIT_CONFIG

    def test_failed_points_marked_and_exit_3(self, fast_config_path, monkeypatch,
                                             tmp_path, capsys):
        def fail(mdp, **kwargs):
            raise ConvergenceError("no convergence in 2 iterations", residual=0.5)

        monkeypatch.setattr("parlink.cli.relative_value_iteration", fail)
        out = tmp_path / "failed.csv"
        code = main(["sweep", "--config", fast_config_path,
                     "--param", "exponential.capacity_bps",
                     "--from", "36e6", "--to", "36e6", "--step", "1e6",
                     "--out", str(out)])
        assert code == EXIT_NOCONV
        assert out.read_text().splitlines()[1] == "36000000,error,,,"


class TestPolicyTable:
    def test_text_grids(self, sub6_policy_path, capsys):
        code = main(["policy-table", "--config", SUB6,
                     "--policy", sub6_policy_path])
        assert code == EXIT_OK
        out = capsys.readouterr().out
        assert "scheduled fraction per link (link1\\link2)" in out
        assert "redundancy" in out
        assert "0.5\\0.5" in out
        assert "drop" in out
        assert "q1=0" in out and "q2=10" in out

    def test_csv_dump(self, sub6_policy_path, capsys):
        code = main(["policy-table", "--config", SUB6,
                     "--policy", sub6_policy_path, "--format", "csv"])
        assert code == EXIT_OK
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "q1,q2,frac1,frac2,redundancy"
        assert len(lines) == 122
        assert lines[1] == "0,0,0.5,0.6,0.1"
        assert any(line.endswith("drop,drop,") for line in lines)

    def test_mixed_csv_has_availability_column(self, tmp_path, capsys):
        # solved fresh; the mixed system is small enough to keep this quick
        code = main(["policy-table", "--config", MIXED, "--format", "csv"])
        assert code == EXIT_OK
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "link1_state,q1,q2,frac1,frac2,redundancy"
        assert lines[1] == "Available,0,0,1.0,0.0,0.0"

    def test_three_links_need_csv(self, tmp_path, capsys):
        path = tmp_path / "three.cfg"
        path.write_text(json.dumps({
            **FAST_CONFIG, "q_max": 1, "n_cap": 12,
            "links": [{"type": "exponential", "capacity_bps": 36e6}] * 3,
        }))
        assert main(["policy-table", "--config", str(path)]) == EXIT_CONTRACT
        assert "--format csv" in capsys.readouterr().err
        assert main(["policy-table", "--config", str(path),
                     "--format", "csv"]) == EXIT_OK

    def test_writes_table_and_figure(self, sub6_policy_path, tmp_path, capsys):
        out = tmp_path / "table.txt"
        code = main(["policy-table", "--config", SUB6,
                     "--policy", sub6_policy_path, "--out", str(out)])
        assert code == EXIT_OK
        assert out.exists()
        assert (tmp_path / "table.png").exists()


class TestArgumentErrors:
    def test_unknown_subcommand(self):
        with pytest.raises(SystemExit) as err:
            main(["mangle"])
        assert err.value.code == 2

    def test_simulate_requires_seed(self, fast_config_path):
        with pytest.raises(SystemExit) as err:
            main(["simulate", "--config", fast_config_path, "--blocks", "10"])
        assert err.value.code == 2
