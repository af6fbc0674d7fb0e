"""End-to-end tests for every CLI subcommand: exit codes, CSV schemas,
flag overrides, and seed determinism."""

import subprocess
import sys

import numpy as np
import pytest

from qgm_sim.cli import main
from qgm_sim.engine import METRICS_HEADER, heading_change_sum

DEMO_INI = """\
[problem]
kind = quadratic
dim = 8
zeta = 1.0
sigma = 0.2

[topology]
kind = ring
n = 4

[optim]
kind = qg_dsgdm
eta = 0.05

[run]
steps = 20
seed = 3
"""


@pytest.fixture()
def demo_config(tmp_path):
    path = tmp_path / "demo.ini"
    path.write_text(DEMO_INI)
    return str(path)


def read_csv(path):
    lines = path.read_text().splitlines()
    return lines[0], [line.split(",") for line in lines[1:]]


def quiet_main(argv, recwarn=None):
    import warnings
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return main(argv)


class TestRunCommand:
    def test_valid_config(self, demo_config, tmp_path, capsys):
        out = tmp_path / "m.csv"
        assert quiet_main(["run", "--config", demo_config, "--out", str(out)]) == 0
        header, rows = read_csv(out)
        assert header == METRICS_HEADER
        assert len(rows) == 20
        stdout = capsys.readouterr().out
        assert "final_loss=" in stdout and "final_consensus_dist=" in stdout

    def test_missing_optimizer_field_exits_1(self, tmp_path, capsys):
        bad = tmp_path / "bad.ini"
        bad.write_text("[problem]\nkind = quadratic\n")
        assert main(["run", "--config", str(bad)]) == 1
        assert "optim.kind" in capsys.readouterr().err

    def test_unreadable_config_exits_1(self, tmp_path, capsys):
        assert main(["run", "--config", str(tmp_path / "nope.ini")]) == 1
        assert "cannot read" in capsys.readouterr().err

    def test_unknown_flag_exits_1(self, demo_config, capsys):
        assert main(["run", "--config", demo_config, "--bogus", "1"]) == 1
        assert "--bogus" in capsys.readouterr().err

    def test_unknown_config_key_exits_1(self, demo_config, capsys):
        assert main(["run", "--config", demo_config, "--optim.lr", "0.1"]) == 1
        assert "optim.lr" in capsys.readouterr().err

    def test_eta_override_reflected_in_lr_column(self, demo_config, tmp_path):
        out = tmp_path / "m.csv"
        assert quiet_main(["run", "--config", demo_config, "--out", str(out),
                           "--optim.eta", "0.013"]) == 0
        _, rows = read_csv(out)
        assert all(row[2] == "0.013" for row in rows)

    def test_divergence_exits_2(self, demo_config, tmp_path, capsys):
        code = quiet_main([
            "run", "--config", demo_config, "--out", str(tmp_path / "m.csv"),
            "--problem.kind", "rosenbrock", "--problem.dim", "2",
            "--problem.sigma", "0", "--problem.zeta", "0",
            "--topology.n", "2", "--optim.eta", "30"])
        assert code == 2
        err = capsys.readouterr().err
        assert "non-finite" in err and "aborting" in err

    def test_repeat_and_thread_count_byte_identical(self, demo_config, tmp_path):
        outs = []
        for name, extra in [("a.csv", []), ("b.csv", []),
                            ("c.csv", ["--threads", "4"])]:
            path = tmp_path / name
            assert quiet_main(["run", "--config", demo_config,
                               "--out", str(path)] + extra) == 0
            outs.append(path.read_bytes())
        assert outs[0] == outs[1] == outs[2]

    def test_plot_script_emitted(self, demo_config, tmp_path):
        out = tmp_path / "m.csv"
        assert quiet_main(["run", "--config", demo_config, "--out", str(out),
                           "--plot-script"]) == 0
        script = (tmp_path / "m.csv.plot.py").read_text()
        compile(script, "plot.py", "exec")


class TestValidateCommand:
    def test_reports_violated_bound(self, demo_config, capsys):
        assert main(["validate", "--config", demo_config]) == 0
        stdout = capsys.readouterr().out
        assert "violated" in stdout
        assert "suggested_eta=" in stdout

    def test_satisfied_bound(self, demo_config, capsys):
        assert main(["validate", "--config", demo_config,
                     "--optim.beta", "0.001"]) == 0
        assert "satisfied" in capsys.readouterr().out

    def test_time_varying_topology(self, demo_config, capsys):
        assert main(["validate", "--config", demo_config,
                     "--topology.kind", "one_peer_exponential",
                     "--topology.n", "8"]) == 0
        assert "time-varying" in capsys.readouterr().out


class TestConsensusCommand:
    def test_schema_and_speedup(self, tmp_path, capsys):
        out = tmp_path / "c.csv"
        assert main(["consensus", "--topology", "ring", "--n", "16",
                     "--beta", "0.9", "--mu", "0.9", "--T", "200",
                     "--seed", "7", "--out", str(out)]) == 0
        header, rows = read_csv(out)
        assert header == "iter,dist_gossip,dist_qg,mean_drift_qg"
        assert len(rows) == 201
        assert [r[0] for r in rows[:3]] == ["0", "1", "2"]
        assert rows[0][1] == rows[0][2]  # both start at the same distance
        stdout = capsys.readouterr().out
        gossip = int(stdout.split("iterations_to_1e-2_gossip=")[1].split()[0])
        qg = int(stdout.split("iterations_to_1e-2_qg=")[1].split()[0])
        assert qg < gossip

    def test_seed_determinism(self, tmp_path):
        blobs = []
        for name in ("a.csv", "b.csv"):
            path = tmp_path / name
            assert main(["consensus", "--n", "8", "--T", "50",
                         "--seed", "5", "--out", str(path)]) == 0
            blobs.append(path.read_bytes())
        assert blobs[0] == blobs[1]

    def test_unknown_scheme_exits_1(self, tmp_path, capsys):
        assert main(["consensus", "--scheme", "magic",
                     "--out", str(tmp_path / "c.csv")]) == 1
        assert "scheme" in capsys.readouterr().err


class TestToy2dCommand:
    def test_schema_and_oscillation_ordering(self, tmp_path, capsys):
        out = tmp_path / "t.csv"
        assert quiet_main(["toy2d", "--steps", "60", "--out", str(out)]) == 0
        header, rows = read_csv(out)
        assert header == ("step,dsgd_x,dsgd_y,dsgdm_x,dsgdm_y,"
                          "qg_dsgdm_x,qg_dsgdm_y")
        assert len(rows) == 61
        stdout = capsys.readouterr().out
        sums = {}
        for line in stdout.splitlines():
            if line.startswith("kind="):
                kind = line.split("kind=")[1].split()[0]
                sums[kind] = float(line.split("heading_sum=")[1])
        assert sums["qg_dsgdm"] < sums["dsgdm"]
        assert sums["dsgdm"] > sums["dsgd"]


class TestTrajectoryCommand:
    def test_rosenbrock_oscillation_study(self, tmp_path):
        out = tmp_path / "rb.csv"
        assert quiet_main(["trajectory", "--problem", "rosenbrock",
                           "--kinds", "sgdm,s_qg_dsgdm", "--eta", "0.001",
                           "--beta", "0.9", "--steps", "10000",
                           "--init", "0.0,0.0", "--out", str(out)]) == 0
        header, rows = read_csv(out)
        assert header == "step,sgdm_x,sgdm_y,s_qg_dsgdm_x,s_qg_dsgdm_y"
        assert len(rows) == 10001
        data = np.array([[float(c) for c in row] for row in rows])
        sgdm, qg = data[:, 1:3], data[:, 3:5]
        assert np.linalg.norm(sgdm[-1] - [1.0, 1.0]) < 0.5
        assert np.linalg.norm(qg[-1] - [1.0, 1.0]) < 0.5
        assert heading_change_sum(qg) < heading_change_sum(sgdm)

    def test_start_at_minimum_stays(self, tmp_path):
        out = tmp_path / "rb.csv"
        assert quiet_main(["trajectory", "--problem", "rosenbrock",
                           "--kinds", "sgdm,s_qg_dsgdm", "--steps", "50",
                           "--init", "1.0,1.0", "--out", str(out)]) == 0
        _, rows = read_csv(out)
        for row in rows:
            assert [float(c) for c in row[1:]] == [1.0, 1.0, 1.0, 1.0]

    def test_nonconvex_traces_finite_and_approach_origin(self, tmp_path):
        out = tmp_path / "nc.csv"
        assert quiet_main(["trajectory", "--problem", "nonconvex_toy",
                           "--kinds", "sgdm,s_qg_dsgdm", "--eta", "0.01",
                           "--beta", "0.9", "--steps", "10000",
                           "--init=-2.0,0.0", "--out", str(out)]) == 0
        _, rows = read_csv(out)
        data = np.array([[float(c) for c in row] for row in rows])
        assert np.all(np.isfinite(data))
        for cols in (data[-1, 1:3], data[-1, 3:5]):
            assert np.linalg.norm(cols) < 1.0  # started at distance 2

    def test_bad_kind_exits_1(self, tmp_path, capsys):
        assert main(["trajectory", "--kinds", "adam",
                     "--out", str(tmp_path / "x.csv")]) == 1
        assert "adam" in capsys.readouterr().err

    def test_bad_problem_exits_1(self, tmp_path, capsys):
        assert main(["trajectory", "--problem", "quadratic",
                     "--out", str(tmp_path / "x.csv")]) == 1
        assert "quadratic" in capsys.readouterr().err


class TestPartitionCommand:
    def test_schema_and_counts(self, tmp_path):
        out = tmp_path / "p.csv"
        assert main(["partition", "--samples", "100", "--classes", "5",
                     "--n", "4", "--alpha", "0.5", "--seed", "1",
                     "--out", str(out)]) == 0
        header, rows = read_csv(out)
        assert header == "client,class,count"
        assert len(rows) == 4 * 5
        total = sum(int(r[2]) for r in rows)
        assert total == 100

    def test_fixed_seed_identical_bytes(self, tmp_path):
        blobs = []
        for name in ("a.csv", "b.csv"):
            path = tmp_path / name
            assert main(["partition", "--samples", "200", "--classes", "10",
                         "--n", "8", "--alpha", "0.1", "--seed", "42",
                         "--out", str(path)]) == 0
            blobs.append(path.read_bytes())
        assert blobs[0] == blobs[1]


class TestTopoCommand:
    def test_complete_four_prints_quarter_matrix(self, capsys):
        assert main(["topo", "--kind", "complete", "--n", "4"]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[:4] == ["0.25,0.25,0.25,0.25"] * 4
        assert lines[4] == "rho,1.0"

    def test_scheme_alias_and_out_file(self, tmp_path, capsys):
        out = tmp_path / "w.csv"
        assert main(["topo", "--kind", "ring", "--n", "3",
                     "--scheme", "mh", "--out", str(out)]) == 0
        rows = out.read_text().splitlines()
        assert len(rows) == 3
        assert all(abs(sum(float(v) for v in row.split(",")) - 1.0) < 1e-12
                   for row in rows)
        assert "rho," in capsys.readouterr().out

    def test_torus_rows_parameter(self, capsys):
        assert main(["topo", "--kind", "torus", "--n", "8", "--rows", "2"]) == 0
        assert "rho," in capsys.readouterr().out

    def test_unknown_kind_exits_1(self, capsys):
        assert main(["topo", "--kind", "hypercube", "--n", "8"]) == 1
        assert "hypercube" in capsys.readouterr().err

    def test_unknown_scheme_exits_1(self, capsys):
        assert main(["topo", "--kind", "ring", "--n", "4",
                     "--scheme", "magic"]) == 1
        assert "magic" in capsys.readouterr().err


class TestParserBehavior:
    def test_unknown_subcommand_exits_1(self):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 1

    def test_help_exits_0(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["run", "--help"])
        assert exc.value.code == 0
        assert "--config" in capsys.readouterr().out

    def test_module_invocation_subprocess(self, tmp_path):
        proc = subprocess.run(
            [sys.executable, "-m", "qgm_sim.cli", "topo",
             "--kind", "complete", "--n", "2"],
            capture_output=True, text=True, timeout=60)
        assert proc.returncode == 0
        assert proc.stdout.splitlines()[0] == "0.5,0.5"
