import csv
import json
import os

import numpy as np
import pytest
import yaml
from scipy import stats

from odyn.cli import main
from odyn.config import ExperimentConfig
from odyn.drifts import perfect_learning_state
from odyn.errors import ConfigError
from odyn.experiments import save_state
from odyn.histogram import cosines
from odyn.overlaps import TeacherSpec, init_student, make_teacher, overlaps_of
from odyn.trajectory import Trajectory

SMALL = ["--d", "20", "--p", "3", "--k", "2", "--gamma", "0.5", "--T", "0.5", "--seed", "1"]


def odyn(*argv):
    return main([str(a) for a in argv])


def rows(path):
    with open(path) as fh:
        return [r for r in csv.reader(fh) if r and not r[0].startswith("#")]


class TestSimulate:
    def test_writes_csv_and_json(self, tmp_path, capsys):
        assert odyn("simulate", *SMALL, "--out", tmp_path) == 0
        out = capsys.readouterr().out
        assert "boundedness: max_i Q_ii" in out
        stem = tmp_path / "run_seed1_sim-overlap"
        traj = Trajectory.load(str(stem) + ".json")
        back = Trajectory.load(str(stem) + ".csv")
        np.testing.assert_allclose(back.risks, traj.risks, rtol=1e-12)
        assert traj.meta["steps"] == 60

    def test_zero_horizon_single_row(self, tmp_path):
        assert odyn("simulate", "--T", 0, "--out", tmp_path, "--formats", "csv") == 0
        body = rows(tmp_path / "run_seed0_sim-overlap.csv")
        assert len(body) == 2 and float(body[1][0]) == 0.0
        assert not (tmp_path / "run_seed0_sim-overlap.json").exists()

    def test_unrealisable_width(self, tmp_path, capsys):
        assert odyn("simulate", "--k", 3, "--p", 2, "--out", tmp_path) == 2
        assert "k <= p" in capsys.readouterr().err

    def test_env_out_dir(self, tmp_path, monkeypatch):
        monkeypatch.setenv("ODYN_OUT_DIR", str(tmp_path / "env"))
        assert odyn("simulate", *SMALL, "--tag", "envrun") == 0
        assert (tmp_path / "env" / "envrun_seed1_sim-overlap.csv").exists()

    def test_boundedness_abort_keeps_partial(self, tmp_path, capsys):
        code = odyn("simulate", *SMALL, "--bound-K", 0.01, "--out", tmp_path)
        assert code == 3
        assert "numerical abort" in capsys.readouterr().err
        traj = Trajectory.load(str(tmp_path / "run_seed1_sim-overlap.json"))
        assert "aborted" in traj.meta

    def test_svg(self, tmp_path):
        assert odyn("simulate", *SMALL, "--out", tmp_path, "--svg") == 0
        text = (tmp_path / "run_seed1_sim-overlap.svg").read_text()
        assert "<svg" in text and "</svg>" in text


class TestIntegrate:
    def test_needs_regime(self, tmp_path, capsys):
        assert odyn("integrate", *SMALL, "--out", tmp_path) == 2

    def test_deterministic_from_state_file(self, tmp_path):
        st = overlaps_of(*[np.random.default_rng(3).standard_normal((n, 30)) for n in (3, 2)])
        state = tmp_path / "state.json"
        save_state(st, str(state))
        outputs = []
        for run in ("a", "b"):
            dest = tmp_path / run
            assert odyn("integrate", "--regime", "ss", "--p", 3, "--k", 2, "--T", 1, "--dt", 0.05,
                        "--state-file", state, "--out", dest, "--formats", "csv") == 0
            outputs.append((dest / "run_seed0_ss.csv").read_bytes())
        assert outputs[0] == outputs[1]

    def test_reduced_regime(self, tmp_path):
        assert odyn("integrate", "--regime", "hdmf", *SMALL, "--dt", 0.05, "--out", tmp_path) == 0
        traj = Trajectory.load(str(tmp_path / "run_seed1_hdmf.json"))
        assert traj.meta["regime"] == "hdmf"

    def test_yaml_config_with_override(self, tmp_path):
        path = tmp_path / "c.yaml"
        ExperimentConfig(d=30, p=2, k=1, T=0.3, tag="fromyaml").save(path)
        assert odyn("integrate", "--config", path, "--regime", "gf", "--T", 0.2,
                    "--out", tmp_path) == 0
        traj = Trajectory.load(str(tmp_path / "fromyaml_seed0_gf.json"))
        assert traj.times[-1] == pytest.approx(0.2)

    def test_unknown_yaml_key(self, tmp_path, capsys):
        path = tmp_path / "bad.yaml"
        path.write_text("d: 10\nlearning_rate: 0.1\n")
        assert odyn("integrate", "--config", path, "--regime", "gf", "--out", tmp_path) == 2
        assert "learning_rate" in capsys.readouterr().err


class TestCompare:
    def _pair(self, tmp_path):
        common = ("--p", 2, "--k", 1, "--d", 50, "--T", 1, "--dt", 0.05, "--out", tmp_path)
        odyn("integrate", "--regime", "gf", *common)
        odyn("integrate", "--regime", "ss", *common)
        return tmp_path / "run_seed0_gf.json", tmp_path / "run_seed0_ss.json"

    def test_self_is_zero(self, tmp_path, capsys):
        a, _ = self._pair(tmp_path)
        report = tmp_path / "rep.json"
        assert odyn("compare", a, a, "--json", report) == 0
        rep = json.loads(report.read_text())
        assert rep["sup_risk_gap"] == 0.0 and rep["sup_overlap_gap"] == 0.0

    def test_gap_and_csv_input(self, tmp_path):
        a, b = self._pair(tmp_path)
        report = tmp_path / "rep.json"
        assert odyn("compare", a, str(b).replace(".json", ".csv"), "--json", report) == 0
        rep = json.loads(report.read_text())
        assert rep["sup_risk_gap"] > 0

    def test_missing_file(self, tmp_path):
        assert odyn("compare", tmp_path / "x.json", tmp_path / "y.json") == 2


class TestSweep:
    def _spec(self, tmp_path, p_values):
        spec = {"base": {"d": 20, "k": 2, "p": 3, "gamma": 0.5, "T": 0.3, "regime": "gf", "dt": 0.05},
                "axes": {"p": p_values, "seed": [0, 1]}, "metric": "terminal_risk"}
        path = tmp_path / "sweep.yaml"
        path.write_text(yaml.safe_dump(spec))
        return path

    def test_complete(self, tmp_path):
        path = self._spec(tmp_path, [2, 3])
        assert odyn("sweep", path, "--workers", 1, "--out", tmp_path / "o") == 0
        table = rows(tmp_path / "o" / "sweep.csv")
        assert table[0] == ["p", "seed", "terminal_risk", "status"] and len(table) == 5

    def test_partial_and_resume(self, tmp_path, monkeypatch):
        path = self._spec(tmp_path, [1, 3])
        dest = tmp_path / "o"
        assert odyn("sweep", path, "--workers", 1, "--out", dest) == 4
        table = rows(dest / "sweep.csv")
        assert [r[-1] for r in table[1:]] == ["failed", "failed", "ok", "ok"]
        stamp = os.path.getmtime(dest / "points" / "p3_seed0.json")
        import odyn.sweep as sweep_mod
        calls = []
        real = sweep_mod.metric_value
        monkeypatch.setattr(sweep_mod, "metric_value", lambda *a: calls.append(a) or real(*a))
        assert odyn("sweep", path, "--workers", 1, "--out", dest) == 4
        # ok points come from their result files; the p=1 points fail validation before any run
        assert len(calls) == 0
        assert os.path.getmtime(dest / "points" / "p3_seed0.json") == stamp

    def test_bad_axis(self, tmp_path):
        path = tmp_path / "s.yaml"
        path.write_text(yaml.safe_dump({"axes": {"activation": ["erf"]}}))
        assert odyn("sweep", path) == 2


class TestHistogram:
    def test_from_simulation(self, tmp_path):
        assert odyn("histogram", *SMALL, "--times", "0,0.5", "--bins", 4, "--out", tmp_path) == 0
        table = rows(tmp_path / "run_seed1_hist.csv")
        assert table[0] == ["t", "teacher", "bin_lo", "bin_hi", "count", "density"]
        body = table[1:]
        assert len(body) == 2 * 2 * 4
        for t in (0.0, 0.5):
            for r in (0, 1):
                assert sum(int(x[4]) for x in body if float(x[0]) == t and int(x[1]) == r) == 3

    def test_bad_times(self, tmp_path):
        assert odyn("histogram", "--times", "a,b", "--out", tmp_path) == 2

    def test_cosines_uniform_in_three_dimensions(self):
        # a uniform direction in R^3 has a uniform coordinate on [-1, 1]
        W = init_student(5000, 3, 1.0, 0).W
        Wt, P = make_teacher(TeacherSpec(1, 3), 1)
        c = cosines(overlaps_of(W, Wt, P))[:, 0]
        counts, _ = np.histogram(c, bins=10, range=(-1, 1))
        assert stats.chisquare(counts).pvalue > 0.01

    def test_perfect_learning_cosines(self):
        P = np.diag([1.0, 4.0])
        c = cosines(perfect_learning_state(P))
        np.testing.assert_allclose(np.abs(c), np.eye(2), atol=1e-15)


class TestConfigFiles:
    def test_round_trip(self, tmp_path):
        cfg = ExperimentConfig(d=7, p=3, k=2, delta=0.01).replace(**{"init.sigma0": 0.5})
        path = tmp_path / "c.yaml"
        cfg.save(path)
        back = ExperimentConfig.load(path)
        assert back == cfg and back.dump() == cfg.dump()

    def test_unknown_nested_key(self):
        with pytest.raises(ConfigError, match="init.scale"):
            ExperimentConfig.from_dict({"init": {"scale": 1.0}})

    def test_trajectory_csv_json_round_trip(self, tmp_path):
        st = overlaps_of(np.eye(2, 5), np.ones((1, 5)))
        traj = Trajectory([0.0, 0.5], [0.3, 0.2], [st, st], {"regime": "gf"})
        traj.to_csv(tmp_path / "t.csv")
        traj.to_json(tmp_path / "t.json")
        a = Trajectory.load(str(tmp_path / "t.csv"))
        b = Trajectory.load(str(tmp_path / "t.json"))
        for other in (a, b):
            np.testing.assert_array_equal(other.times, traj.times)
            np.testing.assert_array_equal(other.risks, traj.risks)
        assert np.array_equal(b.snapshots[1].omega(), st.omega())
