"""End-to-end command-line interface tests."""

import csv
import json
from importlib.resources import files

import numpy as np
import pytest

from hgmm import cli
from hgmm.serialize import to_json

LIB_PATH = str(files("hgmm.data") / "split_library.json")


def run_cli(*argv):
    """Invoke the CLI; normalize argparse SystemExit into a return code."""
    try:
        return cli.main(list(argv))
    except SystemExit as exc:
        return exc.code


def write_scenario(path, horizon=1.0, e_res_max=0.1, cov=None):
    cov = cov or [[1.0, 0, 0, 0], [0, 1.0, 0, 0], [0, 0, 1.0, 0], [0, 0, 0, 0.05]]
    scenario = {
        "model": "bicycle",
        "network": "turn",
        "seed": 7,
        "engine": {
            "e_res_max": e_res_max,
            "max_split_depth": 2,
            "max_mixands": 10,
            "dt": 0.1,
            "horizon": horizon,
            "normalization": "raw",
        },
        "initial": {
            "mixands": [
                {"w": 1.0, "alpha": "approach", "mu": [20.0, 0.0, 9.0, 0.0], "sigma": cov}
            ]
        },
    }
    path.write_text(json.dumps(scenario), encoding="utf-8")


def write_frames(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(to_json(rec) + "\n")


def point_mass_frame(k, t, xy, v=9.0, theta=0.0):
    return {
        "k": k,
        "t": t,
        "mixands": [
            {
                "w": 1.0,
                "alpha": "main",
                "mu": [xy[0], xy[1], v, theta],
                "sigma": np.diag([1e-10, 1e-10, 1e-10, 1e-10]).tolist(),
            }
        ],
    }


class TestOptimizeSplit:
    def test_build_and_rebuild_identical(self, tmp_path):
        args = ["optimize-split", "--n", "3,5", "--sigma", "0.2,0.4", "--grid-step", "0.05"]
        p1, p2 = tmp_path / "a.json", tmp_path / "b.json"
        assert run_cli(*args, "--out", str(p1)) == 0
        assert run_cli(*args, "--out", str(p2)) == 0
        assert p1.read_bytes() == p2.read_bytes()
        assert len(json.loads(p1.read_text())["entries"]) == 4

    def test_even_n_rejected(self, tmp_path):
        code = run_cli(
            "optimize-split", "--n", "4", "--sigma", "0.3", "--out", str(tmp_path / "x.json")
        )
        assert code == 2

    def test_sigma_out_of_range(self, tmp_path):
        code = run_cli(
            "optimize-split", "--n", "3", "--sigma", "1.5", "--out", str(tmp_path / "x.json")
        )
        assert code == 2


class TestBenchmark:
    def test_nonpositive_samples(self):
        assert run_cli("benchmark", "--model", "ungm", "--samples", "0", "--no-split") == 2

    def test_missing_cache_key(self, tmp_path):
        lib = tmp_path / "small.json"
        assert run_cli(
            "optimize-split", "--n", "3", "--sigma", "0.2",
            "--grid-step", "0.05", "--out", str(lib),
        ) == 0
        code = run_cli(
            "benchmark", "--model", "ungm", "--samples", "2",
            "--cache", str(lib), "--split-n", "5", "--split-sigma", "0.3",
        )
        assert code == 4

    def test_no_split_csv(self, tmp_path, capsys):
        out = tmp_path / "bench.csv"
        code = run_cli(
            "benchmark", "--model", "cubic", "--samples", "3", "--seed", "1",
            "--no-split", "--out", str(out),
        )
        assert code == 0
        assert "no-split KLD mean=" in capsys.readouterr().out
        with open(out, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["sample", "e_res", "kld_no_split"]
        assert len(rows) == 4


class TestRun:
    def test_frames_manifest_and_reproducibility(self, tmp_path):
        scen = tmp_path / "scenario.json"
        write_scenario(scen)
        out1, out2 = tmp_path / "f1.jsonl", tmp_path / "f2.jsonl"
        base = ["run", "--scenario", str(scen), "--cache", LIB_PATH, "--sequential"]
        assert run_cli(*base, "--out", str(out1)) == 0
        assert run_cli(*base, "--out", str(out2)) == 0
        assert out1.read_bytes() == out2.read_bytes()
        lines = out1.read_text().strip().splitlines()
        assert len(lines) == 10
        rec = json.loads(lines[-1])
        assert rec["k"] == 10 and rec["t"] == pytest.approx(1.0)
        manifest = json.loads((tmp_path / "f1.jsonl.manifest.json").read_text())
        assert manifest["config"]["e_res_max"] == 0.1
        assert "scenario.json" in manifest["inputs"]

    def test_no_split_keeps_one_mixand_per_hypothesis(self, tmp_path):
        scen = tmp_path / "scenario.json"
        write_scenario(scen)
        out = tmp_path / "frames.jsonl"
        code = run_cli(
            "run", "--scenario", str(scen), "--out", str(out),
            "--e-res-max", "inf", "--sequential",
        )
        assert code == 0
        for line in out.read_text().strip().splitlines():
            rec = json.loads(line)
            alphas = [m["alpha"] for m in rec["mixands"]]
            assert len(alphas) == len(set(alphas))

    def test_missing_scenario_key(self, tmp_path):
        scen = tmp_path / "bad.json"
        scen.write_text(json.dumps({"model": "bicycle", "network": "turn"}))
        code = run_cli("run", "--scenario", str(scen), "--out", str(tmp_path / "o.jsonl"))
        assert code == 2


class TestEvaluate:
    def make_frames(self, tmp_path):
        scen = tmp_path / "scenario.json"
        write_scenario(scen)
        out = tmp_path / "frames.jsonl"
        assert run_cli(
            "run", "--scenario", str(scen), "--cache", LIB_PATH,
            "--out", str(out), "--sequential",
        ) == 0
        times, frames = cli.load_frames(out)
        return out, times, frames

    def test_nll_metric(self, tmp_path, capsys):
        out, times, frames = self.make_frames(tmp_path)
        rng = np.random.default_rng(0)
        states = np.stack(
            [rng.normal(f.mixands[0].gaussian.mean, 1.0, size=(50, 4)) for f in frames]
        )
        npz = tmp_path / "truth.npz"
        np.savez(npz, t=times, states=states)
        csv_out = tmp_path / "nll.csv"
        code = run_cli(
            "evaluate", "--frames", str(out), "--metric", "nll",
            "--particles", str(npz), "--out", str(csv_out),
        )
        assert code == 0
        assert "nll mean=" in capsys.readouterr().out
        with open(csv_out, newline="") as fh:
            rows = list(csv.reader(fh))
        assert len(rows) == 11
        assert all(np.isfinite(float(r[2])) for r in rows[1:])

    def test_nll_timestamp_mismatch(self, tmp_path):
        out, times, frames = self.make_frames(tmp_path)
        npz = tmp_path / "truth.npz"
        np.savez(npz, t=times + 5.0, states=np.zeros((len(frames), 10, 4)))
        code = run_cli(
            "evaluate", "--frames", str(out), "--metric", "nll", "--particles", str(npz)
        )
        assert code == 6

    def test_eote_centerline_point_mass(self, tmp_path, capsys):
        frames = tmp_path / "frames.jsonl"
        write_frames(
            frames,
            [point_mass_frame(i + 1, 0.1 * (i + 1), (40.0 + i, 0.0)) for i in range(3)],
        )
        code = run_cli(
            "evaluate", "--frames", str(frames), "--metric", "eote",
            "--network", "straight", "--route", "main",
        )
        assert code == 0
        assert "eote total=0.0000" in capsys.readouterr().out

    def test_collision_disjoint_is_zero(self, tmp_path, capsys):
        frames = tmp_path / "frames.jsonl"
        write_frames(
            frames,
            [point_mass_frame(i + 1, 0.1 * (i + 1), (40.0 + i, 0.0)) for i in range(3)],
        )
        ego = tmp_path / "ego.csv"
        with open(ego, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x", "y", "theta"])
            for i in range(3):
                w.writerow([0.1 * (i + 1), 200.0, 200.0, 0.0])
        code = run_cli(
            "evaluate", "--frames", str(frames), "--metric", "collision",
            "--ego", str(ego), "--samples", "500",
        )
        assert code == 0
        assert "collision max=0.0000" in capsys.readouterr().out

    def test_ll_metric_and_mismatch(self, tmp_path, capsys):
        out, times, frames = self.make_frames(tmp_path)
        obs = tmp_path / "obs.csv"
        with open(obs, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x", "y"])
            for t, f in zip(times[:3], frames[:3]):
                mu = f.mixands[0].gaussian.mean
                w.writerow([t, mu[0], mu[1]])
        code = run_cli("evaluate", "--frames", str(out), "--metric", "ll",
                       "--observations", str(obs))
        assert code == 0
        assert "ll total=" in capsys.readouterr().out
        bad = tmp_path / "bad_obs.csv"
        bad.write_text("t,x,y\n9.77,1.0,1.0\n")
        assert run_cli(
            "evaluate", "--frames", str(out), "--metric", "ll", "--observations", str(bad)
        ) == 6


class TestTopLevel:
    def test_unknown_flag(self):
        assert run_cli("run", "--bogus") == 2

    def test_version(self, capsys):
        assert run_cli("--version") == 0
        assert "hgmm" in capsys.readouterr().out
