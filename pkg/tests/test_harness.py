import csv
import json

import numpy as np
import pytest

from imexplore import neuralcore as nc
from imexplore.harness import runner as runner_mod
from imexplore.harness.bench import bench, component_counts
from imexplore.harness.cli import main
from imexplore.harness.config import RunConfig, build_run_config, read_config_file
from imexplore.harness.plotting import UsageError, band, load_curves, plot
from imexplore.harness.runner import CSV_COLUMNS, ThresholdTracker, parse_progress, run_experiment
from imexplore.harness.sweep import SweepSpec, format_pair, run_sweep

TINY = dict(env="mn7s4", im="counts", arch="lightweight", n_envs=4, rollout_len=128, batch_size=128)


def test_run_config_validation():
    for bad in (dict(env="mn99"), dict(im="novelty"), dict(scaling="sometimes"), dict(arch="huge"),
                dict(frames=0), dict(stop_at="90"), dict(beta_strategy="xx")):
        with pytest.raises(ValueError):
            RunConfig(**bad)
    cfg = RunConfig(im="RND", env="MN7S4")
    assert cfg.im == "rnd" and cfg.beta_value == 0.05
    eff = cfg.effective()
    assert eff["beta_floor"] == pytest.approx(0.0005) and eff["beta_frames"] == cfg.frames
    assert RunConfig(im="counts").beta_value == 0.005


def test_config_files(tmp_path):
    kv = tmp_path / "a.cfg"
    kv.write_text("# comment\nim = ride\nbeta = 0.1  # trailing\nframes = 1e6\nim-arch = lightweight\n")
    cfg = build_run_config(read_config_file(kv), {"seed": 7, "env": None})
    assert (cfg.im, cfg.beta, cfg.frames, cfg.im_arch, cfg.seed) == ("ride", 0.1, 1_000_000, "lightweight", 7)
    js = tmp_path / "b.json"
    js.write_text(json.dumps({"env": "ks3r3", "beta_floor": None}))
    assert build_run_config(read_config_file(js), {}).env == "ks3r3"
    bad = tmp_path / "c.cfg"
    bad.write_text("just words\n")
    with pytest.raises(ValueError):
        read_config_file(bad)
    with pytest.raises(KeyError):
        build_run_config({"nonsense": 1}, {})


def test_one_horizon_writes_one_row(tmp_path):
    cfg = RunConfig(frames=512, **TINY)
    summary = run_experiment(cfg, tmp_path)
    rows = parse_progress(tmp_path / "progress.csv")
    assert len(rows) == 1 and rows[0].frames == 512
    assert summary["frames"] == 512 and summary["status"] == "ok"
    with open(tmp_path / "progress.csv") as fh:
        assert next(csv.reader(fh)) == CSV_COLUMNS
    assert json.loads((tmp_path / "config.json").read_text())["ppo"]["lr"] == cfg.lr
    assert (tmp_path / "timing.csv").read_text().startswith("frames,fps")


def test_default_horizon_logs_every_2048_frames(tmp_path):
    run_experiment(RunConfig(frames=3 * 2048, env="mn7s4", im="rnd", arch="lightweight"), tmp_path)
    frames = [r.frames for r in parse_progress(tmp_path / "progress.csv")]
    assert frames == [2048, 4096, 6144]


def test_same_seed_same_csv(tmp_path):
    cfg = RunConfig(frames=1024, seed=3, **{**TINY, "im": "ride"})
    run_experiment(cfg, tmp_path / "a")
    run_experiment(cfg, tmp_path / "b")
    assert (tmp_path / "a/progress.csv").read_bytes() == (tmp_path / "b/progress.csv").read_bytes()
    run_experiment(RunConfig(frames=1024, seed=4, **{**TINY, "im": "ride"}), tmp_path / "c")
    assert (tmp_path / "a/progress.csv").read_bytes() != (tmp_path / "c/progress.csv").read_bytes()


def test_non_finite_loss_writes_failure(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise nc.NonFiniteError("loss is nan")

    monkeypatch.setattr(runner_mod, "ppo_update", boom)
    with pytest.raises(nc.NonFiniteError):
        run_experiment(RunConfig(frames=512, **TINY), tmp_path)
    failure = json.loads((tmp_path / "failure.json").read_text())
    assert failure["status"] == "failed" and "nan" in failure["error"]
    assert not (tmp_path / "summary.json").exists()


def test_threshold_tracker():
    t = ThresholdTracker(optimal=1.0, size=4)
    for i, r in enumerate([0.9, 1.0, 1.0, 1.0]):
        t.add(r, 10, 100 * (i + 1))
    # mean over a partial buffer counts: 0.95 reached after two episodes
    assert t.frames_to_95 == 200 and t.frames_to_optimal is None
    for f in (500, 600):
        t.add(1.0, 10, f)
    assert t.frames_to_optimal == 500 and t.frames_to_95 <= t.frames_to_optimal
    assert len(t.buffer) == 4 and t.episodes == 6
    assert ThresholdTracker(None).frames_to_95 is None


def test_stop_at_ends_early(tmp_path, monkeypatch):
    orig = ThresholdTracker.add

    def instant(self, ret, length, frame):
        orig(self, self.optimal or 0.0, length, frame)

    monkeypatch.setattr(ThresholdTracker, "add", instant)
    s = run_experiment(RunConfig(frames=100_000, stop_at="95", **TINY), tmp_path)
    assert s["frames"] < 100_000 and s["frames_to_95"] is not None


def test_bench_counts():
    r = bench("lightweight", "ride", timing=False)
    assert r.components["total"] == 67_215 and r.rollout_seconds is None
    assert any("67,215" in line or "67215" in line for line in r.lines())
    assert component_counts("default", "rnd")["total"] == 29_896 + 38_784


def _write_curve(path, frames, returns):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CSV_COLUMNS)
        for f, r in zip(frames, returns):
            w.writerow([f if c == "frames" else (0 if c == "episodes" else (r if c == "mean_return" else 0.0))
                        for c in CSV_COLUMNS])
    return path


def test_band_and_plot(tmp_path):
    frames = np.arange(1, 11) * 2048
    paths = [_write_curve(tmp_path / f"s{i}.csv", frames, np.linspace(0, 0.7, 10)) for i in range(3)]
    grid, mean, std = band(load_curves(paths))
    assert len(grid) == 10 and np.allclose(std, 0.0, atol=1e-12)
    np.testing.assert_allclose(mean, np.linspace(0, 0.7, 10))
    out = plot(paths, tmp_path / "fig.svg", optimal=0.77)
    assert out.read_text().lstrip().startswith("<?xml")
    single = plot(paths[:1], tmp_path / "one.svg")
    assert single.exists()
    with pytest.raises(UsageError):
        plot([], tmp_path / "none.svg")


def test_band_resamples_mismatched_grids():
    a = (np.array([1.0, 2, 3, 4]), np.array([0.0, 1, 2, 3]))
    b = (np.array([2.0, 4]), np.array([1.0, 3]))
    grid, mean, std = band([a, b])
    np.testing.assert_array_equal(grid, [2.0, 4.0])
    np.testing.assert_allclose(mean, [1.0, 3.0])
    np.testing.assert_allclose(std, 0.0)


def test_format_pair():
    assert format_pair(None, None, 2e7) == "> 20"
    assert format_pair(1.39e6, 0.5e6, 2e7) == "1.39 (0.50)"
    assert format_pair(None, 0.5e6, 2e7) == "> 20 (0.50)"


def _fake_runner(calls):
    def run(cfg, out):
        calls.append(cfg.seed)
        out.mkdir(parents=True, exist_ok=True)
        if cfg.seed == 99:
            raise nc.NonFiniteError("nan")
        summary = {"frames_to_optimal": None if cfg.seed == 3 else 1e6 * cfg.seed,
                   "frames_to_95": 5e5 * cfg.seed}
        (out / "summary.json").write_text(json.dumps(summary))
        return summary
    return run


def test_sweep_grid_resume_and_failures(tmp_path):
    spec = SweepSpec.from_dict({"envs": "mn7s4", "ims": ["counts"], "scalings": "ep", "strategies": "s",
                                "seeds": "1,2,3", "frames": "2e6"})
    calls = []
    table = run_sweep(spec, tmp_path, runner=_fake_runner(calls))
    assert calls == [1, 2, 3] and len(table) == 1
    assert len([p for p in tmp_path.iterdir() if p.is_dir()]) == 3
    row = table[0]
    assert row["median_frames_to_optimal"] == 2e6 and row["median_frames_to_95"] == 1e6
    with open(tmp_path / "aggregate.csv") as fh:
        assert len(list(csv.DictReader(fh))) == 1
    calls.clear()
    run_sweep(spec, tmp_path, runner=_fake_runner(calls))
    assert calls == []  # every cell already has summary.json

    spec2 = SweepSpec.from_dict({"seeds": [3, 99], "frames": 2e6, "out": str(tmp_path / "b")})
    table = run_sweep(spec2, runner=_fake_runner([]))
    failures = json.loads((tmp_path / "b/failures.json").read_text())
    assert len(failures) == 1 and "seed99" in failures[0]["run"]
    assert table[0]["failed"] == 1 and table[0]["cell"] == "> 2 (1.50)"


def test_cli_smoke(tmp_path, capsys):
    assert main(["bench", "--arch", "lightweight", "--im", "rnd", "--no-timing"]) == 0
    assert "55,048" in capsys.readouterr().out
    out = tmp_path / "run"
    assert main(["train", "--env", "mn7s4", "--im", "counts", "--arch", "lightweight", "--frames", "2048",
                 "--out", str(out)]) == 0
    assert json.loads(capsys.readouterr().out)["frames"] == 2048
    assert main(["plot", str(out / "progress.csv"), "--out", str(tmp_path / "p.svg"), "--env", "mn7s4"]) == 0
    assert main(["train", "--env", "nowhere"]) == 2
    with pytest.raises(SystemExit):
        main(["plot", "--out", str(tmp_path / "x.svg")])
    cfg = tmp_path / "sw.cfg"
    cfg.write_text(f"envs = mn7s4\nseeds = 1\narch = lightweight\nframes = 2048\nout = {tmp_path / 'sw'}\n")
    assert main(["sweep", "--config", str(cfg)]) == 0
    assert (tmp_path / "sw/aggregate.csv").exists()
