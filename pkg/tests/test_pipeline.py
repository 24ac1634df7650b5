import csv
import math

import numpy as np
import pytest

from vitalattn import cli
from vitalattn.attention import AttentionForecaster
from vitalattn.data import SplitDataset, Window, generate_synthetic, write_series_csv
from vitalattn.numerics import Tensor
from vitalattn.pipeline.config import ConfigError, TrainConfig, read_config_file
from vitalattn.pipeline.evaluation import (
    benchmark_grid,
    evaluate_model,
    explain_window,
    format_report_csv,
    model_windows,
    report_rows,
    run_benchmark,
)
from vitalattn.pipeline.heatmap import RAMP, ramp_color, render_heatmap_svg
from vitalattn.pipeline.serialization import MAGIC, ModelFileError, load_model, save_model
from vitalattn.pipeline.training import TrainedModel, TrainingError, build_model, predict, train_model

TINY = dict(L=12, H=6, width=8, nbeats_stacks=2, nbeats_blocks=1, nhits_kernels=(2, 1), nhits_ratios=(2, 1),
            max_epochs=3, patience=3, batch_size=8)


def tiny(**changes):
    return TrainConfig(**{**TINY, **changes})


def const_windows(values, L=12, H=6, n_series=1):
    covs = ("HR", "RR")[: n_series - 1]
    return [Window(f"p{i}", np.full((n_series, L), v), np.full(H, v), "MBP", covs, 0) for i, v in enumerate(values)]


@pytest.fixture(scope="module")
def raw():
    return generate_synthetic(12, minutes=540, seed=21)


@pytest.fixture(scope="module")
def split(raw):
    return model_windows(tiny(covariates=("HR", "RR")), raw)


@pytest.fixture(scope="module")
def trained_attn(split):
    return train_model(tiny(model_kind="nbeats", attention=True, covariates=("HR", "RR")), split)


class TestConfig:
    def test_defaults(self):
        cfg = TrainConfig()
        assert (cfg.lr, cfg.batch_size, cfg.max_epochs, cfg.patience, cfg.grad_clip) == (1e-3, 32, 100, 10, 5.0)
        assert (cfg.L, cfg.H) == (72, 36)

    @pytest.mark.parametrize(
        "changes",
        [dict(model_kind="lstm"), dict(L=0), dict(batch_size=0), dict(patience=200), dict(covariates=("MBP",))],
    )
    def test_invalid(self, changes):
        with pytest.raises(ConfigError):
            TrainConfig(**changes)

    def test_dict_round_trip(self):
        cfg = tiny(covariates=("HR",), attention=True, seed=2**64 - 1)
        assert TrainConfig.from_dict(cfg.to_dict()) == cfg

    def test_unknown_key(self):
        with pytest.raises(ConfigError):
            TrainConfig.from_dict({"depth": 3})

    def test_config_file(self, tmp_path):
        path = tmp_path / "c.txt"
        path.write_text("# tiny\nlr = 0.01\nattention = on\ncovariates = HR, RR\nnhits_kernels = 4,2\n\n")
        assert read_config_file(path) == {"lr": 0.01, "attention": True, "covariates": ("HR", "RR"),
                                          "nhits_kernels": (4, 2)}

    @pytest.mark.parametrize("text", ["lr 0.1\n", "depth = 3\n", "max_epochs = many\n"])
    def test_config_file_errors(self, tmp_path, text):
        path = tmp_path / "c.txt"
        path.write_text(text)
        with pytest.raises(ConfigError):
            read_config_file(path)


class TestTraining:
    def test_constant_dataset_converges(self):
        vals = np.full(64, 0.45)
        data = SplitDataset(const_windows(vals[:48]), const_windows(vals[48:56]), const_windows(vals[56:]))
        trained = train_model(tiny(model_kind="nbeats", nbeats_stacks=1, max_epochs=50, patience=50), data)
        assert len(trained.history) <= 50
        assert trained.best_val_loss <= 1e-6

    def test_deterministic(self, split):
        cfg = tiny(model_kind="nhits", covariates=("HR", "RR"), seed=7)
        a, b = train_model(cfg, split), train_model(cfg, split)
        assert [(r.train_loss, r.val_loss) for r in a.history] == [(r.train_loss, r.val_loss) for r in b.history]

    def test_patience_zero_runs_one_epoch(self, split):
        trained = train_model(tiny(covariates=("HR", "RR"), patience=0), split)
        assert len(trained.history) == 1 and trained.best_epoch == 0

    def test_restores_best_epoch(self, split):
        cfg = tiny(model_kind="nbeats", covariates=("HR", "RR"), max_epochs=8, patience=8, lr=0.05)
        trained = train_model(cfg, split)
        assert trained.best_val_loss == min(r.val_loss for r in trained.history)
        X = np.stack([w.input for w in split.validation])
        Y = np.stack([w.target for w in split.validation])
        val = float(np.mean((trained.model.forecast(Tensor(X)).data - Y) ** 2))
        assert val == trained.best_val_loss

    def test_empty_train(self):
        with pytest.raises(TrainingError):
            train_model(tiny(), SplitDataset([], const_windows([0.5]), []))

    def test_empty_validation(self):
        with pytest.raises(TrainingError):
            train_model(tiny(), SplitDataset(const_windows([0.5]), [], []))

    @pytest.mark.filterwarnings("ignore:overflow")
    def test_divergence_reported(self):
        data = SplitDataset(const_windows([1e200] * 4), const_windows([0.5]), [])
        with pytest.raises(TrainingError, match="epoch 0"):
            train_model(tiny(grad_clip=math.inf), data)

    def test_channel_mismatch(self, split):
        with pytest.raises(ValueError):
            train_model(tiny(), split)

    def test_attention_starts_as_base(self):
        model = build_model(tiny(attention=True, seed=4))
        base = build_model(tiny(seed=4))
        x = Tensor(np.random.default_rng(0).uniform(0, 1, (3, 1, 12)))
        assert isinstance(model, AttentionForecaster)
        np.testing.assert_array_equal(model(x).data, base(x).data)


class TestEvaluation:
    def test_perfect_model(self, split, trained_attn):
        class Oracle:
            H = 6

            def forecast(self, x):
                return Tensor(np.stack([lookup[tuple(row.ravel())] for row in x.data]))

        lookup = {tuple(w.input.ravel()): w.target for w in split.test}
        perfect = TrainedModel(trained_attn.config, Oracle())
        report = evaluate_model(perfect, split.test)
        metrics = report.per_target["MBP"]
        assert metrics.mse == 0.0 and metrics.dtw == 0.0
        assert len(report_rows([report, report.baseline])) == 2

    def test_persistence_constant_targets(self, trained_attn):
        report = evaluate_model(trained_attn, const_windows([0.2, 0.6], n_series=3))
        assert report.baseline.per_target["MBP"].mse == 0.0

    def test_shape_mismatch(self, trained_attn):
        with pytest.raises(ValueError):
            evaluate_model(trained_attn, const_windows([0.2], L=10, n_series=3))

    def test_report_csv(self, split, trained_attn):
        text = format_report_csv(report_rows([evaluate_model(trained_attn, split.test)]))
        header, row = text.splitlines()
        assert header == "model,covariates,target,mse,mse_table,dtw,dtw_table,n_windows"
        assert row.startswith("nbeats+attention,with,MBP,")


class TestExplain:
    def test_files(self, tmp_path, split, trained_attn):
        paths = explain_window(trained_attn, split.test[0], tmp_path)
        assert {p.name for p in paths.values()} == {"forecast.csv", "attention.csv", "attention.svg",
                                                    "attention_mean.csv"}
        with open(paths["attention"]) as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["series", "step"] + [f"t{t}" for t in range(12)]
        assert len(rows) == 1 + 3 * 6
        assert all(float(v) >= 0 for r in rows[1:] for v in r[2:])
        with open(paths["attention_mean"]) as fh:
            mean_rows = list(csv.DictReader(fh))
        assert len([r for r in mean_rows if r["series"] == "MBP"]) == 12
        with open(paths["forecast"]) as fh:
            assert sum(1 for _ in fh) == 1 + 6
        assert paths["attention_svg"].read_text().startswith("<svg")

    def test_identity_values_dump_d(self, tmp_path, split, trained_attn):
        model = trained_attn.model
        saved = model.params.W_V.data.copy()
        model.params.W_V.data[...] = np.eye(12)
        try:
            paths = explain_window(trained_attn, split.test[0], tmp_path)
            _, art = model.forward(Tensor(split.test[0].input))
        finally:
            model.params.W_V.data[...] = saved
        with open(paths["attention"]) as fh:
            rows = list(csv.reader(fh))[1:]
        A = np.array([[float(v) for v in r[2:]] for r in rows]).reshape(3, 6, 12)
        np.testing.assert_array_equal(A, art.D)

    def test_needs_attention(self, tmp_path, split):
        trained = train_model(tiny(covariates=("HR", "RR"), max_epochs=1, patience=1), split)
        with pytest.raises(ValueError, match="attention"):
            explain_window(trained, split.test[0], tmp_path)


class TestHeatmap:
    def test_ramp_ends(self):
        assert ramp_color(0.0) == RAMP[0][1] and ramp_color(1.0) == RAMP[-1][1]
        assert ramp_color(0.5) == "#21918c" and ramp_color(7.0) == RAMP[-1][1]

    def test_cells_and_legend(self):
        svg = render_heatmap_svg({"MBP": np.arange(6.0).reshape(2, 3), "HR": np.zeros((2, 3))})
        assert svg.count('width="10" height="10"') == 12
        assert "high attention" in svg and "low attention" in svg
        assert f'fill="{RAMP[-1][1]}"' in svg

    def test_empty(self):
        with pytest.raises(ValueError):
            render_heatmap_svg({})


class TestSerialization:
    @pytest.mark.parametrize("kind", ["nbeats", "nhits"])
    @pytest.mark.parametrize("attention", [False, True])
    def test_round_trip(self, tmp_path, kind, attention):
        cfg = tiny(model_kind=kind, attention=attention, covariates=("HR",), seed=11)
        trained = TrainedModel(cfg, build_model(cfg))
        for p in trained.model.parameters():
            p.data[...] = np.random.default_rng(p.size).normal(size=p.shape)
        path = tmp_path / "m.atnf"
        save_model(trained, path)
        back = load_model(path)
        assert back.config == cfg
        for (na, a), (nb, b) in zip(trained.named_parameters(), back.named_parameters()):
            assert na == nb and a.data.tobytes() == b.data.tobytes()
        x = Tensor(np.random.default_rng(1).uniform(0, 1, (4, 2, 12)))
        assert trained.model(x).data.tobytes() == back.model(x).data.tobytes()

    def test_history_kept(self, tmp_path, trained_attn):
        save_model(trained_attn, tmp_path / "m")
        back = load_model(tmp_path / "m")
        assert back.history == trained_attn.history and back.best_epoch == trained_attn.best_epoch

    @pytest.fixture
    def blob(self, tmp_path):
        cfg = tiny()
        save_model(TrainedModel(cfg, build_model(cfg)), tmp_path / "m")
        return (tmp_path / "m").read_bytes()

    def _load(self, tmp_path, data):
        path = tmp_path / "bad"
        path.write_bytes(data)
        return load_model(path)

    def test_bad_magic(self, tmp_path, blob):
        with pytest.raises(ModelFileError) as exc:
            self._load(tmp_path, b"XTNF1\n" + blob[len(MAGIC):])
        assert exc.value.offset == 0

    def test_empty(self, tmp_path):
        with pytest.raises(ModelFileError):
            self._load(tmp_path, b"")

    @pytest.mark.parametrize("cut", [1, 8, 100])
    def test_truncated(self, tmp_path, blob, cut):
        with pytest.raises(ModelFileError, match="offset"):
            self._load(tmp_path, blob[:-cut])

    def test_trailing_bytes(self, tmp_path, blob):
        with pytest.raises(ModelFileError):
            self._load(tmp_path, blob + b"\0")

    def test_count_mismatch(self, tmp_path, blob):
        head, rest = blob.split(b"tensors ", 1)
        count, tail = rest.split(b"\n", 1)
        with pytest.raises(ModelFileError, match="tensors"):
            self._load(tmp_path, head + b"tensors " + str(int(count) + 1).encode() + b"\n" + tail)

    def test_shape_mismatch(self, tmp_path, blob):
        with pytest.raises(ModelFileError, match="does not match"):
            self._load(tmp_path, blob.replace(b"stack0.block0.fc1.weight 6 8", b"stack0.block0.fc1.weight 6 9"))


class TestBenchmark:
    def test_grid(self):
        grid = benchmark_grid("MBP", 5)
        assert len(grid) == 8 and len({c.seed for c in grid}) == 8
        assert {(c.model_kind, c.attention, c.covariates) for c in grid} == {
            (k, a, cv) for k in ("nbeats", "nhits") for a in (False, True) for cv in (("HR", "RR"), ())
        }

    def test_structure_and_baseline(self, raw, caplog):
        base = tiny(max_epochs=1, patience=1)
        rows = run_benchmark(benchmark_grid("MBP", 3, base), raw, split_seed=3)
        assert len(rows) == 9 and rows[-1]["model"] == "persistence"
        assert all(r["mse_table"] > 0 for r in rows)
        assert "persistence differs" not in caplog.text

    def test_empty_grid(self, raw):
        with pytest.raises(ValueError):
            run_benchmark([], raw, 0)

    def test_report_deterministic(self, raw):
        grid = benchmark_grid("HR", 9, tiny(max_epochs=2, patience=2))[:2]
        a = format_report_csv(run_benchmark(grid, raw, 9))
        b = format_report_csv(run_benchmark(grid, raw, 9))
        assert a == b


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert cli.main(["synth", "--out", str(d / "v.csv"), "--patients", "12", "--seed", "5"]) == 0
    (d / "tiny.cfg").write_text("".join(f"{k} = {','.join(map(str, v)) if isinstance(v, tuple) else v}\n"
                                        for k, v in TINY.items()))
    code = cli.main(["train", "--data", str(d / "v.csv"), "--model", "nhits", "--attention", "on",
                     "--target", "MBP", "--covariates", "HR,RR", "--config", str(d / "tiny.cfg"),
                     "--out", str(d / "m.atnf"), "--seed", "3"])
    assert code == 0
    return d


class TestCLI:
    def test_synth_csv(self, workdir):
        lines = (workdir / "v.csv").read_text().splitlines()
        assert lines[0] == "patient_id,timestamp_min,HR,MBP,RR" and len(lines) == 1 + 12 * 108

    def test_flags_override_config(self, workdir):
        trained = load_model(workdir / "m.atnf")
        assert trained.config.model_kind == "nhits" and trained.config.attention
        assert trained.config.seed == 3 and trained.config.L == 12

    def test_evaluate(self, workdir):
        assert cli.main(["evaluate", "--model", str(workdir / "m.atnf"), "--data", str(workdir / "v.csv"),
                         "--report", str(workdir / "r.csv")]) == 0
        rows = (workdir / "r.csv").read_text().splitlines()
        assert len(rows) == 3 and rows[2].startswith("persistence,-,MBP")

    def test_explain(self, workdir):
        out = workdir / "explain"
        assert cli.main(["explain", "--model", str(workdir / "m.atnf"), "--data", str(workdir / "v.csv"),
                         "--window", "0", "--out-dir", str(out)]) == 0
        assert (out / "attention.svg").exists()

    def test_forecast(self, workdir):
        out = workdir / "f.csv"
        assert cli.main(["forecast", "--model", str(workdir / "m.atnf"), "--data", str(workdir / "v.csv"),
                         "--window", "0", "--out", str(out)]) == 0
        assert len(out.read_text().splitlines()) == 7

    def test_window_out_of_range(self, workdir, capsys):
        assert cli.main(["forecast", "--model", str(workdir / "m.atnf"), "--data", str(workdir / "v.csv"),
                         "--window", "999", "--out", str(workdir / "x.csv")]) == 2
        assert "out of range" in capsys.readouterr().err

    def test_bad_model_file(self, workdir, capsys):
        (workdir / "junk").write_bytes(b"nope")
        assert cli.main(["evaluate", "--model", str(workdir / "junk"), "--data", str(workdir / "v.csv"),
                         "--report", str(workdir / "r2.csv")]) == 2
        assert "bad magic" in capsys.readouterr().err

    def test_bad_attention_flag(self):
        with pytest.raises(SystemExit):
            cli.main(["train", "--data", "x", "--model", "nhits", "--attention", "maybe", "--target", "MBP",
                      "--out", "m", "--seed", "1"])
