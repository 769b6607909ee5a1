"""CLI surface: presets, subcommands, exit codes, output files."""

import csv
import json

import pytest

from ogcp.cli import main

GAUSS_FLAGS = ["--gsamp-nz", "all", "--gsamp-z", "0",
               "--fsamp-nz", "all", "--fsamp-z", "0"]


def run(argv, capsys):
    code = main(argv)
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture()
def gauss_tns(tmp_path):
    path = tmp_path / "g.tns"
    truth = tmp_path / "g.ktns"
    code = main(["gen", "--kind", "gaussian", "--dims", "6,5,8", "--rank", "2",
                 "--noise", "0.05", "--seed", "21", "--out", str(path),
                 "--truth-out", str(truth)])
    assert code == 0
    return path, truth


def stream_args(tmp_path, path, extra=()):
    return (["stream", "--input", str(path), "--output",
             str(tmp_path / "out"), "--rank", "2", "--loss", "gaussian",
             "--hist-size", "4", "--warm-slices", "3",
             "--epochs-w", "4", "--epochs-f", "2", "--iters-w", "15",
             "--iters-f", "10", "--rate-w", "0.3", "--rate-f", "0.05",
             "--warm-epochs", "30", "--warm-rate", "0.05", "--seed", "5",
             "--no-plots"] + GAUSS_FLAGS + list(extra))


class TestPresets:
    def test_show_config_resolves_paper_rows(self, capsys):
        expected = {
            "synthetic-gaussian": dict(rank=20, rate_w=10.0, epochs_w=20,
                                       rate_f=1e-4, epochs_f=5,
                                       hist_weight=1.0, hist_size=50,
                                       warm_slices=10, loss="gaussian"),
            "synthetic-poisson": dict(rank=20, rate_w=1.0, epochs_w=20,
                                      rate_f=1e-4, epochs_f=10,
                                      hist_weight=10.0, hist_size=50,
                                      warm_slices=10, loss="poisson"),
            "taxi-poisson": dict(rank=50, rate_w=10.0, epochs_w=1,
                                 rate_f=1e-3, epochs_f=1, hist_weight=1.0,
                                 hist_size=30, warm_slices=20,
                                 loss="poisson"),
            "chicago-binary": dict(rank=50, rate_w=0.1, epochs_w=5,
                                   rate_f=1e-3, epochs_f=5, hist_weight=10.0,
                                   hist_size=500, warm_slices=20,
                                   loss="bernoulli"),
        }
        for preset, want in expected.items():
            code, out, _ = run(["stream", "--preset", preset,
                                "--show-config"], capsys)
            assert code == 0
            got = json.loads(out)
            for key, val in want.items():
                assert got[key] == val, (preset, key)
            # shared rows of the hyperparameter table
            assert got["hist_decay"] == 1.0
            assert got["reg_factors"] == 0.0 and got["reg_weights"] == 0.0
            assert got["iters_w"] == 100 and got["iters_f"] == 100
            assert got["adam_beta1"] == 0.9 and got["adam_beta2"] == 0.999
            assert got["adam_eps"] == 1e-8

    def test_explicit_flag_overrides_preset(self, capsys):
        code, out, _ = run(["stream", "--preset", "chicago-binary",
                            "--rank", "7", "--show-config"], capsys)
        assert code == 0
        assert json.loads(out)["rank"] == 7


class TestStream:
    def test_zero_slices_leaves_warm_rows_only(self, tmp_path, gauss_tns,
                                               capsys):
        path, _ = gauss_tns
        code, out, _ = run(stream_args(tmp_path, path, ["--slices", "0"]),
                           capsys)
        assert code == 0
        with open(tmp_path / "out" / "metrics.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert [int(r["t"]) for r in rows] == [1, 2, 3]
        assert all(r["epochs_w"] == "0" for r in rows)
        assert "global_loss" in out

    def test_full_stream_outputs(self, tmp_path, gauss_tns, capsys):
        path, truth = gauss_tns
        code, out, _ = run(
            stream_args(tmp_path, path,
                        ["--score-against", str(truth), "--no-timing"]),
            capsys)
        assert code == 0
        outdir = tmp_path / "out"
        assert (outdir / "final.ktns").exists()
        with open(outdir / "metrics.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert [int(r["t"]) for r in rows] == list(range(1, 9))
        assert all(r["wall_ms"] == "0.000" for r in rows)
        assert "congruence" in out

    def test_figures_rendered_alongside_csv(self, tmp_path, gauss_tns,
                                            capsys):
        path, _ = gauss_tns
        args = stream_args(tmp_path, path)
        args.remove("--no-plots")
        code, _, _ = run(args, capsys)
        assert code == 0
        outdir = tmp_path / "out"
        assert (outdir / "local_loss.png").exists()
        assert (outdir / "epochs.png").exists()

    def test_checkpoint_files_written(self, tmp_path, gauss_tns, capsys):
        path, _ = gauss_tns
        code, _, _ = run(stream_args(tmp_path, path,
                                     ["--checkpoint-every", "2"]), capsys)
        assert code == 0
        ckpts = sorted((tmp_path / "out").glob("checkpoint_*.npz"))
        assert len(ckpts) >= 2

    def test_resume_reproduces_straight_run(self, tmp_path, gauss_tns,
                                            capsys):
        path, _ = gauss_tns
        base = stream_args(tmp_path, path, ["--no-timing"])

        def with_output(args, name, extra=()):
            out = list(args) + list(extra)
            out[out.index(str(tmp_path / "out"))] = str(tmp_path / name)
            return out

        code, _, _ = run(with_output(base, "straight"), capsys)
        assert code == 0
        code, _, _ = run(with_output(base, "partial",
                                     ["--slices", "4",
                                      "--checkpoint-every", "2"]), capsys)
        assert code == 0
        ckpt = sorted((tmp_path / "partial").glob("checkpoint_*.npz"))[-1]
        code, _, _ = run(with_output(base, "resumed",
                                     ["--resume", str(ckpt)]), capsys)
        assert code == 0
        straight = tmp_path / "straight"
        resumed = tmp_path / "resumed"
        assert (straight / "final.ktns").read_bytes() == \
            (resumed / "final.ktns").read_bytes()
        assert (straight / "metrics.csv").read_bytes() == \
            (resumed / "metrics.csv").read_bytes()

    def test_missing_input_is_data_error(self, tmp_path, capsys):
        code, _, err = run(stream_args(tmp_path, tmp_path / "nope.tns"),
                           capsys)
        assert code == 3
        assert err.startswith("ERROR data:")

    def test_unknown_flag_is_usage_error(self, tmp_path):
        with pytest.raises(SystemExit) as exc:
            main(["stream", "--bogus"])
        assert exc.value.code == 2

    def test_divergent_rate_exits_4(self, tmp_path, gauss_tns, capsys):
        path, _ = gauss_tns
        code, _, err = run(stream_args(
            tmp_path, path, ["--rate-w", "1e200", "--rate-decay", "0.9"]),
            capsys)
        assert code == 4
        assert err.startswith("ERROR divergence:")


class TestStatic:
    def test_noiseless_gaussian_reaches_small_loss(self, tmp_path, capsys):
        data = tmp_path / "g0.tns"
        assert main(["gen", "--kind", "gaussian", "--dims", "8,7,6",
                     "--rank", "2", "--noise", "0", "--seed", "11",
                     "--out", str(data)]) == 0
        code, out, _ = run(
            ["static", "--input", str(data), "--rank", "2",
             "--loss", "gaussian", "--epochs-f", "200", "--iters-f", "30",
             "--rate-f", "0.05", "--seed", "2", "--output",
             str(tmp_path / "st"), "--no-plots"] + GAUSS_FLAGS, capsys)
        assert code == 0
        loss_line = [l for l in out.splitlines()
                     if l.startswith("local_loss")][0]
        assert float(loss_line.split()[1]) < 1e-3
        assert (tmp_path / "st" / "model.ktns").exists()
        assert (tmp_path / "st" / "objective.csv").exists()


class TestGenAndScore:
    def test_poisson_gen_reports_density(self, tmp_path, capsys):
        out_path = tmp_path / "p.tns"
        code, out, _ = run(["gen", "--kind", "poisson", "--dims", "30,30,20",
                            "--rank", "3", "--sparsity", "0.05", "--seed",
                            "3", "--out", str(out_path)], capsys)
        assert code == 0
        assert "density=" in out
        assert out_path.exists()

    def test_self_score_is_one(self, tmp_path, gauss_tns, capsys):
        _, truth = gauss_tns
        code, out, _ = run(["score", str(truth), str(truth)], capsys)
        assert code == 0
        assert float(out.strip()) == pytest.approx(1.0)
