import json
import subprocess
import sys

import pytest

from saner_lab import load_dataset, read_metrics
from saner_lab.cli import main
from saner_lab.config import load_config

SMALL = ["--layer-sizes", "6,12,3", "--n-train", "200", "--n-test", "60", "--epochs", "4",
         "--batch-size", "32", "--noise-rate", "0.3", "--probe-size", "64", "--separation", "3"]


def test_make_data_summary(tmp_path):
    out = tmp_path / "d.txt"
    assert main(["make-data", "--kind", "symmetric", "--rate", "0.25", "--n", "5000", "--classes", "10",
                 "--dim", "32", "--seed", "1", "--out", str(out)]) == 0
    summary = json.loads((tmp_path / "d.txt.summary.json").read_text())
    assert summary["n"] == 5000 and summary["classes"] == 10
    assert abs(summary["binomial_z"]) < 4
    assert abs(summary["realized_rate"] - 0.25) < 0.03
    assert load_dataset(out).noise_rate == summary["realized_rate"]


def test_make_data_deterministic(tmp_path):
    args = ["make-data", "--rate", "0.3", "--n", "300", "--dim", "5", "--classes", "4", "--n-test", "50"]
    main(args + ["--out", str(tmp_path / "a.txt")])
    main(args + ["--out", str(tmp_path / "b.txt")])
    assert (tmp_path / "a.txt").read_bytes() == (tmp_path / "b.txt").read_bytes()
    assert (tmp_path / "a.test.txt").read_bytes() == (tmp_path / "b.test.txt").read_bytes()


def test_make_data_bad_rate(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["make-data", "--rate", "1.5", "--out", str(tmp_path / "d.txt")])
    assert exc.value.code == 2
    assert "--rate" in capsys.readouterr().err
    assert not (tmp_path / "d.txt").exists()


def test_make_data_bad_kind(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["make-data", "--kind", "gaussian", "--rate", "0.2", "--out", str(tmp_path / "d.txt")])
    assert exc.value.code == 2


def test_run_writes_metrics_and_config(tmp_path):
    assert main(["run", *SMALL, "--mode", "saner", "--out", str(tmp_path / "r")]) == 0
    rec = read_metrics(tmp_path / "r/metrics.csv")
    assert len(rec.rows) == 4
    cfg = load_config(tmp_path / "r/config.txt")
    assert cfg.optim.k == 1 and cfg.optim.rho == 0.1 and cfg.optim.alpha_target == 0.5
    assert cfg.optim.momentum == 0.9 and cfg.optim.weight_decay == 5e-4 and cfg.batch_size == 32


def test_default_resolution(tmp_path):
    main(["run", *SMALL, "--epochs", "8", "--out", str(tmp_path / "r")])
    assert load_config(tmp_path / "r/config.txt").optim.k == 2
    from saner_lab.cli import _resolve_config, build_parser
    args = build_parser().parse_args(["run", "--epochs", "200"])
    resolved = _resolve_config(args).resolved()
    assert resolved.optim.k == 50 and resolved.batch_size == 128 and resolved.lr_milestones == (100, 150)


def test_saner_alpha_one_matches_sam(tmp_path):
    main(["run", *SMALL, "--mode", "saner", "--alpha", "1.0", "--seed", "7", "--out", str(tmp_path / "a")])
    main(["run", *SMALL, "--mode", "sam", "--seed", "7", "--out", str(tmp_path / "b")])
    assert (tmp_path / "a/metrics.csv").read_bytes() == (tmp_path / "b/metrics.csv").read_bytes()


def test_sam_rho_zero_matches_sgd(tmp_path):
    main(["run", *SMALL, "--mode", "sam", "--rho", "0", "--seed", "7", "--out", str(tmp_path / "a")])
    main(["run", *SMALL, "--mode", "sgd", "--seed", "7", "--out", str(tmp_path / "b")])
    assert (tmp_path / "a/metrics.csv").read_bytes() == (tmp_path / "b/metrics.csv").read_bytes()


def test_resolved_config_reproduces_run(tmp_path):
    main(["run", *SMALL, "--mode", "sgd_gr_b", "--seed", "3", "--out", str(tmp_path / "a")])
    main(["run", "--config", str(tmp_path / "a/config.txt"), "--out", str(tmp_path / "b")])
    assert (tmp_path / "a/metrics.csv").read_bytes() == (tmp_path / "b/metrics.csv").read_bytes()
    assert (tmp_path / "a/config.txt").read_bytes() == (tmp_path / "b/config.txt").read_bytes()


def test_config_file_precedence(tmp_path):
    (tmp_path / "c.txt").write_text("# base\nepochs=3\nmode=sam\n")
    main(["run", *SMALL, "--config", str(tmp_path / "c.txt"), "--mode", "sgd", "--out", str(tmp_path / "r")])
    cfg = load_config(tmp_path / "r/config.txt")
    assert cfg.optim.mode == "sgd"
    assert cfg.epochs == 4  # explicit flag beats the file


def test_unknown_override_rejected(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["run", "--set", "learning_rate=0.1", "--out", str(tmp_path / "r")])
    assert exc.value.code == 2


def test_run_with_dataset_files(tmp_path):
    main(["make-data", "--rate", "0.3", "--n", "200", "--n-test", "60", "--dim", "6", "--classes", "3",
          "--separation", "3", "--out", str(tmp_path / "d.txt")])
    assert main(["run", *SMALL, "--train-path", str(tmp_path / "d.txt"), "--test-path",
                 str(tmp_path / "d.test.txt"), "--out", str(tmp_path / "r")]) == 0
    assert read_metrics(tmp_path / "r/metrics.csv").rows[-1].noisy_train_acc is not None


def test_run_divergence_exit_code(tmp_path):
    code = main(["run", *SMALL, "--mode", "sgd", "--eta", "1e12", "--momentum", "0", "--epochs", "30",
                 "--out", str(tmp_path / "r")])
    assert code == 3
    assert (tmp_path / "r/metrics.csv").exists()


def test_sweep_alpha_seeds(tmp_path):
    assert main(["sweep", *SMALL, "--mode", "saner", "--grid", "alpha=1,0.5", "--grid", "seed=1,2,3",
                 "--out", str(tmp_path / "s")]) == 0
    cells = sorted(p.name for p in (tmp_path / "s").iterdir() if p.is_dir())
    assert len(cells) == 6
    report = json.loads((tmp_path / "s/report.json").read_text())
    assert [g["runs"] for g in report["groups"]] == [3, 3]
    assert sorted(report["ranked_by_final_noisy_train_acc"]) == ["alpha=0.5", "alpha=1.0"]
    assert {c["assertion"] for c in report["comparisons"]} == {
        "noisy_acc_ordering", "test_acc_ordering", "pr_late_phase"}


def test_sweep_hybrid_modes(tmp_path):
    main(["sweep", *SMALL, "--grid", "mode=sam,sgd_gr_a,sgd_gr_b", "--out", str(tmp_path / "s")])
    report = json.loads((tmp_path / "s/report.json").read_text())
    assert [g["group"] for g in report["groups"]] == ["mode=sam", "mode=sgd_gr_a", "mode=sgd_gr_b"]


def test_sweep_single_cell_matches_run(tmp_path):
    main(["sweep", *SMALL, "--grid", "seed=5", "--out", str(tmp_path / "s")])
    main(["run", *SMALL, "--seed", "5", "--out", str(tmp_path / "r")])
    assert (tmp_path / "s/seed=5/metrics.csv").read_bytes() == (tmp_path / "r/metrics.csv").read_bytes()
    assert (tmp_path / "s/report.txt").exists()


def test_sweep_empty_grid_value(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["sweep", *SMALL, "--grid", "alpha=", "--out", str(tmp_path / "s")])
    assert exc.value.code == 2


def test_diagnose_matches_run(tmp_path):
    main(["run", *SMALL, "--seed", "2", "--out", str(tmp_path / "r")])
    main(["diagnose", *SMALL, "--seed", "2", "--out", str(tmp_path / "d")])
    full = read_metrics(tmp_path / "r/metrics.csv")
    diag = read_metrics(tmp_path / "d/diagnostics.csv", ("epoch", "frac_a", "frac_b", "frac_c",
                                                         "p_clean", "p_noise", "pr"))
    for a, b in zip(full.rows, diag.rows):
        assert (a.frac_a, a.frac_b, a.frac_c, a.p_clean, a.p_noise, a.pr) == \
               (b.frac_a, b.frac_b, b.frac_c, b.p_clean, b.p_noise, b.pr)


def test_diagnose_clean_data(tmp_path, caplog):
    main(["diagnose", *SMALL, "--noise-rate", "0", "--out", str(tmp_path / "d")])
    lines = (tmp_path / "d/diagnostics.csv").read_text().splitlines()
    assert lines[0] == "epoch,frac_a,frac_b,frac_c,p_clean,p_noise,pr"
    for line in lines[1:]:
        assert line.endswith(",,,")  # p_clean, p_noise, pr empty
    assert "no flagged noisy samples" in caplog.text


def _two_runs(tmp_path):
    main(["run", *SMALL, "--mode", "sgd", "--out", str(tmp_path / "sgd")])
    main(["run", *SMALL, "--mode", "sam", "--out", str(tmp_path / "sam")])
    main(["run", *SMALL, "--mode", "saner", "--out", str(tmp_path / "saner")])
    return [str(tmp_path / m / "metrics.csv") for m in ("sgd", "sam", "saner")]


def test_plot_three_series(tmp_path):
    csvs = _two_runs(tmp_path)
    assert main(["plot", *csvs, "--column", "noisy_train_acc", "--column", "pr",
                 "--out-dir", str(tmp_path / "p")]) == 0
    svg = (tmp_path / "p/noisy_train_acc.svg").read_text()
    assert svg.count("<polyline") == 3
    for name in ("sgd", "sam", "saner"):
        assert f">{name}</text>" in svg
    assert (tmp_path / "p/pr.svg").exists()
    main(["plot", *csvs, "--column", "noisy_train_acc", "--out-dir", str(tmp_path / "q")])
    assert (tmp_path / "q/noisy_train_acc.svg").read_bytes() == (tmp_path / "p/noisy_train_acc.svg").read_bytes()


def test_plot_unknown_column(tmp_path, capsys):
    csvs = _two_runs(tmp_path)
    with pytest.raises(SystemExit) as exc:
        main(["plot", *csvs, "--column", "loss", "--out-dir", str(tmp_path / "p")])
    assert exc.value.code == 2
    assert "noisy_train_acc" in capsys.readouterr().err


def test_plot_empty_csv(tmp_path):
    (tmp_path / "e.csv").write_text("epoch,noisy_train_acc\n")
    with pytest.raises(SystemExit):
        main(["plot", str(tmp_path / "e.csv"), "--column", "noisy_train_acc", "--out-dir", str(tmp_path / "p")])
    assert not (tmp_path / "p/noisy_train_acc.svg").exists()


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "saner_lab", "make-data", "--rate", "2",
                           "--out", str(tmp_path / "d.txt")], capture_output=True, text=True)
    assert proc.returncode == 2
