import json
import subprocess
import sys

import numpy as np
import pytest
from PIL import Image

from liftseg.cli import main
from liftseg.fileio import read_feature_stack, save_label_png
from liftseg.gabor import default_texture_bank

from synth import grating, three_region_labels, indicator_features


def run_cli(*args):
    """Run the CLI in-process; returns the exit code."""
    return main(list(args))


def run_cli_subprocess(*args):
    return subprocess.run(
        [sys.executable, "-m", "liftseg", *args],
        capture_output=True, text=True,
    )


@pytest.fixture
def texture_png(tmp_path):
    # 160x160 so even the largest bank kernel (side 137) fits
    path = tmp_path / "texture.png"
    f = grating(160, 160, np.sqrt(2) / 8)
    Image.fromarray(np.round(255 * f).astype(np.uint8), mode="L").save(path)
    return path


@pytest.fixture
def spec_json(tmp_path):
    path = tmp_path / "spec.json"
    path.write_text(default_texture_bank().to_json())
    return path


@pytest.fixture
def small_spec_json(tmp_path):
    path = tmp_path / "small_spec.json"
    path.write_text(json.dumps({"groups": [
        [{"theta": 0.0, "omega": 0.3536}],
        [{"theta": 0.0, "omega": 0.1768}],
    ]}))
    return path


class TestLiftGabor:
    def test_writes_fstk(self, tmp_path, texture_png, spec_json):
        out = tmp_path / "features.fstk"
        assert run_cli("lift-gabor", "--input", str(texture_png),
                       "--spec", str(spec_json), "--output", str(out)) == 0
        stack = read_feature_stack(out)
        assert stack.shape == (3, 160, 160)

    def test_missing_input_exits_2_without_output(self, tmp_path, spec_json):
        out = tmp_path / "features.fstk"
        code = run_cli("lift-gabor", "--input", str(tmp_path / "missing.png"),
                       "--spec", str(spec_json), "--output", str(out))
        assert code == 2
        assert not out.exists()

    def test_invalid_omega_names_filter(self, tmp_path, texture_png, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"groups": [[{"theta": 0.0, "omega": -2.0}]]}))
        out = tmp_path / "f.fstk"
        code = run_cli("lift-gabor", "--input", str(texture_png),
                       "--spec", str(bad), "--output", str(out))
        assert code == 2
        assert "group 0 filter 0" in capsys.readouterr().err
        assert not out.exists()


class TestLiftCnn:
    def test_defaults_reduced_iters(self, tmp_path, texture_png):
        out = tmp_path / "f.fstk"
        params = tmp_path / "net.lsnn"
        trace = tmp_path / "loss.csv"
        code = run_cli("lift-cnn", "--input", str(texture_png), "--iters", "8",
                       "--output", str(out), "--save-params", str(params),
                       "--loss-trace", str(trace))
        assert code == 0
        assert read_feature_stack(out).shape == (3, 160, 160)
        lines = trace.read_text().strip().splitlines()
        assert lines[0] == "iteration,loss"
        assert len(lines) == 9
        assert params.exists()

    def test_invalid_alpha_combination(self, tmp_path, texture_png, capsys):
        out = tmp_path / "f.fstk"
        code = run_cli("lift-cnn", "--input", str(texture_png),
                       "--alpha1", "0.6", "--alpha2", "0.5",
                       "--output", str(out))
        assert code == 2
        assert "alpha1+alpha2 must be < 1" in capsys.readouterr().err
        assert not out.exists()

    def test_same_seed_byte_identical(self, tmp_path, texture_png):
        a = tmp_path / "a.fstk"
        b = tmp_path / "b.fstk"
        for out in (a, b):
            assert run_cli("lift-cnn", "--input", str(texture_png), "--iters", "6",
                           "--seed", "3", "--output", str(out)) == 0
        assert a.read_bytes() == b.read_bytes()

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_diverging_training_exits_3(self, tmp_path, texture_png, capsys):
        # an absurd learning rate overflows the forward pass within a few steps
        out = tmp_path / "f.fstk"
        code = run_cli("lift-cnn", "--input", str(texture_png), "--iters", "10",
                       "--lr", "1e150", "--output", str(out))
        assert code == 3
        assert "non-finite loss at iteration" in capsys.readouterr().err
        assert not out.exists()


class TestSegment:
    @pytest.fixture
    def features_file(self, tmp_path):
        from liftseg.fileio import write_feature_stack
        from liftseg.model import normalize_features

        truth = three_region_labels(32, 32)
        phi = normalize_features(indicator_features(truth, noise_sigma=0.05, seed=1))
        path = tmp_path / "phi.fstk"
        write_feature_stack(path, phi)
        return path

    def test_produces_labels_soft_and_report(self, tmp_path, features_file):
        labels = tmp_path / "labels.png"
        soft = tmp_path / "soft.fstk"
        report = tmp_path / "report.json"
        code = run_cli("segment", "--features", str(features_file),
                       "--lambda", "0.2", "--output-labels", str(labels),
                       "--output-soft", str(soft), "--report", str(report))
        assert code == 0
        img = Image.open(labels)
        assert img.mode == "P"
        assert img.size == (32, 32)
        doc = json.loads(report.read_text())
        assert doc["trace"]["converged"] is True
        assert doc["energy"]["total"] >= 0.0
        assert doc["k"] == 3

    def test_nonpositive_lambda_rejected(self, tmp_path, features_file):
        code = run_cli("segment", "--features", str(features_file),
                       "--lambda", "0", "--output-labels", str(tmp_path / "l.png"))
        assert code == 2

    def test_zero_max_iter_rejected(self, tmp_path, features_file):
        code = run_cli("segment", "--features", str(features_file),
                       "--max-iter", "0", "--output-labels", str(tmp_path / "l.png"))
        assert code == 2

    def test_corrupt_fstk_rejected(self, tmp_path, features_file, capsys):
        blob = features_file.read_bytes()
        bad = tmp_path / "bad.fstk"
        bad.write_bytes(blob[:-10])
        out = tmp_path / "l.png"
        code = run_cli("segment", "--features", str(bad),
                       "--output-labels", str(out))
        assert code == 2
        assert "payload size mismatch" in capsys.readouterr().err
        assert not out.exists()

    def test_rerun_byte_identical(self, tmp_path, features_file):
        outs = []
        for tag in ("a", "b"):
            labels = tmp_path / f"labels_{tag}.png"
            soft = tmp_path / f"soft_{tag}.fstk"
            assert run_cli("segment", "--features", str(features_file),
                           "--output-labels", str(labels),
                           "--output-soft", str(soft)) == 0
            outs.append((labels.read_bytes(), soft.read_bytes()))
        assert outs[0] == outs[1]


class TestEvaluateCommand:
    def test_identical_maps(self, tmp_path):
        labels = np.random.default_rng(0).integers(0, 3, (10, 10))
        a = tmp_path / "a.png"
        save_label_png(labels, a)
        report = tmp_path / "rep.json"
        assert run_cli("evaluate", "--pred", str(a), "--truth", str(a),
                       "--matching", "fixed", "--report", str(report)) == 0
        doc = json.loads(report.read_text())
        assert all(d == 1.0 for d in doc["per_class_dice"])

    def test_four_pixel_fixture(self, tmp_path):
        pred = np.array([[0, 0, 1, 1]] * 3)
        truth = np.array([[0, 1, 1, 1]] * 3)
        p = tmp_path / "pred.png"
        t = tmp_path / "truth.png"
        save_label_png(pred, p)
        save_label_png(truth, t)
        report = tmp_path / "rep.json"
        assert run_cli("evaluate", "--pred", str(p), "--truth", str(t),
                       "--matching", "fixed", "--report", str(report)) == 0
        doc = json.loads(report.read_text())
        assert doc["per_class_dice"][0] == pytest.approx(2 / 3)
        assert doc["per_class_dice"][1] == pytest.approx(4 / 5)

    def test_size_mismatch(self, tmp_path):
        a = tmp_path / "a.png"
        b = tmp_path / "b.png"
        save_label_png(np.zeros((4, 4), int), a)
        save_label_png(np.zeros((4, 5), int), b)
        code = run_cli("evaluate", "--pred", str(a), "--truth", str(b),
                       "--report", str(tmp_path / "r.json"))
        assert code == 2


class TestPipeline:
    def _config(self, tmp_path, truth_path=None):
        cfg = {
            "lifting": "gabor",
            "gabor_spec": {"groups": [
                [{"theta": 0.0, "omega": 0.3536}],
                [{"theta": 0.0, "omega": 0.0884}],
            ]},
            "solver": {"lambda": 0.2, "max_iter": 500},
        }
        if truth_path:
            cfg["truth"] = str(truth_path)
        path = tmp_path / "config.json"
        path.write_text(json.dumps(cfg))
        return path

    def test_all_artifacts_present(self, tmp_path, texture_png):
        cfg = self._config(tmp_path)
        outdir = tmp_path / "out"
        assert run_cli("pipeline", "--input", str(texture_png),
                       "--config", str(cfg), "--outdir", str(outdir)) == 0
        for name in ("features.fstk", "soft_labels.fstk", "labels.png",
                     "overlay.png", "report.json"):
            assert (outdir / name).exists(), name
        doc = json.loads((outdir / "report.json").read_text())
        assert "failed_stage" not in doc
        assert doc["lifting"] == "gabor"

    def test_with_truth_adds_evaluation(self, tmp_path, texture_png):
        truth = tmp_path / "truth.png"
        save_label_png(np.ones((160, 160), dtype=int), truth)
        cfg = self._config(tmp_path, truth)
        outdir = tmp_path / "out"
        assert run_cli("pipeline", "--input", str(texture_png),
                       "--config", str(cfg), "--outdir", str(outdir)) == 0
        doc = json.loads((outdir / "report.json").read_text())
        assert "evaluation" in doc
        assert "per_class_dice" in doc["evaluation"]

    def test_cnn_lifting_reruns_report_identical_energy(self, tmp_path):
        img = tmp_path / "img.png"
        f = grating(32, 32, np.sqrt(2) / 8)
        Image.fromarray(np.round(255 * f).astype(np.uint8), mode="L").save(img)
        cfg = tmp_path / "config.json"
        cfg.write_text(json.dumps({
            "lifting": "cnn",
            "cnn": {"k": 2, "iterations": 25, "seed": 11},
            "solver": {"lambda": 0.2, "max_iter": 300},
        }))
        energies = []
        for tag in ("a", "b"):
            outdir = tmp_path / tag
            assert run_cli("pipeline", "--input", str(img),
                           "--config", str(cfg), "--outdir", str(outdir)) == 0
            doc = json.loads((outdir / "report.json").read_text())
            energies.append((doc["energy"]["total"], doc["final_loss"]))
        assert energies[0] == energies[1]

    def test_bad_lifting_tag(self, tmp_path, texture_png):
        cfg = tmp_path / "config.json"
        cfg.write_text(json.dumps({"lifting": "magic"}))
        code = run_cli("pipeline", "--input", str(texture_png),
                       "--config", str(cfg), "--outdir", str(tmp_path / "o"))
        assert code == 2

    def test_failed_stage_recorded(self, tmp_path):
        # kernels larger than the image make the lifting stage fail
        small = tmp_path / "small.png"
        Image.fromarray(np.full((16, 16), 128, dtype=np.uint8), mode="L").save(small)
        cfg = tmp_path / "config.json"
        cfg.write_text(json.dumps({
            "lifting": "gabor",
            "gabor_spec": {"groups": [[{"theta": 0.0, "omega": 0.01}]]},
        }))
        outdir = tmp_path / "out"
        code = run_cli("pipeline", "--input", str(small),
                       "--config", str(cfg), "--outdir", str(outdir))
        assert code == 2
        doc = json.loads((outdir / "report.json").read_text())
        assert doc["failed_stage"] == "lifting"

    def test_unwritable_outdir(self, tmp_path, texture_png):
        cfg = self._config(tmp_path)
        blocked = tmp_path / "blocked"
        blocked.write_text("a file, not a directory")
        code = run_cli("pipeline", "--input", str(texture_png),
                       "--config", str(cfg), "--outdir", str(blocked))
        assert code == 2


class TestEntryPoint:
    def test_module_invocation(self):
        proc = run_cli_subprocess("--version")
        assert proc.returncode == 0
        assert "liftseg" in proc.stdout

    def test_unknown_command_exits_2(self):
        proc = run_cli_subprocess("frobnicate")
        assert proc.returncode == 2
