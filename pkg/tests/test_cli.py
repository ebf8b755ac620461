"""CLI commands end to end against tiny configs and checkpoints."""

import json

import numpy as np
import pytest

from vigan import gradsuite
from vigan.cli import main
from vigan.data import decode_png
from vigan.inference import render_grid


def tiny_config_dict(out_seed=11, total_steps=3):
    return {
        "batch_size": 4, "total_steps": total_steps, "seed": out_seed,
        "lambda1": 1.0, "lambda2": 1.0, "optimizer": {},
        "checkpoint_every": 0, "eval_every": 0,
        "dataset": {"type": "two_glyph", "grid_size": 16, "glyph_size": 6,
                    "classes_per_slot": 4, "n_samples": 16, "heldout": 4,
                    "seed": 2},
        "model": {"image_size": 16, "channels": 1, "z_dim": 8, "c_dim": 8,
                  "conv_channels": [4, 8], "gen_channels": [8, 8],
                  "fc_dim": 16, "rec_fc_dim": 16, "leaky_slope": 0.2,
                  "logvar_min": -8, "logvar_max": 8,
                  "attr_groups": [["slot1", 4], ["slot2", 4]]},
    }


@pytest.fixture(scope="module")
def trained_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    cfg = out / "config.json"
    cfg.write_text(json.dumps(tiny_config_dict()))
    assert main(["train", "--config", str(cfg), "--out", str(out)]) == 0
    return out


class TestTrainCommand:
    def test_outputs_exist(self, trained_dir):
        assert (trained_dir / "metrics.log").exists()
        assert (trained_dir / "final.ckpt").exists()

    def test_same_config_and_seed_identical_checkpoints(self, tmp_path):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps(tiny_config_dict(total_steps=2)))
        assert main(["train", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
        assert main(["train", "--config", str(cfg), "--out", str(tmp_path / "b")]) == 0
        assert (tmp_path / "a" / "final.ckpt").read_bytes() == \
            (tmp_path / "b" / "final.ckpt").read_bytes()

    def test_resume_continues_step_counter(self, tmp_path):
        cfg_path = tmp_path / "c.json"
        cfg_path.write_text(json.dumps(tiny_config_dict(total_steps=2)))
        out = tmp_path / "run"
        assert main(["train", "--config", str(cfg_path), "--out", str(out)]) == 0
        longer = tiny_config_dict(total_steps=4)
        cfg_path.write_text(json.dumps(longer))
        assert main(["train", "--config", str(cfg_path), "--out", str(out),
                     "--resume", str(out / "final.ckpt")]) == 0
        from vigan.checkpoint import load_checkpoint
        assert load_checkpoint(out / "final.ckpt").step == 4

    def test_invalid_config_diagnostic(self, tmp_path, capsys):
        cfg = tmp_path / "bad.json"
        d = tiny_config_dict()
        d["typo_key"] = 1
        cfg.write_text(json.dumps(d))
        assert main(["train", "--config", str(cfg), "--out", str(tmp_path)]) == 2
        assert "typo_key" in capsys.readouterr().err

    def test_malformed_json_line_diagnostic(self, tmp_path, capsys):
        cfg = tmp_path / "bad.json"
        cfg.write_text("{\n  \"batch_size\": 4,\n  oops\n}")
        assert main(["train", "--config", str(cfg), "--out", str(tmp_path)]) == 2
        err = capsys.readouterr().err
        assert ":3:" in err  # line number of the defect


class TestSampleCommand:
    def test_grid_dimensions(self, trained_dir, tmp_path):
        out = tmp_path / "grid.png"
        assert main(["sample", "--ckpt", str(trained_dir / "final.ckpt"),
                     "--n", "16", "--out", str(out), "--seed", "3"]) == 0
        img = decode_png(out.read_bytes())
        # 4x4 tiles of 16px + 3 separators of 2px = 70
        assert img.shape == (1, 70, 70)

    def test_single_tile(self, trained_dir, tmp_path):
        out = tmp_path / "one.png"
        assert main(["sample", "--ckpt", str(trained_dir / "final.ckpt"),
                     "--n", "1", "--out", str(out)]) == 0
        assert decode_png(out.read_bytes()).shape == (1, 16, 16)

    def test_fixed_seed_identical_bytes(self, trained_dir, tmp_path):
        args = ["sample", "--ckpt", str(trained_dir / "final.ckpt"), "--n", "4",
                "--seed", "9"]
        a, b = tmp_path / "a.png", tmp_path / "b.png"
        assert main(args + ["--out", str(a)]) == 0
        assert main(args + ["--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_grid_formula_property(self):
        rng = np.random.default_rng(0)
        for n in [1, 2, 3, 5, 9, 12, 16]:
            imgs = rng.uniform(-1, 1, (n, 1, 8, 8)).astype(np.float32)
            grid = render_grid(imgs)
            cols = int(np.ceil(np.sqrt(n)))
            rows = int(np.ceil(n / cols))
            assert grid.shape == (1, rows * 8 + (rows - 1) * 2,
                                  cols * 8 + (cols - 1) * 2)

    def test_sixteen_tiles_at_32px(self, rng):
        imgs = rng.uniform(-1, 1, (16, 1, 32, 32)).astype(np.float32)
        assert render_grid(imgs).shape == (1, 134, 134)


class TestEditCommand:
    def test_dataset_index_edit(self, trained_dir, tmp_path):
        out = tmp_path / "trip.png"
        assert main(["edit", "--ckpt", str(trained_dir / "final.ckpt"),
                     "--dataset-index", "0", "--set", "slot1=0",
                     "--out", str(out)]) == 0
        img = decode_png(out.read_bytes())
        assert img.shape == (1, 16, 3 * 16 + 2 * 2)

    def test_identity_edit_panels_match(self, trained_dir, tmp_path):
        out = tmp_path / "trip.png"
        assert main(["edit", "--ckpt", str(trained_dir / "final.ckpt"),
                     "--dataset-index", "1", "--out", str(out)]) == 0
        img = decode_png(out.read_bytes())
        second = img[:, :, 18:34]
        third = img[:, :, 36:52]
        assert np.array_equal(second, third)

    def test_unknown_group_rejected(self, trained_dir, tmp_path, capsys):
        code = main(["edit", "--ckpt", str(trained_dir / "final.ckpt"),
                     "--dataset-index", "0", "--set", "nose=1",
                     "--out", str(tmp_path / "x.png")])
        assert code == 2
        assert "nose" in capsys.readouterr().err

    def test_class_out_of_range(self, trained_dir, tmp_path, capsys):
        code = main(["edit", "--ckpt", str(trained_dir / "final.ckpt"),
                     "--dataset-index", "0", "--set", "slot1=9",
                     "--out", str(tmp_path / "x.png")])
        assert code == 2
        assert "out of range" in capsys.readouterr().err


class TestGradcheckCommand:
    def test_single_module_passes(self, capsys):
        assert main(["gradcheck", "--module", "conv2d", "--points", "3"]) == 0
        out = capsys.readouterr().out
        assert "conv2d" in out and "passed" in out

    def test_unknown_module(self, capsys):
        assert main(["gradcheck", "--module", "qconv"]) == 2

    def test_corrupted_backward_detected(self, capsys, monkeypatch):
        # fault injection: break tanh's backward rule and expect a named failure
        import vigan.tensor as vt

        real_tanh = vt.tanh

        def broken_tanh(x):
            out = np.tanh(x.value)
            return vt.Var(x.tape, x.tape.record(
                "tanh", (x.id,), out, lambda g: (g * (1 - 0.5 * out * out),)))

        monkeypatch.setattr(vt, "tanh", broken_tanh)
        monkeypatch.setattr(gradsuite.T, "tanh", broken_tanh)
        code = main(["gradcheck", "--module", "tanh", "--points", "2"])
        captured = capsys.readouterr().out
        assert code == 1
        assert "tanh" in captured and "FAIL" in captured


class TestDatasetCommand:
    def test_writes_folder_and_preview(self, tmp_path):
        out = tmp_path / "ds"
        assert main(["dataset", "--out", str(out), "--n", "8", "--grid", "16",
                     "--glyph", "6", "--classes", "4", "--seed", "1"]) == 0
        assert (out / "attributes.csv").exists()
        assert (out / "preview.png").exists()
        from vigan.data import load_folder
        assert len(load_folder(out)) == 8

    def test_usage_error_exit_code(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["dataset"])  # missing --out
        assert exc.value.code == 2
