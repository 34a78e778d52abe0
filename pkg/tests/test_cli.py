"""
Tests for the command-line entry point
"""
import json

import pytest

from tips_pose.main import MODE_ALIASES, build_parser, run_command


TINY_CONFIG = """
[data]
count = 24
size = 32
test_fraction = 0.25

[generator]
latent_dim = 8
noise_dim = 8
upconv_filters = [8, 8]
out_size = 16

[critic]
latent_dim = 8
conv_filters = [8, 8]
in_size = 16
point_conv_filters = 8

[t2p]
iterations = 2
batch_size = 2

[refiner]
epochs = 2
hidden_dim = 8
batch_size = 4

[renderer]
levels = 4
base_filters = 4
residual_tail = 1

[discriminator]
filters = [4, 8]

[render]
iterations = 2
batch_size = 2

[gender]
epochs = 1
batch_size = 4
"""


class TestExitCodes:
    """Usage errors exit 1, runtime failures exit 2"""

    def test_no_arguments(self):
        assert run_command([]) == 1

    def test_unknown_command(self):
        assert run_command(["bogus"]) == 1

    def test_help(self, capsys):
        assert run_command(["--help"]) == 0
        assert "synth-data" in capsys.readouterr().out

    def test_missing_required_argument(self):
        assert run_command(["infer", "--target", "00000_1"]) == 1

    def test_bad_choice(self):
        assert run_command(["infer", "--source", "a", "--target", "b", "--mode", "sideways"]) == 1

    def test_target_is_required(self):
        assert run_command(["infer", "--source", "a"]) == 1

    def test_missing_dataset(self, tmp_path):
        assert run_command(["train-t2p", "--out", str(tmp_path)]) == 2

    def test_missing_config(self, tmp_path):
        assert run_command(["synth-data", "--config", str(tmp_path / "absent.cfg")]) == 2

    def test_invalid_override(self, tmp_path):
        assert run_command(["synth-data", "--out", str(tmp_path), "--size", "8"]) == 2


class TestParser:
    """Flags land where the handlers expect them"""

    def test_mode_aliases(self):
        assert MODE_ALIASES["partially-text"] == "partial"
        assert MODE_ALIASES["fully-text"] == "full"
        args = build_parser().parse_args(["infer", "--source", "a", "--target-text", "x", "--mode", "fully-text"])
        assert args.target_text == "x"
        assert args.no_refine is False

    def test_train_render_defaults(self):
        args = build_parser().parse_args(["train-render"])
        assert args.extractor == "random"
        assert args.attention is None
        assert args.steps is None

    def test_interp_defaults(self):
        args = build_parser().parse_args(["interp-demo", "--source", "a", "--start", "b", "--end", "c"])
        assert args.steps == 5


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    """Synthesise data and train all three stages at toy scale"""
    root = tmp_path_factory.mktemp("run")
    config = root / "tiny.cfg"
    config.write_text(TINY_CONFIG)
    common = ["--config", str(config), "--out", str(root / "out"), "--seed", "3"]
    assert run_command(["synth-data", *common]) == 0
    assert run_command(["train-t2p", *common]) == 0
    assert run_command(["train-refiner", *common]) == 0
    assert run_command(["train-render", *common, "--extractor", "none"]) == 0
    return root / "out", common


class TestEndToEnd:
    """Every command on a tiny dataset"""

    def test_training_outputs(self, tiny_run):
        out, _ = tiny_run
        for name in ("t2p", "refiner", "render"):
            assert (out / "checkpoints" / f"{name}.ckpt").is_file()
            assert (out / "traces" / f"{name}.csv").is_file()
        manifest = json.loads((out / "dataset" / "manifest.json").read_text())
        assert len(manifest["ids"]) == 24

    def test_t2p_trace_rows(self, tiny_run):
        out, _ = tiny_run
        lines = (out / "traces" / "t2p.csv").read_text().splitlines()
        assert lines[0] == "iteration,critic_loss,gp,gen_loss"
        assert len(lines) == 3

    def test_infer_partial(self, tiny_run):
        out, common = tiny_run
        assert run_command(["infer", *common, "--source", "00000_0", "--target", "00000_1"]) == 0
        assert (out / "infer" / "00000_0_to_00000_1_partial.png").is_file()
        record = json.loads((out / "infer" / "00000_0_to_00000_1_partial.json").read_text())
        assert record["mode"] == "partial"
        assert len(record["target_keypoints"]) == 18
        assert record["attention_levels"] == [1, 2, 3, 4]

    def test_infer_text_full_without_refinement(self, tiny_run):
        out, common = tiny_run
        sentence = (out / "dataset" / "annotations.txt").read_text().splitlines()[1].split("\t")[2]
        argv = ["infer", *common, "--source", "00000_0", "--target-text", sentence,
                "--mode", "fully-text", "--no-refine"]
        assert run_command(argv) == 0
        assert (out / "infer" / "00000_0_to_text_full_norefine.png").is_file()

    def test_infer_unknown_sample(self, tiny_run):
        _, common = tiny_run
        assert run_command(["infer", *common, "--source", "99999_0", "--target", "00000_1"]) == 2

    def test_eval_report(self, tiny_run):
        out, common = tiny_run
        assert run_command(["eval", *common]) == 0
        report = (out / "eval" / "report.txt").read_text()
        assert "Real Data" in report
        assert "1.000" in report
        assert "1.00" in report
        assert len(report.splitlines()) > 3

    def test_eval_real_only_toy_classifier(self, tiny_run):
        out, common = tiny_run
        assert run_command(["eval", *common, "--real-only", "--classifier", "toy"]) == 0
        assert (out / "checkpoints" / "gender.ckpt").is_file()
        assert len((out / "eval" / "report.txt").read_text().splitlines()) == 3

    def test_interp_demo(self, tiny_run):
        out, common = tiny_run
        argv = ["interp-demo", *common, "--source", "00000_0", "--start", "00000_0", "--end", "00001_0", "--steps", "3"]
        assert run_command(argv) == 0
        assert sorted(p.name for p in (out / "interp").iterdir()) == [
            "step_00.png", "step_01.png", "step_02.png", "strip.png",
        ]
