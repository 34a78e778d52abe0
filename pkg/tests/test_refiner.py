"""
Tests for facial keypoint refinement
"""
import numpy as np
import pytest
import torch

from tips_pose.errors import ShapeMismatchError, TipsValidationError, TrainingDiagnosticError
from tips_pose.schemas import FACIAL_INDICES, JOINT_INDEX, RefinerConfig
from tips_pose.services.checkpoints import load_checkpoint, save_checkpoint
from tips_pose.services.refiner import (
    RefineNet,
    apply_refinement,
    facial_dataset,
    refine,
    refiner_from_checkpoint,
    train_refiner,
)
from tips_pose.services.synth_data import sample_figure

from tests.helpers import make_keypoints


# Facial offsets from the nose: right eye, left eye, right ear, left ear
FACE_TEMPLATES = {
    "straight": [(-2, -2), (2, -2), (-4, -1), (4, -1)],
    "left": [(-3, -2), (1, -2), (-5, -1), (2, -1)],
    "right": [(-1, -2), (3, -2), (-2, -1), (5, -1)],
}


def _with_face(base, offsets, nose=(32.0, 14.0)):
    xy = base.xy().copy()
    xy[FACIAL_INDICES[0]] = nose
    for idx, (dx, dy) in zip(FACIAL_INDICES[1:], offsets):
        xy[idx] = (nose[0] + dx, nose[1] + dy)
    return make_keypoints(xy, base.visibility())


def _zero_net() -> RefineNet:
    net = RefineNet(RefinerConfig())
    with torch.no_grad():
        for p in net.parameters():
            p.zero_()
    return net


class TestRefineNet:
    """Network and single-vector refinement"""

    def test_zero_parameters_output_zeros(self):
        out = refine(np.linspace(-1, 1, 10), _zero_net())
        assert out.shape == (10,)
        assert np.all(out == 0.0)

    def test_output_bounded(self):
        torch.manual_seed(0)
        out = refine(np.full(10, 50.0), RefineNet(RefinerConfig()))
        assert np.all(np.abs(out) <= 1.0)

    def test_wrong_length(self):
        with pytest.raises(TipsValidationError):
            refine(np.zeros(8), _zero_net())

    def test_non_finite_input(self):
        vec = np.zeros(10)
        vec[3] = np.nan
        with pytest.raises(TipsValidationError) as exc_info:
            refine(vec, _zero_net())
        assert "non-finite" in str(exc_info.value)

    def test_batch_shape_checked(self):
        with pytest.raises(ShapeMismatchError):
            RefineNet(RefinerConfig())(torch.zeros(2, 12))


class TestApplyRefinement:
    """Replacing the face inside a full keypoint set"""

    def test_zero_net_collapses_face_onto_nose(self, centred_keypoints):
        outcome = apply_refinement(centred_keypoints, _zero_net())
        assert not outcome.skipped
        nose = centred_keypoints.joint("nose")
        for idx in FACIAL_INDICES:
            joint = outcome.keypoints.joints[idx]
            assert (joint.x, joint.y) == (nose.x, nose.y)

    def test_body_untouched(self, centred_keypoints):
        xy = centred_keypoints.xy()
        visible = centred_keypoints.visibility().copy()
        wrist = JOINT_INDEX["right_wrist"]
        visible[wrist] = False
        xy[wrist] = 0.0
        kps = make_keypoints(xy, visible)

        torch.manual_seed(4)
        out = apply_refinement(kps, RefineNet(RefinerConfig())).keypoints
        body = [i for i in range(18) if i not in FACIAL_INDICES]
        np.testing.assert_array_equal(out.xy()[body], kps.xy()[body])
        np.testing.assert_array_equal(out.visibility(), kps.visibility())

    def test_occluded_nose_skips(self, centred_keypoints):
        visible = centred_keypoints.visibility().copy()
        visible[JOINT_INDEX["nose"]] = False
        xy = centred_keypoints.xy()
        xy[JOINT_INDEX["nose"]] = 0.0
        kps = make_keypoints(xy, visible)
        outcome = apply_refinement(kps, _zero_net())
        assert outcome.skipped
        assert outcome.keypoints == kps

    def test_degenerate_face_skips(self, centred_keypoints):
        xy = centred_keypoints.xy()
        xy[list(FACIAL_INDICES)] = xy[JOINT_INDEX["nose"]]
        kps = make_keypoints(xy)
        assert apply_refinement(kps, _zero_net()).skipped


class TestFacialDataset:
    """Collecting training vectors"""

    def test_skips_unusable_faces(self, centred_keypoints):
        visible = centred_keypoints.visibility().copy()
        visible[JOINT_INDEX["left_ear"]] = False
        xy = centred_keypoints.xy()
        xy[JOINT_INDEX["left_ear"]] = 0.0
        partial = make_keypoints(xy, visible)
        data = facial_dataset([centred_keypoints, partial, centred_keypoints])
        assert data.shape == (2, 10)
        assert data.dtype == np.float32

    def test_all_unusable(self, centred_keypoints):
        visible = np.zeros(18, dtype=bool)
        empty = make_keypoints(np.zeros((18, 2)), visible)
        assert facial_dataset([empty]).shape == (0, 10)


class TestTraining:
    """Denoising regressor training"""

    @pytest.fixture
    def faces(self, centred_keypoints):
        sets = [_with_face(centred_keypoints, offsets) for offsets in FACE_TEMPLATES.values()]
        return facial_dataset(sets * 8)

    def test_trace_has_one_row_per_epoch(self, faces):
        result = train_refiner(faces, RefinerConfig(epochs=4, batch_size=8, seed=1))
        assert result.trace.columns == ("epoch", "mse")
        assert result.trace.column("epoch") == [1, 2, 3, 4]
        assert result.checkpoint.stage == "refiner"

    def test_same_seed_same_weights(self, faces):
        cfg = RefinerConfig(epochs=3, batch_size=8, seed=2)
        a = train_refiner(faces, cfg)
        b = train_refiner(faces, cfg)
        assert a.trace.rows == b.trace.rows
        for name in a.checkpoint.blocks:
            np.testing.assert_array_equal(a.checkpoint.blocks[name], b.checkpoint.blocks[name])

    def test_noise_free_training_reduces_error(self, faces):
        result = train_refiner(faces, RefinerConfig(epochs=40, batch_size=8, perturbation_sigma=0.0, seed=3))
        mse = result.trace.column("mse")
        assert mse[-1] < mse[0]

    def test_divergence_aborts(self, faces):
        with pytest.raises(TrainingDiagnosticError) as exc_info:
            train_refiner(faces, RefinerConfig(epochs=2, divergence_threshold=1e-9, seed=0))
        assert "exceeded" in str(exc_info.value)

    def test_empty_dataset(self):
        with pytest.raises(TipsValidationError) as exc_info:
            train_refiner(np.zeros((0, 10)), RefinerConfig(epochs=1))
        assert "empty" in str(exc_info.value)

    def test_checkpoint_round_trip(self, faces, tmp_path):
        result = train_refiner(faces, RefinerConfig(epochs=2, batch_size=8, seed=5))
        path = save_checkpoint(result.checkpoint, tmp_path / "refiner.ckpt")
        net = refiner_from_checkpoint(load_checkpoint(path, expected_stage="refiner"))
        vec = faces[0]
        np.testing.assert_array_equal(refine(vec, net), refine(vec, result.net))


class TestGradients:
    """Autodiff against central differences"""

    def test_mse_parameter_gradients(self):
        torch.manual_seed(0)
        net = RefineNet(RefinerConfig(hidden_dim=6, hidden_layers=1)).double()
        net.reset_parameters()
        noisy = torch.randn(5, 10, dtype=torch.float64) * 0.3
        clean = torch.randn(5, 10, dtype=torch.float64) * 0.3

        loss = torch.nn.functional.mse_loss(net(noisy), clean)
        params = list(net.parameters())
        grads = torch.autograd.grad(loss, params)

        h = 1e-6
        with torch.no_grad():
            for p, g in zip(params, grads):
                flat, gflat = p.view(-1), g.reshape(-1)
                for i in range(flat.numel()):
                    orig = flat[i].item()
                    flat[i] = orig + h
                    up = torch.nn.functional.mse_loss(net(noisy), clean).item()
                    flat[i] = orig - h
                    down = torch.nn.functional.mse_loss(net(noisy), clean).item()
                    flat[i] = orig
                    numeric = (up - down) / (2 * h)
                    assert abs(numeric - gflat[i].item()) <= 1e-3 * max(abs(numeric), 1e-4)


@pytest.mark.slow
class TestDenoising:
    """A refiner trained with the default settings pulls unseen perturbed faces back to the clean ones"""

    def test_held_out_error_at_most_half_the_noise(self, schema):
        faces = facial_dataset([sample_figure(seed, schema, 64)[1] for seed in range(1500)])
        split = int(0.8 * len(faces))
        train, held_out = faces[:split], faces[split:]
        assert len(held_out) >= 100

        result = train_refiner(train, RefinerConfig(seed=0))

        rng = np.random.default_rng(0)
        clean = np.repeat(held_out, 20, axis=0).astype(np.float64)
        noisy = clean + rng.normal(0.0, 0.05, size=clean.shape)
        with torch.no_grad():
            refined = result.net.eval()(torch.as_tensor(noisy, dtype=torch.float32)).double().numpy()
        before = np.mean((noisy - clean) ** 2)
        after = np.mean((refined - clean) ** 2)
        assert before == pytest.approx(0.05 ** 2, rel=0.05)
        assert after <= 0.5 * before
