"""
Tests for keypoint/heatmap geometry

Test Coverage:
- Gaussian rendering values and occlusion channels
- Maximum-activation extraction, tie-breaking and the 0.2 occlusion floor
- Render/extract round trip (property-based)
- Facial normalisation, its inverse and its invariances
"""
import math

import numpy as np
import pytest
from hypothesis import given, settings as hsettings, strategies as st

from tips_pose.schemas import FACIAL_INDICES, FacialNormParams, HeatmapSpec, JOINT_INDEX, NUM_JOINTS
from tips_pose.services.pose_core import (
    DegenerateFaceError,
    HeatmapShapeError,
    HeatmapTensor,
    KeypointValidationError,
    RefinementInapplicableError,
    denormalize_facial,
    extract_keypoints,
    image_heatmap_spec,
    normalize_facial,
    render_heatmaps,
    replace_facial,
)
from tests.helpers import make_keypoints, random_keypoints


def _single_joint(x: float, y: float, joint: int = 0, size: int = 64):
    xy = np.zeros((NUM_JOINTS, 2))
    xy[joint] = (x, y)
    visible = np.zeros(NUM_JOINTS, dtype=bool)
    visible[joint] = True
    return make_keypoints(xy, visible, size, size)


class TestRenderHeatmaps:
    """Gaussian bump rendering"""

    def test_peak_is_one_at_joint(self):
        """A joint at (32, 32) peaks at exactly 1.0 there"""
        hm = render_heatmaps(_single_joint(32, 32), HeatmapSpec())
        assert hm.values[0, 32, 32] == 1.0
        assert hm.values[0].max() == 1.0
        assert np.unravel_index(np.argmax(hm.values[0]), (64, 64)) == (32, 32)

    def test_occluded_channel_is_zero(self):
        """Occluded joints produce all-zero channels"""
        hm = render_heatmaps(_single_joint(32, 32), HeatmapSpec())
        assert hm.values[1:].sum() == 0.0

    def test_closed_form_value(self):
        """One row below the joint the value is exp(-1 / (2 sigma^2))"""
        hm = render_heatmaps(_single_joint(10, 20), HeatmapSpec(sigma=1.5))
        expected = math.exp(-1.0 / (2 * 1.5 ** 2))
        assert hm.values[0, 21, 10] == pytest.approx(expected, rel=1e-6)
        assert expected == pytest.approx(0.8007, abs=1e-4)

    def test_rescales_into_heatmap_frame(self):
        """A 128 x 128 keypoint lands on the matching 64 x 64 pixel"""
        hm = render_heatmaps(_single_joint(65, 33, size=128), HeatmapSpec())
        row, col = np.unravel_index(np.argmax(hm.values[0]), (64, 64))
        assert (col, row) == (32, 16)

    def test_values_in_unit_range(self):
        """Every rendered value lies in [0, 1]"""
        hm = render_heatmaps(random_keypoints(np.random.default_rng(3)), HeatmapSpec())
        assert hm.values.min() >= 0.0
        assert hm.values.max() <= 1.0

    def test_rejects_joint_outside_small_map(self):
        """A keypoint frame larger than the one it claims is rejected, not clamped"""
        kps = _single_joint(63, 63, size=64)
        spec = HeatmapSpec(height=8, width=8)
        # still inside after rescaling
        render_heatmaps(kps, spec)
        wide = kps.model_copy(update={"image_width": 32})
        with pytest.raises(KeypointValidationError) as exc_info:
            render_heatmaps(wide, spec)
        assert "outside" in str(exc_info.value)

    def test_joint_in_last_half_pixel(self):
        """Any point inside the frame renders, including x in [W - 0.5, W)"""
        hm = render_heatmaps(_single_joint(63.7, 30.0), HeatmapSpec())
        assert np.unravel_index(np.argmax(hm.values[0]), (64, 64)) == (30, 63)
        kps = extract_keypoints(hm)
        assert (kps.joints[0].x, kps.joints[0].y) == (63.0, 30.0)
        assert kps.joints[0].visible

    def test_image_spec_scales_sigma(self):
        """At 256 pixels sigma grows fourfold"""
        spec = image_heatmap_spec(256, 1.5)
        assert (spec.height, spec.width) == (256, 256)
        assert spec.sigma == pytest.approx(6.0)


class TestHeatmapTensor:
    """Shape and range validation"""

    def test_rejects_wrong_channel_count(self):
        with pytest.raises(HeatmapShapeError):
            HeatmapTensor(np.zeros((17, 64, 64)))

    def test_rejects_tiny_maps(self):
        with pytest.raises(HeatmapShapeError):
            HeatmapTensor(np.zeros((NUM_JOINTS, 4, 4)))

    def test_rejects_out_of_range_values(self):
        with pytest.raises(HeatmapShapeError):
            HeatmapTensor(np.full((NUM_JOINTS, 8, 8), 1.5))

    def test_generator_output_mapping(self):
        """tanh output -1 / 0 / 1 maps to 0 / 0.5 / 1, and back to the critic range"""
        out = np.zeros((NUM_JOINTS, 8, 8), dtype=np.float32)
        out[0] = -1.0
        out[1] = 1.0
        hm = HeatmapTensor.from_generator_output(out)
        assert hm.values[0].max() == 0.0
        assert hm.values[1].min() == 1.0
        assert hm.values[2, 0, 0] == 0.5
        np.testing.assert_allclose(hm.to_critic_range(), out)


class TestExtractKeypoints:
    """Maximum-activation extraction"""

    def _channel_with_peak(self, peak: float) -> HeatmapTensor:
        values = render_heatmaps(_single_joint(20, 30), HeatmapSpec()).values.astype(np.float64)
        values[0] *= peak
        return HeatmapTensor(values)

    def test_below_threshold_is_occluded(self):
        """A peak of 0.19 marks the joint occluded"""
        kps = extract_keypoints(self._channel_with_peak(0.19))
        assert not kps.joints[0].visible

    def test_threshold_boundary(self):
        """0.1999 is occluded and 0.2 is visible"""
        assert not extract_keypoints(self._channel_with_peak(0.1999)).joints[0].visible
        visible = extract_keypoints(self._channel_with_peak(0.2)).joints[0]
        assert visible.visible
        assert (visible.x, visible.y) == (20.0, 30.0)

    def test_ties_resolve_row_major(self):
        """Equal maxima at (3, 3) and (5, 5) return (3, 3)"""
        values = np.zeros((NUM_JOINTS, 8, 8))
        values[0, 3, 3] = 0.9
        values[0, 5, 5] = 0.9
        joint = extract_keypoints(HeatmapTensor(values)).joints[0]
        assert (joint.x, joint.y) == (3.0, 3.0)

    def test_maps_into_image_frame(self):
        """Peaks are rescaled into the requested frame with pixel centres aligned"""
        values = np.zeros((NUM_JOINTS, 64, 64))
        values[0, 16, 32] = 1.0
        joint = extract_keypoints(HeatmapTensor(values), image_width=128, image_height=128).joints[0]
        assert (joint.x, joint.y) == (64.5, 32.5)

    def test_round_trip_fixed(self, centred_keypoints):
        """Render then extract recovers every coordinate and flag"""
        back = extract_keypoints(render_heatmaps(centred_keypoints, HeatmapSpec()))
        assert back == centred_keypoints

    @hsettings(max_examples=200, deadline=None)
    @given(seed=st.integers(min_value=0, max_value=2 ** 32 - 1))
    def test_round_trip_random(self, seed):
        """Joints at least 3 sigma from the border survive the round trip exactly"""
        kps = random_keypoints(np.random.default_rng(seed), border=5)
        back = extract_keypoints(render_heatmaps(kps, HeatmapSpec(sigma=1.5)))
        np.testing.assert_array_equal(back.visibility(), kps.visibility())
        vis = kps.visibility()
        np.testing.assert_array_equal(back.xy()[vis], kps.xy()[vis])

    def test_round_trip_thousand_sets(self):
        """1000 random sets round-trip exactly"""
        rng = np.random.default_rng(0)
        spec = HeatmapSpec()
        for _ in range(1000):
            kps = random_keypoints(rng)
            back = extract_keypoints(render_heatmaps(kps, spec))
            vis = kps.visibility()
            assert np.array_equal(back.visibility(), vis)
            assert np.array_equal(back.xy()[vis], kps.xy()[vis])


def _face(nose=(50.0, 60.0), offsets=None):
    offsets = offsets if offsets is not None else {
        "right_eye": (2.0, -2.0),
        "left_eye": (-1.0, -1.5),
        "right_ear": (1.5, 0.5),
        "left_ear": (-1.8, 0.2),
    }
    xy = np.full((NUM_JOINTS, 2), 10.0)
    xy[JOINT_INDEX["nose"]] = nose
    for name, (dx, dy) in offsets.items():
        xy[JOINT_INDEX[name]] = (nose[0] + dx, nose[1] + dy)
    return make_keypoints(xy, width=100, height=100)


class TestFacialNormalisation:
    """Nose-centred +-1 normalisation"""

    def test_nose_at_origin_and_extreme_eye(self):
        """The eye at (+2, -2) maps to (1, -1)"""
        vec, params = normalize_facial(_face())
        assert tuple(vec[:2]) == (0.0, 0.0)
        assert tuple(vec[2:4]) == (1.0, -1.0)
        assert params.scale == 2.0
        assert params.nose_origin == (50.0, 60.0)
        assert np.abs(vec).max() <= 1.0

    def test_occluded_facial_joint(self):
        """An occluded ear makes refinement inapplicable"""
        kps = _face()
        visible = kps.visibility()
        visible[JOINT_INDEX["left_ear"]] = False
        with pytest.raises(RefinementInapplicableError):
            normalize_facial(make_keypoints(kps.xy(), visible, 100, 100))

    def test_degenerate_face(self):
        """All five joints on the nose give a zero scale"""
        kps = _face(offsets={n: (0.0, 0.0) for n in ("right_eye", "left_eye", "right_ear", "left_ear")})
        with pytest.raises(DegenerateFaceError):
            normalize_facial(kps)

    def test_denormalize_zeros(self):
        """A zero vector puts every joint on the nose"""
        face = denormalize_facial(np.zeros(10), FacialNormParams(nose_origin=(50.0, 60.0), scale=3.0))
        np.testing.assert_array_equal(face, np.tile([50.0, 60.0], (5, 1)))

    def test_denormalize_linear(self):
        """(1, -1) at scale 2 around (50, 60) gives (52, 58)"""
        vec = np.array([1.0, -1.0] + [0.0] * 8)
        face = denormalize_facial(vec, FacialNormParams(nose_origin=(50.0, 60.0), scale=2.0))
        assert tuple(face[0]) == (52.0, 58.0)

    def test_round_trip_thousand_faces(self):
        """denormalize(normalize(face)) reproduces the face within 1e-9"""
        rng = np.random.default_rng(1)
        worst = 0.0
        for _ in range(1000):
            nose = tuple(rng.uniform(20, 80, size=2))
            offsets = {n: tuple(rng.uniform(-8, 8, size=2)) for n in ("right_eye", "left_eye", "right_ear", "left_ear")}
            kps = _face(nose, offsets)
            vec, params = normalize_facial(kps)
            face = denormalize_facial(vec, params)
            worst = max(worst, float(np.abs(face - kps.xy()[list(FACIAL_INDICES)]).max()))
        assert worst < 1e-9

    @hsettings(max_examples=100, deadline=None)
    @given(
        scale=st.floats(min_value=0.25, max_value=4.0),
        tx=st.floats(min_value=-10.0, max_value=10.0),
        ty=st.floats(min_value=-10.0, max_value=10.0),
    )
    def test_scale_and_translation_invariance(self, scale, tx, ty):
        """Uniformly scaling and shifting the face leaves the vector unchanged"""
        offsets = {"right_eye": (2.0, -2.0), "left_eye": (-1.0, -1.5), "right_ear": (1.5, 0.5), "left_ear": (-1.8, 0.2)}
        base, _ = normalize_facial(_face((50.0, 50.0), offsets))
        moved = _face(
            (50.0 + tx, 50.0 + ty),
            {n: (dx * scale, dy * scale) for n, (dx, dy) in offsets.items()},
        )
        vec, _ = normalize_facial(moved)
        np.testing.assert_allclose(vec, base, atol=1e-9)

    def test_replace_facial_keeps_body(self):
        """Replacing the face leaves the other 13 joints and all flags untouched"""
        kps = _face()
        new_face = np.tile([40.0, 40.0], (5, 1))
        out = replace_facial(kps, new_face)
        body = [i for i in range(NUM_JOINTS) if i not in FACIAL_INDICES]
        assert [out.joints[i] for i in body] == [kps.joints[i] for i in body]
        np.testing.assert_array_equal(out.visibility(), kps.visibility())
        assert out.joints[JOINT_INDEX["nose"]].x == 40.0

    def test_replace_facial_clamps(self):
        """Predictions outside the frame are clamped into it"""
        out = replace_facial(_face(), np.tile([-5.0, 150.0], (5, 1)))
        nose = out.joints[JOINT_INDEX["nose"]]
        assert nose.x == 0.0
        assert nose.y == 99.0

    def test_clamped_face_still_renders(self):
        """A refined ear pushed past the right edge lands on the last pixel column"""
        kps = _face((97.0, 40.0))
        face = kps.xy()[list(FACIAL_INDICES)]
        face[4] = (175.0, 40.0)
        out = replace_facial(kps, face)
        assert out.joints[FACIAL_INDICES[4]].x == 99.0
        hm = render_heatmaps(out, HeatmapSpec())
        assert hm.values[FACIAL_INDICES[4]].max() > 0.2
