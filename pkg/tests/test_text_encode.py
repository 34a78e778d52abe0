"""
Tests for description encoding

Test Coverage:
- Schema loading and validation
- Many-hot encode/decode and their failure modes
- Interpolation and lerp
- Sentence rendering and its exact template inverse
- Dense embedder plug-in
"""
import itertools

import numpy as np
import pytest
from hypothesis import given, settings as hsettings, strategies as st

from tips_pose.schemas import DescriptionRecord
from tips_pose.services.text_encode import (
    AttributeSchema,
    EmbeddingMismatchError,
    MalformedVectorError,
    SchemaViolationError,
    TextEmbedding,
    decode_manyhot,
    embed_text,
    encode_manyhot,
    interpolate_embeddings,
    lerp_embeddings,
    load_schema,
    parse_description_text,
    render_description_text,
    save_schema,
)


def _all_records(schema: AttributeSchema):
    """Every record of a schema without multi-choice groups"""
    groups = [g for g in schema.groups]
    for combo in itertools.product(*[g.options for g in groups]):
        yield DescriptionRecord(selections={g.name: o for g, o in zip(groups, combo)})


@pytest.fixture(scope="module")
def four_group_schema() -> AttributeSchema:
    return AttributeSchema.model_validate({
        "groups": [
            {"name": "gender", "options": ["man", "woman"], "subject": True,
             "phrases": {"man": "The man", "woman": "The woman"}, "pronouns": {"man": "his", "woman": "her"}},
            {"name": "head", "options": ["straight", "left", "right"],
             "template": "{subject} is keeping {possessive} head {phrase}."},
            {"name": "body", "options": ["front", "left", "right"],
             "template": "{subject} is facing towards {phrase}."},
            {"name": "right_arm", "options": ["down", "raised", "folded"],
             "template": "{Possessive} right arm is {phrase}."},
        ],
    })


class TestSchema:
    """Schema file and validation"""

    def test_bundled_schema_layout(self, schema):
        """Gender, 18 visibility flags, head, body and four limbs"""
        assert schema.total_dim == 2 + 18 + 3 + 3 + 4 * 3
        assert [g.name for g in schema.groups][:3] == ["gender", "visibility", "head"]
        assert len(schema.schema_id) == 16

    def test_schema_id_is_stable(self, schema, tmp_path):
        """Saving and reloading keeps the identifier"""
        path = tmp_path / "schema.json"
        save_schema(schema, path)
        assert load_schema(path).schema_id == schema.schema_id

    def test_schema_id_tracks_layout(self, gender_head_schema):
        """Reordering options changes the identifier"""
        data = gender_head_schema.model_dump()
        data["groups"][1]["options"] = ["left", "straight", "right"]
        assert AttributeSchema.model_validate(data).schema_id != gender_head_schema.schema_id

    def test_missing_file(self, tmp_path):
        with pytest.raises(SchemaViolationError) as exc_info:
            load_schema(tmp_path / "nope.json")
        assert "not found" in str(exc_info.value)

    def test_duplicate_options_rejected(self):
        with pytest.raises(ValueError):
            AttributeSchema.model_validate({
                "groups": [{"name": "g", "options": ["a", "a"], "template": "{phrase}."}],
            })


class TestManyHot:
    """Encoding and decoding"""

    def test_encode_block_layout(self, gender_head_schema):
        """(woman, right) encodes to [0, 1, 0, 0, 1]"""
        rec = DescriptionRecord(selections={"gender": "woman", "head": "right"})
        v = encode_manyhot(rec, gender_head_schema)
        assert v.values.tolist() == [0.0, 1.0, 0.0, 0.0, 1.0]
        assert v.kind == "many_hot"
        assert v.schema_id == gender_head_schema.schema_id

    def test_decode_block_layout(self, gender_head_schema):
        v = TextEmbedding(values=np.array([0, 1, 0, 0, 1.0]), schema_id=gender_head_schema.schema_id)
        assert decode_manyhot(v, gender_head_schema).selections == {"gender": "woman", "head": "right"}

    def test_unknown_option(self, gender_head_schema):
        """An option absent from the schema names its group"""
        rec = DescriptionRecord(selections={"gender": "woman", "head": "sideways"})
        with pytest.raises(SchemaViolationError) as exc_info:
            encode_manyhot(rec, gender_head_schema)
        assert "head" in str(exc_info.value)

    def test_missing_selection(self, gender_head_schema):
        with pytest.raises(SchemaViolationError) as exc_info:
            encode_manyhot(DescriptionRecord(selections={"gender": "man"}), gender_head_schema)
        assert "head" in str(exc_info.value)

    def test_two_selections_in_block(self, gender_head_schema):
        """[1, 1, 0, 0, 1] has two genders"""
        v = TextEmbedding(values=np.array([1, 1, 0, 0, 1.0]))
        with pytest.raises(MalformedVectorError) as exc_info:
            decode_manyhot(v, gender_head_schema)
        assert "gender" in str(exc_info.value)

    def test_decode_rejects_other_schema(self, gender_head_schema, schema):
        v = TextEmbedding(values=np.array([0, 1, 0, 0, 1.0]), schema_id=schema.schema_id)
        with pytest.raises(EmbeddingMismatchError):
            decode_manyhot(v, gender_head_schema)

    def test_non_binary_many_hot_rejected(self):
        with pytest.raises(MalformedVectorError):
            TextEmbedding(values=np.array([0.5, 0.5]))

    def test_exhaustive_round_trip(self, four_group_schema):
        """decode(encode(rec)) == rec for all 54 records"""
        records = list(_all_records(four_group_schema))
        assert len(records) == 2 * 3 * 3 * 3
        for rec in records:
            v = encode_manyhot(rec, four_group_schema)
            assert v.dim == four_group_schema.total_dim
            assert decode_manyhot(v, four_group_schema) == rec

    def test_multi_group_round_trip(self, schema):
        """Visibility flags survive encode/decode"""
        flags = {o: i % 3 != 0 for i, o in enumerate(schema.group("visibility").options)}
        rec = DescriptionRecord(
            selections={"gender": "man", "head": "straight", "body": "left", "right_arm": "raised",
                        "left_arm": "down", "right_leg": "folded", "left_leg": "spread"},
            flags={"visibility": flags},
        )
        v = encode_manyhot(rec, schema)
        assert decode_manyhot(v, schema) == rec
        assert v.values[2:20].tolist() == [1.0 if flags[o] else 0.0 for o in schema.group("visibility").options]


class TestInterpolation:
    """Midpoint and lerp"""

    def test_midpoint(self):
        v = interpolate_embeddings(TextEmbedding(values=np.array([1.0, 0.0])), TextEmbedding(values=np.array([0.0, 1.0])))
        assert v.values.tolist() == [0.5, 0.5]
        assert v.kind == "dense"

    def test_idempotent(self):
        e = TextEmbedding(values=np.array([1.0, 0.0, 1.0]))
        np.testing.assert_array_equal(interpolate_embeddings(e, e).values, e.values)

    @hsettings(max_examples=50, deadline=None)
    @given(st.lists(st.booleans(), min_size=4, max_size=4), st.lists(st.booleans(), min_size=4, max_size=4))
    def test_commutative_and_bounded(self, a, b):
        """Order does not matter and many-hot midpoints stay in [0, 1]"""
        va = TextEmbedding(values=np.array(a, dtype=float))
        vb = TextEmbedding(values=np.array(b, dtype=float))
        ab = interpolate_embeddings(va, vb).values
        np.testing.assert_array_equal(ab, interpolate_embeddings(vb, va).values)
        assert ab.min() >= 0.0 and ab.max() <= 1.0
        np.testing.assert_allclose(ab, (va.values + vb.values) / 2.0, atol=1e-12)

    def test_dimension_mismatch(self):
        with pytest.raises(EmbeddingMismatchError):
            interpolate_embeddings(TextEmbedding(values=np.array([1.0, 0.0])), TextEmbedding(values=np.array([1.0, 0.0, 0.0])))

    def test_lerp_endpoints(self):
        v1 = TextEmbedding(values=np.array([1.0, 0.0]), schema_id="s")
        v2 = TextEmbedding(values=np.array([0.0, 1.0]), schema_id="s")
        np.testing.assert_array_equal(lerp_embeddings(v1, v2, 0.0).values, v1.values)
        np.testing.assert_array_equal(lerp_embeddings(v1, v2, 1.0).values, v2.values)
        assert lerp_embeddings(v1, v2, 0.25).schema_id == "s"


class TestSentences:
    """Template rendering and its inverse"""

    def test_template_output(self, gender_head_schema):
        rec = DescriptionRecord(selections={"gender": "woman", "head": "right"})
        assert render_description_text(rec, gender_head_schema) == "The woman is keeping her head facing right."

    def test_deterministic(self, gender_head_schema):
        rec = DescriptionRecord(selections={"gender": "man", "head": "left"})
        assert render_description_text(rec, gender_head_schema) == render_description_text(rec, gender_head_schema)

    def test_distinct_records_distinct_text(self, four_group_schema):
        texts = {render_description_text(rec, four_group_schema) for rec in _all_records(four_group_schema)}
        assert len(texts) == 54

    def test_parse_inverts_render(self, four_group_schema):
        for rec in _all_records(four_group_schema):
            assert parse_description_text(render_description_text(rec, four_group_schema), four_group_schema) == rec

    def test_parse_bundled_schema(self, schema):
        flags = {o: o not in ("left_eye", "left_ear") for o in schema.group("visibility").options}
        rec = DescriptionRecord(
            selections={"gender": "woman", "head": "partially_left", "body": "front", "right_arm": "folded",
                        "left_arm": "raised", "right_leg": "straight", "left_leg": "straight"},
            flags={"visibility": flags},
        )
        text = render_description_text(rec, schema)
        assert "Her left eye is occluded." in text
        assert parse_description_text(text, schema) == rec

    def test_parse_rejects_free_text(self, gender_head_schema):
        with pytest.raises(SchemaViolationError):
            parse_description_text("Someone waves hello.", gender_head_schema)


class TestDenseEmbedder:
    """Plug-in dense embeddings"""

    class _Hash:
        dim = 4

        def __call__(self, text: str) -> np.ndarray:
            return np.array([len(text), text.count(" "), 0.5, -1.0])

    class _Wrong:
        dim = 3

        def __call__(self, text: str) -> np.ndarray:
            return np.zeros(4)

    def test_dense_embedding(self):
        v = embed_text("a b c", self._Hash())
        assert v.kind == "dense"
        assert v.values.tolist() == [5.0, 2.0, 0.5, -1.0]

    def test_wrong_length(self):
        with pytest.raises(EmbeddingMismatchError):
            embed_text("x", self._Wrong())
