"""
Pose description encoding

Attribute schema, many-hot encoding/decoding, embedding interpolation and the
template renderer/parser for description sentences. The schema is data-driven:
it ships as a JSON file and carries a stable content hash as its identifier.
"""
import hashlib
import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterator, List, Literal, Optional, Protocol, Tuple

import numpy as np
from loguru import logger
from pydantic import BaseModel, Field, ValidationError, model_validator

from ..errors import TipsValidationError
from ..schemas import DescriptionRecord


DEFAULT_SCHEMA_PATH = Path(__file__).resolve().parent.parent / "data" / "default_schema.json"

DEFAULT_SUBJECT = ("The person", "their")


class SchemaViolationError(TipsValidationError):
    """Raised when a record does not conform to the attribute schema"""
    pass


class MalformedVectorError(TipsValidationError):
    """Raised when a many-hot vector has an invalid block"""
    pass


class EmbeddingMismatchError(TipsValidationError):
    """Raised when two embeddings cannot be combined"""
    pass


# ============================================================================
# SCHEMA
# ============================================================================

class AttributeGroup(BaseModel):
    """One block of the many-hot vector"""
    name: str
    kind: Literal["single", "multi"] = "single"
    options: List[str]
    subject: bool = Field(False, description="Selection names the person; no sentence of its own")
    template: Optional[str] = Field(None, description="Sentence template with {subject}, {possessive}, {Possessive}, {phrase}, {state}")
    phrases: Dict[str, str] = Field(default_factory=dict)
    pronouns: Dict[str, str] = Field(default_factory=dict, description="Possessive pronoun per option (subject groups)")
    states: Dict[str, str] = Field(default_factory=lambda: {"true": "visible", "false": "occluded"})

    @model_validator(mode="after")
    def _check(self) -> "AttributeGroup":
        if not self.options:
            raise ValueError(f"Group '{self.name}' has no options")
        if len(set(self.options)) != len(self.options):
            raise ValueError(f"Group '{self.name}' has duplicate option names")
        if self.subject and self.kind != "single":
            raise ValueError(f"Subject group '{self.name}' must be single-choice")
        if not self.subject and self.template is None:
            raise ValueError(f"Group '{self.name}' needs a sentence template")
        return self

    def phrase(self, option: str) -> str:
        return self.phrases.get(option, option.replace("_", " "))


class AttributeSchema(BaseModel):
    """Ordered attribute groups defining the many-hot layout"""
    version: str = "custom"
    groups: List[AttributeGroup]
    anatomy: Dict[str, Tuple[float, float]] = Field(default_factory=dict, description="Joint-angle ranges in degrees")

    @model_validator(mode="after")
    def _check(self) -> "AttributeSchema":
        names = [g.name for g in self.groups]
        if len(set(names)) != len(names):
            raise ValueError("Group names must be unique")
        if sum(1 for g in self.groups if g.subject) > 1:
            raise ValueError("At most one subject group is allowed")
        if self.total_dim < 2:
            raise ValueError(f"Schema total_dim must be >= 2, got {self.total_dim}")
        return self

    @property
    def total_dim(self) -> int:
        return sum(len(g.options) for g in self.groups)

    @property
    def schema_id(self) -> str:
        """Stable hash of the layout (group names, kinds and options in order)"""
        layout = [[g.name, g.kind, g.options] for g in self.groups]
        canonical = json.dumps(layout, separators=(",", ":"), ensure_ascii=True)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]

    def group(self, name: str) -> AttributeGroup:
        for g in self.groups:
            if g.name == name:
                return g
        raise SchemaViolationError(f"Schema has no group '{name}'")

    def offsets(self) -> Iterator[Tuple[AttributeGroup, int]]:
        """Yield each group with the index of its first vector slot"""
        start = 0
        for g in self.groups:
            yield g, start
            start += len(g.options)


def load_schema(path: Optional[Path] = None) -> AttributeSchema:
    """
    Load an attribute schema file (the bundled synthetic schema by default).

    Raises:
        SchemaViolationError: If the file is missing or malformed
    """
    path = Path(path) if path is not None else DEFAULT_SCHEMA_PATH
    if not path.is_file():
        raise SchemaViolationError(f"Schema file not found: {path}")
    try:
        schema = AttributeSchema.model_validate_json(path.read_text(encoding="utf-8"))
    except ValidationError as e:
        raise SchemaViolationError(f"Invalid schema file {path}: {e}") from e
    logger.debug(f"Loaded schema {schema.version} ({schema.schema_id}) from {path}, total_dim={schema.total_dim}")
    return schema


def save_schema(schema: AttributeSchema, path: Path) -> None:
    """Write a schema as key-ordered JSON"""
    Path(path).write_text(schema.model_dump_json(indent=2), encoding="utf-8")


# ============================================================================
# EMBEDDINGS
# ============================================================================

@dataclass(frozen=True)
class TextEmbedding:
    """Many-hot or dense description vector"""
    values: np.ndarray
    kind: Literal["many_hot", "dense"] = "many_hot"
    schema_id: Optional[str] = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1 or values.size == 0:
            raise EmbeddingMismatchError(f"Embedding must be a non-empty 1-D vector, got shape {values.shape}")
        if self.kind == "many_hot" and not np.all((values == 0.0) | (values == 1.0)):
            raise MalformedVectorError("Many-hot embedding values must be 0 or 1")
        object.__setattr__(self, "values", values)

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])


class DenseEmbedder(Protocol):
    """Plug-in sentence embedder returning a fixed-length vector"""
    dim: int

    def __call__(self, text: str) -> np.ndarray:
        ...


def embed_text(text: str, embedder: DenseEmbedder) -> TextEmbedding:
    """
    Embed a description sentence with a dense plug-in embedder.

    Raises:
        EmbeddingMismatchError: If the embedder returns a vector of the wrong length
    """
    vector = np.asarray(embedder(text), dtype=np.float64).reshape(-1)
    if vector.shape[0] != embedder.dim:
        raise EmbeddingMismatchError(f"Embedder declared dim {embedder.dim} but returned {vector.shape[0]}")
    return TextEmbedding(values=vector, kind="dense")


def encode_manyhot(rec: DescriptionRecord, schema: AttributeSchema) -> TextEmbedding:
    """
    Encode a description record as concatenated per-group indicator blocks.

    Args:
        rec: Record with one selection per single-choice group and flags per multi group
        schema: Attribute schema defining the layout

    Returns:
        Many-hot TextEmbedding of length schema.total_dim

    Raises:
        SchemaViolationError: On an unknown option, missing selection or unknown group
    """
    known = {g.name for g in schema.groups}
    unknown = (set(rec.selections) | set(rec.flags)) - known
    if unknown:
        raise SchemaViolationError(f"Record references unknown groups: {', '.join(sorted(unknown))}")

    vector = np.zeros(schema.total_dim, dtype=np.float64)
    for group, start in schema.offsets():
        if group.kind == "single":
            if group.name not in rec.selections:
                raise SchemaViolationError(f"Group '{group.name}' has no selection")
            option = rec.selections[group.name]
            if option not in group.options:
                raise SchemaViolationError(
                    f"Group '{group.name}' has no option '{option}'. "
                    f"Allowed options: {', '.join(group.options)}"
                )
            vector[start + group.options.index(option)] = 1.0
        else:
            flags = rec.flags.get(group.name, {})
            extra = set(flags) - set(group.options)
            if extra:
                raise SchemaViolationError(f"Group '{group.name}' has no options {', '.join(sorted(extra))}")
            missing = [o for o in group.options if o not in flags]
            if missing:
                raise SchemaViolationError(f"Group '{group.name}' is missing flags for {', '.join(missing)}")
            for i, option in enumerate(group.options):
                vector[start + i] = 1.0 if flags[option] else 0.0

    return TextEmbedding(values=vector, kind="many_hot", schema_id=schema.schema_id)


def decode_manyhot(v: TextEmbedding, schema: AttributeSchema) -> DescriptionRecord:
    """
    Invert encode_manyhot.

    Raises:
        EmbeddingMismatchError: If the vector is dense, from another schema or the wrong length
        MalformedVectorError: If a single-choice block does not hold exactly one 1
    """
    if v.kind != "many_hot":
        raise EmbeddingMismatchError("Only many-hot embeddings can be decoded")
    if v.schema_id is not None and v.schema_id != schema.schema_id:
        raise EmbeddingMismatchError(f"Embedding schema {v.schema_id} does not match schema {schema.schema_id}")
    if v.dim != schema.total_dim:
        raise EmbeddingMismatchError(f"Embedding length {v.dim} != schema total_dim {schema.total_dim}")

    selections: Dict[str, str] = {}
    flags: Dict[str, Dict[str, bool]] = {}
    for group, start in schema.offsets():
        block = v.values[start:start + len(group.options)]
        if group.kind == "single":
            hot = np.flatnonzero(block == 1.0)
            if len(hot) != 1:
                raise MalformedVectorError(
                    f"Group '{group.name}' block has {len(hot)} selections; exactly one is required"
                )
            selections[group.name] = group.options[int(hot[0])]
        else:
            flags[group.name] = {o: bool(block[i] == 1.0) for i, o in enumerate(group.options)}

    return DescriptionRecord(selections=selections, flags=flags)


def lerp_embeddings(v1: TextEmbedding, v2: TextEmbedding, t: float) -> TextEmbedding:
    """
    Linear blend (1 - t) * v1 + t * v2; the result is always dense.

    Raises:
        EmbeddingMismatchError: On kind or dimension mismatch
    """
    if v1.kind != v2.kind:
        raise EmbeddingMismatchError(f"Cannot interpolate {v1.kind} with {v2.kind}")
    if v1.dim != v2.dim:
        raise EmbeddingMismatchError(f"Cannot interpolate embeddings of length {v1.dim} and {v2.dim}")
    values = (1.0 - t) * v1.values + t * v2.values
    schema_id = v1.schema_id if v1.schema_id == v2.schema_id else None
    return TextEmbedding(values=values, kind="dense", schema_id=schema_id)


def interpolate_embeddings(v1: TextEmbedding, v2: TextEmbedding) -> TextEmbedding:
    """Midpoint (v1 + v2) / 2 of two embeddings"""
    return lerp_embeddings(v1, v2, 0.5)


# ============================================================================
# SENTENCES
# ============================================================================

def _subject(rec: DescriptionRecord, schema: AttributeSchema) -> Tuple[str, str]:
    for group in schema.groups:
        if group.subject:
            option = rec.selections[group.name]
            return group.phrase(option), group.pronouns.get(option, DEFAULT_SUBJECT[1])
    return DEFAULT_SUBJECT


def _sentences(schema: AttributeSchema, subject: Tuple[str, str]) -> List[List[Tuple[str, object]]]:
    """Per group, the candidate sentences for every possible value (used by both render and parse)"""
    noun, possessive = subject
    fields = {"subject": noun, "possessive": possessive, "Possessive": possessive[:1].upper() + possessive[1:]}
    per_group: List[List[Tuple[str, object]]] = []
    for group in schema.groups:
        if group.subject:
            continue
        if group.kind == "single":
            per_group.append([
                (group.template.format(phrase=group.phrase(o), state="", **fields), (group.name, o))
                for o in group.options
            ])
        else:
            for o in group.options:
                per_group.append([
                    (group.template.format(phrase=group.phrase(o), state=group.states[str(flag).lower()], **fields), (group.name, o, flag))
                    for flag in (True, False)
                ])
    return per_group


def render_description_text(rec: DescriptionRecord, schema: AttributeSchema) -> str:
    """
    Render a record as deterministic English sentences from the group templates.

    Args:
        rec: Valid record
        schema: Schema with templates

    Returns:
        Sentences joined by single spaces
    """
    encode_manyhot(rec, schema)
    subject = _subject(rec, schema)
    parts: List[str] = []
    for candidates in _sentences(schema, subject):
        for sentence, key in candidates:
            if len(key) == 2 and rec.selections.get(key[0]) == key[1]:
                parts.append(sentence)
                break
            if len(key) == 3 and rec.flags[key[0]][key[1]] == key[2]:
                parts.append(sentence)
                break
    return " ".join(parts)


def parse_description_text(text: str, schema: AttributeSchema) -> DescriptionRecord:
    """
    Recover a record from text produced by render_description_text.

    This is the exact template inverse, not free-form parsing.

    Raises:
        SchemaViolationError: If the text was not produced by this schema's templates
    """
    sentences = [s for s in re.split(r"(?<=\.)\s+", text.strip()) if s]
    subject_group = next((g for g in schema.groups if g.subject), None)
    subject_options = subject_group.options if subject_group else [None]

    for option in subject_options:
        seed = DescriptionRecord(selections={subject_group.name: option} if subject_group else {})
        subject = _subject(seed, schema) if subject_group else DEFAULT_SUBJECT
        candidates = _sentences(schema, subject)
        if len(candidates) != len(sentences):
            continue
        selections = dict(seed.selections)
        flags: Dict[str, Dict[str, bool]] = {}
        matched = True
        for sentence, options in zip(sentences, candidates):
            hit = next((key for rendered, key in options if rendered == sentence), None)
            if hit is None:
                matched = False
                break
            if len(hit) == 2:
                selections[hit[0]] = hit[1]
            else:
                flags.setdefault(hit[0], {})[hit[1]] = hit[2]
        if matched:
            return DescriptionRecord(selections=selections, flags=flags)

    raise SchemaViolationError(f"Text does not match schema {schema.schema_id} templates: {text[:80]!r}")
