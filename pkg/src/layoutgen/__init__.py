"""Instruction-driven 2D layout generation toolkit."""

__version__ = "0.1.0"

from .codec import DEFAULT_CODEC, IntervalConfig, decode, encode, encode_element
from .core import (
    AttrKind,
    AttributeStatus,
    BoundingBox,
    CategoryRegistry,
    Domain,
    Element,
    Layout,
    StatusMask,
    default_registry,
    infer_column_count,
    normalize_layout,
    quantize,
)
from .prompts import (
    ConditionText,
    PrefixPrompt,
    RelationConstraint,
    RelationKind,
    ResponseText,
    build_condition,
    build_response,
    join_training_pair,
    parse_response,
    render_nl_prompt,
)
from .tasks import (
    ConditionedSample,
    MixtureSchedule,
    NoiseModel,
    Task,
    assign_statuses,
    build_sample,
    extract_relations,
    perturb,
    sample_batch,
)
from .metrics import (
    GeometricEmbedding,
    MetricReport,
    alignment,
    evaluate_sets,
    fid,
    max_iou,
    overlap,
    ranking_score,
)
from .client import (
    BackendEndpoint,
    DecodingParams,
    HttpBackend,
    MockBackend,
    generate,
    generate_many,
    select_decoding,
    validate_and_repair,
)
from .ingest import (
    PRESETS,
    DatasetSpec,
    ingest,
    read_store,
    registry_from_layouts,
    split,
    unify_labels,
    write_store,
)
from .render import render_svg
