"""Reconstruction-consistency curation for image-question-answer data.

The package covers the full data-side pipeline: build multi-task
training records from a seed dataset, score records by how well a model
reconstructs them, keep the most consistent fraction per category, and
iterate the loop against unlabeled images.  A self-contained synthetic
lab reproduces the pseudo-label self-training experiment that motivates
the loop.
"""

from .consistency import (
    ConsistencyScorer,
    Reconstruction,
    ScoredTriplet,
    component_similarities,
    consistency_score,
    filter_top,
    reconstruction_prompts,
    score_pair,
    score_records,
)
from .errors import TriloopError
from .metrics import DiversityReport, distinct_n, diversity_report, ttr, type_distribution
from .records import (
    BoundingBox,
    QaType,
    Triplet,
    parse_bbox,
    read_triplets,
    strip_template,
    write_triplets,
)
from .similarity import (
    SimilarityBackend,
    exact_match,
    greedy_match_f1,
    iou,
    lexical_backend,
    lexical_similarity,
    provider_backend,
    tokenize,
)
from .taskgen import (
    MaskRatios,
    MultiTaskTransformer,
    TaskKind,
    TaskRecord,
    assign_masks,
    build_tasks,
    invert_record,
    render_record,
)

__version__ = "0.1.0"

__all__ = [
    "BoundingBox",
    "ConsistencyScorer",
    "DiversityReport",
    "MaskRatios",
    "MultiTaskTransformer",
    "QaType",
    "Reconstruction",
    "ScoredTriplet",
    "SimilarityBackend",
    "TaskKind",
    "TaskRecord",
    "Triplet",
    "TriloopError",
    "assign_masks",
    "build_tasks",
    "component_similarities",
    "consistency_score",
    "distinct_n",
    "diversity_report",
    "exact_match",
    "filter_top",
    "greedy_match_f1",
    "invert_record",
    "iou",
    "lexical_backend",
    "lexical_similarity",
    "parse_bbox",
    "provider_backend",
    "read_triplets",
    "reconstruction_prompts",
    "render_record",
    "score_pair",
    "score_records",
    "strip_template",
    "tokenize",
    "ttr",
    "type_distribution",
    "write_triplets",
    "__version__",
]
