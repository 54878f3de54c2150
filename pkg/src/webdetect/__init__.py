"""Context-aware detection of price, title, and image elements on webpages.

The pipeline turns a rendered page (screenshot + DOM dump) into classified
leaf elements: parse and prune the DOM, build a nearest-neighbor graph over
the leaves in preorder, pool per-element visual features, aggregate
neighborhood context with attention, and classify each element.
"""

from .errors import (
    BoundsError,
    CheckpointError,
    ConfigError,
    CycleError,
    DivergenceError,
    DuplicateLabelError,
    EmptyDatasetError,
    EmptyNeighborhood,
    EmptyPageError,
    MissingElementError,
    MissingTruthError,
    SchemaError,
    ShapeError,
    SpecError,
    TooFewDomainsError,
    UnknownElementError,
    WebdetectError,
)
from .graph import ContextGraph, DistanceMetric, build_graph
from .ingest import (
    DomDump,
    DomNode,
    Label,
    LabelManifest,
    PruneConfig,
    Webpage,
    WebElement,
    attach_labels,
    build_webpage,
    extract_leaves,
    load_dataset,
    parse_dom_dump,
    serialize_dom_dump,
)
from .model import (
    ContextAwareDetector,
    ModelConfig,
    attention_scores,
    context_repr,
    forward_page,
    load_checkpoint,
    roi_pool,
    save_checkpoint,
)
from .train import EpochReport, TrainConfig, sample_background, train
from .evaluate import (
    FoldSplit,
    Prediction,
    cross_domain_accuracy,
    make_folds,
    predict_page,
    predict_pages,
    topk_accuracy,
)
from .synth import SynthSpec, generate
from .viz import render_attention, save_attention

__version__ = "0.1.0"

__all__ = [
    "BoundsError", "CheckpointError", "ConfigError", "CycleError", "DivergenceError",
    "DuplicateLabelError", "EmptyDatasetError", "EmptyNeighborhood", "EmptyPageError",
    "MissingElementError", "MissingTruthError", "SchemaError", "ShapeError", "SpecError",
    "TooFewDomainsError", "UnknownElementError", "WebdetectError",
    "ContextGraph", "DistanceMetric", "build_graph",
    "DomDump", "DomNode", "Label", "LabelManifest", "PruneConfig", "Webpage", "WebElement",
    "attach_labels", "build_webpage", "extract_leaves", "load_dataset",
    "parse_dom_dump", "serialize_dom_dump",
    "ContextAwareDetector", "ModelConfig", "attention_scores", "context_repr",
    "forward_page", "load_checkpoint", "roi_pool", "save_checkpoint",
    "EpochReport", "TrainConfig", "sample_background", "train",
    "FoldSplit", "Prediction", "cross_domain_accuracy", "make_folds",
    "predict_page", "predict_pages", "topk_accuracy",
    "SynthSpec", "generate",
    "render_attention", "save_attention",
    "__version__",
]
