"""Exception taxonomy shared across the package."""


class WebdetectError(Exception):
    """Base class for all package errors."""


class SchemaError(WebdetectError):
    """DOM dump violates the serialization schema (malformed field, bad type, duplicate id)."""


class CycleError(WebdetectError):
    """DOM node links do not form a tree."""


class BoundsError(WebdetectError):
    """Bounding box has negative width or height."""


class EmptyPageError(WebdetectError):
    """No leaf elements survive pruning."""


class DuplicateLabelError(WebdetectError):
    """Label manifest assigns two classes to one element, or one class twice."""


class MissingElementError(WebdetectError):
    """Label manifest references an element id not present on the page."""


class ShapeError(WebdetectError):
    """Tensor dimensions do not match the model configuration."""


class EmptyNeighborhood(WebdetectError):
    """Attention requested over an empty neighbor set."""


class EmptyDatasetError(WebdetectError):
    """Training or evaluation invoked with no pages."""


class DivergenceError(WebdetectError):
    """Training loss became non-finite."""


class TooFewDomainsError(WebdetectError):
    """Fold construction needs at least as many domains as folds."""


class MissingTruthError(WebdetectError):
    """A prediction has no matching ground-truth page."""


class UnknownElementError(WebdetectError):
    """Visualization referenced an element id not on the page."""


class SpecError(WebdetectError):
    """Synthetic dataset spec is unsatisfiable or invalid."""


class CheckpointError(WebdetectError):
    """Checkpoint payload does not match the expected shape manifest."""


class ConfigError(WebdetectError):
    """Run configuration contains unknown keys or invalid values."""
