"""Exception hierarchy shared across the pipeline."""


class ProvGraphError(Exception):
    """Base class for every error raised by this package."""

    code = "error"


class DegenerateInput(ProvGraphError):
    code = "degenerate_input"


class DimensionMismatch(ProvGraphError):
    code = "dimension_mismatch"


class DegenerateAnchors(ProvGraphError):
    code = "degenerate_anchors"


class InsufficientCorrespondences(ProvGraphError):
    code = "insufficient_correspondences"


class DegenerateGeometry(ProvGraphError):
    code = "degenerate_geometry"


class RoiTooSmall(ProvGraphError):
    code = "roi_too_small"


class DuplicateId(ProvGraphError):
    code = "duplicate_id"


class UnknownNode(ProvGraphError):
    code = "unknown_node"


class InvalidGroundTruth(ProvGraphError):
    code = "invalid_ground_truth"


class InvalidTransformSpec(ProvGraphError):
    code = "invalid_transform_spec"


class InsufficientSources(ProvGraphError):
    code = "insufficient_sources"


class ConfigError(ProvGraphError):
    code = "config_error"


class IoError(ProvGraphError):
    code = "io_error"

    def __init__(self, message: str, path=None):
        super().__init__(message)
        self.path = None if path is None else str(path)
