"""Exception types shared across the workbench."""


class BrushBenchError(Exception):
    """Base class for workbench errors."""


class DatasetError(BrushBenchError):
    """Missing files, undecodable images, or mismatched dimensions in a dataset."""


class MissingSeedsError(BrushBenchError):
    """An operation needs at least one seed pixel of each label; add more strokes."""


class ModelFitError(BrushBenchError):
    """Color-model fitting received unusable input (e.g. an empty pixel set)."""


class UnsupportedPolicyError(BrushBenchError):
    """Robot policy requires a segmenter it cannot drive (sensit/roi/hamming need GCS)."""


class QpSolverError(BrushBenchError):
    """The working-set QP failed to reach the required KKT residual."""
