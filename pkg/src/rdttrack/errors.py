"""Exception hierarchy. Every error carries a short machine-readable ``code``."""


class RDTError(Exception):
    code = "GENERIC"


class InvalidBoxError(RDTError, ValueError):
    code = "BOX"


class LoadError(RDTError):
    code = "LOAD"


class ModalityAlignmentError(LoadError):
    """Modalities of a sequence on disk do not line up (missing folder, frame counts)."""

    code = "ALIGN"


class ParseError(RDTError, ValueError):
    code = "PARSE"

    def __init__(self, message, line_number=None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class ShapeError(RDTError, ValueError):
    code = "SHAPE"


class ConfigError(RDTError, ValueError):
    code = "CONFIG"


class EvaluationError(RDTError, ValueError):
    code = "EVAL"


class RankDeficiencyError(RDTError, ValueError):
    code = "RANK"


class SampleRejected(RDTError):
    """Training sample whose ground-truth centre falls outside the search crop."""

    code = "SAMPLE"


class OutputExistsError(RDTError):
    code = "EXISTS"
