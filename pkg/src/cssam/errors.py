"""Exception hierarchy shared across the toolkit."""


class CssamError(Exception):
    """Base class for all toolkit errors."""


class CorpusError(CssamError):
    """Malformed or unusable corpus data."""


class ParseError(CssamError):
    """Source code that the grammar cannot parse."""

    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{message} (line {line}, col {col})")
        self.line = line
        self.col = col


class ConfigError(CssamError):
    """Invalid configuration or unsupported option."""


class GraphError(CssamError):
    """Inconsistent graph inputs (e.g. DFG endpoints missing from the AST)."""


class CheckpointError(CssamError):
    """Unreadable, truncated, or version-mismatched checkpoint."""


class ModelError(CssamError):
    """Invalid model inputs (shape mismatch, all-pad sequences, zero vectors)."""


class TrainError(CssamError):
    """Training-time failure (non-finite gradients, empty dataset, ...)."""


class EvalError(CssamError):
    """Invalid evaluation inputs (empty record sets, impossible pool sizes)."""
