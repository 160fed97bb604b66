"""tabletalk: a desk-scale emergent-communication laboratory.

Trains a speaker/listener pair to develop a discrete symbolic language over
knowledge-graph representations of synthetic dining scenes, and measures the
language's compositionality, stability, and token-distribution properties.
"""

from .errors import (
    ConfigurationError,
    DegenerateCorpusError,
    IncompatibleDataError,
    NumericalError,
    StructuralError,
    TabletalkError,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "DegenerateCorpusError",
    "IncompatibleDataError",
    "NumericalError",
    "StructuralError",
    "TabletalkError",
    "__version__",
]
