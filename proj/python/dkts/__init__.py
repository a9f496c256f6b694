"""Knowledge tracing with question-graph embeddings and a Laplacian relation loss."""

from . import _dkts
from ._dkts import (
    DimensionError,
    DktsError,
    IndexError,
    IoError,
    Model,
    NumericError,
    ParseError,
    QuestionGraph,
    StateError,
    UsageError,
    ValidationError,
    auc,
    config_keys,
    default_config,
)

__version__ = "0.1.0"


def _kv(config):
    """Stringify values; lists become comma-separated (alpha_grid)."""
    out = {}
    for key, value in (config or {}).items():
        if isinstance(value, (list, tuple)):
            value = ",".join(repr(float(v)) for v in value)
        elif isinstance(value, bool):
            value = "1" if value else "0"
        out[key] = str(value)
    return out


def simulate(**config):
    return _dkts.simulate(_kv(config))


def embed(graph, method="node2vec", **config):
    return _dkts.embed(graph, method, _kv(config))


def train(train, validation, graph, method="node2vec", use_graph=True, **config):
    return _dkts.train(train, validation, graph, method, use_graph, _kv(config))


def run_matrix(**config):
    return _dkts.run_matrix(_kv(config))


__all__ = [
    "DimensionError", "DktsError", "IndexError", "IoError", "Model", "NumericError", "ParseError",
    "QuestionGraph", "StateError", "UsageError", "ValidationError", "auc", "config_keys",
    "default_config", "embed", "run_matrix", "simulate", "train",
]
