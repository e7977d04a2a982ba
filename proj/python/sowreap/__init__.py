"""Python bindings for the sowreap library.

Pipeline commands take a run configuration (a dict, or None for the
defaults) and return ``(exit_code, log_text)``.
"""

import json

from . import _core
from ._core import (
    ContractViolation,
    FormatError,
    NumericalError,
    apply_permutation,
    bleu,
    kendall_tau,
    kendall_tau_sequence,
    parse_tree_yield,
    reorder,
    rouge,
    sinusoidal_embedding,
    wer,
)

__all__ = [
    "ContractViolation",
    "FormatError",
    "NumericalError",
    "apply_permutation",
    "bleu",
    "build_data",
    "default_config",
    "evaluate",
    "generate",
    "kendall_tau",
    "kendall_tau_sequence",
    "parse_tree_yield",
    "reorder",
    "rouge",
    "sinusoidal_embedding",
    "synth",
    "synthesize",
    "train",
    "wer",
]


def _text(config):
    return "" if config is None else json.dumps(config)


def default_config():
    return json.loads(_core.default_config())


def synthesize(n, seed):
    return [json.loads(row) for row in _core.synthesize(n, seed)]


def synth(config, n):
    return _core.synth(_text(config), n)


def build_data(config):
    return _core.build_data(_text(config))


def train(config, model, stop_after=-1):
    return _core.train(_text(config), model, stop_after)


def generate(config):
    return _core.generate(_text(config))


def evaluate(config):
    return _core.evaluate(_text(config))
