"""Python access to the manetir core: key agreement, the eSOM detector and scenario runs."""

from ._core import (
    FEATURE_NAMES,
    ManetirError,
    Model,
    attack_suite,
    decode_message,
    encode_message,
    evaluate,
    layered_session,
    load_model,
    make_two_class,
    simulate,
    train,
)

__all__ = [
    "FEATURE_NAMES",
    "ManetirError",
    "Model",
    "attack_suite",
    "decode_message",
    "encode_message",
    "evaluate",
    "layered_session",
    "load_model",
    "make_two_class",
    "simulate",
    "train",
]
