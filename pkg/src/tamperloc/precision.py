"""Engine-wide numeric precision mode.

The tensor engine runs in exactly one of two float widths at a time:
64-bit for property tests and gradient checking, 32-bit for training.
The mode applies to tensors created after the switch; it is not a
per-tensor attribute. The EITL_PRECISION environment variable
("f32" or "f64") overrides whatever the caller configures.
"""

from __future__ import annotations

import os

import numpy as np

_MODES = {"f32": np.float32, "f64": np.float64}

_mode = "f64"


class NumericalError(RuntimeError):
    """Non-finite values where finite ones are required (CLI exit code 2)."""


def set_precision(mode: str) -> None:
    global _mode
    if mode not in _MODES:
        raise ValueError(f"precision must be 'f32' or 'f64', got {mode!r}")
    _mode = mode


def get_precision() -> str:
    return _mode


def dtype() -> np.dtype:
    """Dtype for newly created tensors."""
    return np.dtype(_MODES[_mode])


def env_override() -> str | None:
    """Value of EITL_PRECISION if set (validated), else None."""
    val = os.environ.get("EITL_PRECISION")
    if val is None:
        return None
    if val not in _MODES:
        raise ValueError(f"EITL_PRECISION must be 'f32' or 'f64', got {val!r}")
    return val


def apply_env_override() -> None:
    val = env_override()
    if val is not None:
        set_precision(val)


apply_env_override()
