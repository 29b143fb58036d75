"""Optional runtime checks (shape chain + finiteness), off by default."""

from __future__ import annotations

import os

import numpy as np

from gaitdecode.errors import NonFiniteError

_ENABLED = os.environ.get("GAITDECODE_DEBUG", "") not in ("", "0")


def enabled() -> bool:
    return _ENABLED


def set_enabled(value: bool) -> None:
    global _ENABLED
    _ENABLED = bool(value)


def check_stage(stage: str, tensor) -> None:
    """Per-stage finiteness check with a stage-labelled diagnostic."""
    if not np.all(np.isfinite(tensor.data)):
        raise NonFiniteError(f"non-finite values after stage {stage!r}")
