# src/services/quantizer.py - Common b-bit dyadic quantizer
"""Dyadic quantizer shared by every node.

A value xi of the (shifted, nonnegative) range [0, pi_max] has the binary
expansion sum_{r=-v}^{inf} w_r 2^-r with v = floor(log2 pi_max). Terminating it
after eta fractional digits keeps b = eta + v + 1 digits, and the integer with
those digits is floor(xi * 2^eta). Truncation is one-sided: the reconstructed
value never exceeds xi and falls short of it by less than 2^-eta.
"""

import math
from typing import Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from src.core.config import FLOAT_TOL
from src.core.exceptions import PackingError, RangeViolationError, raise_validation_error

ArrayLike = Union[float, np.ndarray]


def integer_bits(pi_max: float) -> int:
    """floor(log2 pi_max), 0 for the degenerate range {0}"""
    if pi_max < 0:
        raise_validation_error("pi_max must be nonnegative", "pi_max")
    if pi_max == 0:
        return 0
    _, exponent = math.frexp(pi_max)
    return exponent - 1


class DyadicQuantizer(BaseModel):
    """b = eta + v + 1 digit quantizer over [0, pi_max]"""
    model_config = ConfigDict(frozen=True)

    b: int
    v: int
    eta: int
    pi_max: float
    shift: float = 0.0

    @model_validator(mode="after")
    def _check_digits(self) -> "DyadicQuantizer":
        if self.b < 1:
            raise_validation_error(f"b must be at least 1, got {self.b}", "b")
        if self.eta < 0:
            raise_validation_error(f"b={self.b} leaves no room for v={self.v} integer bits", "b")
        if self.b != self.eta + self.v + 1:
            raise_validation_error("b must equal eta + v + 1", "b")
        return self

    @classmethod
    def for_range(cls, b: int, pi_max: float, shift: float = 0.0) -> "DyadicQuantizer":
        v = integer_bits(pi_max)
        return cls(b=b, v=v, eta=b - v - 1, pi_max=pi_max, shift=shift)

    @property
    def levels(self) -> int:
        return 1 << self.b


def quantize(q: DyadicQuantizer, xi: ArrayLike) -> ArrayLike:
    """floor(xi * 2^eta) for xi in [0, pi_max]"""
    x = np.asarray(xi, dtype=float)
    slack = FLOAT_TOL * max(1.0, q.pi_max)
    if np.any(~np.isfinite(x)) or np.any(x < -slack) or np.any(x > q.pi_max + slack):
        raise RangeViolationError(
            f"value outside quantizer range [0, {q.pi_max:.6g}]: min {np.min(x):.6g}, max {np.max(x):.6g}"
        )
    x = np.clip(x, 0.0, q.pi_max)
    m = np.floor(np.ldexp(x, q.eta)).astype(np.int64)
    return int(m) if m.ndim == 0 else m


def dequantize(q: DyadicQuantizer, m: ArrayLike) -> ArrayLike:
    """Value of the terminated expansion with integer digits m, m * 2^-eta"""
    return np.ldexp(np.asarray(m, dtype=float), -q.eta)


def dequantize_sum(
    q: DyadicQuantizer,
    S: ArrayLike,
    count: int,
    shift: Optional[float] = None,
) -> ArrayLike:
    """Reconstruct sum_i phi~_i from the integer digit sum of `count` messages"""
    shift = q.shift if shift is None else shift
    S = np.asarray(S, dtype=np.int64)
    if np.any(S < 0) or np.any(S > count * (q.levels - 1)):
        raise PackingError(
            f"digit sum outside 0..{count * (q.levels - 1)}; packing wrapped around", "WRAPAROUND"
        )
    value = np.ldexp(S.astype(float), -q.eta) - count * shift
    return float(value) if value.ndim == 0 else value


def max_quantization_error(q: DyadicQuantizer) -> float:
    """2^-eta; every admissible value is reconstructed strictly closer than this"""
    return math.ldexp(1.0, -q.eta)
