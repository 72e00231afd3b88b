# src/services/source_coding.py - Base-q packing encoder/decoder and prime selection
"""Source encoder E1 and source decoder D1.

Each of the T readings of a block is a b0-bit integer. ``tau`` readings are
packed into one symbol of Z_p as base-q digits with ``q = N(2^b0 - 1) + 1``,
so that the digit-wise integer sum of up to N messages never carries from one
digit into the next and never wraps around modulo p (``q^tau <= p``).

D1 works on integer digit sums rather than on per-bit sums: the digit sum of
reading slot t equals ``sum_i Q(phi_i)`` exactly, which is all the inverse
quantizer needs to reconstruct ``sum_i phi~_i``. Per-bit sums and integer digit
sums are not in bijection, but both determine the same quantized sum.
"""

import logging
import math
from typing import NamedTuple, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from src.core.exceptions import PackingError, ValidationError, raise_validation_error

logger = logging.getLogger(__name__)

# deterministic for every n < 3.3e24
_MR_WITNESSES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)

# lattice coordinates run in float64; integers below this stay exact
MAX_ALPHABET = 1 << 48


def is_prime(n: int) -> bool:
    """Deterministic Miller-Rabin with a fixed witness set"""
    n = int(n)
    if n < 2:
        return False
    for w in _MR_WITNESSES:
        if n % w == 0:
            return n == w
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for a in _MR_WITNESSES:
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(s - 1):
            x = pow(x, 2, n)
            if x == n - 1:
                break
        else:
            return False
    return True


def next_prime(n: int) -> int:
    """Smallest prime >= n"""
    candidate = max(2, int(n))
    while not is_prime(candidate):
        candidate += 1
    return candidate


def select_prime(q: int, n: int, k: int, rate_target: Optional[float] = None) -> int:
    """Smallest prime >= max(q, 2^(n R / k))"""
    floor_value = int(q)
    if rate_target is not None:
        if rate_target <= 0:
            raise_validation_error("target rate must be positive", "rate_target")
        floor_value = max(floor_value, math.ceil(2 ** (n * rate_target / k)))
    p = next_prime(floor_value)
    logger.debug(f"Selected prime p={p} for q={q}, n={n}, k={k}, R={rate_target}")
    return p


class PackingParams(BaseModel):
    """Base-q / modulo-p packing parameters"""
    model_config = ConfigDict(frozen=True)

    b0: int
    N: int
    q: int
    p: int
    tau: int
    k: int
    T: int

    @property
    def max_reading(self) -> int:
        return (1 << self.b0) - 1


class PackingGap(NamedTuple):
    tau_exact: int
    tau_conservative: int
    readings_gained_per_symbol: int


def derive_packing(b0: int, N: int, p: int, k: int) -> PackingParams:
    """Largest tau with q^tau <= p, T = k * tau"""
    if b0 < 1 or N < 1 or k < 1:
        raise_validation_error("b0, N and k must be positive", "packing")
    if not is_prime(p):
        raise ValidationError(f"alphabet size must be prime, got p={p}", "p")
    if p >= MAX_ALPHABET:
        raise PackingError(f"p={p} exceeds the exact integer range of the packer", "PACKING_OVERFLOW")
    q = N * ((1 << b0) - 1) + 1
    if p < q:
        raise PackingError(f"p={p} is smaller than the digit base q={q}; raise p", "ALPHABET_TOO_SMALL")
    tau = 1
    while q ** (tau + 1) <= p:
        tau += 1
    params = PackingParams(b0=b0, N=N, q=q, p=p, tau=tau, k=k, T=k * tau)
    logger.debug(f"Packing b0={b0} N={N}: q={q} p={p} tau={tau} T={params.T}")
    return params


def conservative_tau(params: PackingParams) -> int:
    """floor(log2 p / (b0 + log2 N)), the bound the reported rates use"""
    return int(math.floor(math.log2(params.p) / (params.b0 + math.log2(params.N))))


def packing_gap(params: PackingParams) -> PackingGap:
    """How many readings per symbol the exact bound gains over the conservative one"""
    tau_c = conservative_tau(params)
    gap = PackingGap(params.tau, tau_c, params.tau - tau_c)
    if gap.readings_gained_per_symbol > 0:
        logger.info(f"Exact packing fits {gap.tau_exact} readings per symbol, conservative bound {tau_c}")
    return gap


def pack(params: PackingParams, readings) -> np.ndarray:
    """Pack T readings (or a batch of shape (..., T)) into k symbols of Z_p"""
    w = np.asarray(readings, dtype=np.int64)
    if w.ndim == 0 or w.shape[-1] != params.T:
        raise ValidationError(f"expected {params.T} readings per block, got {w.shape}", "readings")
    if np.any(w < 0) or np.any(w > params.max_reading):
        raise_validation_error(f"readings must lie in 0..{params.max_reading}", "readings")
    digits = w.reshape(w.shape[:-1] + (params.k, params.tau))
    weights = params.q ** np.arange(params.tau, dtype=np.int64)
    return digits @ weights


def unpack_digits(params: PackingParams, g) -> Tuple[np.ndarray, np.ndarray]:
    """Digit sums of a batch of decoded sums plus a per-block validity mask.

    A block is invalid when the top digit of some symbol reaches q, which no
    sum of at most N packed messages can produce.
    """
    g = np.asarray(g, dtype=np.int64)
    if g.ndim == 0 or g.shape[-1] != params.k:
        raise ValidationError(f"expected {params.k} symbols, got {g.shape}", "message")
    if np.any(g < 0) or np.any(g >= params.p):
        raise_validation_error(f"symbols must lie in 0..{params.p - 1}", "message")
    weights = params.q ** np.arange(params.tau, dtype=np.int64)
    digits = g[..., None] // weights
    digits[..., :-1] %= params.q
    valid = np.all(digits[..., -1] < params.q, axis=-1)
    return digits.reshape(g.shape[:-1] + (params.T,)), valid


def unpack_sum(params: PackingParams, g) -> np.ndarray:
    """Base-q digit extraction of a modulo-p sum of at most N packed messages.

    Returns T digit sums per block. A top digit >= q means the input is not a
    valid sum (a decoding error upstream) and raises PackingError.
    """
    digits, valid = unpack_digits(params, g)
    if not np.all(valid):
        raise PackingError("extracted digit exceeds the base; the sum is corrupted", "DIGIT_OVERFLOW")
    return digits
