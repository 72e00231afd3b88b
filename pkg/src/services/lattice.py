# src/services/lattice.py - Construction-A nested lattice codes
"""Nested lattice pairs built with Construction A.

The fine (coding) lattice is ``gamma * (C + p Z^n)`` where ``C`` is the row
space of a k x n generator over Z_p; the coarse (shaping) lattice is the scaled
cubic lattice ``gamma * p * Z^n``. With a cubic shaping lattice the modulo
reduction, the second moment and maximum-likelihood decoding are all exact.

Rounding ties (coordinates exactly half way between two multiples) go to the
even multiple, which is numpy's ``rint`` behaviour; the modulo remainder is then
folded into the half-open cell ``[-gamma p/2, gamma p/2)``. ML decoding
enumerates the p^k cosets of the shaping lattice and closes the inner
minimisation over ``p Z^n`` by coordinate rounding; ties between cosets go to
the lowest message index (lexicographic order of the message digits, first
digit most significant). When ``k == n`` the fine lattice is ``gamma Z^n`` and
decoding is a single rounding step.

All vector operations accept a single vector of length n or a batch of shape
(B, n).
"""

import logging
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Optional, Tuple

import numpy as np

from src.core.config import ENUMERATION_LIMIT
from src.core.exceptions import (
    EnumerationLimitError,
    ErrorMessages,
    ValidationError,
    raise_validation_error,
)
from src.core.streams import GENERATOR, SAMPLES, NOISE, derive_stream, split_batches
from src.services.source_coding import MAX_ALPHABET, is_prime

logger = logging.getLogger(__name__)

# float elements per decoding chunk
_CHUNK_ELEMENTS = 1 << 22


def rank_mod_p(G: np.ndarray, p: int) -> int:
    """Rank of an integer matrix over the field Z_p"""
    rows = [[int(x) % p for x in row] for row in np.atleast_2d(G)]
    rank = 0
    ncols = len(rows[0]) if rows else 0
    for col in range(ncols):
        pivot = next((r for r in range(rank, len(rows)) if rows[r][col] != 0), None)
        if pivot is None:
            continue
        rows[rank], rows[pivot] = rows[pivot], rows[rank]
        inv = pow(rows[rank][col], p - 2, p)
        rows[rank] = [(x * inv) % p for x in rows[rank]]
        for r in range(len(rows)):
            if r != rank and rows[r][col]:
                factor = rows[r][col]
                rows[r] = [(a - factor * b) % p for a, b in zip(rows[r], rows[rank])]
        rank += 1
        if rank == len(rows):
            break
    return rank


def inverse_mod_p(G: np.ndarray, p: int) -> np.ndarray:
    """Inverse of a square full-rank matrix over Z_p (Gauss-Jordan)"""
    size = G.shape[0]
    aug = [[int(x) % p for x in row] + [int(i == r) for i in range(size)] for r, row in enumerate(G)]
    for col in range(size):
        pivot = next((r for r in range(col, size) if aug[r][col] != 0), None)
        if pivot is None:
            raise ValidationError("generator matrix is singular mod p", "G")
        aug[col], aug[pivot] = aug[pivot], aug[col]
        inv = pow(aug[col][col], p - 2, p)
        aug[col] = [(x * inv) % p for x in aug[col]]
        for r in range(size):
            if r != col and aug[r][col]:
                factor = aug[r][col]
                aug[r] = [(a - factor * b) % p for a, b in zip(aug[r], aug[col])]
    return np.array([row[size:] for row in aug], dtype=np.int64)


def generator_matrix(p: int, k: int, n: int, seed: int = 0) -> np.ndarray:
    """Systematic generator [I_k | A] with A drawn uniformly over Z_p from the seed"""
    rng = derive_stream(seed, GENERATOR, p, k, n)
    A = rng.integers(0, p, size=(k, n - k), dtype=np.int64)
    G = np.concatenate([np.eye(k, dtype=np.int64), A], axis=1)
    if rank_mod_p(G, p) != k:
        raise ValidationError("generated matrix is rank deficient", "G")
    return G


@dataclass(frozen=True, eq=False)
class ConstructionALattice:
    """Fine lattice gamma*(C + pZ^n) over the coarse lattice gamma*p*Z^n"""

    p: int
    k: int
    n: int
    G: np.ndarray = field(repr=False)
    gamma: float = 1.0

    def __post_init__(self):
        if not is_prime(self.p):
            raise_validation_error(f"{ErrorMessages.NOT_PRIME}: p={self.p}", "p")
        if self.p >= MAX_ALPHABET:
            raise_validation_error(f"p={self.p} exceeds the exact float range of the lattice", "p")
        if not 1 <= self.k <= self.n:
            raise_validation_error(f"need 1 <= k <= n, got k={self.k}, n={self.n}", "k")
        if not self.gamma > 0 or not math.isfinite(self.gamma):
            raise_validation_error(f"scale must be positive, got {self.gamma}", "gamma")
        G = np.asarray(self.G, dtype=np.int64) % self.p
        if G.shape != (self.k, self.n):
            raise_validation_error(f"generator must be {self.k}x{self.n}, got {G.shape}", "G")
        if rank_mod_p(G, self.p) != self.k:
            raise_validation_error("generator must have full rank over Z_p", "G")
        G.setflags(write=False)
        object.__setattr__(self, "G", G)

    @property
    def coarse_scale(self) -> float:
        """Side length gamma*p of the cubic shaping cell"""
        return self.gamma * self.p

    @property
    def codebook_size(self) -> int:
        return self.p ** self.k

    @property
    def uncoded(self) -> bool:
        """k == n: the fine lattice is gamma*Z^n"""
        return self.k == self.n

    @cached_property
    def messages(self) -> np.ndarray:
        """All p^k messages in lexicographic order"""
        _check_enumeration(self)
        index = np.arange(self.codebook_size, dtype=np.int64)
        powers = self.p ** np.arange(self.k - 1, -1, -1, dtype=np.int64)
        return (index[:, None] // powers[None, :]) % self.p

    @cached_property
    def coset_leaders(self) -> np.ndarray:
        """w*G mod p for every message, in message order"""
        return (self.messages @ self.G) % self.p

    @cached_property
    def generator_inverse(self) -> np.ndarray:
        return inverse_mod_p(self.G, self.p)


def construction_a(
    p: int,
    k: int,
    n: int,
    G: Optional[np.ndarray] = None,
    seed: int = 0,
    gamma: float = 1.0,
) -> ConstructionALattice:
    """Build a lattice, drawing a systematic generator when none is given"""
    if G is None:
        if not 1 <= k <= n:
            raise_validation_error(f"need 1 <= k <= n, got k={k}, n={n}", "k")
        G = generator_matrix(p, k, n, seed)
    return ConstructionALattice(p=p, k=k, n=n, G=np.asarray(G), gamma=gamma)


@dataclass(frozen=True)
class NestedLatticePair:
    """A Construction-A lattice together with the per-node power constraint"""

    lattice: ConstructionALattice
    power: float

    def __post_init__(self):
        if not self.power > 0:
            raise_validation_error(ErrorMessages.NONPOSITIVE_POWER, "power")

    @classmethod
    def from_lattice(cls, lattice: ConstructionALattice) -> "NestedLatticePair":
        """Pair whose power equals the lattice's own second moment"""
        return cls(lattice=lattice, power=lattice.coarse_scale**2 / 12.0)

    @property
    def sigma2_shaping(self) -> float:
        """Exact second moment of the shaping lattice, (gamma*p)^2/12"""
        return self.lattice.coarse_scale**2 / 12.0

    @property
    def n(self) -> int:
        return self.lattice.n


def scale_to_power(lattice: ConstructionALattice, P: float) -> NestedLatticePair:
    """Rescale so that the shaping second moment equals P"""
    if not P > 0:
        raise_validation_error(f"{ErrorMessages.NONPOSITIVE_POWER}: P={P}", "power")
    gamma = math.sqrt(12.0 * P) / lattice.p
    logger.debug(f"Scaled lattice p={lattice.p} n={lattice.n} to P={P}: gamma={gamma:.6g}")
    return NestedLatticePair(lattice=replace(lattice, gamma=gamma), power=P)


def message_rate(pair: NestedLatticePair) -> float:
    """(k/n) log2 p bits per channel use"""
    lat = pair.lattice
    return lat.k / lat.n * math.log2(lat.p)


def _as_vectors(pair: NestedLatticePair, y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.ndim == 0 or y.shape[-1] != pair.n:
        raise ValidationError(
            f"{ErrorMessages.DIMENSION_MISMATCH}: expected {pair.n}, got {y.shape}", "dimension"
        )
    if not np.all(np.isfinite(y)):
        raise_validation_error("vector must be finite", "y")
    return y


def _matmul_mod(a: np.ndarray, b: np.ndarray, p: int) -> np.ndarray:
    """a @ b mod p, falling back to exact integers when int64 products could overflow"""
    if a.shape[-1] * (p - 1) ** 2 < 1 << 63:
        return (a @ b) % p
    return ((a.astype(object) @ b.astype(object)) % p).astype(np.int64)


def _check_enumeration(lattice: ConstructionALattice) -> None:
    if lattice.codebook_size > ENUMERATION_LIMIT:
        raise EnumerationLimitError(lattice.codebook_size, ENUMERATION_LIMIT)


def nearest_point_coarse(pair: NestedLatticePair, y) -> np.ndarray:
    """Nearest point of gamma*p*Z^n, coordinate-wise rounding with ties to even"""
    y = _as_vectors(pair, y)
    scale = pair.lattice.coarse_scale
    return scale * np.rint(y / scale)


def mod_shaping(pair: NestedLatticePair, y) -> np.ndarray:
    """[y] mod Lambda_s = y - Q_s(y), folded into the half-open cell [-gamma p/2, gamma p/2)"""
    y = _as_vectors(pair, y)
    x = y - nearest_point_coarse(pair, y)
    half = pair.lattice.coarse_scale / 2
    # a tie rounded down to the even multiple lands on +half
    return np.where(x >= half, x - pair.lattice.coarse_scale, x)


def encode(pair: NestedLatticePair, w) -> np.ndarray:
    """Linear lattice encoder: mod_shaping(gamma * (w G mod p))"""
    lat = pair.lattice
    w = np.asarray(w, dtype=np.int64)
    if w.ndim == 0 or w.shape[-1] != lat.k:
        raise ValidationError(f"message must have {lat.k} symbols, got {w.shape}", "message")
    if np.any(w < 0) or np.any(w >= lat.p):
        raise_validation_error(f"message symbols must lie in 0..{lat.p - 1}", "message")
    return mod_shaping(pair, lat.gamma * _matmul_mod(w, lat.G, lat.p))


def codebook(pair: NestedLatticePair) -> np.ndarray:
    """All p^k codewords in message order"""
    return encode(pair, pair.lattice.messages)


def nearest_point_fine(pair: NestedLatticePair, y) -> Tuple[np.ndarray, np.ndarray]:
    """Exact nearest point of the fine lattice.

    Returns (message, point): the message indexes the coset of the shaping
    lattice containing the point.
    """
    lat = pair.lattice
    y = _as_vectors(pair, y)
    single = y.ndim == 1
    t = np.atleast_2d(y) / lat.gamma

    if lat.uncoded:
        integer_point = np.rint(t)
        leaders = np.mod(integer_point, lat.p).astype(np.int64)
        w = _matmul_mod(leaders, lat.generator_inverse, lat.p)
        point = lat.gamma * integer_point
    else:
        _check_enumeration(lat)
        leaders_all = lat.coset_leaders.astype(float)
        batch = t.shape[0]
        best_dist = np.full(batch, np.inf)
        best_index = np.zeros(batch, dtype=np.int64)
        chunk = max(1, _CHUNK_ELEMENTS // max(1, batch * lat.n))
        for start in range(0, lat.codebook_size, chunk):
            leaders = leaders_all[start:start + chunk]
            diff = t[:, None, :] - leaders[None, :, :]
            resid = diff - lat.p * np.rint(diff / lat.p)
            dist = np.einsum("bmn,bmn->bm", resid, resid)
            local = np.argmin(dist, axis=1)
            local_dist = dist[np.arange(batch), local]
            better = local_dist < best_dist
            best_dist = np.where(better, local_dist, best_dist)
            best_index = np.where(better, start + local, best_index)
        w = lat.messages[best_index]
        leaders = lat.coset_leaders[best_index].astype(float)
        shift = np.rint((t - leaders) / lat.p)
        point = lat.gamma * (leaders + lat.p * shift)

    if single:
        return w[0], point[0]
    return w, point


def decode_ml(pair: NestedLatticePair, y) -> np.ndarray:
    """Euclidean nearest-neighbour decoder, E2^-1([Q_c(y)] mod Lambda_s)"""
    w, _ = nearest_point_fine(pair, y)
    return w


def second_moment_mc(pair: NestedLatticePair, num_samples: int, seed: int = 0) -> float:
    """Monte Carlo estimate of the per-dimension second moment of the shaping cell"""
    if num_samples < 1:
        raise_validation_error("num_samples must be at least 1", "num_samples")
    total = 0.0
    for batch, size in split_batches(num_samples, 1 << 16):
        rng = derive_stream(seed, SAMPLES, batch)
        u = rng.uniform(0.0, pair.lattice.coarse_scale, size=(size, pair.n))
        x = mod_shaping(pair, u)
        total += float(np.sum(x * x))
    return total / (num_samples * pair.n)


def empirical_goodness(pair: NestedLatticePair, sigma_z2: float, trials: int, seed: int = 0) -> float:
    """Fraction of Gaussian noise draws leaving the fine Voronoi cell around 0"""
    if sigma_z2 < 0:
        raise_validation_error("noise variance must be nonnegative", "sigma_z2")
    if trials < 1:
        raise_validation_error("trials must be at least 1", "trials")
    escapes = 0
    sigma = math.sqrt(sigma_z2)
    for batch, size in split_batches(trials, 512):
        rng = derive_stream(seed, NOISE, 0, 0, batch)
        z = sigma * rng.standard_normal((size, pair.n))
        _, point = nearest_point_fine(pair, z)
        escapes += int(np.count_nonzero(np.any(point != 0.0, axis=1)))
    return escapes / trials
