# src/services/channel.py - Clustered Gaussian multiple-access channel
"""Clustered Gaussian MAC with unit gains.

Fusion center l receives Y_l = sum_{i in C_l} x_i + Z_l with i.i.d. Gaussian
noise. Slots of a time-division schedule are perfectly isolated: a cluster only
hears its own members in its own slot.
"""

import logging
import math
from itertools import combinations
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from pydantic import ValidationError as PydanticValidationError

from src.core.exceptions import ErrorMessages, ValidationError, raise_validation_error
from src.core.streams import NOISE, derive_stream

logger = logging.getLogger(__name__)

# relative slack on n*P
POWER_SLACK = 1e-9


class ClusterTopology(BaseModel):
    """L possibly overlapping clusters over N nodes (0-based node indices)"""
    model_config = ConfigDict(frozen=True)

    N: int = Field(..., ge=1)
    clusters: Tuple[Tuple[int, ...], ...]

    @field_validator("clusters")
    @classmethod
    def _normalise(cls, clusters):
        if not clusters:
            raise ValueError("at least one cluster is required")
        normalised = []
        for members in clusters:
            if not members:
                raise ValueError("clusters must not be empty")
            if len(set(members)) != len(members):
                raise ValueError(f"duplicate node in cluster {list(members)}")
            normalised.append(tuple(sorted(int(m) for m in members)))
        return tuple(normalised)

    @model_validator(mode="after")
    def _check_coverage(self) -> "ClusterTopology":
        seen = set()
        for members in self.clusters:
            for node in members:
                if not 0 <= node < self.N:
                    raise ValueError(f"node index {node} outside 0..{self.N - 1}")
                seen.add(node)
        missing = sorted(set(range(self.N)) - seen)
        if missing:
            raise ValueError(f"nodes {missing} belong to no cluster")
        return self

    @classmethod
    def single(cls, N: int) -> "ClusterTopology":
        return cls(N=N, clusters=(tuple(range(N)),))

    @property
    def L(self) -> int:
        return len(self.clusters)

    @property
    def sizes(self) -> List[int]:
        return [len(c) for c in self.clusters]

    @property
    def max_cluster_size(self) -> int:
        return max(self.sizes)

    @property
    def common_nodes(self) -> List[int]:
        """Nodes heard by two or more fusion centers"""
        counts = np.zeros(self.N, dtype=int)
        for members in self.clusters:
            counts[list(members)] += 1
        return [int(i) for i in np.flatnonzero(counts >= 2)]


class ChannelConfig(BaseModel):
    """Per-node power, noise variance, block length and master seed.

    sigma_z2 = 0 is accepted as an explicit noiseless channel.
    """
    model_config = ConfigDict(frozen=True)

    P: float = Field(..., gt=0)
    sigma_z2: float = Field(..., ge=0)
    n: int = Field(..., ge=1)
    seed: int = 0
    # unit gains only; reserved for fading models
    gain: float = 1.0

    @field_validator("gain")
    @classmethod
    def _unit_gain(cls, gain):
        if gain != 1.0:
            raise ValueError("only unit channel gains are supported")
        return gain

    @property
    def snr(self) -> float:
        return math.inf if self.sigma_z2 == 0 else self.P / self.sigma_z2

    @property
    def snr_db(self) -> float:
        return math.inf if self.sigma_z2 == 0 else 10.0 * math.log10(self.snr)

    def at_snr_db(self, snr_db: float) -> "ChannelConfig":
        """Same power, noise variance set for the given SNR"""
        return self.model_copy(update={"sigma_z2": self.P / 10.0 ** (snr_db / 10.0)})


def noise_stream(seed: int, cluster: int, slot: int, trial: int) -> np.random.Generator:
    """Noise draws of one fusion center in one slot of one trial"""
    return derive_stream(seed, NOISE, cluster, slot, trial)


def _stack(signals, n: int) -> np.ndarray:
    x = np.asarray(signals, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[-1] != n:
        raise ValidationError(f"{ErrorMessages.DIMENSION_MISMATCH}: expected {n}, got {x.shape[-1]}", "signals")
    return x


def transmit_noiseless(signals, config: ChannelConfig) -> np.ndarray:
    """Coordinate-wise superposition of the active nodes' signals"""
    return _stack(signals, config.n).sum(axis=0)


def transmit(signals, config: ChannelConfig, stream: np.random.Generator) -> np.ndarray:
    """Superposition plus N(0, sigma_z2) noise drawn from `stream`"""
    y = transmit_noiseless(signals, config)
    return y + math.sqrt(config.sigma_z2) * stream.standard_normal(config.n)


def transmit_batch(signals, config: ChannelConfig, streams: Sequence[np.random.Generator]) -> np.ndarray:
    """(B, |C|, n) member signals -> (B, n) received blocks, trial b drawing from streams[b]"""
    x = np.asarray(signals, dtype=float)
    if x.ndim != 3 or x.shape[-1] != config.n:
        raise ValidationError(
            f"{ErrorMessages.DIMENSION_MISMATCH}: expected (B, members, {config.n}), got {x.shape}", "signals"
        )
    if len(streams) != x.shape[0]:
        raise_validation_error(f"need one noise stream per trial, got {len(streams)} for {x.shape[0]}", "streams")
    noise = np.stack([stream.standard_normal(config.n) for stream in streams])
    return x.sum(axis=1) + math.sqrt(config.sigma_z2) * noise


def within_power(x, power: float) -> np.ndarray:
    """Row-wise sum x^2 <= n * power (with relative slack)"""
    x = np.asarray(x, dtype=float)
    n = x.shape[-1]
    limit = n * power * (1.0 + POWER_SLACK)
    return np.einsum("...i,...i->...", x, x) <= limit


def check_power(x, config: ChannelConfig) -> bool:
    """Average transmit power constraint sum_m x[m]^2 <= n P"""
    x = np.asarray(x, dtype=float)
    if x.shape != (config.n,):
        raise_validation_error(f"{ErrorMessages.DIMENSION_MISMATCH}: expected ({config.n},)", "x")
    return bool(within_power(x, config.P))


class TdmaSchedule(BaseModel):
    """slots[t] is the cluster heard in slot t of L equal slots"""
    model_config = ConfigDict(frozen=True)

    slots: Tuple[int, ...]
    merge_opportunities: Tuple[Tuple[int, int], ...] = ()

    @property
    def num_slots(self) -> int:
        return len(self.slots)

    def slot_of(self, cluster: int) -> int:
        if cluster not in self.slots:
            raise_validation_error(f"cluster {cluster} has no slot", "cluster")
        return self.slots.index(cluster)


def tdma_schedule(topology: ClusterTopology) -> TdmaSchedule:
    """Naive schedule; disjoint cluster pairs are reported but never merged"""
    disjoint = tuple(
        (a, b)
        for a, b in combinations(range(topology.L), 2)
        if not set(topology.clusters[a]) & set(topology.clusters[b])
    )
    if disjoint:
        logger.info(f"{len(disjoint)} disjoint cluster pairs could share a slot: {list(disjoint)}")
    return TdmaSchedule(slots=tuple(range(topology.L)), merge_opportunities=disjoint)


def active_nodes(topology: ClusterTopology, schedule: TdmaSchedule, slot: int) -> Sequence[int]:
    """Nodes transmitting in a slot; common nodes transmit in every slot of their clusters"""
    return topology.clusters[schedule.slots[slot]]


def make_topology(N: int, clusters: Optional[Sequence[Sequence[int]]] = None) -> ClusterTopology:
    """Topology from plain member lists; one cluster of all nodes when none are given"""
    try:
        if not clusters:
            return ClusterTopology.single(N)
        return ClusterTopology(N=N, clusters=tuple(tuple(c) for c in clusters))
    except PydanticValidationError as e:
        raise ValidationError(f"invalid topology: {e.errors()[0]['msg']}", "topology")
