# src/services/pipeline.py - End-to-end computation over the clustered channel
"""Node encoders, fusion-center decoders and Monte Carlo runs.

Node chain: phi -> shift -> quantize -> pack -> lattice encode.
Fusion center chain: ML decode of the modulo-p sum -> digit sums ->
dequantize -> + gamma -> psi, summed over the branches of a superposition.

Every trial draws its readings and its noise from streams derived from
(seed, trial index), so reports do not depend on batch size or worker count.
A sum-decoding failure is always reported. The estimator is still evaluated on
a wrong sum whenever its digits are valid, and counts as an accuracy failure
only if it misses by more than eps.
"""

import hashlib
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict

from src.core.config import ENUMERATION_LIMIT, settings
from src.core.exceptions import (
    DecodingError,
    EnumerationLimitError,
    PowerViolationError,
    ValidationError,
    raise_validation_error,
)
from src.core.streams import MESSAGES, READINGS, derive_stream, split_batches
from src.services.channel import (
    ChannelConfig,
    ClusterTopology,
    active_nodes,
    noise_stream,
    tdma_schedule,
    transmit_batch,
    within_power,
)
from src.services.functions import (
    Interval,
    Map,
    NomographicSpec,
    Spec,
    branch_maps,
    branch_posts,
    branch_quantizers,
    cluster_constants,
    corner_points,
    evaluate_cluster_reference,
    evaluate_reference,
)
from src.services.lattice import (
    NestedLatticePair,
    construction_a,
    decode_ml,
    encode,
    message_rate,
    scale_to_power,
)
from src.services.quantizer import DyadicQuantizer, dequantize_sum, quantize
from src.services.rates import compute_b0, log2_plus, wilson_interval
from src.services.source_coding import PackingParams, derive_packing, pack, select_prime, unpack_digits

logger = logging.getLogger(__name__)

# cube shaping: every codeword lies in [-gamma p/2, gamma p/2]^n, i.e. energy <= 3 n P
PEAK_TO_AVERAGE = 3.0


@dataclass(frozen=True, eq=False)
class NodeEncoder:
    """Encoder of one node; every node of a network shares quantizers, packing and lattice"""

    node: int
    pre: Tuple[Map, ...]
    domain: Interval
    quantizers: Tuple[DyadicQuantizer, ...]
    packing: PackingParams
    pair: NestedLatticePair

    @property
    def J(self) -> int:
        return len(self.pre)


@dataclass(frozen=True, eq=False)
class FcDecoder:
    """Fusion center of one cluster; mirrors the encoder parameters"""

    cluster: int
    members: Tuple[int, ...]
    pair: NestedLatticePair
    packing: PackingParams
    quantizers: Tuple[DyadicQuantizer, ...]
    posts: Tuple[Map, ...]
    constants: Tuple[float, ...]
    # exact target value, readings of the members in member order -> value
    reference: Callable[[np.ndarray], np.ndarray]

    @property
    def count(self) -> int:
        return len(self.members)

    @property
    def J(self) -> int:
        return len(self.posts)


class TrialReport(BaseModel):
    """Monte Carlo tally of one fusion center"""
    model_config = ConfigDict(frozen=True)

    trials: int = 0
    sum_decode_failures: int = 0
    accuracy_failures: int = 0
    max_ok_error: float = 0.0
    cluster: Optional[int] = None

    def merge(self, other: "TrialReport") -> "TrialReport":
        return TrialReport(
            trials=self.trials + other.trials,
            sum_decode_failures=self.sum_decode_failures + other.sum_decode_failures,
            accuracy_failures=self.accuracy_failures + other.accuracy_failures,
            max_ok_error=max(self.max_ok_error, other.max_ok_error),
            cluster=self.cluster if self.cluster is not None else other.cluster,
        )

    @property
    def sum_failure_fraction(self) -> float:
        return self.sum_decode_failures / self.trials if self.trials else 0.0

    @property
    def accuracy_failure_fraction(self) -> float:
        return self.accuracy_failures / self.trials if self.trials else 0.0

    def to_row(self, snr_db: float) -> Dict[str, float]:
        return {
            "snr_db": snr_db,
            "trials": self.trials,
            "sum_decode_failures": self.sum_decode_failures,
            "accuracy_failures": self.accuracy_failures,
            "max_ok_error": self.max_ok_error,
        }


@dataclass(frozen=True, eq=False)
class NetworkCode:
    """Encoders (by node index) and the fusion centers that listen to them"""

    encoders: Mapping[int, NodeEncoder]
    decoders: Tuple[FcDecoder, ...]
    spec: Spec

    @property
    def pair(self) -> NestedLatticePair:
        return self.decoders[0].pair

    @property
    def packing(self) -> PackingParams:
        return self.decoders[0].packing

    @property
    def T(self) -> int:
        return self.packing.T


class KolmogorovRun(BaseModel):
    """Per-cluster reports plus a digest of every transmitted vector"""
    model_config = ConfigDict(frozen=True)

    reports: List[TrialReport]
    transmit_digest: str


class TrendPoint(BaseModel):
    model_config = ConfigDict(frozen=True)

    n: int
    k: int
    message_rate: float
    failures: int
    trials: int
    low: float
    high: float

    @property
    def fraction(self) -> float:
        return self.failures / self.trials


# ---------------------------------------------------------------------------
# construction
# ---------------------------------------------------------------------------

def design_lattice(
    b: int,
    N_pack: int,
    config: ChannelConfig,
    p: Optional[int] = None,
    k: int = 1,
    generator_seed: int = 0,
) -> Tuple[PackingParams, NestedLatticePair]:
    """Packing and power-scaled lattice shared by a whole network"""
    if not 1 <= k <= config.n:
        raise_validation_error(f"need 1 <= k <= n, got k={k}, n={config.n}", "k")
    q = N_pack * ((1 << b) - 1) + 1
    p = p or select_prime(q, config.n, k)
    packing = derive_packing(b, N_pack, p, k)
    lattice = construction_a(p, k, config.n, seed=generator_seed)
    if not lattice.uncoded and lattice.codebook_size > ENUMERATION_LIMIT:
        raise EnumerationLimitError(lattice.codebook_size, ENUMERATION_LIMIT)
    pair = scale_to_power(lattice, config.P)
    logger.debug(f"Network code: b={b} q={q} p={p} k={k} n={config.n} T={packing.T}")
    return packing, pair


def build_network_code(
    spec: Spec,
    topology: ClusterTopology,
    config: ChannelConfig,
    b: int,
    p: Optional[int] = None,
    k: int = 1,
    post_sets: Optional[Mapping[int, str]] = None,
    generator_seed: int = 0,
) -> NetworkCode:
    """Identical encoders on every node; one decoder per cluster with its own post set"""
    if topology.N != spec.N:
        raise_validation_error(f"topology has {topology.N} nodes, function has {spec.N}", "topology")
    quantizers = tuple(branch_quantizers(spec, b))
    packing, pair = design_lattice(b, topology.max_cluster_size, config, p, k, generator_seed)
    maps = branch_maps(spec)
    encoders = {
        i: NodeEncoder(
            node=i,
            pre=tuple(branch[i] for branch in maps),
            domain=spec.domain[i],
            quantizers=quantizers,
            packing=packing,
            pair=pair,
        )
        for i in range(spec.N)
    }
    post_sets = post_sets or {}
    decoders = []
    for ell, members in enumerate(topology.clusters):
        constants = tuple(float(cluster_constants(topology, spec, j)[ell]) for j in range(spec.J))
        post_set = post_sets.get(ell, "default")

        def reference(sc, members=members, constants=constants, post_set=post_set):
            return evaluate_cluster_reference(spec, members, sc, constants, post_set)

        decoders.append(
            FcDecoder(
                cluster=ell,
                members=members,
                pair=pair,
                packing=packing,
                quantizers=quantizers,
                posts=branch_posts(spec, post_set),
                constants=constants,
                reference=reference,
            )
        )
    return NetworkCode(encoders=encoders, decoders=tuple(decoders), spec=spec)


# ---------------------------------------------------------------------------
# block encoding and decoding
# ---------------------------------------------------------------------------

def _encode_messages(node: NodeEncoder, readings, branch: int) -> Tuple[np.ndarray, np.ndarray]:
    s = np.asarray(readings, dtype=float)
    if s.ndim == 0 or s.shape[-1] != node.packing.T:
        raise ValidationError(f"expected {node.packing.T} readings per block, got {s.shape}", "readings")
    lo, hi = node.domain
    if np.any(s < lo) or np.any(s > hi):
        raise ValidationError(f"reading outside [{lo:.6g}, {hi:.6g}] at node {node.node}", "readings")
    q = node.quantizers[branch]
    digits = quantize(q, np.asarray(node.pre[branch](s), dtype=float) + q.shift)
    w = pack(node.packing, digits)
    x = encode(node.pair, w)
    ok = within_power(x, PEAK_TO_AVERAGE * node.pair.power)
    if not np.all(ok):
        energy = float(np.max(np.einsum("...i,...i->...", x, x)))
        raise PowerViolationError(energy, PEAK_TO_AVERAGE * node.pair.n * node.pair.power)
    return w, x


def encode_block(node: NodeEncoder, readings, branch: int = 0) -> np.ndarray:
    """T readings (or a batch (B, T)) -> length-n transmit vector(s) for one branch"""
    _, x = _encode_messages(node, readings, branch)
    return x


def _estimate(fc: FcDecoder, sums: Sequence[np.ndarray], valid: np.ndarray) -> np.ndarray:
    """sum_j psi_j(dequantized digit sum + gamma_j); NaN where the digits were invalid"""
    levels_cap = fc.count * (fc.quantizers[0].levels - 1)
    total = 0.0
    for q, psi, gamma, S in zip(fc.quantizers, fc.posts, fc.constants, sums):
        valid = valid & np.all(S <= levels_cap, axis=-1)
        g = dequantize_sum(q, np.clip(S, 0, levels_cap), fc.count)
        total = total + np.asarray(psi(g + gamma), dtype=float)
    return np.where(valid[..., None], total, np.nan)


def _decode_branches(fc: FcDecoder, y: np.ndarray):
    g_hat = [decode_ml(fc.pair, y_j) for y_j in y]
    unpacked = [unpack_digits(fc.packing, g) for g in g_hat]
    valid = np.logical_and.reduce([v for _, v in unpacked])
    return g_hat, [d for d, _ in unpacked], valid


def decode_block(fc: FcDecoder, y) -> np.ndarray:
    """Received vector(s) -> T estimated function values.

    ``y`` has shape (n,) for a single-branch function or (J, n) with one block
    per branch. Raises DecodingError when the decoded sum is not a valid sum.
    """
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y[None, :]
    if y.shape[0] != fc.J:
        raise ValidationError(f"expected {fc.J} branch blocks, got {y.shape[0]}", "y")
    _, sums, valid = _decode_branches(fc, y)
    if not np.all(valid):
        raise DecodingError("decoded sum has a digit outside the base; the sum was not decoded correctly")
    estimate = _estimate(fc, sums, np.atleast_1d(valid))
    if np.any(np.isnan(estimate)):
        raise DecodingError("decoded digit sum exceeds what the cluster can produce")
    return estimate[0]


# ---------------------------------------------------------------------------
# Monte Carlo
# ---------------------------------------------------------------------------

def _draw_readings(domain: Sequence[Interval], T: int, trials: Sequence[int], seed: int) -> np.ndarray:
    """(B, N, T) readings, one derived stream per trial"""
    lo = np.array([d[0] for d in domain])[:, None]
    hi = np.array([d[1] for d in domain])[:, None]
    out = np.empty((len(trials), len(domain), T))
    for b, t in enumerate(trials):
        rng = derive_stream(seed, READINGS, 0, 0, t)
        out[b] = lo + (hi - lo) * rng.random((len(domain), T))
    return out


def corner_blocks(spec: Spec, T: int) -> np.ndarray:
    """Corner tuples laid out as (blocks, N, T), the last block padded with its final corner"""
    corners = corner_points(spec.domain)
    blocks = math.ceil(len(corners) / T)
    padded = np.concatenate([corners, np.repeat(corners[-1:], blocks * T - len(corners), axis=0)])
    return padded.reshape(blocks, T, spec.N).transpose(0, 2, 1)


def _simulate_batch(
    codes: Sequence[NetworkCode],
    config: ChannelConfig,
    eps: float,
    readings: np.ndarray,
    trial_ids: Sequence[int],
    seed: int,
    slot_of: Callable[[int, int], int],
) -> Tuple[List[TrialReport], bytes]:
    """One batch for every fusion center of every code.

    Each code's encoders transmit once per branch; every decoder of that code
    hears its own members plus its own noise draw.
    """
    reports = []
    digest = hashlib.sha256()
    for code in codes:
        J = code.spec.J
        messages: Dict[Tuple[int, int], np.ndarray] = {}
        signals: Dict[Tuple[int, int], np.ndarray] = {}
        for i, node in sorted(code.encoders.items()):
            for j in range(J):
                messages[i, j], signals[i, j] = _encode_messages(node, readings[:, i, :], j)
                digest.update(np.ascontiguousarray(signals[i, j]).tobytes())

        for fc in code.decoders:
            p = fc.pair.lattice.p
            ys, truth = [], []
            for j in range(J):
                slot = slot_of(fc.cluster, j)
                streams = [noise_stream(seed, fc.cluster, slot, t) for t in trial_ids]
                member_signals = np.stack([signals[i, j] for i in fc.members], axis=1)
                ys.append(transmit_batch(member_signals, config, streams))
                truth.append(sum(messages[i, j] for i in fc.members) % p)
            g_hat, sums, valid = _decode_branches(fc, ys)
            sum_ok = np.logical_and.reduce([np.all(g == w, axis=-1) for g, w in zip(g_hat, truth)])

            estimate = _estimate(fc, sums, valid)
            member_readings = readings[:, list(fc.members), :].transpose(0, 2, 1)
            exact = np.asarray(fc.reference(member_readings), dtype=float)
            error = np.max(np.abs(estimate - exact), axis=-1)
            failed = np.isnan(error) | (error > eps)
            ok_errors = error[sum_ok & ~np.isnan(error)]
            reports.append(
                TrialReport(
                    trials=len(trial_ids),
                    sum_decode_failures=int(np.count_nonzero(~sum_ok)),
                    accuracy_failures=int(np.count_nonzero(failed)),
                    max_ok_error=float(ok_errors.max()) if ok_errors.size else 0.0,
                    cluster=fc.cluster,
                )
            )
    return reports, digest.digest()


def _simulate(
    codes: Sequence[NetworkCode],
    domain: Sequence[Interval],
    config: ChannelConfig,
    eps: float,
    trials: int,
    seed: int,
    slot_of: Callable[[int, int], int],
    corners: Optional[np.ndarray] = None,
) -> Tuple[List[TrialReport], str]:
    """Batches of trials on a thread pool; per-trial streams keep the result order-free"""
    if trials < 0:
        raise_validation_error("trials must be nonnegative", "trials")
    if not eps > 0:
        raise_validation_error("accuracy eps must be positive", "eps")
    T = codes[0].T

    jobs: List[Tuple[List[int], Optional[np.ndarray]]] = []
    start = 0
    for _, size in split_batches(trials, settings.BATCH_SIZE):
        jobs.append((list(range(start, start + size)), None))
        start += size
    if corners is not None and len(corners):
        # corner tuples get trial ids past the random ones
        jobs.append((list(range(trials, trials + len(corners))), corners))

    def run(job):
        ids, fixed = job
        readings = fixed if fixed is not None else _draw_readings(domain, T, ids, seed)
        return _simulate_batch(codes, config, eps, readings, ids, seed, slot_of)

    with ThreadPoolExecutor(max_workers=max(1, settings.WORKERS)) as pool:
        results = list(pool.map(run, jobs))

    merged = [TrialReport(cluster=fc.cluster) for code in codes for fc in code.decoders]
    digest = hashlib.sha256()
    for reports, part in results:
        digest.update(part)
        merged = [a.merge(b) for a, b in zip(merged, reports)]
    return merged, digest.hexdigest()


def run_single_cluster(
    spec: NomographicSpec,
    config: ChannelConfig,
    eps: float,
    trials: int,
    seed: int,
    b: Optional[int] = None,
    p: Optional[int] = None,
    k: int = 1,
    include_corners: bool = False,
) -> TrialReport:
    """All N nodes in one cluster computing a nomographic function"""
    b = b or compute_b0(spec, eps).b0
    code = build_network_code(spec, ClusterTopology.single(spec.N), config, b, p, k, generator_seed=seed)
    logger.info(f"Single cluster {spec.name}: N={spec.N} b={b} p={code.pair.lattice.p} "
                f"T={code.T} n={config.n} sigma_z2={config.sigma_z2:.4g} trials={trials}")
    corners = corner_blocks(spec, code.T) if include_corners else None
    reports, _ = _simulate([code], spec.domain, config, eps, trials, seed, lambda ell, j: j, corners)
    report = reports[0]
    logger.info(f"Single cluster done: {report.sum_decode_failures} sum failures, "
                f"{report.accuracy_failures} accuracy failures")
    return report


def run_kolmogorov(
    spec: Spec,
    topology: ClusterTopology,
    config: ChannelConfig,
    eps: float,
    trials: int,
    seed: int,
    b: Optional[int] = None,
    p: Optional[int] = None,
    k: int = 1,
    post_sets: Optional[Mapping[int, str]] = None,
    include_corners: bool = False,
) -> KolmogorovRun:
    """J serialized branch transmissions heard by every fusion center at once"""
    b = b or compute_b0(spec, eps).b0
    code = build_network_code(spec, topology, config, b, p, k, post_sets, generator_seed=seed)
    logger.info(f"Superposition {spec.name}: J={spec.J} L={topology.L} b={b} trials={trials}")
    corners = corner_blocks(spec, code.T) if include_corners else None
    reports, digest = _simulate([code], spec.domain, config, eps, trials, seed, lambda ell, j: j, corners)
    failures = sum(r.accuracy_failures for r in reports)
    logger.info(f"Superposition done: {failures} accuracy failures over {topology.L} clusters")
    return KolmogorovRun(reports=reports, transmit_digest=digest)


def _network_domain(specs: Sequence[NomographicSpec], topology: ClusterTopology) -> List[Interval]:
    """Per-node domain, intersected over every cluster the node belongs to"""
    lo = np.full(topology.N, -np.inf)
    hi = np.full(topology.N, np.inf)
    for spec, members in zip(specs, topology.clusters):
        for pos, node in enumerate(members):
            lo[node] = max(lo[node], spec.domain[pos][0])
            hi[node] = min(hi[node], spec.domain[pos][1])
    if np.any(lo > hi):
        raise_validation_error("common node has disjoint domains in its clusters", "topology")
    return [(float(a), float(b)) for a, b in zip(lo, hi)]


def run_clustered_tdma(
    spec_factory: Callable[[int], NomographicSpec],
    topology: ClusterTopology,
    config: ChannelConfig,
    eps: float,
    trials: int,
    seed: int,
    b: Optional[int] = None,
    p: Optional[int] = None,
    k: int = 1,
) -> List[TrialReport]:
    """One nomographic function per cluster, each cluster alone in its TDMA slot.

    ``spec_factory(size)`` builds the function a cluster of that size computes.
    Common nodes transmit in the slot of every cluster they belong to, with the
    same reading each time.
    """
    specs = [spec_factory(size) for size in topology.sizes]
    b = b or max(compute_b0(s, eps).b0 for s in specs)
    packing, pair = design_lattice(b, topology.max_cluster_size, config, p, k, generator_seed=seed)

    schedule = tdma_schedule(topology)
    codes = []
    for slot, ell in enumerate(schedule.slots):
        spec = specs[ell]
        members = tuple(active_nodes(topology, schedule, slot))
        quantizers = tuple(branch_quantizers(spec, b))
        encoders = {
            node: NodeEncoder(node, (spec.pre[pos],), spec.domain[pos], quantizers, packing, pair)
            for pos, node in enumerate(members)
        }
        fc = FcDecoder(
            cluster=ell, members=members, pair=pair, packing=packing, quantizers=quantizers,
            posts=(spec.post,), constants=(0.0,),
            reference=lambda sc, spec=spec: evaluate_reference(spec, sc),
        )
        codes.append(NetworkCode(encoders=encoders, decoders=(fc,), spec=spec))

    logger.info(f"TDMA over {topology.L} clusters: b={b} p={packing.p} trials={trials}")
    reports, _ = _simulate(codes, _network_domain(specs, topology), config, eps, trials, seed,
                           lambda ell, j: schedule.slot_of(ell))
    return reports


# ---------------------------------------------------------------------------
# lattice-level decoding experiments
# ---------------------------------------------------------------------------

def sum_decoding_failures(
    pair: NestedLatticePair,
    N: int,
    sigma_z2: float,
    trials: int,
    seed: int,
    messages: Optional[np.ndarray] = None,
) -> int:
    """Count trials whose decoded modulo-p sum of N messages is wrong.

    Messages are uniform per trial unless a fixed (N, k) tuple is given. Noise
    depends only on (seed, trial), so runs with different messages replay the
    same noise realizations.
    """
    lat = pair.lattice
    if N < 1 or trials < 0:
        raise_validation_error("need N >= 1 and trials >= 0", "trials")
    if messages is not None:
        messages = np.asarray(messages, dtype=np.int64)
        if messages.shape != (N, lat.k):
            raise ValidationError(f"fixed messages must have shape ({N}, {lat.k})", "messages")
    if sigma_z2 < 0:
        raise_validation_error("noise variance must be nonnegative", "sigma_z2")
    channel = ChannelConfig(P=pair.power, sigma_z2=sigma_z2, n=pair.n)
    failures = 0
    start = 0
    for _, size in split_batches(trials, settings.BATCH_SIZE):
        ids = range(start, start + size)
        start += size
        if messages is None:
            w = np.stack([derive_stream(seed, MESSAGES, 0, 0, t).integers(0, lat.p, (N, lat.k)) for t in ids])
        else:
            w = np.broadcast_to(messages, (size, N, lat.k))
        y = transmit_batch(encode(pair, w), channel, [noise_stream(seed, 0, 0, t) for t in ids])
        g_hat = decode_ml(pair, y)
        failures += int(np.count_nonzero(np.any(g_hat != w.sum(axis=1) % lat.p, axis=-1)))
    return failures


def decoding_trend(
    p: int,
    rate_fraction: float,
    n_values: Sequence[int],
    snr_db: float,
    trials: int,
    seed: int,
    N: int = 2,
    P: float = 1.0,
) -> List[TrendPoint]:
    """Sum-decoding failure fraction against block length at a fixed message rate.

    The rate is rate_fraction * (1/2) log2+(snr); k = round(n * rate / log2 p).
    """
    if not 0 < rate_fraction:
        raise_validation_error("rate fraction must be positive", "rate_fraction")
    snr = 10.0 ** (snr_db / 10.0)
    target = rate_fraction * 0.5 * log2_plus(snr)
    sigma_z2 = P / snr
    points = []
    for n in n_values:
        k = min(n, max(1, round(n * target / math.log2(p))))
        pair = scale_to_power(construction_a(p, k, n, seed=seed), P)
        failures = sum_decoding_failures(pair, N, sigma_z2, trials, seed)
        low, high = wilson_interval(failures, trials)
        points.append(
            TrendPoint(n=n, k=k, message_rate=message_rate(pair), failures=failures,
                       trials=trials, low=low, high=high)
        )
        logger.info(f"Decoding trend n={n} k={k}: {failures}/{trials} failures")
    return points
