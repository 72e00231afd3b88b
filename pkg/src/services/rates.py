# src/services/rates.py - Achievable computation rates and the b0 search
"""Closed-form computation rates (function values per channel use) and the
numerical search for the smallest quantizer resolution b0(f, eps).

Every formula takes the linear SNR P / sigma_z^2. Rates use the conservative
packing denominator b0 + log2 N even where exact packing fits more readings per
symbol; the difference is available from ``source_coding.packing_gap``.
"""

import logging
import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict
from scipy import stats

from src.core.config import settings
from src.core.exceptions import ComputationError, ErrorMessages, raise_not_found, raise_validation_error
from src.core.streams import SAMPLES, derive_stream
from src.services.channel import ClusterTopology
from src.services.functions import (
    NomographicSpec,
    Spec,
    branch_quantizers,
    builtin,
    corner_points,
    domain_samples,
    evaluate_quantized,
    evaluate_reference,
    min_bits,
)

logger = logging.getLogger(__name__)

SINGLE_CLUSTER_RATES = ("lattice", "separation", "awgn_bound", "tdma", "kolmogorov")
MULTICLUSTER_VARIANTS = ("nomographic_tdma", "separation_tdma", "kolmogorov_universal", "kolmogorov_tdma")


class B0Report(BaseModel):
    """Result of the b0 search"""
    model_config = ConfigDict(frozen=True)

    function: str
    eps: float
    b0: int
    sup_error: float
    grid_error: float
    bound: Optional[float] = None
    v: int
    eta: int


class RateContext(BaseModel):
    model_config = ConfigDict(frozen=True)

    N: int
    b0: int
    eps: Optional[float] = None
    topology: Optional[ClusterTopology] = None

    @property
    def clusters(self) -> ClusterTopology:
        return self.topology or ClusterTopology.single(self.N)


class RatePoint(BaseModel):
    model_config = ConfigDict(frozen=True)

    snr_db: float
    snr_linear: float
    rates: Dict[str, float]
    N: int
    L: int
    cluster_sizes: List[int]
    b0: int
    eps: Optional[float] = None


def db_to_linear(snr_db: float) -> float:
    return 10.0 ** (snr_db / 10.0)


def log2_plus(x: float) -> float:
    """max(0, log2 x), 0 for x <= 1"""
    return math.log2(x) if x > 1.0 else 0.0


def _check_args(snr: float, b0: int, N: int) -> None:
    if not snr >= 0:
        raise_validation_error(f"SNR must be nonnegative, got {snr}", "snr")
    if b0 < 1 or N < 1:
        raise_validation_error("b0 and N must be positive", "rate")


# ---------------------------------------------------------------------------
# b0 search
# ---------------------------------------------------------------------------

def compute_b0(
    spec: Spec,
    eps: float,
    grid_density: Optional[int] = None,
    b_max: Optional[int] = None,
    seed: Optional[int] = None,
) -> B0Report:
    """Smallest b whose quantized pipeline stays uniformly within eps of f.

    The sup-error is measured on grid_density * N uniform domain points plus all
    corner tuples; when the function carries a closed-form error bound the
    larger of the two decides.
    """
    if not eps > 0:
        raise_validation_error("accuracy eps must be positive", "eps")
    grid_density = grid_density or settings.B0_GRID_PER_ARG
    b_max = b_max or settings.B0_MAX_BITS
    seed = settings.DEFAULT_SEED if seed is None else seed

    rng = derive_stream(seed, SAMPLES, spec.N)
    grid = np.concatenate(
        [domain_samples(spec.domain, grid_density * spec.N, rng), corner_points(spec.domain)]
    )
    exact = evaluate_reference(spec, grid)
    bound_fn = spec.error_bound if isinstance(spec, NomographicSpec) else None

    for b in range(min_bits(spec), b_max + 1):
        eta = min(q.eta for q in branch_quantizers(spec, b))
        grid_error = float(np.max(np.abs(evaluate_quantized(spec, grid, b) - exact)))
        bound = bound_fn(eta) if bound_fn else None
        sup_error = max(grid_error, bound) if bound is not None else grid_error
        logger.debug(f"b0 search {spec.name}: b={b} grid={grid_error:.3g} bound={bound}")
        if sup_error < eps:
            v = b - eta - 1
            logger.info(f"b0({spec.name}, eps={eps:g}) = {b} (sup error {sup_error:.3g})")
            return B0Report(
                function=spec.name, eps=eps, b0=b, sup_error=sup_error,
                grid_error=grid_error, bound=bound, v=v, eta=eta,
            )
    raise ComputationError(
        f"no resolution up to b_max={b_max} bits reaches eps={eps:g} for {spec.name}", "B0_NOT_FOUND"
    )


# ---------------------------------------------------------------------------
# single cluster
# ---------------------------------------------------------------------------

def rate_lattice(snr: float, b0: int, N: int) -> float:
    """Nested lattice computation rate, (1/2) log2+(snr) / (b0 + log2 N)"""
    _check_args(snr, b0, N)
    return 0.5 * log2_plus(snr) / (b0 + math.log2(N))


def rate_separation(snr: float, b0: int, N: int) -> float:
    """Decode every reading, then compute: log2(1 + N snr) / (2 N b0)"""
    _check_args(snr, b0, N)
    return math.log2(1.0 + N * snr) / (2 * N * b0)


def rate_awgn_bound(snr: float, b0: int, N: int) -> float:
    """Single-user AWGN capacity normalised like the lattice rate; an upper bound only"""
    _check_args(snr, b0, N)
    return 0.5 * math.log2(1.0 + snr) / (b0 + math.log2(N))


def rate_tdma(snr: float, b0: int, N: int) -> float:
    """Naive time sharing, each node 1/N of the channel uses at power P"""
    _check_args(snr, b0, N)
    return math.log2(1.0 + snr) / (2 * N * b0)


def rate_kolmogorov(snr: float, b0: int, N: int) -> float:
    """2N+1 nomographic branches computed one after the other"""
    return rate_lattice(snr, b0, N) / (2 * N + 1)


RATE_FUNCTIONS = {
    "lattice": rate_lattice,
    "separation": rate_separation,
    "awgn_bound": rate_awgn_bound,
    "tdma": rate_tdma,
    "kolmogorov": rate_kolmogorov,
}


# ---------------------------------------------------------------------------
# multiple clusters
# ---------------------------------------------------------------------------

def rate_multicluster(snr: float, b0: int, topology: ClusterTopology, variant: str) -> List[float]:
    """Per-cluster rates for the clustered network"""
    if variant not in MULTICLUSTER_VARIANTS:
        raise_not_found("Rate variant", variant)
    _check_args(snr, b0, topology.N)
    L, N = topology.L, topology.N
    sizes = topology.sizes
    # b0 + log2 max |C_l|: packing is shared by every node of the network
    per_use = log2_plus(snr) / (b0 + math.log2(topology.max_cluster_size))

    if variant == "nomographic_tdma":
        return [per_use / (2 * L)] * L
    if variant == "separation_tdma":
        return [math.log2(1.0 + c * snr) / (2 * L * c * b0) for c in sizes]
    if variant == "kolmogorov_universal":
        return [per_use / (4 * N + 2)] * L
    return [per_use / ((4 * c + 2) * L) for c in sizes]


def universal_beats_tdma(topology: ClusterTopology, cluster: int) -> bool:
    """Per-cluster TDMA of superpositions wins iff (2|C_l| + 1) L < 2N + 1"""
    return (2 * topology.sizes[cluster] + 1) * topology.L < 2 * topology.N + 1


# ---------------------------------------------------------------------------
# sweeps
# ---------------------------------------------------------------------------

def rate_point(snr_db: float, context: RateContext) -> RatePoint:
    snr = db_to_linear(snr_db)
    N, b0 = context.N, context.b0
    rates = {name: fn(snr, b0, N) for name, fn in RATE_FUNCTIONS.items()}
    topology = context.clusters
    rates["mc_nomographic"] = rate_multicluster(snr, b0, topology, "nomographic_tdma")[0]
    rates["mc_separation"] = min(rate_multicluster(snr, b0, topology, "separation_tdma"))
    rates["mc_kolmogorov"] = rate_multicluster(snr, b0, topology, "kolmogorov_universal")[0]
    rates["mc_kolmogorov_tdma"] = min(rate_multicluster(snr, b0, topology, "kolmogorov_tdma"))
    return RatePoint(
        snr_db=snr_db, snr_linear=snr, rates=rates, N=N, L=topology.L,
        cluster_sizes=topology.sizes, b0=b0, eps=context.eps,
    )


def sweep(snr_grid_db: Sequence[float], context: RateContext) -> List[RatePoint]:
    """Every formula at every grid point (dB)"""
    if len(snr_grid_db) == 0:
        raise_validation_error(ErrorMessages.EMPTY_GRID, "snr_grid")
    return [rate_point(float(snr_db), context) for snr_db in snr_grid_db]


def sign_changes(points: Sequence[RatePoint], first: str, second: str) -> List[float]:
    """SNRs (dB) where rates[first] - rates[second] changes sign between neighbours"""
    diffs = np.array([p.rates[first] - p.rates[second] for p in points])
    signs = np.sign(diffs)
    nonzero = signs != 0
    snrs = np.array([p.snr_db for p in points])[nonzero]
    signs = signs[nonzero]
    return [float(snrs[i + 1]) for i in np.flatnonzero(signs[1:] != signs[:-1])]


def compare_functions(
    snr_grid_db: Sequence[float],
    N: int,
    eps: float,
    names: Sequence[str],
    params: Optional[Dict[str, Dict[str, float]]] = None,
) -> pd.DataFrame:
    """Lattice rate and AWGN bound for several builtins on one grid.

    The b0 of every function is stored in ``frame.attrs["b0"]``.
    """
    if len(snr_grid_db) == 0:
        raise_validation_error(ErrorMessages.EMPTY_GRID, "snr_grid")
    params = params or {}
    frame = pd.DataFrame({"snr_db": [float(x) for x in snr_grid_db]})
    b0s = {}
    for name in names:
        report = compute_b0(builtin(name, N, params.get(name)), eps)
        b0s[name] = report.b0
        snr = frame["snr_db"].map(db_to_linear)
        frame[f"{name}_lattice"] = snr.map(lambda x: rate_lattice(x, report.b0, N))
        frame[f"{name}_awgn_bound"] = snr.map(lambda x: rate_awgn_bound(x, report.b0, N))
    frame.attrs["b0"] = b0s
    return frame


def wilson_interval(failures: int, trials: int, confidence: float = 0.95) -> Tuple[float, float]:
    """Wilson score interval for a failure fraction"""
    if trials < 1:
        raise_validation_error("trials must be at least 1", "trials")
    if not 0 <= failures <= trials:
        raise_validation_error("failures must lie in 0..trials", "failures")
    ci = stats.binomtest(int(failures), int(trials)).proportion_ci(confidence_level=confidence, method="wilson")
    return float(ci.low), float(ci.high)
