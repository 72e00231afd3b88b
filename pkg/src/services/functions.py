# src/services/functions.py - Nomographic and Kolmogorov function representations
"""Desired functions as pre-processing maps, sums and post-processing maps.

A nomographic function is psi(sum_i phi_i(s_i)). A Kolmogorov superposition is
a sum of J such terms, sum_j psi_j(sum_i phi_ij(s_i)), sharing nothing but the
readings. All maps are univariate, vectorised over numpy arrays, pure and
reentrant; specs are immutable once validated.

Arguments are passed as arrays of shape (N,) or (B, N). Node indices are
0-based.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Mapping, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from src.core.config import settings
from src.core.exceptions import ErrorMessages, ValidationError, raise_not_found, raise_validation_error
from src.core.streams import READINGS, derive_stream
from src.services.quantizer import DyadicQuantizer, dequantize_sum, quantize

logger = logging.getLogger(__name__)

Map = Callable[[np.ndarray], np.ndarray]
Interval = Tuple[float, float]

UNIT_INTERVAL: Interval = (0.0, 1.0)
DEFAULT_S_MIN = 1e-20


class RangeInfo(NamedTuple):
    """Union range of the pre-processing maps and its nonnegative working form"""
    lo: float
    hi: float
    pi_max: float
    shift: float


def _range_info(ranges: Sequence[Interval]) -> RangeInfo:
    lo = min(r[0] for r in ranges)
    hi = max(r[1] for r in ranges)
    shift = max(0.0, -lo)
    pi_max = max(abs(lo + shift), abs(hi + shift))
    return RangeInfo(lo, hi, pi_max, shift)


def _validate_ranges(maps: Sequence[Map], ranges: Sequence[Interval], domain: Sequence[Interval], label: str) -> None:
    """Every declared range must contain its map over a dense grid of the domain"""
    points = settings.RANGE_GRID_POINTS
    for i, (phi, (lo, hi), (d_lo, d_hi)) in enumerate(zip(maps, ranges, domain)):
        if lo > hi:
            raise_validation_error(f"{label}: empty range for node {i}", "range")
        values = np.asarray(phi(np.linspace(d_lo, d_hi, points)), dtype=float)
        slack = settings.FLOAT_TOL * max(1.0, abs(lo), abs(hi))
        if not np.all(np.isfinite(values)) or values.min() < lo - slack or values.max() > hi + slack:
            raise ValidationError(
                f"{label}: node {i} map leaves its declared range [{lo:.6g}, {hi:.6g}] "
                f"(observed [{np.nanmin(values):.6g}, {np.nanmax(values):.6g}])",
                "range",
            )


def _validate_post(psi: Map, lo: float, hi: float, label: str) -> None:
    values = np.asarray(psi(np.linspace(lo, hi, settings.RANGE_GRID_POINTS)), dtype=float)
    if not np.all(np.isfinite(values)):
        raise ValidationError(f"{label}: post-processing map is not finite on [{lo:.6g}, {hi:.6g}]", "post")


@dataclass(frozen=True, eq=False)
class NomographicSpec:
    """psi(sum_i phi_i(s_i)) with declared compact ranges for each phi_i"""

    name: str
    N: int
    pre: Tuple[Map, ...]
    ranges: Tuple[Interval, ...]
    post: Map
    domain: Tuple[Interval, ...] = ()
    # closed-form sup-error bound as a function of the fractional depth eta
    error_bound: Optional[Callable[[int], float]] = None
    params: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.N < 1:
            raise_validation_error("arity must be at least 1", "N")
        if not self.domain:
            object.__setattr__(self, "domain", (UNIT_INTERVAL,) * self.N)
        if not (len(self.pre) == len(self.ranges) == len(self.domain) == self.N):
            raise_validation_error("need one map, range and domain interval per argument", "N")
        _validate_ranges(self.pre, self.ranges, self.domain, self.name)
        lo = sum(r[0] for r in self.ranges)
        hi = sum(r[1] for r in self.ranges)
        _validate_post(self.post, lo, hi, self.name)

    @property
    def J(self) -> int:
        return 1


@dataclass(frozen=True, eq=False)
class Branch:
    """One nomographic term of a superposition"""

    pre: Tuple[Map, ...]
    ranges: Tuple[Interval, ...]
    post: Map


@dataclass(frozen=True, eq=False)
class KolmogorovSpec:
    """sum_j psi_j(sum_i phi_ij(s_i)) checked against a reference oracle.

    `post_sets` holds alternative post-processing sets a fusion center can
    switch to without touching the nodes; the set named "default" is the
    branches' own post maps.
    """

    name: str
    N: int
    branches: Tuple[Branch, ...]
    reference: Callable[[np.ndarray], np.ndarray]
    tolerance: float = 1e-9
    domain: Tuple[Interval, ...] = ()
    post_sets: Mapping[str, Tuple[Map, ...]] = field(default_factory=dict)

    def __post_init__(self):
        if self.N < 1:
            raise_validation_error("arity must be at least 1", "N")
        if not self.domain:
            object.__setattr__(self, "domain", (UNIT_INTERVAL,) * self.N)
        J = len(self.branches)
        if J < 1:
            raise_validation_error("a superposition needs at least one branch", "J")
        if J > 2 * self.N + 1:
            raise_validation_error(f"at most 2N+1 = {2 * self.N + 1} branches, got {J}", "J")
        for j, branch in enumerate(self.branches):
            if not (len(branch.pre) == len(branch.ranges) == self.N):
                raise_validation_error(f"branch {j} needs one map and range per node", "branches")
            _validate_ranges(branch.pre, branch.ranges, self.domain, f"{self.name}[{j}]")
            # absent nodes contribute phi_ij(0); only defined where the domain holds 0
            reach = sum(
                abs(float(phi(np.array([0.0]))[0]))
                for phi, (d_lo, d_hi) in zip(branch.pre, self.domain)
                if d_lo <= 0.0 <= d_hi
            )
            lo = sum(r[0] for r in branch.ranges) - reach
            hi = sum(r[1] for r in branch.ranges) + reach
            _validate_post(branch.post, lo, hi, f"{self.name}[{j}]")
        sets = dict(self.post_sets)
        sets["default"] = tuple(b.post for b in self.branches)
        for set_name, posts in sets.items():
            if len(posts) != J:
                raise_validation_error(f"post set '{set_name}' needs {J} maps", "post_sets")
        object.__setattr__(self, "post_sets", sets)
        self._check_reference()

    @property
    def J(self) -> int:
        return len(self.branches)

    def _check_reference(self) -> None:
        rng = derive_stream(settings.DEFAULT_SEED, READINGS, self.N, self.J)
        grid = domain_samples(self.domain, 1000, rng)
        got = _superposition(self.branches, tuple(b.post for b in self.branches), grid)
        want = np.asarray(self.reference(grid), dtype=float)
        worst = float(np.max(np.abs(got - want)))
        if worst > self.tolerance:
            raise ValidationError(
                f"{self.name}: branch composition differs from the reference by {worst:.3g}", "reference"
            )


Spec = Union[NomographicSpec, KolmogorovSpec]


def _as_arguments(spec: Spec, s) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    if s.ndim == 0 or s.shape[-1] != spec.N:
        raise ValidationError(f"expected {spec.N} arguments, got shape {s.shape}", "arguments")
    lo = np.array([d[0] for d in spec.domain])
    hi = np.array([d[1] for d in spec.domain])
    if np.any(s < lo) or np.any(s > hi):
        raise ValidationError(ErrorMessages.OUT_OF_DOMAIN, "arguments")
    return s


def domain_samples(domain: Sequence[Interval], count: int, rng: np.random.Generator) -> np.ndarray:
    lo = np.array([d[0] for d in domain])
    hi = np.array([d[1] for d in domain])
    return lo + (hi - lo) * rng.random((count, len(domain)))


def corner_points(domain: Sequence[Interval], limit: int = 12) -> np.ndarray:
    """All 2^min(N, limit) corner tuples; arguments past the limit sit at their minimum"""
    N = len(domain)
    m = min(N, limit)
    bits = (np.arange(1 << m)[:, None] >> np.arange(m)[None, :]) & 1
    lo = np.array([d[0] for d in domain])
    hi = np.array([d[1] for d in domain])
    corners = np.tile(lo, (1 << m, 1))
    corners[:, :m] = np.where(bits == 1, hi[:m], lo[:m])
    return corners


def _branch_sums(pre: Sequence[Map], s: np.ndarray) -> np.ndarray:
    return sum(np.asarray(phi(s[..., i]), dtype=float) for i, phi in enumerate(pre))


def _superposition(branches: Sequence[Branch], posts: Sequence[Map], s: np.ndarray) -> np.ndarray:
    return sum(np.asarray(psi(_branch_sums(b.pre, s)), dtype=float) for b, psi in zip(branches, posts))


def evaluate_reference(spec: Spec, s) -> Union[float, np.ndarray]:
    """Exact composition, bypassing quantization and the channel"""
    s = _as_arguments(spec, s)
    if isinstance(spec, NomographicSpec):
        value = np.asarray(spec.post(_branch_sums(spec.pre, s)), dtype=float)
    else:
        value = _superposition(spec.branches, spec.post_sets["default"], s)
    return float(value) if value.ndim == 0 else value


def range_metadata(spec: NomographicSpec) -> RangeInfo:
    """Union range, its maximal magnitude after shifting, and the shift"""
    return _range_info(spec.ranges)


def branch_range_metadata(spec: Spec) -> List[RangeInfo]:
    """range_metadata per branch (a nomographic spec has one branch)"""
    if isinstance(spec, NomographicSpec):
        return [range_metadata(spec)]
    return [_range_info(b.ranges) for b in spec.branches]


def branch_maps(spec: Spec) -> List[Tuple[Map, ...]]:
    if isinstance(spec, NomographicSpec):
        return [spec.pre]
    return [b.pre for b in spec.branches]


def branch_posts(spec: Spec, post_set: str = "default") -> Tuple[Map, ...]:
    if isinstance(spec, NomographicSpec):
        return (spec.post,)
    if post_set not in spec.post_sets:
        raise_not_found("Post-processing set", post_set)
    return spec.post_sets[post_set]


def branch_quantizers(spec: Spec, b: int) -> List[DyadicQuantizer]:
    """Common-b quantizer for every branch, each on its own shifted range"""
    return [DyadicQuantizer.for_range(b, info.pi_max, info.shift) for info in branch_range_metadata(spec)]


def min_bits(spec: Spec) -> int:
    """Smallest b admissible for every branch, max_j (v_j + 1)"""
    return max(DyadicQuantizer.for_range(64, info.pi_max).v + 1 for info in branch_range_metadata(spec))


def evaluate_quantized(spec: Spec, s, b: int) -> np.ndarray:
    """f~(s): every pre-processed value goes through quantize/dequantize with b bits"""
    s = _as_arguments(spec, s)
    total = 0.0
    for pre, psi, q in zip(branch_maps(spec), branch_posts(spec), branch_quantizers(spec, b)):
        digits = sum(quantize(q, np.asarray(phi(s[..., i]), dtype=float) + q.shift) for i, phi in enumerate(pre))
        total = total + np.asarray(psi(dequantize_sum(q, digits, spec.N)), dtype=float)
    return total


def cluster_constants(topology, spec: Spec, j: int) -> np.ndarray:
    """gamma_lj = sum of phi_ij(0) over the nodes outside each cluster"""
    maps = branch_maps(spec)
    if not 0 <= j < len(maps):
        raise_validation_error(f"branch index {j} outside 0..{len(maps) - 1}", "j")
    if topology.N != spec.N:
        raise_validation_error(f"topology has {topology.N} nodes, function has {spec.N}", "topology")
    constants = []
    for members in topology.clusters:
        for node in members:
            if not 0 <= node < spec.N:
                raise_validation_error(f"node index {node} out of range", "topology")
        # only excluded nodes are evaluated at 0, which may lie outside a map's domain
        outside = sorted(set(range(spec.N)) - set(members))
        with np.errstate(divide="ignore", invalid="ignore"):
            value = sum(float(np.asarray(maps[j][i](np.array([0.0])))[0]) for i in outside)
        if not math.isfinite(value):
            raise ValidationError(
                f"{spec.name}: branch {j} is undefined at 0 for a node outside cluster {list(members)}", "topology"
            )
        constants.append(value)
    return np.array(constants, dtype=float)


def evaluate_cluster_reference(spec: Spec, members: Sequence[int], s_cluster, constants: Sequence[float],
                               post_set: str = "default") -> np.ndarray:
    """Exact value a fusion center aims for: sum_j psi_lj(sum_{i in C} phi_ij(s_i) + gamma_lj)"""
    s_cluster = np.asarray(s_cluster, dtype=float)
    total = 0.0
    for pre, psi, gamma in zip(branch_maps(spec), branch_posts(spec, post_set), constants):
        inner = sum(np.asarray(pre[node](s_cluster[..., pos]), dtype=float) for pos, node in enumerate(members))
        total = total + np.asarray(psi(inner + gamma), dtype=float)
    return total


# ---------------------------------------------------------------------------
# builtin nomographic functions
# ---------------------------------------------------------------------------

def _arithmetic_mean(N: int, params: Mapping[str, float]) -> NomographicSpec:
    return NomographicSpec(
        name="arithmetic_mean",
        N=N,
        pre=(lambda s: s,) * N,
        ranges=(UNIT_INTERVAL,) * N,
        post=lambda g: g / N,
        error_bound=lambda eta: math.ldexp(1.0, -eta),
    )


def _geometric_mean(N: int, params: Mapping[str, float]) -> NomographicSpec:
    s_min = float(params.get("s_min", DEFAULT_S_MIN))
    if not 0 < s_min < 1:
        raise_validation_error(f"s_min must lie in (0, 1), got {s_min}", "s_min")
    log_min = math.log(s_min)
    return NomographicSpec(
        name="geometric_mean",
        N=N,
        pre=(np.log,) * N,
        ranges=((log_min, 0.0),) * N,
        post=lambda g: np.exp(g / N),
        domain=((s_min, 1.0),) * N,
        # exp(g/N) is (1/N)-Lipschitz for g <= 0 and the sum error is below N 2^-eta
        error_bound=lambda eta: math.ldexp(1.0, -eta),
        params={"s_min": s_min},
    )


def _euclidean_norm(N: int, params: Mapping[str, float]) -> NomographicSpec:
    return NomographicSpec(
        name="euclidean_norm",
        N=N,
        pre=(np.square,) * N,
        ranges=(UNIT_INTERVAL,) * N,
        post=np.sqrt,
        # sqrt has modulus of continuity sqrt(delta)
        error_bound=lambda eta: math.sqrt(N * math.ldexp(1.0, -eta)),
    )


BUILTINS: Dict[str, Callable[[int, Mapping[str, float]], NomographicSpec]] = {
    "arithmetic_mean": _arithmetic_mean,
    "geometric_mean": _geometric_mean,
    "euclidean_norm": _euclidean_norm,
}


def builtin(name: str, N: int, params: Optional[Mapping[str, float]] = None) -> NomographicSpec:
    """Named builtin nomographic function of N arguments"""
    if name not in BUILTINS:
        raise_not_found("Function", name)
    return BUILTINS[name](N, params or {})


# ---------------------------------------------------------------------------
# demo superpositions
# ---------------------------------------------------------------------------

def _mean_plus_product(N: int) -> KolmogorovSpec:
    branches = (
        Branch(pre=(lambda s: s,) * N, ranges=(UNIT_INTERVAL,) * N, post=lambda g: g / N),
        Branch(pre=(np.log1p,) * N, ranges=((0.0, math.log(2.0)),) * N, post=np.exp),
    )
    alternate = (lambda g: g, lambda g: np.exp(g / N))
    return KolmogorovSpec(
        name="mean_plus_product",
        N=N,
        branches=branches,
        reference=lambda s: s.mean(axis=-1) + np.prod(1.0 + s, axis=-1),
        post_sets={"alternate": alternate},
    )


def _mean_product_cosine(N: int) -> KolmogorovSpec:
    base = _mean_plus_product(N)
    cosine = Branch(pre=(np.cos,) * N, ranges=((math.cos(1.0), 1.0),) * N, post=lambda g: g / N)
    alternate = base.post_sets["alternate"] + (lambda g: g,)
    return KolmogorovSpec(
        name="mean_product_cosine",
        N=N,
        branches=base.branches + (cosine,),
        reference=lambda s: s.mean(axis=-1) + np.prod(1.0 + s, axis=-1) + np.cos(s).mean(axis=-1),
        post_sets={"alternate": alternate},
    )


DEMO_SUPERPOSITIONS: Dict[str, Callable[[int], KolmogorovSpec]] = {
    "mean_plus_product": _mean_plus_product,
    "mean_product_cosine": _mean_product_cosine,
}


def demo_superposition(name: str, N: int) -> KolmogorovSpec:
    """Concrete J = 2 or J = 3 superposition built from closed forms"""
    if name not in DEMO_SUPERPOSITIONS:
        raise_not_found("Superposition", name)
    return DEMO_SUPERPOSITIONS[name](N)
