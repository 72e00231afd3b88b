import math

import pytest

from src.core.exceptions import ComputationError, NotFoundError, ValidationError
from src.services.channel import ClusterTopology
from src.services.functions import builtin
from src.services.rates import (
    MULTICLUSTER_VARIANTS,
    RateContext,
    compare_functions,
    compute_b0,
    db_to_linear,
    rate_awgn_bound,
    rate_kolmogorov,
    rate_lattice,
    rate_multicluster,
    rate_separation,
    rate_tdma,
    sign_changes,
    sweep,
    universal_beats_tdma,
    wilson_interval,
)

SNR_15DB = db_to_linear(15.0)


def test_b0_of_the_mean():
    report = compute_b0(builtin("arithmetic_mean", 10), 1e-3)
    assert report.b0 == 11
    assert report.sup_error < 1e-3
    assert (report.v, report.eta) == (0, 10)
    assert compute_b0(builtin("arithmetic_mean", 5), 1e-3).b0 == 11


def test_b0_coarse_accuracy():
    report = compute_b0(builtin("arithmetic_mean", 10), 0.5)
    assert report.b0 == 3
    assert report.sup_error < 0.5
    assert compute_b0(builtin("arithmetic_mean", 3), 10.0).b0 == 1


def test_b0_is_non_increasing_in_eps():
    spec = builtin("euclidean_norm", 3)
    b0s = [compute_b0(spec, eps).b0 for eps in (1e-1, 1e-2, 1e-3)]
    assert b0s == sorted(b0s)


def test_b0_search_limits():
    with pytest.raises(ComputationError) as exc:
        compute_b0(builtin("arithmetic_mean", 4), 1e-3, b_max=5)
    assert exc.value.error_code == "B0_NOT_FOUND"
    with pytest.raises(ValidationError):
        compute_b0(builtin("arithmetic_mean", 4), 0.0)


def test_example_function_rate_ratios():
    b0 = {name: compute_b0(builtin(name, 5), 1e-3).b0 for name in ("arithmetic_mean", "geometric_mean", "euclidean_norm")}
    assert b0 == {"arithmetic_mean": 11, "geometric_mean": 16, "euclidean_norm": 24}
    mean = rate_lattice(SNR_15DB, b0["arithmetic_mean"], 5)
    assert 1.15 <= mean / rate_lattice(SNR_15DB, b0["geometric_mean"], 5) <= 1.45
    assert 1.75 <= mean / rate_lattice(SNR_15DB, b0["euclidean_norm"], 5) <= 2.25


def test_single_cluster_rates_at_15db():
    assert rate_lattice(SNR_15DB, 11, 10) == pytest.approx(0.17396, rel=1e-4)
    assert rate_separation(SNR_15DB, 11, 10) == pytest.approx(0.03777, rel=1e-3)
    assert rate_awgn_bound(SNR_15DB, 11, 10) == pytest.approx(0.5 * math.log2(1 + SNR_15DB) / (11 + math.log2(10)))
    assert rate_tdma(SNR_15DB, 11, 10) == pytest.approx(0.02285, rel=1e-3)
    assert rate_kolmogorov(SNR_15DB, 11, 10) == pytest.approx(0.17396 / 21, rel=1e-4)


def test_rate_edge_cases():
    assert rate_lattice(1.0, 11, 10) == 0.0
    assert rate_lattice(0.5, 11, 10) == 0.0
    assert rate_separation(0.0, 11, 10) == 0.0
    assert rate_awgn_bound(0.0, 11, 10) == 0.0
    assert rate_kolmogorov(0.9, 11, 10) == 0.0
    assert rate_tdma(SNR_15DB, 11, 1) == rate_separation(SNR_15DB, 11, 1)
    # doubling the denominator halves the rate
    assert rate_lattice(SNR_15DB, 6, 4) == pytest.approx(2 * rate_lattice(SNR_15DB, 14, 4))
    with pytest.raises(ValidationError):
        rate_lattice(-1.0, 11, 10)


def test_rate_orderings_on_a_sweep():
    points = sweep([x / 2 for x in range(0, 121)], RateContext(N=10, b0=11))
    for point in points:
        r = point.rates
        assert r["lattice"] <= r["awgn_bound"]
        assert r["tdma"] <= r["separation"] + 1e-15
        assert r["kolmogorov"] * 21 == pytest.approx(r["lattice"])
        assert all(v >= 0 for v in r.values())
    high = db_to_linear(60.0)
    assert rate_lattice(high, 11, 10) / rate_awgn_bound(high, 11, 10) == pytest.approx(1.0, rel=0.01)


def test_lattice_curve_is_monotone_and_crosses_separation_once():
    points = sweep([float(x) for x in range(31)], RateContext(N=10, b0=11))
    lattice = [p.rates["lattice"] for p in points]
    assert lattice == sorted(lattice)
    crossings = sign_changes(points, "lattice", "separation")
    assert len(crossings) == 1
    assert points[0].rates["separation"] > points[0].rates["lattice"]
    assert points[-1].rates["lattice"] > points[-1].rates["separation"]


def test_sweep_shapes():
    context = RateContext(N=10, b0=11)
    assert len(sweep([0.0], context)) == 1
    assert sweep([0.0], context)[0].rates["lattice"] == 0.0
    with pytest.raises(ValidationError):
        sweep([], context)


def test_single_cluster_topology_reduces_to_single_cluster_rates():
    topology = ClusterTopology.single(10)
    assert rate_multicluster(SNR_15DB, 11, topology, "nomographic_tdma") == [pytest.approx(rate_lattice(SNR_15DB, 11, 10))]
    assert rate_multicluster(SNR_15DB, 11, topology, "kolmogorov_universal") == [
        pytest.approx(rate_kolmogorov(SNR_15DB, 11, 10))
    ]
    assert rate_multicluster(SNR_15DB, 11, topology, "separation_tdma") == [
        pytest.approx(rate_separation(SNR_15DB, 11, 10))
    ]


def test_nomographic_tdma_is_equal_across_clusters():
    topology = ClusterTopology(N=8, clusters=((0, 1, 2), (2, 3, 4, 5), (5, 6, 7), (0, 7)))
    rates = rate_multicluster(SNR_15DB, 11, topology, "nomographic_tdma")
    assert len(set(rates)) == 1
    assert len(rate_multicluster(SNR_15DB, 11, topology, "separation_tdma")) == 4
    with pytest.raises(NotFoundError):
        rate_multicluster(SNR_15DB, 11, topology, "round_robin")


def test_kolmogorov_dominance_flips_at_the_boundary():
    snr = 100.0
    seen_equal = False
    for N in range(1, 9):
        for L in range(1, 5):
            for c in range(1, N + 1):
                if L == 1 and c != N:
                    continue
                clusters = (tuple(range(c)),) + (tuple(range(N)),) * (L - 1)
                topology = ClusterTopology(N=N, clusters=clusters)
                universal = rate_multicluster(snr, 11, topology, "kolmogorov_universal")[0]
                per_cluster = rate_multicluster(snr, 11, topology, "kolmogorov_tdma")[0]
                boundary = (2 * c + 1) * L - (2 * N + 1)
                if boundary == 0:
                    seen_equal = True
                    assert per_cluster == universal
                else:
                    assert (per_cluster > universal) == (boundary < 0)
                    assert universal_beats_tdma(topology, 0) == (boundary < 0)
    assert seen_equal
    assert set(MULTICLUSTER_VARIANTS) == {"nomographic_tdma", "separation_tdma", "kolmogorov_universal", "kolmogorov_tdma"}


def test_rate_point_carries_its_context():
    topology = ClusterTopology(N=5, clusters=((0, 1, 2), (2, 3, 4)))
    point = sweep([15.0], RateContext(N=5, b0=11, eps=1e-3, topology=topology))[0]
    assert (point.N, point.L, point.cluster_sizes, point.b0) == (5, 2, [3, 3], 11)
    assert set(point.rates) == {
        "lattice", "separation", "awgn_bound", "tdma", "kolmogorov",
        "mc_nomographic", "mc_separation", "mc_kolmogorov", "mc_kolmogorov_tdma",
    }


def test_compare_functions():
    frame = compare_functions([0.0, 15.0], 5, 1e-3, ["arithmetic_mean", "euclidean_norm"])
    assert list(frame.columns) == [
        "snr_db", "arithmetic_mean_lattice", "arithmetic_mean_awgn_bound",
        "euclidean_norm_lattice", "euclidean_norm_awgn_bound",
    ]
    assert frame.attrs["b0"] == {"arithmetic_mean": 11, "euclidean_norm": 24}
    assert frame["arithmetic_mean_lattice"].iloc[1] == pytest.approx(rate_lattice(SNR_15DB, 11, 5))


def test_wilson_interval():
    low, high = wilson_interval(0, 100)
    assert low == pytest.approx(0.0, abs=1e-12)
    assert 0.0 < high < 0.05
    low, high = wilson_interval(50, 100)
    assert low < 0.5 < high
    with pytest.raises(ValidationError):
        wilson_interval(5, 0)
    with pytest.raises(ValidationError):
        wilson_interval(11, 10)
