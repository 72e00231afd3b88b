import math

import numpy as np
import pytest

from src.core.exceptions import NotFoundError, ValidationError
from src.core.streams import SAMPLES, derive_stream
from src.services.channel import ClusterTopology
from src.services.functions import (
    UNIT_INTERVAL,
    Branch,
    KolmogorovSpec,
    NomographicSpec,
    branch_posts,
    builtin,
    cluster_constants,
    corner_points,
    demo_superposition,
    evaluate_cluster_reference,
    evaluate_quantized,
    evaluate_reference,
    min_bits,
    range_metadata,
)


def test_builtin_examples():
    assert evaluate_reference(builtin("arithmetic_mean", 2), [0.2, 0.4]) == pytest.approx(0.3)
    assert evaluate_reference(builtin("geometric_mean", 2), [0.25, 1.0]) == pytest.approx(0.5)
    assert evaluate_reference(builtin("euclidean_norm", 3), [0.6, 0.8, 0.0]) == pytest.approx(1.0)
    assert evaluate_reference(builtin("arithmetic_mean", 5), np.ones(5)) == pytest.approx(1.0)


def test_builtins_match_direct_formulas():
    s = derive_stream(0, SAMPLES, 10).uniform(1e-6, 1.0, (10**4, 4))
    assert np.allclose(evaluate_reference(builtin("arithmetic_mean", 4), s), s.mean(axis=1), rtol=0, atol=1e-12)
    assert np.allclose(
        evaluate_reference(builtin("geometric_mean", 4), s), np.prod(s, axis=1) ** 0.25, rtol=0, atol=1e-12
    )
    assert np.allclose(
        evaluate_reference(builtin("euclidean_norm", 4), s), np.linalg.norm(s, axis=1), rtol=0, atol=1e-12
    )


def test_builtin_errors():
    with pytest.raises(NotFoundError):
        builtin("harmonic_mean", 3)
    with pytest.raises(ValidationError):
        builtin("geometric_mean", 3, {"s_min": 0.0})
    with pytest.raises(ValidationError):
        builtin("geometric_mean", 3, {"s_min": 1.5})


def test_unary_wrapper():
    spec = NomographicSpec(name="cube", N=1, pre=(lambda s: s**3,), ranges=(UNIT_INTERVAL,), post=np.cbrt)
    assert evaluate_reference(spec, [0.5]) == pytest.approx(0.5)


def test_evaluate_reference_rejects_domain_violation():
    with pytest.raises(ValidationError):
        evaluate_reference(builtin("arithmetic_mean", 2), [0.5, 1.5])
    with pytest.raises(ValidationError):
        evaluate_reference(builtin("geometric_mean", 2), [0.0, 0.5])
    with pytest.raises(ValidationError):
        evaluate_reference(builtin("arithmetic_mean", 2), [0.5, 0.5, 0.5])


def test_declared_range_is_validated():
    with pytest.raises(ValidationError):
        NomographicSpec(name="bad", N=2, pre=(lambda s: 2 * s,) * 2, ranges=(UNIT_INTERVAL,) * 2, post=lambda g: g)


def test_range_metadata():
    assert tuple(range_metadata(builtin("arithmetic_mean", 3))) == (0.0, 1.0, 1.0, 0.0)
    assert tuple(range_metadata(builtin("euclidean_norm", 3))) == (0.0, 1.0, 1.0, 0.0)
    info = range_metadata(builtin("geometric_mean", 4, {"s_min": math.exp(-4.0)}))
    assert info.lo == pytest.approx(-4.0)
    assert info.hi == 0.0
    assert info.shift == pytest.approx(4.0)
    assert info.pi_max == pytest.approx(4.0)


def test_min_bits():
    assert min_bits(builtin("arithmetic_mean", 3)) == 1
    assert min_bits(builtin("geometric_mean", 3)) == 6


def test_quantized_mean_stays_within_bound():
    spec = builtin("arithmetic_mean", 5)
    s = derive_stream(1, SAMPLES, 5).random((2000, 5))
    error = np.abs(evaluate_quantized(spec, s, 11) - evaluate_reference(spec, s))
    assert error.max() < 2.0**-10


def test_corner_points():
    corners = corner_points(builtin("arithmetic_mean", 3).domain)
    assert corners.shape == (8, 3)
    assert {tuple(c) for c in corners} == {(a, b, c) for a in (0.0, 1.0) for b in (0.0, 1.0) for c in (0.0, 1.0)}
    assert corner_points([UNIT_INTERVAL] * 14).shape == (4096, 14)


def test_demo_superpositions_match_closed_forms():
    s = derive_stream(2, SAMPLES, 4).random((500, 4))
    spec = demo_superposition("mean_plus_product", 4)
    assert spec.J == 2
    assert np.allclose(evaluate_reference(spec, s), s.mean(axis=1) + np.prod(1 + s, axis=1), atol=1e-9)
    spec = demo_superposition("mean_product_cosine", 4)
    assert spec.J == 3
    expected = s.mean(axis=1) + np.prod(1 + s, axis=1) + np.cos(s).mean(axis=1)
    assert np.allclose(evaluate_reference(spec, s), expected, atol=1e-9)
    with pytest.raises(NotFoundError):
        demo_superposition("unknown", 4)


def test_superposition_branch_limit():
    identity = Branch(pre=(lambda s: s,), ranges=(UNIT_INTERVAL,), post=lambda g: g)
    KolmogorovSpec(name="three", N=1, branches=(identity,) * 3, reference=lambda s: 3 * s[..., 0])
    with pytest.raises(ValidationError):
        KolmogorovSpec(name="four", N=1, branches=(identity,) * 4, reference=lambda s: 4 * s[..., 0])


def test_superposition_reference_mismatch_is_rejected():
    identity = Branch(pre=(lambda s: s,) * 2, ranges=(UNIT_INTERVAL,) * 2, post=lambda g: g)
    with pytest.raises(ValidationError):
        KolmogorovSpec(name="off", N=2, branches=(identity,), reference=lambda s: s.sum(axis=-1) + 0.1)


def test_superposition_with_log_maps_on_a_domain_without_zero():
    low = 1e-3
    log_branch = Branch(pre=(np.log,) * 2, ranges=((math.log(low), 0.0),) * 2, post=np.exp)
    spec = KolmogorovSpec(
        name="product", N=2, branches=(log_branch,), reference=lambda s: np.prod(s, axis=-1),
        domain=((low, 1.0),) * 2,
    )
    s = derive_stream(5, SAMPLES, 2).uniform(low, 1.0, (200, 2))
    assert np.allclose(evaluate_reference(spec, s), s[:, 0] * s[:, 1], rtol=1e-12, atol=0)
    assert cluster_constants(ClusterTopology.single(2), spec, 0).tolist() == [0.0]
    with pytest.raises(ValidationError):
        cluster_constants(ClusterTopology(N=2, clusters=((0,), (1,))), spec, 0)


def test_cluster_constants():
    spec = demo_superposition("mean_product_cosine", 3)
    single = ClusterTopology.single(3)
    for j in range(spec.J):
        assert cluster_constants(single, spec, j).tolist() == [0.0]

    topology = ClusterTopology(N=3, clusters=((1, 2), (0, 1, 2)))
    assert cluster_constants(topology, spec, 0).tolist() == [0.0, 0.0]
    assert cluster_constants(topology, spec, 1).tolist() == [0.0, 0.0]
    assert cluster_constants(topology, spec, 2).tolist() == [1.0, 0.0]
    with pytest.raises(ValidationError):
        cluster_constants(topology, spec, 3)


def test_cluster_reference_pins_excluded_nodes_at_zero():
    spec = demo_superposition("mean_product_cosine", 3)
    topology = ClusterTopology(N=3, clusters=((1, 2), (0, 1, 2)))
    constants = [cluster_constants(topology, spec, j)[0] for j in range(spec.J)]
    s = derive_stream(3, SAMPLES, 6).random((200, 3))
    s[:, 0] = 0.0
    got = evaluate_cluster_reference(spec, (1, 2), s[:, 1:], constants)
    assert np.allclose(got, evaluate_reference(spec, s), atol=1e-12)


def test_alternate_post_set_changes_the_function():
    spec = demo_superposition("mean_plus_product", 3)
    s = derive_stream(4, SAMPLES, 2).random((50, 2))
    default = evaluate_cluster_reference(spec, (0, 1), s, [0.0, 0.0])
    alternate = evaluate_cluster_reference(spec, (0, 1), s, [0.0, 0.0], "alternate")
    assert not np.allclose(default, alternate)
    with pytest.raises(NotFoundError):
        branch_posts(spec, "missing")
