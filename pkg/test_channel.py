import math

import numpy as np
import pytest
from pydantic import ValidationError as PydanticValidationError

from src.core.exceptions import ValidationError
from src.services.channel import (
    ChannelConfig,
    ClusterTopology,
    active_nodes,
    check_power,
    make_topology,
    noise_stream,
    tdma_schedule,
    transmit,
    transmit_batch,
    transmit_noiseless,
)

RING = ((0, 1, 2), (2, 3, 4), (4, 5, 6), (6, 7, 0))


def test_topology_normalises_and_reports_common_nodes():
    topology = ClusterTopology(N=8, clusters=((2, 1, 0), (2, 3, 4), (4, 5, 6), (6, 7, 0)))
    assert topology.clusters[0] == (0, 1, 2)
    assert topology.L == 4
    assert topology.sizes == [3, 3, 3, 3]
    assert topology.common_nodes == [0, 2, 4, 6]


def test_topology_validation():
    with pytest.raises(PydanticValidationError):
        ClusterTopology(N=3, clusters=((0, 1),))
    with pytest.raises(PydanticValidationError):
        ClusterTopology(N=3, clusters=((0, 1, 3),))
    with pytest.raises(PydanticValidationError):
        ClusterTopology(N=2, clusters=((0, 0, 1),))
    with pytest.raises(ValidationError):
        make_topology(3, [[0, 1]])
    assert make_topology(4).clusters == ((0, 1, 2, 3),)


def test_channel_config():
    config = ChannelConfig(P=2.0, sigma_z2=0.2, n=4)
    assert config.snr == pytest.approx(10.0)
    assert config.snr_db == pytest.approx(10.0)
    assert config.at_snr_db(20.0).sigma_z2 == pytest.approx(0.02)
    assert math.isinf(ChannelConfig(P=1.0, sigma_z2=0.0, n=1).snr)
    with pytest.raises(PydanticValidationError):
        ChannelConfig(P=0.0, sigma_z2=1.0, n=4)
    with pytest.raises(PydanticValidationError):
        ChannelConfig(P=1.0, sigma_z2=1.0, n=4, gain=0.5)


def test_noiseless_transmission_is_the_exact_sum():
    config = ChannelConfig(P=1.0, sigma_z2=0.0, n=3)
    signals = np.array([[1.0, 2.0, 3.0], [0.5, -2.0, 1.0]])
    assert transmit(signals, config, noise_stream(0, 0, 0, 0)).tolist() == [1.5, 0.0, 4.0]
    assert transmit_noiseless(signals[:1] - signals[:1], config).tolist() == [0.0, 0.0, 0.0]


def test_opposite_signals_leave_pure_noise():
    config = ChannelConfig(P=1.0, sigma_z2=0.5, n=8)
    x = np.linspace(-1, 1, 8)
    y = transmit([x, -x], config, noise_stream(3, 0, 0, 0))
    z = transmit(np.zeros(8), config, noise_stream(3, 0, 0, 0))
    assert np.allclose(y, z)


def test_noise_variance_calibration():
    sigma_z2 = 0.37
    config = ChannelConfig(P=1.0, sigma_z2=sigma_z2, n=10**6)
    y = transmit(np.zeros(10**6), config, noise_stream(11, 2, 1, 0))
    assert np.var(y) == pytest.approx(sigma_z2, rel=0.01)


def test_noise_streams_are_reproducible_and_distinct():
    a = noise_stream(5, 0, 0, 7).standard_normal(16)
    assert np.array_equal(a, noise_stream(5, 0, 0, 7).standard_normal(16))
    assert not np.array_equal(a, noise_stream(5, 1, 0, 7).standard_normal(16))
    assert not np.array_equal(a, noise_stream(5, 0, 1, 7).standard_normal(16))


def test_superposition_linearity_with_replayed_noise():
    config = ChannelConfig(P=1.0, sigma_z2=1.0, n=5)
    a = np.arange(5.0)
    b = np.ones(5)
    lhs = transmit(a, config, noise_stream(1, 0, 0, 0)) + transmit_noiseless(b, config)
    rhs = transmit_noiseless([a, b], config) + (transmit(np.zeros(5), config, noise_stream(1, 0, 0, 0)))
    assert np.allclose(lhs, rhs)


def test_batched_transmission_matches_per_trial_transmission():
    config = ChannelConfig(P=1.0, sigma_z2=0.5, n=4)
    signals = np.arange(24.0).reshape(2, 3, 4)
    y = transmit_batch(signals, config, [noise_stream(3, 1, 2, t) for t in (5, 6)])
    assert y.shape == (2, 4)
    for b, t in enumerate((5, 6)):
        assert np.allclose(y[b], transmit(signals[b], config, noise_stream(3, 1, 2, t)))

    quiet = config.model_copy(update={"sigma_z2": 0.0})
    y = transmit_batch(signals, quiet, [noise_stream(3, 1, 2, t) for t in (5, 6)])
    assert np.array_equal(y, signals.sum(axis=1))


def test_length_mismatch_is_rejected():
    config = ChannelConfig(P=1.0, sigma_z2=1.0, n=4)
    with pytest.raises(ValidationError):
        transmit_noiseless(np.zeros(3), config)
    with pytest.raises(ValidationError):
        check_power(np.zeros(3), config)
    with pytest.raises(ValidationError):
        transmit_batch(np.zeros((2, 3, 3)), config, [noise_stream(0, 0, 0, t) for t in range(2)])
    with pytest.raises(ValidationError):
        transmit_batch(np.zeros((2, 3, 4)), config, [noise_stream(0, 0, 0, 0)])


def test_check_power():
    config = ChannelConfig(P=1.0, sigma_z2=1.0, n=4)
    assert check_power(np.zeros(4), config)
    assert check_power(np.ones(4), config)
    assert not check_power(np.full(4, 1.1), config)


def test_tdma_schedule():
    single = tdma_schedule(ClusterTopology.single(5))
    assert single.num_slots == 1
    assert single.merge_opportunities == ()

    ring = ClusterTopology(N=8, clusters=RING)
    schedule = tdma_schedule(ring)
    assert schedule.slots == (0, 1, 2, 3)
    assert schedule.merge_opportunities == ((0, 2), (1, 3))
    assert active_nodes(ring, schedule, 3) == (0, 6, 7)
    assert [schedule.slot_of(ell) for ell in range(4)] == [0, 1, 2, 3]
    with pytest.raises(ValidationError):
        schedule.slot_of(4)

    overlapping = ClusterTopology(N=3, clusters=((0, 1), (1, 2), (0, 1, 2)))
    assert tdma_schedule(overlapping).merge_opportunities == ()
