import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evoxel.snn import (
    GenomeError,
    NetParams,
    OutputMode,
    SNNController,
    SpikyNet,
    SpikyNode,
    genome_decode,
    genome_encode,
    node_compute,
    read_genome,
    write_genome,
)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


@settings(max_examples=200)
@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(0.01, 0.99))
def test_leak_matches_closed_form(w, x, decay):
    # a threshold out of reach: the potential is a pure leaky sum
    node = SpikyNode([w], bias=1e12, decay=decay)
    s = w * x
    for t in range(1, 101):
        node_compute(node, [x])
        expected = s * (1 - (1 - decay) ** t) / decay
        assert node.potential == pytest.approx(expected, rel=1e-12, abs=1e-12)


def test_default_decay_closed_form():
    node = SpikyNode([0.5, 0.25], bias=1e9)
    for t in range(1, 101):
        node.compute([1.0, 2.0])
        assert abs(node.potential - 1.0 * (1 - 0.9**t) / 0.1) < 1e-12


def test_fires_at_threshold_and_resets():
    node = SpikyNode([1.0], bias=2.5)
    out = [node.compute([1.0]) for _ in range(6)]
    # potentials 1, 1.9, 2.71 -> fire, then 1, 1.9, 2.71 -> fire
    assert out == [0, 0, 1, 0, 0, 1]
    assert node.potential == 0.0


def test_zero_node_fires_every_tick():
    node = SpikyNode([0.0, 0.0], bias=0.0)
    assert all(node.compute([0.3, 0.7]) == 1.0 for _ in range(20))
    assert node.duty_cycle() == 1.0


def test_fire_log_window():
    node = SpikyNode([1.0], bias=2.5)
    for _ in range(30):
        node.compute([1.0])
    assert len(node.fire_log) == 10
    assert node.duty_cycle() == pytest.approx(sum(node.fire_log) / 10)
    node.reset()
    assert node.potential == 0.0 and node.duty_cycle() == 0.0


def test_node_input_length_checked():
    with pytest.raises(ValueError):
        SpikyNode([1.0, 2.0], 0.0).compute([1.0])


def test_zero_genome_expands_everything():
    ctrl = SNNController.from_genome(np.zeros(72), 8)
    for _ in range(10):
        np.testing.assert_array_equal(ctrl.step(np.ones((8, 2))), np.full(8, 1.6))


def test_silent_genome_contracts_everything(silent_genome):
    ctrl = SNNController.from_genome(silent_genome, 8)
    for _ in range(10):
        np.testing.assert_array_equal(ctrl.step(np.ones((8, 2))), np.full(8, 0.6))


def test_duty_cycle_mode_range():
    rng = np.random.default_rng(1)
    ctrl = SNNController.from_genome(rng.normal(size=72), 8, OutputMode.DUTY_CYCLE)
    for _ in range(50):
        a = ctrl.step(rng.uniform(0.5, 1.5, (8, 2)))
        assert np.all((a >= 0.6) & (a <= 1.6))


def test_duty_cycle_mode_of_zero_net_ramps_up():
    net = SpikyNet(NetParams.from_flat(np.zeros(9)))
    out = [net.compute((1.0, 1.0), OutputMode.DUTY_CYCLE) for _ in range(12)]
    assert out[:10] == pytest.approx([0.6 + 0.1 * (k + 1) for k in range(10)])
    assert out[10:] == pytest.approx([1.6, 1.6])


def test_genome_layout():
    g = np.arange(18, dtype=float)
    nets = genome_decode(g, 2)
    assert nets[1].hidden_weights == ((9.0, 10.0), (12.0, 13.0))
    assert nets[1].hidden_bias == (11.0, 14.0)
    assert nets[1].output_weights == (15.0, 16.0)
    assert nets[1].output_bias == 17.0


def test_genome_round_trip_1000():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        n = int(rng.integers(1, 12))
        g = rng.normal(scale=10, size=9 * n)
        np.testing.assert_array_equal(genome_encode(genome_decode(g, n)), g)


@settings(max_examples=200)
@given(st.integers(1, 10).flatmap(lambda n: st.lists(finite, min_size=9 * n, max_size=9 * n)))
def test_genome_round_trip_property(values):
    g = np.array(values)
    np.testing.assert_array_equal(genome_encode(genome_decode(g, len(g) // 9)), g)


@pytest.mark.parametrize("length", [0, 71, 73, 81])
def test_genome_length_mismatch(length):
    with pytest.raises(GenomeError):
        genome_decode(np.zeros(length), 8)


def test_controller_reset_replays_identically():
    rng = np.random.default_rng(5)
    ctrl = SNNController.from_genome(rng.normal(size=72), 8)
    inputs = rng.uniform(0.5, 1.5, (40, 8, 2))
    first = [ctrl.step(x) for x in inputs]
    ctrl.reset()
    second = [ctrl.step(x) for x in inputs]
    np.testing.assert_array_equal(first, second)


def test_controller_genome_and_telemetry_checks():
    g = np.random.default_rng(9).normal(size=72)
    ctrl = SNNController.from_genome(g, 8)
    np.testing.assert_array_equal(ctrl.genome(), g)
    with pytest.raises(ValueError):
        ctrl.step(np.ones((7, 2)))


@settings(max_examples=50)
@given(st.lists(st.floats(allow_nan=False, allow_infinity=False), min_size=1, max_size=90))
def test_genome_file_round_trip(tmp_path_factory, values):
    p = tmp_path_factory.mktemp("g") / "genome.csv"
    write_genome(p, values)
    np.testing.assert_array_equal(read_genome(p), np.array(values, dtype=float))


def test_read_genome_errors(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("1,2\n3,4\n")
    with pytest.raises(GenomeError):
        read_genome(p)
    p.write_text("1,abc\n")
    with pytest.raises(GenomeError):
        read_genome(p)
