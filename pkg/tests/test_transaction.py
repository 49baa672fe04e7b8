import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from kinesim.errors import ConfigError, DomainError
from kinesim.rng import derive_rng
from kinesim.transaction import (
    BIN_RADIO,
    BIN_WORKLOAD,
    DOOR_WORKLOAD,
    EVENT_RADIO,
    FillCategory,
    LoRaConfig,
    RadioEnergyModel,
    SensorModel,
    WorkloadSpec,
    calibrate_radio,
    category_accuracy,
    fill_bucket,
    fill_category,
    payload_symbols,
    sense_with_error,
    time_on_air,
    transaction_energy,
    tx_energy,
)

# value computed once by oracles.bucket_accuracy() (adaptive quadrature)
BUCKET_ACCURACY = 0.8475299545865538

lora_cfgs = st.builds(
    lambda sf, bw, cr, pre, pl, crc, ldro, explicit: LoRaConfig(
        spreading_factor=sf,
        bandwidth=bw,
        coding_rate=cr,
        preamble_symbols=pre,
        payload_bytes=pl,
        explicit_header=explicit and sf != 6,
        crc_on=crc,
        low_data_rate_optimize=ldro and sf >= 11,
    ),
    st.integers(6, 12),
    st.sampled_from([125_000, 250_000, 500_000]),
    st.integers(1, 4),
    st.integers(6, 16),
    st.integers(0, 64),
    st.booleans(),
    st.booleans(),
    st.booleans(),
)


def _oracle(cfg):
    return oracles.lora_airtime(
        cfg.spreading_factor,
        cfg.bandwidth,
        cfg.coding_rate,
        cfg.payload_bytes,
        cfg.preamble_symbols,
        cfg.crc_on,
        not cfg.explicit_header,
        cfg.low_data_rate_optimize,
    )


def test_sf10_airtime():
    assert time_on_air(BIN_RADIO) == float(_oracle(BIN_RADIO))
    assert time_on_air(BIN_RADIO) == pytest.approx(0.29696, abs=1e-12)
    assert BIN_RADIO.symbol_time == pytest.approx(8.192e-3)


def test_sf6_airtime():
    assert time_on_air(EVENT_RADIO) == float(_oracle(EVENT_RADIO))
    assert time_on_air(EVENT_RADIO) == pytest.approx(0.01856, abs=1e-12)


def test_payload_floor():
    cfg = LoRaConfig(spreading_factor=12, payload_bytes=0, crc_on=False, explicit_header=False)
    assert payload_symbols(cfg) == 8


@settings(max_examples=200)
@given(lora_cfgs)
def test_airtime_matches_symbol_oracle(cfg):
    assert time_on_air(cfg) == pytest.approx(float(_oracle(cfg)), rel=1e-12)


def test_sf6_explicit_rejected():
    with pytest.raises(ConfigError):
        LoRaConfig(spreading_factor=6, explicit_header=True)


def test_bandwidth_rejected():
    with pytest.raises(ConfigError):
        LoRaConfig(bandwidth=100_000)


@given(lora_cfgs, st.integers(0, 200))
def test_airtime_nondecreasing_in_payload(cfg, extra):
    bigger = LoRaConfig(**{**cfg.__dict__, "payload_bytes": cfg.payload_bytes + extra})
    assert time_on_air(bigger) >= time_on_air(cfg)


@given(st.integers(1, 4), st.integers(0, 64), st.booleans(), st.booleans())
def test_airtime_increasing_in_sf(cr, pl, crc, explicit):
    toas = [
        time_on_air(LoRaConfig(spreading_factor=sf, coding_rate=cr, payload_bytes=pl, crc_on=crc, explicit_header=explicit))
        for sf in range(7, 13)
    ]
    assert all(a < b for a, b in zip(toas, toas[1:]))


def test_calibrate_radio_examples():
    radio = calibrate_radio(57.5e-3, BIN_RADIO)
    assert radio.effective_tx_power == pytest.approx(0.1936, abs=1e-4)
    one_watt = calibrate_radio(time_on_air(EVENT_RADIO), EVENT_RADIO)
    assert one_watt.effective_tx_power == pytest.approx(1.0, rel=1e-15)


@given(lora_cfgs, st.floats(1e-6, 1.0))
def test_calibrate_inverse(cfg, energy):
    assert tx_energy(cfg, calibrate_radio(energy, cfg)) == pytest.approx(energy, rel=1e-12)


def test_tx_energy_examples():
    radio = calibrate_radio(57.5e-3, BIN_RADIO)
    assert tx_energy(BIN_RADIO, radio) == pytest.approx(57.5e-3)
    assert tx_energy(EVENT_RADIO, radio) == pytest.approx(3.59e-3, abs=5e-6)
    assert time_on_air(EVENT_RADIO) > EVENT_RADIO.preamble_symbols * EVENT_RADIO.symbol_time > 0


def test_radio_model_positive():
    with pytest.raises(DomainError):
        RadioEnergyModel(0.0)


def test_transaction_energy_examples():
    radio = calibrate_radio(57.5e-3, BIN_RADIO)
    assert transaction_energy(BIN_WORKLOAD, radio) == pytest.approx(60.95e-3)
    assert transaction_energy(DOOR_WORKLOAD, radio) == pytest.approx(4.04e-3, abs=5e-6)
    bare = WorkloadSpec((), EVENT_RADIO, "door_sf6")
    assert transaction_energy(bare, radio) == tx_energy(EVENT_RADIO, radio)


def test_bin_variant_needs_sensing_phase():
    with pytest.raises(ConfigError):
        WorkloadSpec((("boot", 0.45e-3),), BIN_RADIO, "bin_sf10")


def test_negative_phase_rejected():
    with pytest.raises(ConfigError):
        WorkloadSpec((("boot", -1.0),), EVENT_RADIO, "door_sf6")


def test_dual_capture_two_packets():
    spec = WorkloadSpec((("boot", 0.45e-3),), EVENT_RADIO, "cabinet_dual")
    assert spec.packets_per_access == 2
    radio = calibrate_radio(57.5e-3, BIN_RADIO)
    # per-packet energy, each motion powers its own packet
    assert transaction_energy(spec, radio) == pytest.approx(transaction_energy(DOOR_WORKLOAD, radio))


@given(st.lists(st.floats(0, 0.05), min_size=1, max_size=6), st.randoms())
def test_transaction_energy_permutation_invariant(energies, rnd):
    radio = RadioEnergyModel(0.2)
    phases = [(f"p{i}", e) for i, e in enumerate(energies)]
    shuffled = phases[:]
    rnd.shuffle(shuffled)
    a = transaction_energy(WorkloadSpec(tuple(phases), EVENT_RADIO, "door_sf6"), radio)
    b = transaction_energy(WorkloadSpec(tuple(shuffled), EVENT_RADIO, "door_sf6"), radio)
    assert a == pytest.approx(b, rel=1e-15)
    assert a == pytest.approx(sum(energies) + tx_energy(EVENT_RADIO, radio), rel=1e-12)


def test_fill_category_examples():
    s = SensorModel()
    assert fill_category(500, s) is FillCategory.EMPTY
    assert fill_category(0, s) is FillCategory.FULL
    assert fill_category(260, s) is FillCategory.HALF
    assert fill_category(900, s) is FillCategory.EMPTY
    assert len(FillCategory) == 5


def test_fill_category_rejects_negative():
    with pytest.raises(DomainError):
        fill_category(-1, SensorModel())


@pytest.mark.parametrize("depth", [500.0, 430.0, 1000.0, 333.3])
def test_bucket_edges_exact(depth):
    width = depth / 5
    for k in range(1, 5):
        edge = k * width
        assert fill_bucket(edge, depth) == k
        assert fill_bucket(np.nextafter(edge, 0), depth) == k - 1
    assert fill_bucket(depth, depth) == 4


def test_bucket_edges_multiples_of_100():
    s = SensorModel(usable_depth=500)
    changes = [f for f in range(0, 501) if f > 0 and fill_bucket(f, 500) != fill_bucket(f - 1e-9, 500)]
    assert changes == [100, 200, 300, 400]
    assert fill_category(400, s) is FillCategory.QUARTER


@given(st.floats(0, 500), st.floats(0, 500))
def test_bucket_step_function(a, b):
    lo, hi = sorted((a, b))
    assert fill_bucket(lo, 500) <= fill_bucket(hi, 500)
    assert fill_bucket(lo, 500) == min(4, int(lo // 100)) or lo % 100 == 0


def test_sense_without_error():
    s = SensorModel(abs_error_mean=0.0, abs_error_sd=0.0)
    assert sense_with_error(123.4, s, derive_rng(0)) == 123.4


def test_error_moments():
    s = SensorModel(usable_depth=1e9)
    rng = derive_rng(10, "sensor")
    truth = 5e8
    err = np.array([sense_with_error(truth, s, rng) - truth for _ in range(100_000)])
    assert np.abs(err).mean() == pytest.approx(19.08, abs=0.3)
    assert np.abs(err).std() == pytest.approx(15.9, abs=0.3)
    assert abs(np.mean(err > 0) - 0.5) < 0.01


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_category_accuracy_matches_quadrature(seed):
    acc = category_accuracy(SensorModel(), 20_000, derive_rng(seed, "accuracy"))
    assert acc == pytest.approx(BUCKET_ACCURACY, abs=0.01)


def test_quadrature_oracle_value():
    assert oracles.bucket_accuracy() == pytest.approx(BUCKET_ACCURACY, rel=1e-9)
