import math

import numpy as np
import pytest

from fsqkd import _kernels
from fsqkd.channel import (
    Cause,
    Outcome,
    PulseRecord,
    draw_eta_system,
    draw_photon_count,
    simulate_channel,
    transmit_pulse,
)
from fsqkd.core import BIT_TO_STATE
from fsqkd.params import ProtocolParams
from fsqkd.rng import stream

QUIET = dict(background_prob_per_gate=0.0, dark_count_rate_hz=0.0)


class TestPhotonStatistics:
    def test_sample_mean_tracks_nbar(self):
        counts = draw_photon_count(0.5, stream(3, "poisson"), size=1_000_000)
        assert 0.495 <= counts.mean() <= 0.505

    def test_nonzero_probability_matches_poisson(self):
        counts = draw_photon_count(0.2, stream(4, "poisson"), size=1_000_000)
        p_nonzero = np.count_nonzero(counts) / len(counts)
        assert abs(p_nonzero - (1.0 - math.exp(-0.2))) < 0.002

    def test_vanishing_mean_gives_zeros(self):
        counts = draw_photon_count(1e-9, stream(5, "poisson"), size=100_000)
        assert np.count_nonzero(counts) <= 3

    def test_negative_mean_rejected(self):
        with pytest.raises(ValueError):
            draw_photon_count(-0.1, stream(6, "poisson"))


class TestEtaSystem:
    def test_zero_sigma_is_degenerate(self):
        params = ProtocolParams(eta_system_sigma=0.0)
        rng = stream(7, "eta")
        assert all(draw_eta_system(params, rng) == 0.13 for _ in range(10))

    def test_moments(self):
        params = ProtocolParams()
        rng = stream(8, "eta")
        draws = np.array([draw_eta_system(params, rng) for _ in range(10_000)])
        assert abs(draws.mean() - 0.13) < 0.005
        assert abs(draws.std() - 0.04) < 0.01

    def test_clamped_to_unit_interval(self):
        params = ProtocolParams(eta_system_mean=0.05, eta_system_sigma=0.5)
        rng = stream(9, "eta")
        draws = np.array([draw_eta_system(params, rng) for _ in range(2_000)])
        assert draws.min() >= 0.0 and draws.max() <= 1.0


class _ReplayRng:
    """Replays a fixed uniform sequence; stands in for a Generator."""

    def __init__(self, values):
        self.values = list(values)

    def random(self, size=None):
        if size is None:
            return self.values.pop(0)
        if isinstance(size, tuple):
            total = int(np.prod(size))
            out = np.array([self.values.pop(0) for _ in range(total)])
            return out.reshape(size)
        return np.array([self.values.pop(0) for _ in range(size)])


class TestTransmitPulse:
    def test_empty_pulse_quiet_gate_is_none(self):
        params = ProtocolParams(**QUIET)
        pulse = PulseRecord(tick=0, alice_bit=0, sent_state=BIT_TO_STATE[0], photon_count=0)
        event = transmit_pulse(pulse, params, 1.0, stream(1, "t"))
        assert event.outcome is Outcome.NONE
        assert event.cause is Cause.NA

    def test_vertical_photon_blocked_by_h_analyzer(self):
        # route draw 0.9 sends the photon down the horizontal-analysis path,
        # orthogonal to |V>; with no misalignment nothing can fire
        params = ProtocolParams(optical_error_prob=0.0, **QUIET)
        pulse = PulseRecord(tick=5, alice_bit=1, sent_state=BIT_TO_STATE[1], photon_count=1)
        rng = _ReplayRng([0.0, 0.9, 0.0, 0.0, 0.99, 0.99])
        event = transmit_pulse(pulse, params, 1.0, rng)
        assert event.outcome is Outcome.NONE

    def test_matching_analyzer_fires_and_assigns_bit(self):
        params = ProtocolParams(optical_error_prob=0.0, **QUIET)
        pulse = PulseRecord(tick=5, alice_bit=1, sent_state=BIT_TO_STATE[1], photon_count=1)
        # survive, route to the -45 path (u < 0.5), pass projection
        rng = _ReplayRng([0.0, 0.1, 0.2, 0.9, 0.99, 0.99])
        event = transmit_pulse(pulse, params, 1.0, rng)
        assert event.outcome is Outcome.BIT1
        assert event.cause is Cause.SIGNAL

    def test_eta_out_of_range_rejected(self):
        params = ProtocolParams()
        pulse = PulseRecord(tick=0, alice_bit=0, sent_state=BIT_TO_STATE[0], photon_count=1)
        with pytest.raises(ValueError):
            transmit_pulse(pulse, params, 1.5, stream(1, "t"))


def _random_kernel_inputs(seed, n=50_000, nbar=0.5):
    rng = np.random.default_rng(seed)
    bits = rng.integers(0, 2, n).astype(np.uint8)
    counts = rng.poisson(nbar, n).astype(np.int64)
    offsets = np.zeros(n, dtype=np.int64)
    np.cumsum(counts[:-1], out=offsets[1:])
    total = int(counts.sum())
    u = rng.random((4, total))
    noise = rng.random((2, n))
    return (bits, counts, offsets,
            np.ascontiguousarray(u[0]), np.ascontiguousarray(u[1]),
            np.ascontiguousarray(u[2]), np.ascontiguousarray(u[3]),
            np.ascontiguousarray(noise[0]), np.ascontiguousarray(noise[1]),
            0.13, 3.35e-4, 7e-6, 0.019)


class TestKernelBackends:
    def test_numpy_and_numba_agree(self):
        if _kernels._channel_outcomes_jit is None:
            pytest.skip("numba backend unavailable")
        for seed in (0, 1, 2):
            args = _random_kernel_inputs(seed)
            o_nb, c_nb = _kernels.channel_outcomes_numba(*args)
            o_np, c_np = _kernels.channel_outcomes_numpy(*args)
            assert np.array_equal(o_nb, o_np)
            assert np.array_equal(c_nb, c_np)

    def test_batch_matches_per_pulse_reference(self):
        # feed the identical uniforms through the one-pulse reference path
        params = ProtocolParams()
        n = 2_000
        rng = np.random.default_rng(11)
        bits = rng.integers(0, 2, n).astype(np.uint8)
        counts = rng.poisson(0.6, n).astype(np.int64)
        offsets = np.zeros(n, dtype=np.int64)
        np.cumsum(counts[:-1], out=offsets[1:])
        total = int(counts.sum())
        u = rng.random((4, total))
        noise = rng.random((2, n))
        outcomes, causes = _kernels.channel_outcomes(
            bits, counts, offsets,
            np.ascontiguousarray(u[0]), np.ascontiguousarray(u[1]),
            np.ascontiguousarray(u[2]), np.ascontiguousarray(u[3]),
            np.ascontiguousarray(noise[0]), np.ascontiguousarray(noise[1]),
            0.13, params.background_prob_per_gate / 2,
            params.dark_prob_per_gate, params.optical_error_prob)
        for i in range(n):
            seq = []
            for j in range(offsets[i], offsets[i] + counts[i]):
                seq += [u[0][j], u[1][j], u[2][j], u[3][j]]
            seq += [noise[0][i], noise[1][i]]
            pulse = PulseRecord(tick=i, alice_bit=int(bits[i]),
                                sent_state=BIT_TO_STATE[int(bits[i])],
                                photon_count=int(counts[i]))
            event = transmit_pulse(pulse, params, 0.13, _ReplayRng(seq))
            assert int(event.outcome) == outcomes[i]
            assert int(event.cause) == causes[i]


class TestChannelStatistics:
    def test_detection_fraction_noise_off(self):
        # pure signal: conclusive fraction converges on 1 - exp(-nbar/4 * eta)
        params = ProtocolParams(mean_photon_number=0.5, **QUIET)
        bits = stream(21, "bits").integers(0, 2, 1_000_000).astype(np.uint8)
        run = simulate_channel(bits, params, seed=21, block_size=100_000,
                               eta_system_override=0.13)
        frac = np.count_nonzero(run.detections.conclusive_mask()) / len(bits)
        expected = 1.0 - math.exp(-0.25 * 0.13 * 0.5)
        sigma = math.sqrt(expected * (1 - expected) / len(bits))
        assert abs(frac - expected) < 3 * sigma

    def test_detection_fraction_with_defaults(self):
        params = ProtocolParams(mean_photon_number=0.5)
        bits = stream(22, "bits").integers(0, 2, 4_000_000).astype(np.uint8)
        run = simulate_channel(bits, params, seed=22, block_size=100_000,
                               eta_system_override=0.13)
        frac = np.count_nonzero(run.detections.conclusive_mask()) / len(bits)
        p_b = 1.0 - math.exp(-0.25 * 0.13 * 0.5)
        assert abs(frac - p_b) / p_b < 0.05

    def test_conclusive_bits_error_free_without_noise(self):
        params = ProtocolParams(mean_photon_number=0.5, optical_error_prob=0.0, **QUIET)
        bits = stream(23, "bits").integers(0, 2, 300_000).astype(np.uint8)
        run = simulate_channel(bits, params, seed=23, block_size=100_000)
        det = run.detections
        inferred = det.conclusive_bits()
        truth = bits[det.conclusive_ticks()]
        assert len(inferred) > 0
        assert np.array_equal(inferred, truth)

    def test_background_only_rates_and_ber(self):
        params = ProtocolParams(mean_photon_number=0.0)
        n = 4_000_000
        bits = stream(24, "bits").integers(0, 2, n).astype(np.uint8)
        run = simulate_channel(bits, params, seed=24, block_size=200_000)
        det = run.detections
        per_detector = params.background_prob_per_gate / 2 + params.dark_prob_per_gate
        for outcome in (Outcome.BIT0, Outcome.BIT1):
            fired = np.count_nonzero(det.outcomes == outcome) / n
            sigma = math.sqrt(per_detector / n)
            assert abs(fired - per_detector) < 4 * sigma
        inferred = det.conclusive_bits()
        truth = bits[det.conclusive_ticks()]
        ber = np.count_nonzero(inferred != truth) / len(inferred)
        assert abs(ber - 0.5) < 4 * math.sqrt(0.25 / len(inferred))

    def test_dual_fire_rate_monotone_in_nbar(self):
        rates = []
        n = 12_000_000
        for nbar in (0.2, 0.35, 0.5):
            params = ProtocolParams(mean_photon_number=nbar)
            bits = stream(25, f"bits{nbar}").integers(0, 2, n).astype(np.uint8)
            run = simulate_channel(bits, params, seed=25, block_size=400_000,
                                   eta_system_override=0.13)
            rates.append(run.detections.dual_fire_count() / n)
        assert rates[0] < rates[1] < rates[2]

    def test_photon_count_override(self):
        params = ProtocolParams(**QUIET)
        bits = stream(26, "bits").integers(0, 2, 100_000).astype(np.uint8)
        run = simulate_channel(bits, params, seed=26, block_size=50_000,
                               photon_count_override=1, eta_system_override=1.0)
        frac = np.count_nonzero(run.detections.conclusive_mask()) / len(bits)
        assert abs(frac - 0.25) < 0.01
