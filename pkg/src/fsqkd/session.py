"""End-to-end key-generation sessions: both engines and the session report.

Bob hosts the simulated optical channel (both modes derive Alice's raw
bits from the session seed exchanged at Hello, so no key material crosses
the public channel), receives detections, drives estimation, acts as the
error-correction reference, and chooses the privacy-amplification plan.
Alice mirrors each phase and independently recomputes the plan; any
disagreement aborts the session.

Per-phase message flow (strictly turn-based)::

    A->B Hello           B->A Hello(seed)
    B->A SiftIndices
    B->A SampleRequest   A->B SampleReveal
    per pass: B->A ShuffleSeed, BlockParity; A<->B Syndrome queries/replies
    B->A VerifyHash      A->B VerifyHash
    B->A PaSeed          A->B Done   B->A Done
"""

from __future__ import annotations

import concurrent.futures
import hashlib
import time
from dataclasses import dataclass, field, fields

import numpy as np

from .channel import Cause, simulate_channel
from .core import KeyBuffer, Stage
from .messages import Done, Hello, Kind, PaSeed, SiftIndices, PROTOCOL_VERSION
from .params import ProtocolParams
from .privacy import PaPlan, compress, plan_output_length
from .protocol import AliceSession, alice_generate, bob_receive, sift
from .reconciliation import (
    ReconConfig,
    ReconOutcome,
    estimate_ber_alice,
    estimate_ber_bob,
    reconcile,
    shannon_leak_per_bit,
)
from .rng import draw_seed, stream
from .transport import Endpoint, SessionAborted, loopback_pair


@dataclass(frozen=True)
class SessionConfig:
    """Run-level knobs shared by both parties."""

    pulses: int = 1_000_000
    block_size: int = 50_000
    recon: ReconConfig = field(default_factory=ReconConfig)
    photon_count_override: int | None = None
    eta_system_override: float | None = None
    timeout_s: float = 30.0
    protocol_version: int = PROTOCOL_VERSION

    def __post_init__(self) -> None:
        if self.pulses < 1:
            raise ValueError("pulses must be at least 1")
        if self.block_size < 1:
            raise ValueError("block_size must be at least 1")


def session_digest(params: ProtocolParams, cfg: SessionConfig) -> bytes:
    canon = (
        params.digest().hex()
        + f";pulses={cfg.pulses};block={cfg.block_size}"
        + f";sample={cfg.recon.sample_fraction!r};passes={cfg.recon.passes}"
        + f";hash={cfg.recon.hash_bits};pco={cfg.photon_count_override}"
        + f";eso={cfg.eta_system_override!r}"
    )
    return hashlib.blake2s(canon.encode(), digest_size=16).digest()


def session_hex(params: ProtocolParams, cfg: SessionConfig, seed: int) -> str:
    raw = hashlib.blake2s(
        b"fsqkd-session" + int(seed).to_bytes(8, "big") + session_digest(params, cfg),
        digest_size=16,
    ).digest()
    return raw.hex()


def _derive_alice_bits(params: ProtocolParams, cfg: SessionConfig, seed: int) -> np.ndarray:
    chunks = []
    for b, start in enumerate(range(0, cfg.pulses, cfg.block_size)):
        n = min(cfg.block_size, cfg.pulses - start)
        session = alice_generate(params, n, stream(seed, f"alice-bits/{b}"))
        chunks.append(session.raw.bits)
    return np.concatenate(chunks)


@dataclass
class SessionReport:
    """Deterministic aggregate of one run; wall clock stays out of it."""

    session: str = ""
    role: str = ""
    protocol_version: int = PROTOCOL_VERSION
    seed: int = 0
    pulses: int = 0
    block_size: int = 0
    blocks: int = 0
    clock_rate_hz: float = 0.0
    mean_photon_number: float = 0.0
    eta_q: float = 0.0
    eta_system_mean: float = 0.0
    eta_system_sigma: float = 0.0
    gate_width_s: float = 0.0
    background_prob_per_gate: float = 0.0
    dark_count_rate_hz: float = 0.0
    optical_error_prob: float = 0.0
    sifted_len: int = 0
    sampled_bits: int = 0
    corrected_len: int = 0
    secret_len: int = 0
    est_errors: int = 0
    est_sample: int = 0
    est_ber: float = 0.0
    ec_disclosed_bits: int = 0
    disclosed_bits: int = 0
    recon_efficiency: float = 0.0
    recon_passes: int = 0
    recon_flips: int = -1
    hash_bits: int = 0
    hash_rounds: int = 0
    hash_disclosed_bits: int = 0
    verified: bool = False
    true_ber: float = -1.0
    true_errors: int = -1
    errors_signal: int = -1
    errors_background: int = -1
    errors_dark: int = -1
    errors_mixed: int = -1
    sifted_signal: int = -1
    sifted_background: int = -1
    sifted_dark: int = -1
    sifted_mixed: int = -1
    ber_signal_component: float = -1.0
    ber_background_component: float = -1.0
    ber_dark_component: float = -1.0
    ber_mixed_component: float = -1.0
    dual_fires: int = -1
    dual_per_gate: float = -1.0
    dual_per_detection: float = -1.0
    secret_per_sifted: float = 0.0
    secret_per_pulse: float = 0.0
    no_yield: bool = False

    def validate_chain(self) -> None:
        if not (self.secret_len <= self.corrected_len <= self.sifted_len <= self.pulses):
            raise AssertionError("length chain violated: secret <= corrected <= sifted <= pulses")

    def to_kv(self) -> str:
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, bool):
                value = int(value)
            elif isinstance(value, float):
                value = repr(value)
            lines.append(f"{f.name}={value}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_kv(cls, text: str) -> "SessionReport":
        raw = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            raw[key] = value
        kwargs = {}
        for f in fields(cls):
            if f.name not in raw:
                continue
            if f.type in ("int", int):
                kwargs[f.name] = int(raw[f.name])
            elif f.type in ("float", float):
                kwargs[f.name] = float(raw[f.name])
            elif f.type in ("bool", bool):
                kwargs[f.name] = bool(int(raw[f.name]))
            else:
                kwargs[f.name] = raw[f.name]
        return cls(**kwargs)

    def to_text(self) -> str:
        """Human-readable summary."""
        out = []
        out.append(f"session {self.session} ({self.role}), seed {self.seed}")
        out.append(f"  pulses sent          {self.pulses} in {self.blocks} blocks of {self.block_size}")
        out.append(f"  nbar / eta_system    {self.mean_photon_number} / "
                   f"{self.eta_system_mean} +- {self.eta_system_sigma}")
        out.append(f"  sifted / corrected / secret  {self.sifted_len} / {self.corrected_len} / {self.secret_len}")
        out.append(f"  estimated BER        {self.est_ber:.4f} ({self.est_errors}/{self.est_sample} sampled)")
        if self.true_ber >= 0:
            out.append(f"  simulation-truth BER {self.true_ber:.4f} "
                       f"(background {self.ber_background_component:.4f}, "
                       f"optical {self.ber_signal_component:.4f}, "
                       f"dark {self.ber_dark_component:.4f}, "
                       f"mixed {self.ber_mixed_component:.4f})")
            out.append(f"  dual fires           {self.dual_fires} "
                       f"({self.dual_per_gate:.3g}/gate, {self.dual_per_detection:.3g}/detection)")
        out.append(f"  disclosed bits       {self.disclosed_bits} "
                   f"(correction {self.ec_disclosed_bits}, sampling {self.sampled_bits}; "
                   f"hash {self.hash_disclosed_bits} counted separately)")
        eff = self.recon_efficiency
        eff_text = f"{eff:.3f}" if np.isfinite(eff) else "n/a"
        out.append(f"  reconciliation       {self.recon_passes} passes, efficiency {eff_text}, "
                   f"verified {'yes' if self.verified else 'NO'}")
        out.append(f"  yield                {self.secret_per_sifted:.4f} of sifted, "
                   f"{self.secret_per_pulse:.6f} of transmitted"
                   + ("  [no secret yield]" if self.no_yield else ""))
        return "\n".join(out) + "\n"


@dataclass
class SessionResult:
    role: str
    report: SessionReport
    secret_bits: np.ndarray
    session_hex: str
    frames: list[bytes]
    recon: ReconOutcome | None = None
    duration_s: float = 0.0


def _base_report(params: ProtocolParams, cfg: SessionConfig, seed: int, role: str) -> SessionReport:
    return SessionReport(
        session=session_hex(params, cfg, seed),
        role=role,
        protocol_version=cfg.protocol_version,
        seed=seed,
        pulses=cfg.pulses,
        block_size=cfg.block_size,
        blocks=(cfg.pulses + cfg.block_size - 1) // cfg.block_size,
        clock_rate_hz=params.clock_rate_hz,
        mean_photon_number=params.mean_photon_number,
        eta_q=params.eta_q,
        eta_system_mean=params.eta_system_mean,
        eta_system_sigma=params.eta_system_sigma,
        gate_width_s=params.gate_width_s,
        background_prob_per_gate=params.background_prob_per_gate,
        dark_count_rate_hz=params.dark_count_rate_hz,
        optical_error_prob=params.optical_error_prob,
    )


def _pa_inputs(outcome: ReconOutcome, sampled_bits: int, hash_disclosed: int):
    """Efficiency/extra-leak pair fed to the output-length formula.

    With the measured efficiency, c*f(eps)*n equals the correction
    disclosure exactly; when the estimate is zero (f = 0) the correction
    bits move into the flat term instead.
    """
    f_est = shannon_leak_per_bit(outcome.estimated_ber)
    if f_est > 0:
        return outcome.efficiency, sampled_bits + hash_disclosed
    return 1.0, outcome.disclosed_bits + sampled_bits + hash_disclosed


def _yield_possible(corrected_len: int, nbar: float, est_num: int, est_den: int,
                    sampled_bits: int) -> bool:
    """Could any secret bits survive even Shannon-limit correction?

    Checked before reconciliation: a hopeless operating point (the dim or
    noisy regimes) ends the session with an empty key instead of leaking
    correction traffic it can never pay back.
    """
    est = est_num / est_den if est_den else 0.0
    return plan_output_length(corrected_len, nbar, est, 1.0, sampled_bits) > 0


def _skipped_outcome(trimmed, est_num: int, est_den: int) -> ReconOutcome:
    corrected = KeyBuffer(stage=Stage.CORRECTED, bits=trimmed.bits.copy(),
                          leaked_bits=trimmed.leaked_bits)
    return ReconOutcome(corrected_key=corrected,
                        estimated_ber=est_num / est_den if est_den else 0.0,
                        disclosed_bits=0, efficiency=0.0, verified=False,
                        passes_run=0, flips=0, hash_rounds=0,
                        est_num=est_num, est_den=est_den)


def _finish_report(report: SessionReport, params: ProtocolParams, outcome: ReconOutcome,
                   sampled_bits: int, sifted_len: int, secret_len: int,
                   cfg: SessionConfig) -> None:
    report.sifted_len = sifted_len
    report.sampled_bits = sampled_bits
    report.corrected_len = len(outcome.corrected_key)
    report.secret_len = secret_len
    report.est_errors = outcome.est_num
    report.est_sample = outcome.est_den
    report.est_ber = outcome.estimated_ber
    report.ec_disclosed_bits = outcome.disclosed_bits
    report.disclosed_bits = outcome.disclosed_bits + sampled_bits
    report.recon_efficiency = outcome.efficiency
    report.recon_passes = outcome.passes_run
    report.hash_bits = cfg.recon.hash_bits
    report.hash_rounds = outcome.hash_rounds
    report.hash_disclosed_bits = cfg.recon.hash_bits * outcome.hash_rounds
    report.verified = outcome.verified
    report.secret_per_sifted = secret_len / sifted_len if sifted_len else 0.0
    report.secret_per_pulse = secret_len / report.pulses if report.pulses else 0.0
    report.no_yield = secret_len == 0
    report.validate_chain()


def run_bob(endpoint: Endpoint, params: ProtocolParams, cfg: SessionConfig) -> SessionResult:
    """Receiver engine: channel host, reference key, plan chooser."""
    t0 = time.monotonic()
    seed = params.rng_seed
    hello = endpoint.expect(Kind.HELLO).payload
    if hello.version != cfg.protocol_version:
        reason = f"protocol version mismatch: peer {hello.version}, local {cfg.protocol_version}"
        endpoint.abort(reason)
        raise SessionAborted(reason, local=True)
    if hello.params_digest != session_digest(params, cfg):
        reason = "session configuration mismatch"
        endpoint.abort(reason)
        raise SessionAborted(reason, local=True)
    endpoint.send(Hello(version=cfg.protocol_version,
                        params_digest=session_digest(params, cfg), seed=seed))

    alice_bits = _derive_alice_bits(params, cfg, seed)
    run = simulate_channel(alice_bits, params, seed, cfg.block_size,
                           photon_count_override=cfg.photon_count_override,
                           eta_system_override=cfg.eta_system_override)
    bob_sess = bob_receive(run.detections, params)
    endpoint.send(SiftIndices(indices=bob_sess.sifted.indices))

    pa_rng = stream(seed, "bob-pa")
    if len(bob_sess.sifted) == 0:
        est_errors, est_sample, trimmed = 0, 0, bob_sess.sifted
        outcome = _skipped_outcome(trimmed, 0, 0)
        secret_bits = _announce_plan_and_compress(
            endpoint, outcome, 0, pa_rng)
    else:
        est_errors, est_sample, trimmed = estimate_ber_bob(
            bob_sess.sifted, endpoint, cfg.recon, stream(seed, "bob-sample"))
        if not _yield_possible(len(trimmed), params.mean_photon_number,
                               est_errors, est_sample, est_sample):
            outcome = _skipped_outcome(trimmed, est_errors, est_sample)
            secret_bits = _announce_plan_and_compress(endpoint, outcome, 0, pa_rng)
        else:
            outcome = reconcile(trimmed, endpoint, cfg.recon, "bob",
                                est_errors, est_sample, rng=stream(seed, "bob-recon"))
            hash_disclosed = cfg.recon.hash_bits * outcome.hash_rounds
            c_eff, extra = _pa_inputs(outcome, est_sample, hash_disclosed)
            output_len = plan_output_length(
                len(outcome.corrected_key), params.mean_photon_number,
                outcome.estimated_ber, c_eff, extra)
            secret_bits = _announce_plan_and_compress(endpoint, outcome,
                                                      output_len, pa_rng)
    endpoint.expect(Kind.DONE)
    endpoint.send(Done())

    report = _base_report(params, cfg, seed, "bob")
    _finish_report(report, params, outcome, est_sample,
                   len(bob_sess.sifted), len(secret_bits), cfg)
    _attach_truth(report, alice_bits, bob_sess, run)
    return SessionResult(role="bob", report=report, secret_bits=secret_bits,
                         session_hex=session_hex(params, cfg, seed),
                         frames=list(endpoint.frames), recon=outcome,
                         duration_s=time.monotonic() - t0)


def _announce_plan_and_compress(endpoint, outcome: ReconOutcome,
                                output_len: int, pa_rng) -> np.ndarray:
    pa_seed = draw_seed(pa_rng)
    endpoint.send(PaSeed(seed=pa_seed, output_length=output_len,
                         est_num=outcome.est_num, est_den=outcome.est_den))
    plan = PaPlan(input_length=len(outcome.corrected_key),
                  output_length=output_len, seed=pa_seed)
    return compress(outcome.corrected_key, plan).bits


def _attach_truth(report: SessionReport, alice_bits: np.ndarray, bob_sess, run) -> None:
    """Simulation-truth error decomposition, available on the channel host."""
    sifted = bob_sess.sifted
    mask = bob_sess.events.conclusive_mask()
    causes = bob_sess.events.causes[mask]
    truth = alice_bits[sifted.indices]
    errors = sifted.bits != truth
    report.true_errors = int(np.count_nonzero(errors))
    report.true_ber = report.true_errors / len(sifted) if len(sifted) else 0.0
    for cause, err_name, tot_name, comp_name in (
        (Cause.SIGNAL, "errors_signal", "sifted_signal", "ber_signal_component"),
        (Cause.BACKGROUND, "errors_background", "sifted_background", "ber_background_component"),
        (Cause.DARK, "errors_dark", "sifted_dark", "ber_dark_component"),
        (Cause.MIXED, "errors_mixed", "sifted_mixed", "ber_mixed_component"),
    ):
        sel = causes == cause
        setattr(report, tot_name, int(np.count_nonzero(sel)))
        err = int(np.count_nonzero(errors & sel))
        setattr(report, err_name, err)
        setattr(report, comp_name, err / len(sifted) if len(sifted) else 0.0)
    duals = bob_sess.events.dual_fire_count()
    report.dual_fires = duals
    report.dual_per_gate = duals / report.pulses if report.pulses else 0.0
    detections = len(sifted) + duals
    report.dual_per_detection = duals / detections if detections else 0.0


def run_alice(endpoint: Endpoint, params: ProtocolParams, cfg: SessionConfig) -> SessionResult:
    """Transmitter engine: generates, sifts, gets corrected, compresses."""
    t0 = time.monotonic()
    endpoint.send(Hello(version=cfg.protocol_version,
                        params_digest=session_digest(params, cfg), seed=0))
    hello = endpoint.expect(Kind.HELLO).payload
    if hello.version != cfg.protocol_version:
        reason = f"protocol version mismatch: peer {hello.version}, local {cfg.protocol_version}"
        endpoint.abort(reason)
        raise SessionAborted(reason, local=True)
    seed = hello.seed

    alice_bits = _derive_alice_bits(params, cfg, seed)
    alice_sess = AliceSession(params=params,
                              raw=KeyBuffer(stage=Stage.RAW, bits=alice_bits))

    indices = endpoint.expect(Kind.SIFT_INDICES).payload.indices
    sifted = sift(alice_sess, indices)

    # the receiver either samples, opens correction, or declares the run
    # hopeless by planning a zero-length key straight away
    trimmed = sifted
    sampled_bits = 0
    outcome = None
    message = endpoint.expect(Kind.SAMPLE_REQUEST, Kind.SHUFFLE_SEED, Kind.PA_SEED)
    if message.kind is Kind.SAMPLE_REQUEST:
        trimmed = estimate_ber_alice(sifted, endpoint, first_message=message)
        sampled_bits = len(sifted) - len(trimmed)
        message = endpoint.expect(Kind.SHUFFLE_SEED, Kind.PA_SEED)
    if message.kind is Kind.SHUFFLE_SEED:
        outcome = reconcile(trimmed, endpoint, cfg.recon, "alice", 0, 1,
                            first_message=message)
        pa_msg = endpoint.expect(Kind.PA_SEED).payload
        hash_disclosed = cfg.recon.hash_bits * outcome.hash_rounds
        c_eff, extra = _pa_inputs(outcome, sampled_bits, hash_disclosed)
        expected_len = plan_output_length(
            len(outcome.corrected_key), params.mean_photon_number,
            outcome.estimated_ber, c_eff, extra)
    else:
        pa_msg = message.payload
        outcome = _skipped_outcome(trimmed, pa_msg.est_num, pa_msg.est_den)
        if _yield_possible(len(trimmed), params.mean_photon_number,
                           pa_msg.est_num, pa_msg.est_den, sampled_bits):
            reason = "peer skipped correction despite a possible yield"
            endpoint.abort(reason)
            raise SessionAborted(reason, local=True)
        expected_len = 0
    if pa_msg.output_length != expected_len:
        reason = (f"privacy-amplification length disagreement: "
                  f"peer {pa_msg.output_length}, local {expected_len}")
        endpoint.abort(reason)
        raise SessionAborted(reason, local=True)
    plan = PaPlan(input_length=len(outcome.corrected_key),
                  output_length=pa_msg.output_length, seed=pa_msg.seed)
    secret = compress(outcome.corrected_key, plan)
    endpoint.send(Done())
    endpoint.expect(Kind.DONE)

    report = _base_report(params, cfg, seed, "alice")
    report.recon_flips = outcome.flips
    _finish_report(report, params, outcome, sampled_bits,
                   len(sifted), len(secret), cfg)
    return SessionResult(role="alice", report=report, secret_bits=secret.bits,
                         session_hex=session_hex(params, cfg, seed),
                         frames=list(endpoint.frames), recon=outcome,
                         duration_s=time.monotonic() - t0)


@dataclass
class SimulationResult:
    alice: SessionResult
    bob: SessionResult
    report: SessionReport
    duration_s: float


def run_simulation(params: ProtocolParams, cfg: SessionConfig) -> SimulationResult:
    """Run both engines over loopback in one process."""
    t0 = time.monotonic()
    a_end, b_end = loopback_pair(timeout_s=cfg.timeout_s)
    with concurrent.futures.ThreadPoolExecutor(max_workers=2) as pool:
        fut_a = pool.submit(run_alice, a_end, params, cfg)
        fut_b = pool.submit(run_bob, b_end, params, cfg)
        exc = None
        try:
            bob = fut_b.result()
        except Exception as e:
            exc = e
            bob = None
        try:
            alice = fut_a.result(timeout=cfg.timeout_s if exc else None)
        except Exception as e:
            if exc is None:
                exc = e
            alice = None
        if exc is not None:
            raise exc
    if not np.array_equal(alice.secret_bits, bob.secret_bits):
        raise AssertionError("secret keys differ between parties")
    report = bob.report
    report.role = "simulation"
    report.recon_flips = alice.report.recon_flips
    return SimulationResult(alice=alice, bob=bob, report=report,
                            duration_s=time.monotonic() - t0)
