"""fsqkd: a deterministic free-space B92 quantum key distribution simulator."""

from .analytics import LinkBudget, ber_model, detection_probability, optimize_nbar
from .channel import (
    Cause,
    DetectionBatch,
    DetectionEvent,
    Outcome,
    PulseRecord,
    draw_eta_system,
    draw_photon_count,
    simulate_channel,
    transmit_pulse,
)
from .core import (
    KeyBuffer,
    Polarization,
    Stage,
    compare_keys,
    overlap_probability,
)
from .messages import Kind, Message, decode, encode, leak_meter
from .params import ProtocolParams
from .privacy import (
    PaPlan,
    compress,
    pa_fraction,
    plan_output_length,
    secret_yield_per_sifted_bit,
)
from .protocol import AliceSession, BobSession, alice_generate, bob_receive, sift
from .reconciliation import (
    ReconConfig,
    ReconOutcome,
    estimate_ber,
    reconcile,
    shannon_leak_per_bit,
)
from .rng import stream
from .session import SessionConfig, SessionReport, run_alice, run_bob, run_simulation
from .transport import loopback_pair

__version__ = "0.1.0"
