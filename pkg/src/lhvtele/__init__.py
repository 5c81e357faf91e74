"""Classical teleportation of a known qubit with shared hidden variables."""

__version__ = "0.1.0"

from .geometry import dot, sample_triplet, sample_unit_vector
from .lhv import LhvRecord, LhvStream, derive_seed, session_seeds, stream_new
from .protocol import (
    AliceMessage,
    Povm,
    PovmError,
    SessionTranscript,
    Zone,
    alice_select,
    bob_vn_outcome,
    run_povm_session,
    run_singlet_session,
    run_vn_session,
    validate_povm,
    zone_of,
)
from .cost import (
    EntropyReport,
    entropy_report,
    fidelity_budget,
    ideal_codelength,
    q_values,
    zone_prob_avg,
    zone_prob_given_u,
)
from .coding import CodedBlock, decode_block, encode_block
