"""Encoder, successive-cancellation decoders and the coherent protocol."""

from .decoders import (
    HelstromCascade,
    MonteCarloResult,
    QuantumDecodeResult,
    sc_decode_classical,
    sc_decode_llr,
    sc_decode_quantum,
    sequential_outcome_probabilities,
    simulate_classical_sc,
    simulate_quantum_sc,
)
from .encoder import (
    MAX_COHERENT_QUBITS,
    bit_reversal,
    coherent_encode,
    encode,
    encode_batch,
    encode_dense,
    encoding_permutation,
    generator_matrix,
)
from .protocol import (
    PhaseAssignment,
    ProtocolTrace,
    align_phases,
    ebit_rate_trend,
    run_coherent_protocol,
    select_phases,
)

__all__ = [
    "HelstromCascade",
    "MAX_COHERENT_QUBITS",
    "MonteCarloResult",
    "PhaseAssignment",
    "ProtocolTrace",
    "QuantumDecodeResult",
    "align_phases",
    "bit_reversal",
    "coherent_encode",
    "ebit_rate_trend",
    "encode",
    "encode_batch",
    "encode_dense",
    "encoding_permutation",
    "generator_matrix",
    "run_coherent_protocol",
    "sc_decode_classical",
    "sc_decode_llr",
    "sc_decode_quantum",
    "select_phases",
    "sequential_outcome_probabilities",
    "simulate_classical_sc",
    "simulate_quantum_sc",
]
