"""Logical QEC circuits, their compilation to selective pulses, and readout."""
from .circuit import (CCX, CX, ERROR_KINDS, NAMED_CIRCUITS, Circuit, CircuitError, ErrorModel,
                      ErrorSlot, Gate, H, U, X, Y, Z, apply_gate, basis_state, bitflip_code_circuit,
                      circuit_unitary, encode_input, logical_simulate, random_qubit,
                      recovery_fidelity, reduced_qubit_state, run_code, shor_code_circuit)
from .pulses import (WRITE_PATH, CompileError, ErrorMark, ForbiddenTransitionError, Pulse,
                     PulseSequence, apply_pulse, compile_to_pulses, realize, rotation,
                     simulate_pulses, write_qubit, write_qubit_sequence)
from .readout import (ESESpectrum, Measurement, distinguishing_frequencies, ensemble_spectrum,
                      ese_readout, measure_first_qubit)
from .run import LabeledSystem, QECRun, run_pulse_level

__all__ = [
    "CCX", "CX", "ERROR_KINDS", "NAMED_CIRCUITS", "Circuit", "CircuitError", "ErrorModel",
    "ErrorSlot", "Gate", "H", "U", "X", "Y", "Z", "apply_gate", "basis_state",
    "bitflip_code_circuit", "circuit_unitary", "encode_input", "logical_simulate", "random_qubit",
    "recovery_fidelity", "reduced_qubit_state", "run_code", "shor_code_circuit",
    "WRITE_PATH", "CompileError", "ErrorMark", "ForbiddenTransitionError", "Pulse",
    "PulseSequence", "apply_pulse", "compile_to_pulses", "realize", "rotation",
    "simulate_pulses", "write_qubit", "write_qubit_sequence",
    "ESESpectrum", "Measurement", "distinguishing_frequencies", "ensemble_spectrum",
    "ese_readout", "measure_first_qubit", "LabeledSystem", "QECRun", "run_pulse_level",
]
