"""End-to-end pulse-level run of an error-correcting circuit on a labeled system."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .. import labeling as lab_mod
from ..spectrum import EigenSpectrum, transition_table
from ..spinsys import SystemParams
from .circuit import Circuit, encode_input, logical_simulate, recovery_fidelity
from .pulses import PulseSequence, compile_to_pulses, simulate_pulses, write_qubit
from .readout import ESESpectrum, Measurement, ese_readout, measure_first_qubit


@dataclass
class LabeledSystem:
    params: SystemParams
    spectrum: EigenSpectrum
    labeling: lab_mod.QubitLabeling

    @classmethod
    def build(cls, p: SystemParams) -> "LabeledSystem":
        actual, _, labels = lab_mod.label_system(p)
        return cls(p, actual, labels)

    @property
    def electronic_table(self):
        return transition_table(self.spectrum, channel="electronic")

    @property
    def nuclear_table(self):
        return transition_table(self.spectrum, channel="nuclear")


@dataclass
class QECRun:
    alpha: complex
    beta: complex
    logical_fidelity: float
    pulse_fidelity: float
    leakage: float
    sequence: PulseSequence
    final_state: np.ndarray
    measurement: Measurement
    ese: ESESpectrum


def run_pulse_level(system: LabeledSystem, c: Circuit, alpha: complex, beta: complex,
                    seed: Optional[int] = None, forbidden: str = "flag",
                    temperature: float = 0.0) -> QECRun:
    """Write ``alpha|0>+beta|1>`` with the three-pulse path, run ``c`` as pulses, decode.

    The logical reference uses the same error draw (same ``seed``), so the
    two fidelities must coincide.
    """
    el, nu = system.electronic_table, system.nuclear_table
    seq = compile_to_pulses(c, system.labeling, el, nu, forbidden=forbidden)
    psi0 = write_qubit(system.spectrum, system.labeling, alpha, beta, el, forbidden=forbidden)
    out = simulate_pulses(system.spectrum, seq, psi0, seed=seed)
    logical = seq.to_logical(out)
    target = np.array([alpha, beta])
    ref = logical_simulate(c, encode_input(alpha, beta, c.n_qubits), seed)
    return QECRun(
        alpha, beta,
        logical_fidelity=recovery_fidelity(ref, c.n_qubits, target),
        pulse_fidelity=recovery_fidelity(logical, c.n_qubits, target),
        leakage=float(max(0.0, 1 - np.linalg.norm(logical) ** 2)),
        sequence=seq,
        final_state=out,
        measurement=measure_first_qubit(out, system.spectrum, system.labeling),
        ese=ese_readout(out, system.spectrum, el, temperature),
    )
