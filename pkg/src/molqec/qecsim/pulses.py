"""
Compilation of logical circuits into transition-selective pulses between
labeled eigenstates, and ideal pulse-level simulation.

A gate on target qubit ``t`` becomes one selective rotation per eigenstate
pair ``(x, x ^ e_t)`` whose control bits are set.  Because a transition
between two eigenstates is conditioned on every other label bit, CNOT and
Toffoli gates need no extra machinery.

Phases are handled with a virtual frame: the pulse-level amplitude of
logical basis state ``x`` is ``exp(i f[x])`` times its logical amplitude.
Each rotation is chosen so that the gate holds exactly up to an updated
frame, and diagonal gates only update the frame.  Populations therefore
agree with the logical simulator at every step, and amplitudes agree once
the final frame is removed.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..constants import cm1_to_ghz
from ..spectrum import EigenSpectrum, TransitionTable, transition_table
from .circuit import Circuit, ErrorModel, apply_gate

N_ELECTRONIC_BITS = 3
_EPS = 1e-12


class CompileError(ValueError):
    pass


class ForbiddenTransitionError(CompileError):
    pass


@dataclass(frozen=True)
class Pulse:
    state_pair: tuple[int, int]  # eigenstate indices; first member has the target bit 0
    labels: tuple[str, str]
    angle: float
    phase: float
    channel: str
    freq_ghz: float
    intensity: float
    gate_index: int
    forbidden: bool = False


@dataclass(frozen=True)
class ErrorMark:
    position: int  # pulses applied before the slot
    frame: np.ndarray
    model: ErrorModel


@dataclass(frozen=True)
class PulseSequence:
    pulses: tuple[Pulse, ...]
    n_qubits: int
    basis_index: np.ndarray  # eigenstate index of each logical basis state
    final_frame: np.ndarray
    error_mark: Optional[ErrorMark] = None
    threshold: float = 1e-8

    def __len__(self):
        return len(self.pulses)

    @property
    def forbidden(self) -> list[Pulse]:
        return [p for p in self.pulses if p.forbidden]

    def pulses_for_gate(self, gate_index: int) -> list[Pulse]:
        return [p for p in self.pulses if p.gate_index == gate_index]

    def min_frequency_gap_ghz(self) -> float:
        """Smallest separation between two distinct transitions on the same channel."""
        gap = np.inf
        for ch in ("electronic", "nuclear"):
            freqs = {}
            for p in self.pulses:
                if p.channel == ch:
                    freqs[p.state_pair] = p.freq_ghz
            f = np.sort(np.fromiter(freqs.values(), float)) if freqs else np.empty(0)
            if len(f) > 1:
                gap = min(gap, float(np.diff(f).min()))
        return float(gap)

    def embed(self, psi_logical: np.ndarray, dim: int) -> np.ndarray:
        """Logical state at the start of the sequence as an eigenstate-space vector."""
        psi = np.zeros(dim, dtype=complex)
        psi[self.basis_index] = psi_logical
        return psi

    def to_logical(self, psi: np.ndarray, frame: Optional[np.ndarray] = None) -> np.ndarray:
        """Remove the frame and restrict to the logical subspace."""
        f = self.final_frame if frame is None else frame
        return np.exp(-1j * f) * np.asarray(psi)[self.basis_index]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "state_i", "state_j", "freq_GHz", "angle_rad", "phase_rad", "channel"])
            for k, p in enumerate(self.pulses):
                w.writerow([k, p.state_pair[0], p.state_pair[1], repr(p.freq_ghz),
                            repr(p.angle), repr(p.phase), p.channel])


def wrap_phase(x: float) -> float:
    return float((x + np.pi) % (2 * np.pi) - np.pi)


def rotation(theta: float, phi: float) -> np.ndarray:
    """R = exp(-i theta/2 (cos phi sx + sin phi sy)) on a state pair."""
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    return np.array([[c, -1j * s * np.exp(-1j * phi)],
                     [-1j * s * np.exp(1j * phi), c]])


def realize(m: np.ndarray, fa: float, fb: float) -> tuple[float, float, float, float]:
    """Rotation realizing the 2x2 unitary ``m`` between frames.

    Returns ``(theta, phi, ga, gb)`` with
    ``rotation(theta, phi) @ diag(e^{i fa}, e^{i fb}) == diag(e^{i ga}, e^{i gb}) @ m``.
    """
    k = np.asarray(m) * np.exp(-1j * np.array([fa, fb]))[None, :]
    c, s = abs(k[0, 0]), abs(k[0, 1])
    theta = 2 * np.arctan2(s, c)
    ga = -np.angle(k[0, 0]) if c > _EPS else 0.0
    if s > _EPS:
        phi = -np.pi / 2 - np.angle(np.exp(1j * ga) * k[0, 1])
        gb = np.angle(-1j * np.exp(1j * phi)) - np.angle(k[1, 0])
    else:
        phi = 0.0
        gb = -np.angle(k[1, 1])
    return float(theta), wrap_phase(phi), wrap_phase(ga), wrap_phase(gb)


def _labels_of(labeling) -> Sequence[str]:
    return labeling.labels


def _logical_labels(n: int, n_bits: int, qubit_map: Sequence[int], background: str) -> list[str]:
    out = []
    for x in range(2 ** n):
        chars = list(background)
        for q in range(n):
            chars[qubit_map[q]] = "1" if (x >> (n - 1 - q)) & 1 else "0"
        out.append("".join(chars))
    return out


def _error_spread(model: Optional[ErrorModel], n: int) -> tuple[int, ...]:
    """Qubits whose flip the error can cause (phase flips add no new labels)."""
    if model is None or model.kind in ("none", "phase-flip"):
        return ()
    return model.candidate_qubits(n)


def compile_to_pulses(c: Circuit, labeling, tt: TransitionTable,
                      nuclear_tt: Optional[TransitionTable] = None, *,
                      support: Optional[Sequence[int]] = None,
                      qubit_map: Optional[Sequence[int]] = None,
                      background: Optional[str] = None,
                      mode: str = "reachable",
                      forbidden: str = "raise",
                      threshold: Optional[float] = None) -> PulseSequence:
    """Compile ``c`` into selective rotations between labeled eigenstates.

    ``support`` lists the logical basis indices populated at the input
    (default ``|00..0>`` and ``|10..0>``).  Circuit qubit ``q`` drives label
    bit ``qubit_map[q]`` (default ``q``); the remaining label bits are fixed
    to ``background`` (default all zeros).  Label bits below 3 are driven on
    the electronic channel, the rest on the nuclear one.

    ``mode="full"`` emits pulses for every pair instead of only those that
    can carry amplitude.  With ``forbidden="raise"`` a pulse whose drive
    intensity is below ``threshold`` is an error; ``"flag"`` keeps it and
    marks it.
    """
    if mode not in ("reachable", "full"):
        raise ValueError(f"mode must be 'reachable' or 'full', got {mode!r}")
    if forbidden not in ("raise", "flag"):
        raise ValueError(f"forbidden must be 'raise' or 'flag', got {forbidden!r}")
    labels = _labels_of(labeling)
    n, n_bits = c.n_qubits, len(labels[0])
    if 2 ** n > len(labels):
        raise CompileError(f"{n} qubits need {2 ** n} labeled states, only {len(labels)} retained")
    qmap = list(range(n)) if qubit_map is None else [int(q) for q in qubit_map]
    if len(qmap) != n or len(set(qmap)) != n or not all(0 <= q < n_bits for q in qmap):
        raise CompileError(f"bad qubit map {qmap} for {n} qubits on {n_bits}-bit labels")
    bg = "0" * n_bits if background is None else background
    if len(bg) != n_bits:
        raise CompileError(f"background {bg!r} must have {n_bits} bits")
    index = {lab: k for k, lab in enumerate(labels)}
    try:
        basis_index = np.array([index[s] for s in _logical_labels(n, n_bits, qmap, bg)])
    except KeyError as exc:
        raise CompileError(f"no eigenstate carries label |{exc.args[0]}>") from None
    thr = tt.threshold if threshold is None else threshold
    energies = tt.energies
    inten = {"electronic": tt.intensity_matrix,
             "nuclear": None if nuclear_tt is None else nuclear_tt.intensity_matrix}

    dim = 2 ** n
    frame = np.zeros(dim)
    reach = np.zeros(dim, dtype=bool)
    reach[[0, 1 << (n - 1)] if support is None else list(support)] = True
    if mode == "full":
        reach[:] = True
    pulses: list[Pulse] = []
    mark = None

    for gi, g in enumerate(c.gates):
        if g.is_error:
            mark = ErrorMark(len(pulses), frame.copy(), g.model)
            for q in _error_spread(g.model, n):
                reach = reach | reach[np.arange(dim) ^ (1 << (n - 1 - q))]
            continue
        m = g.unitary
        tbit = 1 << (n - 1 - g.target)
        cmask = sum(1 << (n - 1 - q) for q in g.controls)
        active = [x for x in range(dim) if (x & cmask) == cmask]
        if abs(m[0, 1]) < _EPS and abs(m[1, 0]) < _EPS:
            for x in active:
                k = int((x & tbit) != 0)
                frame[x] = wrap_phase(frame[x] - np.angle(m[k, k]))
            continue
        channel = "electronic" if qmap[g.target] < N_ELECTRONIC_BITS else "nuclear"
        if inten[channel] is None:
            raise CompileError(f"gate {gi} ({g.name}) needs a nuclear transition table")
        new_reach = reach.copy()
        for a in active:
            if a & tbit:
                continue
            b = a | tbit
            if not (reach[a] or reach[b]):
                continue
            theta, phi, ga, gb = realize(m, frame[a], frame[b])
            frame[a], frame[b] = ga, gb
            nz = np.abs(m) > _EPS
            new_reach[a] = (reach[a] and nz[0, 0]) or (reach[b] and nz[0, 1]) or mode == "full"
            new_reach[b] = (reach[a] and nz[1, 0]) or (reach[b] and nz[1, 1]) or mode == "full"
            if theta < _EPS:
                continue
            i, j = int(basis_index[a]), int(basis_index[b])
            w = float(inten[channel][i, j])
            bad = w < thr
            if bad and forbidden == "raise":
                raise ForbiddenTransitionError(
                    f"gate {gi} ({g.name}) needs the {channel} transition "
                    f"|{labels[i]}> <-> |{labels[j]}> (states {i}, {j}) with intensity {w:.3e} < {thr:.1e}"
                )
            freq = float(cm1_to_ghz(abs(energies[j] - energies[i])))
            pulses.append(Pulse((i, j), (labels[i], labels[j]), theta, phi, channel, freq, w, gi, bad))
        reach = new_reach

    return PulseSequence(tuple(pulses), n, basis_index, frame.copy(), mark, thr)


def apply_pulse(psi: np.ndarray, p: Pulse) -> None:
    i, j = p.state_pair
    r = rotation(p.angle, p.phase)
    a, b = psi[i], psi[j]
    psi[i] = r[0, 0] * a + r[0, 1] * b
    psi[j] = r[1, 0] * a + r[1, 1] * b


def simulate_pulses(spec: EigenSpectrum, seq: PulseSequence, state: np.ndarray,
                    seed: Optional[int] = None, error: Optional[ErrorModel] = None) -> np.ndarray:
    """Apply ideal selective rotations in order.

    At the error slot the error model (``error`` overrides the compiled one)
    is sampled under ``seed`` and applied to the logical subspace in the
    current frame.
    """
    psi = np.array(state, dtype=complex)
    if psi.shape != (spec.retained,):
        raise CompileError(f"state has shape {psi.shape}, spectrum retains {spec.retained} states")
    for p in seq.pulses:
        if max(p.state_pair) >= spec.retained or min(p.state_pair) < 0:
            raise IndexError(f"pulse pair {p.state_pair} outside 0..{spec.retained - 1}")
    model = error if error is not None else (seq.error_mark.model if seq.error_mark else None)
    pos = seq.error_mark.position if seq.error_mark is not None else None
    for k, p in enumerate(seq.pulses):
        if k == pos:
            _inject(psi, seq, model, seed)
        apply_pulse(psi, p)
    if pos is not None and pos == len(seq.pulses):
        _inject(psi, seq, model, seed)
    return psi


def _inject(psi: np.ndarray, seq: PulseSequence, model: Optional[ErrorModel], seed) -> None:
    if model is None:
        return
    hit = model.sample(seq.n_qubits, seed)
    if hit is None:
        return
    f = seq.error_mark.frame
    logical = np.exp(-1j * f) * psi[seq.basis_index]
    logical = apply_gate(logical, seq.n_qubits, hit[1], hit[0])
    psi[seq.basis_index] = np.exp(1j * f) * logical


# -- writing a qubit into the electron spins ------------------------------------------

WRITE_PATH = ("000", "010", "110", "100")


def write_qubit_sequence(labeling, alpha: complex, beta: complex, tt: TransitionTable,
                         background: Optional[str] = None, path: Sequence[str] = WRITE_PATH,
                         forbidden: str = "raise") -> PulseSequence:
    """Three pulses taking ``|0..0>`` to ``alpha|000..> + beta|100..>`` up to a global phase.

    The first pulse splits amplitude between the first two path states; the
    following pi pulses carry the split-off part along the path.
    """
    if abs(abs(alpha) ** 2 + abs(beta) ** 2 - 1) > 1e-10:
        raise ValueError("need |alpha|^2 + |beta|^2 = 1")
    labels = _labels_of(labeling)
    n_bits = len(labels[0])
    bg = "0" * (n_bits - N_ELECTRONIC_BITS) if background is None else background
    index = {lab: k for k, lab in enumerate(labels)}
    states = [index[s + bg] for s in path]
    legs = len(states) - 1
    # final amplitude of the last state is (-i)^legs e^{i phi} sin(theta/2)
    phi = wrap_phase(np.angle(beta) - np.angle(alpha) - legs * (-np.pi / 2))
    theta = 2 * np.arccos(min(1.0, abs(alpha)))
    pulses = []
    for k in range(legs):
        i, j = states[k], states[k + 1]
        w = float(tt.intensity_matrix[i, j])
        bad = w < tt.threshold
        if bad and forbidden == "raise":
            raise ForbiddenTransitionError(
                f"write path leg |{labels[i]}> <-> |{labels[j]}> has intensity {w:.3e}")
        freq = float(cm1_to_ghz(abs(tt.energies[j] - tt.energies[i])))
        pulses.append(Pulse((i, j), (labels[i], labels[j]), theta if k == 0 else np.pi,
                            phi if k == 0 else 0.0, "electronic", freq, w, k, bad))
    basis = np.array([states[0], states[-1]])
    # both path ends carry the same frame, -arg(alpha)
    frame = np.full(2, -np.angle(alpha) if abs(alpha) > _EPS else 0.0)
    return PulseSequence(tuple(pulses), 1, basis, frame, None, tt.threshold)


def write_qubit(spec: EigenSpectrum, labeling, alpha: complex, beta: complex,
                tt: Optional[TransitionTable] = None, **kw) -> np.ndarray:
    """Prepare ``alpha|000000000> + beta|100000000>`` from the labeled ground state.

    The returned vector has its global phase fixed so the two amplitudes are
    exactly ``alpha`` and ``beta``.
    """
    tt = tt or transition_table(spec)
    seq = write_qubit_sequence(labeling, alpha, beta, tt, **kw)
    psi = np.zeros(spec.retained, dtype=complex)
    psi[seq.basis_index[0]] = 1.0
    for p in seq.pulses:
        apply_pulse(psi, p)
    return psi * np.exp(-1j * seq.final_frame[0])

__all__ = [
    "CompileError", "ForbiddenTransitionError", "Pulse", "ErrorMark", "PulseSequence",
    "rotation", "realize", "compile_to_pulses", "apply_pulse", "simulate_pulses",
    "write_qubit_sequence", "write_qubit", "WRITE_PATH",
]
