"""
Logical circuits and a reference state-vector simulator.

Qubit 0 is the most significant bit of a basis index, so the basis state
``|b0 b1 ... b(n-1)>`` sits at index ``int("b0b1...", 2)``.  This matches the
left-to-right reading of qubit labels used everywhere else in the package.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
from scipy.stats import unitary_group

SQ2 = 1.0 / np.sqrt(2.0)

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}
HADAMARD = SQ2 * np.array([[1, 1], [1, -1]], dtype=complex)

ERROR_KINDS = ("none", "bit-flip", "phase-flip", "bit-phase-flip", "unitary")
_KIND_MATRIX = {"bit-flip": "X", "phase-flip": "Z", "bit-phase-flip": "Y"}


class CircuitError(ValueError):
    pass


@dataclass(frozen=True)
class ErrorModel:
    """Single-qubit error applied at an error slot.

    ``qubit`` is an index or ``"random"``.  With ``kind="unitary"`` the error
    is ``matrix`` if given, otherwise a Haar-random U(2) drawn from the seed.
    The error fires with ``probability``.
    """

    kind: str = "none"
    qubit: Union[int, str] = 0
    probability: float = 1.0
    seed: Optional[int] = None
    matrix: Optional[np.ndarray] = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in ERROR_KINDS:
            raise CircuitError(f"unknown error kind {self.kind!r}; expected one of {ERROR_KINDS}")
        if not 0.0 <= self.probability <= 1.0:
            raise CircuitError(f"error probability must lie in [0, 1], got {self.probability}")
        if isinstance(self.qubit, str) and self.qubit != "random":
            raise CircuitError(f"error qubit must be an index or 'random', got {self.qubit!r}")
        if self.matrix is not None:
            m = np.asarray(self.matrix, dtype=complex)
            if m.shape != (2, 2) or not np.allclose(m.conj().T @ m, np.eye(2), atol=1e-10):
                raise CircuitError("error matrix must be a 2x2 unitary")
            object.__setattr__(self, "matrix", m)

    def candidate_qubits(self, n: int) -> tuple[int, ...]:
        """Qubits this model can hit in an ``n``-qubit register."""
        if self.kind == "none":
            return ()
        if self.qubit == "random":
            return tuple(range(n))
        return (int(self.qubit),)

    def sample(self, n: int, seed: Optional[int] = None) -> Optional[tuple[int, np.ndarray]]:
        """Draw ``(qubit, 2x2 unitary)`` or None when no error occurs.

        Draw order is fixed (fire?, qubit, unitary) so a seed fully
        determines the outcome.
        """
        if self.kind == "none":
            return None
        rng = np.random.default_rng(self.seed if seed is None else seed)
        if not rng.random() < self.probability:
            return None
        q = int(rng.integers(n)) if self.qubit == "random" else int(self.qubit)
        if not 0 <= q < n:
            raise CircuitError(f"error qubit {q} out of range for {n} qubits")
        if self.kind == "unitary":
            m = self.matrix if self.matrix is not None else unitary_group.rvs(2, random_state=rng)
        else:
            m = PAULI[_KIND_MATRIX[self.kind]]
        return q, np.asarray(m, dtype=complex)

    def to_json_dict(self) -> dict:
        d = {"kind": self.kind, "qubit": self.qubit, "probability": self.probability}
        if self.seed is not None:
            d["seed"] = self.seed
        if self.matrix is not None:
            d["matrix"] = [[[z.real, z.imag] for z in row] for row in self.matrix]
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> "ErrorModel":
        m = d.get("matrix")
        if m is not None:
            m = np.array([[complex(*z) for z in row] for row in m])
        return cls(kind=d.get("kind", "none"), qubit=d.get("qubit", 0),
                   probability=float(d.get("probability", 1.0)), seed=d.get("seed"), matrix=m)


@dataclass(frozen=True)
class Gate:
    """A (multi-)controlled single-qubit gate, or an error slot when ``name == "E"``."""

    name: str
    target: Optional[int] = None
    controls: tuple[int, ...] = ()
    matrix: Optional[np.ndarray] = field(default=None, compare=False)
    model: Optional[ErrorModel] = None

    @property
    def is_error(self) -> bool:
        return self.name == "E"

    @property
    def unitary(self) -> np.ndarray:
        if self.matrix is not None:
            return self.matrix
        if self.name == "H":
            return HADAMARD
        if self.name in ("X", "CX", "CCX"):
            return PAULI["X"]
        if self.name in ("Y", "Z"):
            return PAULI[self.name]
        raise CircuitError(f"gate {self.name!r} has no unitary")

    @property
    def qubits(self) -> tuple[int, ...]:
        return self.controls + ((self.target,) if self.target is not None else ())


def H(q: int) -> Gate:
    return Gate("H", q)


def X(q: int) -> Gate:
    return Gate("X", q)


def Y(q: int) -> Gate:
    return Gate("Y", q)


def Z(q: int) -> Gate:
    return Gate("Z", q)


def CX(c: int, t: int) -> Gate:
    return Gate("CX", t, (c,))


def CCX(c1: int, c2: int, t: int) -> Gate:
    return Gate("CCX", t, (c1, c2))


def U(q: int, matrix, controls: tuple[int, ...] = ()) -> Gate:
    m = np.asarray(matrix, dtype=complex)
    if m.shape != (2, 2) or not np.allclose(m.conj().T @ m, np.eye(2), atol=1e-10):
        raise CircuitError("U gate needs a 2x2 unitary")
    return Gate("U", q, tuple(controls), m)


def ErrorSlot(model: Optional[ErrorModel] = None) -> Gate:
    return Gate("E", model=model or ErrorModel())


@dataclass(frozen=True)
class Circuit:
    n_qubits: int
    gates: tuple[Gate, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        if self.n_qubits < 1:
            raise CircuitError("a circuit needs at least one qubit")
        slots = 0
        for k, g in enumerate(self.gates):
            if g.is_error:
                slots += 1
                q = g.model.qubit if g.model is not None else 0
                if isinstance(q, int) and not 0 <= q < self.n_qubits:
                    raise CircuitError(f"gate {k}: error qubit {q} out of range")
                continue
            qs = g.qubits
            if any(not 0 <= q < self.n_qubits for q in qs):
                raise CircuitError(f"gate {k} ({g.name}) touches qubits {qs} outside 0..{self.n_qubits - 1}")
            if len(set(qs)) != len(qs):
                raise CircuitError(f"gate {k} ({g.name}) repeats a qubit: {qs}")
        if slots > 1:
            raise CircuitError(f"at most one error slot allowed, found {slots}")

    @property
    def error_model(self) -> Optional[ErrorModel]:
        for g in self.gates:
            if g.is_error:
                return g.model
        return None

    def with_error(self, model: ErrorModel) -> "Circuit":
        """Same circuit with the error slot's model replaced."""
        gates = [ErrorSlot(model) if g.is_error else g for g in self.gates]
        return Circuit(self.n_qubits, tuple(gates))

    # -- JSON -------------------------------------------------------------------

    def to_json_dict(self) -> dict:
        out = []
        for g in self.gates:
            if g.is_error:
                out.append({"g": "E", "model": g.model.to_json_dict()})
            elif g.name in ("H", "X", "Y", "Z"):
                out.append({"g": g.name, "q": g.target})
            elif g.name == "CX":
                out.append({"g": "CX", "c": g.controls[0], "t": g.target})
            elif g.name == "CCX":
                out.append({"g": "CCX", "c": list(g.controls), "t": g.target})
            else:
                out.append({"g": "U", "q": g.target, "c": list(g.controls),
                            "matrix": [[[z.real, z.imag] for z in row] for row in g.matrix]})
        return {"n": self.n_qubits, "gates": out}

    @classmethod
    def from_json_dict(cls, d: dict) -> "Circuit":
        try:
            n = int(d["n"])
            gates = []
            for k, item in enumerate(d["gates"]):
                name = item["g"]
                if name in ("H", "X", "Y", "Z"):
                    gates.append(Gate(name, int(item["q"])))
                elif name == "CX":
                    gates.append(CX(int(item["c"]), int(item["t"])))
                elif name == "CCX":
                    c1, c2 = item["c"]
                    gates.append(CCX(int(c1), int(c2), int(item["t"])))
                elif name == "U":
                    m = [[complex(*z) for z in row] for row in item["matrix"]]
                    gates.append(U(int(item["q"]), m, tuple(int(c) for c in item.get("c", ()))))
                elif name == "E":
                    gates.append(ErrorSlot(ErrorModel.from_json_dict(item.get("model", {}))))
                else:
                    raise CircuitError(f"gate {k}: unknown gate type {name!r}")
        except (KeyError, TypeError) as exc:
            raise CircuitError(f"malformed circuit JSON: {exc!r}") from exc
        return cls(n, tuple(gates))

    def dump(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=2))

    @classmethod
    def load(cls, path) -> "Circuit":
        return cls.from_json_dict(json.loads(Path(path).read_text()))


# -- standard codes -------------------------------------------------------------------


def bitflip_code_circuit(model: Optional[ErrorModel] = None) -> Circuit:
    """Three-qubit repetition code: encode, error slot, decode with majority vote.

    After decoding qubit 0 holds the protected state and qubits 1, 2 hold the
    syndrome (``00`` when no error occurred).
    """
    return Circuit(3, (
        CX(0, 1), CX(0, 2),
        ErrorSlot(model),
        CX(0, 1), CX(0, 2), CCX(1, 2, 0),
    ))


def _inner_encode(b: int) -> list[Gate]:
    return [CX(b, b + 1), CX(b, b + 2)]


def _inner_decode(b: int) -> list[Gate]:
    return [CX(b, b + 1), CX(b, b + 2), CCX(b + 1, b + 2, b)]


def shor_code_circuit(model: Optional[ErrorModel] = None) -> Circuit:
    """Nine-qubit Shor code: phase-flip outer code over three bit-flip blocks."""
    gates: list[Gate] = [CX(0, 3), CX(0, 6), H(0), H(3), H(6)]
    for b in (0, 3, 6):
        gates += _inner_encode(b)
    gates.append(ErrorSlot(model))
    for b in (0, 3, 6):
        gates += _inner_decode(b)
    gates += [H(0), H(3), H(6), CX(0, 3), CX(0, 6), CCX(3, 6, 0)]
    return Circuit(9, tuple(gates))


NAMED_CIRCUITS = {"bitflip": bitflip_code_circuit, "shor": shor_code_circuit}


# -- simulation -----------------------------------------------------------------------


def basis_state(n: int, bits: str | int = 0) -> np.ndarray:
    idx = int(bits, 2) if isinstance(bits, str) else int(bits)
    v = np.zeros(2 ** n, dtype=complex)
    v[idx] = 1.0
    return v


def encode_input(alpha: complex, beta: complex, n: int) -> np.ndarray:
    """``alpha|00..0> + beta|10..0>`` on ``n`` qubits."""
    v = np.zeros(2 ** n, dtype=complex)
    v[0] = alpha
    v[1 << (n - 1)] = beta
    return v


def apply_gate(psi: np.ndarray, n: int, matrix: np.ndarray, target: int,
               controls: tuple[int, ...] = ()) -> np.ndarray:
    """Apply a controlled 2x2 ``matrix``; returns a new vector."""
    t = np.array(psi, dtype=complex).reshape((2,) * n)
    sel: list = [slice(None)] * n
    for c in controls:
        sel[c] = 1
    sub = t[tuple(sel)]
    axis = target - sum(1 for c in controls if c < target)
    sub = np.moveaxis(np.tensordot(matrix, sub, axes=([1], [axis])), 0, axis)
    t[tuple(sel)] = sub
    return t.reshape(-1)


def logical_simulate(c: Circuit, state: np.ndarray, seed: Optional[int] = None) -> np.ndarray:
    """Apply every gate of ``c`` in order.  The error slot samples its model under ``seed``."""
    psi = np.asarray(state, dtype=complex)
    if psi.shape != (2 ** c.n_qubits,):
        raise CircuitError(f"state has shape {psi.shape}, circuit needs ({2 ** c.n_qubits},)")
    for g in c.gates:
        if g.is_error:
            hit = g.model.sample(c.n_qubits, seed)
            if hit is not None:
                psi = apply_gate(psi, c.n_qubits, hit[1], hit[0])
            continue
        psi = apply_gate(psi, c.n_qubits, g.unitary, g.target, g.controls)
    return psi


def circuit_unitary(c: Circuit, seed: Optional[int] = None) -> np.ndarray:
    dim = 2 ** c.n_qubits
    return np.column_stack([logical_simulate(c, basis_state(c.n_qubits, k), seed) for k in range(dim)])


def reduced_qubit_state(psi: np.ndarray, n: int, qubit: int = 0) -> np.ndarray:
    """2x2 density matrix of one qubit."""
    t = np.moveaxis(np.asarray(psi).reshape((2,) * n), qubit, 0).reshape(2, -1)
    return t @ t.conj().T


def recovery_fidelity(psi: np.ndarray, n: int, target: np.ndarray, qubit: int = 0) -> float:
    """<target| rho_qubit |target> for the decoded data qubit."""
    rho = reduced_qubit_state(psi, n, qubit)
    tgt = np.asarray(target, dtype=complex)
    return float(np.real(tgt.conj() @ rho @ tgt))


def run_code(c: Circuit, alpha: complex, beta: complex, seed: Optional[int] = None) -> float:
    """Encode ``alpha|0>+beta|1>``, run ``c`` and return the recovery fidelity of qubit 0."""
    out = logical_simulate(c, encode_input(alpha, beta, c.n_qubits), seed)
    return recovery_fidelity(out, c.n_qubits, np.array([alpha, beta]))


def random_qubit(rng: np.random.Generator) -> tuple[complex, complex]:
    v = rng.normal(size=2) + 1j * rng.normal(size=2)
    v /= np.linalg.norm(v)
    return complex(v[0]), complex(v[1])
