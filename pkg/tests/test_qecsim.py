import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import unitary_group

from molqec.qecsim import (CCX, CX, Circuit, CircuitError, ErrorModel, ErrorSlot,
                           ForbiddenTransitionError, H, LabeledSystem, Pulse, U, X, apply_gate,
                           apply_pulse, basis_state, bitflip_code_circuit, circuit_unitary,
                           compile_to_pulses, distinguishing_frequencies, encode_input,
                           ensemble_spectrum, ese_readout, logical_simulate, measure_first_qubit,
                           random_qubit, realize, rotation, run_code, run_pulse_level,
                           shor_code_circuit, simulate_pulses, write_qubit)
from molqec.qecsim.circuit import PAULI

ZEROS6 = "000000"
FORBIDDEN_PAIRS = {("110", "111"), ("101", "111"), ("100", "101")}


def _inputs(k=6, seed=0):
    rng = np.random.default_rng(seed)
    fixed = [(1, 0), (0, 1), (1 / np.sqrt(2), 1j / np.sqrt(2))]
    return fixed + [random_qubit(rng) for _ in range(k)]


# -- logical simulator -----------------------------------------------------------------


def test_cx_uses_qubit_zero_as_most_significant():
    out = logical_simulate(Circuit(2, (CX(0, 1),)), basis_state(2, "10"))
    assert np.allclose(out, basis_state(2, "11"))
    out = logical_simulate(Circuit(2, (CX(0, 1),)), basis_state(2, "01"))
    assert np.allclose(out, basis_state(2, "01"))


def test_hadamard():
    out = logical_simulate(Circuit(1, (H(0),)), basis_state(1, 0))
    assert np.allclose(out, [1 / np.sqrt(2), 1 / np.sqrt(2)])


def test_toffoli_truth_table():
    u = circuit_unitary(Circuit(3, (CCX(0, 1, 2),)))
    perm = np.eye(8)[:, [0, 1, 2, 3, 4, 5, 7, 6]]
    assert np.allclose(u, perm)


def test_apply_gate_matches_kronecker():
    rng = np.random.default_rng(4)
    m = unitary_group.rvs(2, random_state=rng)
    psi = rng.normal(size=8) + 1j * rng.normal(size=8)
    expected = np.kron(np.kron(np.eye(2), m), np.eye(2)) @ psi
    assert np.allclose(apply_gate(psi, 3, m, 1), expected)


def test_encode_input_layout():
    v = encode_input(0.6, 0.8j, 3)
    assert v[0] == 0.6 and v[4] == 0.8j and np.count_nonzero(v) == 2


@pytest.mark.parametrize("kind", ["none", "bit-flip"])
def test_bitflip_code_corrects_every_single_flip(kind):
    for q in range(3):
        c = bitflip_code_circuit(ErrorModel(kind, q))
        for a, b in _inputs():
            assert run_code(c, a, b) == pytest.approx(1.0, abs=1e-12)


def test_bitflip_code_fails_on_double_flip():
    c = Circuit(3, (CX(0, 1), CX(0, 2), X(0), X(1), CX(0, 1), CX(0, 2), CCX(1, 2, 0)))
    assert run_code(c, 1, 0) == pytest.approx(0.0, abs=1e-12)


def test_bitflip_code_does_not_fix_phase_flip():
    c = bitflip_code_circuit(ErrorModel("phase-flip", 1))
    assert run_code(c, 1 / np.sqrt(2), 1 / np.sqrt(2)) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("kind", ["bit-flip", "phase-flip", "bit-phase-flip"])
def test_shor_code_corrects_every_pauli(kind):
    for q in range(9):
        c = shor_code_circuit(ErrorModel(kind, q))
        for a, b in _inputs(3, seed=q):
            assert run_code(c, a, b) == pytest.approx(1.0, abs=1e-10)


@given(st.integers(0, 8), st.integers(0, 2**31))
def test_shor_code_corrects_random_unitary(q, seed):
    c = shor_code_circuit(ErrorModel("unitary", q, seed=seed))
    a, b = random_qubit(np.random.default_rng(seed + 1))
    assert run_code(c, a, b) == pytest.approx(1.0, abs=1e-10)


def test_shor_code_fails_on_two_flips_in_one_block():
    gates = list(shor_code_circuit().gates)
    k = next(i for i, g in enumerate(gates) if g.is_error)
    gates[k:k + 1] = [X(0), X(1)]
    # the inner code decodes the block wrongly, which the outer code sees as a phase flip
    c = Circuit(9, tuple(gates))
    assert run_code(c, 1, 0) == pytest.approx(1.0)
    assert run_code(c, 1 / np.sqrt(2), 1 / np.sqrt(2)) < 1e-10


# -- error model and circuit validation ------------------------------------------------------


def test_error_model_sampling_is_seeded():
    m = ErrorModel("unitary", "random", seed=11)
    a, b = m.sample(9), m.sample(9)
    assert a[0] == b[0] and np.array_equal(a[1], b[1])
    assert np.allclose(a[1].conj().T @ a[1], np.eye(2))
    assert ErrorModel("bit-flip", 0, probability=0.0).sample(3) is None
    assert ErrorModel().sample(3) is None
    q, u = ErrorModel("bit-phase-flip", 2).sample(3)
    assert q == 2 and np.allclose(u, PAULI["Y"])


def test_random_qubit_error_covers_all_qubits():
    m = ErrorModel("bit-flip", "random")
    assert {m.sample(3, seed=s)[0] for s in range(60)} == {0, 1, 2}


@pytest.mark.parametrize("kwargs", [dict(kind="depolarize"), dict(kind="bit-flip", probability=1.5),
                                    dict(kind="unitary", matrix=np.ones((2, 2))),
                                    dict(kind="bit-flip", qubit="any")])
def test_error_model_validation(kwargs):
    with pytest.raises(CircuitError):
        ErrorModel(**kwargs)


def test_circuit_validation():
    with pytest.raises(CircuitError, match="at most one"):
        Circuit(3, (ErrorSlot(), ErrorSlot()))
    with pytest.raises(CircuitError):
        Circuit(2, (CX(0, 2),))
    with pytest.raises(CircuitError):
        Circuit(2, (CX(1, 1),))
    with pytest.raises(CircuitError):
        U(0, np.ones((2, 2)))


def test_circuit_json_roundtrip(tmp_path):
    rng = np.random.default_rng(5)
    m = unitary_group.rvs(2, random_state=rng)
    c = Circuit(3, (H(0), U(1, m, (0,)), CCX(0, 1, 2), ErrorSlot(ErrorModel("unitary", 1, matrix=m, seed=3))))
    c.dump(tmp_path / "c.json")
    back = Circuit.load(tmp_path / "c.json")
    assert back.to_json_dict() == c.to_json_dict()
    assert np.allclose(circuit_unitary(back), circuit_unitary(c))
    with pytest.raises(CircuitError):
        Circuit.from_json_dict({"n": 2, "gates": [{"g": "SWAP"}]})
    with pytest.raises(CircuitError):
        Circuit.from_json_dict({"gates": []})


# -- pulse primitives --------------------------------------------------------------------------


def test_rotation_pi_swaps_and_two_pi_is_minus_identity():
    r = rotation(np.pi, 0.0)
    assert np.allclose(r @ [1, 0], [0, -1j])
    assert np.allclose(r @ r, -np.eye(2))
    half = rotation(np.pi / 2, 0.3) @ [1, 0]
    assert np.allclose(np.abs(half) ** 2, [0.5, 0.5])


def _pulse(theta, phi=0.0, pair=(0, 1)):
    return Pulse(pair, ("a", "b"), theta, phi, "electronic", 1.0, 1.0, 0)


def test_apply_pulse_acts_on_pair_only():
    psi = np.array([1, 0, 0.5, 0], dtype=complex)
    apply_pulse(psi, _pulse(np.pi, pair=(0, 1)))
    assert np.allclose(psi, [0, -1j, 0.5, 0])


unitaries = st.integers(0, 2**31).map(lambda s: unitary_group.rvs(2, random_state=s))


@given(unitaries, st.floats(-np.pi, np.pi), st.floats(-np.pi, np.pi))
def test_realize_identity(m, fa, fb):
    theta, phi, ga, gb = realize(m, fa, fb)
    lhs = rotation(theta, phi) @ np.diag(np.exp(1j * np.array([fa, fb])))
    rhs = np.diag(np.exp(1j * np.array([ga, gb]))) @ m
    assert np.allclose(lhs, rhs, atol=1e-10)
    assert 0 <= theta <= np.pi + 1e-12


# -- compilation on the Cu register ------------------------------------------------------------


def _pairs(seq, gate_index):
    return {(p.labels[0][:3], p.labels[1][:3]) for p in seq.pulses_for_gate(gate_index)}


def test_single_cx_emits_one_pulse(cu_system):
    c = Circuit(3, (CX(0, 1),))
    seq = compile_to_pulses(c, cu_system.labeling, cu_system.electronic_table)
    assert len(seq) == 1
    p = seq.pulses[0]
    assert p.labels == ("100" + ZEROS6, "110" + ZEROS6)
    assert p.angle == pytest.approx(np.pi)
    assert not p.forbidden and p.freq_ghz > 0


def test_encode_decode_pulse_pattern(cu_system):
    c = bitflip_code_circuit(ErrorModel("bit-flip", "random"))
    seq = compile_to_pulses(c, cu_system.labeling, cu_system.electronic_table, forbidden="flag")
    assert _pairs(seq, 0) == {("100", "110")}
    assert _pairs(seq, 1) == {("110", "111")}
    assert _pairs(seq, 3) == {("100", "110"), ("101", "111")}
    assert _pairs(seq, 4) == {("100", "101"), ("110", "111")}
    assert _pairs(seq, 5) == {("011", "111")}
    assert seq.error_mark is not None and seq.error_mark.position == 2
    flagged = {(p.labels[0][:3], p.labels[1][:3]) for p in seq.forbidden}
    assert flagged == FORBIDDEN_PAIRS


def test_forbidden_transition_raises(cu_system):
    with pytest.raises(ForbiddenTransitionError, match="110000000"):
        compile_to_pulses(bitflip_code_circuit(), cu_system.labeling, cu_system.electronic_table)


def test_diagonal_gates_emit_no_pulses(cu_system):
    c = Circuit(3, (U(0, np.diag([1, 1j])), U(2, np.diag([-1, 1]), (0,))))
    seq = compile_to_pulses(c, cu_system.labeling, cu_system.electronic_table, mode="full")
    assert len(seq) == 0 and np.abs(seq.final_frame).max() > 0


def test_nuclear_gate_needs_nuclear_table(cu_system):
    # bit 6: m_I +3/2 -> +1/2 on the middle nucleus (nuclei 1 and 3 are swap-degenerate)
    c = Circuit(7, (CX(0, 6),))
    with pytest.raises(ValueError, match="nuclear"):
        compile_to_pulses(c, cu_system.labeling, cu_system.electronic_table)
    seq = compile_to_pulses(c, cu_system.labeling, cu_system.electronic_table, cu_system.nuclear_table)
    assert {p.channel for p in seq.pulses} == {"nuclear"}


def _pulse_vs_logical(system, c, psi_logical, seed=None):
    seq = compile_to_pulses(c, system.labeling, system.electronic_table, system.nuclear_table,
                            mode="full", forbidden="flag")
    out = simulate_pulses(system.spectrum, seq, seq.embed(psi_logical, system.spectrum.retained), seed)
    return seq.to_logical(out), logical_simulate(c, psi_logical, seed), out


@pytest.mark.parametrize("model", [ErrorModel(), ErrorModel("bit-flip", 1),
                                   ErrorModel("unitary", "random", seed=7)])
def test_pulse_simulation_matches_logical_on_all_inputs(cu_system, model):
    c = bitflip_code_circuit(model)
    rng = np.random.default_rng(8)
    psi = rng.normal(size=8) + 1j * rng.normal(size=8)
    psi /= np.linalg.norm(psi)
    got, want, full = _pulse_vs_logical(cu_system, c, psi, seed=2)
    assert np.abs(got - want).max() < 1e-12
    assert np.linalg.norm(full) == pytest.approx(1.0, abs=1e-12)


def test_pulse_simulation_rejects_wrong_dimension(cu_system):
    seq = compile_to_pulses(Circuit(3, (CX(0, 1),)), cu_system.labeling, cu_system.electronic_table)
    with pytest.raises(ValueError):
        simulate_pulses(cu_system.spectrum, seq, np.zeros(8))


# -- writing and reading out ---------------------------------------------------------------


@pytest.mark.parametrize("alpha,beta", [(1, 0), (0, 1), (1 / np.sqrt(2), 1j / np.sqrt(2)),
                                        (0.6, -0.8), (0.28 + 0.96j, 0)])
def test_write_qubit(cu_system, alpha, beta):
    lab = cu_system.labeling
    psi = write_qubit(cu_system.spectrum, lab, alpha, beta, cu_system.electronic_table)
    i0, i1 = lab.index_of("0" * 9), lab.index_of("1" + "0" * 8)
    assert psi[i0] == pytest.approx(alpha, abs=1e-12)
    assert psi[i1] == pytest.approx(beta, abs=1e-12)
    assert np.linalg.norm(psi) == pytest.approx(1.0, abs=1e-12)


def test_write_qubit_rejects_unnormalized(cu_system):
    with pytest.raises(ValueError):
        write_qubit(cu_system.spectrum, cu_system.labeling, 1, 1)


def _basis(system, label):
    v = np.zeros(system.spectrum.retained, dtype=complex)
    v[system.labeling.index_of(label)] = 1
    return v


def test_ese_of_single_state_matches_intensity_row(cu_system):
    tt = cu_system.electronic_table
    k = cu_system.labeling.index_of("0" * 9)
    ese = ese_readout(_basis(cu_system, "0" * 9), cu_system.spectrum, tt)
    row = tt.intensity_matrix[k]
    assert ese.amplitude.sum() == pytest.approx(row[row >= tt.threshold].sum(), rel=1e-10)
    for j in np.flatnonzero(row >= tt.threshold):
        f = abs(tt.energies[j] - tt.energies[k]) * 29.9792458
        assert ese.amplitude_at(f, tol=1e-6) >= row[j] * (1 - 1e-9)


def test_ese_distinguishes_codewords(cu_system):
    a = ese_readout(_basis(cu_system, "0" * 9), cu_system.spectrum, cu_system.electronic_table)
    b = ese_readout(_basis(cu_system, "1" + "0" * 8), cu_system.spectrum, cu_system.electronic_table)
    assert len(distinguishing_frequencies(a, b)) > 0
    assert len(distinguishing_frequencies(a, a)) == 0


def test_ese_is_linear_in_populations(cu_system):
    tt, spec = cu_system.electronic_table, cu_system.spectrum
    u, d = _basis(cu_system, "0" * 9), _basis(cu_system, "1" + "0" * 8)
    mixed = ese_readout((u + 1j * d) / np.sqrt(2), spec, tt)
    avg = ensemble_spectrum([(0.5, ese_readout(u, spec, tt)), (0.5, ese_readout(d, spec, tt))])
    assert np.allclose(mixed.freq_ghz, avg.freq_ghz)
    assert np.allclose(mixed.amplitude, avg.amplitude, rtol=1e-12)


def test_ese_temperature_reduces_amplitude(cu_system):
    tt, spec = cu_system.electronic_table, cu_system.spectrum
    u = _basis(cu_system, "0" * 9)
    cold, warm = ese_readout(u, spec, tt), ese_readout(u, spec, tt, temperature=300.0)
    assert warm.amplitude.sum() < 0.05 * cold.amplitude.sum()
    with pytest.raises(ValueError, match="normalized"):
        ese_readout(2 * u, spec, tt)


def test_ese_csv(tmp_path, cu_system):
    ese = ese_readout(_basis(cu_system, "0" * 9), cu_system.spectrum, cu_system.electronic_table)
    ese.to_csv(tmp_path / "e.csv")
    lines = (tmp_path / "e.csv").read_text().splitlines()
    assert lines[0] == "freq_GHz,amplitude" and len(lines) == len(ese) + 1


def test_measure_basis_states(cu_system):
    up = measure_first_qubit(_basis(cu_system, "0" * 9), cu_system.spectrum, cu_system.labeling)
    down = measure_first_qubit(_basis(cu_system, "1" + "0" * 8), cu_system.spectrum, cu_system.labeling)
    assert (up.bit, down.bit) == (0, 1)
    assert up.confidence == pytest.approx(1.0, abs=1e-6)
    assert down.ms == pytest.approx(-1.5, abs=1e-5)


def test_measure_indeterminate_on_balanced_superposition(cu):
    system = LabeledSystem.build(cu.without_hyperfine())
    psi = (_basis(system, "0" * 9) + _basis(system, "1" + "0" * 8)) / np.sqrt(2)
    m = measure_first_qubit(psi, system.spectrum, system.labeling)
    assert m.indeterminate and m.bit is None


# -- end to end ------------------------------------------------------------------------------------


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_pulse_level_bitflip_run(cu_system, seed):
    a, b = random_qubit(np.random.default_rng(seed))
    run = run_pulse_level(cu_system, bitflip_code_circuit(ErrorModel("bit-flip", "random")), a, b, seed=seed)
    assert run.pulse_fidelity == pytest.approx(run.logical_fidelity, abs=1e-12)
    assert run.pulse_fidelity == pytest.approx(1.0, abs=1e-12)
    assert run.leakage < 1e-12
    assert len(run.sequence.forbidden) > 0


@given(st.integers(0, 2**31))
def test_pulse_simulation_preserves_norm(seed):
    rng = np.random.default_rng(seed)
    n = 6
    psi = rng.normal(size=n) + 1j * rng.normal(size=n)
    psi /= np.linalg.norm(psi)
    for _ in range(5):
        i, j = rng.choice(n, 2, replace=False)
        apply_pulse(psi, _pulse(rng.uniform(0, 2 * np.pi), rng.uniform(-np.pi, np.pi), (int(i), int(j))))
    assert np.linalg.norm(psi) == pytest.approx(1.0, abs=1e-12)


def test_all_basis_inputs_through_named_circuits():
    for bits in itertools.product("01", repeat=3):
        out = logical_simulate(bitflip_code_circuit(), basis_state(3, "".join(bits)))
        assert np.isclose(np.linalg.norm(out), 1.0)
