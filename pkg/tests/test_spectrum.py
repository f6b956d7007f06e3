import warnings

import numpy as np
import pytest
from hypothesis import given, strategies as st

from molqec import spectrum, spinsys
from molqec.constants import MU_B, cm1_to_ghz
from molqec.spectrum import (EigenSpectrum, NoResonanceError, canonicalize_degenerate, diagonalize,
                             resonance_field, solve, summarize, transition_table, truncate_low_energy)
from molqec.spinsys import SystemParams, build_hamiltonian

from conftest import heisenberg_params, kambe_levels


def single_ion(S=1.0, **kw):
    """One-site system: three sites with the same single-ion terms and no coupling."""
    return SystemParams(electron_spin=S, nuclear_spin=0.0, **kw)


# -- diagonalize --------------------------------------------------------------------------


def test_diagonal_matrix():
    spec = diagonalize(np.diag([3.0, 1.0, 2.0]))
    assert np.allclose(spec.energies, [1, 2, 3])
    assert np.allclose(np.abs(spec.states), np.eye(3)[:, [1, 2, 0]])


def test_heisenberg_chain_levels_and_degeneracies():
    J = -1.3
    spec = diagonalize(build_hamiltonian(heisenberg_params(J)))
    assert np.allclose(spec.energies, kambe_levels(J), atol=1e-12)
    vals, counts = np.unique(np.round(spec.energies, 9), return_counts=True)
    assert list(vals) == pytest.approx([2 * J, 0.0, -J])
    assert list(counts) == [2, 2, 4]


def test_reconstruction_trace_and_orthonormality(cu):
    h = build_hamiltonian(cu)
    spec = diagonalize(h, cu.sites)
    v = spec.states
    assert np.abs(v @ np.diag(spec.energies) @ v.conj().T - h).max() < 1e-8 * np.abs(h).max()
    assert np.abs(v.conj().T @ v - np.eye(cu.dim)).max() < 1e-10
    assert spec.energies.sum() == pytest.approx(np.trace(h).real, rel=1e-8)
    assert np.all(np.diff(spec.energies) >= 0)


def test_tb_full_spectrum_gap(tb_full):
    assert tb_full.retained == 1728
    assert tb_full.energies[512] - tb_full.energies[511] > 500


def test_tb_trace_and_orthonormality(tb, tb_full):
    h = build_hamiltonian(tb)
    assert tb_full.energies.sum() == pytest.approx(np.trace(h).real, rel=1e-8)
    v = tb_full.states
    assert np.abs(v.conj().T @ v - np.eye(1728)).max() < 1e-10


def test_convergence_error_reports_diagnostics(monkeypatch):
    def boom(_):
        raise np.linalg.LinAlgError("no convergence")

    monkeypatch.setattr(np.linalg, "eigh", boom)
    with pytest.raises(spectrum.ConvergenceError, match="condition number"):
        diagonalize(np.diag([1.0, 2.0]))


# -- truncation ---------------------------------------------------------------------------


def test_truncate_identity_cases(cu):
    spec = solve(cu)
    assert spec.retained == 512 == spec.source_dim
    same = truncate_low_energy(spec, spec.retained)
    assert np.array_equal(same.energies, spec.energies)


def test_truncate_rejects_too_many():
    spec = diagonalize(np.diag([1.0, 2.0]))
    with pytest.raises(ValueError):
        truncate_low_energy(spec, 3)


def test_truncate_extends_through_degenerate_multiplet():
    spec = diagonalize(np.diag([0.0, 1.0, 1.0, 1.0, 2.0]))
    with pytest.warns(UserWarning, match="degenerate multiplet"):
        out = truncate_low_energy(spec, 2)
    assert out.retained == 4


def test_truncate_clean_boundary_is_silent():
    spec = diagonalize(np.diag([0.0, 1.0, 2.0]))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert truncate_low_energy(spec, 2).retained == 2


def test_tb_retained_states_live_in_the_doublet(tb, tb_spectrum):
    assert tb_spectrum.retained == 512
    for site in (1, 2, 3):
        sz2 = tb_spectrum.expectation_diag(spinsys.site_sz_squared_diagonal(tb.sites, site))
        assert sz2.min() > 0.99


# -- canonicalization ------------------------------------------------------------------------


def test_nondegenerate_only_phase_fixed():
    h = np.array([[1.0, 0.2j], [-0.2j, 2.0]])
    raw = diagonalize(h)
    canon = canonicalize_degenerate(raw)
    for k in range(2):
        v = canon.states[:, k]
        assert abs(abs(np.vdot(v, raw.states[:, k])) - 1) < 1e-12
        i = np.argmax(np.abs(v))
        assert abs(v[i].imag) < 1e-14 and v[i].real > 0


def test_heisenberg_quartet_resolved_by_jz():
    J = -1.0
    p = heisenberg_params(J).replace(Hz=0.0)
    spec = solve(p)
    jz = spec.expectation_diag(spinsys.total_jz_diagonal(p.sites))
    quartet = np.flatnonzero(np.isclose(spec.energies, -J))
    assert list(jz[quartet]) == pytest.approx([1.5, 0.5, -0.5, -1.5])


def test_canonicalization_idempotent(cu):
    spec = solve(cu.replace(A_par=0.0, A_perp=0.0))
    again = canonicalize_degenerate(spec)
    assert np.abs(again.states - spec.states).max() < 1e-10


def test_canonicalization_removes_gauge():
    J = -1.0
    spec = diagonalize(build_hamiltonian(heisenberg_params(J)))
    rng = np.random.default_rng(3)
    states = spec.states.copy()
    quartet = np.flatnonzero(np.isclose(spec.energies, -J))
    q, _ = np.linalg.qr(rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4)))
    states[:, quartet] = states[:, quartet] @ q
    sites = heisenberg_params(J).sites
    a = canonicalize_degenerate(EigenSpectrum(spec.energies, spec.states, 8, sites))
    b = canonicalize_degenerate(EigenSpectrum(spec.energies, states, 8, sites))
    assert np.abs(a.states - b.states).max() < 1e-10


def test_zero_rhombic_eigenvectors_in_single_jz_sector(tb):
    p = tb.replace(E=0.0)
    spec = solve(p)
    jz = spinsys.total_jz_diagonal(p.sites)
    for k in range(0, spec.retained, 7):
        w = np.abs(spec.states[:, k]) ** 2
        sectors = {round(float(x) * 2) for x in jz[w > 1e-10]}
        assert len(sectors) == 1


# -- summary ---------------------------------------------------------------------------------


def test_single_ion_tunneling_splitting():
    p = single_ion(D=-1000.0, E=0.25)
    summ = summarize(solve(p, truncate=False), p)
    assert summ.tunneling_delta == pytest.approx(0.5, abs=1e-10)


def test_single_ion_zero_rhombic():
    p = single_ion(D=-1000.0, E=0.0)
    assert summarize(solve(p, truncate=False), p).tunneling_delta == 0


def test_single_ion_gap_matches_3x3_oracle():
    D, E = -1000.0, 0.25
    p = single_ion(D=D, E=E)
    # levels of D Sz^2 + E(Sx^2 - Sy^2): D - E, D + E, 0
    summ = summarize(solve(p, truncate=False), p)
    assert summ.gap_omega == pytest.approx(-(D + E), rel=1e-12)
    assert summ.gap_omega > 900


def test_summary_expectations(cu):
    spec = solve(cu)
    summ = summarize(spec, cu)
    assert len(summ.ms_expectations) == len(summ.jz_expectations) == 512
    assert summ.gap_omega == np.inf and summ.tunneling_delta == 0


# -- transitions -------------------------------------------------------------------------------


def test_infinite_threshold_empty(cu):
    assert len(transition_table(solve(cu), threshold=np.inf)) == 0


def test_single_spin_zeeman_transition():
    p = SystemParams(electron_spin=0.5, nuclear_spin=0.0, g_z=2.0, Hz=1.0)
    # three uncoupled spins: all allowed lines at the same frequency g muB Hz
    tt = transition_table(solve(p))
    assert len(tt) > 0
    assert np.allclose(tt.freq_cm1, 2.0 * MU_B * 1.0)


def test_no_transitions_between_doublets_and_quartet():
    from molqec.labeling import _total_pseudo_spin_squared

    spec = solve(heisenberg_params(-1.0).replace(Hz=0.5))
    s2 = np.einsum("ik,ij,jk->k", spec.states.conj(), _total_pseudo_spin_squared(0.5), spec.states).real
    quartet = np.isclose(s2, 3.75)
    assert quartet.sum() == 4
    inten = spectrum.intensity_matrix(spec)
    assert inten[np.ix_(quartet, ~quartet)].max() < 1e-10


def test_table_sorted_and_symmetric(cu):
    spec = solve(cu)
    tt = transition_table(spec)
    assert np.all(np.diff(tt.freq_cm1) >= 0)
    assert np.all(tt.i < tt.j) and np.all(tt.freq_cm1 >= 0) and np.all(tt.intensity >= 0)
    assert np.allclose(tt.intensity_matrix, tt.intensity_matrix.T, atol=1e-14)
    assert np.allclose(tt.freq_ghz, cm1_to_ghz(tt.freq_cm1))


def test_transition_csv(tmp_path, cu):
    tt = transition_table(solve(cu), threshold=0.1)
    tt.to_csv(tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "i,j,freq_cm1,freq_GHz,intensity"
    assert len(lines) == len(tt) + 1


def test_nuclear_channel_table(cu):
    tt = transition_table(solve(cu), channel="nuclear")
    assert tt.channel == "nuclear" and len(tt) > 0
    with pytest.raises(ValueError):
        transition_table(solve(cu), channel="optical")


# -- resonance field -------------------------------------------------------------------------------


def test_resonance_closed_form_single_spin():
    p = SystemParams(electron_spin=0.5, nuclear_spin=0.0, g_z=2.0)
    expected = 95.0 / 29.9792458 / (2.0 * MU_B)
    assert expected == pytest.approx(3.394, abs=1e-3)
    assert resonance_field(p, 95.0) == pytest.approx(expected, abs=1e-6)


def test_resonance_zero_target_errors():
    p = SystemParams(electron_spin=0.5, nuclear_spin=0.0, g_z=2.0)
    with pytest.raises(NoResonanceError):
        resonance_field(p, 0.0)


def test_resonance_out_of_range_names_achievable_range():
    p = SystemParams(electron_spin=0.5, nuclear_spin=0.0, g_z=2.0)
    with pytest.raises(NoResonanceError, match="achievable range"):
        resonance_field(p, 1000.0, h_max=1.0)


@pytest.mark.parametrize("j2", [-1.0, -0.6, -0.2])
def test_resonance_round_trip_tb(tb, j2):
    p = tb.replace(J_ex=j2 / 2, E=0.0)
    hz = resonance_field(p, 95.0)
    scan = spectrum._FieldScan(p)
    scan.frequency_ghz(0.01)  # fix the tracked initial state
    assert abs(scan.frequency_ghz(hz) - 95.0) < 0.01


def test_resonance_with_explicit_selector_round_trip():
    p = SystemParams(electron_spin=0.5, nuclear_spin=0.0, g_z=2.1, J_ex=-1.0)
    hz = resonance_field(p, 80.0, selector=spectrum.strongest_ground_transition)
    assert abs(spectrum.transition_frequency_ghz(p, hz) - 80.0) < 0.01


# -- export ---------------------------------------------------------------------------------------


def test_binary_container_roundtrip(tmp_path, cu):
    spec = solve(cu)
    spectrum.save_spectrum(spec, tmp_path / "s.bin")
    back = spectrum.load_spectrum(tmp_path / "s.bin")
    assert np.array_equal(back.energies, spec.energies)
    assert np.array_equal(back.states, spec.states)
    assert back.source_dim == 512
    with pytest.raises(ValueError):
        (tmp_path / "bad.bin").write_bytes(b"nope" + bytes(40))
        spectrum.load_spectrum(tmp_path / "bad.bin")


def test_summary_json(tmp_path, tb, tb_spectrum):
    import json
    summ = summarize(tb_spectrum, tb)
    spectrum.write_summary_json(tb_spectrum, summ, tmp_path / "s.json")
    d = json.loads((tmp_path / "s.json").read_text())
    assert len(d["energies_cm1"]) == 512 and len(d["Jz"]) == 512
    assert d["tunneling_delta_cm1"] == pytest.approx(2 * tb.E)


@given(st.floats(0.05, 3.0), st.floats(-3.0, -0.1))
def test_intensity_symmetry_property(hz, j):
    p = SystemParams(electron_spin=0.5, nuclear_spin=0.0, g_z=2.0, J_ex=j, Hz=hz)
    inten = spectrum.intensity_matrix(solve(p))
    assert np.allclose(inten, inten.T, atol=1e-14)
