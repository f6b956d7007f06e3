"""Diagonalization, low-energy truncation, gauge fixing and spectroscopic observables."""

from __future__ import annotations

import csv
import json
import struct
import warnings
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp
from scipy.optimize import brentq
from scipy.sparse.csgraph import connected_components

from . import spinsys
from .constants import cm1_to_ghz, ghz_to_cm1
from .spinsys import SystemParams

DEGENERACY_TOL = 1e-9  # cm^-1


class ConvergenceError(RuntimeError):
    pass


class NoResonanceError(ValueError):
    pass


@dataclass(frozen=True)
class EigenSpectrum:
    """Ascending energies (cm^-1) with eigenvectors as the columns of ``states``."""

    energies: np.ndarray
    states: np.ndarray
    source_dim: int
    sites: Optional[tuple] = None

    @property
    def retained(self) -> int:
        return len(self.energies)

    def __len__(self):
        return len(self.energies)

    def expectation_diag(self, diag: np.ndarray) -> np.ndarray:
        """<psi_k|O|psi_k> for an operator diagonal in the product basis."""
        return np.einsum("ik,i->k", np.abs(self.states) ** 2, diag).real

    def matrix_elements(self, op) -> np.ndarray:
        """V^dagger O V over the retained states (``op`` dense or sparse)."""
        return self.states.conj().T @ (op @ self.states)


@dataclass(frozen=True)
class SpectrumSummary:
    tunneling_delta: float
    gap_omega: float
    ms_expectations: np.ndarray
    jz_expectations: np.ndarray


@dataclass(frozen=True)
class TransitionTable:
    """Drive-allowed transitions among retained states, sorted by frequency."""

    i: np.ndarray
    j: np.ndarray
    freq_cm1: np.ndarray
    intensity: np.ndarray
    channel: str
    threshold: float
    intensity_matrix: np.ndarray
    energies: np.ndarray

    def __len__(self):
        return len(self.i)

    @property
    def freq_ghz(self) -> np.ndarray:
        return cm1_to_ghz(self.freq_cm1)

    def lookup(self, a: int, b: int) -> float:
        return float(self.intensity_matrix[a, b])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["i", "j", "freq_cm1", "freq_GHz", "intensity"])
            for row in zip(self.i, self.j, self.freq_cm1, self.freq_ghz, self.intensity):
                w.writerow([int(row[0]), int(row[1]), repr(float(row[2])),
                            repr(float(row[3])), repr(float(row[4]))])


# -- diagonalization --------------------------------------------------------------


def _blocks(h: np.ndarray) -> list[np.ndarray]:
    n_comp, labels = connected_components(sp.csr_matrix(h != 0), directed=False)
    return [np.flatnonzero(labels == c) for c in range(n_comp)]


def diagonalize(h: np.ndarray, sites=None) -> EigenSpectrum:
    """Full Hermitian eigendecomposition, ascending.

    The matrix is split into the connected components of its sparsity graph
    (magnetization sectors, typically) and each block is solved densely.
    """
    h = np.asarray(h)
    n = h.shape[0]
    energies = np.empty(n)
    states = np.zeros((n, n), dtype=complex)
    col = 0
    for idx in _blocks(h):
        sub = h[np.ix_(idx, idx)]
        try:
            w, v = np.linalg.eigh(sub)
        except np.linalg.LinAlgError as exc:
            herm = np.max(np.abs(sub - sub.conj().T))
            cond = np.linalg.cond(sub)
            raise ConvergenceError(
                f"eigensolver failed on block of size {len(idx)}: "
                f"hermiticity error {herm:.3e}, condition number {cond:.3e}"
            ) from exc
        k = len(idx)
        energies[col:col + k] = w
        states[idx, col:col + k] = v
        col += k
    order = np.argsort(energies, kind="stable")
    return EigenSpectrum(energies[order], states[:, order], n, sites)


def truncate_low_energy(spec: EigenSpectrum, n: int, tol: float = DEGENERACY_TOL) -> EigenSpectrum:
    """Keep the ``n`` lowest states, never splitting a degenerate multiplet."""
    if n > spec.retained:
        raise ValueError(f"cannot retain {n} of {spec.retained} states")
    keep = n
    while 0 < keep < spec.retained and spec.energies[keep] - spec.energies[keep - 1] < tol:
        keep += 1
    if keep != n:
        lo = n - 1
        while lo > 0 and spec.energies[lo] - spec.energies[lo - 1] < tol:
            lo -= 1
        warnings.warn(
            f"truncation at {n} cuts through a degenerate multiplet spanning "
            f"states {lo}..{keep - 1}; retaining {keep} states",
            stacklevel=2,
        )
    return replace(spec, energies=spec.energies[:keep], states=spec.states[:, :keep])


def doublet_window(p: SystemParams) -> int:
    """Number of states in the lowest electronic-doublet manifold."""
    return 2 ** spinsys.N_SITES * p.site.nuclear_dim ** spinsys.N_SITES


def solve(p: SystemParams, truncate: bool = True) -> EigenSpectrum:
    """Build, diagonalize, truncate to the doublet window and canonicalize."""
    spec = diagonalize(spinsys.build_hamiltonian(p), p.sites)
    if truncate and spec.retained > doublet_window(p):
        spec = truncate_low_energy(spec, doublet_window(p))
    return canonicalize_degenerate(spec)


# -- gauge fixing -------------------------------------------------------------------


def _clusters(energies: np.ndarray, tol: float) -> list[np.ndarray]:
    if len(energies) == 0:
        return []
    breaks = np.flatnonzero(np.diff(energies) >= tol) + 1
    return np.split(np.arange(len(energies)), breaks)


def _split_by(basis: np.ndarray, op_apply: Callable, descending: bool = True):
    """Rotate ``basis`` to diagonalize a Hermitian operator; return the groups of equal eigenvalue."""
    m = basis.conj().T @ op_apply(basis)
    m = 0.5 * (m + m.conj().T)
    w, u = np.linalg.eigh(m)
    if descending:
        w, u = w[::-1], u[:, ::-1]
    rotated = basis @ u
    groups = [g for g in _clusters(-w if descending else w, 1e-8)]
    return [rotated[:, g] for g in groups]


def _projector_basis(basis: np.ndarray) -> np.ndarray:
    """A basis of span(basis) that depends only on the subspace, not the input gauge."""
    k = basis.shape[1]
    weight = np.round(np.sum(np.abs(basis) ** 2, axis=1), 10)
    order = np.lexsort((np.arange(len(weight)), -weight))
    chosen: list[np.ndarray] = []
    for i in order:
        v = basis @ basis[i].conj()
        for _ in range(2):
            for c in chosen:
                v = v - c * (c.conj() @ v)
        norm = np.linalg.norm(v)
        if norm > 1e-6:
            chosen.append(v / norm)
        if len(chosen) == k:
            break
    return np.column_stack(chosen)


def _fix_phase(v: np.ndarray) -> np.ndarray:
    mag = np.abs(v)
    i = int(np.argmax(mag >= mag.max() - 1e-10))
    return v * (np.conj(v[i]) / mag[i])


def canonicalize_degenerate(spec: EigenSpectrum, tol: float = DEGENERACY_TOL) -> EigenSpectrum:
    """Fix the eigenvector gauge.

    Inside every degenerate cluster the vectors are rotated to diagonalize
    total Jz (descending), then the site 1<->3 exchange, and any remaining
    freedom is resolved from the subspace projector.  Finally each vector is
    phased so that its largest component is real and positive.
    """
    states = spec.states.copy()
    jz = perm = None
    if spec.sites is not None:
        jz = spinsys.total_jz_diagonal(spec.sites)
        try:
            perm = spinsys.swap_13_permutation(spec.sites)
        except ValueError:
            perm = None
    for cluster in _clusters(spec.energies, tol):
        if len(cluster) == 1:
            continue
        groups = [states[:, cluster]]
        for op in (
            (lambda b: jz[:, None] * b) if jz is not None else None,
            (lambda b: b[perm]) if perm is not None else None,
        ):
            if op is None:
                continue
            groups = [g2 for g in groups
                      for g2 in (_split_by(g, op) if g.shape[1] > 1 else [g])]
        groups = [_projector_basis(g) if g.shape[1] > 1 else g for g in groups]
        states[:, cluster] = np.column_stack(groups)
    for k in range(states.shape[1]):
        states[:, k] = _fix_phase(states[:, k])
    return replace(spec, states=states)


# -- observables ------------------------------------------------------------------


def single_ion_levels(p: SystemParams) -> np.ndarray:
    """Zero-field electronic levels of one ion: D Sz^2 + E (Sx^2 - Sy^2)."""
    sx, sy, sz = spinsys.spin_matrices(p.electron_spin)
    h = p.D * sz @ sz + p.E * (sx @ sx - sy @ sy)
    return np.linalg.eigvalsh(h)


def summarize(spec: EigenSpectrum, p: SystemParams) -> SpectrumSummary:
    """Tunneling splitting and gap of the single-ion doublet, plus per-state <Ms>, <Jz>.

    For an S = 1/2 (Kramers) ion there is no tunneling splitting and no
    excited level in the model, so the gap is reported as infinite.
    """
    levels = single_ion_levels(p)
    delta = float(levels[1] - levels[0]) if len(levels) > 1 else 0.0
    if p.electron_spin == 0.5:
        delta = 0.0
    omega = float(levels[2] - levels[1]) if len(levels) > 2 else float("inf")
    sites = spec.sites if spec.sites is not None else p.sites
    ms = spec.expectation_diag(spinsys.electronic_sz_diagonal(sites))
    jz = spec.expectation_diag(spinsys.total_jz_diagonal(sites))
    return SpectrumSummary(max(delta, 0.0), max(omega, 0.0), ms, jz)


def drive_operator(sites, channel: str = "electronic"):
    if channel == "electronic":
        return spinsys.electronic_drive(sites)
    if channel == "nuclear":
        return spinsys.nuclear_drive(sites)
    raise ValueError(f"unknown drive channel {channel!r}")


def intensity_matrix(spec: EigenSpectrum, channel: str = "electronic") -> np.ndarray:
    """|<psi_i|X|psi_j>|^2 for the transverse drive of the given channel."""
    if spec.sites is None:
        raise ValueError("spectrum carries no site information; cannot build drive operator")
    m = spec.matrix_elements(drive_operator(spec.sites, channel))
    return np.abs(m) ** 2


def transition_table(spec: EigenSpectrum, threshold: float = 1e-8,
                     channel: str = "electronic") -> TransitionTable:
    """All pairs i < j whose drive intensity reaches ``threshold``, sorted by frequency."""
    inten = intensity_matrix(spec, channel)
    ii, jj = np.triu_indices(spec.retained, k=1)
    vals = inten[ii, jj]
    mask = vals >= threshold
    ii, jj, vals = ii[mask], jj[mask], vals[mask]
    freq = np.abs(spec.energies[jj] - spec.energies[ii])
    order = np.lexsort((jj, ii, freq))
    return TransitionTable(ii[order], jj[order], freq[order], vals[order], channel,
                           threshold, inten, spec.energies.copy())


# -- resonance field -----------------------------------------------------------------

Selector = Callable[[EigenSpectrum], tuple[int, int]]


def strongest_ground_transition(spec: EigenSpectrum, ratio: float = 10.0) -> tuple[int, int]:
    """Strongest predominantly electronic transition out of the ground state."""
    el = np.abs(spec.states[:, :1].conj().T @ (drive_operator(spec.sites, "electronic") @ spec.states))[0] ** 2
    nu = np.abs(spec.states[:, :1].conj().T @ (drive_operator(spec.sites, "nuclear") @ spec.states))[0] ** 2
    ok = (el > ratio * nu) & (el > 1e-8)
    ok[0] = False
    if not ok.any():
        raise NoResonanceError("no electronic transition out of the ground state")
    cand = np.flatnonzero(ok)
    best = el[cand].max()
    cand = cand[el[cand] >= best * (1 - 1e-9)]
    return 0, int(cand[np.argmin(spec.energies[cand])])


class _FieldScan:
    """Frequency of the default transition as a function of Hz, with cached H(Hz=0).

    ``initial="tracked"`` follows the state continuously connected to the
    low-field ground state (chosen by maximum overlap); ``initial="ground"``
    re-selects the instantaneous ground state at every field.  Intensities
    are summed over degenerate final levels so no gauge fixing is needed.
    """

    def __init__(self, p: SystemParams, initial: str = "tracked", ratio: float = 10.0):
        if initial not in ("tracked", "ground"):
            raise ValueError(f"initial must be 'tracked' or 'ground', got {initial!r}")
        self.p = p
        self.initial = initial
        self.ratio = ratio
        self.h0 = spinsys.build_hamiltonian(p.replace(Hz=0.0))
        self.zee = spinsys.zeeman_diagonal(p)
        self.blocks = _blocks(self.h0)
        self.el = drive_operator(p.sites, "electronic")
        self.nu = drive_operator(p.sites, "nuclear")
        self.keep = min(doublet_window(p), p.dim)
        self.ref: Optional[np.ndarray] = None

    def spectrum(self, hz: float) -> EigenSpectrum:
        n = self.h0.shape[0]
        energies = np.empty(n)
        states = np.zeros((n, n), dtype=complex)
        col = 0
        for idx in self.blocks:
            sub = self.h0[np.ix_(idx, idx)] + np.diag(hz * self.zee[idx])
            w, v = np.linalg.eigh(sub)
            energies[col:col + len(idx)] = w
            states[idx, col:col + len(idx)] = v
            col += len(idx)
        order = np.argsort(energies, kind="stable")[: self.keep]
        return EigenSpectrum(energies[order], states[:, order], n, self.p.sites)

    def pair(self, spec: EigenSpectrum) -> tuple[int, int]:
        if self.initial == "ground" or self.ref is None:
            i0 = 0
            if self.ref is None and self.initial == "tracked":
                self.ref = spec.states[:, 0].copy()
        else:
            i0 = int(np.argmax(np.abs(spec.states.conj().T @ self.ref)))
        psi = spec.states[:, i0]
        el = np.abs(spec.states.conj().T @ (self.el @ psi)) ** 2
        nu = np.abs(spec.states.conj().T @ (self.nu @ psi)) ** 2
        clusters = _clusters(spec.energies, DEGENERACY_TOL)
        best, best_j = 0.0, None
        for c in clusters:
            if i0 in c:
                continue
            e_sum, n_sum = el[c].sum(), nu[c].sum()
            if e_sum > 1e-8 and e_sum > self.ratio * n_sum and e_sum > best * (1 + 1e-9):
                best, best_j = e_sum, int(c[np.argmax(el[c])])
        if best_j is None:
            raise NoResonanceError("no electronic transition out of the initial state")
        return i0, best_j

    def frequency_ghz(self, hz: float) -> float:
        spec = self.spectrum(hz)
        i, j = self.pair(spec)
        return float(cm1_to_ghz(abs(spec.energies[j] - spec.energies[i])))


def transition_frequency_ghz(p: SystemParams, hz: float,
                             selector: Optional[Selector] = None) -> float:
    """Frequency of the selected transition at field ``hz`` (full solve)."""
    spec = solve(p.replace(Hz=hz))
    i, j = (selector or strongest_ground_transition)(spec)
    return float(cm1_to_ghz(abs(spec.energies[j] - spec.energies[i])))


def resonance_field(p: SystemParams, target_ghz: float = 95.0,
                    selector: Optional[Selector] = None,
                    h_max: float = 5.0, step: float = 0.01,
                    tol_ghz: float = 0.01, initial: str = "tracked") -> float:
    """Field (T) at which the selected transition sits at ``target_ghz``.

    Without a ``selector`` the strongest predominantly electronic transition
    out of the initial state is used (see ``_FieldScan`` for ``initial``).
    Scans upward in ``step`` increments for the first sign change, then
    refines with Brent's method.  A bracket that closes on a jump of the selected transition
    (e.g. a level crossing of the initial state) is reported as an error.
    """
    if not target_ghz > 0:
        raise NoResonanceError(f"target frequency must be positive, got {target_ghz}")
    if selector is None:
        scan = _FieldScan(p, initial)
        freq = scan.frequency_ghz
    else:
        def freq(h):
            return transition_frequency_ghz(p, h, selector)

    def g(h):
        return freq(h) - target_ghz

    fields = np.arange(1, int(round(h_max / step)) + 1) * step
    seen = []
    lo = g_lo = None
    for h in fields:
        try:
            val = g(h)
        except NoResonanceError:
            lo = None
            continue
        seen.append(val + target_ghz)
        if val == 0:
            return float(h)
        if lo is not None and np.sign(val) != np.sign(g_lo):
            hi = h
            break
        lo, g_lo = h, val
    else:
        rng = (min(seen), max(seen)) if seen else (float("nan"), float("nan"))
        raise NoResonanceError(
            f"no resonance at {target_ghz} GHz for 0 < Hz <= {h_max} T; "
            f"achievable range {rng[0]:.4f}..{rng[1]:.4f} GHz"
        )
    root = brentq(g, lo, hi, xtol=1e-9, rtol=1e-12, maxiter=200)
    residual = g(root)
    if abs(residual) > tol_ghz:
        raise NoResonanceError(
            f"selected transition jumps across {target_ghz} GHz near Hz = {root:.6f} T "
            f"(residual {residual:+.4f} GHz); the selector is discontinuous there"
        )
    return float(root)


# -- export ---------------------------------------------------------------------------

_MAGIC = b"MQES"


def save_spectrum(spec: EigenSpectrum, path) -> None:
    """Binary container: magic, u32 version, u64 dim, u64 retained, f64 energies, c128 vectors."""
    with open(path, "wb") as fh:
        fh.write(_MAGIC + struct.pack("<IQQ", 1, spec.source_dim, spec.retained))
        fh.write(np.ascontiguousarray(spec.energies, dtype="<f8").tobytes())
        # one eigenvector after another, each as interleaved (re, im) pairs
        fh.write(np.ascontiguousarray(spec.states.T, dtype="<c16").tobytes())


def load_spectrum(path, sites=None) -> EigenSpectrum:
    raw = Path(path).read_bytes()
    if raw[:4] != _MAGIC:
        raise ValueError(f"{path}: not a spectrum container")
    version, dim, kept = struct.unpack("<IQQ", raw[4:24])
    if version != 1:
        raise ValueError(f"{path}: unsupported container version {version}")
    off = 24
    energies = np.frombuffer(raw, "<f8", kept, off).copy()
    off += 8 * kept
    states = np.frombuffer(raw, "<c16", kept * dim, off).reshape(kept, dim).T.copy()
    return EigenSpectrum(energies, states, int(dim), sites)


def spectrum_summary_json(spec: EigenSpectrum, summary: SpectrumSummary) -> dict:
    def finite(x):
        return None if not np.isfinite(x) else float(x)

    return {
        "source_dim": spec.source_dim,
        "retained": spec.retained,
        "energies_cm1": [float(e) for e in spec.energies],
        "tunneling_delta_cm1": finite(summary.tunneling_delta),
        "gap_omega_cm1": finite(summary.gap_omega),
        "Ms": [float(x) for x in summary.ms_expectations],
        "Jz": [float(x) for x in summary.jz_expectations],
    }


def write_summary_json(spec: EigenSpectrum, summary: SpectrumSummary, path) -> None:
    Path(path).write_text(json.dumps(spectrum_summary_json(spec, summary), indent=1) + "\n")


__all__ = [
    "EigenSpectrum", "SpectrumSummary", "TransitionTable", "ConvergenceError",
    "NoResonanceError", "diagonalize", "truncate_low_energy", "canonicalize_degenerate",
    "summarize", "transition_table", "intensity_matrix", "resonance_field",
    "strongest_ground_transition", "solve", "doublet_window", "save_spectrum",
    "load_spectrum", "write_summary_json", "ghz_to_cm1",
]
