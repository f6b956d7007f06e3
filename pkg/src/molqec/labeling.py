"""
Qubit labels for electron-nuclear eigenstates and the separability statistic.

Electronic labels follow the three-doublet correspondence below (pseudo-spin
up = m_S = +S, down = m_S = -S; for S = 1 the m_S = 0 level is discarded):

    |000>  S=3/2 Ms=+3/2   uuu
    |010>  S=3/2 Ms=+1/2   (udu + uud + duu)/sqrt3
    |110>  S=3/2 Ms=-1/2   (dud + ddu + udd)/sqrt3
    |100>  S=3/2 Ms=-3/2   ddd
    |001>  S=1/2 Ms=+1/2   (duu - uud)/sqrt2                 (A = 0 doublet)
    |101>  S=1/2 Ms=-1/2   (ddu - udd)/sqrt2                 (A = 0 doublet)
    |011>  S=1/2 Ms=+1/2   (2 udu - duu - uud)/sqrt6         (A = 1 doublet)
    |111>  S=1/2 Ms=-1/2   (2 dud - udd - ddu)/sqrt6         (A = 1 doublet)

``A`` is the intermediate spin S1 + S3.  Eigenstates are matched to these
prototypes by maximum total overlap, which reproduces the table exactly for
Heisenberg-coupled S = 1/2 ions and continues it to Ising-like S = 1 ions.

Nuclear labels use two bits per nucleus, m_I = +3/2, +1/2, -1/2, -3/2 ->
00, 01, 10, 11, concatenated over nuclei 1, 2, 3.
"""

from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import spinsys
from .spectrum import (DEGENERACY_TOL, EigenSpectrum, _clusters, intensity_matrix, solve)
from .spinsys import SystemParams

RANK = 128
FIDELITY_FLOOR = 1e-6

# bits -> (S, Ms, intermediate spin A = |S1+S3|, or None for the quartet)
TABLE_I = {
    "000": (1.5, 1.5, 1),
    "010": (1.5, 0.5, 1),
    "110": (1.5, -0.5, 1),
    "100": (1.5, -1.5, 1),
    "001": (0.5, 0.5, 0),
    "101": (0.5, -0.5, 0),
    "011": (0.5, 0.5, 1),
    "111": (0.5, -0.5, 1),
}

_PROTOTYPES = {
    "000": {"uuu": 1},
    "010": {"udu": 1, "uud": 1, "duu": 1},
    "110": {"dud": 1, "ddu": 1, "udd": 1},
    "100": {"ddd": 1},
    "001": {"duu": 1, "uud": -1},
    "101": {"ddu": 1, "udd": -1},
    "011": {"udu": 2, "duu": -1, "uud": -1},
    "111": {"dud": 2, "udd": -1, "ddu": -1},
}


class LabelingError(ValueError):
    pass


def table_one_prototypes(electron_spin: float) -> dict[str, np.ndarray]:
    """Prototype vectors of the electronic labels on the (2S+1)^3 electron space."""
    d = int(round(2 * electron_spin)) + 1
    pos = {"u": 0, "d": d - 1}
    out = {}
    for bits, terms in _PROTOTYPES.items():
        v = np.zeros(d**3, dtype=complex)
        for conf, coef in terms.items():
            i, j, k = (pos[c] for c in conf)
            v[(i * d + j) * d + k] = coef
        out[bits] = v / np.linalg.norm(v)
    return out


# -- electronic labels ------------------------------------------------------------


@dataclass(frozen=True)
class ElectronicLabeling:
    bits: tuple[str, ...]  # per electronic eigenstate, in spectrum order
    overlaps: np.ndarray  # |<prototype|state>|^2 of the assigned prototype
    total_spin: np.ndarray  # S from <S^2> = S(S+1), pseudo-spin-1/2 units
    ms: np.ndarray  # <Ms>, pseudo-spin-1/2 units

    @property
    def labels(self) -> tuple[str, ...]:
        return self.bits

    def index_of(self, bits: str) -> int:
        return self.bits.index(bits)


def electronic_spectrum(p: SystemParams) -> EigenSpectrum:
    """Lowest eight states of the three coupled electron spins (nuclei removed)."""
    return solve(p.electronic_only())


def _pseudo_spin_ops(electron_spin):
    """Pseudo-spin-1/2 (Sx, Sy, Sz) acting on the +-S doublet of one ion."""
    d = int(round(2 * electron_spin)) + 1
    sx = np.zeros((d, d), complex)
    sy = np.zeros((d, d), complex)
    sz = np.zeros((d, d), complex)
    sx[0, -1] = sx[-1, 0] = 0.5
    sy[0, -1], sy[-1, 0] = -0.5j, 0.5j
    sz[0, 0], sz[-1, -1] = 0.5, -0.5
    return sx, sy, sz


def _total_pseudo_spin_squared(electron_spin) -> np.ndarray:
    d = int(round(2 * electron_spin)) + 1
    one = np.eye(d)

    def on_site(op, i):
        f = [op if k == i else one for k in range(3)]
        return np.kron(np.kron(f[0], f[1]), f[2])

    total = np.zeros((d**3, d**3), complex)
    for op in _pseudo_spin_ops(electron_spin):
        s = sum(on_site(op, i) for i in range(3))
        total += s @ s
    return total


def electronic_labeling(spec: EigenSpectrum, min_overlap: float = 0.5) -> ElectronicLabeling:
    """Assign the eight electronic labels to an electronic-only spectrum.

    Raises ``LabelingError`` when the states do not resemble the
    quartet-plus-two-doublets structure (some assigned overlap below
    ``min_overlap``).
    """
    if spec.retained != 8:
        raise LabelingError(f"expected 8 electronic states, got {spec.retained}")
    dim = spec.states.shape[0]
    d = round(dim ** (1 / 3))
    if d**3 != dim:
        raise LabelingError(f"state dimension {dim} is not that of three identical electron spins")
    electron_spin = (d - 1) / 2
    protos = table_one_prototypes(electron_spin)
    names = list(protos)
    proto_mat = np.column_stack([protos[b] for b in names])
    weight = np.abs(proto_mat.conj().T @ spec.states) ** 2  # prototype x state
    rows, cols = linear_sum_assignment(-weight)
    bits = [""] * 8
    overlaps = np.empty(8)
    for r, c in zip(rows, cols):
        bits[c] = names[r]
        overlaps[c] = weight[r, c]
    if overlaps.min() < min_overlap:
        bad = [(bits[k], float(overlaps[k])) for k in np.flatnonzero(overlaps < min_overlap)]
        raise LabelingError(
            f"electronic spectrum does not match two doublets plus a quartet; weak assignments {bad}"
        )
    s2 = np.einsum("ik,ij,jk->k", spec.states.conj(), _total_pseudo_spin_squared(electron_spin),
                   spec.states).real
    total_spin = -0.5 + np.sqrt(0.25 + np.clip(s2, 0, None))
    sz_diag = np.zeros(1)
    for _ in range(3):
        m = np.zeros(d)
        m[0], m[-1] = 0.5, -0.5
        sz_diag = np.add.outer(sz_diag, m).ravel()
    ms = spec.expectation_diag(sz_diag)
    return ElectronicLabeling(tuple(bits), overlaps, total_spin, ms)


# -- nuclear labels ------------------------------------------------------------------


def nuclear_bits_per_site(nuclear_spin: float) -> int:
    return max(1, math.ceil(math.log2(int(round(2 * nuclear_spin)) + 1))) if nuclear_spin else 0


def nuclear_labeling(nuclear_spin: float) -> dict[tuple, str]:
    """Map each nuclear product state (m1, m2, m3) to its bit string."""
    n = int(round(2 * nuclear_spin)) + 1
    width = nuclear_bits_per_site(nuclear_spin)
    ms = [nuclear_spin - k for k in range(n)]
    out = {}
    for idx in itertools.product(range(n), repeat=3):
        out[tuple(ms[i] for i in idx)] = "".join(format(i, f"0{width}b") if width else "" for i in idx)
    return out


# -- hyperfine-free reference ------------------------------------------------------------


@dataclass(frozen=True)
class ReferenceSpectrum(EigenSpectrum):
    """Product eigenstates of the hyperfine-free Hamiltonian.

    ``electronic_index[k]`` points into the electronic spectrum and
    ``nuclear_index[k]`` is the (i1, i2, i3) tuple of nuclear basis indices.
    """

    electronic_index: np.ndarray = field(default=None)
    nuclear_index: np.ndarray = field(default=None)
    electronic: EigenSpectrum = field(default=None)


def nuclear_site_levels(p: SystemParams) -> np.ndarray:
    m = p.nuclear_spin - np.arange(p.site.nuclear_dim)
    return p.P * m**2 + p.Hz * p.mu_N * p.g_I * m


def reference_spectrum(p: SystemParams, electronic: EigenSpectrum | None = None) -> ReferenceSpectrum:
    """Eigenstates with the hyperfine coupling switched off, built as exact products.

    With A = 0 the Hamiltonian is H_e (x) 1 + 1 (x) H_n and H_n is diagonal, so
    every eigenvector is |electronic_k> (x) |m1 m2 m3>.  Degenerate nuclear
    permutations therefore keep a definite product gauge.
    """
    el = electronic if electronic is not None else electronic_spectrum(p)
    de, dn = p.site.electron_dim, p.site.nuclear_dim
    levels = nuclear_site_levels(p)
    nuc = np.array(list(itertools.product(range(dn), repeat=3)))
    e_nuc = levels[nuc].sum(axis=1)
    energies = (el.energies[:, None] + e_nuc[None, :]).ravel()
    e_idx = np.repeat(np.arange(el.retained), len(nuc))
    n_idx = np.tile(np.arange(len(nuc)), el.retained)
    order = np.argsort(energies, kind="stable")
    energies, e_idx, n_idx = energies[order], e_idx[order], n_idx[order]

    dim = p.dim
    states = np.zeros((dim, len(order)), dtype=complex)
    el_t = el.states.reshape(de, de, de, -1)
    for col, (k, nn) in enumerate(zip(e_idx, n_idx)):
        a, b, c = nuc[nn]
        t = np.zeros((de, dn, de, dn, de, dn), dtype=complex)
        t[:, a, :, b, :, c] = el_t[:, :, :, k]
        states[:, col] = t.ravel()
    return ReferenceSpectrum(energies, states, dim, p.sites,
                             electronic_index=e_idx, nuclear_index=nuc[n_idx], electronic=el)


# -- fidelity matching -------------------------------------------------------------------


@dataclass(frozen=True)
class FidelityMatch:
    matched: np.ndarray  # reference index per actual state
    fidelities: np.ndarray  # subspace-projection fidelity per actual state
    duplicates: list  # (reference_index, [(actual_index, fidelity), ...])
    mode: str


def fidelity_match(actual: EigenSpectrum, reference: EigenSpectrum, mode: str = "greedy",
                   tol: float = DEGENERACY_TOL) -> FidelityMatch:
    """Pair every actual state with a reference state and report F = |<a|s>|.

    Against a degenerate reference multiplet the fidelity is the norm of the
    projection onto that multiplet.  ``mode="greedy"`` takes the best
    reference for each actual state independently; ``mode="assignment"``
    solves the bijective maximum-overlap assignment.
    """
    if actual.retained != reference.retained:
        raise ValueError(f"retained counts differ: {actual.retained} vs {reference.retained}")
    if mode not in ("greedy", "assignment"):
        raise ValueError(f"unknown matching mode {mode!r}")
    w = np.abs(reference.states.conj().T @ actual.states) ** 2  # reference x actual
    clusters = _clusters(reference.energies, tol)
    starts = np.array([c[0] for c in clusters])
    cluster_of = np.repeat(np.arange(len(clusters)), [len(c) for c in clusters])
    wc = np.add.reduceat(w, starts, axis=0)  # cluster x actual
    if mode == "greedy":
        best_c = np.argmax(wc, axis=0)
        matched = np.empty(actual.retained, dtype=int)
        for a, c in enumerate(best_c):
            members = clusters[c]
            matched[a] = members[np.argmax(w[members, a])]
    else:
        rows, cols = linear_sum_assignment(-w)
        matched = np.empty(actual.retained, dtype=int)
        matched[cols] = rows
    fid = np.sqrt(np.clip(wc[cluster_of[matched], np.arange(actual.retained)], 0.0, 1.0))

    duplicates = []
    claims: dict[int, list] = {}
    for a, s in enumerate(matched):
        claims.setdefault(int(cluster_of[s]), []).append(a)
    for c, owners in sorted(claims.items()):
        if len(owners) > len(clusters[c]):
            ref = int(clusters[c][0]) if len(clusters[c]) == 1 else [int(x) for x in clusters[c]]
            duplicates.append((ref, [(a, float(fid[a])) for a in owners]))
    return FidelityMatch(matched, fid, duplicates, mode)


@dataclass(frozen=True)
class FidelityReport:
    all_fidelities: np.ndarray  # descending
    f_128: float
    one_minus_f_128: float  # raw

    @property
    def one_minus_f_128_floored(self) -> float:
        return max(self.one_minus_f_128, FIDELITY_FLOOR)


def quartile_statistic(fidelities, rank: int = RANK) -> FidelityReport:
    """The ``rank``-th highest fidelity (bottom of the first quartile for 512 states)."""
    f = np.sort(np.clip(np.asarray(fidelities, dtype=float), 0.0, 1.0))[::-1]
    if len(f) < rank:
        raise ValueError(f"need at least {rank} fidelities, got {len(f)}")
    f_r = float(f[rank - 1])
    return FidelityReport(f, f_r, max(0.0, 1.0 - f_r))


def separability(p: SystemParams) -> FidelityReport:
    """1 - F_128 for one parameter point (greedy matching)."""
    actual = solve(p)
    ref = reference_spectrum(p)
    return quartile_statistic(fidelity_match(actual, ref).fidelities)


# -- full 9-bit labeling -------------------------------------------------------------------


@dataclass(frozen=True)
class LabelEntry:
    electronic_bits: str
    nuclear_bits: str
    fidelity: float
    matched_reference_index: int

    @property
    def label(self) -> str:
        return self.electronic_bits + self.nuclear_bits


@dataclass(frozen=True)
class QubitLabeling:
    entries: tuple[LabelEntry, ...]
    energies: np.ndarray
    ms: np.ndarray  # <total electronic Sz> per state

    def __len__(self):
        return len(self.entries)

    @property
    def labels(self) -> tuple[str, ...]:
        return tuple(e.label for e in self.entries)

    @property
    def n_bits(self) -> int:
        return len(self.entries[0].label)

    def label_of(self, index: int) -> str:
        return self.entries[index].label

    def index_of(self, label: str) -> int:
        try:
            return self._index[label]
        except KeyError:
            raise KeyError(f"no eigenstate carries label |{label}>") from None

    @property
    def _index(self) -> dict:
        cache = self.__dict__.get("_index_cache")
        if cache is None:
            cache = {e.label: k for k, e in enumerate(self.entries)}
            object.__setattr__(self, "_index_cache", cache)
        return cache

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["state_index", "energy_cm1", "label_9bit", "fidelity", "Ms_expectation"])
            for k, e in enumerate(self.entries):
                w.writerow([k, repr(float(self.energies[k])), e.label,
                            repr(float(e.fidelity)), repr(float(self.ms[k]))])


def full_labeling(actual: EigenSpectrum, reference: ReferenceSpectrum,
                  electronic_map: ElectronicLabeling | None = None,
                  nuclear_map: dict | None = None) -> QubitLabeling:
    """Give each actual eigenstate the label of its matched product reference state."""
    el_map = electronic_map or electronic_labeling(reference.electronic)
    site = actual.sites[0]
    nuc_map = nuclear_map or nuclear_labeling(site.nuclear_spin)
    m_vals = site.nuclear_spin - np.arange(site.nuclear_dim)
    match = fidelity_match(actual, reference, mode="assignment")
    entries = []
    for a, s in enumerate(match.matched):
        e_bits = el_map.bits[reference.electronic_index[s]]
        n_bits = nuc_map[tuple(float(m_vals[i]) for i in reference.nuclear_index[s])]
        entries.append(LabelEntry(e_bits, n_bits, float(match.fidelities[a]), int(s)))
    labels = [e.label for e in entries]
    if len(set(labels)) != len(labels):
        seen: dict[str, list] = {}
        for k, lab in enumerate(labels):
            seen.setdefault(lab, []).append(k)
        raise LabelingError(f"labeling is not a bijection; collisions {[(l, ks) for l, ks in seen.items() if len(ks) > 1]}")
    ms = actual.expectation_diag(spinsys.electronic_sz_diagonal(actual.sites))
    return QubitLabeling(tuple(entries), actual.energies.copy(), ms)


def label_system(p: SystemParams):
    """Solve ``p`` and return ``(actual, reference, labeling)``."""
    actual = solve(p)
    ref = reference_spectrum(p)
    return actual, ref, full_labeling(actual, ref)


# -- labeling constraints ------------------------------------------------------------------


def hamming(a: str, b: str) -> int:
    return sum(x != y for x, y in zip(a, b))


def single_qubit_error_violations(labels, intensity: np.ndarray, support,
                                  threshold: float = 1e-8) -> list:
    """Drive-allowed transitions out of ``support`` that flip more than one bit.

    ``labels`` gives the bit string of every state, ``intensity`` the drive
    intensity matrix over the same states and ``support`` the indices of the
    encoded-state support.  Returns ``(i, j, intensity, distance)`` tuples.
    """
    bad = []
    for i in support:
        for j in np.flatnonzero(intensity[i] > threshold):
            if j == i:
                continue
            dist = hamming(labels[i], labels[j])
            if dist != 1:
                bad.append((int(i), int(j), float(intensity[i, j]), dist))
    return bad


def first_bit_sign_violations(labels, ms) -> list:
    """States where 'first bit = 1' disagrees with '<Ms> < 0'."""
    return [(k, lab, float(m)) for k, (lab, m) in enumerate(zip(labels, ms))
            if (lab[0] == "1") != (m < 0)]


def electronic_constraint_report(p: SystemParams, support=("000", "111"), threshold: float = 1e-8):
    """Label the electronic-only spectrum and check both labeling constraints."""
    spec = electronic_spectrum(p)
    lab = electronic_labeling(spec)
    inten = intensity_matrix(spec, "electronic")
    idx = [lab.index_of(b) for b in support]
    return {
        "labeling": lab,
        "spectrum": spec,
        "intensity": inten,
        "hamming_violations": single_qubit_error_violations(lab.bits, inten, idx, threshold),
        "sign_violations": first_bit_sign_violations(lab.bits, lab.ms),
    }
