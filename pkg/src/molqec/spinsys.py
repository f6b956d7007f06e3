"""
Spin operators and the electron-nuclear Hamiltonian of an exchange-coupled trimer.

Three identical ions sit on a linear chain 1-2-3.  Each ion carries an
effective electron spin ``S`` and a nuclear spin ``I``.  The global tensor
factor ordering is fixed as ``e1 (x) n1 (x) e2 (x) n2 (x) e3 (x) n3`` and every
operator in the package is expressed in that product basis, with spin
projections listed in descending order (``m = +s, s-1, ..., -s``).

The Hamiltonian is

    H = -2 J (S1.S2 + S2.S3)
        + sum_i [ D Sz_i^2 + E (Sx_i^2 - Sy_i^2) ]
        + sum_i [ A_par Sz_i Iz_i + A_perp (Sx_i Ix_i + Sy_i Iy_i) + P Iz_i^2 ]
        + Hz sum_i [ mu_B g_z Sz_i + mu_N g_I Iz_i ]

Energies are in cm^-1, fields in tesla.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from fractions import Fraction
from functools import lru_cache
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .constants import MU_B, MU_N

N_SITES = 3
ELECTRON = "electron"
NUCLEAR = "nuclear"


def _as_half_integer(s) -> Fraction:
    two_s = Fraction(s).limit_denominator(4) * 2
    if two_s.denominator != 1 or two_s < 0 or abs(float(two_s) - 2 * float(s)) > 1e-12:
        raise ValueError(f"spin must be a nonnegative half-integer, got {s!r}")
    return two_s / 2


@lru_cache(maxsize=None)
def _spin_matrices(two_s: int):
    s = two_s / 2
    m = s - np.arange(two_s + 1)
    # <m+1|S+|m> = sqrt(s(s+1) - m(m+1)), upper off-diagonal in descending order
    sp_diag = np.sqrt(s * (s + 1) - m[1:] * (m[1:] + 1))
    splus = np.diag(sp_diag, k=1).astype(complex)
    sminus = splus.conj().T
    sx = 0.5 * (splus + sminus)
    sy = -0.5j * (splus - sminus)
    sz = np.diag(m).astype(complex)
    for mat in (sx, sy, sz):
        mat.setflags(write=False)
    return sx, sy, sz


def spin_matrices(s):
    """Return ``(Sx, Sy, Sz)`` for spin ``s`` in the descending-``m`` basis."""
    two_s = int(_as_half_integer(s) * 2)
    return _spin_matrices(two_s)


@dataclass(frozen=True)
class SpinSite:
    electron_spin: float
    nuclear_spin: float

    def __post_init__(self):
        _as_half_integer(self.electron_spin)
        _as_half_integer(self.nuclear_spin)

    @property
    def electron_dim(self) -> int:
        return int(round(2 * self.electron_spin)) + 1

    @property
    def nuclear_dim(self) -> int:
        return int(round(2 * self.nuclear_spin)) + 1

    @property
    def dim(self) -> int:
        return self.electron_dim * self.nuclear_dim


# Preset parameter sets.  J_ex, E, Hz (Tb) and J_ex, A_par (Cu) are mid-range
# defaults inside the explored windows; the remaining values are literature
# constants for 159Tb(3+) and 63Cu(2+).
PRESETS = {
    "Tb": dict(
        electron_spin=1.0, nuclear_spin=1.5,
        J_ex=-0.3, D=-1000.0, E=0.05,
        A_par=0.1038, A_perp=0.1038, P=0.01,
        g_xy=8.915, g_z=8.915, g_I=0.00073, Hz=0.2,
    ),
    "Cu": dict(
        electron_spin=0.5, nuclear_spin=1.5,
        J_ex=-5.0, D=0.0, E=0.0,
        A_par=0.0175, A_perp=0.002, P=0.00127,
        g_xy=2.0, g_z=2.1, g_I=0.00081, Hz=2.25,
    ),
}


@dataclass(frozen=True)
class SystemParams:
    """Full parameter set of a homotrimer.  Energies in cm^-1, field in T."""

    ion: str = "custom"
    electron_spin: float = 0.5
    nuclear_spin: float = 1.5
    J_ex: float = 0.0
    D: float = 0.0
    E: float = 0.0
    A_par: float = 0.0
    A_perp: float = 0.0
    P: float = 0.0
    g_xy: float = 2.0
    g_z: float = 2.0
    g_I: float = 0.0
    Hz: float = 0.0
    mu_B: float = MU_B
    mu_N: float = MU_N

    def __post_init__(self):
        SpinSite(self.electron_spin, self.nuclear_spin)
        if self.E < 0:
            raise ValueError(f"rhombic ZFS E must be >= 0, got {self.E}")
        if self.electron_spin == 0.5 and (self.D != 0 or self.E != 0):
            raise ValueError("D and E must vanish for an S=1/2 electron spin")

    @classmethod
    def preset(cls, ion: str, **overrides) -> "SystemParams":
        try:
            base = PRESETS[ion]
        except KeyError:
            raise ValueError(f"unknown preset {ion!r}; choose from {sorted(PRESETS)}") from None
        return cls(ion=ion, **{**base, **overrides})

    @property
    def site(self) -> SpinSite:
        return SpinSite(self.electron_spin, self.nuclear_spin)

    @property
    def sites(self) -> tuple[SpinSite, SpinSite, SpinSite]:
        return (self.site,) * N_SITES

    @property
    def dim(self) -> int:
        return self.site.dim ** N_SITES

    @property
    def A(self) -> float:
        if self.A_par != self.A_perp:
            raise AttributeError("hyperfine coupling is anisotropic; use A_par / A_perp")
        return self.A_par

    def replace(self, **changes) -> "SystemParams":
        return replace(self, **changes)

    def without_hyperfine(self) -> "SystemParams":
        return replace(self, A_par=0.0, A_perp=0.0)

    def electronic_only(self) -> "SystemParams":
        """Same electronic problem with the nuclei removed (I = 0)."""
        return replace(self, nuclear_spin=0.0, A_par=0.0, A_perp=0.0, P=0.0, g_I=0.0)

    # -- JSON ---------------------------------------------------------------

    def to_json_dict(self) -> dict:
        d = {
            "ion": self.ion,
            "J_ex_cm1": self.J_ex,
            "D_cm1": self.D,
            "E_cm1": self.E,
            "P_cm1": self.P,
            "g_I": self.g_I,
            "Hz_T": self.Hz,
        }
        if self.A_par == self.A_perp:
            d["A_cm1"] = self.A_par
        else:
            d["A_par_cm1"] = self.A_par
            d["A_perp_cm1"] = self.A_perp
        if self.g_xy == self.g_z:
            d["g_e"] = self.g_z
        else:
            d["g_e_xy"] = self.g_xy
            d["g_e_z"] = self.g_z
        if self.ion == "custom":
            d["S"] = self.electron_spin
            d["I"] = self.nuclear_spin
        return d

    @classmethod
    def from_json_dict(cls, d: dict) -> "SystemParams":
        d = dict(d)
        ion = d.pop("ion", "custom")
        kw = dict(PRESETS[ion]) if ion in PRESETS else {}
        if ion not in PRESETS and ion != "custom":
            raise ValueError(f"unknown ion {ion!r}")
        keymap = {
            "J_ex_cm1": "J_ex", "D_cm1": "D", "E_cm1": "E", "P_cm1": "P",
            "A_par_cm1": "A_par", "A_perp_cm1": "A_perp", "g_I": "g_I",
            "Hz_T": "Hz", "g_e_xy": "g_xy", "g_e_z": "g_z",
            "S": "electron_spin", "I": "nuclear_spin",
        }
        if "A_cm1" in d:
            a = float(d.pop("A_cm1"))
            kw["A_par"] = kw["A_perp"] = a
        if "g_e" in d:
            g = float(d.pop("g_e"))
            kw["g_xy"] = kw["g_z"] = g
        for key, value in d.items():
            if key not in keymap:
                raise ValueError(f"unknown parameter key {key!r}")
            kw[keymap[key]] = float(value)
        return cls(ion=ion, **kw)

    def dump(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "SystemParams":
        return cls.from_json_dict(json.loads(Path(path).read_text()))


# -- operators on the full space ----------------------------------------------


def _factor_dims(sites) -> list[int]:
    dims = []
    for s in sites:
        dims += [s.electron_dim, s.nuclear_dim]
    return dims


def embed_site_operator(op, site: int, kind: str, sites, sparse: bool = False):
    """Lift a single-spin operator onto the full e1 n1 e2 n2 e3 n3 space.

    ``site`` is 1-based.  ``kind`` selects the electron or nuclear factor of
    that site.  With ``sparse=True`` a CSR matrix is returned.
    """
    if not 1 <= site <= len(sites):
        raise IndexError(f"site index {site} out of range 1..{len(sites)}")
    if kind not in (ELECTRON, NUCLEAR):
        raise ValueError(f"kind must be {ELECTRON!r} or {NUCLEAR!r}, got {kind!r}")
    dims = _factor_dims(sites)
    slot = 2 * (site - 1) + (kind == NUCLEAR)
    op = np.asarray(op)
    if op.shape != (dims[slot], dims[slot]):
        raise ValueError(
            f"operator shape {op.shape} does not match {kind} dimension {dims[slot]} at site {site}"
        )
    left = int(np.prod(dims[:slot]))
    right = int(np.prod(dims[slot + 1:]))
    if sparse:
        return sp.kron(sp.kron(sp.identity(left, format="csr"), sp.csr_matrix(op)),
                       sp.identity(right, format="csr"), format="csr")
    return np.kron(np.kron(np.eye(left), op), np.eye(right))


def _site_ops(site: SpinSite):
    """Electron and nuclear spin vectors on one site's (2S+1)(2I+1) space."""
    ide = np.eye(site.electron_dim)
    idn = np.eye(site.nuclear_dim)
    s_vec = [np.kron(m, idn) for m in spin_matrices(site.electron_spin)]
    i_vec = [np.kron(ide, m) for m in spin_matrices(site.nuclear_spin)]
    return s_vec, i_vec


def single_site_hamiltonian(p: SystemParams) -> np.ndarray:
    """Everything in H that acts on one ion: ZFS, hyperfine, quadrupole, Zeeman."""
    (sx, sy, sz), (ix, iy, iz) = _site_ops(p.site)
    h = p.D * sz @ sz + p.E * (sx @ sx - sy @ sy)
    h = h + p.A_par * sz @ iz + p.A_perp * (sx @ ix + sy @ iy)
    h = h + p.P * iz @ iz
    h = h + p.Hz * (p.mu_B * p.g_z * sz + p.mu_N * p.g_I * iz)
    return h


def build_hamiltonian(p: SystemParams) -> np.ndarray:
    """Dense Hermitian Hamiltonian on the full (2S+1)^3 (2I+1)^3 space."""
    d = p.site.dim
    one = sp.identity(d, format="csr")
    h_site = sp.csr_matrix(single_site_hamiltonian(p))
    h = (sp.kron(sp.kron(h_site, one), one)
         + sp.kron(sp.kron(one, h_site), one)
         + sp.kron(sp.kron(one, one), h_site))
    if p.J_ex != 0:
        s_vec, _ = _site_ops(p.site)
        # linear chain: bonds 1-2 and 2-3 only
        for s in s_vec:
            ss = sp.kron(s, s, format="csr")
            h = h - 2 * p.J_ex * (sp.kron(ss, one) + sp.kron(one, ss))
    h = h.toarray()
    return 0.5 * (h + h.conj().T)


def zeeman_diagonal(p: SystemParams) -> np.ndarray:
    """Diagonal of dH/dHz (the field enters only through Sz and Iz)."""
    sites = p.sites
    return (p.mu_B * p.g_z * electronic_sz_diagonal(sites)
            + p.mu_N * p.g_I * (total_jz_diagonal(sites) - electronic_sz_diagonal(sites)))


def total_jz_diagonal(sites) -> np.ndarray:
    """Diagonal of total Jz = sum Sz_i + sum Iz_i (it is diagonal in the product basis)."""
    diag = np.zeros(1)
    for s in sites:
        for spin in (s.electron_spin, s.nuclear_spin):
            m = spin - np.arange(int(round(2 * spin)) + 1)
            diag = np.add.outer(diag, m).ravel()
    return diag


def electronic_sz_diagonal(sites) -> np.ndarray:
    """Diagonal of total electronic Sz."""
    diag = np.zeros(1)
    for s in sites:
        m = s.electron_spin - np.arange(s.electron_dim)
        diag = np.add.outer(np.add.outer(diag, m).ravel(), np.zeros(s.nuclear_dim)).ravel()
    return diag


def site_sz_squared_diagonal(sites, site: int) -> np.ndarray:
    """Diagonal of Sz_i^2 for a 1-based site index."""
    diag = np.zeros(1)
    for k, s in enumerate(sites, start=1):
        m = s.electron_spin - np.arange(s.electron_dim)
        vals = m**2 if k == site else np.zeros_like(m)
        diag = np.add.outer(np.add.outer(diag, vals).ravel(), np.zeros(s.nuclear_dim)).ravel()
    return diag


def pseudo_spin_x(s) -> np.ndarray:
    """Transverse drive acting inside the lowest +-s doublet.

    For s = 1/2 this is Sx.  For s >= 1 the doublet m = +-s is not connected
    by Sx, so the drive is the pseudo-spin-1/2 operator (|+s><-s| + h.c.)/2.
    """
    sx, _, _ = spin_matrices(s)
    if s == 0.5:
        return sx
    n = int(round(2 * s)) + 1
    op = np.zeros((n, n), dtype=complex)
    op[0, -1] = op[-1, 0] = 0.5
    return op


def electronic_drive(sites):
    """Total electronic transverse drive operator (sparse)."""
    return sum(
        embed_site_operator(pseudo_spin_x(s.electron_spin), k, ELECTRON, sites, sparse=True)
        for k, s in enumerate(sites, start=1)
    )


def nuclear_drive(sites):
    """Total nuclear Ix, the ENDOR radio-frequency drive (sparse)."""
    return sum(
        embed_site_operator(spin_matrices(s.nuclear_spin)[0], k, NUCLEAR, sites, sparse=True)
        for k, s in enumerate(sites, start=1)
    )


def swap_13_permutation(sites) -> np.ndarray:
    """Index permutation realising the site 1 <-> site 3 exchange on state vectors."""
    dims = _factor_dims(sites)
    if dims[0:2] != dims[4:6]:
        raise ValueError("sites 1 and 3 differ; no 1<->3 symmetry")
    idx = np.arange(int(np.prod(dims))).reshape(dims)
    return idx.transpose(4, 5, 2, 3, 0, 1).ravel()
