"""Electron-spin-echo stick spectra and the first-qubit readout from the sign of Ms."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from ..constants import K_B, cm1_to_ghz
from ..spectrum import EigenSpectrum, TransitionTable
from .. import spinsys

MERGE_TOL_GHZ = 1e-9


@dataclass(frozen=True)
class ESESpectrum:
    freq_ghz: np.ndarray
    amplitude: np.ndarray

    def __len__(self):
        return len(self.freq_ghz)

    def amplitude_at(self, freq_ghz: float, tol: float = MERGE_TOL_GHZ) -> float:
        hit = np.abs(self.freq_ghz - freq_ghz) <= tol
        return float(self.amplitude[hit].sum())

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["freq_GHz", "amplitude"])
            for f, a in zip(self.freq_ghz, self.amplitude):
                w.writerow([repr(float(f)), repr(float(a))])


def _merge(freq: np.ndarray, amp: np.ndarray, tol: float = MERGE_TOL_GHZ) -> ESESpectrum:
    order = np.argsort(freq, kind="stable")
    freq, amp = freq[order], amp[order]
    out_f: list[float] = []
    out_a: list[float] = []
    for f, a in zip(freq, amp):
        if out_f and f - out_f[-1] <= tol:
            out_a[-1] += a
        else:
            out_f.append(f)
            out_a.append(a)
    return ESESpectrum(np.array(out_f), np.array(out_a))


def _check_norm(state: np.ndarray) -> np.ndarray:
    psi = np.asarray(state, dtype=complex)
    norm = np.linalg.norm(psi)
    if abs(norm - 1) > 1e-10:
        raise ValueError(f"state is not normalized (norm {norm:.12f})")
    return psi


def ese_readout(state: np.ndarray, spec: EigenSpectrum, tt: TransitionTable,
                temperature: float = 0.0, min_amplitude: float = 0.0) -> ESESpectrum:
    """Stick spectrum of the allowed transitions out of the populated states.

    Each transition ``i -> j`` contributes ``population(i) * intensity(i, j)``
    at ``|E_j - E_i|``.  At ``temperature > 0`` each stick is further scaled
    by the thermal polarization ``tanh(dE / 2 kT)`` of its transition.
    Coincident frequencies are summed.
    """
    pop = np.abs(_check_norm(state)) ** 2
    if pop.shape != (spec.retained,):
        raise ValueError(f"state has {pop.shape[0]} entries, spectrum retains {spec.retained}")
    i, j, w = tt.i, tt.j, tt.intensity
    amp = (pop[i] + pop[j]) * w
    de = np.abs(spec.energies[j] - spec.energies[i])
    if temperature > 0:
        amp = amp * np.tanh(de / (2 * K_B * temperature))
    keep = amp > min_amplitude
    return _merge(cm1_to_ghz(de[keep]), amp[keep])


def ensemble_spectrum(outcomes: Iterable[tuple[float, ESESpectrum]]) -> ESESpectrum:
    """Weighted average of spectra, e.g. over error outcomes weighted by their rates."""
    outcomes = list(outcomes)
    total = sum(w for w, _ in outcomes)
    if total <= 0:
        raise ValueError("ensemble weights must sum to a positive number")
    f = np.concatenate([s.freq_ghz for _, s in outcomes])
    a = np.concatenate([w / total * s.amplitude for w, s in outcomes])
    return _merge(f, a)


def distinguishing_frequencies(a: ESESpectrum, b: ESESpectrum, rel: float = 1e-6) -> np.ndarray:
    """Frequencies where the two spectra differ by more than ``rel`` of the larger peak."""
    freqs = _merge(np.concatenate([a.freq_ghz, b.freq_ghz]),
                   np.zeros(len(a) + len(b))).freq_ghz
    scale = max(np.abs(a.amplitude).max(initial=0), np.abs(b.amplitude).max(initial=0), 1e-300)
    diff = np.array([abs(a.amplitude_at(f) - b.amplitude_at(f)) for f in freqs])
    return freqs[diff > rel * scale]


@dataclass(frozen=True)
class Measurement:
    bit: Optional[int]  # None when indeterminate
    confidence: float
    ms: float
    indeterminate: bool


def measure_first_qubit(state: np.ndarray, spec: EigenSpectrum, labeling=None,
                        tol: float = 1e-10) -> Measurement:
    """Read the first qubit from the sign of the population-weighted electronic Ms.

    Bit 1 means ``<Ms> < 0``.  The confidence is ``|<Ms>|`` over the largest
    ``|<Ms>|`` of any retained eigenstate.
    """
    pop = np.abs(_check_norm(state)) ** 2
    if labeling is not None and getattr(labeling, "ms", None) is not None:
        ms_states = np.asarray(labeling.ms)
    else:
        ms_states = spec.expectation_diag(spinsys.electronic_sz_diagonal(spec.sites))
    ms = float(pop @ ms_states)
    scale = float(np.abs(ms_states).max())
    if abs(ms) < tol:
        return Measurement(None, 0.0, ms, True)
    return Measurement(int(ms < 0), min(1.0, abs(ms) / scale), ms, False)


__all__ = ["ESESpectrum", "ese_readout", "ensemble_spectrum", "distinguishing_frequencies",
           "Measurement", "measure_first_qubit"]
