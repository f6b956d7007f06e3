"""Electron-nuclear spin trimers as nine-qubit registers for error correction."""
from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from .spinsys import SpinSite, SystemParams, build_hamiltonian, embed_site_operator, spin_matrices
from .spectrum import (EigenSpectrum, TransitionTable, canonicalize_degenerate, diagonalize,
                       resonance_field, solve, summarize, transition_table, truncate_low_energy)
from .labeling import (QubitLabeling, electronic_labeling, fidelity_match, full_labeling,
                       label_system, nuclear_labeling, quartile_statistic, reference_spectrum,
                       separability)

__all__ = [
    "__version__", "SpinSite", "SystemParams", "build_hamiltonian", "embed_site_operator",
    "spin_matrices", "EigenSpectrum", "TransitionTable", "canonicalize_degenerate", "diagonalize",
    "resonance_field", "solve", "summarize", "transition_table", "truncate_low_energy",
    "QubitLabeling", "electronic_labeling", "fidelity_match", "full_labeling", "label_system",
    "nuclear_labeling", "quartile_statistic", "reference_spectrum", "separability",
]
