"""Physical constants in the spectroscopic units used throughout (cm^-1, tesla, GHz, kelvin)."""

MU_B = 0.466864  # Bohr magneton, cm^-1 / T
MU_N = 2.54262e-4  # nuclear magneton, cm^-1 / T
K_B = 0.695035  # Boltzmann constant, cm^-1 / K

CM1_TO_GHZ = 29.9792458  # speed of light in cm/ns
GHZ_TO_CM1 = 1.0 / CM1_TO_GHZ


def cm1_to_ghz(x):
    return x * CM1_TO_GHZ


def ghz_to_cm1(x):
    return x * GHZ_TO_CM1
