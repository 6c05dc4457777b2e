"""Physical constants (CODATA 2018 exact values)."""

PLANCK_H = 6.62607015e-34    # J s
BOLTZMANN_KB = 1.380649e-23  # J / K
