"""Physical constants and background-medium helpers (free space, SI units)."""

import math

EPS0 = 8.8541878128e-12  # vacuum permittivity [F/m], CODATA 2018
MU0 = 1.25663706212e-6   # vacuum permeability [H/m], CODATA 2018
C0 = 1.0 / math.sqrt(EPS0 * MU0)


def wavenumber(freq_hz):
    """Free-space wavenumber k = omega * sqrt(mu0 * eps0) for exp(+j w t)."""
    if freq_hz <= 0:
        raise ValueError(f"frequency must be positive, got {freq_hz}")
    return 2.0 * math.pi * freq_hz / C0
