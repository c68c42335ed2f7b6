import math

C_NM_PER_PS = 299792.458  # speed of light, nm/ps (same digits as m/s * 1e-3)
FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))
DEFAULT_LATENCY_PS_PER_KM = 4.9e6  # group index ~1.468: 4.9 µs per km


def angular_frequency(lambda_nm):
    """Angular optical frequency in rad/ps."""
    return 2.0 * math.pi * C_NM_PER_PS / lambda_nm


def wavelength_from_angular(omega):
    return 2.0 * math.pi * C_NM_PER_PS / omega
