"""dB <-> linear conversions.

Power quantities use 10*log10, amplitude quantities 20*log10. Everything in
the package goes through these helpers so the two are never mixed up.
"""

import numpy as np

SPEED_OF_LIGHT = 299792458.0


def db2pow(x):
    return np.power(10.0, np.asarray(x, dtype=float) / 10.0)


def pow2db(x):
    return 10.0 * np.log10(x)


def db2amp(x):
    return np.power(10.0, np.asarray(x, dtype=float) / 20.0)


def amp2db(x):
    return 20.0 * np.log10(x)


def dbm2watt(x):
    return db2pow(np.asarray(x, dtype=float) - 30.0)


def watt2dbm(x):
    return pow2db(x) + 30.0


def wavelength(fc: float) -> float:
    """Carrier wavelength in meters for a frequency in Hz."""
    return SPEED_OF_LIGHT / fc
