"""Pure-numpy versions of the compiled kernels in ``_kernels.pyx``."""

import numpy as np

RESET_NONE, RESET_SOFT, RESET_HARD = 0, 1, 2


def lif_update(u, x_prev, drive, beta, theta, reset, spikes):
    if not (u.shape == x_prev.shape == drive.shape == spikes.shape):
        raise ValueError("lif_update: buffer lengths differ")
    if reset == RESET_SOFT:
        v = drive + beta * u - x_prev * theta
    elif reset == RESET_HARD:
        v = drive + beta * u * (1.0 - x_prev)
    else:
        v = drive + beta * u
    u[...] = v
    np.greater(v, theta, out=spikes, casting="unsafe")
    return int(np.count_nonzero(spikes))


def column_moments(a):
    a = np.asarray(a, dtype=np.float64)
    if a.shape[0] == 0:
        raise ValueError("column_moments: empty input")
    mean = a.mean(axis=0)
    d = a - mean
    d2 = d * d
    return np.stack([mean, d2.mean(axis=0), (d2 * d).mean(axis=0), (d2 * d2).mean(axis=0)], axis=1)


def arctan_surrogate(u, theta, slope, out):
    if out.shape != u.shape:
        raise ValueError("arctan_surrogate: buffer lengths differ")
    z = np.pi * slope * (u - theta)
    np.divide(slope, 1.0 + z * z, out=out)
