"""Pure-numpy versions of the compiled kernels."""
import numpy as np

_CHUNK_BYTES = 1 << 24


def angle_spectrum(y, n_fft):
    """Incoherent spatial spectrum ``sum_s |sum_n y[n, s] e^{-j 2 pi n l / n_fft}|``."""
    y = np.asarray(y, dtype=complex)
    n_ant, n_snap = y.shape
    if n_fft < n_ant:
        raise ValueError("n_fft must be >= number of antennas")
    out = np.zeros(n_fft)
    step = max(1, _CHUNK_BYTES // (16 * n_fft))
    for start in range(0, n_snap, step):
        block = np.fft.fft(y[:, start:start + step], n=n_fft, axis=0)
        out += np.abs(block).sum(axis=1)
    return out
