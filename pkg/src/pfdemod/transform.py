"""Unitary DFT and partial FFT demodulation."""

from dataclasses import dataclass

import numpy as np


def _check_pow2(n):
    if n < 1 or n & (n - 1):
        raise ValueError(f"transform length must be a power of two, got {n}")


def dft_unitary(v):
    """Unitary DFT along the last axis (``1/sqrt(K)`` scaling)."""
    v = np.asarray(v)
    _check_pow2(v.shape[-1])
    return np.fft.fft(v, axis=-1, norm="ortho")


def idft_unitary(v):
    """Inverse of :func:`dft_unitary`."""
    v = np.asarray(v)
    _check_pow2(v.shape[-1])
    return np.fft.ifft(v, axis=-1, norm="ortho")


@dataclass(frozen=True)
class PartialDemodMatrix:
    """Partial FFT outputs of one received block.

    ``values[m, k]`` is subcarrier k of the transform of subblock m, so row m
    is the full length-K spectrum of the m-th windowed segment.
    """

    values: np.ndarray

    @property
    def M(self):
        return self.values.shape[0]

    @property
    def K(self):
        return self.values.shape[1]

    @property
    def J(self):
        return self.K // self.M

    def column(self, k):
        """The length-M vector of subblock outputs on subcarrier k."""
        if not 0 <= k < self.K:
            raise ValueError(f"subcarrier {k} out of range [0, {self.K})")
        return self.values[:, k]

    def columns(self, ks):
        return self.values[:, np.asarray(ks, dtype=int)]


def partial_fft_demodulate(r, M):
    """Split ``r`` into M equal rectangular windows and transform each.

    Parameters
    ----------
    r : array_like of complex, shape (K,)
        Received block after CP removal.
    M : int
        Number of subblocks; must divide K.

    Returns
    -------
    PartialDemodMatrix
        M x K array whose columns sum to ``dft_unitary(r)``.
    """
    r = np.asarray(r, dtype=complex)
    K = r.size
    if M < 1 or K % M:
        raise ValueError(f"M={M} must be a positive divisor of K={K}")
    J = K // M
    masked = np.zeros((M, K), dtype=complex)
    for m in range(M):
        masked[m, m * J:(m + 1) * J] = r[m * J:(m + 1) * J]
    return PartialDemodMatrix(dft_unitary(masked))


def combine(demod, w, k):
    """Weighted combination ``w^H y_k`` for a single subcarrier."""
    w = np.asarray(w, dtype=complex)
    if w.shape != (demod.M,):
        raise ValueError(f"weight vector must have shape ({demod.M},), got {w.shape}")
    if not np.any(w):
        raise ValueError("weight vector must be nonzero")
    return np.vdot(w, demod.column(k))


def combine_all(demod, w):
    """Combine every subcarrier.

    ``w`` is either one length-M vector shared by all subcarriers or a
    (K, M) array holding a weight vector per subcarrier.
    """
    w = np.asarray(w, dtype=complex)
    if w.ndim == 1:
        return np.conj(w) @ demod.values
    return np.einsum("km,mk->k", np.conj(w), demod.values)
