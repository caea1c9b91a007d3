"""Multipath channel draws and received-block synthesis with post-resampling Doppler.

Blocks are generated directly after CP removal, where the multipath channel
acts as a circular convolution. Three Doppler modes are supported:

``time-invariant``
    r = h (*) s + z
``narrowband``
    r = G (h (*) s) + z, with a common phase trajectory theta_n on the diagonal
    of G (by default a carrier offset of a*f_c Hz at sample rate B)
``wideband``
    every subcarrier k is shifted by its own a*f_k Hz
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .transform import idft_unitary

MODES = ("time-invariant", "narrowband", "wideband")


@dataclass(frozen=True)
class LinkGeometry:
    """Bandwidth/carrier bookkeeping for K subcarriers spanning B Hz."""

    bandwidth: float
    carrier: float
    K: int

    @property
    def spacing(self):
        return self.bandwidth / self.K

    @property
    def duration(self):
        return self.K / self.bandwidth

    @property
    def subcarrier_freqs(self):
        """Passband frequency of each subcarrier, f_c - B/2 + k*df."""
        return self.carrier - self.bandwidth / 2 + np.arange(self.K) * self.spacing


@dataclass(frozen=True)
class ChannelRealization:
    taps: np.ndarray
    doppler_scale: float = 0.0
    mode: str = "time-invariant"
    noise_variance: float = 0.0
    phase: np.ndarray = None  # custom narrowband theta_n, overrides the CFO trajectory

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown Doppler mode {self.mode!r}; expected one of {MODES}")
        if self.doppler_scale < 0:
            raise ValueError("Doppler scale must be non-negative")
        if self.noise_variance < 0:
            raise ValueError("noise variance must be non-negative")

    @property
    def L(self):
        return len(self.taps) - 1


def draw_channel(L, rng):
    """L+1 i.i.d. circular Gaussian taps with a uniform unit-energy profile."""
    if L < 0:
        raise ValueError("L must be >= 0")
    n = L + 1
    scale = np.sqrt(0.5 / n)
    return scale * (rng.standard_normal(n) + 1j * rng.standard_normal(n))


def freq_response(h, K):
    """H_k = sum_l h_l exp(-j 2 pi l k / K)."""
    h = np.asarray(h, dtype=complex)
    if h.size > K:
        raise ValueError(f"{h.size} taps exceed the block length K={K}")
    return np.fft.fft(h, n=K)


def noise_variance_for_snr(snr_db):
    """Per-sample noise variance for a unit-power received signal."""
    return 10.0 ** (-float(snr_db) / 10.0)


@lru_cache(maxsize=8)
def _wideband_kernel(K, bandwidth, a, freqs_bytes):
    freqs = np.frombuffer(freqs_bytes, dtype=float)
    n = np.arange(K)
    # exact integer reduction of the DFT phase keeps large n*k products accurate
    dft_part = np.exp(2j * np.pi * (np.outer(n, n) % K) / K)
    shift_part = np.exp(2j * np.pi * np.outer(n, a * freqs / bandwidth))
    kern = dft_part * shift_part / np.sqrt(K)
    kern.setflags(write=False)
    return kern


def synthesize_received(block, chan, geom, rng, subcarrier_freqs=None):
    """Received block r for the given transmitted block and channel.

    Parameters
    ----------
    block : OfdmBlock
    chan : ChannelRealization
    geom : LinkGeometry
    rng : numpy.random.Generator
        Source of the noise samples. Standard-normal noise is always drawn
        (2K values) and scaled, so the random stream consumed does not
        depend on the SNR or the Doppler mode.
    subcarrier_freqs : array_like, optional
        Overrides ``geom.subcarrier_freqs`` in wideband mode.

    Returns
    -------
    ndarray of complex, shape (K,)
    """
    d = block.coded_symbols
    K = d.size
    if geom.K != K:
        raise ValueError(f"geometry is for K={geom.K} but the block has {K} subcarriers")
    H = freq_response(chan.taps, K)
    X = H * d
    a = chan.doppler_scale

    if chan.mode == "time-invariant":
        r = idft_unitary(X)
    elif chan.mode == "narrowband":
        if chan.phase is not None:
            theta = np.asarray(chan.phase, dtype=float)
            if theta.shape != (K,):
                raise ValueError("custom phase trajectory must have length K")
        else:
            theta = 2 * np.pi * a * geom.carrier * np.arange(K) / geom.bandwidth
        r = np.exp(1j * theta) * idft_unitary(X)
    else:
        f = geom.subcarrier_freqs if subcarrier_freqs is None else np.asarray(subcarrier_freqs, float)
        if a == 0:
            r = idft_unitary(X)
        else:
            kern = _wideband_kernel(K, float(geom.bandwidth), float(a), np.ascontiguousarray(f).tobytes())
            r = kern @ X

    z = rng.standard_normal(K) + 1j * rng.standard_normal(K)
    return r + np.sqrt(chan.noise_variance / 2) * z
