"""Constellations, differential coding, the two differential detectors and pilot layouts."""

from dataclasses import dataclass, field

import numpy as np

_POINT_TOL = 1e-9


def _gray(q):
    return q ^ (q >> 1)


@dataclass(frozen=True)
class PskConstellation:
    """Unit-energy Q-ary PSK alphabet with a Gray bit labelling.

    Point ``q`` sits at phase ``2*pi*q/Q``; its bit label is the reflected
    binary Gray code of ``q``, so phase neighbours (including the wrap from
    ``Q-1`` to ``0``) differ in exactly one bit.
    """

    order: int
    points: np.ndarray = field(init=False, repr=False, compare=False)
    labels: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        Q = int(self.order)
        if Q < 2 or Q & (Q - 1):
            raise ValueError(f"PSK order must be a power of two >= 2, got {self.order}")
        q = np.arange(Q)
        pts = np.exp(2j * np.pi * q / Q)
        pts.setflags(write=False)
        labels = _gray(q)
        labels.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "labels", labels)
        # inverse of the Gray map: label -> point index
        inv = np.empty(Q, dtype=int)
        inv[labels] = q
        inv.setflags(write=False)
        object.__setattr__(self, "_label_to_index", inv)

    @property
    def bits_per_symbol(self):
        return int(self.order).bit_length() - 1

    def nearest_index(self, z):
        """Index of the constellation point closest to ``z`` (Euclidean)."""
        z = np.asarray(z)
        q = np.rint(np.angle(z) * self.order / (2 * np.pi)).astype(int)
        return np.mod(q, self.order)

    def index_of(self, symbols):
        """Map exact constellation points to their indices.

        Raises
        ------
        ValueError
            If any symbol is farther than 1e-9 from every constellation point.
        """
        symbols = np.asarray(symbols, dtype=complex)
        idx = self.nearest_index(symbols)
        if symbols.size and np.max(np.abs(symbols - self.points[idx])) > _POINT_TOL:
            raise ValueError("input contains values that are not constellation points")
        return idx

    def indices_to_bits(self, indices):
        indices = np.asarray(indices, dtype=int).ravel()
        m = self.bits_per_symbol
        lab = self.labels[indices]
        shifts = np.arange(m - 1, -1, -1)
        return ((lab[:, None] >> shifts) & 1).astype(np.uint8).ravel()

    def bits_to_indices(self, bits):
        bits = np.asarray(bits, dtype=int).ravel()
        m = self.bits_per_symbol
        if bits.size % m:
            raise ValueError(f"bit count {bits.size} is not a multiple of {m}")
        if np.any((bits != 0) & (bits != 1)):
            raise ValueError("bits must be 0 or 1")
        lab = bits.reshape(-1, m) @ (1 << np.arange(m - 1, -1, -1))
        return self._label_to_index[lab]

    def symbols_to_bits(self, symbols):
        """Gray-labelled bit stream (MSB first) for a vector of points."""
        return self.indices_to_bits(self.index_of(symbols))

    def bits_to_symbols(self, bits):
        return self.points[self.bits_to_indices(bits)]


@dataclass(frozen=True)
class OfdmBlock:
    """One differential OFDM block.

    ``info_symbols[k-1]`` is b_k for k = 1..K-1; ``coded_symbols`` is d and
    ``time_samples`` is the unitary inverse DFT of d.
    """

    info_symbols: np.ndarray
    coded_symbols: np.ndarray
    time_samples: np.ndarray

    @property
    def K(self):
        return self.coded_symbols.size


def differential_encode(b, constellation, d0=None):
    """Differentially encode information symbols across subcarriers.

    Parameters
    ----------
    b : array_like of complex, shape (K-1,)
        Information symbols b_1..b_{K-1}; each must be a constellation point.
    constellation : PskConstellation
    d0 : complex, optional
        Seed symbol on subcarrier 0. Defaults to ``constellation.points[0]`` (= 1).

    Returns
    -------
    ndarray of complex, shape (K,)
        Coded symbols with ``d[k] = b[k-1] * d[k-1]``.
    """
    b_idx = constellation.index_of(b)
    d0_idx = 0 if d0 is None else int(constellation.index_of([d0])[0])
    # phase indices add modulo Q, which keeps every d_k an exact table point
    d_idx = np.mod(d0_idx + np.concatenate(([0], np.cumsum(b_idx))), constellation.order)
    return constellation.points[d_idx]


def make_block(info_indices, constellation):
    """Build an :class:`OfdmBlock` from information symbol indices."""
    from .transform import idft_unitary

    info_indices = np.asarray(info_indices, dtype=int)
    b = constellation.points[info_indices]
    d = differential_encode(b, constellation)
    return OfdmBlock(b, d, idft_unitary(d))


def ml_indices(x_prev, x_curr, constellation):
    """Indices minimising ``|x_curr - x_prev*b|**2`` over the alphabet.

    Minimising the distance is the same as maximising
    ``Re(x_curr * conj(x_prev) * conj(b))`` because every point has unit
    modulus. ``argmax`` returns the first maximiser, so ties (e.g. a zero
    reference) resolve to the lowest constellation index.
    """
    c = np.asarray(x_curr) * np.conj(np.asarray(x_prev))
    corr = np.real(c[..., None] * np.conj(constellation.points))
    return np.argmax(corr, axis=-1)


def detect_ml(x_prev, x_curr, constellation):
    """Maximum-likelihood differential detector (scalar or elementwise)."""
    return constellation.points[ml_indices(x_prev, x_curr, constellation)]


def detect_ratio(x_prev, x_curr, constellation):
    """Slice the ratio ``x_curr/x_prev`` to the nearest constellation point."""
    x_prev = np.asarray(x_prev)
    if np.any(x_prev == 0):
        raise ZeroDivisionError("ratio detector needs a nonzero previous sample")
    return constellation.points[constellation.nearest_index(np.asarray(x_curr) / x_prev)]


def differential_decode(x, constellation, detector="ml"):
    """Detect b_1..b_{K-1} from the per-subcarrier outputs ``x``."""
    x = np.asarray(x)
    if detector == "ml":
        return detect_ml(x[:-1], x[1:], constellation)
    if detector == "ratio":
        return detect_ratio(x[:-1], x[1:], constellation)
    raise ValueError(f"unknown detector {detector!r}")


@dataclass(frozen=True)
class PilotLayout:
    """Pilot subcarrier positions within a block of K subcarriers.

    Index 0 carries the differential seed and is never a pilot.
    """

    indices: np.ndarray
    K: int
    mode: str = "custom"
    subbands: int = 1

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=int)
        if idx.ndim != 1 or idx.size == 0:
            raise ValueError("a pilot layout needs at least one index")
        if idx[0] < 1:
            raise ValueError("pilot indices must be >= 1 (subcarrier 0 seeds the recursion)")
        if np.any(np.diff(idx) <= 0):
            raise ValueError("pilot indices must be strictly increasing")
        if idx[-1] >= self.K:
            raise ValueError(f"pilot index {idx[-1]} out of range for K={self.K}")
        if self.K % self.subbands:
            raise ValueError(f"K={self.K} is not divisible by {self.subbands} subbands")
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)

    @property
    def count(self):
        return self.indices.size

    @classmethod
    def equispaced(cls, K, I):
        """Pilots at 1, P+1, ..., (I-1)P+1 with spacing P = K // I."""
        if not 1 <= I < K:
            raise ValueError(f"need 1 <= I < K, got I={I}, K={K}")
        P = K // I
        return cls(1 + P * np.arange(I), K, "equispaced")

    @classmethod
    def contiguous(cls, K, I):
        """Pilots at 1..I (training block at the low-frequency end)."""
        if not 1 <= I < K:
            raise ValueError(f"need 1 <= I < K, got I={I}, K={K}")
        return cls(np.arange(1, I + 1), K, "contiguous")

    @classmethod
    def per_subband(cls, K, N, I_sub):
        """``I_sub`` equispaced pilots in each of N subbands of K/N subcarriers."""
        if N < 1 or K % N:
            raise ValueError(f"N={N} must divide K={K}")
        Kb = K // N
        if not 1 <= I_sub < Kb:
            raise ValueError(f"need 1 <= pilots per subband < {Kb}, got {I_sub}")
        P = Kb // I_sub
        local = 1 + P * np.arange(I_sub)
        idx = (Kb * np.arange(N)[:, None] + local).ravel()
        return cls(idx, K, "per-subband", N)

    def subband_of(self, k):
        return np.asarray(k) // (self.K // self.subbands)

    def data_indices(self):
        """Subcarriers 1..K-1 that are not pilots."""
        mask = np.ones(self.K, dtype=bool)
        mask[0] = False
        mask[self.indices] = False
        return np.flatnonzero(mask)
