"""Combining weights for partial FFT demodulation of differential OFDM.

The pilot-based solver picks the weight vector w (with ||w|| = sqrt(M)) that
minimises the total differential detection error energy on the pilot
subcarriers,

    sum_k |w^H (y_k - y_{k-1} b_k)|^2 = w^H R_P w,

whose global minimiser is sqrt(M) times the eigenvector belonging to the
smallest eigenvalue of the Hermitian matrix R_P. The eigenvector comes from
a cyclic complex Jacobi iteration implemented here.

The stochastic-gradient baseline adapts w across subcarriers on the squared
error of the ratio detector, trained on a pilot block and decision-directed
afterwards.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from numba import njit

from .ofdm_core import PilotLayout, ml_indices

JACOBI_TOL = 1e-12
JACOBI_MAX_SWEEPS = 30
HERMITIAN_TOL = 1e-10
DEGENERACY_TOL = 1e-8
RANK_TOL = 1e-10
ADAPTIVE_GUARD = 1e-12


class ConvergenceError(RuntimeError):
    """Raised when the Jacobi iteration does not converge."""


class RankDeficientWarning(UserWarning):
    """R_P has a (numerically) zero eigenvalue, so the minimiser is not unique."""


class FewPilotsWarning(UserWarning):
    """Fewer pilots than subblocks in a subband."""


# ---------------------------------------------------------------------------
# pilot detection errors

@dataclass(frozen=True)
class DetectionErrorSet:
    """Differential error vectors on the pilots, one column per pilot."""

    vectors: np.ndarray
    pilot_indices: np.ndarray

    @property
    def M(self):
        return self.vectors.shape[0]

    @property
    def I(self):
        return self.vectors.shape[1]


def _pilot_indices(pilots):
    if isinstance(pilots, PilotLayout):
        return pilots.indices
    return np.atleast_1d(np.asarray(pilots, dtype=int))


def build_error_set(demod, pilots, pilot_symbols):
    """Columns ``y_k - y_{k-1} * b_k`` for every pilot subcarrier k.

    Parameters
    ----------
    demod : PartialDemodMatrix
    pilots : PilotLayout or array_like of int
        Pilot subcarrier indices, ascending, all >= 1.
    pilot_symbols : array_like of complex
        Known b_k, aligned with the pilot indices.
    """
    idx = _pilot_indices(pilots)
    b = np.atleast_1d(np.asarray(pilot_symbols, dtype=complex))
    if idx.size == 0:
        raise ValueError("at least one pilot is required")
    if b.shape != idx.shape:
        raise ValueError(f"{b.size} pilot symbols for {idx.size} pilot indices")
    if np.any(idx < 1):
        raise ValueError("pilot index 0 has no predecessor subcarrier")
    if np.any(idx >= demod.K):
        raise ValueError("pilot index out of range")
    if np.any(np.diff(idx) <= 0):
        raise ValueError("pilot indices must be strictly increasing")
    Y = demod.values
    E = Y[:, idx] - Y[:, idx - 1] * b
    return DetectionErrorSet(E, idx.copy())


def build_pilot_error_matrix(errs):
    """R_P = E_P E_P^H, symmetrised so it is exactly Hermitian."""
    E = errs.vectors
    R = E @ E.conj().T
    return 0.5 * (R + R.conj().T)


def rank1_error_matrix(y_curr, y_prev, b):
    """R_k(b) = e e^H with e = y_curr - y_prev*b."""
    e = np.asarray(y_curr) - np.asarray(y_prev) * b
    return np.outer(e, e.conj())


# ---------------------------------------------------------------------------
# Hermitian eigensolver

@njit(cache=True)
def _off_norm(A):
    M = A.shape[0]
    acc = 0.0
    for i in range(M):
        for j in range(M):
            if i != j:
                acc += A[i, j].real ** 2 + A[i, j].imag ** 2
    return np.sqrt(acc)


@njit(cache=True)
def _jacobi_sweeps(A, V, target, max_sweeps):
    """Rotate A (in place) towards diagonal form, accumulating rotations in V.

    Returns the number of sweeps used, or -1 if ``max_sweeps`` ran out.
    """
    M = A.shape[0]
    for sweep in range(max_sweeps + 1):
        if _off_norm(A) <= target:
            return sweep
        if sweep == max_sweeps:
            return -1
        for p in range(M - 1):
            for q in range(p + 1, M):
                b = A[p, q]
                absb = abs(b)
                if absb == 0.0:
                    continue
                # remove the phase of A[p, q], then the real symmetric Schur rotation
                ph = b / absb
                phc = ph.conjugate()
                tau = (A[q, q].real - A[p, p].real) / (2.0 * absb)
                sign = 1.0 if tau >= 0 else -1.0
                t = sign / (abs(tau) + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                for i in range(M):
                    aip = A[i, p]
                    aiq = A[i, q]
                    A[i, p] = c * aip - s * phc * aiq
                    A[i, q] = s * aip + c * phc * aiq
                for j in range(M):
                    apj = A[p, j]
                    aqj = A[q, j]
                    A[p, j] = c * apj - s * ph * aqj
                    A[q, j] = s * apj + c * ph * aqj
                A[p, q] = 0.0
                A[q, p] = 0.0
                A[p, p] = A[p, p].real
                A[q, q] = A[q, q].real
                for i in range(M):
                    vip = V[i, p]
                    viq = V[i, q]
                    V[i, p] = c * vip - s * phc * viq
                    V[i, q] = s * vip + c * phc * viq
    return -1


def hermitian_eig(A, tol=JACOBI_TOL, max_sweeps=JACOBI_MAX_SWEEPS):
    """Eigen-decomposition of a Hermitian matrix by cyclic complex Jacobi sweeps.

    Each sweep visits the off-diagonal pairs (p, q) row by row. A rotation
    first strips the phase of ``A[p, q]`` and then applies the real
    symmetric Schur rotation that zeroes it.

    Parameters
    ----------
    A : array_like, shape (M, M)
        Hermitian to within ``1e-10 * ||A||_F``.
    tol : float
        Stop once the off-diagonal Frobenius norm is at most ``tol * ||A||_F``.
    max_sweeps : int

    Returns
    -------
    eigvals : ndarray of float, shape (M,)
        Ascending.
    eigvecs : ndarray of complex, shape (M, M)
        Orthonormal columns; ``A @ eigvecs[:, i] = eigvals[i] * eigvecs[:, i]``.

    Raises
    ------
    ValueError
        Non-square or non-Hermitian input.
    ConvergenceError
        Off-diagonal mass still above tolerance after ``max_sweeps`` sweeps.
    """
    A = np.array(A, dtype=np.complex128)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    M = A.shape[0]
    norm = np.linalg.norm(A)
    if np.linalg.norm(A - A.conj().T) > HERMITIAN_TOL * norm:
        raise ValueError("matrix is not Hermitian")
    A = np.ascontiguousarray(0.5 * (A + A.conj().T))
    V = np.eye(M, dtype=np.complex128)
    if _jacobi_sweeps(A, V, tol * norm, max_sweeps) < 0:
        raise ConvergenceError(f"Jacobi did not converge in {max_sweeps} sweeps")
    lam = np.real(np.diag(A))
    order = np.argsort(lam, kind="stable")
    return lam[order], V[:, order]


# ---------------------------------------------------------------------------
# eigen-based weights

@dataclass(frozen=True)
class WeightSolution:
    """Weight vectors for N equal subbands (N = 1 for the narrowband solver).

    ``weights[n]`` applies to subcarriers n*K/N .. (n+1)*K/N - 1.
    """

    weights: np.ndarray
    lambda_min: np.ndarray
    degenerate: np.ndarray
    rank_deficient: np.ndarray

    @property
    def N(self):
        return self.weights.shape[0]

    @property
    def M(self):
        return self.weights.shape[1]

    def per_subcarrier(self, K):
        if K % self.N:
            raise ValueError(f"K={K} is not divisible by N={self.N}")
        return np.repeat(self.weights, K // self.N, axis=0)

    @classmethod
    def uniform(cls, M, N=1):
        """All-ones weights, i.e. the conventional single-FFT receiver."""
        return cls(np.ones((N, M), dtype=complex), np.full(N, np.nan),
                   np.zeros(N, bool), np.zeros(N, bool))


def _eigen_single(R):
    M = R.shape[0]
    lam, V = hermitian_eig(R)
    v = V[:, 0]
    s = v.sum()
    if abs(s) > 0:
        # fix the arbitrary eigenvector phase so that 1^H w is real positive
        v = v * (s.conjugate() / abs(s))
    tr = float(np.real(np.trace(R)))
    degenerate = M > 1 and lam[1] - lam[0] <= DEGENERACY_TOL * tr
    rank_def = lam[0] <= RANK_TOL * tr
    if rank_def:
        warnings.warn(
            "pilot error matrix is rank deficient; the minimising weight is not unique "
            "(use at least M pilots)", RankDeficientWarning, stacklevel=3)
    return np.sqrt(M) * v, lam[0], bool(degenerate), bool(rank_def)


def solve_weights_eigen(R):
    """Minimise ``w^H R w`` subject to ``||w|| = sqrt(M)``.

    The minimiser is ``sqrt(M) * v_min`` and the minimum is ``M * lambda_min``.
    The eigenvector phase is fixed so that ``sum(w)`` is real and positive.
    A :class:`RankDeficientWarning` is issued when ``lambda_min`` is at most
    ``1e-10 * trace(R)``, and ``degenerate`` is set when the two smallest
    eigenvalues are within ``1e-8 * trace(R)``.
    """
    R = np.asarray(R, dtype=complex)
    w, lam, deg, rd = _eigen_single(R)
    return WeightSolution(w[None, :], np.array([lam]), np.array([deg]), np.array([rd]))


def solve_weights_wideband(demod, pilots, pilot_symbols, N):
    """Independent eigen solutions on N equal subbands of K/N subcarriers.

    A pilot belongs to the subband containing its own index; its error vector
    may reach back into the previous subband for ``y_{k-1}``.
    """
    K, M = demod.K, demod.M
    if N < 1 or K % N:
        raise ValueError(f"N={N} must divide K={K}")
    idx = _pilot_indices(pilots)
    b = np.atleast_1d(np.asarray(pilot_symbols, dtype=complex))
    if b.shape != idx.shape:
        raise ValueError(f"{b.size} pilot symbols for {idx.size} pilot indices")
    Kb = K // N
    band = idx // Kb
    out = []
    for n in range(N):
        sel = band == n
        if not np.any(sel):
            raise ValueError(f"subband {n} has no pilots")
        if sel.sum() < M:
            warnings.warn(f"subband {n} has {sel.sum()} pilots for M={M} subblocks",
                          FewPilotsWarning, stacklevel=2)
        R = build_pilot_error_matrix(build_error_set(demod, idx[sel], b[sel]))
        out.append(_eigen_single(R))
    w, lam, deg, rd = zip(*out)
    return WeightSolution(np.array(w), np.array(lam), np.array(deg), np.array(rd))


def detect_block(demod, weights, constellation, pilots=None, return_indices=False):
    """ML detection of b_1..b_{K-1} after weighted combining.

    Subcarrier k uses the weight vector of its own subband for both
    ``y_k`` and ``y_{k-1}``, so the decision metric is exactly
    ``w^H R_k(b) w``. With ``pilots`` given, only data subcarriers are
    returned (in ascending order).
    """
    K = demod.K
    if weights.M != demod.M:
        raise ValueError(f"weights are for M={weights.M}, demod has M={demod.M}")
    W = weights.per_subcarrier(K)[1:].conj()
    Y = demod.values
    x_curr = np.einsum("km,mk->k", W, Y[:, 1:])
    x_prev = np.einsum("km,mk->k", W, Y[:, :-1])
    idx = ml_indices(x_prev, x_curr, constellation)
    if pilots is not None:
        idx = idx[pilots.data_indices() - 1]
    return idx if return_indices else constellation.points[idx]


# ---------------------------------------------------------------------------
# stochastic-gradient baseline

def differential_error(w, y_curr, y_prev, b):
    """xi = b - (w^H y_curr)/(w^H y_prev)."""
    return b - np.vdot(w, y_curr) / np.vdot(w, y_prev)


def differential_error_grad(w, y_curr, y_prev, b):
    """Gradient of ``|xi|**2`` with respect to conj(w).

    With ``bhat = (w^H y_curr)/(w^H y_prev)`` this is
    ``-conj(xi) * (y_curr - bhat*y_prev) / (w^H y_prev)``.
    """
    q = np.vdot(w, y_prev)
    bhat = np.vdot(w, y_curr) / q
    xi = b - bhat
    return -np.conj(xi) * (np.asarray(y_curr) - bhat * np.asarray(y_prev)) / q


@njit(cache=True)
def _adaptive_recursion(Y, known, ref, points, mu, w0, guard):
    M, K = Y.shape
    Q = points.size
    w = w0.copy()
    traj = np.empty((K, M), dtype=np.complex128)
    dec = np.zeros(K, dtype=np.int64)
    traj[0] = w
    for k in range(1, K):
        traj[k] = w
        p = 0j
        q = 0j
        for m in range(M):
            wc = w[m].conjugate()
            p += wc * Y[m, k]
            q += wc * Y[m, k - 1]
        if abs(q) < guard:
            continue
        bh = p / q
        qi = int(round(np.arctan2(bh.imag, bh.real) * Q / (2 * np.pi))) % Q
        dec[k] = qi
        target = ref[k] if known[k] else points[qi]
        coef = (target - bh).conjugate() / q
        for m in range(M):
            w[m] += mu * coef * (Y[m, k] - bh * Y[m, k - 1])
    return traj, dec


@dataclass(frozen=True)
class AdaptiveResult:
    """Per-subcarrier weights (row k used on subcarrier k) and ratio decisions for k = 1..K-1."""

    weights: np.ndarray
    decision_indices: np.ndarray


def solve_weights_adaptive(demod, pilots, pilot_symbols, mu, constellation, w0=None):
    """Decision-directed stochastic gradient adaptation across subcarriers.

    For k = 1..K-1 the current weights give ``bhat = (w^H y_k)/(w^H y_{k-1})``,
    which is sliced to the nearest point. The reference is the known pilot
    on pilot subcarriers and the sliced decision elsewhere; w then takes one
    step ``w <- w - mu * grad`` on ``|reference - bhat|**2``. Subcarriers with
    ``|w^H y_{k-1}| < 1e-12`` are skipped (decision index 0, no update).
    """
    if mu < 0:
        raise ValueError("step size must be non-negative")
    K, M = demod.K, demod.M
    idx = _pilot_indices(pilots)
    b = np.atleast_1d(np.asarray(pilot_symbols, dtype=complex))
    if b.shape != idx.shape:
        raise ValueError(f"{b.size} pilot symbols for {idx.size} pilot indices")
    known = np.zeros(K, dtype=np.bool_)
    ref = np.zeros(K, dtype=np.complex128)
    known[idx] = True
    ref[idx] = b
    w0 = np.ones(M, dtype=np.complex128) if w0 is None else np.asarray(w0, dtype=np.complex128)
    traj, dec = _adaptive_recursion(
        np.ascontiguousarray(demod.values, dtype=np.complex128), known, ref,
        np.asarray(constellation.points, dtype=np.complex128), float(mu), w0, ADAPTIVE_GUARD)
    return AdaptiveResult(traj, dec[1:])
