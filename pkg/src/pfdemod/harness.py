"""Monte-Carlo BER experiments.

Every block draws its channel, information symbols and noise from its own
random stream, seeded from ``(seed, doppler, block index)``. The stream does
not depend on SNR, algorithm, M or N, so all receivers at a given Doppler
value see the same channels and the same (scaled) noise.
"""

import itertools
import logging
import math
import warnings
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .channel import (ChannelRealization, LinkGeometry, MODES, draw_channel, freq_response,
                      noise_variance_for_snr, synthesize_received)
from .ofdm_core import PilotLayout, PskConstellation, make_block
from .transform import dft_unitary, partial_fft_demodulate
from .weights import (FewPilotsWarning, RankDeficientWarning, WeightSolution,
                      build_error_set, build_pilot_error_matrix, detect_block,
                      solve_weights_adaptive, solve_weights_eigen, solve_weights_wideband)

log = logging.getLogger(__name__)

ALGORITHMS = ("single-fft", "eigen", "eigen-wideband", "adaptive")


@dataclass(frozen=True)
class SystemConfig:
    """Link parameters shared by every point of an experiment."""

    K: int = 1024
    Q: int = 4
    bandwidth: float = 4096.0
    carrier: float = 6000.0
    taps: int = 48  # L + 1
    doppler_mode: str = "wideband"

    @property
    def geometry(self):
        return LinkGeometry(self.bandwidth, self.carrier, self.K)

    @property
    def constellation(self):
        return PskConstellation(self.Q)


@dataclass(frozen=True)
class Point:
    """One cell of the sweep grid. ``mu`` is None unless the algorithm is adaptive."""

    snr_db: float
    doppler: float
    M: int
    N: int
    algorithm: str
    mu: float = None

    def sort_key(self):
        return (self.snr_db, self.doppler, self.M, self.N, ALGORITHMS.index(self.algorithm),
                -math.inf if self.mu is None else self.mu)


@dataclass(frozen=True)
class ExperimentSpec:
    system: SystemConfig = field(default_factory=SystemConfig)
    snr_db: tuple = (25.0,)
    doppler: tuple = (0.0,)
    subblocks: tuple = (8,)
    subbands: tuple = (1,)
    pilots: int = 32
    algorithms: tuple = ("eigen",)
    mu: tuple = (1e-3,)
    blocks: int = 500
    seed: int = 0

    def validate(self):
        s = self.system
        if s.K < 2 or s.K & (s.K - 1):
            raise ValueError(f"K must be a power of two, got {s.K}")
        PskConstellation(s.Q)
        if not 1 <= s.taps <= s.K:
            raise ValueError(f"tap count must lie in [1, K], got {s.taps}")
        if s.doppler_mode not in MODES:
            raise ValueError(f"unknown Doppler mode {s.doppler_mode!r}")
        if s.bandwidth <= 0 or s.carrier <= 0:
            raise ValueError("bandwidth and carrier must be positive")
        if self.blocks < 1:
            raise ValueError("blocks per point must be >= 1")
        for name, axis in [("snr_db", self.snr_db), ("doppler", self.doppler),
                           ("subblocks", self.subblocks), ("subbands", self.subbands),
                           ("algorithms", self.algorithms)]:
            if len(axis) == 0:
                raise ValueError(f"axis {name} is empty")
        for alg in self.algorithms:
            if alg not in ALGORITHMS:
                raise ValueError(f"unknown algorithm {alg!r}; expected one of {ALGORITHMS}")
        for snr in self.snr_db:
            if math.isnan(snr):
                raise ValueError("SNR must not be NaN")
        for a in self.doppler:
            if not (a >= 0 and math.isfinite(a)):
                raise ValueError(f"Doppler scale must be finite and >= 0, got {a}")
        for M in self.subblocks:
            if M < 1 or s.K % M:
                raise ValueError(f"M={M} must divide K={s.K}")
        if "adaptive" in self.algorithms:
            if not self.mu:
                raise ValueError("adaptive algorithm needs at least one step size")
            if any(not (mu >= 0 and math.isfinite(mu)) for mu in self.mu):
                raise ValueError("step sizes must be finite and >= 0")
        if not 1 <= self.pilots < s.K:
            raise ValueError(f"pilot count must lie in [1, K), got {self.pilots}")
        for N in self.subbands:
            if N < 1 or s.K % N:
                raise ValueError(f"N={N} must divide K={s.K}")
            if "eigen-wideband" in self.algorithms and self.pilots >= s.K // N:
                raise ValueError(f"{self.pilots} pilots per subband do not fit in "
                                 f"{s.K // N} subcarriers (N={N})")
        return self

    def points(self):
        """Distinct sweep points in canonical order.

        Axes that an algorithm ignores are collapsed: single-fft always runs
        with M = 1, only eigen-wideband uses N, only adaptive uses mu.
        """
        pts = set()
        for snr, a, M, N, alg in itertools.product(self.snr_db, self.doppler, self.subblocks,
                                                   self.subbands, self.algorithms):
            snr, a = float(snr), float(a)
            if alg == "single-fft":
                pts.add(Point(snr, a, 1, 1, alg))
            elif alg == "eigen":
                pts.add(Point(snr, a, int(M), 1, alg))
            elif alg == "eigen-wideband":
                pts.add(Point(snr, a, int(M), int(N), alg))
            else:
                for mu in self.mu:
                    pts.add(Point(snr, a, int(M), 1, alg, float(mu)))
        return sorted(pts, key=Point.sort_key)


@dataclass(frozen=True)
class BerRecord:
    snr_db: float
    doppler_a: float
    M: int
    N: int
    I: int
    algorithm: str
    mu: float
    blocks: int
    bit_errors: int
    total_bits: int
    lambda_min_mean: float
    degenerate_count: int

    @property
    def ber(self):
        return self.bit_errors / self.total_bits

    @property
    def sigma(self):
        """Binomial standard error of the BER estimate."""
        p = self.ber
        return math.sqrt(max(p * (1 - p), 0.0) / self.total_bits)


CSV_COLUMNS = ("snr_db", "doppler_a", "M", "N", "I", "algorithm", "mu", "blocks",
               "bit_errors", "total_bits", "ber", "lambda_min_mean", "degenerate_count")


def pilot_layout(spec, point):
    K, I = spec.system.K, spec.pilots
    if point.algorithm == "adaptive":
        return PilotLayout.contiguous(K, I)
    if point.algorithm == "eigen-wideband":
        return PilotLayout.per_subband(K, point.N, I)
    return PilotLayout.equispaced(K, I)


def _axis_key(a):
    return zlib.crc32(repr(float(a)).encode())


def block_rng(seed, doppler, block):
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(_axis_key(doppler), int(block)))
    return np.random.default_rng(ss)


def _draw_block(system, rng):
    h = draw_channel(system.taps - 1, rng)
    info = rng.integers(system.Q, size=system.K - 1)
    return h, info


def _simulate(spec, point, start, stop):
    """Per-block bit errors, bit counts, mean lambda_min and degeneracy counts."""
    system = spec.system
    const = system.constellation
    geom = system.geometry
    layout = pilot_layout(spec, point)
    data = layout.data_indices()
    piv = layout.indices
    sigma2 = noise_variance_for_snr(point.snr_db)
    n = stop - start
    errors = np.zeros(n, dtype=np.int64)
    lam = np.full(n, np.nan)
    degenerate = np.zeros(n, dtype=np.int64)
    for i, blk in enumerate(range(start, stop)):
        rng = block_rng(spec.seed, point.doppler, blk)
        h, info = _draw_block(system, rng)
        tx = make_block(info, const)
        chan = ChannelRealization(h, point.doppler, system.doppler_mode, sigma2)
        r = synthesize_received(tx, chan, geom, rng)
        demod = partial_fft_demodulate(r, point.M)
        known = const.points[info[piv - 1]]

        with warnings.catch_warnings():
            # rank deficiency is expected on noiseless flat channels and is
            # reported through the record statistics instead
            warnings.simplefilter("ignore", RankDeficientWarning)
            warnings.simplefilter("ignore", FewPilotsWarning)
            sol = None
            if point.algorithm == "single-fft":
                det = detect_block(demod, WeightSolution.uniform(point.M), const, layout, True)
            elif point.algorithm == "eigen":
                sol = solve_weights_eigen(build_pilot_error_matrix(build_error_set(demod, layout, known)))
                det = detect_block(demod, sol, const, layout, True)
            elif point.algorithm == "eigen-wideband":
                sol = solve_weights_wideband(demod, layout, known, point.N)
                det = detect_block(demod, sol, const, layout, True)
            else:
                res = solve_weights_adaptive(demod, layout, known, point.mu, const)
                det = res.decision_indices[data - 1]
        if sol is not None:
            lam[i] = float(np.mean(sol.lambda_min))
            degenerate[i] = int(np.sum(sol.degenerate))
        errors[i] = np.count_nonzero(const.indices_to_bits(det) != const.indices_to_bits(info[data - 1]))
    bits = data.size * const.bits_per_symbol
    return errors, bits, lam, degenerate


def _record(spec, point, errors, bits, lam, degenerate):
    lam_mean = float(np.mean(lam)) if not np.all(np.isnan(lam)) else math.nan
    return BerRecord(
        snr_db=point.snr_db, doppler_a=point.doppler, M=point.M, N=point.N, I=spec.pilots,
        algorithm=point.algorithm, mu=point.mu, blocks=spec.blocks,
        bit_errors=int(np.sum(errors)), total_bits=int(bits * spec.blocks),
        lambda_min_mean=lam_mean, degenerate_count=int(np.sum(degenerate)))


def run_point(spec, point):
    """Simulate ``spec.blocks`` blocks at one sweep point."""
    spec.validate()
    errors, bits, lam, deg = _simulate(spec, point, 0, spec.blocks)
    return _record(spec, point, errors, bits, lam, deg)


def _chunks(blocks, size):
    return [(s, min(s + size, blocks)) for s in range(0, blocks, size)]


def _simulate_task(args):
    spec, point, start, stop = args
    return _simulate(spec, point, start, stop)


class SweepError(RuntimeError):
    """A sweep aborted; ``partial`` holds the records completed before the failure."""

    def __init__(self, message, partial):
        super().__init__(message)
        self.partial = partial


def run_sweep(spec, workers=1, chunk=50, progress=None):
    """Run every point of the grid and return records in canonical order.

    Blocks are split into chunks of ``chunk`` and farmed out to ``workers``
    processes. Per-block results are reassembled in block order before any
    reduction, so the output does not depend on the worker count.
    """
    spec.validate()
    points = spec.points()
    tasks = [(p, s, e) for p in points for s, e in _chunks(spec.blocks, chunk)]
    parts = {p: [] for p in points}
    records = []

    def finish(p):
        errors, lam, deg = (np.concatenate(x) for x in zip(*[(r[0], r[2], r[3]) for r in parts[p]]))
        rec = _record(spec, p, errors, parts[p][0][1], lam, deg)
        records.append(rec)
        if progress:
            progress(rec)

    try:
        if workers <= 1:
            for p in points:
                for s, e in _chunks(spec.blocks, chunk):
                    parts[p].append(_simulate(spec, p, s, e))
                finish(p)
        else:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                results = pool.map(_simulate_task, [(spec, p, s, e) for p, s, e in tasks])
                for (p, s, e), res in zip(tasks, results):
                    parts[p].append(res)
                    if e == spec.blocks:
                        finish(p)
    except Exception as exc:
        log.error("sweep aborted after %d of %d points: %s", len(records), len(points), exc)
        raise SweepError(str(exc), sorted(records, key=_record_key)) from exc
    return sorted(records, key=_record_key)


def _record_key(rec):
    return Point(rec.snr_db, rec.doppler_a, rec.M, rec.N, rec.algorithm, rec.mu).sort_key()


def coherent_oracle_ber(spec, snr_db, reference="transmitted"):
    """BER of a coherent receiver with perfect channel knowledge.

    Uses the time-invariant channel of the spec's system and the same block
    streams as the Doppler-free points (a = 0). Each ``x_k/H_k`` is sliced to
    a coded symbol and b_k is recovered by removing the previous coded symbol:
    the transmitted one (``reference="transmitted"``) or the sliced one
    (``reference="sliced"``). Only the data subcarriers of the equispaced
    pilot layout are counted; subcarriers with ``|H_k| < 1e-12`` are skipped.

    Returns
    -------
    BerRecord
    """
    if reference not in ("transmitted", "sliced"):
        raise ValueError(f"unknown reference {reference!r}")
    spec.validate()
    system = spec.system
    const = system.constellation
    Q = system.Q
    layout = PilotLayout.equispaced(system.K, spec.pilots)
    data = layout.data_indices()
    sigma2 = noise_variance_for_snr(snr_db)
    errors = 0
    bits = 0
    for blk in range(spec.blocks):
        rng = block_rng(spec.seed, 0.0, blk)
        h, info = _draw_block(system, rng)
        tx = make_block(info, const)
        r = synthesize_received(tx, ChannelRealization(h, 0.0, "time-invariant", sigma2),
                                system.geometry, rng)
        H = freq_response(h, system.K)
        x = dft_unitary(r)
        ok = np.abs(H) >= 1e-12
        d_hat = const.nearest_index(np.where(ok, x / np.where(ok, H, 1), 0))
        if reference == "transmitted":
            prev = const.index_of(tx.coded_symbols)[data - 1]
        else:
            prev = d_hat[data - 1]
        b_hat = np.mod(d_hat[data] - prev, Q)
        use = ok[data] & ok[data - 1] if reference == "sliced" else ok[data]
        tx_bits = const.indices_to_bits(info[data - 1][use])
        errors += np.count_nonzero(const.indices_to_bits(b_hat[use]) != tx_bits)
        bits += tx_bits.size
    return BerRecord(float(snr_db), 0.0, 1, 1, spec.pilots, "coherent-oracle", None,
                     spec.blocks, int(errors), int(bits), math.nan, 0)
