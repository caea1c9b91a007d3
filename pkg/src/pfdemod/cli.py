"""Command-line front end: build an experiment from presets, a config file and flags, run it, write CSV.

Precedence, lowest first: built-in defaults, ``--preset``, ``--config`` file,
explicit flags.
"""

import argparse
import logging
import sys

from . import __version__
from .harness import CSV_COLUMNS, ExperimentSpec, SweepError, SystemConfig, run_sweep

log = logging.getLogger("pfdemod")

SNR_GRID = (5.0, 10.0, 15.0, 20.0, 25.0, 30.0)

PRESETS = {
    "fig2": dict(snr=SNR_GRID, doppler=(1.5e-4, 2.5e-4), subblocks=(8,), subbands=(1,),
                 pilots=32, algorithm=("single-fft", "eigen", "adaptive"), mu=(1e-4, 1e-3, 1e-2)),
    "fig3": dict(snr=(25.0,), doppler=(1e-4, 2e-4, 3e-4, 4e-4, 5e-4),
                 subblocks=(1, 2, 4, 8, 16, 32), subbands=(1,), pilots=128, algorithm=("eigen",)),
    "fig4": dict(snr=SNR_GRID, doppler=(5e-4,), subblocks=(8,), subbands=(1, 2, 4, 8),
                 pilots=32, algorithm=("eigen-wideband",)),
}

# config-file key -> (parser, is_list)
_floats = lambda s: tuple(float(x) for x in s.split(",") if x.strip())
_ints = lambda s: tuple(int(x) for x in s.split(",") if x.strip())
_strs = lambda s: tuple(x.strip() for x in s.split(",") if x.strip())

KEYS = {
    "subcarriers": int, "order": int, "bandwidth": float, "carrier": float, "taps": int,
    "doppler_mode": str,
    "snr": _floats, "doppler": _floats, "subblocks": _ints, "subbands": _ints,
    "pilots": int, "algorithm": _strs, "mu": _floats, "blocks": int, "seed": int,
    "workers": int, "out": str,
}

DEFAULTS = dict(subcarriers=1024, order=4, bandwidth=4096.0, carrier=6000.0, taps=48,
                doppler_mode="wideband", snr=(25.0,), doppler=(0.0,), subblocks=(8,),
                subbands=(1,), pilots=32, algorithm=("eigen",), mu=(1e-3,), blocks=500,
                seed=0, workers=1, out="results.csv")


class ConfigError(ValueError):
    pass


def read_config(path):
    """Parse a flat ``key = value`` file; ``#`` starts a comment."""
    try:
        with open(path) as f:
            lines = f.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    out = {}
    for n, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in KEYS:
            raise ConfigError(f"{path}:{n}: unknown key {key!r}")
        try:
            out[key] = KEYS[key](value)
        except ValueError as exc:
            raise ConfigError(f"{path}:{n}: bad value for {key}: {exc}") from exc
    return out


def build_parser():
    p = argparse.ArgumentParser(
        prog="pfdemod",
        description="Monte-Carlo BER of partial FFT demodulation for differential OFDM.",
        epilog="Lists are comma separated, e.g. --snr 5,10,15. Use 'inf' for a noiseless run.")
    p.add_argument("--config", metavar="PATH", help="key = value file")
    p.add_argument("--preset", choices=sorted(PRESETS),
                   help="fig2: receivers vs SNR, fig3: M sweep, fig4: subband sweep")
    p.add_argument("--snr", type=_floats, metavar="LIST", help="SNR values in dB")
    p.add_argument("--doppler", type=_floats, metavar="LIST", help="Doppler scale factors a")
    p.add_argument("--subblocks", type=_ints, metavar="LIST", help="partial FFT subblock counts M")
    p.add_argument("--subbands", type=_ints, metavar="LIST", help="subband counts N (eigen-wideband)")
    p.add_argument("--pilots", type=int, metavar="INT",
                   help="pilot count I (per subband for eigen-wideband)")
    p.add_argument("--algorithm", type=_strs, metavar="LIST",
                   help="single-fft, eigen, eigen-wideband, adaptive")
    p.add_argument("--mu", type=_floats, metavar="LIST", help="adaptive step sizes")
    p.add_argument("--blocks", type=int, metavar="INT", help="blocks per point")
    p.add_argument("--seed", type=int, metavar="INT", help="master seed")
    p.add_argument("--workers", type=int, metavar="INT", help="worker processes")
    p.add_argument("--out", metavar="PATH", help="CSV destination (default ./results.csv)")
    p.add_argument("--subcarriers", type=int, metavar="INT", help="K")
    p.add_argument("--order", type=int, metavar="INT", help="PSK order Q")
    p.add_argument("--bandwidth", type=float, metavar="HZ")
    p.add_argument("--carrier", type=float, metavar="HZ")
    p.add_argument("--taps", type=int, metavar="INT", help="channel taps L+1")
    p.add_argument("--doppler-mode", choices=("time-invariant", "narrowband", "wideband"))
    p.add_argument("-v", "--verbose", action="count", default=0)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return p


def effective_params(args):
    params = dict(DEFAULTS)
    if args.preset:
        params.update(PRESETS[args.preset])
    if args.config:
        params.update(read_config(args.config))
    for key in KEYS:
        value = getattr(args, key, None)
        if value is not None:
            params[key] = value
    return params


def spec_from_params(params):
    system = SystemConfig(K=params["subcarriers"], Q=params["order"],
                          bandwidth=params["bandwidth"], carrier=params["carrier"],
                          taps=params["taps"], doppler_mode=params["doppler_mode"])
    spec = ExperimentSpec(system=system, snr_db=tuple(params["snr"]),
                          doppler=tuple(params["doppler"]), subblocks=tuple(params["subblocks"]),
                          subbands=tuple(params["subbands"]), pilots=params["pilots"],
                          algorithms=tuple(params["algorithm"]), mu=tuple(params["mu"]),
                          blocks=params["blocks"], seed=params["seed"])
    return spec.validate()


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _fmt_param(v):
    if isinstance(v, tuple):
        return ",".join(_fmt(x) for x in v)
    return _fmt(v)


def write_csv(path, params, records):
    with open(path, "w") as f:
        f.write(f"# pfdemod {__version__}\n")
        f.write("# snr: per-sample received signal power over noise variance "
                "(unit-energy PSK, unit expected channel energy)\n")
        f.write("# ber: Gray-labelled information symbols, data subcarriers only\n")
        for key in KEYS:
            if key in ("out", "workers"):
                continue
            f.write(f"# {key} = {_fmt_param(params[key])}\n")
        f.write(",".join(CSV_COLUMNS) + "\n")
        for r in records:
            row = [r.snr_db, r.doppler_a, r.M, r.N, r.I, r.algorithm, r.mu, r.blocks,
                   r.bit_errors, r.total_bits, r.ber, r.lambda_min_mean, r.degenerate_count]
            f.write(",".join(_fmt(v) for v in row) + "\n")


def parse_and_run(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(message)s")
    try:
        params = effective_params(args)
        spec = spec_from_params(params)
    except (ValueError, TypeError) as exc:
        print(f"pfdemod: invalid configuration: {exc}", file=sys.stderr)
        return 2
    if params["workers"] < 1:
        print("pfdemod: invalid configuration: workers must be >= 1", file=sys.stderr)
        return 2

    n_points = len(spec.points())
    log.info("running %d points x %d blocks", n_points, spec.blocks)

    def progress(rec):
        log.info("snr=%s a=%s M=%d N=%d %s mu=%s ber=%.3e", rec.snr_db, rec.doppler_a, rec.M,
                 rec.N, rec.algorithm, rec.mu, rec.ber)

    try:
        records = run_sweep(spec, workers=params["workers"], progress=progress)
    except SweepError as exc:
        write_csv(params["out"], params, exc.partial)
        print(f"pfdemod: sweep failed ({exc}); {len(exc.partial)} records written to "
              f"{params['out']}", file=sys.stderr)
        return 1
    write_csv(params["out"], params, records)
    log.info("wrote %d records to %s", len(records), params["out"])
    return 0


def main():
    sys.exit(parse_and_run())


if __name__ == "__main__":
    main()
