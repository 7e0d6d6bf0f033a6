"""Monte-Carlo error-rate estimation and scheme comparison.

Sweeps estimate BER/BLER across an Eb/N0 grid with Wilson 95% confidence
intervals, stopping per point once enough block errors accumulate.  Gains
are read off the BLER curves at a target rate against a baseline scheme.

Trials are drawn from counter-based random streams keyed by the sweep
seed, the grid-point index, and the first trial index of each fixed-size
chunk, so results are bitwise identical for any thread count.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .channel import _awgn_batch, _fading_batch, _ofdm_batch, ebn0_to_noise_var
from .constellation import Constellation, _encode_batch
from .decoders import MlpParams, _dizet_decode_batch, _nn_decode_batch
from .errors import (
    ConvergenceError,
    InvalidArgumentError,
    NotBracketedError,
    UnsupportedSizeError,
)

_Z95 = 1.959963984540054
_CHUNK = 2048
_CHANNELS = ("awgn", "flat_fading", "ofdm_awgn", "ofdm_flat_fading")

SWEEP_CSV_COLUMNS = (
    "scheme", "K", "channel", "ebn0_db", "trials", "bit_errors",
    "block_errors", "ber", "bler", "ci_ber", "ci_bler",
)


@dataclass(frozen=True)
class Scheme:
    """A named transmit constellation plus the decoder that reads it."""

    label: str
    constellation: Constellation
    decoder: str = "dizet"
    mlp: MlpParams | None = None

    def __post_init__(self):
        if not self.label:
            raise InvalidArgumentError("scheme label must be nonempty")
        if self.decoder not in ("dizet", "nn"):
            raise InvalidArgumentError(f"unknown decoder kind '{self.decoder}'")
        if self.decoder == "nn":
            if self.mlp is None:
                raise InvalidArgumentError("decoder 'nn' needs network parameters")
            if self.mlp.K != self.constellation.K:
                raise InvalidArgumentError(
                    f"network K={self.mlp.K} does not match constellation K={self.constellation.K}"
                )

    @property
    def K(self) -> int:
        return self.constellation.K


@dataclass(frozen=True)
class SweepResult:
    """Error-rate estimates for one scheme over an Eb/N0 grid.

    ``ci_ber`` and ``ci_bler`` are Wilson 95% half-widths.  Decoder
    failures (root finding did not converge) count the block as
    erroneous and are tallied separately in ``decoder_failures``.
    """

    scheme: str
    K: int
    channel: str
    decoder: str
    seed: int
    ebn0_db: np.ndarray
    trials: np.ndarray
    bit_errors: np.ndarray
    block_errors: np.ndarray
    decoder_failures: np.ndarray
    ber: np.ndarray
    bler: np.ndarray
    ci_ber: np.ndarray
    ci_bler: np.ndarray

    def __post_init__(self):
        n = len(self.ebn0_db)
        for name in ("trials", "bit_errors", "block_errors", "decoder_failures",
                     "ber", "bler", "ci_ber", "ci_bler"):
            if len(getattr(self, name)) != n:
                raise InvalidArgumentError(f"field '{name}' length differs from grid length {n}")
        if np.any(self.bler < self.ber):
            raise InvalidArgumentError("bler must be >= ber at every grid point")


@dataclass(frozen=True)
class GainEntry:
    scheme: str
    ebn0_db_at_target: float
    gain_db: float


@dataclass(frozen=True)
class GainReport:
    """Eb/N0 gains at a target BLER, relative to one baseline curve."""

    target_bler: float
    baseline: str
    entries: tuple[GainEntry, ...] = field(default_factory=tuple)

    def gain(self, scheme: str) -> float:
        for e in self.entries:
            if e.scheme == scheme:
                return e.gain_db
        raise InvalidArgumentError(f"no entry for scheme '{scheme}'")


@dataclass(frozen=True)
class HistogramResult:
    """Per-class decode counts; class index is 1 + the word's binary value."""

    scheme: str
    K: int
    ebn0_db: float | None
    n_decodes: int
    decoded_counts: np.ndarray
    transmitted_counts: np.ndarray


def wilson_interval(successes: int, n: int, z: float = _Z95) -> tuple[float, float]:
    """Wilson score interval as (center, half_width) for a binomial rate."""
    if n <= 0:
        raise InvalidArgumentError("interval needs at least one observation")
    p = successes / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1.0 - p) / n + z * z / (4.0 * n * n)) / denom
    return center, half


def _chunk_rng(seed: int, point: int, start: int) -> np.random.Generator:
    # Philox is counter based; the spawn key ties the stream to the
    # (seed, grid point, first trial index) triple independent of threads.
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(point, start))
    return np.random.Generator(np.random.Philox(ss))


def _apply_channel(
    x: np.ndarray, channel: str, sigma2: float, idft_size: int, rng: np.random.Generator
) -> np.ndarray:
    if channel == "awgn":
        return _awgn_batch(x, sigma2, rng)
    if channel == "flat_fading":
        return _fading_batch(x, sigma2, rng)
    if channel == "ofdm_awgn":
        return _ofdm_batch(x, "awgn", sigma2, idft_size, rng)
    if channel == "ofdm_flat_fading":
        return _ofdm_batch(x, "flat_fading", sigma2, idft_size, rng)
    raise InvalidArgumentError(f"unknown channel '{channel}', expected one of {_CHANNELS}")


def _decode_with_fallback(y: np.ndarray, scheme: Scheme) -> tuple[np.ndarray, int]:
    """Decode a batch, retrying sample by sample if batched decoding fails.

    A sample whose decode still fails contributes the all-zeros word (and
    is reported as a failure), so the block counts as erroneous whenever
    any transmitted bit was one.
    """
    c = scheme.constellation
    try:
        if scheme.decoder == "dizet":
            return _dizet_decode_batch(y, c.radius, c.phases), 0
        return _nn_decode_batch(y, scheme.mlp), 0
    except ConvergenceError:
        pass
    out = np.zeros((y.shape[0], c.K), dtype=np.int64)
    failures = 0
    for i in range(y.shape[0]):
        try:
            if scheme.decoder == "dizet":
                out[i] = _dizet_decode_batch(y[i : i + 1], c.radius, c.phases)[0]
            else:
                out[i] = _nn_decode_batch(y[i : i + 1], scheme.mlp)[0]
        except ConvergenceError:
            failures += 1
    return out, failures


def _run_chunk(
    scheme: Scheme,
    channel: str,
    ebn0_db: float,
    idft_size: int,
    seed: int,
    point: int,
    start: int,
    n: int,
) -> tuple[int, int, int, int]:
    """Simulate ``n`` trials; returns (bit_errors, block_errors, failures, n)."""
    rng = _chunk_rng(seed, point, start)
    K = scheme.K
    bits = rng.integers(0, 2, size=(n, K), dtype=np.int64)
    x = _encode_batch(bits, scheme.constellation.radius, scheme.constellation.phases)
    sigma2 = ebn0_to_noise_var(ebn0_db, K)
    y = _apply_channel(x, channel, sigma2, idft_size, rng)
    dec, failures = _decode_with_fallback(y, scheme)
    wrong = dec != bits
    bit_errors = int(wrong.sum())
    block_errors = int(np.count_nonzero(wrong.any(axis=1)))
    return bit_errors, block_errors, failures, n


def run_sweep(
    scheme: Scheme,
    channel: str,
    ebn0_grid,
    seed: int = 0,
    max_trials: int = 2_000_000,
    target_block_errors: int = 200,
    threads: int = 1,
    idft_size: int = 32,
    chunk_size: int = _CHUNK,
) -> SweepResult:
    """Estimate BER/BLER for one scheme across an Eb/N0 grid.

    Each point runs until ``target_block_errors`` block errors or
    ``max_trials`` trials, whichever comes first.  Chunks are folded in
    trial order and any chunk past the stopping point is discarded, so
    the result does not depend on ``threads``.

    Parameters
    ----------
    scheme : Scheme
        Constellation plus decoder kind (and network, for 'nn').
    channel : str
        One of 'awgn', 'flat_fading', 'ofdm_awgn', 'ofdm_flat_fading'.
    ebn0_grid : array_like
        Eb/N0 values in dB; must be nonempty.
    """
    grid = np.atleast_1d(np.asarray(ebn0_grid, dtype=np.float64))
    if grid.size == 0:
        raise InvalidArgumentError("ebn0_grid must be nonempty")
    if channel not in _CHANNELS:
        raise InvalidArgumentError(f"unknown channel '{channel}', expected one of {_CHANNELS}")
    if max_trials < 1 or target_block_errors < 1:
        raise InvalidArgumentError("max_trials and target_block_errors must be positive")
    if chunk_size < 1:
        raise InvalidArgumentError("chunk_size must be positive")
    threads = max(1, int(threads))

    K = scheme.K
    n_pts = grid.size
    trials = np.zeros(n_pts, dtype=np.int64)
    bit_errors = np.zeros(n_pts, dtype=np.int64)
    block_errors = np.zeros(n_pts, dtype=np.int64)
    failures = np.zeros(n_pts, dtype=np.int64)

    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        for p, ebn0 in enumerate(grid):
            starts = list(range(0, max_trials, chunk_size))
            done = 0
            got_bits = got_blocks = got_fail = got_trials = 0
            while done < len(starts) and got_blocks < target_block_errors:
                batch = starts[done : done + threads]
                args = [
                    (scheme, channel, float(ebn0), idft_size, seed, p, s,
                     min(chunk_size, max_trials - s))
                    for s in batch
                ]
                if pool is None:
                    results = [_run_chunk(*a) for a in args]
                else:
                    results = list(pool.map(lambda a: _run_chunk(*a), args))
                # Fold in trial order; stop mid-batch so the set of counted
                # chunks is a pure function of the accumulated statistics.
                for be, bl, fl, n in results:
                    got_bits += be
                    got_blocks += bl
                    got_fail += fl
                    got_trials += n
                    done += 1
                    if got_blocks >= target_block_errors:
                        break
            trials[p] = got_trials
            bit_errors[p] = got_bits
            block_errors[p] = got_blocks
            failures[p] = got_fail
    finally:
        if pool is not None:
            pool.shutdown()

    ber = bit_errors / (trials * K)
    bler = block_errors / trials
    ci_ber = np.array([wilson_interval(int(b), int(t) * K)[1] for b, t in zip(bit_errors, trials)])
    ci_bler = np.array([wilson_interval(int(b), int(t))[1] for b, t in zip(block_errors, trials)])
    return SweepResult(
        scheme=scheme.label,
        K=K,
        channel=channel,
        decoder=scheme.decoder,
        seed=seed,
        ebn0_db=grid,
        trials=trials,
        bit_errors=bit_errors,
        block_errors=block_errors,
        decoder_failures=failures,
        ber=ber,
        bler=bler,
        ci_ber=ci_ber,
        ci_bler=ci_bler,
    )


def ebn0_at_bler(result: SweepResult, target_bler: float) -> float:
    """Eb/N0 (dB) where the BLER curve crosses ``target_bler``.

    Interpolates linearly in (Eb/N0 dB, log10 BLER) between the two
    adjacent positive-BLER grid points that bracket the target.
    """
    if not 0.0 < target_bler < 1.0:
        raise InvalidArgumentError("target_bler must lie strictly between 0 and 1")
    order = np.argsort(result.ebn0_db)
    x = result.ebn0_db[order]
    y = result.bler[order]
    pos = y > 0
    x, y = x[pos], y[pos]
    for i in range(len(x) - 1):
        hi, lo = y[i], y[i + 1]
        if hi >= target_bler >= lo and hi > lo:
            ly, lh, ll = math.log10(target_bler), math.log10(hi), math.log10(lo)
            t = (ly - lh) / (ll - lh)
            return float(x[i] + t * (x[i + 1] - x[i]))
        if hi == target_bler == lo:
            return float(x[i])
    raise NotBracketedError(
        f"scheme '{result.scheme}': BLER curve does not cross {target_bler:g} "
        f"within its positive-BLER grid points"
    )


def measure_gain(
    results, target_bler: float = 1e-3, baseline: str = "dizet-half"
) -> GainReport:
    """Gains in dB at ``target_bler`` relative to the ``baseline`` curve.

    The baseline's own entry is exactly zero by construction.  A curve
    that never crosses the target raises :class:`NotBracketedError`
    naming the scheme.
    """
    results = list(results)
    labels = [r.scheme for r in results]
    if baseline not in labels:
        raise InvalidArgumentError(f"baseline scheme '{baseline}' not among results {labels}")
    ref = ebn0_at_bler(results[labels.index(baseline)], target_bler)
    entries = []
    for r in results:
        at = ebn0_at_bler(r, target_bler)
        gain = 0.0 if r.scheme == baseline else ref - at
        entries.append(GainEntry(scheme=r.scheme, ebn0_db_at_target=at, gain_db=gain))
    return GainReport(target_bler=target_bler, baseline=baseline, entries=tuple(entries))


def class_histogram(
    scheme: Scheme,
    ebn0_db: float | None,
    n_decodes: int,
    seed: int = 0,
    channel: str = "awgn",
    chunk_size: int = _CHUNK,
) -> HistogramResult:
    """Decode uniformly drawn messages and count decoded-word classes.

    Class ``i`` (1-based) collects decoded words whose bits read as the
    binary number ``i - 1``, most significant bit first.  ``ebn0_db=None``
    disables the noise entirely.
    """
    K = scheme.K
    if K > 8:
        raise UnsupportedSizeError(f"K={K} needs a 2^{K}-bin histogram; only K <= 8 is supported")
    if n_decodes < 1:
        raise InvalidArgumentError("n_decodes must be positive")
    weights = 1 << np.arange(K - 1, -1, -1)
    decoded = np.zeros(1 << K, dtype=np.int64)
    sent = np.zeros(1 << K, dtype=np.int64)
    for start in range(0, n_decodes, chunk_size):
        n = min(chunk_size, n_decodes - start)
        rng = _chunk_rng(seed, 0, start)
        bits = rng.integers(0, 2, size=(n, K), dtype=np.int64)
        x = _encode_batch(bits, scheme.constellation.radius, scheme.constellation.phases)
        if ebn0_db is None:
            y = x
        else:
            y = _apply_channel(x, channel, ebn0_to_noise_var(ebn0_db, K), 32, rng)
        dec, _ = _decode_with_fallback(y, scheme)
        decoded += np.bincount(dec @ weights, minlength=1 << K)
        sent += np.bincount(bits @ weights, minlength=1 << K)
    return HistogramResult(
        scheme=scheme.label,
        K=K,
        ebn0_db=None if ebn0_db is None else float(ebn0_db),
        n_decodes=n_decodes,
        decoded_counts=decoded,
        transmitted_counts=sent,
    )


# ---------------------------------------------------------------------------
# Result emission
# ---------------------------------------------------------------------------


def write_sweep_csv(results, path: str | Path) -> None:
    """Write one or more sweeps as CSV with the fixed column set."""
    if isinstance(results, SweepResult):
        results = [results]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SWEEP_CSV_COLUMNS)
        for r in results:
            for i in range(len(r.ebn0_db)):
                w.writerow([
                    r.scheme, r.K, r.channel, f"{r.ebn0_db[i]:.6g}",
                    int(r.trials[i]), int(r.bit_errors[i]), int(r.block_errors[i]),
                    f"{r.ber[i]:.8e}", f"{r.bler[i]:.8e}",
                    f"{r.ci_ber[i]:.8e}", f"{r.ci_bler[i]:.8e}",
                ])


def gain_report_to_dict(report: GainReport) -> dict:
    return {
        "format_version": 1,
        "target_bler": report.target_bler,
        "baseline": report.baseline,
        "entries": [
            {
                "scheme": e.scheme,
                "ebn0_db_at_target": e.ebn0_db_at_target,
                "gain_db": e.gain_db,
            }
            for e in report.entries
        ],
    }


def write_gain_report(report: GainReport, path: str | Path) -> None:
    Path(path).write_text(json.dumps(gain_report_to_dict(report), indent=2) + "\n")
