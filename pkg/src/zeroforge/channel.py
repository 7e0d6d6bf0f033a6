"""Channel models: Eb/N0 bookkeeping, AWGN, flat fading, and the OFDM path.

Noise is complex circular Gaussian with total variance ``sigma2`` per
coefficient (``sigma2/2`` on each of the real and imaginary parts).  A
transmitted block carries energy K+1 and K information bits, which fixes
the Eb/N0 conversion used everywhere:

    sigma2 = (K + 1) / (K * 10**(ebn0_db / 10)).

The OFDM path carries the K+1 coefficients on the first K+1 bins of a
unitary IDFT.  Unitary transforms preserve white Gaussian noise, so
time-domain noise of per-sample variance ``sigma2`` demaps to exactly
``sigma2`` per coefficient and the path is statistically equivalent to
perturbing coefficients directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError
from .poly import ComplexPoly

_CHANNEL_KINDS = ("awgn", "flat_fading")


@dataclass(frozen=True)
class ChannelConfig:
    """Which channel to apply and at what operating point."""

    kind: str
    ebn0_db: float
    K: int
    idft_size: int = 32
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in _CHANNEL_KINDS:
            raise InvalidArgumentError(
                f"kind must be one of {_CHANNEL_KINDS}, got {self.kind!r}"
            )
        if self.idft_size < self.K + 1:
            raise InvalidArgumentError(
                f"idft_size {self.idft_size} must be at least K+1 = {self.K + 1}"
            )

    @property
    def noise_var(self) -> float:
        return ebn0_to_noise_var(self.ebn0_db, self.K)


def ebn0_to_noise_var(ebn0_db: float, K: int) -> float:
    """Per-coefficient complex noise variance for a given Eb/N0 in dB."""
    if K < 1:
        raise InvalidArgumentError(f"K must be >= 1, got {K}")
    return (K + 1) / (K * 10.0 ** (ebn0_db / 10.0))


def _complex_normal(rng: np.random.Generator, shape: tuple, var: float) -> np.ndarray:
    scale = np.sqrt(var / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def apply_awgn(x: ComplexPoly, sigma2: float, rng: np.random.Generator) -> ComplexPoly:
    """Add independent CN(0, sigma2) noise to every coefficient."""
    if sigma2 < 0:
        raise InvalidArgumentError(f"sigma2 must be nonnegative, got {sigma2}")
    return ComplexPoly(_awgn_batch(x.coeffs[None, :], sigma2, rng)[0])


def apply_flat_fading(x: ComplexPoly, sigma2: float, rng: np.random.Generator) -> ComplexPoly:
    """Scale the whole block by one h ~ CN(0,1), then add AWGN.

    h is drawn before the noise; keep that order in mind when replaying
    seeded streams.
    """
    if sigma2 < 0:
        raise InvalidArgumentError(f"sigma2 must be nonnegative, got {sigma2}")
    return ComplexPoly(_fading_batch(x.coeffs[None, :], sigma2, rng)[0])


def _awgn_batch(x: np.ndarray, sigma2: float, rng: np.random.Generator) -> np.ndarray:
    return x + _complex_normal(rng, x.shape, sigma2)


def _fading_batch(x: np.ndarray, sigma2: float, rng: np.random.Generator) -> np.ndarray:
    h = _complex_normal(rng, (x.shape[0], 1), 1.0)
    return h * x + _complex_normal(rng, x.shape, sigma2)


def ofdm_path(x: ComplexPoly, cfg: ChannelConfig, rng: np.random.Generator) -> ComplexPoly:
    """Send coefficients over K+1 active bins of a unitary (I)DFT pair.

    Returns the received coefficients extracted from the active bins after
    the block channel acted on the time-domain signal.
    """
    L = x.degree + 1
    if cfg.idft_size < L:
        raise InvalidArgumentError(
            f"idft_size {cfg.idft_size} must be at least {L} for degree {x.degree}"
        )
    return ComplexPoly(_ofdm_batch(x.coeffs[None, :], cfg.kind, cfg.noise_var, cfg.idft_size, rng)[0])


def _ofdm_batch(
    x: np.ndarray, kind: str, sigma2: float, idft_size: int, rng: np.random.Generator
) -> np.ndarray:
    B, L = x.shape
    spectrum = np.zeros((B, idft_size), dtype=np.complex128)
    spectrum[:, :L] = x
    s = np.fft.ifft(spectrum, axis=1) * np.sqrt(idft_size)
    if kind == "flat_fading":
        h = _complex_normal(rng, (B, 1), 1.0)
        s = h * s
    s = s + _complex_normal(rng, s.shape, sigma2)
    r = np.fft.fft(s, axis=1) / np.sqrt(idft_size)
    return r[:, :L]
