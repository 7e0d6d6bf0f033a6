"""Zero constellations: where the information-bearing roots may sit.

A constellation is a radius ``R > 1`` plus K ray phases.  Bit ``k`` of a
message picks between the conjugate-reciprocal pair ``R * exp(j theta_k)``
(bit 1) and ``(1/R) * exp(j theta_k)`` (bit 0).  Encoding builds the monic
polynomial with those roots and rescales its coefficient energy to K+1.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError
from .poly import ComplexPoly, _poly_from_zeros_batch, normalize_energy, poly_from_zeros

_MIN_PHASE_GAP = 1e-6

FORMAT_VERSION = 1


def dizet_radius(K: int, lam: float) -> float:
    """Canonical decoder-optimal radius ``sqrt(1 + 2*lam*sin(pi/K))``.

    ``lam`` trades off zero separation against coefficient dynamic range;
    ``lam = 1/2`` is the usual operating point.
    """
    if K < 2:
        raise InvalidArgumentError(f"K must be >= 2, got {K}")
    if lam <= 0:
        raise InvalidArgumentError(f"lambda must be positive, got {lam}")
    return float(np.sqrt(1.0 + 2.0 * lam * np.sin(np.pi / K)))


@dataclass(frozen=True)
class Constellation:
    """Radius and ray phases defining all 2K candidate zero locations.

    Parameters
    ----------
    radius : float
        Outer radius R, strictly greater than 1.
    phases : array_like of float, shape (K,)
        Ray angles; stored reduced modulo 2*pi.  Must be pairwise
        distinct with angular gaps above 1e-6.
    """

    radius: float
    phases: np.ndarray = field()

    def __post_init__(self) -> None:
        r = float(self.radius)
        if not r > 1.0:
            raise InvalidArgumentError(f"radius must be strictly greater than 1, got {r}")
        ph = np.mod(np.asarray(self.phases, dtype=np.float64), 2.0 * np.pi)
        if ph.ndim != 1 or ph.size < 1:
            raise InvalidArgumentError(f"phases must be a nonempty 1-d sequence, got shape {ph.shape}")
        if ph.size > 1:
            s = np.sort(ph)
            gaps = np.diff(np.concatenate([s, [s[0] + 2.0 * np.pi]]))
            if gaps.min() <= _MIN_PHASE_GAP:
                raise InvalidArgumentError(
                    f"phases must be pairwise distinct modulo 2*pi (min gap {gaps.min():.3e})"
                )
        object.__setattr__(self, "radius", r)
        object.__setattr__(self, "phases", ph)

    @property
    def K(self) -> int:
        return self.phases.size


def canonical_constellation(K: int, lam: float = 0.5) -> Constellation:
    """Uniform-phase constellation at the canonical radius for (K, lam)."""
    return Constellation(dizet_radius(K, lam), 2.0 * np.pi * np.arange(K) / K)


def bits_to_zeros(bits: np.ndarray, c: Constellation) -> np.ndarray:
    """Map a K-bit message to its zero pattern.

    Zero ``k`` is ``R * exp(j theta_k)`` when ``bits[k] == 1`` and
    ``(1/R) * exp(j theta_k)`` otherwise.
    """
    b = _check_bits(bits, c.K)
    return _bits_to_zeros_batch(b[None, :], c.radius, c.phases)[0]


def encode(bits: np.ndarray, c: Constellation) -> ComplexPoly:
    """Transmit coefficients for a message: monic from zeros, energy K+1."""
    b = _check_bits(bits, c.K)
    p = poly_from_zeros(_bits_to_zeros_batch(b[None, :], c.radius, c.phases)[0], 1.0)
    return normalize_energy(p, c.K + 1)


def _check_bits(bits: np.ndarray, K: int) -> np.ndarray:
    b = np.asarray(bits)
    if b.ndim != 1 or b.size != K:
        raise InvalidArgumentError(f"expected {K} bits, got shape {b.shape}")
    if not np.all((b == 0) | (b == 1)):
        raise InvalidArgumentError("bits must all be 0 or 1")
    return b.astype(np.float64)


def _bits_to_zeros_batch(bits: np.ndarray, radius: float, phases: np.ndarray) -> np.ndarray:
    """(B, K) bits -> (B, K) zeros at radius**(2b-1) on each ray."""
    signs = 2.0 * bits - 1.0
    return radius**signs * np.exp(1j * phases)[None, :]


def _encode_batch(bits: np.ndarray, radius: float, phases: np.ndarray) -> np.ndarray:
    """(B, K) bits -> (B, K+1) coefficients, each row at energy K+1."""
    zeros = _bits_to_zeros_batch(bits, radius, phases)
    x = _poly_from_zeros_batch(zeros)
    K = bits.shape[1]
    scale = np.sqrt((K + 1) / np.sum(np.abs(x) ** 2, axis=1))
    return x * scale[:, None]


# ---------------------------------------------------------------------------
# Serialization: {"format_version": 1, "K": int, "radius": float,
#                 "phases": [float; K]}
# ---------------------------------------------------------------------------


def constellation_to_dict(c: Constellation) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "K": int(c.K),
        "radius": float(c.radius),
        "phases": [float(v) for v in c.phases],
    }


def constellation_from_dict(d: dict) -> Constellation:
    version = d.get("format_version", FORMAT_VERSION)
    if version != FORMAT_VERSION:
        raise InvalidArgumentError(f"unsupported constellation format_version {version}")
    for key in ("K", "radius", "phases"):
        if key not in d:
            raise InvalidArgumentError(f"constellation JSON is missing field '{key}'")
    c = Constellation(float(d["radius"]), np.asarray(d["phases"], dtype=np.float64))
    if c.K != int(d["K"]):
        raise InvalidArgumentError(
            f"constellation field 'K' is {d['K']} but {c.K} phases were given"
        )
    return c


def save_constellation(c: Constellation, path: str | Path) -> None:
    Path(path).write_text(json.dumps(constellation_to_dict(c), indent=2) + "\n")


def load_constellation(path: str | Path) -> Constellation:
    return constellation_from_dict(json.loads(Path(path).read_text()))
