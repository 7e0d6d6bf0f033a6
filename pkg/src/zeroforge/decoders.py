"""The two receivers: direct zero testing and a neural decoder on roots.

Direct zero testing (DiZeT) never finds roots.  For bit ``k`` it compares
the received polynomial's magnitude at the two candidate zero locations on
ray ``k``; the weighting ``R**(L_t - 1)`` on the inner point makes the two
hypotheses symmetric.  Decisions depend only on magnitude ratios, so any
complex scaling of the received block (a flat fade) cancels.

The neural decoder factors the received polynomial into its root multiset
(scale-invariant by construction), flattens the unordered roots through an
interleaved real/imaginary bijection, and maps them to per-bit logits with
a three-layer perceptron.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .constellation import Constellation
from .errors import InvalidArgumentError
from .poly import ComplexPoly, _eval_batch, _roots_batch

FORMAT_VERSION = 1


# ---------------------------------------------------------------------------
# DiZeT
# ---------------------------------------------------------------------------


def dizet_tau(y: ComplexPoly, c: Constellation, k: int, L_t: int) -> float:
    """Decision variable for bit ``k``.

    ``tau = |Y(R e^{j theta_k})| - R**(L_t-1) * |Y(R^{-1} e^{j theta_k})|``:
    negative when the received polynomial sits closer to a root at the
    outer candidate, i.e. evidence for bit 1.
    """
    if not 0 <= k < c.K:
        raise InvalidArgumentError(f"bit index {k} out of range for K={c.K}")
    if L_t != y.degree + 1:
        raise InvalidArgumentError(f"L_t={L_t} does not match degree {y.degree} + 1")
    tau = _dizet_tau_batch(y.coeffs[None, :], c.radius, c.phases[k : k + 1])
    return float(tau[0, 0])


def dizet_decode(y: ComplexPoly, c: Constellation, L_t: int) -> np.ndarray:
    """Hard DiZeT decisions: bit ``k`` is 1 iff ``tau_k < 0`` (tie -> 0)."""
    if L_t != y.degree + 1:
        raise InvalidArgumentError(f"L_t={L_t} does not match degree {y.degree} + 1")
    tau = _dizet_tau_batch(y.coeffs[None, :], c.radius, c.phases)
    return (tau[0] < 0).astype(np.int64)


def _dizet_tau_batch(y: np.ndarray, radius: float, phases: np.ndarray) -> np.ndarray:
    """Decision variables for each row of received coefficients.

    y: (B, L_t) ascending coefficients -> tau: (B, len(phases)).
    """
    rays = np.exp(1j * phases)
    outer = _eval_batch(y, np.broadcast_to(radius * rays, (y.shape[0], phases.size)))
    inner = _eval_batch(y, np.broadcast_to(rays / radius, (y.shape[0], phases.size)))
    weight = radius ** (y.shape[1] - 1)
    return np.abs(outer) - weight * np.abs(inner)


def _dizet_decode_batch(y: np.ndarray, radius: float, phases: np.ndarray) -> np.ndarray:
    return (_dizet_tau_batch(y, radius, phases) < 0).astype(np.int64)


# ---------------------------------------------------------------------------
# Neural decoder
# ---------------------------------------------------------------------------


def real_bijection(zeros: np.ndarray) -> np.ndarray:
    """Flatten K complex roots to 2K reals, interleaving Re and Im.

    ``[z0, z1, ...] -> [Re z0, Im z0, Re z1, Im z1, ...]``, in the order
    the root finder produced them; no sorting, so the network sees roots
    in solver order and must stay permutation agnostic.
    """
    z = np.asarray(zeros, dtype=np.complex128)
    if z.ndim != 1:
        raise InvalidArgumentError(f"zeros must be 1-d, got shape {z.shape}")
    return _real_bijection_batch(z[None, :])[0]


def _real_bijection_batch(lam: np.ndarray) -> np.ndarray:
    B, K = lam.shape
    feats = np.empty((B, 2 * K), dtype=np.float64)
    feats[:, 0::2] = lam.real
    feats[:, 1::2] = lam.imag
    return feats


@dataclass
class MlpParams:
    """Weights of the three-layer decoder network.

    Layer k computes ``h @ W_k + b_k``; shapes are (2K, L), (L, L), (L, K)
    with hidden width ``L``.  Leaky-ReLU (negative slope ``slope``) and
    dropout follow the first two layers.  Dropout fires only when
    ``training_mode`` is true, with inverted scaling ``1/(1-dropout)`` so
    inference needs no rescale.
    """

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray
    W3: np.ndarray
    b3: np.ndarray
    slope: float = 0.01
    dropout: float = 0.25
    training_mode: bool = False

    def __post_init__(self) -> None:
        for name in ("W1", "b1", "W2", "b2", "W3", "b3"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        two_k, L = self.W1.shape
        K = self.W3.shape[1]
        ok = (
            two_k == 2 * K
            and self.b1.shape == (L,)
            and self.W2.shape == (L, L)
            and self.b2.shape == (L,)
            and self.W3.shape == (L, K)
            and self.b3.shape == (K,)
        )
        if not ok:
            raise InvalidArgumentError(
                "inconsistent layer shapes: "
                + ", ".join(f"{n}={getattr(self, n).shape}" for n in ("W1", "b1", "W2", "b2", "W3", "b3"))
            )
        if not 0.0 <= self.dropout < 1.0:
            raise InvalidArgumentError(f"dropout rate must be in [0, 1), got {self.dropout}")

    @property
    def K(self) -> int:
        return self.W3.shape[1]

    @property
    def l_hidden(self) -> int:
        return self.W1.shape[1]


def mlp_forward(
    x: np.ndarray, params: MlpParams, rng: np.random.Generator | None = None
) -> np.ndarray:
    """Logits for one feature vector (2K,) or a batch (B, 2K).

    In training mode an ``rng`` is required for the dropout masks; in
    inference mode the result is a deterministic function of the inputs.
    """
    a = np.asarray(x, dtype=np.float64)
    single = a.ndim == 1
    if single:
        a = a[None, :]
    if a.shape[1] != 2 * params.K:
        raise InvalidArgumentError(f"expected {2 * params.K} features, got {a.shape[1]}")
    if params.training_mode and rng is None:
        raise InvalidArgumentError("training-mode forward pass needs a random source")
    out = _mlp_forward_batch(a, params, params.training_mode, rng)[0]
    return out[0] if single else out


def _buf(work: dict | None, name: str, shape: tuple, dtype=np.float64) -> np.ndarray:
    """A reusable work buffer when ``work`` is given, else a fresh array.

    Training loops pass one persistent dict so the large per-batch
    intermediates are written in place instead of reallocated each epoch.
    """
    if work is None:
        return np.empty(shape, dtype=dtype)
    buf = work.get(name)
    if buf is None or buf.shape != shape or buf.dtype != dtype:
        buf = np.empty(shape, dtype=dtype)
        work[name] = buf
    return buf


def _dropout_mask(
    work: dict | None, name: str, shape: tuple, keep: float, rng: np.random.Generator
) -> np.ndarray:
    # Inverted scaling: kept units are multiplied by 1/keep so the
    # inference pass needs no rescaling.
    mask = _buf(work, name, shape)
    draw = _buf(work, name + "_draw", shape)
    rng.random(out=draw)
    np.less(draw, keep, out=mask)
    mask /= keep
    return mask


def _mlp_forward_batch(
    x: np.ndarray,
    params: MlpParams,
    training: bool,
    rng: np.random.Generator | None,
    masks: tuple[np.ndarray, np.ndarray] | None = None,
    work: dict | None = None,
) -> tuple[np.ndarray, dict]:
    """Forward pass returning logits and the cache backprop needs.

    ``masks`` injects pre-drawn dropout masks (already scaled); finite
    difference checks use this to keep the masks frozen across calls.
    """
    keep = 1.0 - params.dropout
    B = x.shape[0]
    L = params.l_hidden
    dropping = masks is None and training and params.dropout > 0.0
    h1 = _buf(work, "h1", (B, L))
    np.matmul(x, params.W1, out=h1)
    h1 += params.b1
    # leaky(h) == max(h, slope * h) for slope in (0, 1); cheaper than where.
    a1 = _buf(work, "a1", (B, L))
    np.multiply(h1, params.slope, out=a1)
    np.maximum(a1, h1, out=a1)
    if masks is not None:
        m1 = masks[0]
        a1 *= m1
    elif dropping:
        m1 = _dropout_mask(work, "m1", (B, L), keep, rng)
        a1 *= m1
    else:
        m1 = None
    h2 = _buf(work, "h2", (B, L))
    np.matmul(a1, params.W2, out=h2)
    h2 += params.b2
    a2 = _buf(work, "a2", (B, L))
    np.multiply(h2, params.slope, out=a2)
    np.maximum(a2, h2, out=a2)
    if masks is not None:
        m2 = masks[1]
        a2 *= m2
    elif dropping:
        m2 = _dropout_mask(work, "m2", (B, L), keep, rng)
        a2 *= m2
    else:
        m2 = None
    logits = a2 @ params.W3
    logits += params.b3
    cache = {"x": x, "h1": h1, "m1": m1, "a1": a1, "h2": h2, "m2": m2, "a2": a2}
    return logits, cache


def _mlp_backward(
    gl: np.ndarray, params: MlpParams, cache: dict, work: dict | None = None
) -> tuple[dict, np.ndarray]:
    """Gradients of all weights plus the input features, given dL/dlogits."""
    slope = params.slope
    x, a1, a2 = cache["x"], cache["a1"], cache["a2"]
    B, L = a1.shape
    n_in = x.shape[1]
    gW3 = _buf(work, "gW3", (L, gl.shape[1]))
    np.matmul(a2.T, gl, out=gW3)
    gb3 = gl.sum(axis=0)
    ga2 = _buf(work, "ga2", (B, L))
    np.matmul(gl, params.W3.T, out=ga2)
    if cache["m2"] is not None:
        ga2 *= cache["m2"]
    # d(leaky)/dh is 1 where h > 0 and slope elsewhere.
    pos2 = np.greater(cache["h2"], 0, out=_buf(work, "pos2", (B, L), bool))
    gh2 = _buf(work, "gh2", (B, L))
    np.multiply(ga2, slope, out=gh2)
    np.copyto(gh2, ga2, where=pos2)
    gW2 = _buf(work, "gW2", (L, L))
    np.matmul(a1.T, gh2, out=gW2)
    gb2 = gh2.sum(axis=0)
    ga1 = _buf(work, "ga1", (B, L))
    np.matmul(gh2, params.W2.T, out=ga1)
    if cache["m1"] is not None:
        ga1 *= cache["m1"]
    pos1 = np.greater(cache["h1"], 0, out=_buf(work, "pos1", (B, L), bool))
    gh1 = _buf(work, "gh1", (B, L))
    np.multiply(ga1, slope, out=gh1)
    np.copyto(gh1, ga1, where=pos1)
    gW1 = _buf(work, "gW1", (n_in, L))
    np.matmul(x.T, gh1, out=gW1)
    gb1 = gh1.sum(axis=0)
    gx = gh1 @ params.W1.T
    grads = {"W1": gW1, "b1": gb1, "W2": gW2, "b2": gb2, "W3": gW3, "b3": gb3}
    return grads, gx


def nn_decode(y: ComplexPoly, c_params: MlpParams, K: int) -> np.ndarray:
    """Hard neural decisions: roots -> features -> logits -> (logit > 0)."""
    if y.degree != K or c_params.K != K:
        raise InvalidArgumentError(
            f"degree {y.degree} and network K {c_params.K} must both equal K={K}"
        )
    return _nn_decode_batch(y.coeffs[None, :], c_params)[0]


def _nn_decode_batch(y: np.ndarray, params: MlpParams) -> np.ndarray:
    """(B, K+1) received coefficients -> (B, K) hard bits, inference mode."""
    lam, _ = _roots_batch(y, want_vectors=False)
    feats = _real_bijection_batch(lam)
    logits, _ = _mlp_forward_batch(feats, params, training=False, rng=None)
    return (logits > 0).astype(np.int64)


# ---------------------------------------------------------------------------
# Serialization: {"format_version": 1, "K", "l_hidden", "slope", "dropout",
#                 "layers": [{"w": [[...]], "b": [...]}; 3]}
# where w[i][j] weights input i to output j.
# ---------------------------------------------------------------------------


def mlp_to_dict(params: MlpParams) -> dict:
    layers = []
    for W, b in ((params.W1, params.b1), (params.W2, params.b2), (params.W3, params.b3)):
        layers.append({"w": W.tolist(), "b": b.tolist()})
    return {
        "format_version": FORMAT_VERSION,
        "K": int(params.K),
        "l_hidden": int(params.l_hidden),
        "slope": float(params.slope),
        "dropout": float(params.dropout),
        "layers": layers,
    }


def mlp_from_dict(d: dict) -> MlpParams:
    version = d.get("format_version", FORMAT_VERSION)
    if version != FORMAT_VERSION:
        raise InvalidArgumentError(f"unsupported network format_version {version}")
    for key in ("K", "l_hidden", "slope", "dropout", "layers"):
        if key not in d:
            raise InvalidArgumentError(f"network JSON is missing field '{key}'")
    layers = d["layers"]
    if len(layers) != 3:
        raise InvalidArgumentError(f"expected 3 layers, got {len(layers)}")
    mats = [(np.asarray(l["w"], dtype=np.float64), np.asarray(l["b"], dtype=np.float64)) for l in layers]
    params = MlpParams(
        W1=mats[0][0], b1=mats[0][1],
        W2=mats[1][0], b2=mats[1][1],
        W3=mats[2][0], b3=mats[2][1],
        slope=float(d["slope"]),
        dropout=float(d["dropout"]),
    )
    if params.K != int(d["K"]) or params.l_hidden != int(d["l_hidden"]):
        raise InvalidArgumentError(
            f"layer shapes imply K={params.K}, l_hidden={params.l_hidden}; "
            f"JSON declares K={d['K']}, l_hidden={d['l_hidden']}"
        )
    return params


def save_mlp(params: MlpParams, path: str | Path) -> None:
    Path(path).write_text(json.dumps(mlp_to_dict(params)) + "\n")


def load_mlp(path: str | Path) -> MlpParams:
    return mlp_from_dict(json.loads(Path(path).read_text()))
