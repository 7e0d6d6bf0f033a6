"""Gradient-based learning of zero constellations and the neural decoder.

The whole pipeline — zeros from (R, theta), polynomial construction,
energy normalization, noise, decision variables or root finding, loss —
is differentiated by hand in reverse mode.  Complex intermediates carry
"packed" gradients ``g = dL/dRe(z) + j dL/dIm(z)``; for a holomorphic map
``w = f(z)`` the packed gradients chain as ``g_z = conj(f'(z)) * g_w``,
and a real parameter ``t`` feeding a complex value collects
``dL/dt = Re(conj(g_z) * dz/dt)``.  Every rule here is covered by the
finite-difference suite in :func:`run_gradient_checks`.

Two training procedures are provided.  ``train_dizet`` shapes the
constellation for the direct zero-test receiver with a hinge margin on
its decision variables.  ``train_nn`` jointly trains constellation and
network logits with binary cross-entropy, then freezes the constellation
and fine-tunes the network alone at a lower Eb/N0.  The radius is kept
strictly above 1 by the substitution ``R = sqrt(1 + softplus(rho))`` with
``rho`` unconstrained.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, fields

import numpy as np

from .channel import ebn0_to_noise_var
from .constellation import Constellation, _bits_to_zeros_batch, dizet_radius
from .decoders import MlpParams, _mlp_backward, _mlp_forward_batch, _real_bijection_batch
from .errors import TrainingAbortError, ValidationError
from .poly import (
    _companion_batch,
    _deflation_tableau,
    _eval_batch,
    _pairwise_min_gap,
    _poly_from_zeros_batch,
    _SIMPLE_GAP_TOL,
)

logger = logging.getLogger("zeroforge.training")

DEFAULT_L_HIDDEN = {4: 500, 7: 1000, 10: 1500}


# ---------------------------------------------------------------------------
# Small numerics
# ---------------------------------------------------------------------------


def _softplus(x: np.ndarray | float) -> np.ndarray | float:
    return np.log1p(np.exp(-np.abs(x))) + np.maximum(x, 0.0)


def _sigmoid(x: np.ndarray | float) -> np.ndarray | float:
    pos = 1.0 / (1.0 + np.exp(-np.abs(x)))
    return np.where(x >= 0, pos, 1.0 - pos)


def rho_to_radius(rho: float) -> float:
    """Radius for an unconstrained parameter: sqrt(1 + softplus(rho)) > 1."""
    return float(np.sqrt(1.0 + _softplus(float(rho))))


def radius_to_rho(radius: float) -> float:
    """Inverse of :func:`rho_to_radius` (softplus inverse is log(expm1))."""
    if not radius > 1.0:
        raise ValidationError(f"field 'radius' must be > 1, got {radius}")
    return float(np.log(np.expm1(radius * radius - 1.0)))


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters shared by both training procedures.

    ``ebn0_db`` is the (only) operating point for the hinge procedure and
    the stage-1 point for the joint procedure; ``ebn0_db_stage2`` applies
    to the network-only refinement stage.  ``margin`` and
    ``hinge_label_flip`` affect only the hinge procedure; ``l_hidden``,
    ``slope``, ``dropout`` only the network.  ``l_hidden=None`` resolves
    from ``DEFAULT_L_HIDDEN`` when K is one of its keys.
    """

    K: int
    n_epoch: int
    batch_size: int = 256
    ebn0_db: float = 10.0
    ebn0_db_stage2: float = 5.0
    margin: float = 1.0
    lr_initial: float = 1e-2
    lr_final: float = 1e-4
    l_hidden: int | None = None
    seed: int = 0
    dropout: float = 0.25
    slope: float = 0.01
    hinge_label_flip: bool = False

    def __post_init__(self) -> None:
        if self.K < 2:
            raise ValidationError(f"field 'K' must be >= 2, got {self.K}")
        if self.batch_size < 1:
            raise ValidationError(f"field 'batch_size' must be >= 1, got {self.batch_size}")
        if self.n_epoch < 1:
            raise ValidationError(f"field 'n_epoch' must be >= 1, got {self.n_epoch}")
        if not (self.lr_initial >= self.lr_final > 0):
            raise ValidationError(
                "fields 'lr_initial'/'lr_final' must satisfy lr_initial >= lr_final > 0, "
                f"got {self.lr_initial} and {self.lr_final}"
            )
        if self.margin <= 0:
            raise ValidationError(f"field 'margin' must be positive, got {self.margin}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValidationError(f"field 'dropout' must be in [0, 1), got {self.dropout}")
        if self.l_hidden is not None and self.l_hidden < 1:
            raise ValidationError(f"field 'l_hidden' must be >= 1, got {self.l_hidden}")

    def resolve_l_hidden(self) -> int:
        if self.l_hidden is not None:
            return self.l_hidden
        if self.K in DEFAULT_L_HIDDEN:
            return DEFAULT_L_HIDDEN[self.K]
        raise ValidationError(
            f"field 'l_hidden' is required for K={self.K} (no default width for this K)"
        )


def config_from_dict(d: dict) -> TrainConfig:
    """Build a TrainConfig from a plain mapping, rejecting unknown keys."""
    known = {f.name for f in fields(TrainConfig)}
    unknown = set(d) - known
    if unknown:
        raise ValidationError(f"unknown config field(s): {', '.join(sorted(unknown))}")
    if "K" not in d:
        raise ValidationError("field 'K' is required")
    if "n_epoch" not in d:
        raise ValidationError("field 'n_epoch' is required")
    try:
        return TrainConfig(**d)
    except TypeError as exc:
        raise ValidationError(str(exc)) from exc


# ---------------------------------------------------------------------------
# Losses and schedule
# ---------------------------------------------------------------------------


def hinge_loss(
    tau: np.ndarray | float,
    bit: np.ndarray | float,
    t: float,
    label_flip: bool = False,
) -> np.ndarray | float:
    """Margin penalty ``max(0, t - label * tau)`` for decision variables.

    A negative decision variable signals bit 1, so the default label is
    ``1 - 2*bit``; ``label_flip`` selects the opposite orientation
    ``2*bit - 1`` for experimentation.
    """
    if t <= 0:
        raise ValidationError(f"field 'margin' must be positive, got {t}")
    b = np.asarray(bit, dtype=np.float64)
    label = (2.0 * b - 1.0) if label_flip else (1.0 - 2.0 * b)
    out = np.maximum(0.0, t - label * np.asarray(tau, dtype=np.float64))
    return float(out) if out.ndim == 0 else out


def bce_loss(p: np.ndarray | float, bit: np.ndarray | float) -> np.ndarray | float:
    """Binary cross-entropy on logits, in the stable log-sum-exp form."""
    p = np.asarray(p, dtype=np.float64)
    b = np.asarray(bit, dtype=np.float64)
    out = np.maximum(p, 0.0) - b * p + np.log1p(np.exp(-np.abs(p)))
    return float(out) if out.ndim == 0 else out


def lr_schedule(epoch: int, cfg: TrainConfig) -> float:
    """Exponential decay from lr_initial (epoch 0) to lr_final (epoch n_epoch)."""
    if not 0 <= epoch <= cfg.n_epoch:
        raise ValidationError(f"epoch {epoch} outside [0, {cfg.n_epoch}]")
    return cfg.lr_initial * (cfg.lr_final / cfg.lr_initial) ** (epoch / cfg.n_epoch)


def gen_batch(
    cfg: TrainConfig, c: Constellation, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Draw one training batch: uniform messages and their noisy coefficients.

    Returns ``(bits, y)`` with shapes (B, K) int and (B, K+1) complex.
    Draw order is bits first, then noise, one block of each.
    """
    sigma2 = ebn0_to_noise_var(cfg.ebn0_db, cfg.K)
    bits = rng.integers(0, 2, (cfg.batch_size, cfg.K))
    y = _transmit(bits.astype(np.float64), c.radius, c.phases, sigma2, rng)
    return bits, y


def _transmit(
    bits: np.ndarray,
    radius: float,
    phases: np.ndarray,
    sigma2: float,
    rng: np.random.Generator,
) -> np.ndarray:
    zeros = _bits_to_zeros_batch(bits, radius, phases)
    x = _poly_from_zeros_batch(zeros)
    K = bits.shape[1]
    x = x * np.sqrt((K + 1) / np.sum(np.abs(x) ** 2, axis=1))[:, None]
    scale = np.sqrt(sigma2 / 2.0)
    return x + scale * (rng.standard_normal(x.shape) + 1j * rng.standard_normal(x.shape))


# ---------------------------------------------------------------------------
# ADAM
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    """First/second moment accumulators, one pair per named parameter.

    ``scratch`` holds lazily allocated per-parameter work buffers so the
    large-array update runs without fresh allocations every step.
    """

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    scratch: dict = field(default_factory=dict)


def adam_init(params: dict[str, np.ndarray], beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> AdamState:
    return AdamState(
        m={k: np.zeros_like(v) for k, v in params.items()},
        v={k: np.zeros_like(v) for k, v in params.items()},
        beta1=beta1,
        beta2=beta2,
        eps=eps,
    )


def adam_step(
    state: AdamState,
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    lr: float,
) -> dict[str, np.ndarray]:
    """One bias-corrected update of every parameter; returns ``params``.

    Array entries are updated in place (the moment buffers as well), so
    any aliases of the parameter arrays see the new values.  Raises
    :class:`TrainingAbortError` on any non-finite gradient.
    """
    state.step += 1
    t = state.step
    bias1 = 1.0 - state.beta1**t
    bias2 = 1.0 - state.beta2**t
    for k in params:
        g = np.asarray(grads[k], dtype=np.float64)
        # A non-finite entry poisons the sum, which is much cheaper to
        # test than an elementwise isfinite over large weight matrices.
        if not np.isfinite(g.sum()):
            raise TrainingAbortError(f"non-finite gradient for parameter '{k}' at step {t}")
        m, v = state.m[k], state.v[k]
        p = params[k]
        if isinstance(p, np.ndarray) and p.ndim > 0:
            # Reused scratch buffers; ops ordered to match the expression
            # p - lr * (m / bias1) / (sqrt(v / bias2) + eps) bitwise.
            if k not in state.scratch:
                state.scratch[k] = (np.empty_like(v), np.empty_like(v), np.empty_like(m))
            gg, denom, update = state.scratch[k]
            m *= state.beta1
            np.multiply(1.0 - state.beta1, g, out=update)
            m += update
            v *= state.beta2
            np.multiply(1.0 - state.beta2, g, out=gg)
            gg *= g
            v += gg
            np.divide(v, bias2, out=denom)
            np.sqrt(denom, out=denom)
            denom += state.eps
            np.divide(m, bias1, out=update)
            update *= lr
            update /= denom
            np.subtract(p, update, out=p)
        else:
            m *= state.beta1
            m += (1.0 - state.beta1) * g
            v *= state.beta2
            gg = (1.0 - state.beta2) * g
            gg *= g
            v += gg
            mh = m / bias1
            vh = v / bias2
            params[k] = p - lr * mh / (np.sqrt(vh) + state.eps)
    return params


# ---------------------------------------------------------------------------
# Forward/backward through the hinge (DiZeT) path
# ---------------------------------------------------------------------------


def dizet_loss_and_grads(
    rho: float,
    theta: np.ndarray,
    bits: np.ndarray,
    w: np.ndarray,
    margin: float,
    label_flip: bool = False,
) -> tuple[float, float, np.ndarray]:
    """Mean hinge loss over a batch and its gradients wrt (rho, theta).

    ``bits`` is (B, K) in {0,1}; ``w`` is the (B, K+1) noise realization,
    passed explicitly so finite differences can hold it fixed.
    """
    B, K = bits.shape
    bits = bits.astype(np.float64)
    R = rho_to_radius(rho)
    s = 2.0 * bits - 1.0
    alpha = R**s * np.exp(1j * theta)[None, :]
    x = _poly_from_zeros_batch(alpha)
    S = np.sum(np.abs(x) ** 2, axis=1)
    g = np.sqrt((K + 1.0) / S)
    xt = g[:, None] * x
    y = xt + w

    p1 = R * np.exp(1j * theta)
    p2 = np.exp(1j * theta) / R
    n = np.arange(K + 1)
    V1 = p1[:, None] ** n[None, :]  # (K, K+1)
    V2 = p2[:, None] ** n[None, :]
    v1 = y @ V1.T
    v2 = y @ V2.T
    a1 = np.abs(v1)
    a2 = np.abs(v2)
    wgt = R**K
    tau = a1 - wgt * a2

    label = (2.0 * bits - 1.0) if label_flip else (1.0 - 2.0 * bits)
    margin_slack = margin - label * tau
    active = margin_slack > 0
    loss = float(np.mean(np.maximum(margin_slack, 0.0)))

    # Backward.  dL/dtau is zero on satisfied margins.
    gtau = -(label * active) / (B * K)
    ga1 = gtau
    ga2 = -wgt * gtau
    dR = float(np.sum(-K * R ** (K - 1) * a2 * gtau))
    # |v| differentiates to v/|v| in the packed convention.
    gv1 = ga1 * v1 / np.maximum(a1, 1e-300)
    gv2 = ga2 * v2 / np.maximum(a2, 1e-300)
    gy = gv1 @ np.conj(V1) + gv2 @ np.conj(V2)
    # The evaluation points move with (R, theta): chain through Y'(p).
    Vd1 = n[None, :] * p1[:, None] ** np.maximum(n - 1, 0)[None, :]
    Vd1[:, 0] = 0.0
    Vd2 = n[None, :] * p2[:, None] ** np.maximum(n - 1, 0)[None, :]
    Vd2[:, 0] = 0.0
    yp1 = y @ Vd1.T
    yp2 = y @ Vd2.T
    gp1 = np.sum(np.conj(yp1) * gv1, axis=0)
    gp2 = np.sum(np.conj(yp2) * gv2, axis=0)
    dR += float(np.sum(np.real(np.conj(gp1) * (p1 / R)) + np.real(np.conj(gp2) * (-p2 / R))))
    dtheta = np.real(np.conj(gp1) * (1j * p1)) + np.real(np.conj(gp2) * (1j * p2))
    dR_alpha, dtheta_alpha = _coefficient_backward(gy, x, xt, g, S, alpha, s, R)
    dR += dR_alpha
    dtheta = dtheta + dtheta_alpha
    drho = dR * float(_sigmoid(rho)) / (2.0 * R)
    return loss, drho, dtheta


def _coefficient_backward(
    gy: np.ndarray,
    x: np.ndarray,
    xt: np.ndarray,
    g: np.ndarray,
    S: np.ndarray,
    alpha: np.ndarray,
    s: np.ndarray,
    R: float,
) -> tuple[float, np.ndarray]:
    """Shared tail of both paths: normalization -> zeros -> (R, theta).

    Takes packed gradients wrt the noisy coefficients ``y`` (equal to
    those wrt the normalized coefficients, since noise is additive) and
    returns the (dR, dtheta) contributions through the encoder.
    """
    K = alpha.shape[1]
    gxt = gy
    # xt = g(x) * x with g = sqrt((K+1)/S): product and quotient rules.
    C = np.real(np.sum(np.conj(gxt) * xt, axis=1)) / g
    gx = g[:, None] * gxt - (g * C / S)[:, None] * x
    # d coeffs / d zero_m is minus the deflated quotient polynomial.
    Q = _deflation_tableau(x, alpha)
    galpha = -np.einsum("bmn,bn->bm", np.conj(Q), gx[:, :K])
    dR = float(np.sum(np.real(np.conj(galpha) * (s / R) * alpha)))
    dtheta = np.sum(np.real(np.conj(galpha) * (1j * alpha)), axis=0)
    return dR, dtheta


# ---------------------------------------------------------------------------
# Forward/backward through the BCE (neural) path
# ---------------------------------------------------------------------------


@dataclass
class NnBatchResult:
    """Loss, gradients, and bookkeeping for one joint-path batch."""

    loss: float
    grads: dict[str, np.ndarray]
    skipped: int


def nn_loss_and_grads(
    rho: float,
    theta: np.ndarray,
    mlp: MlpParams,
    bits: np.ndarray,
    w: np.ndarray,
    train_constellation: bool = True,
    rng: np.random.Generator | None = None,
    masks: tuple[np.ndarray, np.ndarray] | None = None,
    work: dict | None = None,
) -> NnBatchResult:
    """Mean BCE over a batch and gradients for the requested parameters.

    Samples whose root spectra are within 1e-8 of degenerate are dropped
    from the mean and reported in ``skipped`` (the eigenvalue derivative
    is invalid there).  Dropout masks come from ``rng`` when
    ``mlp.training_mode`` is set, or from ``masks`` when given.
    When ``train_constellation`` is false only the network gradients are
    computed and the eigenvector solve is skipped entirely.
    """
    B, K = bits.shape
    bits = bits.astype(np.float64)
    R = rho_to_radius(rho)
    s = 2.0 * bits - 1.0
    alpha = R**s * np.exp(1j * theta)[None, :]
    x = _poly_from_zeros_batch(alpha)
    S = np.sum(np.abs(x) ** 2, axis=1)
    g = np.sqrt((K + 1.0) / S)
    xt = g[:, None] * x
    y = xt + w

    C = _companion_batch(y)
    if train_constellation:
        lam, U = np.linalg.eig(C)
    else:
        lam = np.linalg.eigvals(C)
        U = None
    keep = _pairwise_min_gap(lam) > _SIMPLE_GAP_TOL
    nkeep = int(keep.sum())

    feats = _real_bijection_batch(lam)
    logits, cache = _mlp_forward_batch(feats, mlp, mlp.training_mode, rng, masks, work)
    per_bit = bce_loss(logits, bits)
    loss = float(per_bit[keep].mean()) if nkeep else 0.0

    gl = (_sigmoid(logits) - bits) / (max(nkeep, 1) * K)
    gl[~keep] = 0.0
    mlp_grads, gfeat = _mlp_backward(gl, mlp, cache, work)
    grads: dict[str, np.ndarray] = dict(mlp_grads)
    result = NnBatchResult(loss=loss, grads=grads, skipped=B - nkeep)
    if not train_constellation:
        return result

    # Packed complex gradients of the (unordered) roots.
    glam = gfeat[:, 0::2] + 1j * gfeat[:, 1::2]
    # Eigenvalue perturbation: dlam_i = (inv(U) dC U)_{ii}; only the last
    # companion column depends on the coefficients.
    W = np.linalg.inv(U)
    t_i = np.conj(U[:, K - 1, :]) * glam
    gClast = np.einsum("bik,bi->bk", np.conj(W), t_i)
    yk = y[:, K]
    gy = np.zeros_like(y)
    gy[:, :K] = np.conj(-1.0 / yk)[:, None] * gClast
    gy[:, K] = np.einsum("bk,bk->b", np.conj(y[:, :K] / (yk**2)[:, None]), gClast)
    gy[~keep] = 0.0
    dR, dtheta = _coefficient_backward(gy, x, xt, g, S, alpha, s, R)
    grads["rho"] = np.asarray(dR * float(_sigmoid(rho)) / (2.0 * R))
    grads["theta"] = dtheta
    return result


# ---------------------------------------------------------------------------
# Training procedures
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DizetTrainResult:
    """Learned constellation plus the per-epoch (epoch, lr, mean_loss) trace."""

    constellation: Constellation
    losses: np.ndarray


@dataclass(frozen=True)
class NnTrainResult:
    """Jointly learned constellation and network, with per-stage traces."""

    constellation: Constellation
    mlp: MlpParams
    losses_stage1: np.ndarray
    losses_stage2: np.ndarray
    skipped_stage1: int
    skipped_stage2: int


def _initial_state(cfg: TrainConfig) -> tuple[float, np.ndarray]:
    rho = radius_to_rho(dizet_radius(cfg.K, 0.5))
    theta = 2.0 * np.pi * np.arange(cfg.K) / cfg.K
    return rho, theta


def train_dizet(cfg: TrainConfig) -> DizetTrainResult:
    """Learn (R, theta) for the direct zero-test receiver.

    Minimizes the batch-mean hinge loss on decision variables at the
    configured Eb/N0.  The same seed always reproduces the same result.
    """
    rng = np.random.default_rng(cfg.seed)
    rho0, theta0 = _initial_state(cfg)
    params = {"rho": np.asarray(rho0, dtype=np.float64), "theta": theta0.copy()}
    state = adam_init(params)
    sigma2 = ebn0_to_noise_var(cfg.ebn0_db, cfg.K)
    trace = np.empty((cfg.n_epoch, 3), dtype=np.float64)
    for ep in range(cfg.n_epoch):
        lr = lr_schedule(ep, cfg)
        bits = rng.integers(0, 2, (cfg.batch_size, cfg.K)).astype(np.float64)
        scale = np.sqrt(sigma2 / 2.0)
        w = scale * (
            rng.standard_normal((cfg.batch_size, cfg.K + 1))
            + 1j * rng.standard_normal((cfg.batch_size, cfg.K + 1))
        )
        loss, drho, dtheta = dizet_loss_and_grads(
            float(params["rho"]), params["theta"], bits, w, cfg.margin, cfg.hinge_label_flip
        )
        if not np.isfinite(loss):
            raise TrainingAbortError(f"non-finite hinge loss at epoch {ep}")
        params = adam_step(state, params, {"rho": np.asarray(drho), "theta": dtheta}, lr)
        trace[ep] = (ep, lr, loss)
        if ep % max(1, cfg.n_epoch // 10) == 0:
            logger.info(
                "hinge epoch %d/%d lr %.3e loss %.4f R %.4f",
                ep, cfg.n_epoch, lr, loss, rho_to_radius(float(params["rho"])),
            )
    c = Constellation(rho_to_radius(float(params["rho"])), params["theta"])
    return DizetTrainResult(constellation=c, losses=trace)


def init_mlp_params(
    K: int, l_hidden: int, rng: np.random.Generator, slope: float = 0.01, dropout: float = 0.25
) -> MlpParams:
    """Fresh network weights: Kaiming-uniform hidden layers, Xavier head.

    Hidden weights are uniform with bound sqrt(3 * gain^2 / fan_in) where
    gain^2 = 2 / (1 + slope^2) matches the leaky rectifier; the linear
    head uses the symmetric bound sqrt(6 / (fan_in + fan_out)).  Biases
    start at zero.  Draw order is W1, W2, W3 from the given generator.
    """
    gain2 = 2.0 / (1.0 + slope * slope)

    def hidden(fan_in: int, fan_out: int) -> np.ndarray:
        bound = np.sqrt(3.0 * gain2 / fan_in)
        return rng.uniform(-bound, bound, (fan_in, fan_out))

    W1 = hidden(2 * K, l_hidden)
    W2 = hidden(l_hidden, l_hidden)
    bound = np.sqrt(6.0 / (l_hidden + K))
    W3 = rng.uniform(-bound, bound, (l_hidden, K))
    return MlpParams(
        W1, np.zeros(l_hidden), W2, np.zeros(l_hidden), W3, np.zeros(K),
        slope=slope, dropout=dropout, training_mode=True,
    )


def train_nn(cfg: TrainConfig) -> NnTrainResult:
    """Two-stage joint training of constellation and neural decoder.

    Stage 1 optimizes everything at ``cfg.ebn0_db``.  Stage 2 freezes the
    constellation, resets the optimizer and schedule, and trains the
    network alone at ``cfg.ebn0_db_stage2``.  Each stage runs
    ``cfg.n_epoch`` epochs; one generator seeded by ``cfg.seed`` drives
    initialization, messages, noise, and dropout in a fixed order.
    """
    rng = np.random.default_rng(cfg.seed)
    l_hidden = cfg.resolve_l_hidden()
    rho0, theta0 = _initial_state(cfg)
    mlp = init_mlp_params(cfg.K, l_hidden, rng, slope=cfg.slope, dropout=cfg.dropout)
    rho = np.asarray(rho0, dtype=np.float64)
    theta = theta0.copy()

    traces: list[np.ndarray] = []
    skipped: list[int] = []
    work: dict = {}
    for stage, (ebn0, train_c) in enumerate(
        ((cfg.ebn0_db, True), (cfg.ebn0_db_stage2, False)), start=1
    ):
        sigma2 = ebn0_to_noise_var(ebn0, cfg.K)
        params: dict[str, np.ndarray] = {
            "W1": mlp.W1, "b1": mlp.b1, "W2": mlp.W2, "b2": mlp.b2, "W3": mlp.W3, "b3": mlp.b3,
        }
        if train_c:
            params["rho"] = rho
            params["theta"] = theta
        state = adam_init(params)
        trace = np.empty((cfg.n_epoch, 3), dtype=np.float64)
        n_skipped = 0
        logger.info("stage %d begins: Eb/N0 %.1f dB, constellation %s",
                    stage, ebn0, "learned" if train_c else "frozen")
        for ep in range(cfg.n_epoch):
            lr = lr_schedule(ep, cfg)
            bits = rng.integers(0, 2, (cfg.batch_size, cfg.K)).astype(np.float64)
            scale = np.sqrt(sigma2 / 2.0)
            w = scale * (
                rng.standard_normal((cfg.batch_size, cfg.K + 1))
                + 1j * rng.standard_normal((cfg.batch_size, cfg.K + 1))
            )
            res = nn_loss_and_grads(
                float(params["rho"]) if train_c else float(rho),
                params["theta"] if train_c else theta,
                mlp, bits, w, train_constellation=train_c, rng=rng, work=work,
            )
            if not np.isfinite(res.loss):
                raise TrainingAbortError(f"non-finite BCE loss at stage {stage} epoch {ep}")
            params = adam_step(state, params, res.grads, lr)
            _write_back_mlp(mlp, params)
            if train_c:
                rho = params["rho"]
                theta = params["theta"]
            n_skipped += res.skipped
            trace[ep] = (ep, lr, res.loss)
            if ep % max(1, cfg.n_epoch // 10) == 0:
                logger.info(
                    "stage %d epoch %d/%d lr %.3e loss %.4f R %.4f",
                    stage, ep, cfg.n_epoch, lr, res.loss, rho_to_radius(float(rho)),
                )
        traces.append(trace)
        skipped.append(n_skipped)

    mlp.training_mode = False
    c = Constellation(rho_to_radius(float(rho)), theta)
    return NnTrainResult(
        constellation=c,
        mlp=mlp,
        losses_stage1=traces[0],
        losses_stage2=traces[1],
        skipped_stage1=skipped[0],
        skipped_stage2=skipped[1],
    )


def _write_back_mlp(mlp: MlpParams, params: dict[str, np.ndarray]) -> None:
    mlp.W1 = params["W1"]
    mlp.b1 = params["b1"]
    mlp.W2 = params["W2"]
    mlp.b2 = params["b2"]
    mlp.W3 = params["W3"]
    mlp.b3 = params["b3"]


# ---------------------------------------------------------------------------
# Finite-difference verification of every analytic gradient
# ---------------------------------------------------------------------------


def _central_diff(f, x0: float, h: float = 1e-6) -> float:
    return (f(x0 + h) - f(x0 - h)) / (2.0 * h)


def _rel_err(analytic: float, fd: float, floor: float = 1e-10) -> float:
    return abs(analytic - fd) / max(abs(fd), floor)


def check_hinge_path(n_instances: int, rng: np.random.Generator) -> float:
    """Max relative error of (rho, theta) gradients on the hinge path."""
    worst = 0.0
    for _ in range(n_instances):
        K = int(rng.integers(2, 5))
        B = int(rng.integers(2, 9))
        rho = radius_to_rho(1.0 + float(rng.uniform(0.1, 0.6)))
        theta = 2.0 * np.pi * np.arange(K) / K + 0.05 * rng.standard_normal(K)
        bits = rng.integers(0, 2, (B, K)).astype(np.float64)
        # A low operating point keeps margins active so gradients are live.
        sigma2 = ebn0_to_noise_var(float(rng.uniform(0.0, 5.0)), K)
        w = np.sqrt(sigma2 / 2.0) * (
            rng.standard_normal((B, K + 1)) + 1j * rng.standard_normal((B, K + 1))
        )
        _, drho, dtheta = dizet_loss_and_grads(rho, theta, bits, w, 1.0)
        fd_rho = _central_diff(
            lambda r: dizet_loss_and_grads(r, theta, bits, w, 1.0)[0], rho
        )
        worst = max(worst, _rel_err(drho, fd_rho))
        for m in range(K):
            def at(v: float, m=m):
                th = theta.copy()
                th[m] = v
                return dizet_loss_and_grads(rho, th, bits, w, 1.0)[0]
            worst = max(worst, _rel_err(dtheta[m], _central_diff(at, theta[m])))
    return worst


def check_bce_path(n_instances: int, rng: np.random.Generator) -> float:
    """Max relative error of all joint-path gradients (dropout off)."""
    worst = 0.0
    for _ in range(n_instances):
        K = int(rng.integers(2, 5))
        B = int(rng.integers(2, 5))
        L = int(rng.integers(4, 9))
        rho = radius_to_rho(1.0 + float(rng.uniform(0.1, 0.6)))
        theta = 2.0 * np.pi * np.arange(K) / K + 0.03 * rng.standard_normal(K)
        mlp = init_mlp_params(K, L, rng, dropout=0.0)
        mlp.training_mode = False
        bits = rng.integers(0, 2, (B, K)).astype(np.float64)
        sigma2 = ebn0_to_noise_var(5.0, K)
        w = np.sqrt(sigma2 / 2.0) * (
            rng.standard_normal((B, K + 1)) + 1j * rng.standard_normal((B, K + 1))
        )

        res = nn_loss_and_grads(rho, theta, mlp, bits, w)

        def loss_at(rho_v=None, theta_v=None, mlp_v=None) -> float:
            return nn_loss_and_grads(
                rho if rho_v is None else rho_v,
                theta if theta_v is None else theta_v,
                mlp if mlp_v is None else mlp_v,
                bits, w, train_constellation=False,
            ).loss

        worst = max(worst, _rel_err(float(res.grads["rho"]),
                                    _central_diff(lambda r: loss_at(rho_v=r), rho)))
        for m in range(K):
            def at(v: float, m=m) -> float:
                th = theta.copy()
                th[m] = v
                return loss_at(theta_v=th)
            worst = max(worst, _rel_err(res.grads["theta"][m], _central_diff(at, theta[m])))
        # Spot-check two entries of every weight tensor.
        for name in ("W1", "b1", "W2", "b2", "W3", "b3"):
            arr = getattr(mlp, name)
            for _ in range(2):
                idx = tuple(int(rng.integers(0, d)) for d in arr.shape)

                def at(v: float, name=name, idx=idx) -> float:
                    clone = MlpParams(
                        mlp.W1.copy(), mlp.b1.copy(), mlp.W2.copy(), mlp.b2.copy(),
                        mlp.W3.copy(), mlp.b3.copy(), slope=mlp.slope, dropout=0.0,
                    )
                    getattr(clone, name)[idx] = v
                    return loss_at(mlp_v=clone)

                fd = _central_diff(at, float(arr[idx]))
                worst = max(worst, _rel_err(float(res.grads[name][idx]), fd))
    return worst


def check_eigenvalue_jacobian(n_instances: int, rng: np.random.Generator) -> float:
    """Max relative error of the root-vs-coefficient Jacobian."""
    from .poly import ComplexPoly, eigenvalue_jacobian, roots

    worst = 0.0
    h = 1e-6
    for _ in range(n_instances):
        K = int(rng.integers(2, 8))
        R = 1.0 + float(rng.uniform(0.1, 0.6))
        bits = rng.integers(0, 2, K).astype(np.float64)
        zeros = R ** (2 * bits - 1) * np.exp(2j * np.pi * np.arange(K) / K)
        coeffs = _poly_from_zeros_batch(zeros[None, :])[0]
        coeffs = coeffs * np.sqrt((K + 1) / np.sum(np.abs(coeffs) ** 2))
        base = roots(ComplexPoly(coeffs))
        jac = eigenvalue_jacobian(ComplexPoly(coeffs))
        for k in range(K + 1):
            for step in (h, 1j * h):
                cp = coeffs.copy()
                cp[k] += step
                cm = coeffs.copy()
                cm[k] -= step
                rp = _match_to(roots(ComplexPoly(cp)), base)
                rm = _match_to(roots(ComplexPoly(cm)), base)
                fd = (rp - rm) / (2.0 * step)
                err = np.abs(jac[:, k] - fd) / np.maximum(np.abs(fd), 1e-10)
                worst = max(worst, float(err.max()))
    return worst


def _match_to(values: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """Greedy nearest-neighbor alignment of an unordered root set."""
    out = np.empty_like(reference)
    remaining = list(values)
    for i, r in enumerate(reference):
        j = int(np.argmin([abs(v - r) for v in remaining]))
        out[i] = remaining.pop(j)
    return out


def check_mlp_backprop(n_instances: int, rng: np.random.Generator) -> float:
    """Max relative error of network backprop, dropout masks frozen."""
    worst = 0.0
    for _ in range(n_instances):
        K = int(rng.integers(2, 5))
        B = int(rng.integers(2, 5))
        L = int(rng.integers(4, 9))
        mlp = init_mlp_params(K, L, rng, dropout=0.25)
        keep = 1.0 - mlp.dropout
        masks = (
            (rng.random((B, L)) < keep) / keep,
            (rng.random((B, L)) < keep) / keep,
        )
        x = rng.standard_normal((B, 2 * K))
        bits = rng.integers(0, 2, (B, K)).astype(np.float64)

        def loss_for(mlp_v: MlpParams, x_v: np.ndarray) -> float:
            logits, _ = _mlp_forward_batch(x_v, mlp_v, training=True, rng=None, masks=masks)
            return float(np.mean(bce_loss(logits, bits)))

        logits, cache = _mlp_forward_batch(x, mlp, training=True, rng=None, masks=masks)
        gl = (_sigmoid(logits) - bits) / (B * K)
        grads, gx = _mlp_backward(gl, mlp, cache)

        for name in ("W1", "b1", "W2", "b2", "W3", "b3"):
            arr = getattr(mlp, name)
            for _ in range(2):
                idx = tuple(int(rng.integers(0, d)) for d in arr.shape)

                def at(v: float, name=name, idx=idx) -> float:
                    clone = MlpParams(
                        mlp.W1.copy(), mlp.b1.copy(), mlp.W2.copy(), mlp.b2.copy(),
                        mlp.W3.copy(), mlp.b3.copy(), slope=mlp.slope, dropout=mlp.dropout,
                    )
                    getattr(clone, name)[idx] = v
                    return loss_for(clone, x)

                fd = _central_diff(at, float(arr[idx]))
                worst = max(worst, _rel_err(float(grads[name][idx]), fd))
        # And the gradient wrt the input features.
        idx = (int(rng.integers(0, B)), int(rng.integers(0, 2 * K)))

        def at_x(v: float) -> float:
            xv = x.copy()
            xv[idx] = v
            return loss_for(mlp, xv)

        worst = max(worst, _rel_err(float(gx[idx]), _central_diff(at_x, float(x[idx]))))
    return worst


def run_gradient_checks(seed: int = 0, n_instances: int = 100) -> dict[str, float]:
    """Run all four finite-difference suites; returns max rel error each.

    ``n_instances`` is split evenly across the suites.
    """
    rng = np.random.default_rng(seed)
    per = max(1, n_instances // 4)
    return {
        "hinge_path": check_hinge_path(per, rng),
        "bce_path": check_bce_path(per, rng),
        "eigenvalue_jacobian": check_eigenvalue_jacobian(per, rng),
        "mlp_backprop": check_mlp_backprop(per, rng),
    }
