"""Complex polynomial arithmetic for zero-based modulation.

Polynomials are stored densely with ascending powers: ``coeffs[k]`` is the
coefficient of ``z**k``.  A degree-K polynomial therefore carries K+1
complex coefficients, and its K roots are the information-bearing object.

Root finding goes through the Frobenius companion matrix, whose
eigenvalues are the polynomial's roots.  The companion form is already
upper Hessenberg, and the eigenvalue solve (balancing plus shifted QR
iteration) is delegated to LAPACK via :func:`numpy.linalg.eig`.  Roots are
returned in whatever order the solver produces; nothing downstream may
rely on an ordering.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConvergenceError,
    DegeneratePolynomialError,
    DegenerateSpectrumError,
    InvalidArgumentError,
)

# Magnitude below which a leading coefficient counts as zero.
_LEADING_TOL = 1e-12

# Minimum pairwise eigenvalue gap for perturbation-based derivatives.
_SIMPLE_GAP_TOL = 1e-8


@dataclass(frozen=True)
class ComplexPoly:
    """A dense complex polynomial with ascending coefficients.

    Parameters
    ----------
    coeffs : array_like of complex, shape (K+1,)
        ``coeffs[k]`` multiplies ``z**k``.  The leading entry must be
        nonzero and the degree at least 1.
    """

    coeffs: np.ndarray = field()

    def __post_init__(self) -> None:
        c = np.asarray(self.coeffs, dtype=np.complex128)
        if c.ndim != 1 or c.size < 2:
            raise InvalidArgumentError(
                f"coeffs must be a 1-d sequence of at least 2 entries, got shape {c.shape}"
            )
        if abs(c[-1]) <= _LEADING_TOL:
            raise DegeneratePolynomialError(
                f"leading coefficient magnitude {abs(c[-1]):.3e} is below {_LEADING_TOL:.0e}"
            )
        object.__setattr__(self, "coeffs", c)

    @property
    def degree(self) -> int:
        return self.coeffs.size - 1


def poly_from_zeros(zeros: np.ndarray, leading: complex = 1.0) -> ComplexPoly:
    """Build the polynomial ``leading * prod_k (z - zeros[k])``.

    Parameters
    ----------
    zeros : array_like of complex, shape (K,)
        Root locations, K >= 1.
    leading : complex
        Leading coefficient, nonzero.

    Returns
    -------
    ComplexPoly
        Degree-K polynomial whose roots are exactly ``zeros``.
    """
    z = np.asarray(zeros, dtype=np.complex128)
    if z.ndim != 1 or z.size == 0:
        raise InvalidArgumentError(f"zeros must be a nonempty 1-d sequence, got shape {z.shape}")
    if leading == 0:
        raise InvalidArgumentError("leading coefficient must be nonzero")
    coeffs = _poly_from_zeros_batch(z[None, :])[0]
    return ComplexPoly(coeffs * complex(leading))


def normalize_energy(p: ComplexPoly, target_energy: float) -> ComplexPoly:
    """Scale ``p`` so its squared coefficient norm equals ``target_energy``.

    Scaling is by a positive real, so the roots are unchanged.
    """
    if target_energy <= 0:
        raise InvalidArgumentError(f"target_energy must be positive, got {target_energy}")
    energy = float(np.sum(np.abs(p.coeffs) ** 2))
    if energy == 0.0:
        raise InvalidArgumentError("cannot normalize an all-zero polynomial")
    return ComplexPoly(p.coeffs * np.sqrt(target_energy / energy))


def eval_poly(p: ComplexPoly, z: complex | np.ndarray) -> complex | np.ndarray:
    """Evaluate ``p`` at ``z`` by Horner's rule.

    ``z`` may be a scalar or an ndarray; the result has the same shape.
    """
    c = p.coeffs
    acc = np.full_like(np.asarray(z, dtype=np.complex128), c[-1])
    for k in range(c.size - 2, -1, -1):
        acc = acc * z + c[k]
    if np.isscalar(z) or np.asarray(z).ndim == 0:
        return complex(acc)
    return acc


def companion_matrix(p: ComplexPoly) -> np.ndarray:
    """Frobenius companion matrix of ``p``.

    Layout: ones on the subdiagonal, last column ``-coeffs[k]/coeffs[K]``
    for ``k = 0 .. K-1``.  Its eigenvalues are the roots of ``p``.
    """
    y = p.coeffs
    if abs(y[-1]) < _LEADING_TOL:
        raise DegeneratePolynomialError("leading coefficient is numerically zero")
    return _companion_batch(y[None, :])[0]


def roots(p: ComplexPoly) -> np.ndarray:
    """All K roots of ``p``, in no particular order.

    Raises
    ------
    ConvergenceError
        If the eigenvalue iteration fails to converge.
    """
    lam, _ = _roots_batch(p.coeffs[None, :], want_vectors=False)
    return lam[0]


def eigenvalue_jacobian(p: ComplexPoly) -> np.ndarray:
    """Derivative of every root with respect to every coefficient.

    Returns
    -------
    ndarray of complex, shape (K, K+1)
        Entry ``[i, k]`` is the holomorphic derivative of root ``lam_i``
        with respect to coefficient ``coeffs[k]``; the root indexing
        matches :func:`roots`.

    Notes
    -----
    Uses the first-order simple-eigenvalue perturbation identity
    ``d lam = (v^H dC u) / (v^H u)`` with right/left eigenvectors ``u, v``
    of the companion matrix, chained through the companion entries
    ``-y_k / y_K`` (only the last column depends on the coefficients).

    Raises
    ------
    DegenerateSpectrumError
        If any two roots are closer than 1e-8; the perturbation formula
        is invalid at (near-)repeated eigenvalues.
    """
    y = p.coeffs
    K = p.degree
    lam, U = _roots_batch(y[None, :], want_vectors=True)
    lam = lam[0]
    _check_simple_spectrum(lam[None, :])
    # Rows of inv(U) are the left eigenvectors already normalized so that
    # v^H u = 1, which collapses the perturbation identity to W[i,a]*U[b,i].
    W = np.linalg.inv(U[0])
    dlam_dlast = W * U[0][K - 1, :][:, None]  # [i, a] = dlam_i / dC[a, K-1]
    jac = np.empty((K, K + 1), dtype=np.complex128)
    jac[:, :K] = dlam_dlast * (-1.0 / y[K])
    jac[:, K] = dlam_dlast @ (y[:K] / y[K] ** 2)
    return jac


# ---------------------------------------------------------------------------
# Batched kernels.  Training and Monte-Carlo loops run on whole batches, so
# the per-instance functions above are thin wrappers over these.
# ---------------------------------------------------------------------------


def _poly_from_zeros_batch(zeros: np.ndarray) -> np.ndarray:
    """Monic coefficients (ascending) for each row of zeros.

    zeros: (B, K) -> coeffs: (B, K+1), coeffs[:, K] == 1.
    """
    B, K = zeros.shape
    x = np.zeros((B, K + 1), dtype=np.complex128)
    x[:, 0] = 1.0
    # Multiply by (z - zeros[:, k]) one factor at a time: shifting the
    # coefficient block up one slot is multiplication by z.
    for k in range(K):
        a = zeros[:, k][:, None]
        shifted = np.concatenate([np.zeros((B, 1), dtype=np.complex128), x[:, :K]], axis=1)
        x = shifted - a * x
    return x


def _companion_batch(coeffs: np.ndarray) -> np.ndarray:
    """Companion matrices for each row of coefficients: (B, K+1) -> (B, K, K)."""
    B, L = coeffs.shape
    K = L - 1
    lead = coeffs[:, K]
    if np.any(np.abs(lead) < _LEADING_TOL):
        raise DegeneratePolynomialError("leading coefficient is numerically zero")
    C = np.zeros((B, K, K), dtype=np.complex128)
    idx = np.arange(K - 1)
    C[:, idx + 1, idx] = 1.0
    C[:, :, K - 1] = -coeffs[:, :K] / lead[:, None]
    return C


def _roots_batch(
    coeffs: np.ndarray, want_vectors: bool
) -> tuple[np.ndarray, np.ndarray | None]:
    """Roots (and optionally right eigenvectors) for each coefficient row."""
    C = _companion_batch(coeffs)
    try:
        if want_vectors:
            lam, U = np.linalg.eig(C)
            return lam, U
        return np.linalg.eigvals(C), None
    except np.linalg.LinAlgError as exc:
        raise ConvergenceError(f"eigenvalue iteration did not converge: {exc}") from exc


def _pairwise_min_gap(lam: np.ndarray) -> np.ndarray:
    """Smallest pairwise distance within each row of eigenvalues: (B, K) -> (B,)."""
    diff = np.abs(lam[:, :, None] - lam[:, None, :])
    B, K = lam.shape
    diff[:, np.arange(K), np.arange(K)] = np.inf
    return diff.min(axis=(1, 2))


def _check_simple_spectrum(lam: np.ndarray) -> None:
    gap = _pairwise_min_gap(lam)
    if np.any(gap < _SIMPLE_GAP_TOL):
        raise DegenerateSpectrumError(
            f"eigenvalue gap {gap.min():.3e} below {_SIMPLE_GAP_TOL:.0e}; "
            "derivative undefined at (near-)repeated roots"
        )


def _deflation_tableau(coeffs: np.ndarray, zeros: np.ndarray) -> np.ndarray:
    """Synthetic-division quotients used to differentiate through encoding.

    For each sample b and zero m, row ``Q[b, m]`` holds the ascending
    coefficients of ``X_b(z) / (z - zeros[b, m])``, a degree K-1
    polynomial (K entries).  Defined by the backward recurrence

        q_{K-1} = x_K,   q_{n-1} = x_n + zeros[b, m] * q_n .

    coeffs: (B, K+1), zeros: (B, K) -> Q: (B, K, K).
    """
    B, L = coeffs.shape
    K = L - 1
    Q = np.empty((B, K, K), dtype=np.complex128)
    Q[:, :, K - 1] = coeffs[:, K][:, None]
    for n in range(K - 1, 0, -1):
        Q[:, :, n - 1] = coeffs[:, n][:, None] + zeros * Q[:, :, n]
    return Q


def _eval_batch(coeffs: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Horner evaluation of each row polynomial at its own row of points.

    coeffs: (B, K+1), points: (B, P) -> values: (B, P).
    """
    B, L = coeffs.shape
    acc = np.broadcast_to(coeffs[:, L - 1][:, None], points.shape).astype(np.complex128)
    for k in range(L - 2, -1, -1):
        acc = acc * points + coeffs[:, k][:, None]
    return acc
