"""Mixed determinants of 2x2 and 3x3 operators and the algebra built on them.

All functions broadcast over leading axes, so the same code runs on a single
matrix or on a whole grid of per-node matrices.
"""

from __future__ import annotations

from itertools import combinations
from math import factorial

import numpy as np

from .errors import InvalidArgumentError, NotIsometricError

# rotation by a quarter turn in an oriented orthonormal frame
ROT90 = np.array([[0.0, -1.0], [1.0, 0.0]])

# basis of 2x2 matrices in which the polarization form is diagonal
SIGNATURE_BASIS = (
    np.eye(2),
    np.diag([1.0, -1.0]),
    np.array([[0.0, 1.0], [1.0, 0.0]]),
    np.array([[0.0, 1.0], [-1.0, 0.0]]),
)


def _check_ops(ops):
    ops = [np.asarray(a, dtype=float) for a in ops]
    if not ops:
        raise InvalidArgumentError("need at least one operator")
    n = len(ops)
    for a in ops:
        if a.shape[-2:] != (n, n):
            raise InvalidArgumentError(
                f"{n} operators must each be {n}x{n}, got trailing shape {a.shape[-2:]}"
            )
    if n not in (2, 3):
        raise InvalidArgumentError(f"mixed determinants are implemented for n = 2, 3; got {n}")
    return ops


def polarized_det(ops):
    """Symmetric multilinear form whose diagonal is the determinant.

    Uses inclusion-exclusion over subsets of the arguments:
    ``det(A_1, ..., A_n) = 1/n! * sum_S (-1)^(n - |S|) det(sum_{i in S} A_i)``.
    """
    ops = _check_ops(ops)
    n = len(ops)
    total = 0.0
    for k in range(1, n + 1):
        for subset in combinations(range(n), k):
            total = total + (-1) ** (n - k) * np.linalg.det(sum(ops[i] for i in subset))
    return total / factorial(n)


def mixed_det2(A, B):
    """Closed-form 2x2 mixed determinant, used as an independent check."""
    A, B = np.asarray(A), np.asarray(B)
    return 0.5 * (
        A[..., 0, 0] * B[..., 1, 1]
        + A[..., 1, 1] * B[..., 0, 0]
        - A[..., 0, 1] * B[..., 1, 0]
        - A[..., 1, 0] * B[..., 0, 1]
    )


def det_derivative(B, Bdot):
    """Derivative of ``det(B + t Bdot)`` at ``t = 0``."""
    return 2.0 * polarized_det([Bdot, B])


def dvol_wedge(forms, scale=1.0):
    """Volume form applied to the wedge of ``n`` vector-valued 1-forms.

    Each form is the matrix of a linear map between n-dimensional spaces, written
    in oriented frames; ``scale`` is the ratio of the volume forms of the two frames.
    """
    forms = _check_ops(forms)
    return factorial(len(forms)) * polarized_det(forms) * scale


def signature_gram(symmetric_only=False):
    """Gram matrix of the polarization form in ``SIGNATURE_BASIS``."""
    basis = SIGNATURE_BASIS[:3] if symmetric_only else SIGNATURE_BASIS
    return np.array([[polarized_det([a, b]) for b in basis] for a in basis])


def signature(symmetric_only=False):
    """Signs of the eigenvalues of the polarization form, positive first."""
    ev = np.linalg.eigvalsh(signature_gram(symmetric_only))
    return tuple(int(s) for s in np.sign(ev)[::-1])


def project_orthogonal(A, B):
    """Remove from ``A`` its component along ``B`` w.r.t. the polarization form.

    Needs ``det B != 0``; the result satisfies ``det(A', B) = 0``.
    """
    return A - (polarized_det([A, B]) / np.linalg.det(B))[..., None, None] * B


def cross_matrix(v):
    v = np.asarray(v)
    z = np.zeros_like(v[..., 0])
    return np.stack(
        [
            np.stack([z, -v[..., 2], v[..., 1]], axis=-1),
            np.stack([v[..., 2], z, -v[..., 0]], axis=-1),
            np.stack([-v[..., 1], v[..., 0], z], axis=-1),
        ],
        axis=-2,
    )


def skew_residual(frame, images):
    """Largest ``|<dxi X_i, X_j> + <X_i, dxi X_j>|`` relative to the data scale."""
    pair = np.einsum("...ai,...aj->...ij", images, frame)
    sym = pair + np.swapaxes(pair, -1, -2)
    scale = np.linalg.norm(frame, axis=(-2, -1)) * np.maximum(np.linalg.norm(images, axis=(-2, -1)), 1e-300)
    scale = np.maximum(scale, np.linalg.norm(frame, axis=(-2, -1)) ** 2)
    return np.max(np.abs(sym), axis=(-2, -1)) / scale


def axial_extension(frame, images, tol=1e-8):
    """Vector ``eta`` with ``eta x X = dxi(X)`` on the plane spanned by ``frame``.

    ``frame`` and ``images`` have shape (..., 3, 2): columns are two tangent
    vectors and their images.  Returns ``(eta, residual)``; the residual measures
    how far the map is from being skew on the plane.
    """
    frame = np.asarray(frame, dtype=float)
    images = np.asarray(images, dtype=float)
    res = skew_residual(frame, images)
    if np.max(res) > tol:
        raise NotIsometricError(f"map is not skew on the tangent plane (residual {np.max(res):.3e} > {tol:.1e})")
    # eta x X_i = -[X_i]_x eta
    M = -np.concatenate([cross_matrix(frame[..., :, 0]), cross_matrix(frame[..., :, 1])], axis=-2)
    y = np.concatenate([images[..., :, 0], images[..., :, 1]], axis=-1)
    MtM = np.einsum("...ki,...kj->...ij", M, M)
    Mty = np.einsum("...ki,...k->...i", M, y)
    eta = np.linalg.solve(MtM, Mty[..., None])[..., 0]
    return eta, res
