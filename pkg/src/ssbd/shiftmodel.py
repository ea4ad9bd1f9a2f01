"""Structured matrices of the shift model: the banded matrix of kernel shift
truncations, its Gram, the whitened (preconditioned) matrix, and the spectral
statistics sigma_min, kappa, mu, plus the symmetric eigensolver and inverse
square root they require.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, SingularityError
from .signals import random_unit_kernel

__all__ = [
    "SymEigen",
    "ShiftModel",
    "shift_matrix",
    "sym_eig",
    "inv_sqrt",
    "matrix_sqrt",
    "precondition",
    "coherence",
    "spectrum_stats",
    "window_gram",
    "estimate_kernel_params",
]

# Below 1e-12 * lambda_max an inverse square root amplifies noise past
# double-precision usefulness, so we refuse instead.
RANK_TOL = 1e-12


def shift_matrix(a0):
    """Banded k x (2k-1) matrix whose columns are the shift truncations of ``a0``.

    Column c (1-indexed) holds the first k entries of the zero-padded kernel
    cyclically shifted by tau = c - k, for tau = -(k-1)..(k-1); the result is
    independent of the padding length for any padding >= 2k-1.
    """
    a0 = np.asarray(a0, dtype=float)
    k = a0.shape[0]
    M = np.zeros((k, 2 * k - 1))
    for c in range(2 * k - 1):
        tau = c - (k - 1)
        lo, hi = max(0, tau), min(k, k + tau)
        M[lo:hi, c] = a0[lo - tau:hi - tau]
    return M


@dataclass(frozen=True)
class SymEigen:
    """Full symmetric eigendecomposition, eigenvalues sorted descending."""

    eigvals: np.ndarray
    eigvecs: np.ndarray


def sym_eig(S, sym_tol=1e-12):
    """Eigendecomposition of a symmetric matrix, eigenvalues descending.

    Raises ContractError if ``S`` deviates from symmetry by more than
    ``sym_tol`` relative to its largest entry.
    """
    S = np.asarray(S, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise ContractError(f"expected a square matrix, got shape {S.shape}")
    scale = np.abs(S).max() if S.size else 0.0
    asym = np.abs(S - S.T).max()
    if asym > sym_tol * max(scale, 1e-300):
        raise ContractError(f"matrix is not symmetric: max asymmetry {asym:g}")
    w, V = np.linalg.eigh(0.5 * (S + S.T))
    order = np.argsort(w)[::-1]
    return SymEigen(eigvals=w[order], eigvecs=V[:, order])


def _check_spd(eig, what):
    lam_max = eig.eigvals[0]
    lam_min = eig.eigvals[-1]
    if lam_min <= RANK_TOL * max(lam_max, 0.0):
        raise SingularityError(
            f"{what}: eigenvalue {lam_min:g} below rank tolerance "
            f"{RANK_TOL * max(lam_max, 0.0):g}"
        )


def inv_sqrt(S):
    """Inverse square root of a symmetric positive definite matrix."""
    eig = sym_eig(S)
    _check_spd(eig, "inverse square root")
    V, w = eig.eigvecs, eig.eigvals
    return (V * w ** -0.5) @ V.T


def matrix_sqrt(S):
    """Square root of a symmetric positive semidefinite matrix."""
    eig = sym_eig(S)
    V, w = eig.eigvecs, eig.eigvals
    if w[-1] < -RANK_TOL * max(w[0], 0.0):
        raise SingularityError(f"matrix square root: negative eigenvalue {w[-1]:g}")
    return (V * np.sqrt(np.maximum(w, 0.0))) @ V.T


def precondition(M):
    """Whiten the rows of ``M``: returns (G^{-1/2} M, G^{-1/2}) with G = M M^T.

    The result W satisfies W W^T = I. Scaling ``M`` by any c > 0 leaves W
    unchanged. Raises SingularityError for rank-deficient Grams.
    """
    M = np.asarray(M, dtype=float)
    gram = M @ M.T
    gis = inv_sqrt(gram)
    return gis @ M, gis


def coherence(W):
    """Largest absolute inner product between distinct columns of ``W``.

    Zero columns contribute zero, matching the definition literally.
    """
    W = np.asarray(W, dtype=float)
    G = W.T @ W
    np.fill_diagonal(G, 0.0)
    return float(np.abs(G).max()) if G.size else 0.0


def spectrum_stats(M):
    """(sigma_min, kappa) of ``M`` from the eigenvalues of its Gram."""
    M = np.asarray(M, dtype=float)
    eig = sym_eig(M @ M.T)
    _check_spd(eig, "spectrum statistics")
    lam_max, lam_min = eig.eigvals[0], eig.eigvals[-1]
    return float(np.sqrt(lam_min)), float(np.sqrt(lam_max / lam_min))


def window_gram(y, k):
    """Gram matrix of all cyclic k-windows of ``y`` as a symmetric Toeplitz.

    Entry (i, j) equals the cyclic autocorrelation of ``y`` at lag |i - j|,
    which is the same finite sum of products as the direct sum of window
    outer products, reordered.
    """
    y = np.asarray(y, dtype=float)
    r = np.array([np.dot(y, np.roll(y, -t)) for t in range(k)])
    idx = np.abs(np.arange(k)[:, None] - np.arange(k)[None, :])
    return r[idx]


@dataclass(frozen=True)
class ShiftModel:
    """Shift-truncation matrix of a kernel with its whitening and statistics.

    Zero columns of the whitened matrix (delta-like kernels) are kept in
    place so that column index c always maps to shift tau = c - k + 1
    (0-indexed c).
    """

    kernel: np.ndarray
    shifts: np.ndarray          # k x (2k-1) raw shift truncations
    gram: np.ndarray            # shifts @ shifts.T
    gram_inv_sqrt: np.ndarray
    whitened: np.ndarray        # gram_inv_sqrt @ shifts, rows orthonormal
    sigma_min: float
    kappa: float
    mu: float

    @classmethod
    def from_kernel(cls, a0):
        a0 = np.asarray(a0, dtype=float)
        M = shift_matrix(a0)
        sigma_min, kappa = spectrum_stats(M)
        W, gis = precondition(M)
        return cls(
            kernel=a0,
            shifts=M,
            gram=M @ M.T,
            gram_inv_sqrt=gis,
            whitened=W,
            sigma_min=sigma_min,
            kappa=kappa,
            mu=coherence(W),
        )

    @property
    def k(self):
        return self.kernel.shape[0]


def estimate_kernel_params(k_list, trials, seed, kernel_sampler=None):
    """Average (sigma_min, kappa, mu) over random unit kernels, per k.

    Returns a list of dict rows with keys k, sigma_min_avg, kappa_avg,
    mu_avg, trials, seed. Deterministic under ``seed``; trial t of the i-th
    k draws from an independently derived stream so rows do not depend on
    evaluation order. ``kernel_sampler(k, rng)`` overrides the kernel family.
    """
    from .signals import derive_rng  # local import keeps module load light

    sampler = kernel_sampler or random_unit_kernel
    rows = []
    for i, k in enumerate(k_list):
        acc = np.zeros(3)
        for t in range(trials):
            rng = derive_rng(seed, i, t)
            model = ShiftModel.from_kernel(sampler(k, rng))
            acc += (model.sigma_min, model.kappa, model.mu)
        acc /= trials
        rows.append(
            {
                "k": int(k),
                "sigma_min_avg": acc[0],
                "kappa_avg": acc[1],
                "mu_avg": acc[2],
                "trials": int(trials),
                "seed": int(seed),
            }
        )
    return rows
