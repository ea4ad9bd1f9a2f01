"""Objectives over the kernel sphere, their Riemannian derivatives, region
membership, and stationary-point classification.

Two objectives appear throughout: the finite-sample objective computed from
the observed signal (negative quartic spikiness of the whitened window
response, scaled by 1/(4m)), and its population counterpart computed from
the whitened shift matrix of the ground-truth kernel. All sample-side linear
algebra runs matrix-free through window correlations; the window matrix is
materialized only in test oracles.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, IterationError, ParameterError
from .shiftmodel import ShiftModel, inv_sqrt, sym_eig, window_gram
from .signals import (
    SparseSignal,
    as_unit,
    correlate_windows,
    derive_rng,
    scatter_windows,
)

__all__ = [
    "ObservationModel",
    "window_response",
    "sample_objective",
    "sample_gradient",
    "sample_hess_vec",
    "pop_objective",
    "pop_gradient",
    "pop_hessian",
    "expected_quartic",
    "RegionCheck",
    "region_check",
    "cubic_root_intervals",
    "StationaryReport",
    "classify_stationary",
    "min_tangent_eig",
    "GapMeasurement",
    "gradient_gap",
    "hessian_gap",
    "whitening_gap",
    "tangent_project",
]


def tangent_project(q, v):
    """Project ``v`` onto the tangent space of the sphere at ``q``."""
    return v - q * np.dot(q, v)


@dataclass(frozen=True)
class ObservationModel:
    """Observed signal with its window Gram and whitening matrix."""

    y: np.ndarray
    k: int
    gram: np.ndarray       # k x k window Gram
    whitener: np.ndarray   # gram^{-1/2}

    @classmethod
    def from_signal(cls, y, k):
        y = np.asarray(y, dtype=float)
        m = y.shape[0]
        if m <= 2 * k:
            raise ParameterError(f"signal length {m} must exceed 2k = {2 * k}")
        gram = window_gram(y, k)
        return cls(y=y, k=int(k), gram=gram, whitener=inv_sqrt(gram))

    @property
    def m(self):
        return self.y.shape[0]


def window_response(model, q):
    """Unit-norm response of all cyclic windows to the whitened filter.

    Equals the transposed window matrix applied to whitener @ q; its
    Euclidean norm equals ||q|| because whitening makes the window matrix
    row-orthonormal.
    """
    return correlate_windows(model.y, model.whitener @ q)


def sample_objective(model, q):
    """Finite-sample objective: -(1/4m) * sum(response**4), in [-1/(4m), 0)."""
    r = window_response(model, q)
    r2 = r * r
    return -0.25 / model.m * float(np.sum(r2 * r2))


def sample_gradient(model, q):
    """Riemannian gradient of the finite-sample objective at unit ``q``."""
    r = window_response(model, q)
    r2 = r * r
    g = -model.whitener @ scatter_windows(model.y, r2 * r, model.k)
    g = (g + q * float(np.sum(r2 * r2))) / model.m
    return g


def sample_hess_vec(model, q, v, tangent_tol=1e-8):
    """Riemannian Hessian-vector product of the finite-sample objective.

    Matrix-free: two window passes, O(m*k). The operator is symmetric on the
    tangent space at ``q``. ``v`` must be tangent at ``q``.
    """
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    if abs(np.dot(q, v)) > tangent_tol * max(1.0, np.linalg.norm(v)):
        raise ContractError(f"v is not tangent at q: <q, v> = {np.dot(q, v):g}")
    r = window_response(model, q)
    r2 = r * r
    t = correlate_windows(model.y, model.whitener @ v)
    w = model.whitener @ scatter_windows(model.y, r2 * t, model.k)
    n4 = float(np.sum(r2 * r2))
    hv = (-3.0 * w + n4 * v) / model.m
    return tangent_project(q, hv)


def pop_objective(W, q):
    """Population objective: -(1/4) * sum((W.T @ q)**4)."""
    z = W.T @ q
    z2 = z * z
    return -0.25 * float(np.sum(z2 * z2))


def pop_gradient(W, q):
    """Riemannian gradient of the population objective at unit ``q``."""
    z = W.T @ q
    z2 = z * z
    return -W @ (z2 * z) + q * float(np.sum(z2 * z2))


def pop_hessian(W, q):
    """Riemannian Hessian of the population objective as a full k x k matrix.

    Both the sample and population Hessians are assembled from first
    principles as P [hess - <grad, q> I] P on the tangent space; this fixes
    the sign of the curvature term so that finite differences of the
    gradient agree with the operator (verified in tests).
    """
    q = np.asarray(q, dtype=float)
    z = W.T @ q
    z2 = z * z
    n4 = float(np.sum(z2 * z2))
    H = -3.0 * (W * z2) @ W.T + n4 * np.eye(q.shape[0])
    P = np.eye(q.shape[0]) - np.outer(q, q)
    H = P @ H @ P
    return 0.5 * (H + H.T)


def expected_quartic(W, q, theta):
    """Exact expectation of the per-window quartic of the ideally whitened
    response under the Bernoulli-Gaussian model:
    3*theta*(1-theta)*||W.T q||_4^4 + 3*theta^2*||W.T q||_2^4.
    """
    z = W.T @ q
    z2 = z * z
    s4 = float(np.sum(z2 * z2))
    s2 = float(np.sum(z2))
    return 3.0 * theta * (1.0 - theta) * s4 + 3.0 * theta ** 2 * s2 ** 2


@dataclass(frozen=True)
class RegionCheck:
    """Membership of a sphere point in the benign region and its sub-level set.

    ``spikiness`` is ||z||_4^6 for z the whitened shift correlations of q;
    membership compares it against c_star * mu * kappa^2 times ||z||_3^3
    (region) or times 1 (sub-level set). The sub-level set is contained in
    the region whenever ||z||_2 = 1.
    """

    spikiness: float
    region_threshold: float
    sublevel_threshold: float
    in_region: bool
    in_sublevel: bool


def region_check(model: ShiftModel, q, c_star=10.0):
    q = as_unit(q)
    z = model.whitened.T @ q
    z2 = z * z
    lhs = float(np.sum(z2 * z2)) ** 1.5
    base = c_star * model.mu * model.kappa ** 2
    rhs_region = base * float(np.sum(z2 * np.abs(z)))
    return RegionCheck(
        spikiness=lhs,
        region_threshold=rhs_region,
        sublevel_threshold=base,
        in_region=lhs >= rhs_region,
        in_sublevel=lhs >= base,
    )


def cubic_root_intervals(alpha, beta):
    """Intervals containing the three real roots of x*(alpha - x^2) - beta = 0.

    Requires |beta| < alpha^(3/2) / 4. Returns three (lo, hi) pairs centered
    at +sqrt(alpha), -sqrt(alpha) and 0, each of half-width 2|beta|/alpha;
    the cubic has exactly one real root in each.
    """
    if alpha <= 0:
        raise ParameterError(f"alpha must be positive, got {alpha}")
    if not abs(beta) < 0.25 * alpha ** 1.5:
        raise ParameterError(
            f"|beta| = {abs(beta):g} must be below alpha^1.5/4 = {0.25 * alpha ** 1.5:g}"
        )
    w = 2.0 * abs(beta) / alpha
    r = np.sqrt(alpha)
    return [(r - w, r + w), (-r - w, -r + w), (-w, w)]


@dataclass(frozen=True)
class StationaryReport:
    """Structure of a stationary point of the population objective.

    ``shift_corr`` is z = W.T q. Per entry, ``root_scale`` (alpha_i) and
    ``cross_term`` (beta_i) are the coefficients of the cubic stationarity
    equation z_i*(alpha_i - z_i^2) = beta_i; entries of zero columns carry
    NaN. ``kind`` is "LocalMin", "Saddle" or "Unresolved".
    """

    shift_corr: np.ndarray
    root_scale: np.ndarray
    cross_term: np.ndarray
    spike_threshold: float
    spikes: np.ndarray
    kind: str
    local_index: int | None = None
    alignment: float | None = None
    alignment_bound: float | None = None
    saddle_indices: tuple | None = None
    curvature_direction: np.ndarray | None = None
    curvature_value: float | None = None
    reason: str | None = None


# Numerical dust below this magnitude is never counted as a spike.
SPIKE_FLOOR = 1e-12


def classify_stationary(model: ShiftModel, q, c_star=10.0, grad_tol=None):
    """Classify a stationary point of the population objective.

    A single spike in the whitened shift correlations marks a local minimum
    near the corresponding column; two or more mark a saddle, certified by
    the most negative curvature direction in the span of the two largest
    spike columns. Raises ContractError when the gradient is not small.
    """
    q = as_unit(q)
    W = model.whitened
    z = W.T @ q
    z2 = z * z
    n44 = float(np.sum(z2 * z2))
    if grad_tol is None:
        grad_tol = 1e-8 * max(1.0, n44)
    gn = float(np.linalg.norm(pop_gradient(W, q)))
    if gn > grad_tol:
        raise ContractError(f"gradient norm {gn:g} exceeds stationarity tolerance {grad_tol:g}")

    col_sq = np.sum(W ** 2, axis=0)
    nonzero = col_sq > 0.0
    z3 = z2 * z
    cross = (W.T @ W) @ z3 - col_sq * z3
    with np.errstate(divide="ignore", invalid="ignore"):
        alpha = np.where(nonzero, n44 / col_sq, np.nan)
        beta = np.where(nonzero, cross / col_sq, np.nan)

    n33 = float(np.sum(z2 * np.abs(z)))
    threshold = max(2.0 * model.mu * n33 / n44, SPIKE_FLOOR)
    spikes = np.flatnonzero(np.abs(z) > threshold)

    base = dict(
        shift_corr=z,
        root_scale=alpha,
        cross_term=beta,
        spike_threshold=threshold,
        spikes=spikes,
    )

    rc = region_check(model, q, c_star)
    if not rc.in_region:
        return StationaryReport(kind="Unresolved", reason="outside region", **base)
    if spikes.size == 0:
        return StationaryReport(
            kind="Unresolved",
            reason="empty spike set at an in-region stationary point",
            **base,
        )
    if spikes.size == 1:
        l = int(spikes[0])
        col = W[:, l]
        alignment = abs(float(np.dot(q, col / np.linalg.norm(col))))
        bound = 1.0 - 2.0 * (1.0 / c_star) * model.kappa ** -2
        return StationaryReport(
            kind="LocalMin",
            local_index=l,
            alignment=alignment,
            alignment_bound=bound,
            **base,
        )

    # Saddle: certify negative curvature in the span of the two largest spikes.
    order = spikes[np.argsort(-np.abs(z[spikes]))]
    l, lp = int(order[0]), int(order[1])
    H = pop_hessian(W, q)
    basis = []
    for col in (W[:, l], W[:, lp]):
        u = tangent_project(q, col)
        for b in basis:
            u = u - b * np.dot(b, u)
        n = np.linalg.norm(u)
        if n > 1e-12:
            basis.append(u / n)
    B = np.stack(basis, axis=1)
    Hs = B.T @ H @ B
    w, V = np.linalg.eigh(0.5 * (Hs + Hs.T))
    v = B @ V[:, 0]
    v /= np.linalg.norm(v)
    return StationaryReport(
        kind="Saddle",
        saddle_indices=(l, lp),
        curvature_direction=v,
        curvature_value=float(w[0]),
        **base,
    )


def min_tangent_eig(hess_op, q, tol=1e-8, max_iters=5000, seed=0):
    """Smallest eigenpair of a symmetric operator on the tangent space at ``q``.

    Lanczos with full reorthogonalization, restarted on breakdown; since the
    tangent space has dimension k-1 the Krylov basis closes after at most
    k-1 operator applications, so clustered spectra cannot stall the
    iteration. Returns (lambda_min, v) with v a unit tangent vector; the
    certified residual ||H v - lambda v|| <= tol bounds |lambda -
    lambda_min| for symmetric operators. Raises IterationError when the
    certificate cannot be met within ``max_iters`` operator applications.
    """
    q = np.asarray(q, dtype=float)
    rng = derive_rng(seed, 0x5EED)
    k = q.shape[0]
    dim = k - 1

    def apply(v):
        return tangent_project(q, hess_op(v))

    def fresh_start(basis):
        for _ in range(50):
            v = tangent_project(q, rng.standard_normal(k))
            for u in basis:
                v -= u * np.dot(u, v)
            n = np.linalg.norm(v)
            if n > 1e-10:
                return v / n
        return None

    basis = []          # global orthonormal set across restarts
    alphas, betas = [], []
    seq_start = 0       # first basis index of the current Lanczos sequence
    best = None         # (residual, lam, vector)
    applications = 0

    v = fresh_start(basis)
    while applications < max_iters and v is not None and len(basis) < dim:
        basis.append(v)
        w = apply(v)
        applications += 1
        a = float(np.dot(v, w))
        alphas.append(a)
        w = w - a * v
        if len(basis) - seq_start > 1:
            w = w - betas[-1] * basis[-2]
        for u in basis:  # full reorthogonalization, twice for stability
            w -= u * np.dot(u, w)
        for u in basis:
            w -= u * np.dot(u, w)
        b = float(np.linalg.norm(w))

        # Ritz pair of the current tridiagonal block
        n_blk = len(basis) - seq_start
        T = np.diag(alphas[seq_start:])
        for i in range(n_blk - 1):
            T[i, i + 1] = T[i + 1, i] = betas[seq_start + i]
        evals, evecs = np.linalg.eigh(T)
        ritz_res = abs(b * evecs[-1, 0])
        if best is None or evals[0] < best[1] or ritz_res <= tol:
            x = np.zeros(k)
            for i, c in enumerate(evecs[:, 0]):
                x += c * basis[seq_start + i]
            x = tangent_project(q, x)
            x /= np.linalg.norm(x)
            hx = apply(x)
            applications += 1
            lam = float(np.dot(x, hx))
            res = float(np.linalg.norm(hx - lam * x))
            if best is None or lam < best[1] or (lam == best[1] and res < best[0]):
                best = (res, lam, x)
            if ritz_res <= tol and res <= tol:
                return lam, x
        if b <= 1e-12:  # invariant subspace: restart in the orthogonal complement
            v = fresh_start(basis)
            seq_start = len(basis)
            betas.append(0.0)
            continue
        betas.append(b)
        v = tangent_project(q, w / b)
        v /= np.linalg.norm(v)

    if best is not None and best[0] <= tol:
        return best[1], best[2]
    res_txt = f"{best[0]:g}" if best is not None else "n/a"
    raise IterationError(
        f"smallest-eigenpair iteration did not reach residual {tol:g} "
        f"within {max_iters} operator applications (best residual {res_txt})"
    )


@dataclass(frozen=True)
class GapMeasurement:
    """Measured deviation between sample and scaled population derivatives,
    with the reference bound it is compared against. A measurement, not an
    assertion: the reference constants are conservative."""

    deviation: float
    bound: float
    ratio: float


def _scale_factor(theta, m):
    return 3.0 * (1.0 - theta) / (theta * m ** 2)


def gradient_gap(obs_model, shift_model, theta, q, c_star=10.0):
    """||sample gradient - scaled population gradient|| against its bound."""
    q = as_unit(q)
    W = shift_model.whitened
    c = _scale_factor(theta, obs_model.m)
    dev = float(np.linalg.norm(sample_gradient(obs_model, q) - c * pop_gradient(W, q)))
    z = W.T @ q
    z2 = z * z
    z46 = float(np.sum(z2 * z2)) ** 1.5
    cs = 1.0 / c_star
    bound = (3.0 * cs / (2.0 * shift_model.kappa ** 2)) * (
        (1.0 - theta) / (theta * obs_model.m ** 2)
    ) * z46
    return GapMeasurement(deviation=dev, bound=bound, ratio=dev / bound)


def hessian_gap(obs_model, shift_model, theta, q, c_star=10.0, seed=0, power_iters=50):
    """Operator-norm estimate of the sample-vs-population Hessian deviation.

    The difference operator is applied matrix-free on the tangent space and
    its norm is estimated with a fixed number of power iterations.
    """
    q = as_unit(q)
    W = shift_model.whitened
    c = _scale_factor(theta, obs_model.m)
    Hp = pop_hessian(W, q)

    def diff(v):
        return sample_hess_vec(obs_model, q, v) - c * tangent_project(q, Hp @ v)

    rng = derive_rng(seed, 0xD1FF)
    v = tangent_project(q, rng.standard_normal(q.shape[0]))
    v /= np.linalg.norm(v)
    dev = 0.0
    for _ in range(power_iters):
        hv = tangent_project(q, diff(v))
        n = float(np.linalg.norm(hv))
        if n == 0.0:
            break
        dev = n
        v = hv / n
    cs = 1.0 / c_star
    z = W.T @ q
    z2 = z * z
    bound = 3.0 * (1.0 - 6.0 * cs - 36.0 * cs ** 2 - 24.0 * cs ** 3) * (
        (1.0 - theta) / (theta * obs_model.m ** 2)
    ) * float(np.sum(z2 * z2))
    return GapMeasurement(deviation=dev, bound=bound, ratio=dev / bound)


def whitening_gap(x0: SparseSignal, k):
    """Spectral deviation of the activation window Gram from identity.

    Returns (delta, bound) with delta = ||(1/(theta*m)) G - I||_2 for G the
    Gram of all cyclic (2k-1)-windows of the activation, computed by exact
    eigendecomposition, and bound the reference rate 10*sqrt(k*log(m)/m).
    Normalization uses theta*m exactly as defined, so rescaling the
    activation changes delta.
    """
    m = x0.m
    if m <= 2 * k:
        raise ParameterError(f"signal length {m} must exceed 2k = {2 * k}")
    K = 2 * k - 1
    G = window_gram(x0.values, K) / (x0.theta * m)
    eig = sym_eig(G - np.eye(K))
    delta = float(np.max(np.abs(eig.eigvals)))
    bound = 10.0 * np.sqrt(k * np.log(m) / m)
    return delta, bound
