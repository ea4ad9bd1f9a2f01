"""Synthetic signal generation and cyclic shift/convolution/correlation primitives.

Conventions: public formulas are documented 1-indexed (the usual signal
processing convention); storage is 0-indexed numpy. The conversion is
confined to this module. All operations are pure functions on immutable
inputs and cost O(m*k) directly, with no transform-based fast paths: the
kernel length k is small in every target regime and the direct path keeps
results exactly reproducible.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, FileFormatError, ParameterError

__all__ = [
    "SparseSignal",
    "cyclic_shift",
    "cyclic_reverse",
    "zero_pad",
    "truncate",
    "convolve",
    "correlate_windows",
    "scatter_windows",
    "sample_bg",
    "random_unit_kernel",
    "derive_rng",
    "as_unit",
    "read_vector",
    "write_vector",
]


def cyclic_shift(v, shift):
    """Cyclically shift ``v`` by ``shift`` positions.

    In 1-indexed terms the output is out(i) = v([i - shift - 1] mod m + 1),
    so a positive shift moves entries toward larger indices. Shifts compose
    additively mod m and shift 0 is the identity.
    """
    v = np.asarray(v, dtype=float)
    return np.roll(v, int(shift))


def cyclic_reverse(v):
    """Reverse ``v`` about its first entry: [v1, vm, vm-1, ..., v2].

    An involution: cyclic_reverse(cyclic_reverse(v)) == v.
    """
    v = np.asarray(v, dtype=float)
    out = np.empty_like(v)
    out[0] = v[0]
    out[1:] = v[1:][::-1]
    return out


def zero_pad(a, m):
    """Embed a length-k vector into R^m by appending zeros."""
    a = np.asarray(a, dtype=float)
    k = a.shape[0]
    if m < k:
        raise DimensionError(f"cannot zero-pad length {k} into length {m}")
    out = np.zeros(m)
    out[:k] = a
    return out


def truncate(v, k):
    """Keep the first k entries of ``v`` (the adjoint of zero_pad)."""
    v = np.asarray(v, dtype=float)
    if k > v.shape[0]:
        raise DimensionError(f"cannot truncate length {v.shape[0]} to length {k}")
    return v[:k].copy()


def convolve(a, x):
    """Cyclic convolution of a short kernel ``a`` with a length-m signal ``x``.

    y(j) = sum_{i=1..k} a(i) * x([j - i] mod m + 1). Direct evaluation in
    O(m*k); linear in both arguments.
    """
    a = np.asarray(a, dtype=float)
    x = np.asarray(x, dtype=float)
    k, m = a.shape[0], x.shape[0]
    if k > m:
        raise DimensionError(f"kernel length {k} exceeds signal length {m}")
    ext = np.concatenate([x[m - (k - 1):], x]) if k > 1 else x
    return np.convolve(ext, a, mode="valid")


def correlate_windows(y, w):
    """Inner products of every cyclic k-window of ``y`` with ``w``.

    out(i) = <[y_i, ..., y_{1+[i+k-2] mod m}], w>, i = 1..m. This is the
    product of the transposed window matrix with ``w`` without materializing
    the window matrix.
    """
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    k, m = w.shape[0], y.shape[0]
    if k > m:
        raise DimensionError(f"window length {k} exceeds signal length {m}")
    ext = np.concatenate([y, y[: k - 1]]) if k > 1 else y
    return np.correlate(ext, w, mode="valid")


def scatter_windows(y, coeff, k):
    """Adjoint of correlate_windows: sum of cyclic k-windows weighted by ``coeff``.

    Returns sum_i coeff(i) * window_i(y) in R^k. Satisfies the adjoint
    identity <correlate_windows(y, w), coeff> == <w, scatter_windows(y, coeff, k)>.
    """
    y = np.asarray(y, dtype=float)
    coeff = np.asarray(coeff, dtype=float)
    m = y.shape[0]
    if coeff.shape[0] != m:
        raise DimensionError(
            f"coefficient length {coeff.shape[0]} does not match signal length {m}"
        )
    if k > m:
        raise DimensionError(f"window length {k} exceeds signal length {m}")
    ext = np.concatenate([y, y[: k - 1]]) if k > 1 else y
    return np.correlate(ext, coeff, mode="valid")


def sample_bg(m, theta, seed):
    """Draw a Bernoulli-Gaussian signal: x(i) = mask(i) * gauss(i).

    The Bernoulli mask is sampled first and Gaussians are sampled for all m
    positions, so support and values are independently reproducible from the
    same seed.
    """
    if not 0.0 < theta < 1.0:
        raise ParameterError(f"theta must lie in (0, 1), got {theta}")
    if m < 1:
        raise ParameterError(f"m must be positive, got {m}")
    rng = derive_rng(seed)
    mask = rng.random(m) < theta
    gauss = rng.standard_normal(m)
    return SparseSignal(mask=mask, gauss=gauss, theta=float(theta), seed=int(seed))


@dataclass(frozen=True)
class SparseSignal:
    """Bernoulli-Gaussian activation stored as mask + Gaussian values."""

    mask: np.ndarray
    gauss: np.ndarray
    theta: float
    seed: int

    @property
    def m(self):
        return self.mask.shape[0]

    @property
    def values(self):
        return np.where(self.mask, self.gauss, 0.0)

    @property
    def support_count(self):
        return int(self.mask.sum())


def random_unit_kernel(k, rng):
    """Uniformly random point on the unit sphere in R^k."""
    a = rng.standard_normal(k)
    n = np.linalg.norm(a)
    while n == 0.0:  # probability-zero guard
        a = rng.standard_normal(k)
        n = np.linalg.norm(a)
    return a / n


def derive_rng(master_seed, *indices):
    """Deterministic per-trial generator from a master seed and index path.

    Uses a counter-based bit generator seeded by the (master, indices)
    tuple, so trials can run in any order or in parallel and still draw
    identical streams.
    """
    seq = np.random.SeedSequence([int(master_seed), *[int(i) for i in indices]])
    return np.random.Generator(np.random.Philox(seq))


def as_unit(q, tol=1e-12):
    """Validate that ``q`` has unit Euclidean norm and return it as an array."""
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if abs(n - 1.0) > tol:
        raise ParameterError(f"expected a unit vector, got norm {n!r}")
    return q


def write_vector(path, v):
    """Write a vector as plain text, one %.17g value per line."""
    v = np.asarray(v, dtype=float)
    with open(path, "w") as fh:
        for x in v:
            fh.write("%.17g\n" % x)


def read_vector(path):
    """Read a plain-text vector; blank lines and '#' comments are skipped."""
    vals = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            s = line.split("#", 1)[0].strip()
            if not s:
                continue
            try:
                vals.append(float(s))
            except ValueError:
                raise FileFormatError(f"{path}:{lineno}: not a number: {s!r}") from None
    return np.array(vals)
