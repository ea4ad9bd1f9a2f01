"""Seeded sweeps emitting CSV tables: kernel parameter scaling, recovery
grids, initialization-region rates, and concentration trends.

Every trial draws from a stream derived from (master seed, cell indices,
trial index), so permuting execution order or running cells in parallel
leaves every output row identical. Trend assertions downstream use medians
and pairwise comparisons, never means.
"""

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import BudgetError, ParameterError
from .landscape import (
    ObservationModel,
    gradient_gap,
    hessian_gap,
    region_check,
    whitening_gap,
)
from .optimizer import SolveOptions
from .pipeline import deconvolve, init_point
from .shiftmodel import ShiftModel, estimate_kernel_params
from .signals import convolve, derive_rng, random_unit_kernel, sample_bg

__all__ = [
    "GridSpec",
    "GridResult",
    "make_kernel",
    "derive_seed",
    "run_single_trial",
    "run_param_sweep",
    "run_recovery_grid",
    "run_init_region_rate",
    "run_concentration_sweep",
    "estimate_grid_flops",
    "write_csv",
    "write_meta",
    "THETA_RULE",
]

THETA_RULE = "k^-2/3"

# Default perturbation size of the low-coherence kernel family; small enough
# that c_star * mu * kappa^2 stays below typical window spikiness at k <= 200.
NEAR_DELTA_EPS = 0.01

KERNEL_FAMILIES = ("generic", "bandpass", "delta", "neardelta")


def make_kernel(family, k, rng, near_delta_eps=NEAR_DELTA_EPS):
    """Draw a unit kernel from a named family.

    bandpass: unit-normalized kernel whose discrete spectrum is supported on
    the contiguous middle third of the nonnegative frequencies, with random
    Gaussian coefficients there. neardelta: a delta kernel with a Gaussian
    perturbation of norm ``near_delta_eps``, giving small but nonzero
    coherence.
    """
    if family == "generic":
        return random_unit_kernel(k, rng)
    if family == "delta":
        a = np.zeros(k)
        a[0] = 1.0
        return a
    if family == "neardelta":
        g = rng.standard_normal(k)
        a = np.zeros(k)
        a[0] = 1.0
        a += near_delta_eps * g / np.linalg.norm(g)
        return a / np.linalg.norm(a)
    if family == "bandpass":
        n_freq = k // 2 + 1
        lo = n_freq // 3
        hi = max(lo + 1, (2 * n_freq) // 3)
        coef = np.zeros(n_freq, dtype=complex)
        coef[lo:hi] = rng.standard_normal(hi - lo) + 1j * rng.standard_normal(hi - lo)
        a = np.fft.irfft(coef, n=k)
        return a / np.linalg.norm(a)
    raise ParameterError(f"unknown kernel family {family!r}; expected one of {KERNEL_FAMILIES}")


def derive_seed(master, *path):
    """64-bit trial seed derived from a master seed and an index path."""
    seq = np.random.SeedSequence([int(master), *[int(p) for p in path]])
    return int(seq.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class GridSpec:
    """Recovery-grid specification.

    ``thetas`` is either a list of rates or the rule string "k^-2/3".
    """

    ks: tuple
    thetas: object
    ms: tuple
    trials: int = 10
    master_seed: int = 0
    family: str = "generic"
    flop_cap: float = 1e11
    workers: int = 1
    solve: SolveOptions = field(default_factory=SolveOptions)

    def theta_values(self, k):
        if self.thetas == THETA_RULE:
            return [float(k) ** (-2.0 / 3.0)]
        return [float(t) for t in self.thetas]

    def cells(self):
        out = []
        for i, k in enumerate(self.ks):
            for j, theta in enumerate(self.theta_values(k)):
                for l, m in enumerate(self.ms):
                    out.append((i, j, l, int(k), float(theta), int(m)))
        return out


@dataclass
class GridResult:
    rows: list

    def aggregate(self):
        """Per-cell mean and median error over trials."""
        cells = {}
        for r in self.rows:
            cells.setdefault((r["k"], r["theta"], r["m"]), []).append(r["err"])
        return {
            key: {
                "mean": float(np.mean(errs)),
                "median": float(np.median(errs)),
                "trials": len(errs),
            }
            for key, errs in cells.items()
        }


# Rough per-trial cost model (multiply-adds): typical solver iteration count
# times window passes per iteration. Used only for the budget refusal.
_EST_ITERS = 300
_EST_PASSES_PER_ITER = 8


def estimate_grid_flops(spec: GridSpec):
    total = 0.0
    for (_, _, _, k, _, m) in spec.cells():
        total += spec.trials * _EST_ITERS * _EST_PASSES_PER_ITER * float(m) * float(k)
    return total


def run_single_trial(k, theta, m, trial_seed, opts=None, family="generic"):
    """One seeded instance: draw kernel and activation, deconvolve, score.

    The same (k, theta, m, trial_seed) always reproduces the identical row,
    no matter which grid cell or process runs it.
    """
    opts = opts or SolveOptions()
    a0 = make_kernel(family, k, derive_rng(trial_seed, 0))
    x0 = sample_bg(m, theta, derive_seed(trial_seed, 1))
    y = convolve(a0, x0.values)
    res = deconvolve(y, k, opts, truth=a0, seed=derive_seed(trial_seed, 2))
    return {
        "err": res.err,
        "status": res.report.status.value,
        "iters": res.report.iterations,
        "escapes": len(res.report.escape_events),
    }


def _grid_task(args):
    k, theta, m, trial, trial_seed, opts, family = args
    meas = run_single_trial(k, theta, m, trial_seed, opts, family)
    return {"k": k, "theta": theta, "m": m, "trial": trial, **meas}


def run_recovery_grid(spec: GridSpec):
    """Seeded deconvolution over the full (k, theta, m) grid.

    Refuses before running when the estimated cost exceeds ``flop_cap``.
    Rows are merged in cell order regardless of execution order.
    """
    est = estimate_grid_flops(spec)
    if est > spec.flop_cap:
        raise BudgetError(
            f"estimated cost {est:.3g} multiply-adds exceeds cap {spec.flop_cap:.3g}; "
            f"shrink the grid, lower trials, or raise the cap"
        )
    tasks = []
    for (i, j, l, k, theta, m) in spec.cells():
        for t in range(spec.trials):
            seed = derive_seed(spec.master_seed, i, j, l, t)
            tasks.append((k, theta, m, t, seed, spec.solve, spec.family))
    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            rows = list(pool.map(_grid_task, tasks))
    else:
        rows = [_grid_task(t) for t in tasks]
    return GridResult(rows=rows)


def run_param_sweep(k_list, trials, seed, family="generic"):
    """Averaged kernel statistics per k, with the reference scaling laws
    1/log(k), log(k)^(4/3) and sqrt(log(k)/k) appended for plotting."""
    sampler = None
    if family != "generic":
        sampler = lambda k, rng: make_kernel(family, k, rng)
    rows = estimate_kernel_params(k_list, trials, seed, kernel_sampler=sampler)
    for r in rows:
        lk = np.log(r["k"])
        r["ref_sigma_min"] = 1.0 / lk
        r["ref_kappa"] = lk ** (4.0 / 3.0)
        r["ref_mu"] = float(np.sqrt(lk / r["k"]))
    return rows


def run_init_region_rate(k, theta, m, trials, master_seed, c_star=10.0, family="generic"):
    """Fraction of seeded initializations landing in the sub-level region
    with threshold 3 * c_star * mu * kappa^2. Emits per-trial rows with the
    compared values."""
    rows = []
    for t in range(trials):
        seed = derive_seed(master_seed, t)
        a0 = make_kernel(family, k, derive_rng(seed, 0))
        shift = ShiftModel.from_kernel(a0)
        x0 = sample_bg(m, theta, derive_seed(seed, 1))
        y = convolve(a0, x0.values)
        obs = ObservationModel.from_signal(y, k)
        q0 = init_point(obs, seed=derive_seed(seed, 2))
        rc = region_check(shift, q0, 3.0 * c_star)
        rows.append(
            {
                "k": k,
                "theta": theta,
                "m": m,
                "trial": t,
                "spikiness": rc.spikiness,
                "threshold": rc.sublevel_threshold,
                "in_region": int(rc.in_sublevel),
            }
        )
    fraction = float(np.mean([r["in_region"] for r in rows])) if rows else float("nan")
    return rows, fraction


REJECTION_CAP = 10 ** 5


def _sample_region_points(shift, n, c_star, rng):
    """Rejection-sample unit vectors from the sub-level region; returns a
    possibly short list once the draw cap is hit (region may be empty)."""
    pts = []
    drawn = 0
    k = shift.k
    while len(pts) < n and drawn < REJECTION_CAP:
        batch = min(1024, REJECTION_CAP - drawn)
        Q = rng.standard_normal((batch, k))
        Q /= np.linalg.norm(Q, axis=1, keepdims=True)
        drawn += batch
        Z = Q @ shift.whitened
        Z2 = Z * Z
        spik = np.sum(Z2 * Z2, axis=1) ** 1.5
        for idx in np.flatnonzero(spik >= c_star * shift.mu * shift.kappa ** 2):
            pts.append(Q[idx])
            if len(pts) == n:
                break
    return pts


def run_concentration_sweep(k, theta, m_list, samples, master_seed, c_star=10.0,
                            family="generic"):
    """Sample-vs-population derivative gaps and the whitening gap, per m.

    For each m a fresh activation is drawn; query points are rejection-
    sampled from the sub-level region with threshold 2 * c_star * mu *
    kappa^2. Cells whose region cannot be sampled within the draw cap are
    marked unsampled (the whitening gap, which needs no query point, is
    still reported).
    """
    a0 = make_kernel(family, k, derive_rng(master_seed, 0))
    shift = ShiftModel.from_kernel(a0)
    rows = []
    for idx, m in enumerate(m_list):
        x0 = sample_bg(m, theta, derive_seed(master_seed, 1 + idx))
        y = convolve(a0, x0.values)
        obs = ObservationModel.from_signal(y, k)
        delta, delta_bound = whitening_gap(x0, k)
        pts = _sample_region_points(
            shift, samples, 2.0 * c_star, derive_rng(master_seed, 1000 + idx)
        )
        if samples > 0 and not pts:
            rows.append(
                {
                    "m": m, "sample": -1, "sampled": 0,
                    "grad_deviation": float("nan"), "grad_bound": float("nan"),
                    "grad_ratio": float("nan"), "hess_deviation": float("nan"),
                    "hess_bound": float("nan"), "hess_ratio": float("nan"),
                    "whitening_delta": delta, "whitening_bound": delta_bound,
                }
            )
            continue
        for s, q in enumerate(pts):
            gg = gradient_gap(obs, shift, theta, q, c_star)
            hg = hessian_gap(obs, shift, theta, q, c_star, seed=derive_seed(master_seed, 2000 + idx, s))
            rows.append(
                {
                    "m": m, "sample": s, "sampled": 1,
                    "grad_deviation": gg.deviation, "grad_bound": gg.bound,
                    "grad_ratio": gg.ratio, "hess_deviation": hg.deviation,
                    "hess_bound": hg.bound, "hess_ratio": hg.ratio,
                    "whitening_delta": delta, "whitening_bound": delta_bound,
                }
            )
    return rows


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (float, np.floating)):
        return "%.17g" % value
    return str(value)


def write_csv(path, fieldnames, rows):
    """Schema-stable CSV: fixed header and column order, %.17g floats."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(fieldnames)
        for r in rows:
            writer.writerow([_fmt(r.get(name)) for name in fieldnames])


def write_meta(path, mapping):
    """Flat key = value metadata file, keys sorted, reproducible byte-for-byte."""
    with open(path, "w") as fh:
        for key in sorted(mapping):
            fh.write(f"{key} = {_fmt(mapping[key])}\n")
