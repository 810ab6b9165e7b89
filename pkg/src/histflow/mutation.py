"""Mutation kernels, the offspring/spine jump kernels, and generator checks.

The mutant kernel gives the trait distribution of a mutant child; the
offspring kernel mixes it with a point mass at the parent trait (clone with
probability ``1 - p``), and the spine jump kernel halves once more because a
branch event promotes parent or child with equal probability.

``generator_apply`` estimates ``n * E[f(h) - f(x)]`` under the mutant kernel,
which for the Gaussian family converges to the diffusion generator
``(sigma^2 / 2) * f''``.  For finite spaces everything is an exact sum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CapacityError, ConfigError, InvalidPointError
from .trait_space import TraitSpace, as_point

__all__ = [
    "MutationKernelSpec",
    "GeneratorReport",
    "gaussian_kernel",
    "finite_jump_kernel",
    "truncated_gaussian_kernel",
    "sample_mutant",
    "sample_offspring_trait",
    "sample_spine_jump",
    "generator_apply",
    "generator_convergence_report",
    "diffusion_target",
    "TestFunction",
    "test_function",
    "kernel_to_dict",
    "kernel_from_dict",
]

_TRUNC_RESAMPLE_CAP = 10**6


@dataclass(frozen=True)
class MutationKernelSpec:
    kind: str  # "gaussian" | "finite_jump" | "truncated_gaussian"
    space: TraitSpace
    sigma: float = 0.0
    rows: tuple[tuple[float, ...], ...] = ()  # finite_jump: renormalized, zero diagonal
    lo: float = 0.0
    hi: float = 0.0


def gaussian_kernel(space: TraitSpace, sigma: float) -> MutationKernelSpec:
    """Mutant trait ``x + N(0, sigma^2 Id / n)`` on a euclidean space."""
    if space.kind != "euclidean":
        raise ConfigError("gaussian kernel requires a euclidean space")
    if sigma <= 0:
        raise ConfigError(f"sigma must be > 0, got {sigma}")
    return MutationKernelSpec(kind="gaussian", space=space, sigma=float(sigma))


def finite_jump_kernel(space: TraitSpace, Q) -> MutationKernelSpec:
    """Row-stochastic jump matrix; self-transitions removed and renormalized."""
    if space.kind != "finite":
        raise ConfigError("finite_jump kernel requires a finite space")
    m = len(space.points)
    rows = []
    for i, row in enumerate(Q):
        row = [float(v) for v in row]
        if len(row) != m:
            raise ConfigError(f"Q row {i} has length {len(row)}, expected {m}")
        if any(v < 0 for v in row):
            raise ConfigError("Q entries must be nonnegative")
        row[i] = 0.0
        s = sum(row)
        if s <= 0:
            raise ConfigError(
                f"Q row for {space.points[i]!r} has no mass off the diagonal"
            )
        rows.append(tuple(v / s for v in row))
    return MutationKernelSpec(kind="finite_jump", space=space, rows=tuple(rows))


def truncated_gaussian_kernel(space: TraitSpace, sigma: float, lo=None, hi=None) -> MutationKernelSpec:
    """Gaussian step resampled until it lands inside the interval."""
    if space.kind != "interval":
        raise ConfigError("truncated_gaussian kernel requires an interval space")
    if sigma <= 0:
        raise ConfigError(f"sigma must be > 0, got {sigma}")
    lo = space.lo if lo is None else float(lo)
    hi = space.hi if hi is None else float(hi)
    if not (space.lo <= lo < hi <= space.hi):
        raise ConfigError(f"truncation region [{lo}, {hi}] must sit inside the space")
    return MutationKernelSpec(kind="truncated_gaussian", space=space, sigma=float(sigma), lo=lo, hi=hi)


def sample_mutant(kernel: MutationKernelSpec, n: int, x, rng: np.random.Generator):
    """One draw from the mutant kernel at scale ``n``."""
    space = kernel.space
    x = as_point(space, x)
    if kernel.kind == "gaussian":
        step = kernel.sigma / math.sqrt(n)
        return tuple(xi + step * g for xi, g in zip(x, rng.standard_normal(space.dim)))
    if kernel.kind == "finite_jump":
        i = space.index[x]
        j = rng.choice(len(space.points), p=kernel.rows[i])
        return space.points[j]
    if kernel.kind == "truncated_gaussian":
        step = kernel.sigma / math.sqrt(n)
        for _ in range(_TRUNC_RESAMPLE_CAP):
            h = x + step * rng.standard_normal()
            if kernel.lo <= h <= kernel.hi:
                return h
        raise CapacityError(
            f"truncated gaussian failed to land in [{kernel.lo}, {kernel.hi}] "
            f"after {_TRUNC_RESAMPLE_CAP} attempts"
        )
    raise ConfigError(f"unknown kernel kind {kernel.kind!r}")


def sample_offspring_trait(kernel: MutationKernelSpec, n: int, p: float, x, rng: np.random.Generator):
    """Offspring trait: clone of the parent with probability 1-p, else a mutant."""
    if not 0.0 <= p <= 1.0:
        raise ConfigError(f"mutation probability must be in [0, 1], got {p}")
    x = as_point(kernel.space, x)
    if rng.random() < p:
        return sample_mutant(kernel, n, x, rng), True
    return x, False


def sample_spine_jump(kernel: MutationKernelSpec, n: int, p: float, x, rng: np.random.Generator):
    """Jump destination of the spine: parent trait or offspring kernel, half/half."""
    if not 0.0 <= p <= 1.0:
        raise ConfigError(f"mutation probability must be in [0, 1], got {p}")
    x = as_point(kernel.space, x)
    if rng.random() < 0.5:
        return x
    trait, _ = sample_offspring_trait(kernel, n, p, x, rng)
    return trait


# --- named test functions ----------------------------------------------------


@dataclass(frozen=True)
class TestFunction:
    """Scalar test function with optional closed forms for Gaussian smoothing."""

    name: str
    fn: object  # scalar -> float
    second_derivative: object = None
    gauss_mean: object = None  # (x, variance) -> E f(x + N(0, variance))
    values: dict = field(default_factory=dict)  # finite-space table


def _tf_sin():
    return TestFunction(
        name="sin",
        fn=math.sin,
        second_derivative=lambda x: -math.sin(x),
        gauss_mean=lambda x, v: math.sin(x) * math.exp(-0.5 * v),
    )


def _tf_cos():
    return TestFunction(
        name="cos",
        fn=math.cos,
        second_derivative=lambda x: -math.cos(x),
        gauss_mean=lambda x, v: math.cos(x) * math.exp(-0.5 * v),
    )


def _tf_square():
    return TestFunction(
        name="square",
        fn=lambda x: x * x,
        second_derivative=lambda x: 2.0,
        gauss_mean=lambda x, v: x * x + v,
    )


def _tf_constant():
    return TestFunction(
        name="constant",
        fn=lambda x: 1.0,
        second_derivative=lambda x: 0.0,
        gauss_mean=lambda x, v: 1.0,
    )


_NAMED = {"sin": _tf_sin, "cos": _tf_cos, "square": _tf_square, "constant": _tf_constant}


def test_function(f) -> TestFunction:
    if isinstance(f, TestFunction):
        return f
    if isinstance(f, dict):
        return TestFunction(name="table", fn=None, values=dict(f))
    if isinstance(f, str):
        if f not in _NAMED:
            raise ConfigError(f"unknown test function {f!r}; known: {sorted(_NAMED)}")
        return _NAMED[f]()
    raise ConfigError("test function must be a name, a TestFunction, or a finite-space table")


def _scalar(x):
    if isinstance(x, tuple):
        if len(x) != 1:
            raise InvalidPointError("named test functions act on one-dimensional traits")
        return x[0]
    return x


def diffusion_target(kernel: MutationKernelSpec, f) -> object:
    """The limit generator for the Gaussian family: (sigma^2/2) f''."""
    tf = test_function(f)
    if tf.second_derivative is None:
        raise ConfigError(f"test function {tf.name!r} has no second derivative recorded")
    s2 = kernel.sigma**2
    return lambda x: 0.5 * s2 * tf.second_derivative(_scalar(x))


def generator_apply(kernel: MutationKernelSpec, n: int, f, x, samples: int, rng=None):
    """Estimate ``n * E[f(h) - f(x)]`` under the mutant kernel.

    Exact (zero standard error) for finite spaces, where the sum is computed
    directly; Monte Carlo elsewhere.
    """
    tf = test_function(f)
    space = kernel.space
    x = as_point(space, x)
    if kernel.kind == "finite_jump":
        if not tf.values:
            raise ConfigError("finite-space test functions are given as label -> value tables")
        i = space.index[x]
        fx = tf.values[x]
        total = 0.0
        for j, w in enumerate(kernel.rows[i]):
            if w == 0.0:
                continue
            total += w * (tf.values[space.points[j]] - fx)
        return n * total, 0.0
    if rng is None:
        raise ConfigError("Monte Carlo generator estimates need an rng")
    if samples < 2:
        raise ConfigError("need at least 2 samples for a standard error")
    x0 = _scalar(x)
    fx = tf.fn(x0)
    step = kernel.sigma / math.sqrt(n)
    if kernel.kind == "gaussian" and space.dim == 1:
        hs = x0 + step * rng.standard_normal(samples)
        vals = n * (_np_apply(tf, hs) - fx)
    elif kernel.kind == "truncated_gaussian":
        hs = _trunc_draws(kernel, x0, step, samples, rng)
        vals = n * (_np_apply(tf, hs) - fx)
    else:
        draws = [tf.fn(_scalar(sample_mutant(kernel, n, x, rng))) for _ in range(samples)]
        vals = n * (np.asarray(draws) - fx)
    est = float(np.mean(vals))
    se = float(np.std(vals, ddof=1) / math.sqrt(samples))
    return est, se


def _np_apply(tf: TestFunction, arr: np.ndarray) -> np.ndarray:
    if tf.name == "sin":
        return np.sin(arr)
    if tf.name == "cos":
        return np.cos(arr)
    if tf.name == "square":
        return arr * arr
    if tf.name == "constant":
        return np.ones_like(arr)
    return np.asarray([tf.fn(v) for v in arr])


def _trunc_draws(kernel, x0, step, samples, rng):
    out = np.empty(samples)
    have = 0
    spent = 0
    while have < samples:
        m = min(4 * (samples - have) + 64, 1 << 20)
        cand = x0 + step * rng.standard_normal(m)
        good = cand[(cand >= kernel.lo) & (cand <= kernel.hi)]
        take = min(len(good), samples - have)
        out[have : have + take] = good[:take]
        have += take
        spent += m
        if spent > _TRUNC_RESAMPLE_CAP and have == 0:
            raise CapacityError("truncated gaussian resampling budget exhausted")
    return out


@dataclass
class GeneratorReport:
    kernel_kind: str
    f_name: str
    n_values: list
    sup_discrepancies: list
    max_standard_errors: list
    converged: bool
    note: str = ""

    def rows(self):
        return list(zip(self.n_values, self.sup_discrepancies, self.max_standard_errors))


def generator_convergence_report(
    kernel: MutationKernelSpec,
    f,
    A_target,
    grid,
    n_list,
    samples: int,
    rng=None,
    analytic: bool = True,
) -> GeneratorReport:
    """Sup-over-grid discrepancy between the n-scale generator and a target.

    For the Gaussian family with a test function whose Gaussian smoothing has
    a closed form, the expectation is evaluated analytically (zero standard
    error); otherwise Monte Carlo estimates with propagated standard errors
    are used.  Finite spaces are summed exactly.
    """
    if not grid:
        raise ConfigError("grid must be nonempty")
    tf = test_function(f)
    sups, ses = [], []
    for n in n_list:
        worst = 0.0
        worst_se = 0.0
        for x in grid:
            x = as_point(kernel.space, x)
            if kernel.kind == "gaussian" and analytic and tf.gauss_mean is not None:
                x0 = _scalar(x)
                v = kernel.sigma**2 / n
                est = n * (tf.gauss_mean(x0, v) - tf.fn(x0))
                se = 0.0
            else:
                est, se = generator_apply(kernel, n, tf, x, samples, rng)
            disc = abs(est - A_target(x))
            if disc > worst:
                worst = disc
            if se > worst_se:
                worst_se = se
        sups.append(worst)
        ses.append(worst_se)
    tol = 3.0 * math.hypot(ses[0], ses[-1])
    growing = len(sups) > 1 and sups[-1] > sups[0] + tol
    converged = not growing
    note = "" if converged else (
        "sup discrepancy grows with n: configuration does not converge to the target"
    )
    return GeneratorReport(
        kernel_kind=kernel.kind,
        f_name=tf.name,
        n_values=list(n_list),
        sup_discrepancies=sups,
        max_standard_errors=ses,
        converged=converged,
        note=note,
    )


# --- JSON ---------------------------------------------------------------------


def kernel_to_dict(kernel: MutationKernelSpec) -> dict:
    if kernel.kind == "gaussian":
        return {"kind": "gaussian", "sigma": kernel.sigma}
    if kernel.kind == "finite_jump":
        return {"kind": "finite_jump", "Q": [list(r) for r in kernel.rows]}
    return {
        "kind": "truncated_gaussian",
        "sigma": kernel.sigma,
        "lo": kernel.lo,
        "hi": kernel.hi,
    }


def kernel_from_dict(space: TraitSpace, d: dict) -> MutationKernelSpec:
    kind = d.get("kind")
    if kind == "gaussian":
        return gaussian_kernel(space, d["sigma"])
    if kind == "finite_jump":
        return finite_jump_kernel(space, d["Q"])
    if kind == "truncated_gaussian":
        return truncated_gaussian_kernel(space, d["sigma"], d.get("lo"), d.get("hi"))
    raise ConfigError(f"unknown kernel kind in config: {kind!r}")
