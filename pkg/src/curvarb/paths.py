"""Path ensembles, seeded simulation, and stochastic-derivative estimators.

Everything downstream (gauges, curvature diagnostics, credit analytics) runs on
the containers defined here.  Simulation is deterministic: every path draws
from its own counter-based stream keyed by ``(seed, stream tag, path index)``,
so results do not depend on execution order or on how work is split across
workers.

The derivative estimators implement forward, backward, and mean difference
quotients conditioned on the present state (valid for Markov processes), with
Gaussian-kernel local regression over the cross-section of paths.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import (
    ConfigurationError,
    DomainError,
    EstimationError,
    NumericalError,
)

__all__ = [
    "TimeGrid",
    "PathEnsemble",
    "ItoSpec",
    "NelsonEstimator",
    "CovariationResult",
    "MartingaleResidual",
    "path_rng",
    "simulate_brownian",
    "simulate_ito",
    "realized_covariation",
    "nelson_derivative",
    "conditional_bin_table",
    "martingale_residual",
    "write_ensemble",
    "read_ensemble",
    "write_ensemble_csv",
    "read_ensemble_csv",
]

_NODE_ATOL = 1e-9


def _as_float_array(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.size == 0:
        raise ConfigurationError(f"{name} must be non-empty")
    return arr


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Strictly increasing observation times starting at 0."""

    times: np.ndarray

    def __post_init__(self):
        t = _as_float_array(self.times, "times")
        if t.ndim != 1 or t.size < 2:
            raise ConfigurationError("a time grid needs at least two points")
        if abs(t[0]) > 0.0:
            raise ConfigurationError("time grids must start at t = 0")
        if not np.all(np.diff(t) > 0):
            raise ConfigurationError("time grid must be strictly increasing")
        if not np.all(np.isfinite(t)):
            raise ConfigurationError("time grid contains non-finite entries")
        object.__setattr__(self, "times", t)

    @classmethod
    def regular(cls, horizon: float, steps: int) -> "TimeGrid":
        if steps < 1 or horizon <= 0:
            raise ConfigurationError("need steps >= 1 and horizon > 0")
        return cls(np.linspace(0.0, float(horizon), steps + 1))

    @property
    def n_times(self) -> int:
        return self.times.size

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    @property
    def steps(self) -> np.ndarray:
        """Interval lengths between consecutive grid times."""
        return np.diff(self.times)

    def index_of(self, t: float) -> int:
        """Index of the grid node equal to ``t`` (within a tight tolerance)."""
        idx = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[idx] - t) > _NODE_ATOL * (1.0 + abs(t)):
            raise DomainError(f"t = {t} is not a grid node")
        return idx

    def interior_index_of(self, t: float) -> int:
        idx = self.index_of(t)
        if idx == 0 or idx == self.n_times - 1:
            raise DomainError(f"t = {t} lies on the grid boundary")
        return idx


def _check_finite(values: np.ndarray, what: str) -> None:
    if np.all(np.isfinite(values)):
        return
    bad = np.argwhere(~np.isfinite(values))
    path, step = int(bad[0][0]), int(bad[0][1])
    raise NumericalError(
        f"{what} contains non-finite values (first at path {path}, step {step})",
        diagnostics={"path": path, "step": step, "count": int(bad.shape[0])},
    )


@dataclass(frozen=True, eq=False)
class PathEnsemble:
    """Immutable block of sampled paths on a common grid.

    values has shape (n_paths, n_times, dim).  driver_increments, when present,
    holds the Brownian increments that generated the paths, shaped
    (n_paths, n_times - 1, k).
    """

    grid: TimeGrid
    values: np.ndarray
    driver_increments: np.ndarray | None = None
    seed: int | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim == 2:
            v = v[:, :, None]
        if v.ndim != 3:
            raise ConfigurationError("values must have shape (n_paths, n_times, dim)")
        if v.shape[1] != self.grid.n_times:
            raise ConfigurationError(
                f"values have {v.shape[1]} times but the grid has {self.grid.n_times}"
            )
        _check_finite(v, "ensemble values")
        object.__setattr__(self, "values", v)
        if self.driver_increments is not None:
            d = np.asarray(self.driver_increments, dtype=np.float64)
            if d.ndim != 3 or d.shape[0] != v.shape[0] or d.shape[1] != v.shape[1] - 1:
                raise ConfigurationError(
                    "driver_increments must have shape (n_paths, n_times - 1, k)"
                )
            _check_finite(d, "driver increments")
            object.__setattr__(self, "driver_increments", d)

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]

    @property
    def n_times(self) -> int:
        return self.values.shape[1]

    @property
    def dim(self) -> int:
        return self.values.shape[2]

    @property
    def series(self) -> np.ndarray:
        """(n_paths, n_times) view for one-dimensional ensembles."""
        if self.dim != 1:
            raise ConfigurationError("series is only defined for dim-1 ensembles")
        return self.values[:, :, 0]

    def at_time(self, t: float) -> np.ndarray:
        return self.values[:, self.grid.index_of(t), :]

    def component(self, j: int) -> "PathEnsemble":
        return PathEnsemble(self.grid, self.values[:, :, j : j + 1], seed=self.seed)


# ---------------------------------------------------------------------------
# Seeded streams


def path_rng(seed: int, path_index: int, tag: int = 0) -> np.random.Generator:
    """Counter-based generator for one path of one logical stream.

    The Philox key packs (seed, tag, path index), so any path of any stream can
    be regenerated in isolation and results are invariant under parallel
    scheduling.  Tags separate independent uses of the same scenario seed
    (driver noise, default thresholds, bridge noise, ...).
    """
    if path_index < 0 or path_index >= 1 << 48:
        raise ConfigurationError("path index out of range for stream keying")
    if tag < 0 or tag >= 1 << 16:
        raise ConfigurationError("stream tag out of range")
    key = ((seed & 0xFFFFFFFFFFFFFFFF) << 64) | (tag << 48) | path_index
    return np.random.Generator(np.random.Philox(key=key))


def normal_increments(
    seed: int, n_paths: int, shape: tuple[int, ...], tag: int = 0
) -> np.ndarray:
    """Stack of standard-normal draws, one keyed stream per path."""
    out = np.empty((n_paths, *shape))
    for i in range(n_paths):
        out[i] = path_rng(seed, i, tag).standard_normal(shape)
    return out


def simulate_brownian(
    grid: TimeGrid, n_paths: int, dim: int = 1, seed: int = 0, tag: int = 0
) -> PathEnsemble:
    """Standard Brownian motion started at 0, increments scaled by sqrt(dt)."""
    if n_paths < 1 or dim < 1:
        raise ConfigurationError("need n_paths >= 1 and dim >= 1")
    z = normal_increments(seed, n_paths, (grid.n_times - 1, dim), tag)
    dw = z * np.sqrt(grid.steps)[None, :, None]
    w = np.zeros((n_paths, grid.n_times, dim))
    np.cumsum(dw, axis=1, out=w[:, 1:, :])
    return PathEnsemble(grid, w, driver_increments=dw, seed=seed)


# ---------------------------------------------------------------------------
# Ito simulation


@dataclass(frozen=True, eq=False)
class ItoSpec:
    """Coefficient specification for an Ito process.

    drift and sigma may be constants, arrays, or callables of (t, state) where
    state has shape (n_paths, n).  form selects the integration scheme:
    "arithmetic" uses Euler on the level, "geometric" uses log-Euler with the
    coefficients read as proportional drift and volatility (exact in law for
    constant coefficients).
    """

    x0: float | np.ndarray
    drift: float | np.ndarray | Callable = 0.0
    sigma: float | np.ndarray | Callable = 0.0
    form: str = "arithmetic"

    def __post_init__(self):
        if self.form not in ("arithmetic", "geometric"):
            raise ConfigurationError(f"unknown Ito form {self.form!r}")
        x0 = np.atleast_1d(np.asarray(self.x0, dtype=np.float64))
        if x0.ndim != 1:
            raise ConfigurationError("x0 must be a scalar or 1-d vector")
        if self.form == "geometric" and np.any(x0 <= 0):
            raise ConfigurationError("geometric dynamics need a positive start")
        object.__setattr__(self, "x0", x0)

    @property
    def dim(self) -> int:
        return self.x0.size

    def eval_drift(self, t: float, x: np.ndarray) -> np.ndarray:
        a = self.drift(t, x) if callable(self.drift) else self.drift
        return np.broadcast_to(np.asarray(a, dtype=np.float64), x.shape)

    def eval_sigma(self, t: float, x: np.ndarray, k: int) -> np.ndarray:
        s = self.sigma(t, x) if callable(self.sigma) else self.sigma
        s = np.asarray(s, dtype=np.float64)
        target = (x.shape[0], x.shape[1], k)
        if s.ndim == 0:
            if x.shape[1] != 1 or k != 1:
                raise ConfigurationError("scalar sigma needs dim = driver dim = 1")
            return np.broadcast_to(s[None, None, None], target)
        return np.broadcast_to(s, target)

    def driver_dim(self) -> int:
        s = self.sigma(0.0, self.x0[None, :]) if callable(self.sigma) else self.sigma
        s = np.asarray(s, dtype=np.float64)
        return 1 if s.ndim == 0 else s.shape[-1]


def simulate_ito(spec: ItoSpec, driver: PathEnsemble) -> PathEnsemble:
    """Integrate an ItoSpec against the given Brownian driver.

    The driver must carry its increments.  The output reuses the driver grid,
    seed, and increments, so downstream estimators can see both the state and
    the noise that produced it.
    """
    if driver.driver_increments is None:
        raise ConfigurationError("driver ensemble carries no increments")
    dw = driver.driver_increments
    n_paths, n_steps, k = dw.shape
    grid = driver.grid
    dt = grid.steps
    n = spec.dim
    x = np.empty((n_paths, grid.n_times, n))
    x[:, 0, :] = spec.x0[None, :]
    state = x[:, 0, :].copy()
    if spec.form == "geometric":
        log_state = np.log(state)
    for i in range(n_steps):
        t = float(grid.times[i])
        a = spec.eval_drift(t, state)
        s = spec.eval_sigma(t, state, k)
        noise = np.einsum("pnk,pk->pn", s, dw[:, i, :])
        if spec.form == "arithmetic":
            state = state + a * dt[i] + noise
        else:
            # proportional coefficients; Ito correction keeps the law exact
            # for constant (a, s)
            quad = np.einsum("pnk,pnk->pn", s, s)
            log_state = log_state + (a - 0.5 * quad) * dt[i] + noise
            state = np.exp(log_state)
        x[:, i + 1, :] = state
    _check_finite(x, "simulated paths")
    return PathEnsemble(grid, x, driver_increments=dw, seed=driver.seed)


# ---------------------------------------------------------------------------
# Covariation


@dataclass(frozen=True, eq=False)
class CovariationResult:
    """Realized covariation between two scalar path families."""

    grid: TimeGrid
    cumulative: np.ndarray        # (n_paths, n_times)
    mean_rate: np.ndarray         # (n_times - 1,) ensemble average of d<a,b>/dt
    rate_se: np.ndarray           # (n_times - 1,)

    @property
    def total(self) -> np.ndarray:
        return self.cumulative[:, -1]


def _series_of(x, name: str) -> tuple[np.ndarray, TimeGrid | None]:
    if isinstance(x, PathEnsemble):
        return x.series, x.grid
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise ConfigurationError(f"{name} must be a dim-1 ensemble or (n_paths, n_times) array")
    return arr, None


def realized_covariation(a, b, grid: TimeGrid | None = None) -> CovariationResult:
    """Quadratic covariation sum of products of increments, per path.

    Accepts dim-1 PathEnsembles or raw (n_paths, n_times) arrays (then a grid
    is required).  The rate is the per-interval increment divided by dt,
    averaged across paths with a standard error.
    """
    sa, ga = _series_of(a, "a")
    sb, gb = _series_of(b, "b")
    g = ga or gb or grid
    if g is None:
        raise ConfigurationError("a time grid is required for raw arrays")
    if ga is not None and gb is not None and not np.array_equal(ga.times, gb.times):
        raise ConfigurationError("ensembles live on different grids")
    if sa.shape != sb.shape or sa.shape[1] != g.n_times:
        raise ConfigurationError("shape mismatch between the two path families")
    prod = np.diff(sa, axis=1) * np.diff(sb, axis=1)
    cum = np.zeros_like(sa)
    np.cumsum(prod, axis=1, out=cum[:, 1:])
    rate = prod / g.steps[None, :]
    n = sa.shape[0]
    se = rate.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros(rate.shape[1])
    return CovariationResult(g, cum, rate.mean(axis=0), se)


# ---------------------------------------------------------------------------
# Nelson-style derivative estimation


def _silverman_bandwidth(states: np.ndarray) -> np.ndarray:
    """Rule-of-thumb bandwidth per conditioning dimension."""
    n, d = states.shape
    out = np.empty(d)
    for j in range(d):
        col = states[:, j]
        sd = col.std(ddof=1) if n > 1 else 0.0
        iqr = np.subtract(*np.percentile(col, [75, 25]))
        spread = min(sd, iqr / 1.34) if iqr > 0 else sd
        if d == 1:
            out[j] = 0.9 * spread * n ** (-0.2)
        else:
            out[j] = spread * (4.0 / ((d + 2) * n)) ** (1.0 / (d + 4))
    return out


@dataclass(frozen=True, eq=False)
class NelsonEstimator:
    """Conditional difference-quotient estimator returned by nelson_derivative.

    Calling it with one state (d,) or a batch (m, d) yields the estimated
    derivative vectors.  evaluate() also returns standard errors and effective
    kernel sample sizes.
    """

    states: np.ndarray            # (n_paths, d) conditioning states
    quotients: np.ndarray         # (n_paths, out_dim)
    bandwidth: np.ndarray         # (d,) zero entries mean "uniform weights"
    conditioning: str
    min_effective: float = 30.0

    def __call__(self, state) -> np.ndarray:
        return self.evaluate(state)[0]

    def evaluate(self, state) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        q = np.atleast_2d(np.asarray(state, dtype=np.float64))
        if q.shape[1] != self.states.shape[1]:
            raise ConfigurationError(
                f"query states have dim {q.shape[1]}, expected {self.states.shape[1]}"
            )
        est = np.empty((q.shape[0], self.quotients.shape[1]))
        se = np.empty_like(est)
        neff = np.empty(q.shape[0])
        for i, point in enumerate(q):
            est[i], se[i], neff[i] = self._at(point)
        return est, se, neff

    def _at(self, point: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
        x, y = self.states, self.quotients
        n = x.shape[0]
        if self.conditioning == "analytic" or np.all(self.bandwidth == 0):
            mean = y.mean(axis=0)
            se = y.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros(y.shape[1])
            return mean, se, float(n)
        u = (x - point[None, :]) / self.bandwidth[None, :]
        logw = -0.5 * np.einsum("ij,ij->i", u, u)
        w = np.exp(logw - logw.max())
        sw = w.sum()
        neff = sw * sw / np.dot(w, w)
        if neff < self.min_effective:
            raise EstimationError(
                "kernel window too empty for a reliable conditional estimate",
                diagnostics={
                    "n_effective": float(neff),
                    "query": point.tolist(),
                    "bandwidth": self.bandwidth.tolist(),
                },
            )
        # local-linear fit; the intercept at the query point is the estimate
        z = np.concatenate([np.ones((n, 1)), x - point[None, :]], axis=1)
        zw = z * w[:, None]
        gram = z.T @ zw
        try:
            theta = np.linalg.solve(gram, zw.T @ y)        # (d+1, out_dim)
            smoother = np.linalg.solve(gram, zw.T)[0]      # (n,) intercept weights
            fitted = z @ theta
        except np.linalg.LinAlgError:
            smoother = w / sw
            fitted = np.broadcast_to(smoother @ y, y.shape)
        est = smoother @ y
        resid = y - fitted
        se = np.sqrt(np.maximum(0.0, (smoother**2) @ (resid**2)))
        return est, se, float(neff)


def nelson_derivative(
    ensemble: PathEnsemble,
    t: float,
    mode: str = "mean",
    conditioning: str = "present",
    bandwidth: float | np.ndarray | None = None,
    min_effective: float = 30.0,
    markov: bool = True,
) -> NelsonEstimator:
    """Forward, backward, or mean stochastic derivative estimator at time t.

    The forward quotient looks one grid step ahead, the backward quotient one
    step back, and the mean averages the two.  Conditioning "present" builds a
    Gaussian-kernel local-linear regression on the time-t state, which is the
    valid replacement for past/future conditioning precisely in the Markov
    case; "analytic" uses the plain cross-path average (appropriate for
    deterministic or state-independent targets).

    Parameters
    ----------
    mode : {"forward", "backward", "mean"}
    conditioning : {"present", "analytic"}
    bandwidth : optional override of the per-dimension Silverman bandwidth.
    markov : callers must leave this True; passing False is an explicit
        declaration that present-state conditioning is invalid for the input.
    """
    if mode not in ("forward", "backward", "mean"):
        raise ConfigurationError(f"unknown derivative mode {mode!r}")
    if conditioning not in ("present", "analytic"):
        raise ConfigurationError(f"unknown conditioning {conditioning!r}")
    if not markov:
        raise ConfigurationError(
            "present-state conditioning is undefined for declared non-Markov input"
        )
    grid = ensemble.grid
    idx = grid.index_of(t)
    need_fwd = mode in ("forward", "mean")
    need_bwd = mode in ("backward", "mean")
    if need_fwd and idx >= grid.n_times - 1:
        raise DomainError("forward quotient needs a grid node after t")
    if need_bwd and idx == 0:
        raise DomainError("backward quotient needs a grid node before t")
    v = ensemble.values
    quot = None
    if need_fwd:
        h = grid.times[idx + 1] - grid.times[idx]
        quot = (v[:, idx + 1, :] - v[:, idx, :]) / h
    if need_bwd:
        h = grid.times[idx] - grid.times[idx - 1]
        back = (v[:, idx, :] - v[:, idx - 1, :]) / h
        quot = back if quot is None else 0.5 * (quot + back)
    states = v[:, idx, :]
    if bandwidth is not None:
        bw = np.broadcast_to(
            np.atleast_1d(np.asarray(bandwidth, dtype=np.float64)), (states.shape[1],)
        ).copy()
    else:
        bw = _silverman_bandwidth(states)
    return NelsonEstimator(
        states=states,
        quotients=quot,
        bandwidth=bw,
        conditioning=conditioning,
        min_effective=min_effective,
    )


# ---------------------------------------------------------------------------
# Martingale diagnostics


@dataclass(frozen=True, eq=False)
class MartingaleResidual:
    residual: float
    se: float
    bins: list

    @property
    def z(self) -> float:
        if self.se == 0.0:
            return float("inf") if self.residual != 0.0 else 0.0
        return self.residual / self.se


def conditional_bin_table(
    states: np.ndarray, samples: np.ndarray, n_bins: int = 10, min_bin: int = 50
) -> list:
    """Equal-count state bins with the per-bin sample mean and its SE.

    A degenerate state (all values equal within rounding) collapses to one
    unconditional bin.  Bins are always nonempty.
    """
    n = samples.size
    spread = states.max() - states.min()
    if spread <= 1e-12 * (1.0 + abs(states[0])) or n_bins <= 1:
        groups = [np.arange(n)]
        edges = [(float(states.min()), float(states.max()))]
    else:
        k = min(n_bins, max(1, n // max(min_bin, 1)))
        qs_edges = np.quantile(states, np.linspace(0, 1, k + 1))
        qs_edges[-1] = np.nextafter(qs_edges[-1], np.inf)
        which = np.clip(np.digitize(states, qs_edges) - 1, 0, k - 1)
        groups, edges = [], []
        for b in range(k):
            members = np.nonzero(which == b)[0]
            if members.size == 0:
                continue
            groups.append(members)
            edges.append((float(qs_edges[b]), float(qs_edges[b + 1])))
    table = []
    for (lo, hi), members in zip(edges, groups):
        d = samples[members]
        m = float(d.mean())
        se = float(d.std(ddof=1) / np.sqrt(d.size)) if d.size > 1 else 0.0
        table.append({"lo": lo, "hi": hi, "count": int(d.size), "mean": m, "se": se})
    return table


def martingale_residual(
    ensemble: PathEnsemble,
    t: float,
    s: float,
    n_bins: int = 10,
    min_bin: int = 50,
) -> MartingaleResidual:
    """Worst conditional drift E[Q_s - Q_t | Q_t in bin] across state bins.

    Bins are equal-count in the time-t state.  A degenerate state (all paths
    equal, e.g. t = 0) collapses to the unconditional mean.  Returns the
    largest-magnitude bin residual with its standard error.
    """
    if ensemble.dim != 1:
        raise ConfigurationError("martingale_residual expects a dim-1 ensemble")
    if not s > t:
        raise ConfigurationError("need s > t")
    qt = ensemble.at_time(t)[:, 0]
    qs = ensemble.at_time(s)[:, 0]
    table = conditional_bin_table(qt, qs - qt, n_bins, min_bin)
    worst = max(table, key=lambda row: abs(row["mean"]))
    return MartingaleResidual(worst["mean"], worst["se"], table)


# ---------------------------------------------------------------------------
# Interchange formats


def write_ensemble(path: str | os.PathLike, ensemble: PathEnsemble) -> None:
    """Flat binary layout: [n_paths, n_times, dim] + grid + row-major values,
    all 64-bit floats."""
    header = np.array(
        [ensemble.n_paths, ensemble.n_times, ensemble.dim], dtype=np.float64
    )
    with open(path, "wb") as fh:
        header.tofile(fh)
        ensemble.grid.times.tofile(fh)
        np.ascontiguousarray(ensemble.values).tofile(fh)


def read_ensemble(path: str | os.PathLike) -> PathEnsemble:
    raw = np.fromfile(path, dtype=np.float64)
    if raw.size < 5:
        raise ConfigurationError("ensemble file too short")
    n_paths, n_times, dim = (int(round(x)) for x in raw[:3])
    expected = 3 + n_times + n_paths * n_times * dim
    if n_paths < 1 or n_times < 2 or dim < 1 or raw.size != expected:
        raise ConfigurationError(
            f"ensemble file is inconsistent (header says {n_paths}x{n_times}x{dim})"
        )
    grid = TimeGrid(raw[3 : 3 + n_times])
    values = raw[3 + n_times :].reshape(n_paths, n_times, dim)
    return PathEnsemble(grid, values)


def _format_float(x: float) -> str:
    return repr(float(x))


def write_ensemble_csv(path: str | os.PathLike, ensemble: PathEnsemble) -> None:
    """Long-format CSV (path, t, component, value) for small ensembles."""
    with open(path, "w", newline="\n") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["path", "t", "component", "value"])
        times = ensemble.grid.times
        for p in range(ensemble.n_paths):
            for i in range(ensemble.n_times):
                for j in range(ensemble.dim):
                    writer.writerow(
                        [p, _format_float(times[i]), j,
                         _format_float(ensemble.values[p, i, j])]
                    )


def read_ensemble_csv(path: str | os.PathLike) -> PathEnsemble:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["path", "t", "component", "value"]:
        raise ConfigurationError("unrecognized ensemble CSV header")
    body = rows[1:]
    if not body:
        raise ConfigurationError("ensemble CSV has no data rows")
    paths = sorted({int(r[0]) for r in body})
    times = sorted({float(r[1]) for r in body})
    comps = sorted({int(r[2]) for r in body})
    values = np.full((len(paths), len(times), len(comps)), np.nan)
    p_ix = {p: i for i, p in enumerate(paths)}
    t_ix = {t: i for i, t in enumerate(times)}
    for r in body:
        values[p_ix[int(r[0])], t_ix[float(r[1])], int(r[2])] = float(r[3])
    if np.any(np.isnan(values)):
        raise ConfigurationError("ensemble CSV is missing cells")
    return PathEnsemble(TimeGrid(np.array(times)), values)
