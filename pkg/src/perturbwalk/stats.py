"""Estimators, fits and goodness-of-fit checks over batches of trajectories."""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field, fields, replace
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import stats as sps

from . import rng
from .engine import WalkSpec, indicator, run_batch_arrays
from .errors import DegenerateCovariance, InsufficientData
from .lattice import ScalingSequence, compute_scaling


@dataclass(frozen=True)
class Thresholds:
    """Every pass/fail threshold used by the verdicts, in one place.

    These are engineering choices: the limit theorems say nothing about the
    size of the o(1) terms at the horizons a desk run can reach.
    """

    log_r2: float = 0.95
    power_exponent_max: float = 0.2
    max_rel_stderr: float = 0.1
    min_decades: float = 2.0
    cov_tol: float = 0.05
    cov_tol_perturbed: float = 0.10
    # loose because the L-type scaling carries slowly decaying log corrections
    ks_max: float = 0.1
    chi2_p_min: float = 0.001
    coupling_final_ratio: float = 0.5
    order_sigmas: float = 2.0

    def with_overrides(self, overrides: dict | None) -> "Thresholds":
        if not overrides:
            return self
        known = {f.name for f in fields(self)}
        unknown = set(overrides) - known
        if unknown:
            raise KeyError(f"unknown threshold(s): {sorted(unknown)}")
        return replace(self, **{k: float(v) for k, v in overrides.items()})

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


DEFAULT_THRESHOLDS = Thresholds()


# ---------------------------------------------------------------------------
# mergeable estimator state


def _signed_sum(a: Counter, b: Counter) -> Counter:
    # Counter.__add__ drops nonpositive totals; displacement sums can be negative
    out = Counter(a)
    out.update(b)
    return out


@dataclass
class EstimatorState:
    """Exact integer sums plus value histograms; merging is exact.

    Because the tracked statistics are integers, sums and sums of squares are
    kept as Python ints and the histograms give exact empirical quantiles, so
    ``merge`` is commutative and associative bit for bit.
    """

    d: int
    count: int = 0
    sums: Counter = field(default_factory=Counter)
    sumsq: Counter = field(default_factory=Counter)
    histograms: dict[str, Counter] = field(default_factory=dict)
    endpoints: Counter = field(default_factory=Counter)
    cross: Counter = field(default_factory=Counter)  # sum of x_a * x_b for a <= b
    mergeable: bool = True

    def _add_column(self, name: str, values: np.ndarray) -> None:
        values = np.asarray(values, dtype=np.int64)
        self.sums[name] += sum(int(v) for v in values)
        self.sumsq[name] += sum(int(v) * int(v) for v in values)
        hist = self.histograms.setdefault(name, Counter())
        uniq, cnt = np.unique(values, return_counts=True)
        for v, c in zip(uniq.tolist(), cnt.tolist()):
            hist[v] += c

    def add_arrays(self, arrays: dict, start: Sequence[int] | None = None) -> "EstimatorState":
        """Fold in the column arrays of one summary or coupled batch."""
        if "endpoint" in arrays:
            ends = arrays["endpoint"]
            cols = {"rho": arrays["rho"], "nu": arrays["nu"], "outside": arrays["outside"], "max_norm": arrays["max_norm"]}
            if (arrays["nubar"] >= 0).all():
                cols["nu_bar"] = arrays["nubar"]
            elif (arrays["nubar"] >= 0).any():
                raise InsufficientData("nu-bar was cut off for some trajectories; raise the cap")
        else:
            ends = arrays["x_endpoint"]
            cols = {"rho": arrays["rho"], "sup_distance": arrays["sup_distance"]}
        for name, values in cols.items():
            self._add_column(name, values)
        disp = np.asarray(ends, dtype=np.int64) - (0 if start is None else np.asarray(start, dtype=np.int64))
        for a in range(self.d):
            self._add_column(f"x{a}", disp[:, a])
            for b in range(a, self.d):
                self.cross[(a, b)] += sum(int(u) * int(v) for u, v in zip(disp[:, a], disp[:, b]))
        for row in map(tuple, np.asarray(ends).tolist()):
            self.endpoints[row] += 1
        self.count += len(ends)
        return self

    def merge(self, other: "EstimatorState") -> "EstimatorState":
        if other.d != self.d:
            raise ValueError("cannot merge states of different dimension")
        hist = {k: Counter(v) for k, v in self.histograms.items()}
        for k, v in other.histograms.items():
            hist.setdefault(k, Counter()).update(v)
        return EstimatorState(
            d=self.d,
            count=self.count + other.count,
            sums=_signed_sum(self.sums, other.sums),
            sumsq=_signed_sum(self.sumsq, other.sumsq),
            histograms=hist,
            endpoints=_signed_sum(self.endpoints, other.endpoints),
            cross=_signed_sum(self.cross, other.cross),
        )

    def __eq__(self, other) -> bool:
        if not isinstance(other, EstimatorState):
            return NotImplemented
        return (
            self.d == other.d
            and self.count == other.count
            and self.sums == other.sums
            and self.sumsq == other.sumsq
            and self.histograms == other.histograms
            and self.endpoints == other.endpoints
            and self.cross == other.cross
        )

    def mean(self, name: str) -> float:
        return self.sums[name] / self.count

    def variance(self, name: str) -> float:
        n = self.count
        if n < 2:
            return 0.0
        return (n * self.sumsq[name] - self.sums[name] ** 2) / (n * (n - 1))

    def stderr(self, name: str) -> float:
        return math.sqrt(self.variance(name) / self.count) if self.count else math.inf

    def quantile(self, name: str, q: float) -> int:
        """Smallest value v with at least ``q * count`` observations <= v."""
        target = q * self.count
        seen = 0
        for v in sorted(self.histograms[name]):
            seen += self.histograms[name][v]
            if seen >= target:
                return v
        raise InsufficientData("empty histogram")

    def covariance(self) -> np.ndarray:
        """Sample covariance of the endpoint displacement."""
        n = self.count
        cov = np.empty((self.d, self.d))
        for a in range(self.d):
            for b in range(a, self.d):
                num = n * self.cross[(a, b)] - self.sums[f"x{a}"] * self.sums[f"x{b}"]
                cov[a, b] = cov[b, a] = num / (n * (n - 1))
        return cov

    def to_dict(self) -> dict:
        return {
            "count": self.count,
            "means": {k: self.mean(k) for k in sorted(self.sums)},
            "stderr": {k: self.stderr(k) for k in sorted(self.sums)},
        }


def collect(
    spec: WalkSpec,
    trajectories: int,
    *,
    coupled: bool = False,
    workers: int = 1,
    nubar: bool = True,
    backend: str | None = None,
) -> EstimatorState:
    arrays = run_batch_arrays(spec, trajectories, coupled=coupled, workers=workers, nubar=nubar, backend=backend)
    return EstimatorState(spec.d).add_arrays(arrays, spec.start)


def grid_spec(spec: WalkSpec, n: int) -> WalkSpec:
    """``spec`` moved to horizon ``n`` with its own derived seed, so grid points are independent."""
    return spec.replace(horizon=int(n), seed=rng.derive_seed(spec.seed, int(n)))


def collect_grid(
    spec: WalkSpec,
    n_grid: Sequence[int],
    trajectories: int,
    *,
    coupled: bool = False,
    workers: int = 1,
    backend: str | None = None,
) -> list[EstimatorState]:
    return [collect(grid_spec(spec, n), trajectories, coupled=coupled, workers=workers, backend=backend) for n in n_grid]


# ---------------------------------------------------------------------------
# fits


@dataclass(frozen=True)
class GridPoint:
    n: int
    mean: float
    stderr: float
    q50: float
    q90: float


@dataclass(frozen=True)
class Fit:
    """y = a + b log n ("log") or y = a n^p ("power", fitted in log-log)."""

    model: str
    coefficients: tuple[float, float]
    stderr: tuple[float, float]
    r_squared: float

    def to_dict(self) -> dict:
        return {"model": self.model, "coefficients": list(self.coefficients), "stderr": list(self.stderr), "r_squared": self.r_squared}


def _ols_weights(x: np.ndarray) -> np.ndarray:
    # rows give (intercept, slope) as linear functionals of y
    design = np.column_stack([np.ones_like(x), x])
    return np.linalg.pinv(design)


def fit_log(n: Sequence[float], y: Sequence[float], se: Sequence[float] | None = None) -> Fit:
    """Least squares y = a + b log n.

    Standard errors propagate the Monte Carlo error ``se`` of each point
    through the fit; without ``se`` they are the usual residual-based ones.
    """
    x = np.log(np.asarray(n, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    res = sps.linregress(x, y)
    if se is None:
        errs = (float(res.intercept_stderr), float(res.stderr))
    else:
        w = _ols_weights(x)
        s2 = np.asarray(se, dtype=np.float64) ** 2
        errs = tuple(float(math.sqrt(np.sum(row**2 * s2))) for row in w)
    r2 = float(res.rvalue**2) if np.ptp(y) > 0 else 0.0
    return Fit("log", (float(res.intercept), float(res.slope)), errs, r2)


def fit_power(n: Sequence[float], y: Sequence[float]) -> Fit:
    y = np.asarray(y, dtype=np.float64)
    if (y <= 0).any():
        raise InsufficientData("power fit needs positive estimates")
    res = sps.linregress(np.log(np.asarray(n, dtype=np.float64)), np.log(y))
    return Fit(
        "power",
        (float(math.exp(res.intercept)), float(res.slope)),
        (float(res.intercept_stderr), float(res.stderr)),
        float(res.rvalue**2),
    )


@dataclass
class FitReport:
    fit: Fit
    grid: list[GridPoint]
    verdict: str
    passed: bool
    power: Fit | None = None
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "fit": self.fit.to_dict(),
            "power": None if self.power is None else self.power.to_dict(),
            "grid": [g.__dict__ for g in self.grid],
            "verdict": self.verdict,
            "passed": self.passed,
            "details": self.details,
        }

    def csv_rows(self) -> list[tuple]:
        return [(g.n, g.mean, g.stderr, g.q50, g.q90) for g in self.grid]


CSV_HEADER = ("n", "mean", "stderr", "q50", "q90")


def _check_grid(n_grid: Sequence[int], thresholds: Thresholds) -> list[int]:
    grid = [int(n) for n in n_grid]
    if len(grid) < 2 or any(b <= a for a, b in zip(grid, grid[1:])):
        raise InsufficientData("grid must hold at least two strictly increasing horizons")
    if grid[0] < 1 or math.log10(grid[-1] / grid[0]) < thresholds.min_decades - 1e-12:
        raise InsufficientData(f"grid must span at least {thresholds.min_decades:g} decades")
    return grid


def _grid_points(grid, states, name) -> list[GridPoint]:
    return [
        GridPoint(n, s.mean(name), s.stderr(name), float(s.quantile(name, 0.5)), float(s.quantile(name, 0.9)))
        for n, s in zip(grid, states)
    ]


def _require_precision(points: list[GridPoint], thresholds: Thresholds, name: str) -> None:
    for g in points:
        if g.mean == 0 or g.stderr / abs(g.mean) > thresholds.max_rel_stderr:
            raise InsufficientData(f"{name} at n={g.n}: relative stderr above {thresholds.max_rel_stderr:g}")


def _log_verdict(points: list[GridPoint], thresholds: Thresholds) -> tuple[Fit, Fit, bool]:
    n = [g.n for g in points]
    y = [g.mean for g in points]
    log_fit = fit_log(n, y, [g.stderr for g in points])
    power = fit_power(n, y)
    ok = log_fit.r_squared > thresholds.log_r2 and power.coefficients[1] < thresholds.power_exponent_max
    return log_fit, power, ok


def occupation_growth(
    spec: WalkSpec,
    n_grid: Sequence[int],
    trajectories: int,
    *,
    thresholds: Thresholds = DEFAULT_THRESHOLDS,
    states: list[EstimatorState] | None = None,
    workers: int = 1,
    backend: str | None = None,
) -> FitReport:
    """Estimate E rho_n along the grid and test for logarithmic growth."""
    grid = _check_grid(n_grid, thresholds)
    if states is None:
        states = collect_grid(spec, grid, trajectories, workers=workers, backend=backend)
    points = _grid_points(grid, states, "rho")
    _require_precision(points, thresholds, "rho")
    log_fit, power, ok = _log_verdict(points, thresholds)
    verdict = "consistent with O(log n)" if ok else "not consistent with O(log n)"
    details = {"slope_over_stderr": log_fit.coefficients[1] / log_fit.stderr[1] if log_fit.stderr[1] > 0 else math.inf}
    return FitReport(log_fit, points, verdict, ok, power, details)


def entrance_counts(
    spec: WalkSpec,
    n_grid: Sequence[int],
    trajectories: int,
    *,
    thresholds: Thresholds = DEFAULT_THRESHOLDS,
    states: list[EstimatorState] | None = None,
    workers: int = 1,
    backend: str | None = None,
) -> FitReport:
    """Estimate E nu_n and E nu-bar_n; check the ordering and fit nu-bar against log n."""
    grid = _check_grid(n_grid, thresholds)
    if states is None:
        states = collect_grid(spec, grid, trajectories, workers=workers, backend=backend)
    nu = _grid_points(grid, states, "nu")
    nubar = _grid_points(grid, states, "nu_bar")
    _require_precision(nubar, thresholds, "nu_bar")
    ordering = []
    for a, b in zip(nu, nubar):
        margin = thresholds.order_sigmas * math.hypot(a.stderr, b.stderr)
        ordering.append({"n": a.n, "nu": a.mean, "nu_bar": b.mean, "margin": margin, "ok": a.mean <= b.mean + margin})
    order_ok = all(o["ok"] for o in ordering)
    log_fit, power, log_ok = _log_verdict(nubar, thresholds)
    ok = order_ok and log_ok
    verdict = ("ordering holds" if order_ok else "ordering violated") + "; " + (
        "nu-bar consistent with O(log n)" if log_ok else "nu-bar not consistent with O(log n)"
    )
    return FitReport(log_fit, nubar, verdict, ok, power, {"ordering": ordering, "nu": [g.__dict__ for g in nu]})


def coupling_distance(
    spec: WalkSpec,
    n_grid: Sequence[int],
    trajectories: int,
    *,
    scaling: ScalingSequence | None = None,
    thresholds: Thresholds = DEFAULT_THRESHOLDS,
    states: list[EstimatorState] | None = None,
    workers: int = 1,
    backend: str | None = None,
) -> FitReport:
    """Median and 0.9-quantile of sup_i ||X_i - Z_i|| / B_n along the grid.

    "vanishing" when both strictly decrease and the last median is below
    ``coupling_final_ratio`` times the first.
    """
    grid = [int(n) for n in n_grid]
    if len(grid) < 2 or trajectories < 10:
        raise InsufficientData("need at least two horizons and ten trajectories")
    scaling = scaling or compute_scaling(spec.base_law)
    if states is None:
        states = collect_grid(spec, grid, trajectories, coupled=True, workers=workers, backend=backend)
    points = []
    for n, s in zip(grid, states):
        b = scaling(n)
        points.append(
            GridPoint(n, s.mean("sup_distance") / b, s.stderr("sup_distance") / b,
                      s.quantile("sup_distance", 0.5) / b, s.quantile("sup_distance", 0.9) / b)
        )
    med = [g.q50 for g in points]
    q90 = [g.q90 for g in points]
    if not len(spec.impurities):
        return FitReport(fit_log(grid, med), points, "identical paths", all(m == 0 for m in med))

    def decreasing(v):
        return all(b < a for a, b in zip(v, v[1:]))

    ok = decreasing(med) and decreasing(q90) and med[-1] < thresholds.coupling_final_ratio * med[0]
    details = {"median": med, "q90": q90}
    return FitReport(fit_log(grid, med), points, "vanishing" if ok else "not vanishing", ok, None, details)


# ---------------------------------------------------------------------------
# goodness of fit


def ks_statistic(samples: Iterable[float], cdf: Callable[[np.ndarray], np.ndarray]) -> float:
    """sup_x |F_m(x) - F(x)| for a continuous target CDF, via one sort."""
    x = np.sort(np.asarray(list(samples) if not isinstance(samples, np.ndarray) else samples, dtype=np.float64))
    m = len(x)
    if m == 0:
        raise InsufficientData("no samples")
    f = np.asarray(cdf(x), dtype=np.float64)
    i = np.arange(1, m + 1)
    return float(max(np.max(i / m - f), np.max(f - (i - 1) / m)))


def chi_square_gof(counts: np.ndarray, probs: np.ndarray, total: int | None = None) -> tuple[float, float]:
    """Pearson statistic and p-value of observed counts against expected probabilities.

    With ``total`` larger than the observed counts, or ``probs`` summing to
    less than one, the remainder becomes one extra pooled cell.
    """
    obs = np.asarray(counts, dtype=np.float64)
    probs = np.asarray(probs, dtype=np.float64)
    total = obs.sum() if total is None else float(total)
    exp = probs * total
    rest = 1.0 - probs.sum()
    if rest > 1e-12:
        obs = np.append(obs, total - obs.sum())
        exp = np.append(exp, rest * total)
    stat = float(np.sum((obs - exp) ** 2 / exp))
    return stat, float(sps.chi2.sf(stat, len(obs) - 1))


_IQR_NORMAL = 2.0 * float(sps.norm.ppf(0.75))


def robust_scale(values: np.ndarray) -> float:
    """Normal standard deviation matching the interquartile range.

    The sample variance is useless as a KS target when the increments have
    infinite variance: one long jump among 10^4 endpoints inflates it well
    beyond the width of the bulk.  The quartiles do not care.
    """
    values = np.asarray(values, dtype=np.float64)
    q1, q3 = np.quantile(values, [0.25, 0.75])
    if q3 > q1:
        return float(q3 - q1) / _IQR_NORMAL
    # quartiles on one lattice point: nothing robust left to measure
    return float(np.std(values, ddof=1))


def _frobenius_rel(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))


@dataclass
class FcltReport:
    n: int
    b_n: float
    probes: list[float]
    sigma_hat: list[np.ndarray]
    ks: list[list[float]]
    independence_p: list[float]
    cov_error: float | None
    cov_tol: float | None
    verdicts: dict[str, bool]
    ks_scales: list[list[float]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(self.verdicts.values())

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "b_n": self.b_n,
            "probes": self.probes,
            "sigma_hat": [s.tolist() for s in self.sigma_hat],
            "ks": self.ks,
            "ks_scales": self.ks_scales,
            "independence_p": self.independence_p,
            "cov_error": self.cov_error,
            "cov_tol": self.cov_tol,
            "verdicts": self.verdicts,
            "passed": self.passed,
        }


def _quartile_table(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    def bins(v):
        edges = np.quantile(v, [0.25, 0.5, 0.75])
        return np.searchsorted(edges, v, side="right")

    table = np.zeros((4, 4), dtype=np.int64)
    np.add.at(table, (bins(a), bins(b)), 1)
    return table[table.sum(axis=1) > 0][:, table.sum(axis=0) > 0]


def fclt_check(
    spec: WalkSpec,
    scaling: ScalingSequence,
    n: int,
    trajectories: int,
    t_probes: Sequence[float] = (0.5, 1.0),
    *,
    expected_cov: np.ndarray | None = None,
    cov_tol: float | None = None,
    thresholds: Thresholds = DEFAULT_THRESHOLDS,
    workers: int = 1,
    backend: str | None = None,
) -> FcltReport:
    """Finite-dimensional check of X_[nt] / B_n at the probe times.

    Per probe: covariance estimate divided by t, a per-axis KS distance to
    the centered normal with a robust estimate of the axis scale, and, between
    consecutive probes, a chi-square test of independence of the increments
    (quartile bins, first axis).
    """
    if trajectories < 1000:
        raise InsufficientData("fclt_check needs at least 1000 trajectories")
    probes = sorted(float(t) for t in t_probes)
    if not probes or probes[0] <= 0 or probes[-1] > 1:
        raise ValueError("probes must lie in (0, 1]")
    steps = [max(1, int(math.floor(n * t))) for t in probes]
    arrays = run_batch_arrays(spec.replace(horizon=n), trajectories, checkpoints=steps, nubar=False,
                              workers=workers, backend=backend)
    b_n = scaling(n)
    pos = (arrays["checkpoints"] - np.asarray(spec.start, dtype=np.int64)).astype(np.float64) / b_n
    sigma, ks, ks_scales = [], [], []
    for j, t in enumerate(probes):
        y = pos[:, j, :]
        cov = np.cov(y, rowvar=False) / t
        if np.linalg.matrix_rank(cov) < spec.d:
            raise DegenerateCovariance(f"estimated covariance at t={t:g} is rank deficient")
        sigma.append(cov)
        row, sds = [], []
        for a in range(spec.d):
            sd = robust_scale(y[:, a])
            sds.append(sd)
            row.append(ks_statistic(y[:, a], lambda v, sd=sd: sps.norm.cdf(v, scale=sd)))
        ks.append(row)
        ks_scales.append(sds)
    indep = []
    for j in range(1, len(probes)):
        first = pos[:, j - 1, 0]
        incr = pos[:, j, 0] - first
        indep.append(float(sps.chi2_contingency(_quartile_table(first, incr))[1]))
    verdicts = {
        "ks": all(v < thresholds.ks_max for row in ks for v in row),
        "independence": all(p > thresholds.chi2_p_min for p in indep),
    }
    err = None
    if expected_cov is not None:
        cov_tol = thresholds.cov_tol if cov_tol is None else cov_tol
        err = _frobenius_rel(sigma[-1], np.asarray(expected_cov, dtype=np.float64))
        verdicts["covariance"] = err < cov_tol
    return FcltReport(n, b_n, probes, sigma, ks, indep, err, cov_tol, verdicts, ks_scales)


# ---------------------------------------------------------------------------
# block structure of one path


@dataclass(frozen=True)
class Blocks:
    """Alternating run lengths of the indicator 1{X_i in K_N}, i = 0..n.

    ``etas[i]`` is the outside run before the i-th inside run ``xis[i]``
    (zero if the path starts inside); a trailing outside run, if any, is
    the extra last entry of ``etas``.
    """

    etas: tuple[int, ...]
    xis: tuple[int, ...]

    @property
    def pairs(self) -> list[tuple[int, int]]:
        return list(zip(self.etas, self.xis))

    @property
    def rho(self) -> int:
        return sum(self.xis)

    @property
    def entrances(self) -> int:
        return len(self.xis)


def block_decomposition(path: np.ndarray, n_box: int) -> Blocks:
    ind = indicator(np.asarray(path), n_box).astype(np.int8)
    edges = np.flatnonzero(np.diff(ind)) + 1
    bounds = np.concatenate(([0], edges, [len(ind)]))
    lengths = np.diff(bounds).tolist()
    values = ind[bounds[:-1]].tolist()
    etas, xis = [], []
    pending = 0
    for v, length in zip(values, lengths):
        if v:
            etas.append(pending)
            xis.append(length)
            pending = 0
        else:
            pending = length
    if pending or not xis:
        etas.append(pending)
    return Blocks(tuple(etas), tuple(xis))
