"""Exact small-horizon oracles: box convolution, taboo survival, renewal sums.

Everything here is deterministic and works on dense arrays over the box
``[-R, R]^d``.  Mass that leaves the box is not lost silently; it is tracked
in ``leaked`` and the caller is told when it gets too large to trust.
"""
from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, field
from fractions import Fraction
from typing import BinaryIO, Iterable, Sequence, TextIO

import numpy as np
from scipy import special, stats

from .engine import WalkSpec
from .errors import BoxTooSmall, NumericUnderflow
from .lattice import JumpLaw, LatticePoint, as_point, max_norm

LEAK_LIMIT = 0.01
RENEWAL_TOL = 1e-9

PMF_MAGIC = b"PPMF"
PMF_VERSION = 1
_PMF_HEADER = struct.Struct("<4sHHQ")


@dataclass(eq=False)
class LatticePmf:
    """Probabilities on the box ``[-box_radius, box_radius]^d``.

    ``mass[i_1, ..., i_d]`` is the probability of the site
    ``(i_1 - R, ..., i_d - R)``; ``leaked`` is the mass that left the box.
    """

    box_radius: int
    d: int
    mass: np.ndarray
    leaked: float = 0.0

    @classmethod
    def point(cls, site: Sequence[int], box_radius: int) -> "LatticePmf":
        site = as_point(site)
        if max_norm(site) > box_radius:
            raise BoxTooSmall(1.0, box_radius)
        mass = np.zeros((2 * box_radius + 1,) * len(site))
        mass[tuple(v + box_radius for v in site)] = 1.0
        return cls(box_radius, len(site), mass)

    def total(self) -> float:
        return math.fsum(self.mass.ravel())

    def prob(self, site: Sequence[int]) -> float:
        site = as_point(site, self.d)
        if max_norm(site) > self.box_radius:
            return 0.0
        return float(self.mass[tuple(v + self.box_radius for v in site)])

    def items(self) -> Iterable[tuple[LatticePoint, float]]:
        r = self.box_radius
        for idx in zip(*np.nonzero(self.mass)):
            yield tuple(int(i) - r for i in idx), float(self.mass[idx])

    def tv_distance(self, points: np.ndarray) -> float:
        """Total variation distance to the empirical law of ``points`` (rows are sites).

        Mass that leaked and points outside the box both count in full.
        """
        points = np.asarray(points, dtype=np.int64).reshape(-1, self.d)
        r = self.box_radius
        inside = np.abs(points).max(axis=1) <= r
        side = 2 * r + 1
        flat = np.ravel_multi_index(tuple((points[inside] + r).T), (side,) * self.d)
        emp = np.bincount(flat, minlength=side**self.d).astype(np.float64) / len(points)
        outside_emp = 1.0 - inside.mean()
        return 0.5 * (math.fsum(np.abs(emp - self.mass.ravel())) + abs(outside_emp - self.leaked))

    def to_csv(self, fh: TextIO) -> None:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([f"x{i + 1}" for i in range(self.d)] + ["prob"])
        for site, p in self.items():
            writer.writerow([*site, "%.17g" % p])

    @classmethod
    def from_csv(cls, fh: TextIO, box_radius: int) -> "LatticePmf":
        reader = csv.reader(fh)
        header = next(reader)
        d = len(header) - 1
        mass = np.zeros((2 * box_radius + 1,) * d)
        for row in reader:
            mass[tuple(int(v) + box_radius for v in row[:d])] = float(row[d])
        pmf = cls(box_radius, d, mass)
        pmf.leaked = max(0.0, 1.0 - pmf.total())
        return pmf

    def to_binary(self, fh: BinaryIO) -> None:
        """``PPMF`` header (magic, version u16, d u16, radius u64), then float64 LE, C order."""
        fh.write(_PMF_HEADER.pack(PMF_MAGIC, PMF_VERSION, self.d, self.box_radius))
        fh.write(np.ascontiguousarray(self.mass, dtype="<f8").tobytes())

    @classmethod
    def from_binary(cls, fh: BinaryIO) -> "LatticePmf":
        # the grid format carries no leak field; it is recovered from the total
        magic, version, d, radius = _PMF_HEADER.unpack(fh.read(_PMF_HEADER.size))
        if magic != PMF_MAGIC or version != PMF_VERSION:
            raise ValueError("not a PPMF grid")
        count = (2 * radius + 1) ** d
        mass = np.frombuffer(fh.read(8 * count), dtype="<f8").reshape((2 * radius + 1,) * d).copy()
        pmf = cls(int(radius), int(d), mass)
        pmf.leaked = max(0.0, 1.0 - pmf.total())
        return pmf


# ---------------------------------------------------------------------------
# transition operator on the box


@dataclass(eq=False)
class _BoxOperator:
    d: int
    box_radius: int
    base_jumps: np.ndarray
    base_probs: np.ndarray
    base_lost: float  # base mass on atoms too long to land in the box
    rows: dict[LatticePoint, tuple[np.ndarray, np.ndarray, float]] = field(default_factory=dict)

    def step(self, mass: np.ndarray) -> tuple[np.ndarray, float]:
        """One transition; returns the new box mass and the mass that left."""
        r = self.box_radius
        out = np.zeros_like(mass)
        src = mass
        special_mass = []
        if self.rows:
            src = mass.copy()
            for site in self.rows:
                idx = tuple(v + r for v in site)
                special_mass.append((site, src[idx]))
                src[idx] = 0.0
        leaked = self.base_lost * float(np.sum(src)) if self.base_lost else 0.0
        for jump, p in zip(self.base_jumps, self.base_probs):
            leaked += _shift_add(out, src, jump, p)
        for site, m in special_mass:
            if m == 0.0:
                continue
            jumps, probs, lost = self.rows[site]
            leaked += m * lost
            for jump, p in zip(jumps, probs):
                target = tuple(int(a + b) for a, b in zip(site, jump))
                if max_norm(target) <= r:
                    out[tuple(v + r for v in target)] += m * p
                else:
                    leaked += m * p
        return out, leaked


def _shift_add(out: np.ndarray, src: np.ndarray, jump: np.ndarray, p: float) -> float:
    """``out += p * src`` shifted by ``jump``; returns the mass shifted off the box."""
    side = src.shape[0]
    dst_sl, src_sl, off_sl = [], [], []
    for s in jump:
        s = int(s)
        if abs(s) >= side:
            return p * float(np.sum(src))
        if s >= 0:
            dst_sl.append(slice(s, side))
            src_sl.append(slice(0, side - s))
            off_sl.append(slice(side - s, side))
        else:
            dst_sl.append(slice(0, side + s))
            src_sl.append(slice(-s, side))
            off_sl.append(slice(0, -s))
    out[tuple(dst_sl)] += p * src[tuple(src_sl)]
    # disjoint slabs: kept on earlier axes, off the box on axis a
    lost = 0.0
    for a in range(len(jump)):
        if off_sl[a].start == off_sl[a].stop:
            continue
        sl = tuple(src_sl[:a]) + (off_sl[a],) + (slice(None),) * (len(jump) - a - 1)
        lost += float(np.sum(src[sl]))
    return p * lost


def _law_atoms_in_box(law: JumpLaw, box_radius: int) -> tuple[np.ndarray, np.ndarray, float]:
    # a jump longer than the box diameter cannot land inside it
    reach = 2 * box_radius
    if law.finite_support:
        jumps, probs = law.atoms()
        keep = np.abs(jumps).max(axis=1) <= reach
        return jumps[keep], probs[keep], math.fsum(probs[~keep])
    jumps, probs = law.atoms(reach)
    return jumps, probs, law.tail_prob(reach)


def _operator(law_or_spec: JumpLaw | WalkSpec, box_radius: int) -> tuple[_BoxOperator, LatticePoint]:
    if isinstance(law_or_spec, WalkSpec):
        spec = law_or_spec
        base, overrides, start = spec.base_law, spec.impurities.overrides, spec.start
    else:
        base, overrides, start = law_or_spec, {}, (0,) * law_or_spec.d
    if any(max_norm(s) > box_radius for s in overrides):
        raise BoxTooSmall(1.0, box_radius)
    jumps, probs, lost = _law_atoms_in_box(base, box_radius)
    rows = {site: _law_atoms_in_box(law, box_radius) for site, law in overrides.items()}
    return _BoxOperator(base.d, box_radius, jumps, probs, lost, rows), start


def _initial(start, initial: LatticePmf | None, d: int, box_radius: int) -> LatticePmf:
    if initial is not None:
        if initial.box_radius != box_radius or initial.d != d:
            raise ValueError("initial pmf has a different box or dimension")
        return LatticePmf(box_radius, d, initial.mass.copy(), initial.leaked)
    return LatticePmf.point(as_point(start, d), box_radius)


def n_step_pmf(
    law_or_spec: JumpLaw | WalkSpec,
    n: int,
    box_radius: int,
    *,
    start: Sequence[int] | None = None,
    initial: LatticePmf | None = None,
) -> LatticePmf:
    """Exact law of X_n on the box, applying impurity rows when given a spec.

    Raises :class:`BoxTooSmall` when more than 1% of the mass leaves the box.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    op, spec_start = _operator(law_or_spec, box_radius)
    pmf = _initial(spec_start if start is None else start, initial, op.d, box_radius)
    mass, leaked = pmf.mass, pmf.leaked
    for _ in range(n):
        mass, lost = op.step(mass)
        leaked += lost
    if leaked > LEAK_LIMIT:
        raise BoxTooSmall(leaked, box_radius)
    return LatticePmf(box_radius, op.d, mass, leaked)


def expected_occupation(spec: WalkSpec, n: int, box_radius: int) -> np.ndarray:
    """E_z(rho_k) for k = 0..n, by summing P(X_i in K_N) over the exact pmfs."""
    op, start = _operator(spec, box_radius)
    mass = LatticePmf.point(start, box_radius).mass
    r, nb = box_radius, spec.n_box
    core = tuple(slice(r - nb, r + nb + 1) for _ in range(spec.d))
    out = np.empty(n + 1)
    acc = float(np.sum(mass[core]))
    out[0] = acc
    leaked = 0.0
    for k in range(1, n + 1):
        mass, lost = op.step(mass)
        leaked += lost
        acc += float(np.sum(mass[core]))
        out[k] = acc
    if leaked > LEAK_LIMIT:
        raise BoxTooSmall(leaked, box_radius)
    return out


# ---------------------------------------------------------------------------
# taboo probabilities


@dataclass(frozen=True)
class SurvivalCurve:
    """``survival[k]`` is the mass still in the box that has avoided B for steps 1..k.

    ``leaked[k]`` is the mass lost across the box boundary by step k; its
    fate is unknown, so the exact survival lies in
    ``[survival[k], survival[k] + leaked[k]]``.
    """

    survival: np.ndarray
    leaked: np.ndarray


def taboo_survival_curve(
    law_or_spec: JumpLaw | WalkSpec,
    taboo: Iterable[Sequence[int]],
    n: int,
    box_radius: int,
    *,
    start: Sequence[int] | None = None,
    include_start: bool = False,
) -> SurvivalCurve:
    """P(T_B > k) for k = 0..n, or P(S_B > k) with ``include_start``.

    T_B counts hits at times k >= 1, S_B also at time 0.
    """
    op, spec_start = _operator(law_or_spec, box_radius)
    sites = [as_point(b, op.d) for b in taboo]
    if any(max_norm(b) > box_radius for b in sites):
        raise BoxTooSmall(1.0, box_radius)
    idx = tuple(np.array([v + box_radius for v in col]) for col in zip(*sites)) if sites else None
    mass = LatticePmf.point(spec_start if start is None else start, box_radius).mass
    if include_start and idx is not None:
        mass[idx] = 0.0
    survival = np.empty(n + 1)
    leaked = np.empty(n + 1)
    survival[0], leaked[0] = float(np.sum(mass)), 0.0
    lost_total = 0.0
    for k in range(1, n + 1):
        mass, lost = op.step(mass)
        lost_total += lost
        if idx is not None:
            mass[idx] = 0.0
        survival[k] = float(np.sum(mass))
        leaked[k] = lost_total
    if lost_total > LEAK_LIMIT:
        raise BoxTooSmall(lost_total, box_radius)
    return SurvivalCurve(survival, leaked)


def taboo_survival_dp(
    law_or_spec: JumpLaw | WalkSpec,
    taboo: Iterable[Sequence[int]],
    n: int,
    box_radius: int,
    *,
    start: Sequence[int] | None = None,
    include_start: bool = False,
) -> float:
    """P(T_B > n) by convolution with the mass entering B removed every step."""
    curve = taboo_survival_curve(law_or_spec, taboo, n, box_radius, start=start, include_start=include_start)
    return float(curve.survival[n])


def box_sites(n_box: int, d: int) -> list[LatticePoint]:
    """All lattice sites of K_N."""
    rng = range(-n_box, n_box + 1)
    return [tuple(p) for p in np.array(np.meshgrid(*([rng] * d), indexing="ij")).reshape(d, -1).T.tolist()]


def kesten_spitzer_ratio(
    law: JumpLaw, z: Sequence[int], n_box: int, horizons: Sequence[int], box_radius: int
) -> np.ndarray:
    """r(n) = P_z(T_{K_N} > n) / P_0(T_{0} > n) at each horizon."""
    n = max(horizons)
    d = law.d
    num = taboo_survival_curve(law, box_sites(n_box, d), n, box_radius, start=z).survival
    den = taboo_survival_curve(law, [(0,) * d], n, box_radius).survival
    return np.array([num[h] / den[h] for h in horizons])


# ---------------------------------------------------------------------------
# product-lazy closed form and the renewal recursion


def product_lazy_return(n: int) -> float:
    """u(n) = (C(2n, n) / 4^n)^2, evaluated in log space."""
    if n < 0:
        raise ValueError("n must be nonnegative")
    log_axis = math.lgamma(2 * n + 1) - 2.0 * math.lgamma(n + 1) - n * math.log(4.0)
    return math.exp(2.0 * log_axis)


def product_lazy_return_exact(n: int) -> Fraction:
    """Same value as an exact rational."""
    return Fraction(math.comb(2 * n, n) ** 2, 16**n)


def product_lazy_returns(n_max: int) -> np.ndarray:
    """u(0..n_max) for the product-lazy walk in d = 2."""
    n = np.arange(n_max + 1, dtype=np.float64)
    log_axis = special.gammaln(2 * n + 1) - 2.0 * special.gammaln(n + 1) - n * math.log(4.0)
    return np.exp(2.0 * log_axis)


def product_lazy_g() -> float:
    """Local limit constant 1/((2 pi) sqrt(det Gamma)) with Gamma = I/2."""
    return 1.0 / math.pi


def _check_u(u: np.ndarray) -> None:
    if len(u) == 0 or abs(u[0] - 1.0) > RENEWAL_TOL:
        raise NumericUnderflow("u(0) must be 1")
    if (u < -RENEWAL_TOL).any() or (u > 1.0 + RENEWAL_TOL).any():
        raise NumericUnderflow("u(k) must lie in [0, 1]")


def _renewal(u: np.ndarray, n_max: int) -> np.ndarray:
    r = np.empty(n_max + 1)
    r[0] = 1.0
    for n in range(1, n_max + 1):
        r[n] = 1.0 - np.dot(u[1 : n + 1], r[n - 1 :: -1])
        if r[n] < -RENEWAL_TOL or r[n] > r[n - 1] + RENEWAL_TOL:
            raise NumericUnderflow(
                f"R({n}) = {r[n]:.3g} breaks monotonicity or range; u is not a return-probability sequence"
            )
    return r


def survival_by_renewal(u: Sequence[float], n_max: int) -> np.ndarray:
    """R(0..n_max) from sum_{k<=n} u(k) R(n-k) = 1.

    Rejects inputs for which R leaves [0, 1] or increases; the identity only
    holds for genuine return-probability sequences.
    """
    u = np.asarray(u, dtype=np.float64)
    if len(u) < n_max + 1:
        u = np.concatenate([u, np.zeros(n_max + 1 - len(u))])
    _check_u(u)
    return _renewal(u, n_max)


def renewal_residual(u: Sequence[float], r: np.ndarray) -> np.ndarray:
    """sum_{k<=n} u(k) R(n-k) - 1 for each n (zero up to rounding)."""
    u = np.asarray(u, dtype=np.float64)
    return np.array([np.dot(u[: n + 1], r[n::-1]) - 1.0 for n in range(len(r))])


@dataclass(frozen=True)
class HybridSurvival:
    survival: np.ndarray
    splice: int  # first k that uses g / k^(d/2) instead of the exact u(k)
    g: float
    d: int

    @property
    def metadata(self) -> dict:
        return {"splice": self.splice, "g": self.g, "d": self.d, "tail": "g/k^(d/2)"}


def survival_hybrid(u_exact: Sequence[float], n_max: int, g: float, d: int = 2) -> HybridSurvival:
    """Renewal recursion with exact u(k) below the splice point and g/k^(d/2) above it."""
    u_exact = np.asarray(u_exact, dtype=np.float64)
    splice = len(u_exact)
    if n_max + 1 > splice:
        k = np.arange(splice, n_max + 1, dtype=np.float64)
        u = np.concatenate([u_exact, g * k ** (-d / 2.0)])
    else:
        u = u_exact[: n_max + 1]
    _check_u(u)
    return HybridSurvival(_renewal(u, n_max), splice, float(g), d)


@dataclass(frozen=True)
class PartialSums:
    c: np.ndarray
    verdict: str  # "bounded", "logarithmic" or "undetermined"
    slope: float
    intercept: float
    r_squared: float

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "slope": self.slope,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "n_max": len(self.c) - 1,
        }


BOUNDED_GROWTH = 0.05
LOG_R2 = 0.95


def c_n_partial_sums(u: Sequence[float]) -> PartialSums:
    """C_n = sum_{k<=n} u(k) with a growth verdict.

    "bounded" when C grows by under 5% over the last decade of n,
    "logarithmic" when a fit of C_n against log n has r^2 > 0.95.
    """
    u = np.asarray(u, dtype=np.float64)
    c = np.cumsum(u)
    n_max = len(c) - 1
    if n_max < 100:
        return PartialSums(c, "undetermined", math.nan, math.nan, math.nan)
    grid = np.unique(np.geomspace(10, n_max, 40).astype(np.int64))
    fit = stats.linregress(np.log(grid), c[grid])
    r2 = float(fit.rvalue**2)
    tenth = n_max // 10
    if c[n_max] - c[tenth] < BOUNDED_GROWTH * c[tenth]:
        verdict = "bounded"
    elif r2 > LOG_R2:
        verdict = "logarithmic"
    else:
        verdict = "undetermined"
    return PartialSums(c, verdict, float(fit.slope), float(fit.intercept), r2)
