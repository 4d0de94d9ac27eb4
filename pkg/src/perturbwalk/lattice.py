"""Lattice points, jump laws on Z^d, scaling sequences and law diagnostics."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import product
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import special

from .errors import (
    BadExponent,
    DegenerateLaw,
    DimensionMismatch,
    NonZeroMean,
    NotInDomain,
    NotNormalized,
)

LatticePoint = tuple[int, ...]

PROB_TOL = 1e-12
# Atoms with |k| <= TAIL_HEAD are tabulated for sampling; beyond it the
# magnitude is drawn by inverse CDF on the exact Hurwitz-zeta tail.
TAIL_HEAD = 1024
# Largest jump magnitude the sampler can return (doubles stay exact up to 2^53).
MAX_MAGNITUDE = 1 << 53


def as_point(x: Iterable[int], d: int | None = None) -> LatticePoint:
    p = tuple(int(v) for v in x)
    if d is not None and len(p) != d:
        raise DimensionMismatch(f"expected {d} coordinates, got {len(p)}")
    return p


def max_norm(x: Sequence[int]) -> int:
    return max((abs(int(v)) for v in x), default=0)


def unit(d: int, i: int, k: int = 1) -> LatticePoint:
    return tuple(k if j == i else 0 for j in range(d))


class Family(str, enum.Enum):
    TABLE = "table"
    AXIS_POWER_TAIL = "axis_power_tail"
    PRODUCT_LAZY = "product_lazy"


class LawClass(str, enum.Enum):
    FINITE_VARIANCE = "finite_variance"
    B_TYPE = "b_type"
    L_TYPE = "l_type"
    # Power tails with 1 < beta < 3 other than the L-type edge: attracted to a
    # non-normal stable law.  Only allowed as impurity rows.
    STABLE = "stable"


def _power_partial_sum(s: float, k_max: int) -> float:
    """sum_{k=1}^{k_max} k^{-s}."""
    if k_max < 1:
        return 0.0
    if s > 1.0:
        return float(special.zeta(s, 1) - special.zeta(s, k_max + 1))
    if s == 1.0:
        return float(special.digamma(k_max + 1) + np.euler_gamma)
    if k_max <= 10_000_000:
        k = np.arange(1, k_max + 1, dtype=np.float64)
        return math.fsum(k ** (-s))
    # Euler-Maclaurin with the continued Riemann zeta constant.
    x = float(k_max)
    return float(special.zeta(s)) + x ** (1 - s) / (1 - s) + 0.5 * x ** (-s) - s / 12.0 * x ** (-s - 1)


def hurwitz_tail(beta: float, m: float) -> float:
    """sum_{k >= m} k^{-beta} for large m, by Euler-Maclaurin.

    The sampling kernels evaluate this exact expression (same operation
    order) so both backends agree bit for bit; keep them in sync.
    """
    b = beta
    x = m
    return (
        x ** (1.0 - b) / (b - 1.0)
        + 0.5 * x ** (-b)
        + b / 12.0 * x ** (-b - 1.0)
        - b * (b + 1.0) * (b + 2.0) / 720.0 * x ** (-b - 3.0)
        + b * (b + 1.0) * (b + 2.0) * (b + 3.0) * (b + 4.0) / 30240.0 * x ** (-b - 5.0)
    )


@dataclass(frozen=True, eq=False)
class JumpLaw:
    """A probability law on jumps in Z^d.

    ``jumps``/``probs`` hold the explicit atoms.  For the axis power-tail
    family they hold only the hold atom and the infinite tail is described by
    ``beta``; use :meth:`atoms` to enumerate support within a radius.
    """

    family: Family
    d: int
    jumps: np.ndarray
    probs: np.ndarray
    law_class: LawClass
    covariance: np.ndarray | None = None
    beta: float | None = None
    hold: float = 0.0
    centered: bool = True
    exact_probs: tuple | None = field(default=None, repr=False)

    @property
    def finite_support(self) -> bool:
        return self.family is not Family.AXIS_POWER_TAIL

    @property
    def support_radius(self) -> int | None:
        if not self.finite_support:
            return None
        return int(np.abs(self.jumps).max()) if len(self.jumps) else 0

    @property
    def symmetric(self) -> bool:
        if not self.finite_support:
            return True
        table = self.as_dict()
        return all(abs(table.get(tuple(-v for v in x), 0.0) - p) <= PROB_TOL for x, p in table.items())

    def as_dict(self) -> dict[LatticePoint, float]:
        return {tuple(int(v) for v in x): float(p) for x, p in zip(self.jumps, self.probs)}

    def _axis_weight(self) -> float:
        # P(jump = k e_i) = weight * |k|^-beta
        return (1.0 - self.hold) / (2 * self.d * float(special.zeta(self.beta, 1)))

    def atoms(self, radius: int | None = None) -> tuple[np.ndarray, np.ndarray]:
        """Atoms with max-norm <= radius (all atoms for finite support if None)."""
        if self.finite_support:
            if radius is None:
                return self.jumps.copy(), self.probs.copy()
            keep = np.abs(self.jumps).max(axis=1) <= radius
            return self.jumps[keep], self.probs[keep]
        if radius is None:
            raise ValueError("infinite support: a radius is required")
        radius = int(radius)
        w = self._axis_weight()
        k = np.arange(1, radius + 1, dtype=np.int64)
        pk = w * k.astype(np.float64) ** (-self.beta)
        jumps = [np.zeros((1, self.d), dtype=np.int64)]
        probs = [np.array([self.hold])]
        for i in range(self.d):
            for sign in (1, -1):
                block = np.zeros((radius, self.d), dtype=np.int64)
                block[:, i] = sign * k
                jumps.append(block)
                probs.append(pk)
        jumps_a = np.concatenate(jumps)
        probs_a = np.concatenate(probs)
        if self.hold == 0.0:
            jumps_a, probs_a = jumps_a[1:], probs_a[1:]
        return jumps_a, probs_a

    def prob(self, x: Sequence[int]) -> float:
        x = as_point(x, self.d)
        if self.finite_support:
            return self.as_dict().get(x, 0.0)
        nz = [v for v in x if v != 0]
        if not nz:
            return self.hold
        if len(nz) > 1:
            return 0.0
        return self._axis_weight() * abs(nz[0]) ** (-self.beta)

    def tail_prob(self, radius: float) -> float:
        """P(||jump|| > radius) in max-norm."""
        if self.finite_support:
            norms = np.abs(self.jumps).max(axis=1)
            return math.fsum(self.probs[norms > radius])
        m = math.floor(radius) + 1
        if m < 1:
            return 1.0
        return 2 * self.d * self._axis_weight() * float(special.zeta(self.beta, m))

    def truncated_second_moment(self, x: float) -> float:
        """L(x): sum of P(y) |y|^2 over atoms with ||y|| <= x."""
        if self.finite_support:
            norms = np.abs(self.jumps).max(axis=1)
            sq = (self.jumps.astype(np.float64) ** 2).sum(axis=1)
            return math.fsum(self.probs[norms <= x] * sq[norms <= x])
        return 2 * self.d * self._axis_weight() * _power_partial_sum(self.beta - 2.0, math.floor(x))

    def truncated_second_moment_smooth(self, x: float) -> float:
        """Continuous, nondecreasing interpolation of L between integers."""
        if self.finite_support:
            return self.truncated_second_moment(x)
        k = math.floor(x)
        frac = x - k
        step = 2 * self.d * self._axis_weight() * (k + 1.0) ** (2.0 - self.beta)
        return self.truncated_second_moment(k) + frac * step

    def second_moment_matrix(self, radius: float, strict: bool = True) -> np.ndarray:
        """sum of P(y) y y' over ||y|| < radius (<= if not strict)."""
        if self.finite_support:
            norms = np.abs(self.jumps).max(axis=1)
            keep = norms < radius if strict else norms <= radius
            j = self.jumps[keep].astype(np.float64)
            return (j * self.probs[keep, None]).T @ j
        k_max = math.ceil(radius) - 1 if strict else math.floor(radius)
        per_axis = 2 * self._axis_weight() * _power_partial_sum(self.beta - 2.0, k_max)
        return np.eye(self.d) * per_axis

    def mean(self) -> np.ndarray:
        if not self.finite_support:
            return np.zeros(self.d)
        return (self.jumps * self.probs[:, None]).sum(axis=0)


def _parse_prob(p) -> tuple[float, Fraction | None]:
    if isinstance(p, Fraction):
        return float(p), p
    if isinstance(p, str):
        f = Fraction(p)
        return float(f), f
    if isinstance(p, int):
        return float(p), Fraction(p)
    return float(p), None


def _table_covariance(jumps: np.ndarray, probs: np.ndarray, exact: list | None) -> np.ndarray:
    d = jumps.shape[1]
    if exact is not None:
        cov = np.zeros((d, d))
        for a in range(d):
            for b in range(d):
                cov[a, b] = float(sum(p * int(x[a]) * int(x[b]) for x, p in zip(jumps, exact)))
        return cov
    cov = np.zeros((d, d))
    for a in range(d):
        for b in range(d):
            cov[a, b] = math.fsum(probs * jumps[:, a] * jumps[:, b])
    return cov


def make_table_law(
    entries: Iterable[tuple[Sequence[int], object]] | Mapping[Sequence[int], object],
    *,
    d: int | None = None,
    require_centered: bool = True,
    family: Family = Family.TABLE,
) -> JumpLaw:
    """Build a finite-support law from ``(jump, probability)`` pairs.

    Probabilities may be floats, ``Fraction`` or strings like ``"1/5"``;
    exact rationals give an exact covariance.  Impurity rows are not
    required to be centered (pass ``require_centered=False``).
    """
    if isinstance(entries, Mapping):
        entries = entries.items()
    merged: dict[LatticePoint, list] = {}
    for x, p in entries:
        pt = as_point(x)
        if d is None:
            d = len(pt)
        if len(pt) != d:
            raise DimensionMismatch(f"jump {pt} has {len(pt)} coordinates, expected {d}")
        pf, pe = _parse_prob(p)
        if not pf > 0.0 or pf > 1.0 + PROB_TOL:
            raise NotNormalized(f"probability {p} of jump {pt} is not in (0, 1]")
        if pt in merged:
            prev = merged[pt]
            merged[pt] = [prev[0] + pf, None if prev[1] is None or pe is None else prev[1] + pe]
        else:
            merged[pt] = [pf, pe]
    if not merged:
        raise NotNormalized("empty table")
    if d is None or d < 2:
        raise DimensionMismatch("dimension must be at least 2")
    jumps = np.array(sorted(merged), dtype=np.int64).reshape(-1, d)
    probs = np.array([merged[tuple(x)][0] for x in jumps.tolist()])
    exact = [merged[tuple(x)][1] for x in jumps.tolist()]
    exact = exact if all(e is not None for e in exact) else None
    total = sum(exact) if exact is not None else math.fsum(probs)
    if abs(float(total) - 1.0) > PROB_TOL:
        raise NotNormalized(f"probabilities sum to {float(total)!r}")
    cov = _table_covariance(jumps, probs, exact)
    mean = np.array([math.fsum(probs * jumps[:, i]) for i in range(d)])
    centered = bool(np.abs(mean).max() <= PROB_TOL)
    if require_centered and not centered:
        raise NonZeroMean(f"mean jump is {mean.tolist()}")
    return JumpLaw(
        family=family,
        d=d,
        jumps=jumps,
        probs=probs,
        law_class=LawClass.FINITE_VARIANCE,
        covariance=cov,
        hold=float(merged.get((0,) * d, [0.0])[0]),
        centered=centered,
        exact_probs=tuple(exact) if exact is not None else None,
    )


def make_axis_power_tail_law(d: int, beta: float, hold_prob: float = 0.0, *, allow_heavy: bool = False) -> JumpLaw:
    """P(jump = k e_i) = (1 - hold) |k|^-beta / (2 d zeta(beta)), P(0) = hold.

    ``beta = 3`` is the L-type case, ``beta > 3`` has finite variance.
    ``allow_heavy`` admits ``1 < beta <= 2`` for impurity rows only.
    """
    if d < 2:
        raise DimensionMismatch("dimension must be at least 2")
    beta = float(beta)
    floor = 1.0 if allow_heavy else 2.0
    if not beta > floor:
        raise BadExponent(f"beta must exceed {floor:g}, got {beta:g}")
    if not 0.0 <= hold_prob < 1.0:
        raise NotNormalized(f"hold probability {hold_prob} not in [0, 1)")
    if beta > 3.0:
        cls = LawClass.FINITE_VARIANCE
        per_axis = (1.0 - hold_prob) * float(special.zeta(beta - 2.0, 1) / special.zeta(beta, 1)) / d
        cov = np.eye(d) * per_axis
    else:
        cls = LawClass.L_TYPE if beta == 3.0 else LawClass.STABLE
        cov = None
    return JumpLaw(
        family=Family.AXIS_POWER_TAIL,
        d=d,
        jumps=np.zeros((1, d), dtype=np.int64),
        probs=np.array([hold_prob]),
        law_class=cls,
        covariance=cov,
        beta=beta,
        hold=float(hold_prob),
    )


def make_product_lazy_law(d: int = 2) -> JumpLaw:
    """Independent coordinates, each {0: 1/2, +1: 1/4, -1: 1/4}."""
    axis = {0: Fraction(1, 2), 1: Fraction(1, 4), -1: Fraction(1, 4)}
    entries = []
    for combo in product((-1, 0, 1), repeat=d):
        p = Fraction(1)
        for c in combo:
            p *= axis[c]
        entries.append((combo, p))
    return make_table_law(entries, d=d, family=Family.PRODUCT_LAZY)


def lazy_srw(d: int = 2) -> JumpLaw:
    """Lazy simple random walk: stay or move to a neighbour, 1/(2d+1) each."""
    p = Fraction(1, 2 * d + 1)
    entries = [((0,) * d, p)]
    for i in range(d):
        entries += [(unit(d, i, 1), p), (unit(d, i, -1), p)]
    return make_table_law(entries, d=d)


def simple_srw(d: int = 2) -> JumpLaw:
    p = Fraction(1, 2 * d)
    entries = []
    for i in range(d):
        entries += [(unit(d, i, 1), p), (unit(d, i, -1), p)]
    return make_table_law(entries, d=d)


# ---------------------------------------------------------------------------
# scaling sequences


class ScalingKind(str, enum.Enum):
    DIFFUSIVE = "diffusive"
    L_TYPE = "l_type"
    NUMERIC_B_TYPE = "numeric_b_type"
    PER_AXIS = "per_axis"


SOLVER_RTOL = 1e-6
SOLVER_MAX_ITER = 200


def solve_b_n(law: JumpLaw, n: int) -> float:
    """Fixed point of B -> sqrt(n L(B)) started at sqrt(n).

    L is nondecreasing, so the iterates are monotone.
    """
    b = math.sqrt(n)
    for _ in range(SOLVER_MAX_ITER):
        nxt = math.sqrt(n * law.truncated_second_moment_smooth(b))
        if abs(nxt - b) <= SOLVER_RTOL * b:
            b = nxt
            break
        b = nxt
    return b


@dataclass(frozen=True, eq=False)
class ScalingSequence:
    kind: ScalingKind
    c_constant: float | None = None
    per_axis: tuple["ScalingSequence", ...] | None = None
    law: JumpLaw | None = field(default=None, repr=False)

    def raw(self, n: int) -> float:
        if self.kind is ScalingKind.DIFFUSIVE:
            return math.sqrt(n)
        if self.kind is ScalingKind.L_TYPE:
            return math.sqrt(self.c_constant * n * math.log(n)) if n > 1 else 0.0
        if self.kind is ScalingKind.NUMERIC_B_TYPE:
            return solve_b_n(self.law, n)
        vals = self.axis_values(n)
        return float(np.exp(np.mean(np.log(vals))))

    def __call__(self, n: int) -> float:
        """B_n; for n < 3 the value is floored at sqrt(n)."""
        if n < 0:
            raise ValueError("n must be nonnegative")
        b = self.raw(n)
        return max(math.sqrt(n), b) if n < 3 else b

    def axis_values(self, n: int) -> np.ndarray:
        if self.kind is not ScalingKind.PER_AXIS:
            raise ValueError("axis_values needs a per-axis scaling")
        return np.array([s(n) for s in self.per_axis])

    def residual(self, n: int) -> float:
        """n L(B_n) / B_n^2, which the numeric solver drives to 1."""
        if self.law is None:
            raise ValueError("residual needs the jump law")
        b = self(n)
        return n * self.law.truncated_second_moment_smooth(b) / (b * b)

    @classmethod
    def diffusive(cls) -> "ScalingSequence":
        return cls(ScalingKind.DIFFUSIVE)

    @classmethod
    def l_type(cls, c: float) -> "ScalingSequence":
        if not c > 0:
            raise ValueError("c must be positive")
        return cls(ScalingKind.L_TYPE, c_constant=float(c))

    @classmethod
    def numeric(cls, law: JumpLaw) -> "ScalingSequence":
        return cls(ScalingKind.NUMERIC_B_TYPE, law=law)

    @classmethod
    def anisotropic(cls, axes: Sequence["ScalingSequence"]) -> "ScalingSequence":
        return cls(ScalingKind.PER_AXIS, per_axis=tuple(axes))


def l_type_constant(law: JumpLaw) -> float:
    """c with L(x) ~ 2c log x for the beta = 3 axis law."""
    if law.family is not Family.AXIS_POWER_TAIL or law.beta != 3.0:
        raise NotInDomain("closed-form L-type constant needs the beta = 3 axis law")
    return (1.0 - law.hold) / (2.0 * float(special.zeta(3.0, 1)))


def compute_scaling(law: JumpLaw, *, numeric: bool = False) -> ScalingSequence:
    """Pick B_n for a centered law from its class.

    ``numeric=True`` forces the fixed-point solver for infinite-variance laws
    instead of the L-type closed form.
    """
    if not law.centered:
        raise NonZeroMean("scaling needs a centered law")
    if law.law_class is LawClass.FINITE_VARIANCE:
        return ScalingSequence.diffusive()
    if law.law_class is LawClass.STABLE:
        raise NotInDomain(f"beta={law.beta:g} tail is outside the normal domain of attraction")
    if law.law_class is LawClass.L_TYPE and not numeric:
        return ScalingSequence.l_type(l_type_constant(law))
    report = domain_of_attraction_check(law, [1e2, 1e3, 1e4])
    if not report.passed:
        raise NotInDomain(report.verdict)
    return ScalingSequence.numeric(law)


# ---------------------------------------------------------------------------
# diagnostics


def _probe_pairs(d: int) -> list[tuple[np.ndarray, np.ndarray]]:
    e1 = np.array(unit(d, 0), dtype=float)
    e2 = np.array(unit(d, 1), dtype=float)
    ed = np.array(unit(d, d - 1), dtype=float)
    diag, anti = e1 + e2, e1 - e2
    return [
        (e1, e2), (e2, e1), (diag, e1), (anti, e1),
        (diag, e2), (anti, e2), (diag, anti), (e1, ed if d > 2 else diag),
    ]


@dataclass
class DoaReport:
    radii: list[float]
    ratio1: list[float]
    ratio2: list[list[float]]
    condition1: bool
    condition2: bool
    verdict: str

    @property
    def passed(self) -> bool:
        return self.condition1 and self.condition2

    def to_dict(self) -> dict:
        return {
            "radii": self.radii,
            "ratio1": self.ratio1,
            "ratio2": self.ratio2,
            "condition1": self.condition1,
            "condition2": self.condition2,
            "verdict": self.verdict,
            "passed": self.passed,
        }


# ratio2 probes may move by at most this much between the last two radii
RATIO2_STABLE_RTOL = 0.05


def _condition1_holds(radii: list[float], ratio1: list[float]) -> bool:
    r = np.asarray(ratio1)
    if np.all(r == 0.0):
        return True
    if np.any(np.diff(r) > 0):
        return False
    if r[-1] == 0.0:
        return True
    # 1/ratio1 must keep growing at least logarithmically in R; a ratio that
    # settles at a positive constant (stable tails) has flat 1/ratio1.
    inv = 1.0 / r
    slope = np.polyfit(np.log(radii), inv, 1)[0]
    return bool(slope > 0.5)


def domain_of_attraction_check(law: JumpLaw, radii: Sequence[float]) -> DoaReport:
    """Probe both conditions of the multivariate normal-domain criterion.

    ratio1(R) = R^2 P(||x|| > R) / sum_{||x|| < R} P(x) x'x
    ratio2(R; t, u) = sum (t'x)^2 P(x) / sum (u'x)^2 P(x) over ||x|| < R
    """
    radii = [float(r) for r in radii]
    if any(b <= a for a, b in zip(radii, radii[1:])):
        raise ValueError("radii must be strictly increasing")
    pairs = _probe_pairs(law.d)
    ratio1, ratio2 = [], [[] for _ in pairs]
    for r in radii:
        m = law.second_moment_matrix(r, strict=True)
        trace = float(np.trace(m))
        ratio1.append(r * r * law.tail_prob(r) / trace if trace > 0 else math.inf)
        for slot, (t, u) in zip(ratio2, pairs):
            den = float(u @ m @ u)
            slot.append(float(t @ m @ t) / den if den > 0 else math.inf)
    m_last = law.second_moment_matrix(radii[-1], strict=True)
    if np.linalg.matrix_rank(m_last) < law.d:
        raise DegenerateLaw(f"truncated second-moment matrix is singular at R={radii[-1]:g}")
    cond1 = _condition1_holds(radii, ratio1)
    cond2 = True
    if len(radii) >= 2:
        for slot in ratio2:
            a, b = slot[-2], slot[-1]
            if abs(b - a) > RATIO2_STABLE_RTOL * abs(a):
                cond2 = False
    if cond1 and cond2:
        verdict = "consistent with the normal domain"
    elif not cond1:
        verdict = "fails condition (1)"
    else:
        verdict = "fails condition (2)"
    return DoaReport(radii, ratio1, ratio2, cond1, cond2, verdict)


def integer_basis(vectors: Iterable[Sequence[int]], d: int) -> list[list[int]]:
    """Echelon basis of the integer lattice spanned by ``vectors``."""
    rows = [[int(v) for v in vec] for vec in vectors if any(vec)]
    basis = []
    for col in range(d):
        while True:
            live = [r for r in rows if r[col] != 0]
            if len(live) <= 1:
                break
            pivot = min(live, key=lambda r: abs(r[col]))
            rest = []
            for r in rows:
                if r is pivot or r[col] == 0:
                    rest.append(r)
                    continue
                q = r[col] // pivot[col]
                red = [a - q * b for a, b in zip(r, pivot)]
                if any(red):
                    rest.append(red)
            rows = rest
        live = [r for r in rows if r[col] != 0]
        if live:
            basis.append(live[0])
            rows = [r for r in rows if r is not live[0]]
    return basis


def lattice_is_full(vectors: Iterable[Sequence[int]], d: int) -> bool:
    basis = integer_basis(vectors, d)
    if len(basis) < d:
        return False
    det = 1
    for i, row in enumerate(basis):
        det *= row[i]
    return abs(det) == 1


def one_lattice_check(law: JumpLaw) -> bool:
    """Do the differences of support points generate all of Z^d?"""
    if law.finite_support:
        jumps, _ = law.atoms()
    else:
        radius = 1
        while True:
            jumps, _ = law.atoms(radius)
            diffs = jumps[1:] - jumps[0]
            if len(diffs) and np.linalg.matrix_rank(diffs.astype(float)) == law.d:
                break
            radius += 1
        jumps, _ = law.atoms(radius + 2)
    if len(jumps) < 2:
        return False
    diffs = (jumps[1:] - jumps[0]).tolist()
    return lattice_is_full(diffs, law.d)


# ---------------------------------------------------------------------------
# JSON


def law_to_dict(law: JumpLaw) -> dict:
    if law.family is Family.AXIS_POWER_TAIL:
        return {"family": law.family.value, "d": law.d, "beta": law.beta, "hold": law.hold}
    if law.family is Family.PRODUCT_LAZY:
        return {"family": law.family.value, "d": law.d}
    if law.exact_probs is not None:
        probs = [str(p) for p in law.exact_probs]
    else:
        probs = [float(p) for p in law.probs]
    return {
        "family": law.family.value,
        "d": law.d,
        "entries": [[list(map(int, x)), p] for x, p in zip(law.jumps.tolist(), probs)],
    }


def law_from_dict(obj: dict, d: int | None = None, *, override: bool = False) -> JumpLaw:
    """Inverse of :func:`law_to_dict`; ``override`` relaxes rules for impurity rows."""
    family = Family(obj["family"])
    d = obj.get("d", d)
    if family is Family.TABLE:
        return make_table_law([(x, p) for x, p in obj["entries"]], d=d, require_centered=not override)
    if d is None:
        raise DimensionMismatch(f"law family {family.value} needs a dimension")
    if family is Family.PRODUCT_LAZY:
        return make_product_lazy_law(d)
    return make_axis_power_tail_law(d, obj["beta"], obj.get("hold", 0.0), allow_heavy=override)
