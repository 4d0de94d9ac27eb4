"""Walks with local impurities: simulation, the coupled pair and assumption checks."""
from __future__ import annotations

import enum
import math
import struct
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property, reduce
from typing import BinaryIO, Iterator, Mapping, Sequence

import numpy as np

from . import kernels, rng
from ._packing import PackedLaws, pack
from .errors import DimensionMismatch
from .lattice import (
    Family,
    JumpLaw,
    LatticePoint,
    as_point,
    law_from_dict,
    law_to_dict,
    max_norm,
    one_lattice_check,
)

FULL_PATH_MAX_HORIZON = 10_000_000
CHUNK = 4096


class RecordMode(str, enum.Enum):
    ENDPOINT_ONLY = "endpoint_only"
    SUMMARY = "summary"
    FULL_PATH = "full_path"


@dataclass(frozen=True, eq=False)
class ImpuritySet:
    """Finite set of sites whose transition rows override the base law.

    ``n_box`` is the smallest N with every site inside K_N = [-N-1/2, N+1/2]^d.
    """

    overrides: Mapping[LatticePoint, JumpLaw] = field(default_factory=dict)

    def __post_init__(self):
        fixed = {as_point(site): law for site, law in dict(self.overrides).items()}
        dims = {len(s) for s in fixed} | {law.d for law in fixed.values()}
        if len(dims) > 1:
            raise DimensionMismatch(f"impurity sites and laws disagree on dimension: {sorted(dims)}")
        for site, law in fixed.items():
            if law.family is Family.AXIS_POWER_TAIL and not law.beta > 1.0:
                raise ValueError(f"impurity at {site}: needs beta > 1 for an epsilon-moment")
        object.__setattr__(self, "overrides", fixed)

    @property
    def n_box(self) -> int:
        return max((max_norm(s) for s in self.overrides), default=0)

    def __len__(self) -> int:
        return len(self.overrides)

    def law_at(self, site: Sequence[int], base: JumpLaw) -> JumpLaw:
        return self.overrides.get(as_point(site), base)


@dataclass(frozen=True, eq=False)
class WalkSpec:
    d: int
    base_law: JumpLaw
    impurities: ImpuritySet = field(default_factory=ImpuritySet)
    start: LatticePoint | None = None
    horizon: int = 0
    seed: int = 0
    record_mode: RecordMode = RecordMode.SUMMARY

    def __post_init__(self):
        if self.d < 2:
            raise DimensionMismatch("dimension must be at least 2")
        if self.base_law.d != self.d:
            raise DimensionMismatch(f"base law has dimension {self.base_law.d}, walk has {self.d}")
        if len(self.impurities) and len(next(iter(self.impurities.overrides))) != self.d:
            raise DimensionMismatch("impurity sites have the wrong dimension")
        start = (0,) * self.d if self.start is None else as_point(self.start, self.d)
        object.__setattr__(self, "start", start)
        object.__setattr__(self, "record_mode", RecordMode(self.record_mode))
        if self.horizon < 0:
            raise ValueError("horizon must be nonnegative")
        if self.record_mode is RecordMode.FULL_PATH and self.horizon > FULL_PATH_MAX_HORIZON:
            raise ValueError(f"full-path mode caps the horizon at {FULL_PATH_MAX_HORIZON}")
        object.__setattr__(self, "seed", int(self.seed) & rng.MASK64)

    @property
    def n_box(self) -> int:
        return self.impurities.n_box

    @cached_property
    def packed(self) -> PackedLaws:
        return pack(self.base_law, sorted(self.impurities.overrides.items()), self.n_box)

    def replace(self, **changes) -> "WalkSpec":
        fields = {
            "d": self.d,
            "base_law": self.base_law,
            "impurities": self.impurities,
            "start": self.start,
            "horizon": self.horizon,
            "seed": self.seed,
            "record_mode": self.record_mode,
        }
        fields.update(changes)
        return WalkSpec(**fields)

    def unperturbed(self) -> "WalkSpec":
        return self.replace(impurities=ImpuritySet())

    def in_box(self, x: Sequence[int]) -> bool:
        return max_norm(x) <= self.n_box

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "base_law": law_to_dict(self.base_law),
            "impurities": [
                {"site": list(site), "law": law_to_dict(law)} for site, law in sorted(self.impurities.overrides.items())
            ],
            "start": list(self.start),
            "horizon": self.horizon,
            "seed": self.seed,
            "record_mode": self.record_mode.value,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "WalkSpec":
        d = int(obj["d"])
        overrides = {
            as_point(item["site"], d): law_from_dict(item["law"], d, override=True) for item in obj.get("impurities", [])
        }
        return cls(
            d=d,
            base_law=law_from_dict(obj["base_law"], d),
            impurities=ImpuritySet(overrides),
            start=obj.get("start"),
            horizon=int(obj.get("horizon", 0)),
            seed=int(obj.get("seed", 0)),
            record_mode=RecordMode(obj.get("record_mode", "summary")),
        )


@dataclass(frozen=True)
class PathSummary:
    """Per-trajectory statistics; times are step indices, None when not reached."""

    endpoint: LatticePoint
    rho: int
    nu: int
    outside_steps: int
    nu_bar: int | None
    tau: int | None
    first_hit_KN: int | None
    first_return_origin: int | None
    max_excursion: int
    path: np.ndarray | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class CoupledSummary:
    x_endpoint: LatticePoint
    z_endpoint: LatticePoint
    sup_distance: int
    rho: int
    impurity_jump_norms: tuple[int, ...]
    triangle_bound: int


def _opt(v: int) -> int | None:
    return None if v < 0 else int(v)


def _default_nubar_cap(horizon: int) -> int:
    return 10 * (horizon + 1) + 10_000


def _summary_chunk(spec: WalkSpec, start: int, stop: int, checkpoints, nubar: bool, backend) -> dict:
    keys = rng.trajectory_keys(spec.seed, start, stop)
    cap = _default_nubar_cap(spec.horizon) if nubar else -1
    return backend.run_summary(spec.packed.as_kwargs(), keys, spec.start, spec.horizon, checkpoints, cap)


def _z_keys(spec: WalkSpec, keys):
    # with nothing perturbed K_0 is a placeholder box, so Z simply reuses X's draws
    return rng.substream_keys(keys, 1) if len(spec.impurities) else keys


def _coupled_chunk(spec: WalkSpec, start: int, stop: int, backend) -> dict:
    keys = rng.trajectory_keys(spec.seed, start, stop)
    return backend.run_coupled(spec.packed.as_kwargs(), keys, _z_keys(spec, keys), spec.start, spec.horizon)


def _chunks(trajectories: int, chunk: int) -> list[tuple[int, int]]:
    return [(a, min(a + chunk, trajectories)) for a in range(0, trajectories, chunk)]


def _concat(parts: list[dict]) -> dict:
    out = {}
    for key in parts[0]:
        out[key] = np.concatenate([p[key] for p in parts])
    return out


def run_batch_arrays(
    spec: WalkSpec,
    trajectories: int,
    *,
    coupled: bool = False,
    workers: int = 1,
    checkpoints: Sequence[int] = (),
    nubar: bool = True,
    backend: str | None = None,
    chunk: int = CHUNK,
) -> dict[str, np.ndarray]:
    """Run ``trajectories`` walks and return column arrays in trajectory order.

    Trajectory ``t`` always uses ``trajectory_key(spec.seed, t)``, and chunk
    boundaries do not depend on ``workers``, so the output is identical for
    any worker count.
    """
    if trajectories < 1:
        raise ValueError("trajectories must be at least 1")
    impl = kernels.get(backend)
    cps = np.asarray(sorted(checkpoints), dtype=np.int64)
    if len(cps) and (cps[0] < 0 or cps[-1] > spec.horizon):
        raise ValueError("checkpoints must lie in [0, horizon]")
    spec.packed  # build once before threads share it
    if coupled:
        def job(bounds):
            return _coupled_chunk(spec, *bounds, impl)
    else:
        def job(bounds):
            return _summary_chunk(spec, *bounds, cps, nubar, impl)
    bounds = _chunks(trajectories, chunk)
    if workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(job, bounds))
    else:
        parts = [job(b) for b in bounds]
    if coupled:
        # jump norms are ragged; offsets follow from the counts
        flat = np.concatenate([p.pop("jump_norms") for p in parts])
        out = _concat(parts)
        out["jump_norms"] = flat
        return out
    return _concat(parts)


def _summaries(arrays: dict) -> Iterator[PathSummary]:
    for r in range(len(arrays["rho"])):
        yield PathSummary(
            endpoint=tuple(int(v) for v in arrays["endpoint"][r]),
            rho=int(arrays["rho"][r]),
            nu=int(arrays["nu"][r]),
            outside_steps=int(arrays["outside"][r]),
            nu_bar=_opt(arrays["nubar"][r]),
            tau=_opt(arrays["tau"][r]),
            first_hit_KN=_opt(arrays["first_hit"][r]),
            first_return_origin=_opt(arrays["first_return"][r]),
            max_excursion=int(arrays["max_norm"][r]),
        )


def _coupled_summaries(arrays: dict) -> Iterator[CoupledSummary]:
    ends = np.cumsum(arrays["jump_counts"])
    starts = ends - arrays["jump_counts"]
    for r in range(len(arrays["rho"])):
        yield CoupledSummary(
            x_endpoint=tuple(int(v) for v in arrays["x_endpoint"][r]),
            z_endpoint=tuple(int(v) for v in arrays["z_endpoint"][r]),
            sup_distance=int(arrays["sup_distance"][r]),
            rho=int(arrays["rho"][r]),
            impurity_jump_norms=tuple(int(v) for v in arrays["jump_norms"][starts[r]:ends[r]]),
            triangle_bound=int(arrays["triangle"][r]),
        )


def batch_run(
    spec: WalkSpec, trajectories: int, mode: str = "summary", *, workers: int = 1, backend: str | None = None
) -> Iterator[PathSummary] | Iterator[CoupledSummary]:
    """Stream summaries (``mode="summary"``) or coupled summaries (``"coupled"``)."""
    if mode not in ("summary", "coupled"):
        raise ValueError(f"unknown batch mode {mode!r}")
    coupled = mode == "coupled"
    nubar = spec.record_mode is not RecordMode.ENDPOINT_ONLY
    arrays = run_batch_arrays(spec, trajectories, coupled=coupled, workers=workers, nubar=nubar, backend=backend)
    return _coupled_summaries(arrays) if coupled else _summaries(arrays)


def simulate(spec: WalkSpec, *, index: int = 0, backend: str | None = None) -> PathSummary:
    """One trajectory; identical to item ``index`` of :func:`batch_run`.

    Assumptions are not checked here; gate with :func:`check_assumptions`.
    """
    impl = kernels.get(backend)
    keys = rng.trajectory_keys(spec.seed, index, index + 1)
    nubar = spec.record_mode is not RecordMode.ENDPOINT_ONLY
    cap = _default_nubar_cap(spec.horizon) if nubar else -1
    arrays = impl.run_summary(spec.packed.as_kwargs(), keys, spec.start, spec.horizon, np.zeros(0, np.int64), cap)
    summary = next(_summaries(arrays))
    if spec.record_mode is RecordMode.FULL_PATH:
        path = impl.run_path(spec.packed.as_kwargs(), int(keys[0]), spec.start, spec.horizon)
        summary = PathSummary(**{**summary.__dict__, "path": path})
    return summary


def simulate_path(spec: WalkSpec, horizon: int | None = None, *, index: int = 0, backend: str | None = None) -> np.ndarray:
    """Positions X_0..X_horizon of trajectory ``index`` (defaults to spec.horizon)."""
    horizon = spec.horizon if horizon is None else horizon
    if horizon > FULL_PATH_MAX_HORIZON:
        raise ValueError(f"full paths are capped at {FULL_PATH_MAX_HORIZON} steps")
    key = rng.trajectory_key(spec.seed, index)
    return kernels.get(backend).run_path(spec.packed.as_kwargs(), key, spec.start, horizon)


def simulate_coupled(spec: WalkSpec, *, index: int = 0, backend: str | None = None) -> CoupledSummary:
    """X as in :func:`simulate`; Z copies X's jumps outside K_N and draws its own inside."""
    impl = kernels.get(backend)
    keys = rng.trajectory_keys(spec.seed, index, index + 1)
    arrays = impl.run_coupled(spec.packed.as_kwargs(), keys, _z_keys(spec, keys), spec.start, spec.horizon)
    return next(_coupled_summaries(arrays))


# ---------------------------------------------------------------------------
# pathwise statistics (used by tests and block decomposition)


def indicator(path: np.ndarray, n_box: int) -> np.ndarray:
    return np.abs(path).max(axis=1) <= n_box


def nu_bar_from_indicator(ind: np.ndarray, n: int) -> int | None:
    """Entrances into K_N before the (n+1)-th step spent outside.

    Returns None if the sequence is too short to contain n + 1 zeros and
    does not end strictly after them.
    """
    zeros = np.nonzero(~ind)[0]
    if len(zeros) >= n + 1:
        seq = ind[: zeros[n]]
    else:
        return None
    starts = seq & np.concatenate(([True], ~seq[:-1])) if len(seq) else seq
    return int(starts.sum())


# ---------------------------------------------------------------------------
# assumption checks


@dataclass
class AssumptionReport:
    one_lattice: bool
    aperiodic: bool
    period: int | None
    scc: bool | None
    scc_detail: str
    epsilon_moment: bool
    epsilon_detail: dict[str, str]

    @property
    def passed(self) -> bool:
        return self.one_lattice and self.aperiodic and self.scc is True and self.epsilon_moment

    def to_dict(self) -> dict:
        return {
            "one_lattice": self.one_lattice,
            "aperiodic": self.aperiodic,
            "period": self.period,
            "scc": self.scc,
            "scc_detail": self.scc_detail,
            "epsilon_moment": self.epsilon_moment,
            "epsilon_detail": self.epsilon_detail,
            "passed": self.passed,
        }


APERIODICITY_DEPTH = 6


def _return_lengths(law: JumpLaw, depth: int = APERIODICITY_DEPTH) -> list[int]:
    jumps, probs = law.atoms() if law.finite_support else law.atoms(3)
    steps = [tuple(j) for j, p in zip(jumps.tolist(), probs) if p > 0]
    origin = (0,) * law.d
    frontier = {origin}
    lengths = []
    for k in range(1, depth + 1):
        frontier = {tuple(a + b for a, b in zip(x, s)) for x in frontier for s in steps}
        if origin in frontier:
            lengths.append(k)
    return lengths


def _positive_atoms(law: JumpLaw, radius: int) -> list[LatticePoint]:
    jumps, probs = law.atoms() if law.finite_support else law.atoms(radius)
    return [tuple(j) for j, p in zip(jumps.tolist(), probs) if p > 0]


def _scc_verdict(spec: WalkSpec) -> tuple[bool, str]:
    n_box = spec.n_box
    overrides = spec.impurities.overrides
    if any(not law.finite_support for law in overrides.values()):
        reach = n_box + 2
    else:
        reach = max((law.support_radius for law in overrides.values()), default=0)
    m = n_box + reach
    d = spec.d
    free = "free"
    sites = [tuple(p) for p in np.ndindex(*(2 * m + 1,) * d)]
    sites = [tuple(v - m for v in p) for p in sites]
    fwd: dict = {s: set() for s in sites}
    fwd[free] = set()
    base_atoms = _positive_atoms(spec.base_law, 2 * m + 1)
    for u in sites:
        law = overrides.get(u, spec.base_law)
        for j in _positive_atoms(law, 2 * m + 1):
            v = tuple(a + b for a, b in zip(u, j))
            fwd[u].add(v if max_norm(v) <= m else free)
        if not law.finite_support:
            fwd[u].add(free)
    # sites outside the box all follow the base law
    for v in sites:
        if not spec.base_law.finite_support or any(max_norm(tuple(a - b for a, b in zip(v, j))) > m for j in base_atoms):
            fwd[free].add(v)
    back: dict = {k: set() for k in fwd}
    for u, vs in fwd.items():
        for v in vs:
            back[v].add(u)

    def closure(graph):
        seen = {free}
        queue = deque([free])
        while queue:
            u = queue.popleft()
            for v in graph[u]:
                if v not in seen:
                    seen.add(v)
                    queue.append(v)
        return seen

    component = closure(fwd) & closure(back)
    bad = [p for p in ((0,) * d, spec.start) if max_norm(p) <= m and p not in component]
    if bad:
        return False, f"not in the infinite strongly connected component: {sorted(set(bad))}"
    return True, f"origin and start communicate with the exterior (box radius {m})"


def check_assumptions(spec: WalkSpec) -> AssumptionReport:
    """Verdicts on the standing assumptions; never raises for a failing check."""
    lattice_ok = one_lattice_check(spec.base_law)
    if spec.base_law.hold > 0:
        aperiodic, period = True, 1
    else:
        lengths = _return_lengths(spec.base_law)
        period = reduce(math.gcd, lengths) if lengths else None
        aperiodic = period == 1
    if lattice_ok and aperiodic:
        scc, detail = _scc_verdict(spec)
    else:
        scc, detail = None, "indeterminate: exterior collapse needs a 1-lattice aperiodic base law"
    eps = {}
    for site, law in sorted(spec.impurities.overrides.items()):
        if law.finite_support:
            eps[str(list(site))] = "all moments (finite support)"
        else:
            eps[str(list(site))] = f"moments of order < {law.beta - 1.0:g}"
    return AssumptionReport(
        one_lattice=lattice_ok,
        aperiodic=aperiodic,
        period=period,
        scc=scc,
        scc_detail=detail,
        epsilon_moment=True,
        epsilon_detail=eps,
    )


# ---------------------------------------------------------------------------
# full-path binary format

PATH_MAGIC = b"PWLK"
PATH_VERSION = 1
_PATH_HEADER = struct.Struct("<4sHHQ")


def write_path(path: np.ndarray, fh: BinaryIO) -> None:
    """Header (magic, version u16, d u16, n u64) then n+1 rows of int32 LE."""
    path = np.asarray(path)
    n_rows, d = path.shape
    if np.abs(path).max(initial=0) > np.iinfo(np.int32).max:
        raise OverflowError("coordinates exceed the int32 range of the path format")
    fh.write(_PATH_HEADER.pack(PATH_MAGIC, PATH_VERSION, d, n_rows - 1))
    fh.write(path.astype("<i4").tobytes())


def read_path(fh: BinaryIO) -> np.ndarray:
    magic, version, d, n = _PATH_HEADER.unpack(fh.read(_PATH_HEADER.size))
    if magic != PATH_MAGIC or version != PATH_VERSION:
        raise ValueError("not a perturbwalk path file")
    data = np.frombuffer(fh.read(4 * d * (n + 1)), dtype="<i4")
    return data.reshape(n + 1, d).astype(np.int64)
