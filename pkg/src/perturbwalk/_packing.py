"""Flatten jump laws and impurity maps into the arrays the kernels consume."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import special

from .lattice import TAIL_HEAD, Family, JumpLaw, hurwitz_tail

ONE32 = 1 << 32


def alias_table(probs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vose alias table with 32-bit integer acceptance thresholds.

    Column ``j`` keeps its own atom when the low 32 bits of the draw are
    below ``thr[j]``, otherwise it yields ``alias[j]``.
    """
    m = len(probs)
    scaled = [float(p) * m for p in np.asarray(probs, dtype=np.float64) / np.sum(probs)]
    thr = np.full(m, ONE32, dtype=np.uint64)
    alias = np.arange(m, dtype=np.int64)
    small = [i for i in range(m) if scaled[i] < 1.0]
    large = [i for i in range(m) if scaled[i] >= 1.0]
    while small and large:
        s = small.pop()
        g = large.pop()
        thr[s] = min(ONE32, int(round(scaled[s] * ONE32)))
        alias[s] = g
        scaled[g] = (scaled[g] + scaled[s]) - 1.0
        (small if scaled[g] < 1.0 else large).append(g)
    return thr, alias


@dataclass(frozen=True, eq=False)
class PackedLaws:
    d: int
    n_box: int
    site_law: np.ndarray  # int32[(2N+1)^d], law index per site of K_N
    offsets: np.ndarray  # int64[L+1]
    thr: np.ndarray  # uint64[M]
    alias: np.ndarray  # int64[M], local index
    jumps: np.ndarray  # int64[M, d]
    tail_atom: np.ndarray  # int64[L], local index of the tail atom or -1
    tail_beta: np.ndarray  # float64[L]
    tail_k0p1: np.ndarray  # int64[L]
    tail_s0: np.ndarray  # float64[L]

    @property
    def n_laws(self) -> int:
        return len(self.offsets) - 1

    def as_kwargs(self) -> dict:
        return {
            "d": self.d,
            "n_box": self.n_box,
            "site_law": self.site_law,
            "offsets": self.offsets,
            "thr": self.thr,
            "alias": self.alias,
            "jumps": self.jumps,
            "tail_atom": self.tail_atom,
            "tail_beta": self.tail_beta,
            "tail_k0p1": self.tail_k0p1,
            "tail_s0": self.tail_s0,
        }


def _law_atoms(law: JumpLaw) -> tuple[np.ndarray, np.ndarray, int, float, int, float]:
    if law.family is not Family.AXIS_POWER_TAIL:
        jumps, probs = law.atoms()
        return jumps, probs, -1, 0.0, 0, 0.0
    jumps, probs = law.atoms(TAIL_HEAD)
    k0p1 = TAIL_HEAD + 1
    tail_mass = (1.0 - law.hold) * float(special.zeta(law.beta, k0p1) / special.zeta(law.beta, 1))
    jumps = np.vstack([jumps, np.zeros((1, law.d), dtype=np.int64)])
    probs = np.append(probs, tail_mass)
    return jumps, probs, len(probs) - 1, law.beta, k0p1, hurwitz_tail(law.beta, float(k0p1))


def pack(base: JumpLaw, overrides: Sequence[tuple[Sequence[int], JumpLaw]] = (), n_box: int = 0) -> PackedLaws:
    d = base.d
    laws = [base] + [law for _, law in overrides]
    offsets = [0]
    thr, alias, jumps = [], [], []
    tail_atom, tail_beta, tail_k0p1, tail_s0 = [], [], [], []
    for law in laws:
        j, p, ta, tb, tk, ts = _law_atoms(law)
        t, a = alias_table(p)
        thr.append(t)
        alias.append(a)
        jumps.append(j.astype(np.int64))
        offsets.append(offsets[-1] + len(p))
        tail_atom.append(ta)
        tail_beta.append(tb)
        tail_k0p1.append(tk)
        tail_s0.append(ts)
    side = 2 * n_box + 1
    site_law = np.zeros(side**d, dtype=np.int32)
    for idx, (site, _) in enumerate(overrides, start=1):
        flat = 0
        for axis, v in enumerate(site):
            flat += (int(v) + n_box) * side**axis
        site_law[flat] = idx
    return PackedLaws(
        d=d,
        n_box=n_box,
        site_law=site_law,
        offsets=np.array(offsets, dtype=np.int64),
        thr=np.concatenate(thr),
        alias=np.concatenate(alias),
        jumps=np.ascontiguousarray(np.concatenate(jumps)),
        tail_atom=np.array(tail_atom, dtype=np.int64),
        tail_beta=np.array(tail_beta, dtype=np.float64),
        tail_k0p1=np.array(tail_k0p1, dtype=np.int64),
        tail_s0=np.array(tail_s0, dtype=np.float64),
    )
