"""The BGW tree conditioned on ``LIS = k``, the decreasing chain ``M`` and
the black-golden coupling of two copies of it."""
from __future__ import annotations

import math
import threading
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .rng import as_rng
from .sequences import QTable, alpha_of, pi_row
from .tree import Overflow, SignedTree, _empty_arena

REJECTION_K_LIMIT = 64
PI_CACHE_ROWS = 1024


class Exhausted(RuntimeError):
    """Rejection sampling used up its tries."""

    def __init__(self, tries: int):
        super().__init__(f"no acceptance after {tries} tries")
        self.tries = tries


def default_size_cap(k: int, p: float) -> int:
    """``50 k^{1/alpha(p)}`` leaves."""
    return int(math.ceil(50 * k ** (1.0 / alpha_of(float(p)))))


def _plus_tables(q: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    off = np.zeros(k + 1, np.int64)
    chunks = []
    pos = 0
    for m in range(2, k + 1):
        off[m] = pos
        chunks.append(np.cumsum(q[1:m] * q[m - 1:0:-1]))
        pos += m - 1
    cum = np.concatenate(chunks) if chunks else np.zeros(1)
    return off, cum


class ConditionedSampler:
    """Exact sampler of ``T^k`` via the root decomposition, with the BGW
    rejection sampler available as a cross-check (``mode="rejection"``).

    Tables for the exact mode are built for targets up to ``kmax`` and
    take ``O(kmax^2)`` memory.
    """

    def __init__(self, table: QTable, kmax: int, size_cap: int | None = None,
                 mode: str = "exact"):
        if mode not in ("exact", "rejection"):
            raise ValueError("mode must be 'exact' or 'rejection'")
        if not 1 <= kmax <= table.K:
            raise ValueError(f"kmax must lie in [1, {table.K}] (the q table size)")
        if mode == "rejection" and kmax > REJECTION_K_LIMIT:
            raise ValueError(f"rejection mode limited to k <= {REJECTION_K_LIMIT}")
        self.table = table
        self.kmax = int(kmax)
        self.mode = mode
        self.size_cap = size_cap
        self.attempts = 0
        self.overflows = 0
        if mode == "exact":
            self._qf = np.ascontiguousarray(table.q[:kmax + 1])
            self._cumq = np.ascontiguousarray(table.cumq[:kmax + 1])
            self._plus_off, self._plus_cum = _plus_tables(table.q, kmax)

    def cap_for(self, k: int) -> int:
        return self.size_cap if self.size_cap is not None else default_size_cap(k, self.table.p)

    def _check(self, k: int):
        if not 1 <= k <= self.kmax:
            raise ValueError(f"k must lie in [1, {self.kmax}]")

    def _arena(self, cap: int):
        m = 2 * cap + 2
        parent, left, right, sign = _empty_arena(m)
        return parent, left, right, sign

    def sample(self, k: int, rng) -> SignedTree:
        """One tree with LIS exactly k; raises :class:`Overflow` (exact mode)
        or :class:`Exhausted` (rejection mode)."""
        self._check(k)
        rng = as_rng(rng)
        cap = self.cap_for(k)
        parent, left, right, sign = self._arena(cap)
        self.attempts += 1
        if self.mode == "exact":
            target = np.empty(parent.shape[0], np.int64)
            n_nodes, leaves = K.conditioned_fill(
                parent, left, right, sign, target, k, self.table.p, self._qf,
                self._cumq, self._plus_off, self._plus_cum, cap, rng)
            if leaves < 0:
                self.overflows += 1
                raise Overflow(cap)
        else:
            lis = np.empty(parent.shape[0], np.int64)
            capc = np.empty(parent.shape[0], np.int64)
            n_nodes, tries, over = K.bgw_reject(parent, left, right, sign, lis, capc,
                                                self.table.p, k, cap, 10 ** 8, rng)
            self.overflows += int(over)
            if n_nodes < 0:
                raise Exhausted(tries)
            leaves = (n_nodes + 1) // 2
        return SignedTree(parent[:n_nodes].copy(), left[:n_nodes].copy(),
                          right[:n_nodes].copy(), sign[:n_nodes].copy(), 0, int(leaves))

    def stats(self, k: int, samples: int, rng) -> np.ndarray:
        """``(samples, 3)`` array of (leaves, lis, cap_count); overflowed
        draws (exact mode) carry -1 in every column."""
        self._check(k)
        rng = as_rng(rng)
        cap = self.cap_for(k)
        parent, left, right, sign = self._arena(cap)
        m = parent.shape[0]
        lis = np.empty(m, np.int64)
        capc = np.empty(m, np.int64)
        out = np.empty((samples, 3), np.int64)
        if self.mode == "exact":
            target = np.empty(m, np.int64)
            K.conditioned_stats(parent, left, right, sign, target, lis, capc, k,
                                self.table.p, self._qf, self._cumq, self._plus_off,
                                self._plus_cum, cap, samples, rng, out)
            self.overflows += int((out[:, 0] < 0).sum())
        else:
            for s in range(samples):
                n_nodes, tries, over = K.bgw_reject(parent, left, right, sign, lis,
                                                    capc, self.table.p, k, cap,
                                                    10 ** 8, rng)
                self.overflows += int(over)
                if n_nodes < 0:
                    raise Exhausted(tries)
                out[s] = ((n_nodes + 1) // 2, lis[0], capc[0])
        self.attempts += samples
        return out


def sample_conditioned_tree(k: int, table: QTable, seed, size_cap: int | None = None) -> SignedTree:
    return ConditionedSampler(table, k, size_cap).sample(k, seed)


def rejection_sample_tk(k: int, p: float, seed, size_cap: int | None = None,
                        max_tries: int = 10 ** 6) -> tuple[SignedTree, int]:
    """BGW samples filtered on ``LIS = k``; returns ``(tree, tries)``."""
    if not 1 <= k <= REJECTION_K_LIMIT:
        raise ValueError(f"k must lie in [1, {REJECTION_K_LIMIT}]")
    if max_tries < 1:
        raise ValueError("max_tries must be >= 1")
    rng = as_rng(seed)
    cap = size_cap if size_cap is not None else default_size_cap(k, p)
    m = 2 * cap + 2
    parent, left, right, sign = _empty_arena(m)
    lis = np.empty(m, np.int64)
    capc = np.empty(m, np.int64)
    n_nodes, tries, _ = K.bgw_reject(parent, left, right, sign, lis, capc, p, k,
                                     cap, max_tries, rng)
    if n_nodes < 0:
        raise Exhausted(tries)
    tree = SignedTree(parent[:n_nodes].copy(), left[:n_nodes].copy(),
                      right[:n_nodes].copy(), sign[:n_nodes].copy(), 0,
                      (n_nodes + 1) // 2)
    return tree, int(tries)


def rejection_acceptance(k: int, p: float, tries: int, seed,
                         size_cap: int | None = None) -> tuple[int, int]:
    """Count of ``LIS = k`` among ``tries`` capped BGW draws and the
    overflow count."""
    cap = size_cap if size_cap is not None else default_size_cap(k, p)
    lis, size = K.bgw_lis_batch(p, cap, tries, as_rng(seed))
    return int((lis == k).sum()), int((size < 0).sum())


# -- decreasing chain -------------------------------------------------------

class PiKernel:
    """Cumulative rows of ``pi(m; .)`` in a bounded cache (oldest row
    evicted first); lookups are lock-free, insertions take a lock."""

    def __init__(self, table: QTable, max_rows: int = PI_CACHE_ROWS):
        self.table = table
        self.max_rows = max_rows
        self._rows: OrderedDict[int, np.ndarray] = OrderedDict()
        self._lock = threading.Lock()

    def cum_row(self, m: int) -> np.ndarray:
        row = self._rows.get(m)
        if row is not None:
            return row
        row = np.cumsum(pi_row(self.table, m))
        with self._lock:
            self._rows[m] = row
            while len(self._rows) > self.max_rows:
                self._rows.popitem(last=False)
        return row

    def draw(self, m: int, u: float) -> int:
        """Inverse-CDF draw of ``m' ~ pi(m; .)`` from a uniform ``u``."""
        if m == 1:
            return 0
        cum = self.cum_row(m)
        j = int(np.searchsorted(cum, u * cum[-1], side="right"))
        return min(max(j, 1), m - 1)


_KERNELS: dict[int, PiKernel] = {}


def pi_kernel(table: QTable) -> PiKernel:
    ker = _KERNELS.get(id(table))
    if ker is None or ker.table is not table:
        ker = _KERNELS[id(table)] = PiKernel(table)
    return ker


def simulate_m_chain(k: int, table: QTable, seed) -> list[int]:
    """``M_0 = k`` down to the absorbing 0."""
    if not 1 <= k <= table.K:
        raise ValueError(f"k must lie in [1, {table.K}]")
    rng = as_rng(seed)
    ker = pi_kernel(table)
    path = [k]
    m = k
    while m > 0:
        m = ker.draw(m, rng.random()) if m > 1 else 0
        path.append(m)
    return path


# -- good scales -------------------------------------------------------------

@dataclass(frozen=True)
class GoodScaleSet:
    scales: tuple[int, ...]
    C: float
    condition: tuple[bool, ...] = ()

    def __post_init__(self):
        s = self.scales
        if any(b <= 7 * a for a, b in zip(s, s[1:])):
            raise ValueError("scales must satisfy l' > 7 l")

    def to_dict(self) -> dict:
        return {"scales": list(self.scales), "C": self.C, "condition": list(self.condition)}


def scale_condition(table: QTable, ell: int, C: float) -> bool:
    """``sum_{i<l} i q(i) <= C l Q(l)``."""
    i = np.arange(1, ell)
    return bool(math.fsum(i * table.q[1:ell]) <= C * ell * table.Q[ell])


def good_scales(upper: int, table: QTable, C: float = 10.0) -> GoodScaleSet:
    if not 1 <= upper <= table.K:
        raise ValueError(f"upper must lie in [1, {table.K}]")
    scales = []
    ell = 1
    while ell <= upper:
        scales.append(ell)
        ell *= 10
    cond = tuple(scale_condition(table, s, C) for s in scales)
    return GoodScaleSet(tuple(scales), float(C), cond)


# -- black-golden coupling ---------------------------------------------------

class _GoldenScale:
    """Golden instructions of one scale: laws of ``B_m`` given
    ``B_m in [l, 4l]`` for m in ``[5l, 7l]`` and their common component."""

    def __init__(self, ker: PiKernel, ell: int):
        self.ell = ell
        self.lo, self.hi = ell, 4 * ell
        self.ker = ker
        common = None
        for m in range(5 * ell, 7 * ell + 1):
            P = self.law(m)
            common = P if common is None else np.minimum(common, P)
        self.beta = float(common.sum())
        self.common_cum = np.cumsum(common)

    def law(self, m: int) -> np.ndarray:
        row = pi_row(self.ker.table, m)[self.lo:self.hi + 1]
        return row / row.sum()

    def window(self, m: int) -> bool:
        return 5 * self.ell <= m <= 7 * self.ell

    def residual_draw(self, m: int, u: float) -> int:
        resid = np.maximum(self.law(m) - np.diff(self.common_cum, prepend=0.0), 0.0)
        cum = np.cumsum(resid)
        if cum[-1] <= 0:
            return self.common_draw(u)
        j = int(np.searchsorted(cum, u * cum[-1], side="right"))
        return self.lo + min(j, self.hi - self.lo)

    def common_draw(self, u: float) -> int:
        j = int(np.searchsorted(self.common_cum, u * self.common_cum[-1], side="right"))
        return self.lo + min(j, self.hi - self.lo)


_GOLDEN: dict[tuple[int, int], _GoldenScale] = {}


def _golden_scale(ker: PiKernel, ell: int) -> _GoldenScale:
    key = (id(ker.table), ell)
    g = _GOLDEN.get(key)
    if g is None or g.ker.table is not ker.table:
        g = _GOLDEN[key] = _GoldenScale(ker, ell)
    return g


@dataclass
class CouplingResult:
    k: int
    kprime: int
    vmer: int
    tmer: int
    tmer_prime: int
    golden_jumps: int
    path: list[int] = field(repr=False)
    path_prime: list[int] = field(repr=False)
    suffix_identical: bool = True

    def to_dict(self) -> dict:
        return {"k": self.k, "kprime": self.kprime, "vmer": self.vmer,
                "tmer": self.tmer, "tmer_prime": self.tmer_prime,
                "golden_jumps": self.golden_jumps}


def active_scales(scales: GoodScaleSet, K: int) -> list[int]:
    """Scales the coupling rule uses: l = 1 and scales with 7l > K are skipped."""
    return [s for s in scales.scales if s >= 2 and 7 * s <= K]


def black_golden_coupling(k: int, k_prime: int, table: QTable,
                          scales: GoodScaleSet | None, seed, floor: int = 1) -> CouplingResult:
    """Run ``M`` from k and ``M'`` from k' on one set of instructions.

    Black instructions ``B_m ~ pi(m; .)`` are drawn lazily per site and
    shared.  For each active scale the golden instructions take one common
    value for the whole window with the overlap probability ``beta`` and
    are otherwise drawn independently from the residual laws.  ``vmer`` is
    the largest common value ``>= floor`` (0 if none); ``golden_jumps``
    counts golden moves of both chains, post-merge moves once.
    """
    for name, v in (("k", k), ("k_prime", k_prime)):
        if not 1 <= v <= table.K:
            raise ValueError(f"{name} must lie in [1, {table.K}]")
    rng = as_rng(seed)
    ker = pi_kernel(table)
    if scales is None:
        scales = good_scales(table.K, table)
    golden = [_golden_scale(ker, ell) for ell in active_scales(scales, table.K)]
    black: dict[int, int] = {}
    gold: dict[int, int] = {}
    shared: dict[int, int | None] = {}
    used_gold: set[int] = set()

    def step(m: int) -> int:
        if m == 1:
            return 0
        b = black.get(m)
        if b is None:
            b = black[m] = ker.draw(m, rng.random())
        for g in golden:
            if g.window(m) and g.lo <= b <= g.hi:
                val = gold.get(m)
                if val is None:
                    if g.ell not in shared:
                        shared[g.ell] = (g.common_draw(rng.random())
                                         if rng.random() < g.beta else None)
                    val = shared[g.ell]
                    if val is None:
                        val = g.residual_draw(m, rng.random())
                    gold[m] = val
                used_gold.add(m)
                return val
        return b

    def run(start: int) -> tuple[list[int], set[int]]:
        path = [start]
        golden_sites = set()
        m = start
        while m > 0:
            n = step(m)
            if m in used_gold:
                golden_sites.add(m)
            m = n
            path.append(m)
        return path, golden_sites

    path, gs = run(k)
    path2, gs2 = run(k_prime)
    common = set(path) & set(path2)
    cands = [v for v in common if v >= floor]
    vmer = max(cands) if cands else 0
    if vmer:
        t1, t2 = path.index(vmer), path2.index(vmer)
        ident = path[t1:] == path2[t2:]
    else:
        t1 = t2 = -1
        ident = True
    return CouplingResult(k, k_prime, vmer, t1, t2, len(gs | gs2), path, path2, ident)
