"""Largest positive subtrees of signed trees.

``LIS(t)`` is the number of leaves of a largest positive (all ``+``)
contracted subtree of ``t``; it equals the longest increasing subsequence
of the associated separable permutation.  Alongside it we track
``cap_count``: the number of leaves lying in *every* maximal positive
subtree.  The recursion is

=========  ====================  ===================================
node       lis                   cap_count
=========  ====================  ===================================
leaf       1                     1
``+``      lis(l) + lis(r)       cap(l) + cap(r)
``-``      max(lis(l), lis(r))   cap of the strictly larger side, 0 on a tie
=========  ====================  ===================================
"""
from __future__ import annotations

import csv
import io
import itertools
import json
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from ._kernels import MINUS, NONE, PLUS
from .rng import as_rng
from .tree import SignedTree, _empty_arena

ENUMERATION_LIMIT = 16


@dataclass(frozen=True, eq=False)
class LisAnnotation:
    lis: np.ndarray
    cap_count: np.ndarray
    root: int

    @property
    def value(self) -> int:
        return int(self.lis[self.root])

    @property
    def root_cap(self) -> int:
        return int(self.cap_count[self.root])


def annotate(tree: SignedTree) -> LisAnnotation:
    lis, cap = K.annotate(tree.left, tree.right, tree.sign, tree.root)
    return LisAnnotation(lis, cap, tree.root)


def lis(tree: SignedTree) -> int:
    return annotate(tree).value


def cap_count(tree: SignedTree) -> int:
    return annotate(tree).root_cap


def _lmax_choice(tree: SignedTree, ann: LisAnnotation, v: int) -> tuple[int, ...]:
    a, b = int(tree.left[v]), int(tree.right[v])
    if tree.sign[v] == PLUS:
        return (a, b)
    return (a,) if ann.lis[a] >= ann.lis[b] else (b,)


def leftmost_max_subtree(tree: SignedTree, ann: LisAnnotation | None = None) -> np.ndarray:
    """Leaves of the leftmost maximal positive subtree (ties at ``-`` go left),
    in left-to-right order."""
    ann = ann or annotate(tree)
    out = []
    stack = [tree.root]
    while stack:
        v = stack.pop()
        if tree.left[v] == NONE:
            out.append(v)
        else:
            stack.extend(reversed(_lmax_choice(tree, ann, v)))
    return np.array(out, np.int64)


def intersection_leaves(tree: SignedTree, ann: LisAnnotation | None = None) -> np.ndarray:
    """Leaves contained in every maximal positive subtree."""
    ann = ann or annotate(tree)
    out = []
    stack = [tree.root]
    while stack:
        v = stack.pop()
        if ann.cap_count[v] == 0:
            continue
        if tree.left[v] == NONE:
            out.append(v)
            continue
        a, b = int(tree.left[v]), int(tree.right[v])
        if tree.sign[v] == PLUS:
            stack.extend((b, a))
        elif ann.lis[a] > ann.lis[b]:
            stack.append(a)
        elif ann.lis[b] > ann.lis[a]:
            stack.append(b)
    return np.array(sorted(out, key=_order_key(tree)), np.int64)


def _order_key(tree):
    pos = {int(v): i for i, v in enumerate(tree.leaves())}
    return lambda v: pos[int(v)]


def in_intersection(tree: SignedTree, leaf: int, ann: LisAnnotation | None = None) -> bool:
    """Whether ``leaf`` lies in every maximal positive subtree (path test)."""
    ann = ann or annotate(tree)
    c = int(leaf)
    v = int(tree.parent[c])
    while v != NONE:
        if tree.sign[v] == MINUS:
            d = tree.right[v] if tree.left[v] == c else tree.left[v]
            if ann.lis[c] <= ann.lis[d]:
                return False
        c, v = v, int(tree.parent[v])
    return True


def enumerate_maximal_positive_subtrees(tree: SignedTree) -> set[frozenset[int]]:
    """Leaf sets of all maximal positive subtrees (brute-force oracle).

    Expands every ``-`` tie into both branches, so the output can be
    exponential; refused above 16 leaves.
    """
    if tree.leaf_count > ENUMERATION_LIMIT:
        raise ValueError(f"enumeration limited to {ENUMERATION_LIMIT} leaves")
    memo: dict[int, tuple[int, list[frozenset[int]]]] = {}
    for v in tree.preorder()[::-1]:
        v = int(v)
        if tree.left[v] == NONE:
            memo[v] = (1, [frozenset([v])])
            continue
        (la, sa), (lb, sb) = memo[int(tree.left[v])], memo[int(tree.right[v])]
        if tree.sign[v] == PLUS:
            memo[v] = (la + lb, [x | y for x, y in itertools.product(sa, sb)])
        elif la > lb:
            memo[v] = (la, sa)
        elif lb > la:
            memo[v] = (lb, sb)
        else:
            memo[v] = (la, sa + sb)
    return set(memo[tree.root][1])


# -- incremental LIS along Remy trajectories ------------------------------

class RemyTrajectory:
    """Forward Remy process carrying LIS annotations.

    Each step updates the annotation along the path from the insertion
    point to the root only.  ``x`` holds ``X_1, ..., X_n`` and ``member[j]``
    records whether the leaf inserted at step ``j`` (going from ``j+1`` to
    ``j+2`` leaves) lies in every maximal positive subtree of the new tree.
    """

    def __init__(self, p: float, seed, capacity: int = 1024):
        if not 0.0 < p < 1.0:
            raise ValueError("p must lie in (0, 1)")
        self.p = p
        self.rng = as_rng(seed)
        self._alloc(max(capacity, 2))
        self.parent[0] = NONE
        self.lis[0] = 1
        self.cap[0] = 1
        self.n_nodes = 1
        self.root = 0
        self.x = [1]
        self.member: list[bool] = []

    def _alloc(self, leaves: int):
        m = 2 * leaves - 1
        old = getattr(self, "parent", None)
        arrays = list(_empty_arena(m)) + [np.zeros(m, np.int64), np.zeros(m, np.int64)]
        if old is not None:
            for new, cur in zip(arrays, (self.parent, self.left, self.right,
                                         self.sign, self.lis, self.cap)):
                new[:cur.shape[0]] = cur
        self.parent, self.left, self.right, self.sign, self.lis, self.cap = arrays

    @property
    def n(self) -> int:
        return (self.n_nodes + 1) // 2

    def advance(self, steps: int) -> np.ndarray:
        """Run ``steps`` steps and return the new ``X`` values."""
        need = self.n + steps
        if 2 * need - 1 > self.parent.shape[0]:
            self._alloc(max(need, 2 * self.n))
        xs = np.empty(steps, np.int64)
        mem = np.empty(steps, np.bool_)
        self.n_nodes, self.root = K.remy_trajectory(
            self.parent, self.left, self.right, self.sign, self.lis, self.cap,
            self.n_nodes, self.root, steps, self.p, self.rng, xs, mem)
        self.x.extend(xs.tolist())
        self.member.extend(mem.tolist())
        return xs

    def tree(self) -> SignedTree:
        m = self.n_nodes
        return SignedTree(self.parent[:m].copy(), self.left[:m].copy(),
                          self.right[:m].copy(), self.sign[:m].copy(),
                          int(self.root), self.n)

    def recompute(self) -> int:
        """Full bottom-up recomputation (drift check); returns LIS."""
        t = self.tree()
        ann = annotate(t)
        m = self.n_nodes
        if not (np.array_equal(ann.lis[:m], self.lis[:m])
                and np.array_equal(ann.cap_count[:m], self.cap[:m])):
            raise RuntimeError("incremental annotation drifted from recomputation")
        return ann.value


def incremental_lis(n: int, p: float, seed, checkpoint: int = 0) -> np.ndarray:
    """``X_1 .. X_n`` along one Remy trajectory.

    With ``checkpoint > 0`` the annotation is fully recomputed every
    ``checkpoint`` steps and compared.
    """
    traj = RemyTrajectory(p, seed, capacity=n)
    done = 1
    while done < n:
        step = n - done if checkpoint <= 0 else min(checkpoint, n - done)
        traj.advance(step)
        done += step
        if checkpoint > 0:
            traj.recompute()
    return np.array(traj.x, np.int64)


# -- spine chain --------------------------------------------------------

@dataclass
class ChainPath:
    """Spine exploration towards a marked leaf.

    ``states[h] = (S, D, Mstar, W)`` with ``S`` in {"+", "-"}, ``D`` in
    {"<", ">"}.  State 0 is the convention ``("-", "<", k, 0)`` and the last
    state is the cemetery ``("+", "<", 0, 0)``.
    """
    k: int
    states: list[tuple[str, str, int, int]]
    ladder_epochs: list[int] = field(default_factory=list)

    @property
    def eta(self) -> int:
        return len(self.states) - 1

    @property
    def mstar(self) -> list[int]:
        return [s[2] for s in self.states]

    @property
    def forks(self) -> int:
        return sum(1 for s, _, m, w in self.states[1:] if s == "-" and m == w)

    @property
    def m_chain(self) -> list[int]:
        """The decreasing chain observed at ladder epochs (starts at k)."""
        ms = self.mstar
        return [ms[0]] + [ms[h] for h in self.ladder_epochs]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["h", "S", "D", "Mstar", "W"])
        for h, st in enumerate(self.states):
            w.writerow([h, *st])
        return buf.getvalue()

    def summary(self) -> dict:
        return {"k": self.k, "eta": self.eta, "forks": self.forks,
                "ladder_epochs": self.ladder_epochs}

    def to_json(self) -> str:
        return json.dumps(self.summary())


def spine_chain(tree: SignedTree, marked_leaf: int,
                ann: LisAnnotation | None = None) -> ChainPath:
    ann = ann or annotate(tree)
    path = [int(marked_leaf)]
    while tree.parent[path[-1]] != NONE:
        path.append(int(tree.parent[path[-1]]))
    path.reverse()
    if path[0] != tree.root or not tree.is_leaf(path[-1]):
        raise ValueError("marked_leaf is not a leaf of this tree")
    k = ann.value
    states = [("-", "<", k, 0)]
    for h in range(1, len(path)):
        u, v = path[h - 1], path[h]
        if v not in _lmax_choice(tree, ann, u):
            raise ValueError("marked leaf is outside the leftmost maximal subtree")
        go_left = tree.left[u] == v
        sib = tree.right[u] if go_left else tree.left[u]
        states.append(("+" if tree.sign[u] == PLUS else "-",
                       "<" if go_left else ">",
                       int(ann.lis[v]), int(ann.lis[sib])))
    states.append(("+", "<", 0, 0))
    ms = [s[2] for s in states]
    ladder = [h for h in range(1, len(ms)) if ms[h] < ms[h - 1]]
    return ChainPath(k, states, ladder)
