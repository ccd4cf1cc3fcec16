"""Planted signed binary trees and Remy dynamics.

A :class:`SignedTree` is a flat arena of nodes.  Internal nodes carry a
sign, ``+`` (PLUS) or ``-`` (MINUS); leaves carry none.  The planted edge
below the root is implicit: the root's parent is ``NONE``.

Textual form, one character per vertex in preorder::

    leaf := "."
    node := "(" left right ")" sign        sign in {"+", "-"}

so the two-leaf tree with a negative root is ``"(..)-"``.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from . import _kernels as K
from ._kernels import DEAD, LEAF, MINUS, NONE, PLUS
from .rng import as_rng, make_rng

__all__ = [
    "PLUS", "MINUS", "LEAF", "NONE", "DEAD",
    "SignedTree", "StepRecord", "Overflow",
    "single_leaf_tree", "remy_forward", "remy_backward", "remove_leaf",
    "sample_uniform_signed_tree", "sample_bgw_signed_tree",
    "induced_subtree", "region_sizes", "iter_signed_trees",
]


class Overflow(Exception):
    """A capped sampler would have produced more leaves than allowed."""

    def __init__(self, size_cap: int, message: str | None = None):
        self.size_cap = size_cap
        super().__init__(message or f"leaf count exceeds size_cap={size_cap}")


@dataclass(frozen=True, eq=False)
class SignedTree:
    parent: np.ndarray
    left: np.ndarray
    right: np.ndarray
    sign: np.ndarray
    root: int
    leaf_count: int

    def __post_init__(self):
        for arr in (self.parent, self.left, self.right, self.sign):
            arr.flags.writeable = False

    # -- basic queries -------------------------------------------------
    @property
    def n_slots(self) -> int:
        return int(self.parent.shape[0])

    def alive(self) -> np.ndarray:
        return np.flatnonzero(self.parent != DEAD)

    def is_leaf(self, v: int) -> bool:
        return self.left[v] == NONE

    def leaves(self) -> np.ndarray:
        """Leaf indices in left-to-right planar order."""
        return K.leaf_order(self.left, self.right, self.root)

    def preorder(self) -> np.ndarray:
        return K.preorder(self.left, self.right, self.root)

    def internal_count(self) -> int:
        a = self.alive()
        return int(np.count_nonzero(self.left[a] != NONE))

    def edge_count(self) -> int:
        # every alive vertex owns the edge above it, including the planted one
        return int(self.alive().shape[0])

    def children(self, v: int) -> tuple[int, int]:
        return int(self.left[v]), int(self.right[v])

    # -- structure -----------------------------------------------------
    def compact(self) -> "SignedTree":
        """Drop tombstoned slots, keeping the relative order of the others."""
        keep = self.alive()
        if keep.shape[0] == self.n_slots:
            return self
        remap = np.full(self.n_slots, NONE, np.int64)
        remap[keep] = np.arange(keep.shape[0])

        def rm(a):
            a = a[keep]
            return np.where(a >= 0, remap[np.maximum(a, 0)], a)

        return SignedTree(rm(self.parent), rm(self.left), rm(self.right),
                          self.sign[keep].copy(), int(remap[self.root]),
                          self.leaf_count)

    def validate(self) -> None:
        """Raise ``ValueError`` if the arena is not a valid signed tree."""
        if self.parent[self.root] != NONE:
            raise ValueError("root must have no parent")
        order = self.preorder()
        if len(set(order.tolist())) != order.shape[0]:
            raise ValueError("cycle in child pointers")
        if order.shape[0] != self.alive().shape[0]:
            raise ValueError("alive slots unreachable from root")
        n_leaves = 0
        for v in order:
            a, b = self.left[v], self.right[v]
            if (a == NONE) != (b == NONE):
                raise ValueError(f"node {v} has exactly one child")
            if a == NONE:
                n_leaves += 1
                if self.sign[v] != LEAF:
                    raise ValueError(f"leaf {v} carries a sign")
            else:
                if self.sign[v] not in (PLUS, MINUS):
                    raise ValueError(f"node {v} has no sign")
                if self.parent[a] != v or self.parent[b] != v:
                    raise ValueError(f"parent pointers of {v} inconsistent")
        if n_leaves != self.leaf_count:
            raise ValueError("leaf_count mismatch")

    def flipped(self) -> "SignedTree":
        """Same shape with every sign reversed."""
        return SignedTree(self.parent.copy(), self.left.copy(), self.right.copy(),
                          (-self.sign.astype(np.int64)).astype(np.int8),
                          self.root, self.leaf_count)

    def arrays(self):
        return (self.parent.copy(), self.left.copy(), self.right.copy(),
                self.sign.copy())

    # -- serialization -------------------------------------------------
    def to_string(self) -> str:
        out = []
        stack: list = [self.root]
        while stack:
            item = stack.pop()
            if isinstance(item, str):
                out.append(item)
                continue
            v = item
            if self.left[v] == NONE:
                out.append(".")
            else:
                out.append("(")
                stack.append(")" + ("+" if self.sign[v] == PLUS else "-"))
                stack.append(int(self.right[v]))
                stack.append(int(self.left[v]))
        return "".join(out)

    __str__ = to_string

    @classmethod
    def from_string(cls, text: str) -> "SignedTree":
        text = "".join(text.split())
        parent, left, right, sign = [], [], [], []

        def new(par):
            parent.append(par)
            left.append(NONE)
            right.append(NONE)
            sign.append(LEAF)
            return len(parent) - 1

        # stack entries: [node, number of children attached so far]
        stack: list[list[int]] = []
        root = None
        i = 0
        while i < len(text):
            ch = text[i]
            par = stack[-1][0] if stack else NONE
            if ch in ".(":
                if root is not None and not stack:
                    raise ValueError(f"trailing input at position {i}")
                v = new(par)
                if stack:
                    top = stack[-1]
                    if top[1] == 0:
                        left[top[0]] = v
                    elif top[1] == 1:
                        right[top[0]] = v
                    else:
                        raise ValueError(f"node with more than two children at {i}")
                    top[1] += 1
                if root is None:
                    root = v
                if ch == "(":
                    stack.append([v, 0])
            elif ch == ")":
                if not stack or stack[-1][1] != 2:
                    raise ValueError(f"unbalanced or non-binary node at {i}")
                if i + 1 >= len(text) or text[i + 1] not in "+-":
                    raise ValueError(f"missing sign after ')' at {i}")
                v = stack.pop()[0]
                sign[v] = PLUS if text[i + 1] == "+" else MINUS
                i += 1
            else:
                raise ValueError(f"unexpected character {ch!r} at {i}")
            i += 1
        if root is None or stack:
            raise ValueError("incomplete tree string")
        arr = lambda xs, dt=np.int64: np.array(xs, dtype=dt)
        leaf_count = sum(1 for x in left if x == NONE)
        return cls(arr(parent), arr(left), arr(right), arr(sign, np.int8), root,
                   leaf_count)

    def to_json(self) -> dict:
        def enc(x):
            return None if x == NONE else int(x)

        nodes = []
        for v in range(self.n_slots):
            if self.parent[v] == DEAD:
                nodes.append(None)
                continue
            s = self.sign[v]
            nodes.append({
                "parent": enc(self.parent[v]),
                "left": enc(self.left[v]),
                "right": enc(self.right[v]),
                "sign": None if s == LEAF else ("+" if s == PLUS else "-"),
            })
        return {"nodes": nodes, "root": int(self.root)}

    @classmethod
    def from_json(cls, data) -> "SignedTree":
        if isinstance(data, str):
            data = json.loads(data)
        nodes = data["nodes"]
        n = len(nodes)
        parent = np.full(n, DEAD, np.int64)
        left = np.full(n, NONE, np.int64)
        right = np.full(n, NONE, np.int64)
        sign = np.zeros(n, np.int8)
        leaves = 0
        for v, rec in enumerate(nodes):
            if rec is None:
                continue
            dec = lambda x: NONE if x is None else int(x)
            parent[v] = dec(rec["parent"])
            left[v] = dec(rec["left"])
            right[v] = dec(rec["right"])
            sign[v] = {None: LEAF, "+": PLUS, "-": MINUS}[rec["sign"]]
            leaves += left[v] == NONE
        tree = cls(parent, left, right, sign, int(data["root"]), int(leaves))
        tree.validate()
        return tree

    # -- comparison ----------------------------------------------------
    def same_as(self, other: "SignedTree") -> bool:
        """Equality of signed planar shapes, ignoring arena indices."""
        return self.to_string() == other.to_string()

    def identical(self, other: "SignedTree") -> bool:
        """Bit-exact arena equality."""
        return (self.root == other.root and self.leaf_count == other.leaf_count
                and all(np.array_equal(a, b) for a, b in
                        zip(self.arrays(), other.arrays())))


@dataclass(frozen=True)
class StepRecord:
    chosen_edge: int
    new_sign: int
    side: str
    new_leaf: int


def single_leaf_tree() -> SignedTree:
    return SignedTree(np.array([NONE], np.int64), np.array([NONE], np.int64),
                      np.array([NONE], np.int64), np.array([LEAF], np.int8), 0, 1)


def remy_forward(tree: SignedTree, p: float, rng) -> tuple[SignedTree, StepRecord]:
    """One forward Remy step.

    Draw order: edge (uniform over the ``2n - 1`` alive vertices, in slot
    order), sign (``+`` with probability ``p``), side of the new leaf.
    The new internal node and leaf are appended as the last two slots.
    """
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    rng = as_rng(rng)
    parent, left, right, sign = tree.arrays()
    alive = tree.alive()
    e = int(alive[rng.integers(0, alive.shape[0])])
    s = PLUS if rng.random() < p else MINUS
    go_left = rng.random() < 0.5
    m = tree.n_slots
    u, leaf = m, m + 1
    parent = np.append(parent, [NONE, u])
    left = np.append(left, [NONE, NONE])
    right = np.append(right, [NONE, NONE])
    sign = np.append(sign, np.array([s, LEAF], np.int8))
    pe = parent[e]
    parent[u] = pe
    root = tree.root
    if pe == NONE:
        root = u
    elif left[pe] == e:
        left[pe] = u
    else:
        right[pe] = u
    parent[e] = u
    if go_left:
        left[u], right[u] = leaf, e
    else:
        left[u], right[u] = e, leaf
    out = SignedTree(parent, left, right, sign, int(root), tree.leaf_count + 1)
    return out, StepRecord(e, int(s), "left" if go_left else "right", leaf)


def remove_leaf(tree: SignedTree, leaf: int, compact: bool = True) -> SignedTree:
    """Delete ``leaf`` and contract its parent (the inverse of a Remy step)."""
    if tree.leaf_count < 2:
        raise ValueError("cannot remove the only leaf")
    if tree.parent[leaf] == DEAD or not tree.is_leaf(leaf):
        raise ValueError(f"{leaf} is not a leaf of this tree")
    parent, left, right, sign = tree.arrays()
    u = parent[leaf]
    sib = right[u] if left[u] == leaf else left[u]
    g = parent[u]
    parent[sib] = g
    root = tree.root
    if g == NONE:
        root = sib
    elif left[g] == u:
        left[g] = sib
    else:
        right[g] = sib
    for v in (u, leaf):
        parent[v] = DEAD
        left[v] = NONE
        right[v] = NONE
        sign[v] = LEAF
    out = SignedTree(parent, left, right, sign, int(root), tree.leaf_count - 1)
    return out.compact() if compact else out


def remy_backward(tree: SignedTree, rng, compact: bool = True) -> tuple[SignedTree, int]:
    """Remove a uniform leaf; returns the new tree and the removed slot index
    (an index of the input tree)."""
    if tree.leaf_count < 2:
        raise ValueError("remy_backward needs at least two leaves")
    rng = as_rng(rng)
    leaves = tree.leaves()
    leaf = int(leaves[rng.integers(0, leaves.shape[0])])
    return remove_leaf(tree, leaf, compact=compact), leaf


def _empty_arena(m: int):
    return (np.full(m, NONE, np.int64), np.full(m, NONE, np.int64),
            np.full(m, NONE, np.int64), np.zeros(m, np.int8))


def sample_uniform_signed_tree(n: int, p: float, seed) -> SignedTree:
    """Uniform planar binary tree with ``n`` leaves and i.i.d. signs,
    built by ``n - 1`` forward Remy steps from a single leaf."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    rng = as_rng(seed)
    parent, left, right, sign = _empty_arena(2 * n - 1)
    n_nodes, root = K.remy_grow(parent, left, right, sign, 1, 0, n - 1, p, rng)
    return SignedTree(parent, left, right, sign, int(root), n)


def sample_bgw_signed_tree(p: float, seed, size_cap: int) -> SignedTree:
    """Critical binary BGW tree with i.i.d. signs; raises :class:`Overflow`
    when the leaf count would exceed ``size_cap``."""
    if size_cap < 1:
        raise ValueError("size_cap must be >= 1")
    rng = as_rng(seed)
    m = 2 * size_cap + 2
    parent, left, right, sign = _empty_arena(m)
    n_nodes, leaves = K.bgw_fill(parent, left, right, sign, p, size_cap, rng)
    if leaves < 0:
        raise Overflow(size_cap)
    return SignedTree(parent[:n_nodes].copy(), left[:n_nodes].copy(),
                      right[:n_nodes].copy(), sign[:n_nodes].copy(), 0, int(leaves))


def _check_leafset(tree: SignedTree, leaves: Sequence[int]) -> np.ndarray:
    ls = np.asarray(sorted(set(int(x) for x in leaves)), np.int64)
    if ls.shape[0] == 0:
        raise ValueError("leaf set must be nonempty")
    if len(ls) != len(list(leaves)):
        raise ValueError("duplicate leaves")
    if (ls < 0).any() or (ls >= tree.n_slots).any():
        raise ValueError("leaf index out of range")
    if any(tree.parent[v] == DEAD or not tree.is_leaf(v) for v in ls):
        raise ValueError("leaf set contains non-leaf indices")
    return ls


def _marked_counts(tree: SignedTree, ls: np.ndarray) -> np.ndarray:
    cnt = np.zeros(tree.n_slots, np.int64)
    cnt[ls] = 1
    order = tree.preorder()
    for v in order[::-1]:
        a = tree.left[v]
        if a != NONE:
            cnt[v] = cnt[a] + cnt[tree.right[v]]
    return cnt


def induced_subtree(tree: SignedTree, leaves: Sequence[int]) -> SignedTree:
    """Contracted subtree spanned by ``leaves`` (signs inherited)."""
    ls = _check_leafset(tree, leaves)
    cnt = _marked_counts(tree, ls)

    def descend(v):
        # skip unary vertices of the spanned subtree
        while tree.left[v] != NONE:
            a, b = tree.left[v], tree.right[v]
            if cnt[a] and cnt[b]:
                break
            v = a if cnt[a] else b
        return v

    parent, left, right, sign = [], [], [], []
    stack = [(descend(tree.root), NONE, 0)]
    while stack:
        v, par, side = stack.pop()
        idx = len(parent)
        parent.append(par)
        left.append(NONE)
        right.append(NONE)
        sign.append(tree.sign[v])
        if par != NONE:
            (left if side == 0 else right)[par] = idx
        if tree.left[v] != NONE:
            stack.append((descend(tree.right[v]), idx, 1))
            stack.append((descend(tree.left[v]), idx, 0))
    a = lambda xs, dt=np.int64: np.array(xs, dtype=dt)
    return SignedTree(a(parent), a(left), a(right), a(sign, np.int8), 0, len(ls))


def region_sizes(tree: SignedTree, leaves: Sequence[int]) -> np.ndarray:
    """Leaf counts of the regions cut out by the subtree spanned by ``leaves``.

    The spanned contracted tree has ``2m - 1`` edges; each edge owns the
    component of the big tree hanging along it.  Entries ``0 .. m-1`` are the
    edges above the marked leaves (in the order given, marked leaf itself
    excluded); the remaining ``m - 1`` entries are the internal edges and the
    root edge, in preorder of their lower endpoint.
    """
    given = [int(x) for x in leaves]
    ls = _check_leafset(tree, given)
    cnt = _marked_counts(tree, ls)
    m = ls.shape[0]
    # lower endpoints of contracted edges: marked leaves and branching nodes
    order = tree.preorder()
    branching = [int(v) for v in order if tree.left[v] != NONE
                 and cnt[tree.left[v]] and cnt[tree.right[v]]]
    slot = {v: i for i, v in enumerate(given)}
    for j, v in enumerate(branching):
        slot[v] = m + j
    sizes = np.zeros(2 * m - 1, np.int64)

    def lower_end(v):
        while v not in slot:
            a = tree.left[v]
            v = a if cnt[a] else tree.right[v]
        return v

    for lam in tree.leaves():
        if lam in slot:
            continue
        v = lam
        while cnt[v] == 0:
            v = tree.parent[v]
        sizes[slot[lower_end(v)]] += 1
    return sizes


def iter_signed_trees(n: int) -> Iterator[SignedTree]:
    """All signed planar binary trees with ``n`` leaves (``C(n-1) 2^(n-1)``)."""
    for shape in _shapes(n):
        k = shape.count("(")
        for signs in itertools.product("+-", repeat=k):
            it = iter(signs)
            s = "".join(next(it) if ch == "#" else ch for ch in shape)
            yield SignedTree.from_string(s)


def _shapes(n: int) -> list[str]:
    # shapes with '#' as sign placeholder, filled in preorder of ')' tokens
    memo: dict[int, list[str]] = {1: ["."]}

    def go(m):
        if m not in memo:
            memo[m] = [f"({a}{b})#" for i in range(1, m)
                       for a in go(i) for b in go(m - i)]
        return memo[m]

    return go(n)
