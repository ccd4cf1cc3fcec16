"""Permutations and cographs read off signed trees, plus brute-force oracles
and an exactly uniform sampler of separable permutations."""
from __future__ import annotations

import bisect
import io
import itertools
import random
from functools import lru_cache
from math import comb

import numpy as np

from ._kernels import NONE, PLUS
from .rng import stream_seed
from .tree import SignedTree

BRUTE_LIMIT = 20


# -- tree -> permutation / graph -----------------------------------------

def tree_to_permutation(tree: SignedTree) -> list[int]:
    """Number leaves 1..n left to right, swap the children of every ``-``
    node, read the labels left to right."""
    label = {int(v): i + 1 for i, v in enumerate(tree.leaves())}
    out = []
    stack = [tree.root]
    left, right, sign = tree.left, tree.right, tree.sign
    while stack:
        v = stack.pop()
        a = left[v]
        if a == NONE:
            out.append(label[int(v)])
        elif sign[v] == PLUS:
            stack.append(right[v])
            stack.append(a)
        else:
            stack.append(a)
            stack.append(right[v])
    return out


def tree_to_graph(tree: SignedTree) -> np.ndarray:
    """Adjacency matrix: leaves i, j adjacent iff their highest common
    ancestor carries ``+``."""
    n = tree.leaf_count
    adj = np.zeros((n, n), dtype=bool)
    pos = {int(v): i for i, v in enumerate(tree.leaves())}
    below: dict[int, list[int]] = {}
    for v in tree.preorder()[::-1]:
        v = int(v)
        a = int(tree.left[v])
        if a == NONE:
            below[v] = [pos[v]]
            continue
        b = int(tree.right[v])
        la, lb = below.pop(a), below.pop(b)
        if tree.sign[v] == PLUS:
            ia, ib = np.array(la), np.array(lb)
            adj[np.ix_(ia, ib)] = True
            adj[np.ix_(ib, ia)] = True
        below[v] = la + lb
    return adj


def graph_edges(adj: np.ndarray) -> list[tuple[int, int]]:
    iu, ju = np.nonzero(np.triu(adj, 1))
    return list(zip(iu.tolist(), ju.tolist()))


def format_permutation(perm) -> str:
    return " ".join(str(int(x)) for x in perm)


def format_edges_csv(adj: np.ndarray) -> str:
    buf = io.StringIO()
    buf.write("u,v\n")
    for u, v in graph_edges(adj):
        buf.write(f"{u + 1},{v + 1}\n")
    return buf.getvalue()


# -- oracles --------------------------------------------------------------

def permutation_lis(perm) -> int:
    """Patience sorting, O(n log n)."""
    tops: list[int] = []
    for x in perm:
        i = bisect.bisect_left(tops, x)
        if i == len(tops):
            tops.append(x)
        else:
            tops[i] = x
    return len(tops)


def brute_lis(perm) -> int:
    """Exhaustive subsequence check; tiny inputs only."""
    n = len(perm)
    for r in range(n, 0, -1):
        for idx in itertools.combinations(range(n), r):
            if all(perm[idx[i]] < perm[idx[i + 1]] for i in range(r - 1)):
                return r
    return 0


def brute_max_clique(adj: np.ndarray) -> int:
    n = adj.shape[0]
    if n > BRUTE_LIMIT:
        raise ValueError(f"brute-force clique limited to {BRUTE_LIMIT} vertices")
    if n == 0:
        return 0
    nbr = [sum(1 << j for j in range(n) if adj[i, j] and i != j) for i in range(n)]
    best = 0

    def expand(size, cand):
        nonlocal best
        if cand == 0:
            best = max(best, size)
            return
        if size + bin(cand).count("1") <= best:
            return
        while cand:
            if size + bin(cand).count("1") <= best:
                return
            v = cand.bit_length() - 1
            cand &= ~(1 << v)
            expand(size + 1, cand & nbr[v])

    expand(0, (1 << n) - 1)
    return best


def brute_max_independent(adj: np.ndarray) -> int:
    comp = ~adj
    np.fill_diagonal(comp, False)
    return brute_max_clique(comp)


def is_p4_free(adj: np.ndarray) -> bool:
    """Scan every 4-subset for an induced path on four vertices."""
    n = adj.shape[0]
    a = adj.tolist()
    for quad in itertools.combinations(range(n), 4):
        deg = [0, 0, 0, 0]
        edges = 0
        for (i, u), (j, v) in itertools.combinations(enumerate(quad), 2):
            if a[u][v]:
                deg[i] += 1
                deg[j] += 1
                edges += 1
        # three edges with degrees 1,1,2,2 is exactly P4 (a star has a 3,
        # a triangle plus isolated vertex a 0)
        if edges == 3 and sorted(deg) == [1, 1, 2, 2]:
            return False
    return True


def contains_pattern(perm, pattern) -> bool:
    k = len(pattern)
    order = sorted(range(k), key=lambda i: pattern[i])
    for idx in itertools.combinations(range(len(perm)), k):
        vals = [perm[i] for i in idx]
        if sorted(range(k), key=lambda i: vals[i]) == order:
            return True
    return False


def is_separable_brute(perm) -> bool:
    if len(perm) > 12:
        raise ValueError("brute-force pattern scan limited to n <= 12")
    return not (contains_pattern(perm, (2, 4, 1, 3))
                or contains_pattern(perm, (3, 1, 4, 2)))


def is_separable(perm) -> bool:
    """Stack reduction: merge neighbouring blocks whose values form an
    interval; separable iff a single block remains."""
    stack: list[tuple[int, int]] = []
    for x in perm:
        lo, hi = x, x
        while stack:
            a, b = stack[-1]
            if b + 1 == lo or hi + 1 == a:
                stack.pop()
                lo, hi = min(a, lo), max(b, hi)
            else:
                break
        stack.append((lo, hi))
    return len(stack) == 1 and (not perm or stack[0] == (1, len(perm)))


def is_permutation(perm) -> bool:
    return sorted(perm) == list(range(1, len(perm) + 1))


# -- uniform separable permutations ---------------------------------------

class SchroderCountTable:
    """Big-integer counts of separable permutations.

    ``total[n]`` counts separable permutations of size n;
    ``by_root[n] = (plus, minus)`` splits them by the sign of the root of the
    canonical decomposition tree (``n >= 2``; both halves are equal).
    Counted through ``total[n] = 2 sum_{j<n} indec[j] total[n-j]`` where
    ``indec[j]`` counts the ``+``-indecomposable ones.
    """

    def __init__(self, nmax: int):
        total = [1, 1]
        indec = [0, 1]
        for n in range(2, nmax + 1):
            t = 2 * sum(indec[j] * total[n - j] for j in range(1, n))
            total.append(t)
            indec.append(t // 2)
        self.total = total
        self.indec = indec

    def by_root(self, n: int) -> tuple[int, int]:
        if n < 2:
            raise ValueError("root sign defined for n >= 2")
        return self.total[n] // 2, self.total[n] // 2


def schroder_trees_by_internal(n: int, k: int) -> int:
    """Plane trees with n leaves and k internal nodes, all of out-degree >= 2."""
    if n == 1:
        return 1 if k == 0 else 0
    if not 1 <= k <= n - 1:
        return 0
    return comb(n + k, k) * comb(n - 2, k - 1) // (n + k)


@lru_cache(maxsize=64)
def _internal_weights(n: int) -> tuple[list[int], int]:
    w = [schroder_trees_by_internal(n, k) for k in range(n)]
    return w, sum(w)


def separable_count(n: int) -> int:
    if n == 1:
        return 1
    return 2 * _internal_weights(n)[1]


def _random_schroder_word(n: int, rnd: random.Random) -> list[int]:
    """Uniform Lukasiewicz word (out-degrees in preorder) of a plane tree
    with n leaves whose internal nodes have out-degree >= 2."""
    weights, total = _internal_weights(n)
    x = rnd.randrange(total)
    k = 0
    while x >= weights[k]:
        x -= weights[k]
        k += 1
    # degrees: composition of n + k - 1 into k parts >= 2
    cuts = sorted(rnd.sample(range(1, n - 1), k - 1))
    bounds = [0] + cuts + [n - 1]
    degs = [bounds[i + 1] - bounds[i] + 1 for i in range(k)]
    size = n + k
    where = set(rnd.sample(range(size), k))
    word, it = [], iter(degs)
    for i in range(size):
        word.append(next(it) if i in where else 0)
    # cycle lemma: the unique rotation starting after the first minimum of
    # the partial sums of (degree - 1) is a valid preorder word
    s, best, at = 0, 1, 0
    for i, d in enumerate(word):
        s += d - 1
        if s < best:
            best, at = s, i + 1
    at %= size
    return word[at:] + word[:at]


def _word_to_permutation(word: list[int], root_plus: bool) -> list[int]:
    # children of each node; signs alternate by depth starting at the root
    n_nodes = len(word)
    children: list[list[int]] = [[] for _ in range(n_nodes)]
    stack: list[list[int]] = []
    for v, d in enumerate(word):
        if stack:
            top = stack[-1]
            children[top[0]].append(v)
            top[1] -= 1
            if top[1] == 0:
                stack.pop()
        if d:
            stack.append([v, d])
    # assign value ranges top-down
    n = sum(1 for d in word if d == 0)
    perm = []
    lo = {0: 1}
    plus = {0: root_plus}
    sizes = [0] * n_nodes
    for v in range(n_nodes - 1, -1, -1):
        sizes[v] = 1 if word[v] == 0 else sum(sizes[c] for c in children[v])
    for v in range(n_nodes):
        if word[v] == 0:
            perm.append(lo[v])
            continue
        kids = children[v]
        seq = kids if plus[v] else kids[::-1]
        base = lo[v]
        for c in seq:
            lo[c] = base
            plus[c] = not plus[v]
            base += sizes[c]
    assert len(perm) == n
    return perm


def sample_uniform_separable(n: int, seed) -> list[int]:
    """Exactly uniform separable permutation of size n.

    Canonical decomposition trees (no child with its parent's sign, every
    internal node with >= 2 children) are in bijection with separable
    permutations.  The shape is drawn uniformly among plane trees with
    out-degrees >= 2 via big-integer proportional choice of the internal
    node count, a uniform degree composition, uniform placement and the
    cycle lemma; the root sign is a fair coin and signs alternate below.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rnd = random.Random(stream_seed(int(seed), 0))
    if n == 1:
        return [1]
    word = _random_schroder_word(n, rnd)
    return _word_to_permutation(word, rnd.random() < 0.5)


def enumerate_separable(n: int) -> list[tuple[int, ...]]:
    """All separable permutations of size n by brute-force pattern scan."""
    return [p for p in itertools.permutations(range(1, n + 1))
            if is_separable_brute(p)]
