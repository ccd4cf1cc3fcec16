"""Compiled inner loops shared by the tree, LIS and sampler modules.

Arena conventions used throughout:

* ``sign[v]`` is ``PLUS`` (1), ``MINUS`` (-1) or ``LEAF`` (0).
* ``left[v] == right[v] == NONE`` for leaves.
* ``parent[root] == NONE`` (the planted edge hangs below the root);
  ``parent[v] == DEAD`` marks a tombstoned slot.

Edges are identified with the node sitting on top of them, so a compact
arena with ``2n - 1`` nodes has exactly ``2n - 1`` edges indexed
``0 .. 2n - 2``.
"""
import numpy as np
from numba import njit

PLUS = 1
MINUS = -1
LEAF = 0
NONE = -1
DEAD = -2


@njit(cache=True, nogil=True)
def preorder(left, right, root):
    n = left.shape[0]
    order = np.empty(n, np.int64)
    stack = np.empty(n + 1, np.int64)
    top = 0
    stack[0] = root
    top = 1
    cnt = 0
    while top > 0:
        top -= 1
        v = stack[top]
        order[cnt] = v
        cnt += 1
        if left[v] != NONE:
            stack[top] = right[v]
            stack[top + 1] = left[v]
            top += 2
    return order[:cnt]


@njit(cache=True, nogil=True)
def leaf_order(left, right, root):
    order = preorder(left, right, root)
    out = np.empty(order.shape[0], np.int64)
    cnt = 0
    for v in order:
        if left[v] == NONE:
            out[cnt] = v
            cnt += 1
    return out[:cnt]


@njit(cache=True, nogil=True)
def _combine(s, ll, lc, rl, rc):
    if s == PLUS:
        return ll + rl, lc + rc
    if ll > rl:
        return ll, lc
    if rl > ll:
        return rl, rc
    return ll, 0


@njit(cache=True, nogil=True)
def annotate(left, right, sign, root):
    n = left.shape[0]
    lis = np.zeros(n, np.int64)
    cap = np.zeros(n, np.int64)
    order = preorder(left, right, root)
    for j in range(order.shape[0] - 1, -1, -1):
        v = order[j]
        if left[v] == NONE:
            lis[v] = 1
            cap[v] = 1
        else:
            a = left[v]
            b = right[v]
            lis[v], cap[v] = _combine(sign[v], lis[a], cap[a], lis[b], cap[b])
    return lis, cap


@njit(cache=True, nogil=True)
def remy_grow(parent, left, right, sign, n_nodes, root, steps, p, rng):
    """Run ``steps`` forward Remy steps in place on a compact arena."""
    for _ in range(steps):
        e = rng.integers(0, n_nodes)
        s = PLUS if rng.random() < p else MINUS
        go_left = rng.random() < 0.5
        u = n_nodes
        leaf = n_nodes + 1
        n_nodes += 2
        pe = parent[e]
        parent[u] = pe
        if pe == NONE:
            root = u
        elif left[pe] == e:
            left[pe] = u
        else:
            right[pe] = u
        parent[e] = u
        parent[leaf] = u
        left[leaf] = NONE
        right[leaf] = NONE
        sign[leaf] = LEAF
        sign[u] = s
        if go_left:
            left[u] = leaf
            right[u] = e
        else:
            left[u] = e
            right[u] = leaf
    return n_nodes, root


@njit(cache=True, nogil=True)
def remy_trajectory(parent, left, right, sign, lis, cap, n_nodes, root,
                    steps, p, rng, xs, member):
    """Forward Remy steps with incremental annotation.

    ``xs[j]`` receives LIS after step ``j`` and ``member[j]`` whether the
    freshly inserted leaf lies in every maximal positive subtree.  Only the
    path from the insertion point to the root is recomputed.
    """
    for j in range(steps):
        e = rng.integers(0, n_nodes)
        s = PLUS if rng.random() < p else MINUS
        go_left = rng.random() < 0.5
        u = n_nodes
        leaf = n_nodes + 1
        n_nodes += 2
        pe = parent[e]
        parent[u] = pe
        if pe == NONE:
            root = u
        elif left[pe] == e:
            left[pe] = u
        else:
            right[pe] = u
        parent[e] = u
        parent[leaf] = u
        left[leaf] = NONE
        right[leaf] = NONE
        sign[leaf] = LEAF
        lis[leaf] = 1
        cap[leaf] = 1
        sign[u] = s
        if go_left:
            left[u] = leaf
            right[u] = e
        else:
            left[u] = e
            right[u] = leaf
        v = u
        fresh = True
        while v != NONE:
            a = left[v]
            b = right[v]
            nl, nc = _combine(sign[v], lis[a], cap[a], lis[b], cap[b])
            if not fresh and nl == lis[v] and nc == cap[v]:
                break
            lis[v] = nl
            cap[v] = nc
            fresh = False
            v = parent[v]
        xs[j] = lis[root]
        ok = True
        c = leaf
        v = u
        while v != NONE:
            if sign[v] == MINUS:
                d = right[v] if left[v] == c else left[v]
                if lis[c] <= lis[d]:
                    ok = False
                    break
            c = v
            v = parent[v]
        member[j] = ok
    return n_nodes, root


@njit(cache=True, nogil=True)
def bgw_fill(parent, left, right, sign, p, size_cap, rng):
    """Depth-first (left child first) critical binary BGW sample.

    Children always get larger indices than their parent, so a reverse
    index sweep is a valid bottom-up order.  Returns ``(n_nodes, n_leaves)``;
    ``n_leaves == -1`` signals that the leaf count would exceed the cap.
    Every still-pending vertex contributes at least one leaf, so the
    overflow test is exact.
    """
    stack = np.empty(size_cap + 2, np.int64)
    parent[0] = NONE
    n_nodes = 1
    stack[0] = 0
    top = 1
    leaves = 0
    while top > 0:
        top -= 1
        v = stack[top]
        if rng.random() < 0.5:
            left[v] = NONE
            right[v] = NONE
            sign[v] = LEAF
            leaves += 1
        else:
            sign[v] = PLUS if rng.random() < p else MINUS
            if leaves + top + 2 > size_cap:
                return n_nodes, -1
            a = n_nodes
            b = n_nodes + 1
            n_nodes += 2
            left[v] = a
            right[v] = b
            parent[a] = v
            parent[b] = v
            stack[top] = b
            stack[top + 1] = a
            top += 2
    return n_nodes, leaves


@njit(cache=True, nogil=True)
def _reverse_lis(left, right, sign, n_nodes, lis, cap):
    for v in range(n_nodes - 1, -1, -1):
        if left[v] == NONE:
            lis[v] = 1
            cap[v] = 1
        else:
            a = left[v]
            b = right[v]
            lis[v], cap[v] = _combine(sign[v], lis[a], cap[a], lis[b], cap[b])


@njit(cache=True, nogil=True)
def bgw_lis_batch(p, size_cap, samples, rng):
    """LIS and leaf count of ``samples`` capped BGW trees (-1 on overflow)."""
    m = 2 * size_cap + 2
    parent = np.empty(m, np.int64)
    left = np.empty(m, np.int64)
    right = np.empty(m, np.int64)
    sign = np.empty(m, np.int8)
    lis = np.empty(m, np.int64)
    cap = np.empty(m, np.int64)
    out_lis = np.empty(samples, np.int64)
    out_size = np.empty(samples, np.int64)
    for s in range(samples):
        n_nodes, leaves = bgw_fill(parent, left, right, sign, p, size_cap, rng)
        out_size[s] = leaves
        if leaves < 0:
            out_lis[s] = -1
        else:
            _reverse_lis(left, right, sign, n_nodes, lis, cap)
            out_lis[s] = lis[0]
    return out_lis, out_size


@njit(cache=True, nogil=True)
def _search(cum, lo, hi, x):
    # smallest index i in [lo, hi) with cum[i] > x; hi - 1 on round-off
    while lo < hi - 1:
        mid = (lo + hi) // 2
        if cum[mid - 1] > x:
            hi = mid
        else:
            lo = mid
    return lo


@njit(cache=True, nogil=True)
def conditioned_fill(parent, left, right, sign, target, k, p, qf, cumq,
                     plus_off, plus_cum, size_cap, rng):
    """Exact sampler of the BGW tree conditioned on LIS = k.

    Root cases and masses (per unit of conditioned probability):
    single leaf ``1/(2 q(1))`` when k = 1; negative root with right LIS k and
    left LIS i < k, mass ``(1-p) q(i) / 2``; negative root with left LIS k
    and right LIS i <= k, same mass; positive root splitting k = i + (k-i),
    mass ``p q(i) q(k-i) / (2 q(k))``.  Children are sampled recursively.
    ``cumq[i] = q(1) + ... + q(i)``; ``plus_cum[plus_off[k] + i - 1]`` is the
    cumulative of ``q(j) q(k-j)`` over ``j <= i``.
    Returns ``(n_nodes, n_leaves)`` with ``n_leaves == -1`` on overflow.
    """
    cap_nodes = parent.shape[0]
    stack = np.empty(cap_nodes + 1, np.int64)
    parent[0] = NONE
    target[0] = k
    n_nodes = 1
    stack[0] = 0
    top = 1
    leaves = 0
    pending = k
    while top > 0:
        top -= 1
        v = stack[top]
        kv = target[v]
        pending -= kv
        w_leaf = 0.5 / qf[1] if kv == 1 else 0.0
        w_nr = 0.5 * (1.0 - p) * cumq[kv - 1]
        w_nl = 0.5 * (1.0 - p) * cumq[kv]
        w_pl = 0.0
        if kv >= 2:
            w_pl = 0.5 * p * plus_cum[plus_off[kv] + kv - 2] / qf[kv]
        u = rng.random() * (w_leaf + w_nr + w_nl + w_pl)
        if u < w_leaf:
            left[v] = NONE
            right[v] = NONE
            sign[v] = LEAF
            leaves += 1
            continue
        if u < w_leaf + w_nr:
            sign[v] = MINUS
            i = _search(cumq, 1, kv, rng.random() * cumq[kv - 1])
            ka = i
            kb = kv
        elif u < w_leaf + w_nr + w_nl:
            sign[v] = MINUS
            i = _search(cumq, 1, kv + 1, rng.random() * cumq[kv])
            ka = kv
            kb = i
        else:
            sign[v] = PLUS
            off = plus_off[kv]
            x = rng.random() * plus_cum[off + kv - 2]
            lo = 1
            hi = kv
            while lo < hi - 1:
                mid = (lo + hi) // 2
                if plus_cum[off + mid - 2] > x:
                    hi = mid
                else:
                    lo = mid
            ka = lo
            kb = kv - lo
        pending += ka + kb
        if leaves + pending > size_cap or n_nodes + 2 > cap_nodes:
            return n_nodes, -1
        a = n_nodes
        b = n_nodes + 1
        n_nodes += 2
        left[v] = a
        right[v] = b
        parent[a] = v
        parent[b] = v
        target[a] = ka
        target[b] = kb
        stack[top] = b
        stack[top + 1] = a
        top += 2
    return n_nodes, leaves


@njit(cache=True, nogil=True)
def bgw_reject(parent, left, right, sign, lis, cap, p, k, size_cap, max_tries, rng):
    """Sample capped BGW trees until one has LIS = k.

    Returns ``(n_nodes, tries, overflows)``; ``n_nodes == -1`` when
    ``max_tries`` were exhausted.  The accepted tree is left in the arrays.
    """
    overflows = 0
    for t in range(1, max_tries + 1):
        n_nodes, leaves = bgw_fill(parent, left, right, sign, p, size_cap, rng)
        if leaves < 0:
            overflows += 1
            continue
        if leaves < k:
            continue
        _reverse_lis(left, right, sign, n_nodes, lis, cap)
        if lis[0] == k:
            return n_nodes, t, overflows
    return -1, max_tries, overflows


@njit(cache=True, nogil=True)
def conditioned_stats(parent, left, right, sign, target, lis, cap, k, p, qf, cumq,
                      plus_off, plus_cum, size_cap, samples, rng, out):
    """``out[s] = (leaves, lis, cap_count)`` of ``samples`` exact draws of
    the conditioned tree; leaves = -1 on overflow."""
    for s in range(samples):
        n_nodes, leaves = conditioned_fill(parent, left, right, sign, target, k, p,
                                           qf, cumq, plus_off, plus_cum, size_cap, rng)
        out[s, 0] = leaves
        if leaves < 0:
            out[s, 1] = -1
            out[s, 2] = -1
        else:
            _reverse_lis(left, right, sign, n_nodes, lis, cap)
            out[s, 1] = lis[0]
            out[s, 2] = cap[0]


@njit(cache=True, nogil=True)
def uniform_lis(n, p, rng):
    """LIS of one uniform signed tree with n leaves grown by Remy steps."""
    m = 2 * n - 1
    parent = np.full(m, NONE, np.int64)
    left = np.full(m, NONE, np.int64)
    right = np.full(m, NONE, np.int64)
    sign = np.zeros(m, np.int8)
    n_nodes, root = remy_grow(parent, left, right, sign, 1, 0, n - 1, p, rng)
    lis, cap = annotate(left, right, sign, root)
    return lis[root]
