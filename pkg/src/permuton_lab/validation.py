"""Brute-force equivalence suites behind ``permuton-lab validate``.

Each suite returns a mapping ``check name -> number of mismatches`` plus
the number of cases examined; a suite passes when every count is zero.
"""
from __future__ import annotations

import math
from collections import Counter

import numpy as np

from . import lis as L
from . import structures as S
from .rng import make_rng
from .sequences import METHODS, pi_row, q_table, solve_alpha
from .tree import SignedTree, iter_signed_trees, sample_uniform_signed_tree

SMALL = 12
P_VALUES = (0.2, 0.5, 0.8)


def _leaf_positions(tree: SignedTree, leafset) -> tuple[int, ...]:
    pos = {int(v): i for i, v in enumerate(tree.leaves())}
    return tuple(sorted(pos[int(v)] for v in leafset))


def check_tree(tree: SignedTree, small: bool, bad: Counter) -> None:
    """Run every oracle applicable to ``tree``, counting failures in ``bad``."""
    ann = L.annotate(tree)
    k = ann.value
    perm = S.tree_to_permutation(tree)
    bad["lis_vs_patience"] += S.permutation_lis(perm) != k
    bad["cap_le_lis_le_n"] += not (0 <= ann.root_cap <= k <= tree.leaf_count)
    bad["separable_stack"] += not S.is_separable(perm)
    if not small:
        return
    bad["separable_patterns"] += not S.is_separable_brute(perm)
    adj = S.tree_to_graph(tree)
    bad["lis_vs_clique"] += S.brute_max_clique(adj) != k
    bad["p4_free"] += not S.is_p4_free(adj)
    flip_adj = S.tree_to_graph(tree.flipped())
    bad["flip_duality"] += S.brute_max_clique(flip_adj) != S.brute_max_independent(adj)
    sets = L.enumerate_maximal_positive_subtrees(tree)
    inter = frozenset.intersection(*sets)
    bad["cap_vs_enumeration"] += len(inter) != ann.root_cap
    bad["intersection_set"] += set(map(int, L.intersection_leaves(tree, ann))) != set(inter)
    lmax = frozenset(int(v) for v in L.leftmost_max_subtree(tree, ann))
    least = min(sets, key=lambda s: _leaf_positions(tree, s))
    bad["leftmost_is_least"] += lmax != least
    bad["membership_path_test"] += sum(
        L.in_intersection(tree, int(v), ann) != (int(v) in inter) for v in tree.leaves())


def oracle_suite(samples: int = 10_000, seed: int = 1, n_max: int = 500,
                 exhaustive_n: int = 6) -> dict:
    """Exhaustive signed trees up to ``exhaustive_n`` leaves, then ``samples``
    random uniform trees (half with n <= 12, half up to ``n_max``)."""
    bad: Counter = Counter()
    cases = 0
    for n in range(1, exhaustive_n + 1):
        for t in iter_signed_trees(n):
            check_tree(t, True, bad)
            cases += 1
    rng = make_rng(seed, 0)
    for i in range(samples):
        small = i % 2 == 0
        n = int(rng.integers(1, SMALL + 1)) if small else int(rng.integers(SMALL + 1, n_max + 1))
        p = P_VALUES[i % 3]
        t = sample_uniform_signed_tree(n, p, make_rng(seed, i + 1))
        check_tree(t, small, bad)
        cases += 1
    names = ["lis_vs_patience", "cap_le_lis_le_n", "separable_stack", "separable_patterns",
             "lis_vs_clique", "p4_free", "flip_duality", "cap_vs_enumeration",
             "intersection_set", "leftmost_is_least", "membership_path_test"]
    return {"cases": cases, "mismatches": {k: int(bad[k]) for k in names}}


def sequences_suite(p: float = 0.5, K: int = 2000) -> dict:
    bad = {}
    table = q_table(p, K)
    bad["q1_closed_form"] = int(abs(table.q[1] - 1 / (1 + math.sqrt(p))) > 1e-15)
    bad["pi_rows"] = int(sum(abs(np.sum(pi_row(table, m)) - 1) > 1e-10
                             for m in range(2, K + 1)))
    bad["Q_monotone"] = int(not (np.diff(table.Q[1:]) < 0).all())
    grid = [round(0.05 * i, 2) for i in range(1, 20)]
    alphas = []
    for g in grid:
        vals = [solve_alpha(g, m).alpha for m in METHODS]
        bad.setdefault("alpha_methods", 0)
        bad["alpha_methods"] += int(max(vals) - min(vals) > 1e-8)
        alphas.append(vals[0])
    bad["alpha_monotone"] = int(not all(b > a for a, b in zip(alphas, alphas[1:])))
    return {"cases": K + len(grid), "mismatches": bad}


SUITES = {"oracle": oracle_suite, "sequences": sequences_suite}


def run_suite(name: str, samples: int | None = None, seed: int = 1) -> dict:
    if name == "all":
        out = {}
        for key in SUITES:
            out[key] = run_suite(key, samples, seed)[key]
        out["passed"] = all(v["passed"] for v in out.values())
        return out
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r}")
    if name == "oracle":
        res = oracle_suite(samples or 2000, seed)
    else:
        res = sequences_suite()
    res["passed"] = not any(res["mismatches"].values())
    return {name: res, "passed": res["passed"]}
