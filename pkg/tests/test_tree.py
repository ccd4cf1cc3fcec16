from collections import Counter
from fractions import Fraction
from math import factorial

import numpy as np
import pytest

from conftest import chi2_pvalue, within_se
from permuton_lab import lis as L
from permuton_lab._kernels import MINUS, PLUS
from permuton_lab.rng import make_rng, splitmix64, stream_seed
from permuton_lab.tree import (Overflow, SignedTree, induced_subtree, iter_signed_trees,
                               region_sizes, remove_leaf, remy_backward, remy_forward,
                               sample_bgw_signed_tree, sample_uniform_signed_tree,
                               single_leaf_tree)


def shape_key(tree: SignedTree) -> str:
    return tree.compact().to_string()


def test_single_leaf():
    t = single_leaf_tree()
    assert t.leaf_count == 1 and t.internal_count() == 0 and t.edge_count() == 1
    assert L.lis(t) == 1
    assert t.to_string() == "."


def test_splitmix_reference_values():
    # published splitmix64 outputs for the state sequence seeded at 0
    assert splitmix64(0x9E3779B97F4A7C15) == 0xE220A8397B1DCDAF
    assert splitmix64(2 * 0x9E3779B97F4A7C15 % 2 ** 64) == 0x6E789E6AA1B965F4
    assert stream_seed(0, 0) == 0xE220A8397B1DCDAF


def test_forward_counts():
    rng = make_rng(3)
    t = single_leaf_tree()
    for n in range(1, 40):
        assert t.leaf_count == n and t.internal_count() == n - 1 and t.edge_count() == 2 * n - 1
        t, rec = remy_forward(t, 0.4, rng)
        assert t.is_leaf(rec.new_leaf)
        t.validate()


def test_forward_restriction_reproduces_old_tree():
    rng = make_rng(5)
    t = sample_uniform_signed_tree(30, 0.5, 9)
    for _ in range(20):
        old = t
        t, rec = remy_forward(t, 0.5, rng)
        back = induced_subtree(t, [v for v in t.leaves() if v != rec.new_leaf])
        assert back.same_as(old)


def test_forward_then_remove_new_leaf_is_bit_exact():
    rng = make_rng(11)
    t = sample_uniform_signed_tree(25, 0.3, 2)
    for _ in range(10):
        t2, rec = remy_forward(t, 0.3, rng)
        back = remove_leaf(t2, rec.new_leaf)
        assert back.identical(t)
        t = t2


def test_sign_fraction_p03():
    n = 100_001
    t = sample_uniform_signed_tree(n, 0.3, 2024)
    internal = t.sign[t.sign != 0]
    frac_minus = float(np.mean(internal == MINUS))
    se = np.sqrt(0.3 * 0.7 / internal.shape[0])
    assert abs(frac_minus - 0.7) <= 4 * se


def test_two_leaf_sign_frequency():
    N = 100_000
    plus = sum(sample_uniform_signed_tree(2, 0.3, s).sign.max() == PLUS for s in range(N))
    assert within_se(plus, N, 0.3)


def test_t3_law_chi_square():
    # 2 shapes x 4 sign patterns, uniform shape and i.i.d. signs
    p, N = 0.3, 100_000
    keys = [t.to_string() for t in iter_signed_trees(3)]
    probs = [0.5 * p ** s.count("+") * (1 - p) ** s.count("-") for s in keys]
    cnt = Counter(sample_uniform_signed_tree(3, p, s).to_string() for s in range(N))
    assert set(cnt) <= set(keys)
    assert chi2_pvalue([cnt[k] for k in keys], probs) > 1e-3


def _uniform_law(n, p):
    keys = [t.to_string() for t in iter_signed_trees(n)]
    shapes = len(keys) // 2 ** (n - 1)
    return keys, [p ** s.count("+") * (1 - p) ** s.count("-") / shapes for s in keys]


def test_backward_from_t4_is_t3():
    p, N = 0.5, 100_000
    keys, probs = _uniform_law(3, p)
    rng = make_rng(77)
    cnt = Counter()
    for s in range(N):
        t = sample_uniform_signed_tree(4, p, s)
        cnt[remy_backward(t, rng)[0].to_string()] += 1
    assert chi2_pvalue([cnt[k] for k in keys], probs) > 1e-3


def test_backward_rejects_single_leaf_and_two_leaf_case():
    with pytest.raises(ValueError):
        remy_backward(single_leaf_tree(), make_rng(1))
    t = SignedTree.from_string("(..)-")
    out, leaf = remy_backward(t, make_rng(1))
    assert out.identical(single_leaf_tree()) or out.same_as(single_leaf_tree())


def test_induced_subtree_law_of_t3():
    p, N = 0.5, 100_000
    keys, probs = _uniform_law(3, p)
    rng = make_rng(8)
    cnt = Counter()
    for s in range(N):
        t = sample_uniform_signed_tree(5, p, s)
        sub = rng.choice(t.leaves(), 3, replace=False)
        cnt[induced_subtree(t, sub).to_string()] += 1
    assert chi2_pvalue([cnt[k] for k in keys], probs) > 1e-3


def test_induced_subtree_edge_cases():
    t = sample_uniform_signed_tree(12, 0.5, 4)
    assert induced_subtree(t, t.leaves()).same_as(t)
    assert induced_subtree(t, [t.leaves()[3]]).same_as(single_leaf_tree())
    with pytest.raises(ValueError):
        induced_subtree(t, [])
    with pytest.raises(ValueError):
        induced_subtree(t, [t.root])


def _dirmult_pmf(counts, a=Fraction(1, 2)):
    # DirMult(N; 1/2, ..., 1/2), rational because Gamma(j + 1/2)/Gamma(1/2) is
    def rising(x, j):
        out = Fraction(1)
        for i in range(j):
            out *= x + i
        return out
    N, r = sum(counts), len(counts)
    val = Fraction(factorial(N)) / rising(r * a, N)
    for c in counts:
        val *= rising(a, c) / factorial(c)
    return val


def test_region_sizes_dirichlet_multinomial_exact():
    # (n, m) = (6, 2): 42 shapes x 15 leaf pairs, exact average
    shapes = [t for t in iter_signed_trees(6) if not (t.sign == MINUS).any()]
    assert len(shapes) == 42
    law = Counter()
    total = 0
    for t in shapes:
        leaves = t.leaves()
        for i in range(6):
            for j in range(i + 1, 6):
                law[tuple(region_sizes(t, [leaves[i], leaves[j]]))] += 1
                total += 1
    assert total == 630
    vectors = [(a, b, 4 - a - b) for a in range(5) for b in range(5 - a)]
    for v in vectors:
        assert Fraction(law[v], total) == _dirmult_pmf(v), v


def test_bgw_small_sizes():
    N = 100_000
    sizes = []
    for s in range(N):
        try:
            sizes.append(sample_bgw_signed_tree(0.5, s, 64).leaf_count)
        except Overflow:
            sizes.append(-1)
    sizes = np.array(sizes)
    assert within_se((sizes == 1).sum(), N, 0.5)
    assert within_se((sizes == 2).sum(), N, 0.125)


def test_bgw_overflow_rate_slope():
    from permuton_lab._kernels import bgw_lis_batch
    caps = np.array([16, 64, 256, 1024])
    rates = []
    for c in caps:
        _, size = bgw_lis_batch(0.5, int(c), 200_000, make_rng(5, int(c)))
        rates.append((size < 0).mean())
    slope = np.polyfit(np.log(caps), np.log(rates), 1)[0]
    assert abs(slope + 0.5) <= 0.1


def test_determinism_and_serialization_roundtrip():
    a = sample_uniform_signed_tree(200, 0.4, 42)
    b = sample_uniform_signed_tree(200, 0.4, 42)
    assert a.identical(b)
    assert SignedTree.from_string(a.to_string()).same_as(a)
    assert SignedTree.from_json(a.to_json()).identical(a)
    c = sample_bgw_signed_tree(0.5, 3, 10_000)
    assert c.identical(sample_bgw_signed_tree(0.5, 3, 10_000))


def test_string_grammar_errors():
    for bad in ["", "(.)+", "(..)", "(..)*", "..", "(..)+."]:
        with pytest.raises(ValueError):
            SignedTree.from_string(bad)


def test_tombstones_and_compaction():
    t = sample_uniform_signed_tree(10, 0.5, 1)
    leaf = int(t.leaves()[4])
    loose = remove_leaf(t, leaf, compact=False)
    assert loose.n_slots == t.n_slots
    loose.validate()
    tight = loose.compact()
    assert tight.n_slots == 2 * 9 - 1
    assert tight.same_as(loose)


def test_enumeration_count():
    assert sum(1 for _ in iter_signed_trees(4)) == 5 * 8
    assert sum(1 for _ in iter_signed_trees(5)) == 14 * 16
