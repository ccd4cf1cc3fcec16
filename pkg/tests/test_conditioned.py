from collections import Counter

import numpy as np
import pytest
from scipy import stats

from conftest import chi2_pvalue, within_se
from permuton_lab import conditioned as C
from permuton_lab import lis as L
from permuton_lab.rng import make_rng
from permuton_lab.sequences import pi_row
from permuton_lab.tree import MINUS, Overflow, PLUS


def test_k1_single_leaf_frequency(table_small):
    out = C.ConditionedSampler(table_small, 1).stats(1, 100_000, make_rng(1))
    hits = int((out[:, 0] == 1).sum())
    assert within_se(hits, out.shape[0], 1 / (2 * table_small.q[1]))


@pytest.mark.parametrize("k", [1, 2, 7, 50])
def test_lis_is_exactly_k(table_small, k):
    sampler = C.ConditionedSampler(table_small, k)
    out = sampler.stats(k, 2000, make_rng(k))
    ok = out[:, 0] > 0
    assert (out[ok, 1] == k).all()
    assert ((out[ok, 2] >= 0) & (out[ok, 2] <= k)).all()
    for s in range(20):
        t = sampler.sample(k, make_rng(100 + s))
        assert L.lis(t) == k and t.leaf_count == t.leaves().shape[0]


def test_overflow_raised_and_counted(table_small):
    sampler = C.ConditionedSampler(table_small, 30, size_cap=30)
    with pytest.raises(Overflow):
        for s in range(200):
            sampler.sample(30, make_rng(s))
    assert sampler.overflows >= 1
    out = sampler.stats(30, 200, make_rng(0))
    assert (out[out[:, 0] < 0] == -1).all()


def test_size_law_matches_rejection_k3(table_small):
    exact = C.ConditionedSampler(table_small, 3).stats(3, 4000, make_rng(5))
    rej = C.ConditionedSampler(table_small, 3, mode="rejection").stats(3, 4000, make_rng(6))
    assert (rej[:, 1] == 3).all()
    assert stats.ks_2samp(exact[:, 0], rej[:, 0]).pvalue > 0.05


@pytest.mark.parametrize("k", [1, 2, 3, 4, 5])
def test_rejection_acceptance_is_q(table_small, k):
    tries = 10 ** 6
    hits, overflows = C.rejection_acceptance(k, 0.5, tries, make_rng(k))
    assert within_se(hits, tries, table_small.q[k])


def test_rejection_sampler_contract():
    tree, tries = C.rejection_sample_tk(3, 0.5, 11)
    assert L.lis(tree) == 3 and tries >= 1
    with pytest.raises(C.Exhausted):
        C.rejection_sample_tk(40, 0.5, 1, max_tries=1)
    with pytest.raises(ValueError):
        C.rejection_sample_tk(65, 0.5, 1)


def test_root_split_law_k4(table_small):
    k, p, q = 4, 0.5, table_small.q
    expected = {}
    for i in range(1, k + 1):
        expected[("-", k, i)] = (1 - p) * q[i] / 2
    for i in range(1, k):
        expected[("-", i, k)] = (1 - p) * q[i] / 2
        expected[("+", i, k - i)] = p / 2 * q[i] * q[k - i] / q[k]
    assert abs(sum(expected.values()) - 1) < 1e-12
    sampler = C.ConditionedSampler(table_small, k)
    rng = make_rng(3)
    cnt = Counter()
    N = 20_000
    for _ in range(N):
        t = sampler.sample(k, rng)
        ann = L.annotate(t)
        r = t.root
        lv, rv = int(ann.lis[t.left[r]]), int(ann.lis[t.right[r]])
        cnt[("+" if t.sign[r] == PLUS else "-", lv, rv)] += 1
    keys = list(expected)
    assert set(cnt) <= set(keys)
    for key in keys:
        assert within_se(cnt[key], N, expected[key]), key
    assert chi2_pvalue([cnt[x] for x in keys], [expected[x] for x in keys]) > 1e-3


def test_m_chain_paths(table_small):
    for s in range(200):
        path = C.simulate_m_chain(30, table_small, s)
        assert path[0] == 30 and path[-1] == 0 and path[-2] == 1
        assert all(b < a for a, b in zip(path, path[1:]))
    with pytest.raises(ValueError):
        C.simulate_m_chain(201, table_small, 0)


def test_m_chain_first_step_law(table_small):
    rng = make_rng(8)
    N = 100_000
    first = Counter(C.simulate_m_chain(5, table_small, rng)[1] for _ in range(N))
    row = pi_row(table_small, 5)
    assert chi2_pvalue([first[j] for j in range(1, 5)], row[1:]) > 1e-3


def test_chain_tree_equivalence_k5(table_small):
    k = 5
    sampler = C.ConditionedSampler(table_small, k)
    rng = make_rng(21)
    from_trees, second_trees = [], []
    for _ in range(6000):
        t = sampler.sample(k, rng)
        ann = L.annotate(t)
        lm = L.leftmost_max_subtree(t, ann)
        leaf = int(lm[rng.integers(0, lm.shape[0])])
        chain = L.spine_chain(t, leaf, ann).m_chain
        from_trees.append(chain[1])
        second_trees.append(chain[2] if len(chain) > 2 else 0)
    from_chain = [C.simulate_m_chain(k, table_small, rng) for _ in range(6000)]
    assert stats.ks_2samp(from_trees, [c[1] for c in from_chain]).pvalue > 0.01
    assert stats.ks_2samp(second_trees, [c[2] for c in from_chain]).pvalue > 0.01
    cnt = Counter(from_trees)
    assert chi2_pvalue([cnt[j] for j in range(1, k)], pi_row(table_small, k)[1:]) > 1e-3


def test_pi_kernel_cache_bounded(table_small):
    ker = C.PiKernel(table_small, max_rows=4)
    for m in range(2, 20):
        ker.cum_row(m)
    assert list(ker._rows) == [16, 17, 18, 19]
    assert ker.draw(1, 0.3) == 0
    assert 1 <= ker.draw(10, 0.999999) <= 9


def test_good_scales(table_half):
    gs = C.good_scales(10_000, table_half)
    assert gs.scales == (1, 10, 100, 1000, 10_000)
    assert all(b > 7 * a for a, b in zip(gs.scales, gs.scales[1:]))
    assert all(ok for s, ok in zip(gs.scales, gs.condition) if s <= 1000)
    with pytest.raises(ValueError):
        C.GoodScaleSet((1, 5), 10.0)
    assert C.active_scales(gs, 10_000) == [10, 100, 1000]


def test_coupling_suffix_identity(table_half):
    rng = make_rng(4)
    merged = 0
    for s in range(300):
        k, kp = (int(x) for x in rng.integers(1, 10_001, size=2))
        res = C.black_golden_coupling(k, kp, table_half, None, make_rng(s))
        assert res.path[0] == k and res.path_prime[0] == kp
        if res.vmer > 0:
            merged += 1
            assert res.suffix_identical
            assert res.path[res.tmer:] == res.path_prime[res.tmer_prime:]
    assert merged > 250
    assert set(res.to_dict()) == {"k", "kprime", "vmer", "tmer", "tmer_prime", "golden_jumps"}


def test_coupling_equal_starts_degenerate(table_half):
    res = C.black_golden_coupling(10_000, 10_000, table_half, None, 3)
    assert res.vmer == 10_000 and res.path == res.path_prime


@pytest.mark.parametrize("k", [1000, 600])
def test_coupling_marginal_first_step(table_half, k):
    # 600 sits in the golden window [500, 700] of scale 100
    scales_sets = [None, C.GoodScaleSet((1, 10, 100), 10.0)]
    row = pi_row(table_half, k)
    for sset in scales_sets:
        rng = make_rng(k)
        cnt = Counter(C.black_golden_coupling(k, 1, table_half, sset, rng).path[1]
                      for _ in range(20_000))
        assert chi2_pvalue([cnt[j] for j in range(1, k)], row[1:]) > 1e-3


def test_fork_locality_k200(table_half):
    rng = make_rng(7)
    means = {}
    for k in (50, 200):
        sampler = C.ConditionedSampler(table_half, k)
        forks, zero, ratio = [], [], []
        for _ in range(600):
            t = sampler.sample(k, rng)
            ann = L.annotate(t)
            lm = L.leftmost_max_subtree(t, ann)
            leaf = int(lm[rng.integers(0, lm.shape[0])])
            f = L.spine_chain(t, leaf, ann).forks
            forks.append(f)
            zero.append(f == 0)
            ratio.append(ann.root_cap / k)
        means[k] = np.mean(forks)
        if k == 200:
            assert abs(np.mean(zero) - np.mean(ratio)) < 0.05
    assert means[200] < 2 and means[200] < means[50] + 0.5
