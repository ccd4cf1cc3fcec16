import numpy as np
import pytest
from scipy import stats

from permuton_lab.sequences import q_table


@pytest.fixture(scope="session")
def table_half():
    """q table at p = 1/2 up to K = 10^4 (192 bits)."""
    return q_table(0.5, 10_000)


@pytest.fixture(scope="session")
def table_small():
    return q_table(0.5, 200)


def chi2_pvalue(observed, expected_probs, min_expected=5.0):
    """Pearson chi-square p-value; cells with small expectation are pooled."""
    obs = np.asarray(observed, float)
    exp = np.asarray(expected_probs, float) * obs.sum()
    order = np.argsort(exp)
    o_cells, e_cells = [], []
    acc_o = acc_e = 0.0
    for i in order:
        acc_o += obs[i]
        acc_e += exp[i]
        if acc_e >= min_expected:
            o_cells.append(acc_o)
            e_cells.append(acc_e)
            acc_o = acc_e = 0.0
    if acc_e > 0 and e_cells:
        o_cells[-1] += acc_o
        e_cells[-1] += acc_e
    return float(stats.chisquare(o_cells, e_cells).pvalue)


def within_se(count, total, prob, k=4.0):
    se = np.sqrt(prob * (1 - prob) / total)
    return abs(count / total - prob) <= k * se
