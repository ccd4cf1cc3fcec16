"""Samplers, exact recursions and Monte Carlo tools for the longest
increasing subsequence of Brownian separable permutons and the largest
clique of Brownian cographons."""
__version__ = "0.1.0"

from .conditioned import (ConditionedSampler, CouplingResult, Exhausted, GoodScaleSet,
                          black_golden_coupling, good_scales, rejection_sample_tk,
                          sample_conditioned_tree, simulate_m_chain)
from .experiments import (ExperimentSpec, Report, calibrate_separable_constant,
                          run_empirical_q, run_lis_distribution, run_lln_cap, run_trajectory)
from .lis import (ChainPath, LisAnnotation, annotate, enumerate_maximal_positive_subtrees,
                  incremental_lis, intersection_leaves, leftmost_max_subtree, spine_chain)
from .rng import make_rng, stream_seed
from .sequences import (AlphaSolution, PrecisionFailure, QTable, build_q_table, log_gamma,
                        pi_transition, q_table, size_law_r, solve_alpha, theta)
from .structures import (SchroderCountTable, brute_max_clique, brute_max_independent,
                         is_separable, permutation_lis, sample_uniform_separable,
                         tree_to_graph, tree_to_permutation)
from .tree import (Overflow, SignedTree, StepRecord, induced_subtree, remy_backward,
                   remy_forward, sample_bgw_signed_tree, sample_uniform_signed_tree,
                   single_leaf_tree)
