import math

import numpy as np
import pytest
import statsmodels.api as sm

from prodchoice.choice import (
    Candidate,
    ChoiceSet,
    PairwiseRow,
    argmin_choice,
    build_pairwise,
    fit_conditional_logit,
    fit_pairwise_logit,
    rank1_summary,
    rank_of_human,
    softmax_choice,
    standardize_sets,
)
from prodchoice.errors import (
    DegenerateVariance,
    NonIdentifiable,
    PerfectSeparation,
)


def make_set(item_id, human_cost, alt_costs, condition="goal_directed"):
    cands = [Candidate(f"{item_id}/human", float(human_cost), True)]
    cands += [Candidate(f"{item_id}/a{i}", float(c), False)
              for i, c in enumerate(alt_costs)]
    return ChoiceSet(item_id=item_id, candidates=tuple(cands),
                     condition=condition)


class TestSoftmaxChoice:
    def test_equal_costs_uniform(self):
        for alpha in (0.0, 1.0, 50.0):
            p = softmax_choice([3.0, 3.0, 3.0], alpha)
            np.testing.assert_allclose(p, [1 / 3] * 3, atol=1e-15)

    def test_alpha_zero_uniform(self):
        np.testing.assert_allclose(softmax_choice([0.0, 5.0], 0.0), [0.5, 0.5])

    def test_hand_value(self):
        p = softmax_choice([0.0, math.log(2.0)], 1.0)
        np.testing.assert_allclose(p, [2 / 3, 1 / 3], atol=1e-15)

    def test_sums_to_one_and_shift_invariant(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            costs = rng.uniform(-5, 5, size=int(rng.integers(1, 12)))
            alpha = float(rng.uniform(0, 4))
            p = softmax_choice(costs, alpha)
            assert abs(p.sum() - 1.0) < 1e-12
            q = softmax_choice(costs + 17.3, alpha)
            np.testing.assert_allclose(p, q, atol=1e-12)

    def test_large_alpha_concentrates_on_argmin(self):
        costs = [1.0, 1.01, 2.0, 5.0]
        p = softmax_choice(costs, 1e6)
        best = argmin_choice(costs)
        assert sum(p[i] for i in best) >= 0.999

    def test_argmax_matches_argmin_of_costs(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            costs = rng.uniform(0, 3, size=6)
            p = softmax_choice(costs, 2.0)
            assert int(np.argmax(p)) in argmin_choice(costs)


class TestArgminChoice:
    def test_unique(self):
        assert argmin_choice([3.0, 1.0, 2.0]) == {1}

    def test_tie(self):
        assert argmin_choice([1.0, 1.0, 2.0]) == {0, 1}

    def test_shift_invariant(self):
        rng = np.random.default_rng(2)
        costs = rng.uniform(size=8)
        assert argmin_choice(costs) == argmin_choice(costs + 4.2)


class TestRankOfHuman:
    def test_rank_one(self):
        assert rank_of_human(make_set("i", 1.0, [2.0, 3.0])) == 1

    def test_two_below(self):
        assert rank_of_human(make_set("i", 2.5, [1.0, 2.0, 3.0])) == 3

    def test_tie_with_minimum_is_rank_one(self):
        assert rank_of_human(make_set("i", 1.0, [1.0, 2.0])) == 1

    def test_mid_rank_policy(self):
        assert rank_of_human(make_set("i", 1.0, [1.0, 2.0]),
                             tie_policy="mid") == 1.5

    def test_monotone_transform_invariant(self):
        rng = np.random.default_rng(3)
        costs = rng.uniform(0.1, 4, size=7)
        s1 = make_set("i", costs[0], costs[1:])
        s2 = make_set("i", math.exp(costs[0]), np.exp(costs[1:]))
        assert rank_of_human(s1) == rank_of_human(s2)


class TestBuildPairwise:
    def test_both_orientations(self):
        rows = build_pairwise([make_set("i", 1.0, [2.0, 3.0])])
        assert len(rows) == 4
        assert sum(r.y for r in rows) == 2

    def test_balanced_labels(self):
        sets = [make_set(f"i{k}", 1.0 + k, [2.0 + k, 3.0]) for k in range(5)]
        rows = build_pairwise(sets)
        assert abs(np.mean([r.y for r in rows]) - 0.5) == 0.0

    def test_row_count_identity(self):
        sets = [
            make_set("i0", 1.0, [2.0, 3.0], "goal_directed"),
            make_set("i0", 1.0, [2.0, 3.0, 4.0], "goal_agnostic"),
            make_set("i1", 2.0, [2.5], "goal_directed"),
        ]
        rows = build_pairwise(sets)
        assert len(rows) == 2 * (2 + 3 + 1)

    def test_standardized_population(self):
        sets = [make_set(f"i{k}", k, [k + 1, k + 3]) for k in range(8)]
        rows = build_pairwise(sets)
        deltas = np.array([r.delta_cost for r in rows])
        assert abs(deltas.mean()) < 1e-12
        assert abs(deltas.std(ddof=0) - 1.0) < 1e-12

    def test_gd_flag_follows_condition(self):
        rows = build_pairwise([make_set("i", 1.0, [2.0], "goal_agnostic"),
                               make_set("j", 1.0, [2.0], "goal_directed")])
        by_cluster = {r.cluster_id: r.gd for r in rows}
        assert by_cluster == {"i": 0, "j": 1}

    def test_degenerate_variance(self):
        with pytest.raises(DegenerateVariance):
            build_pairwise([make_set("i", 1.0, [1.0, 1.0])])


def simulate_pairwise(seed, n_clusters=60, rows_per=6,
                      beta=(0.2, -0.5, 0.3, -1.0)):
    rng = np.random.default_rng(seed)
    rows = []
    b0, b1, b2, b3 = beta
    for g in range(n_clusters):
        shared = rng.normal()
        for _ in range(rows_per):
            d = 0.7 * shared + 0.7 * rng.normal()
            gd = int(rng.random() < 0.5)
            eta = b0 + b1 * d + b2 * gd + b3 * d * gd
            y = int(rng.random() < 1.0 / (1.0 + math.exp(-eta)))
            rows.append(PairwiseRow(y=y, delta_cost=d, gd=gd,
                                    cluster_id=f"c{g:03d}"))
    return rows


class TestFitPairwiseLogit:
    def test_matches_statsmodels_coefficients_and_cluster_cov(self):
        rows = simulate_pairwise(42, n_clusters=40)
        fit = fit_pairwise_logit(rows)
        y = np.array([r.y for r in rows], float)
        X = np.column_stack([np.ones(len(rows)),
                             [r.delta_cost for r in rows],
                             [r.gd for r in rows],
                             [r.delta_cost * r.gd for r in rows]])
        groups = np.array([r.cluster_id for r in rows])
        ref = sm.Logit(y, X).fit(disp=0, cov_type="cluster",
                                 cov_kwds={"groups": groups,
                                           "use_correction": False})
        mine = np.array([fit.coefficients[n] for n in fit.coef_names])
        np.testing.assert_allclose(mine, ref.params, atol=1e-7)
        n_groups = len(set(groups))
        expected_cov = np.asarray(ref.cov_params()) * n_groups / (n_groups - 1)
        np.testing.assert_allclose(fit.covariance, expected_cov, atol=1e-9)

    def test_intercept_zero_on_symmetric_delta_only_design(self):
        rng = np.random.default_rng(17)
        sets = [make_set(f"i{k}", rng.normal(), rng.normal(size=3),
                         "goal_agnostic") for k in range(30)]
        rows = build_pairwise(sets)
        fit = fit_pairwise_logit(rows)
        assert abs(fit.coefficients["intercept"]) < 1e-8
        assert "gd" in fit.notes["excluded"]

    def test_degenerate_intercept_only(self):
        rows = [PairwiseRow(y=k % 2, delta_cost=0.0, gd=0, cluster_id=f"c{k % 7}")
                for k in range(40)]
        fit = fit_pairwise_logit(rows)
        assert fit.coef_names == ["intercept"]
        assert set(fit.notes["excluded"]) == {"delta", "gd", "delta_x_gd"}
        assert abs(fit.coefficients["intercept"]) < 1e-10  # logit(0.5)

    def test_perfect_separation_detected(self):
        rows = []
        for k in range(30):
            d = 1.0 + 0.1 * k
            rows.append(PairwiseRow(y=1, delta_cost=-d, gd=0, cluster_id=f"c{k}"))
            rows.append(PairwiseRow(y=0, delta_cost=d, gd=0, cluster_id=f"c{k}"))
        with pytest.raises(PerfectSeparation):
            fit_pairwise_logit(rows)

    def test_cluster_robust_at_least_classical_under_correlation(self):
        # outcomes duplicated within clusters: strong positive correlation
        rng = np.random.default_rng(8)
        rows = []
        for g in range(50):
            d = float(rng.normal())
            y = int(rng.random() < 1.0 / (1.0 + math.exp(0.8 * d)))
            for _ in range(6):
                rows.append(PairwiseRow(y=y, delta_cost=d, gd=0,
                                        cluster_id=f"c{g:02d}"))
        fit = fit_pairwise_logit(rows)
        i = fit.coef_names.index("delta")
        classical = np.array(fit.notes["classical_covariance"])
        assert fit.covariance[i, i] > classical[i, i]

    def test_per_item_loglik_nonpositive(self):
        fit = fit_pairwise_logit(simulate_pairwise(5))
        assert fit.per_item_loglik <= 0.0
        cov = fit.covariance
        np.testing.assert_allclose(cov, cov.T, atol=1e-12)
        assert np.all(np.linalg.eigvalsh(cov) > -1e-10)


def simulate_condlogit(alpha_star, n_sets, set_size, seed):
    rng = np.random.default_rng(seed)
    sets = []
    for i in range(n_sets):
        costs = rng.normal(0.0, 1.0, size=set_size)
        p = softmax_choice(costs, alpha_star)
        chosen = int(rng.choice(set_size, p=p))
        cands = tuple(
            Candidate(f"i{i}/c{j}", float(costs[j]), j == chosen)
            for j in range(set_size))
        sets.append(ChoiceSet(item_id=f"i{i}", candidates=cands,
                              condition="goal_directed"))
    return sets


def condlogit_loglik(sets, alpha):
    total = 0.0
    for s in sets:
        p = softmax_choice(s.costs, alpha)
        total += math.log(p[s.human_index])
    return total


class TestFitConditionalLogit:
    def test_recovery(self):
        sets = simulate_condlogit(1.5, 1000, 5, seed=10)
        fit = fit_conditional_logit(sets)
        assert abs(fit.coefficients["alpha"] - 1.5) <= 0.15

    def test_alpha_zero_uniform_baseline(self):
        sets = simulate_condlogit(0.0, 2000, 5, seed=11)
        fit = fit_conditional_logit(sets)
        assert abs(fit.coefficients["alpha"]) <= 0.1
        assert abs(fit.per_item_loglik - (-math.log(5))) < 0.05

    def test_gradient_matches_finite_differences(self):
        from prodchoice.choice import _condlogit_parts
        sets = simulate_condlogit(0.8, 50, 4, seed=12)
        rng = np.random.default_rng(13)
        h = 1e-6
        for _ in range(10):
            alpha = float(rng.uniform(-2, 2))
            _, g, _ = _condlogit_parts(sets, alpha)
            num = (condlogit_loglik(sets, alpha + h)
                   - condlogit_loglik(sets, alpha - h)) / (2 * h)
            assert abs(g - num) / max(1.0, abs(num)) <= 1e-6

    def test_non_identifiable(self):
        sets = [make_set("i0", 1.0, [1.0, 1.0]), make_set("i1", 2.0, [2.0])]
        with pytest.raises(NonIdentifiable):
            fit_conditional_logit(sets)

    def test_metrics_p_best_vs_2nd_at_most_strongest(self):
        sets = simulate_condlogit(2.0, 200, 5, seed=14)
        fit = fit_conditional_logit(sets)
        assert 0.5 <= fit.metrics["p_best_vs_2nd"] <= 1.0
        assert 0.0 <= fit.metrics["p_rank1"] <= 1.0

    def test_standardize_sets(self):
        sets = simulate_condlogit(1.0, 20, 4, seed=15)
        std, mu, sd = standardize_sets(sets)
        vals = np.array([c.cost for s in std for c in s.candidates])
        assert abs(vals.mean()) < 1e-12
        assert abs(vals.std(ddof=0) - 1.0) < 1e-12


class TestRank1Summary:
    def test_all_rank_one(self):
        sets = [make_set(f"i{k}", 0.5, [1.0, 2.0, 3.0]) for k in range(40)]
        rows = rank1_summary({("surprisal", "goal_directed"): sets})
        row = rows[0]
        assert row["rank1_share"] == 1.0
        assert row["p_value_candidates"] < 1e-20
        assert abs(row["baseline_candidates"] - 0.25) < 1e-12
        assert abs(row["baseline_alternatives"] - 1 / 3) < 1e-12

    def test_multiplier_definition(self):
        sets = [make_set("i0", 0.5, [1.0]), make_set("i1", 5.0, [1.0, 2.0])]
        row = rank1_summary({("length", "goal_agnostic"): sets})[0]
        assert row["rank1_count"] == 1
        base = (1 / 2 + 1 / 3) / 2
        assert abs(row["multiplier_candidates"] - 0.5 / base) < 1e-12
