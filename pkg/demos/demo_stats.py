"""The statistical kernels: exact Poisson-binomial tail tests and Welch
t-tests, shown against brute-force enumeration.
"""

import itertools

import numpy as np

from prodchoice import (
    paired_diff_analysis,
    poisson_binomial_pmf,
    poisson_binomial_pvalue,
    t_test,
)

# --- Poisson-binomial: heterogeneous chance levels ------------------------------
# Five trials whose chance of "rank 1" differs because set sizes differ.
chance = [1 / 2, 1 / 5, 1 / 11, 1 / 11, 1 / 31]
pmf = poisson_binomial_pmf(chance)
print("chance levels:", [f"{p:.3f}" for p in chance])
print("pmf of the rank-1 count:", np.round(pmf, 4))

# brute-force check by enumerating all 2^5 outcomes
brute = np.zeros(6)
for bits in itertools.product([0, 1], repeat=5):
    prob = 1.0
    for b, p in zip(bits, chance):
        prob *= p if b else (1 - p)
    brute[sum(bits)] += prob
print("max |pmf - enumeration| =", float(np.max(np.abs(pmf - brute))))

k_obs = 3
print(f"\nobserved {k_obs} rank-1 outcomes -> one-sided "
      f"p = {poisson_binomial_pvalue(chance, k_obs):.5f}")
print("p-values are monotone in the observed count:",
      [round(poisson_binomial_pvalue(chance, k), 4) for k in range(6)])

# --- Welch t-tests ---------------------------------------------------------------
rng = np.random.default_rng(3)
human = rng.normal(10.0, 2.0, size=80)
generated = rng.normal(11.0, 3.0, size=300)
res = t_test(human, generated, sided="two")
print(f"\ntwo-sided Welch test, shifted groups: t = {res.t:.2f}, "
      f"df = {res.df:.1f}, p = {res.p:.2e}")

same = rng.normal(size=50)
res = t_test(same, same, sided="two")
print(f"identical samples: t = {res.t:.1f}, p = {res.p:.1f}")

# one-sided paired analysis: is the human continuation cheaper?
human_costs = {"surprisal": rng.normal(20, 3, size=60)}
alt_costs = {"surprisal": human_costs["surprisal"] + rng.normal(1.0, 2.0,
                                                                size=60)}
out = paired_diff_analysis(human_costs, alt_costs)["surprisal"]
print(f"\npaired differences (human - alternative): mean {out['mean_diff']:.2f}, "
      f"t = {out['t']:.2f}, one-sided p = {out['p']:.2e}")
