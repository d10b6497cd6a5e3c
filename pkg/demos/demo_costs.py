"""From language-model subtoken scores to the four utterance costs.

A scorer backend returns subtoken logprobs; words aggregate their
subtokens; costs summarize the resulting surprisal profiles. This demo
walks one candidate continuation through the whole chain by hand.
"""

import numpy as np

from prodchoice import (
    ScoreResponse,
    cost_bundle,
    length_cost,
    surprisal_cost,
    uid_global_cost,
    uid_local_cost,
    word_surprisals,
)
from prodchoice.costs import SurprisalProfile

# A context "My boss confirmed" followed by the continuation
# "we were absolutely crazy." -- scored subtokens as a backend would
# return them (leading spaces mark word starts, long words split).
continuation_subtokens = (
    ("we", -1.2),
    (" were", -0.8),
    (" absol", -2.1),
    ("utely", -0.4),
    (" crazy.", -3.0),
)

resp = ScoreResponse(subtokens=continuation_subtokens, truncated=False)
words = ["we", "were", "absolutely", "crazy."]
profile = word_surprisals(resp, words)
print("word surprisals (nats):")
for surface, s in profile.words:
    print(f"  {surface:<12} {s:.2f}")

# Context words get their own profile (scored given dialogue history);
# the full-utterance profile is the concatenation.
context_profile = SurprisalProfile(
    words=(("My", 2.0), ("boss", 3.5), ("confirmed", 4.1)), source="context")
full_profile = context_profile.concat(profile)

print("\nthe four costs for this continuation:")
print(f"  surprisal   = {surprisal_cost(profile):.3f}   (total information)")
print(f"  uid_local   = {uid_local_cost(profile):.3f}   (mean squared step)")
print(f"  uid_global  = {uid_global_cost(full_profile):.3f}   "
      "(variance around the utterance mean)")
print(f"  length      = {length_cost('we were absolutely crazy.')}       "
      "(words, punctuation-only tokens excluded)")

bundle = cost_bundle(profile, full_profile,
                     continuation_text="we were absolutely crazy.")
print(f"\nbundled: {bundle.as_dict()}")

# Local uniformity cares about order; global uniformity does not.
a = SurprisalProfile(words=(("x", 0.0), ("y", 2.0), ("z", 0.0)),
                     source="continuation")
b = SurprisalProfile(words=(("x", 0.0), ("y", 0.0), ("z", 2.0)),
                     source="continuation")
print("\norder sensitivity on the profiles (0,2,0) vs (0,0,2):")
print(f"  uid_global: {uid_global_cost(a):.1f} == {uid_global_cost(b):.1f}")
print(f"  uid_local : {uid_local_cost(a):.1f} != {uid_local_cost(b):.1f}")

# Shifting every surprisal by a constant moves only the surprisal cost.
vals = np.array([s for _, s in profile.words])
shifted = SurprisalProfile(
    words=tuple((w, s + 1.0) for w, s in profile.words),
    source="continuation")
print("\n+1 nat per word: surprisal cost moves by n, uniformity unchanged:")
print(f"  {surprisal_cost(profile):.2f} -> {surprisal_cost(shifted):.2f}"
      f" (n = {len(vals)})")
print(f"  uid_local {uid_local_cost(profile):.3f} -> "
      f"{uid_local_cost(shifted):.3f}")
