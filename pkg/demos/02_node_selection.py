# %% [markdown]
# # Picking a full node
#
# The simulated node pool mixes good, mediocre and bad nodes. Here we look at
# the pool, at the smoothed RTT estimator, and at how the three selection
# policies spread one hour of requests.

# %%
from collections import Counter

import numpy as np

from tanglesim import PoolConfig, RttEstimator, ScenarioConfig, SelectionPolicy, run_scenario
from tanglesim.engine import RngStreams
from tanglesim.nodes import build_pool

pool = build_pool(PoolConfig(service_scale=0.26), RngStreams(1).get("pool"))
for q in ("good", "mediocre", "bad"):
    means = [n.profile.mean_service_time for n in pool if n.profile.quality_class == q]
    print(f"{q:9s} {len(means):3d} nodes, mean service {np.mean(means):6.1f} s")

# %% [markdown]
# The estimator starts at the first sample with half of it as deviation, then
# smooths with gains 1/8 and 1/4.

# %%
est = RttEstimator()
for sample in (100, 200, 200, 200):
    est.update("A", sample)
    print(f"sample {sample}: srtt {est.srtt('A'):.2f}, rttvar {est.rttvar('A'):.2f}")

# %% [markdown]
# One replication per policy with 60 buses. Adaptive RTT concentrates on a
# handful of good nodes; the random policies spread load over the pool.

# %%
for policy in SelectionPolicy:
    res = run_scenario(ScenarioConfig(bus_count=60, policy=policy), seed=3)
    ok = [r for r in res.records if r.success]
    counts = Counter(r.node_id for r in ok)
    top = sum(c for _, c in counts.most_common(15)) / len(ok)
    good = sum(c for n, c in counts.items() if res.node_classes[n] == "good") / len(ok)
    print(f"{policy.value:15s} mean {np.mean([r.total_latency for r in ok]):6.2f} s, "
          f"errors {100 * res.failures / res.attempts:5.2f}%, top-15 share {top:.2f}, on good nodes {good:.2f}")
