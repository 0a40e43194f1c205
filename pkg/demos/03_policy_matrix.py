# %% [markdown]
# # Policy x fleet size
#
# A reduced version of the full experiment: three policies at 60, 120 and
# 240 buses with three replications each. `tanglesim matrix` runs the full
# 12-replication grid and writes the same outputs.

# %%
import sys
import tempfile
from pathlib import Path

from tanglesim import ScenarioConfig, run_matrix
from tanglesim.cli import format_table
from tanglesim.runner import matrix_configs

reps = int(sys.argv[1]) if len(sys.argv) > 1 else 3
out = Path(tempfile.mkdtemp(prefix="tanglesim-demo-"))
result = run_matrix(matrix_configs(ScenarioConfig(replications=reps)), out)
print(format_table(result.report))

# %% [markdown]
# Latency decomposition per cell. Queue wait at the node is folded into the
# tip-selection component, so the three components add up to the total.

# %%
for cell in result.report.cells:
    c = cell.components
    print(f"{cell.bus_count:4d} {cell.policy:15s} tip {c['tip_selection']:6.2f}  pow {c['pow']:6.2f}  "
          f"net {c['network']:5.2f}  (of which queue {c['queue_wait']:6.2f})")

# %% [markdown]
# Boxplot and ECDF series are in each cell directory, ready for plotting.

# %%
adaptive = result.report.cell("adaptive-rtt", 240)
for p in (0.5, 0.9, 0.99):
    x = adaptive.ecdf.x[adaptive.ecdf.fraction.searchsorted(p)]
    print(f"adaptive-rtt @240: {int(100 * p)}% of messages attached within {x:.1f} s")
print("outputs in", out)
