# %% [markdown]
# # Splitting a fixed budget between steps and replicates
#
# With N = m * n, more Trotter steps mean fewer replicates.  The MSE bound
# C1 m / N + C2 / m**4 balances the two.  We calibrate C1 and C2 on the
# single-qubit fixture, allocate, then compare with an exact MSE sweep.

# %%
import numpy as np

from qmcsim import SimulationPlan, allocate, calibrate, delta_sweep, pauli_xz, run_estimate

system = pauli_xz()
cal = calibrate(system)
print(f"C1={cal.C1:.4f}  C2={cal.C2:.4e}")

N = 2000
alloc = allocate(N, cal.C1, cal.C2)
print(alloc)

# %% [markdown]
# The sweep evaluates bias and variance exactly for each step size.  Its
# argmin should sit near the allocator's choice.

# %%
deltas = 1 / np.arange(1, 41)
sweep = delta_sweep(system, N, deltas)
best = sweep.argmin
print("sweep argmin m =", best.m, "mse =", best.mse)
print("segments:", sweep.segments())

# %%
plan = SimulationPlan.from_budget(N, alloc.m, system.T, master_seed=3)
report = run_estimate(plan, system)
print(report.to_json(timestamp=False))
