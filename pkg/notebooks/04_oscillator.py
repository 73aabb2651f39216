# %% [markdown]
# # Six-dimensional harmonic oscillator
#
# Four levels per dimension gives a 4096-dimensional state space.  The
# exact value of the observable is known by enumeration, which makes this
# a good end-to-end check.

# %%
from qmcsim import SimulationPlan, mse_report, run_estimate, state_distance
from qmcsim.oscillator import build_system, exact_final_state, oscillator_report, trotterized_final_state

print(oscillator_report())
system = build_system()

# %% [markdown]
# State error against the closed-form solution shrinks by four when the
# step count doubles.

# %%
exact = exact_final_state(system, system.T)
for m in (100, 200, 400):
    print(m, state_distance(trotterized_final_state(system, m), exact))

# %% [markdown]
# At m = 277, n = 18 (N close to 5000) the variance term dominates the
# MSE by several orders of magnitude.  In this truncated basis the bias
# is tiny, so the MSE keeps falling as delta grows over (0, 0.01].

# %%
plan = SimulationPlan.from_budget(5000, 277)
exact_report = mse_report(plan, system)
print("bias", exact_report.bias_est, "variance term", exact_report.variance_term)
print("one sampled estimate:", run_estimate(plan, system).theta_hat)
