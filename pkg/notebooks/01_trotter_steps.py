# %% [markdown]
# # Trotter steps and their error order
#
# A single qubit with H = Z + X gives the smallest noncommuting example.
# We build the symmetric step, check it against the exact propagator and
# fit the error order on a halving grid.

# %%
import numpy as np

from qmcsim import exact_propagator, operator_distance, pauli_xz, trotter_step
from qmcsim.trotter import error_scaling

system = pauli_xz()
H = system.split
step = trotter_step(H, 0.1)
print("factor sites in application order:", [sites for sites, _ in step.factors])

# %% [markdown]
# The distance to the exact propagator is the spectral norm of the
# difference.  Halving the step should cut it by about 8.

# %%
for delta in (0.1, 0.05, 0.025):
    gamma = operator_distance(trotter_step(H, delta), exact_propagator(H, delta))
    print(f"delta={delta:<6} gamma={gamma:.3e}")

# %% [markdown]
# Over a fixed horizon the step count grows as 1/delta, so one power is
# lost and the slope drops from 3 to 2.

# %%
grid = [0.1 / 2**k for k in range(6)]
local = error_scaling(H, grid)
global_ = error_scaling(H, grid, horizon=1.0)
print("single-step slope:", round(local.fits["j=1"].slope, 3))
print("fixed-horizon slope:", round(global_.fits["horizon"].slope, 3))
print(local.to_csv())
