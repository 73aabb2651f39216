# %% [markdown]
# # Measuring an observable
#
# Observables are stored in spectral form.  Here we take a random 8x8
# Hermitian matrix, look at its outcome distribution for a random state,
# sample from it and collapse onto one outcome.

# %%
import numpy as np

from qmcsim import ObservableSpec, PureState, collapse, distribution, sample
from qmcsim.measurement import replicate_rng

rng = np.random.default_rng(1)
A = rng.standard_normal((8, 8))
X = ObservableSpec.from_hermitian(np.round(A + A.T))
psi = PureState.normalized(rng.standard_normal(8) + 1j * rng.standard_normal(8))

dist = distribution(X, psi)
for value, p in dist.as_dict().items():
    print(f"{value:+8.4f}  {p:.4f}")
print("mean", dist.mean(), "variance", dist.variance())

# %% [markdown]
# Every replicate has its own counter-based random stream, so draws for
# replicate 5 do not depend on how many replicates ran before it.

# %%
draws = sample(X, psi, replicate_rng(0, 5), 20_000)
print("empirical mean", draws.mean())

# %%
outcome = draws[0]
post = collapse(X, psi, outcome)
print("probability of the same outcome after collapse:", distribution(X, post).as_dict()[outcome])
