# %% [markdown]
# One reweighted step, by hand
#
# Compare the plain gradient with the gradient taken at the perturbed point,
# and look at which components shrink without changing sign.

# %%
import numpy as np
from saner_lab import (Batch, ModelSpec, component_ratio, init_params, make_gaussian_blobs,
                       partition_groups, group_fractions, saner_gradient)

spec = ModelSpec((32, 64, 10))
ds = make_gaussian_blobs(256, 10, 32, 4.0, seed=3)
params = init_params(spec, seed=0)
batch = Batch(ds.features[:128], ds.observed_labels[:128])

bundle = saner_gradient(params, batch, spec, rho=0.1, alpha=0.5)
print("params:", spec.num_params, " reweighted:", int(bundle.mask_b.sum()))

# %% Fractions of components with ratio >= 1, in [0, 1), and negative.
part = partition_groups(component_ratio(bundle.g_sam, bundle.g_sgd))
print(group_fractions(part))

# %% Outside the mask the final gradient is the perturbed one, untouched.
print(np.array_equal(bundle.g_final[~bundle.mask_b], bundle.g_sam[~bundle.mask_b]))
