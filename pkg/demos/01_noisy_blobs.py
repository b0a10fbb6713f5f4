# %% [markdown]
# Building a noisy-label dataset
#
# Gaussian blobs give a separable problem where every wrong label is known,
# so memorization of the corrupted samples can be measured directly.

# %%
import numpy as np
from saner_lab import NoiseSpec, apply_noise, make_gaussian_blobs
from saner_lab.noise import realized_rate_summary

clean = make_gaussian_blobs(2000, num_classes=10, dim=32, separation=4.0, seed=0)
print(clean.features.shape, np.bincount(clean.true_labels))

# %% Symmetric noise picks each sample with probability `rate`, then a uniformly random wrong class.
spec = NoiseSpec("symmetric", 0.4, seed=0)
noisy = apply_noise(clean, spec)
print(realized_rate_summary(noisy, spec))

# %% Circular asymmetric noise sends class c to c + 1.
circ = apply_noise(clean, NoiseSpec("asymmetric_circular", 0.3, seed=1))
flipped = circ.is_noisy
print("all flips go to the next class:",
      bool(np.all(circ.observed_labels[flipped] == (circ.true_labels[flipped] + 1) % 10)))

# %% The instance proxy makes flip probability depend on the features.
proxy = apply_noise(clean, NoiseSpec("instance_proxy", 0.3, seed=2))
print("realized rate %.3f" % proxy.noise_rate)
