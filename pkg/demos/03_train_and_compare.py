# %% [markdown]
# Training three optimizers on the same noisy data
#
# Small and quick: a few epochs, one seed. Use the CLI sweep for real comparisons.

# %%
from dataclasses import replace
from saner_lab import ExperimentConfig, NoiseSpec, compare_runs, run_training
from saner_lab.config import DataConfig

base = ExperimentConfig(data=DataConfig(n_train=1500, n_test=300), noise=NoiseSpec("symmetric", 0.4),
                        epochs=20, batch_size=128)

records = {}
for mode in ("sgd", "sam", "saner"):
    cfg = replace(base, optim=replace(base.optim, mode=mode))
    records[mode] = run_training(cfg, name=mode)
    last = records[mode].rows[-1]
    print(f"{mode:6s} noisy {last.noisy_train_acc:.3f} clean {last.clean_train_acc:.3f} test {last.test_acc:.3f}")

# %% Verdicts are pass, fail or inconclusive; with 20 epochs expect anything.
print(compare_runs(list(records.values()), "noisy_acc_ordering", names=list(records)))
print(compare_runs([records["sam"], records["saner"]], "pr_late_phase", names=["sam", "saner"]))
