# %% [markdown]
# Writing metrics and drawing curves
#
# Metrics go to CSV with empty cells for undefined values; plots are plain SVG.

# %%
from pathlib import Path
from dataclasses import replace
from saner_lab import ExperimentConfig, NoiseSpec, read_metrics, run_training, write_metrics
from saner_lab.config import DataConfig
from saner_lab.plotting import line_chart

out = Path("demo_out")
out.mkdir(exist_ok=True)
cfg = ExperimentConfig(data=DataConfig(n_train=1000, n_test=200), noise=NoiseSpec("symmetric", 0.4), epochs=12)

for mode in ("sam", "saner"):
    rec = run_training(replace(cfg, optim=replace(cfg.optim, mode=mode)), name=mode)
    write_metrics(rec, out / f"{mode}.csv")

# %%
series = {}
for mode in ("sam", "saner"):
    rec = read_metrics(out / f"{mode}.csv")
    series[mode] = (rec.column("epoch"), rec.column("noisy_train_acc"))
(out / "noisy_train_acc.svg").write_text(line_chart(series, "noisy-label fit", "epoch", "accuracy"))
print(sorted(p.name for p in out.iterdir()))
