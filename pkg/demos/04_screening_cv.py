# coding: utf-8

# # Telling the cohorts apart
#
# Here we skip the video model and draw intensity records directly, HC subjects
# with stronger diagonal scores than PD subjects. Then cross-validation and the
# small ablation grid.

# In[1]:

from hypomimia.classifier import ClassifierTrainConfig, RnnConfig
from hypomimia.data_io import SyntheticConfig, synth_intensity_records
from hypomimia.evaluation import boxplot_stats, run_ablation, run_cv

records = synth_intensity_records(SyntheticConfig(n_hc=40, n_pd=40, seed=3))
print(len(records), "subjects")

# How far apart are the cohorts on the happiness diagonal?

# In[2]:

box = boxplot_stats(records)
for cohort in ("HC", "PD"):
    s = box.get("happiness", cohort)
    print(f"{cohort}: q1 {s.q1:.3f}  median {s.median:.3f}  q3 {s.q3:.3f}")

# Five folds, split by subject, balanced by diagnosis. A shorter schedule keeps
# this quick.

# In[3]:

quick = ClassifierTrainConfig(epochs=40)
result = run_cv(records, RnnConfig(), quick, "processed", seed=0)
for name, row in result.pooled.items():
    print(f"{name:<10} acc {row.accuracy:.3f}  f1 {row.f1:.3f}")

# The grid crosses cell type, statistics on or off, and skips on or off, all on
# one fold plan.

# In[4]:

grid = run_ablation(records, RnnConfig(hidden_dim=16), ClassifierTrainConfig(epochs=20), seed=0)
print(grid.to_text())
