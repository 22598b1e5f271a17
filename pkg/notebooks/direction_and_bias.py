"""
Where the inference gradient points
===================================

For large K the expected inference gradient is a small bias along minus the
gradient of the weight variance, shrinking like 1/K.  Here we estimate that
direction from many samples and compare it with replicated IWAE gradients.
"""

from gradlab.experiments import ExperimentConfig, run_direction

cfg = ExperimentConfig.from_preset(
    "custom", dim=3, n_data=32, offset_std=0.05, replicates=2000, k_list=(1, 10, 100, 1000), oracle_samples=20_000
)
table = run_direction(cfg)
for row in table.where(row="data"):
    print(
        f"K={row['K']:<4} cosine {row['cosine']:.3f} (+- {row['cosine_stderr']:.3f})"
        f"  |bias| {row['bias_norm']:.2e}  predicted {row['predicted_bias_norm']:.2e}"
    )
for row in table.where(row="slope"):
    print(f"bias slope {row['bias_norm']:.2f} (leading term {row['predicted_bias_norm']:.2f})")
