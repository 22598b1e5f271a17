"""
Signal-to-noise ratio against M and K
=====================================

More particles per bound (K) sharpen the generative gradient but blunt the
inference gradient; averaging more bounds (M) helps both.  A small problem
shows the trend in seconds; ``gradlab snr-sweep`` runs the full-size version.
"""

from gradlab.experiments import ExperimentConfig, run_snr_sweep

cfg = ExperimentConfig.from_preset(
    "custom", dim=5, n_data=64, offset_std=0.01, replicates=2000, m_list=(1, 10, 100), k_list=(1, 10, 100)
)
table = run_snr_sweep(cfg)

for row in table.where(row="group"):
    print(f"{row['estimator']:5s} M={row['M']:<4} K={row['K']:<4} {row['group']:5s} SNR {row['snr']:.3f}")

# fitted log-log slopes
for row in table.where(row="slope"):
    print(f"slope {row['estimator']:5s} {row['group']:5s} {row['snr']:+.2f}")
