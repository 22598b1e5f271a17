"""
Training with a fixed particle budget
=====================================

With 100 particles per datapoint, spend them on one tight bound (K=100) or
on averaging many loose ones (M=100)?  Both runs start from the same point
and see the same minibatches.
"""

from gradlab.experiments import ExperimentConfig, run_train

cfg = ExperimentConfig.from_preset(
    "custom", dim=5, n_data=256, estimators=("vae", "iwae"), m_list=(100,), k_list=(100,), steps=1000, log_every=250
)
table = run_train(cfg)
for row in table.rows:
    rec = dict(zip(table.columns, row))
    print(
        f"{rec['estimator']:5s} step {rec['iteration']:<5} bound {rec['elbo']:9.3f}"
        f"  |mu - mu*| {rec['l2_generative']:.3f}  |phi - phi*| {rec['l2_inference']:.3f}"
    )
