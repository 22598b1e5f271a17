"""
Moment identities for averages of triples
=========================================

For i.i.d. mean-zero triples averaged over K indices, the mean of the triple
product falls like 1/K^2 and the variance of a pair product has an exact
expansion in single-index moments.  The cross term on E[ab]^2 can be written
with coefficient 2K - 2 or K - 1; only the second matches simulation when the
pair is correlated.
"""

import numpy as np

from gradlab.asymptotics import TripleGenerator, lemma_moment_check, product_var_rhs

rng = np.random.default_rng(0)
for gen in (TripleGenerator("identical"), TripleGenerator("correlated", rho=0.5), TripleGenerator("weight_residual")):
    for k in (1, 2, 10):
        rep = lemma_moment_check(gen, k, 100_000, rng)
        var = rep.check("product_variance")
        paired = rep.check("product_variance_paired")
        print(
            f"{gen.kind:16s} K={k:<3} Var sim {var.lhs:.4f}  2K-2 form {var.rhs:.4f} (z={var.z_score:4.1f})"
            f"  K-1 form {paired.rhs:.4f} (z={paired.z_score:4.1f})"
        )

# for a = b standard normal the truth is 2/K^2
exact = TripleGenerator("identical").exact_moments()
print("K=2:", product_var_rhs(exact, 2), "vs", product_var_rhs(exact, 2, paired=True), "truth", 2 / 4)
