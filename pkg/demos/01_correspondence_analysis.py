"""Correspondence analysis of a small contingency table, step by step.

Builds the standardized residuals of the independence model, decomposes
them, and shows the chi-square identity and the reconstruction formula.
"""

import numpy as np

from catlowrank import ca_fit, ca_pseudo_residuals, ca_reconstruct, contingency_table
from catlowrank.corresp import pearson_chi2, total_inertia

# a toy survey: rows are age bands, columns are preferred news source
counts = np.array(
    [
        [45, 20, 8],
        [30, 28, 15],
        [12, 25, 30],
        [5, 18, 40],
    ]
)
t = contingency_table(counts)

print("counts:\n", counts)
print("row margins r:", np.round(t.row_margins, 3))
print("col margins c:", np.round(t.col_margins, 3))

z = ca_pseudo_residuals(t)
print("\npseudo-residuals Z (signed deviations from independence):\n", np.round(z, 3))

chi2 = pearson_chi2(t)
print("\nPearson chi-square = N * ||Z||_F^2 =", round(chi2, 3))
print("total inertia ||Z||_F^2 =", round(total_inertia(t), 5))

res = ca_fit(t, 2)
print("\nsingular values:", np.round(res.factors.d, 4))
print("share of inertia:", np.round(res.factors.d**2 / res.total_inertia, 3))
print("row principal coordinates:\n", np.round(res.row_principal, 3))
print("column principal coordinates:\n", np.round(res.col_principal, 3))

# the rank-K reconstruction formula returns fitted cell proportions;
# at full rank it reproduces the table exactly
for k in (0, 1, 2, 3):
    fitted = ca_reconstruct(ca_fit(t, 3), t, k)
    err = np.abs(fitted - counts / counts.sum()).max()
    print(f"rank {k}: max reconstruction error {err:.2e}")
