"""Multiple correspondence analysis on the indicator and Burt matrices.

Shows the dummy coding, the exact algebraic link Z_B = Z_A' Z_A, the
eigenvalue relationship between the two variants, and the correlation-ratio
reading of the leading component.
"""

import numpy as np

from catlowrank import (
    CategoricalTable,
    burt_matrix,
    category_margins,
    correlation_ratio,
    encode_indicator,
    mca_burt,
    mca_indicator,
)
from catlowrank.mca import burt_residuals, indicator_residuals

# six respondents, one binary and one three-level question
table = CategoricalTable(
    values=np.array([[1, 1], [2, 3], [1, 2], [2, 3], [2, 2], [2, 2]]),
    category_counts=(2, 3),
)

a = encode_indicator(table)
print("indicator matrix A:\n", a.entries.astype(int))
b = burt_matrix(a)
print("\nBurt matrix B = A'A:\n", b.entries)
margins = category_margins(a)
print("\ncategory margins p:", np.round(margins.p, 3))

za = indicator_residuals(a, margins)
zb = burt_residuals(b, margins, a.n)
print("\n||Z_B - Z_A' Z_A||_F =", np.linalg.norm(zb - za.T @ za))

res_a = mca_indicator(table, 2)
res_b = mca_burt(table, 2)
print("\nindicator singular values:", np.round(res_a.factors.d, 4))
print("Burt eigenvalues:         ", np.round(res_b.factors.d, 4))
print("(the Burt eigenvalues are the squared indicator singular values)")

print("\nrow principal coordinates:\n", np.round(res_a.row_principal, 3))
print("category principal coordinates:\n", np.round(res_a.category_principal, 3))

# the leading component maximizes the summed correlation ratio over the
# variables; its value is m times the top eigenvalue
f1 = res_a.factors.u[:, 0]
etas = [correlation_ratio(f1, table, j) for j in range(table.m)]
print("\neta^2 of component 1 per variable:", np.round(etas, 3))
print("sum =", round(sum(etas), 6), "== m * lambda_1 =",
      round(table.m * res_a.eigenvalues[0], 6))
