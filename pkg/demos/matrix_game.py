"""Pure and mixed play on the 2x2 game [[0, -a], [-1, 0]].

The classifier (rows) minimises, the adversary (columns) maximises.  Going
first is a disadvantage in a zero-sum game, so the value with the classifier
leading (minmax) sits above the mixed value, which sits above the value with
the adversary leading (maxmin).
"""

import numpy as np

from stackgame import fictitious_play, matrix_maxmin, matrix_minmax, support_enumeration

for a in (0.25, 0.5, 0.9):
    M = np.array([[0.0, -a], [-1.0, 0.0]])
    fp = fictitious_play(M, tol=1e-6)
    exact = support_enumeration(M)
    print(f"a = {a}")
    print(f"  classifier leads : {matrix_minmax(M)[2]:+.4f}")
    print(f"  mixed (FP)       : {fp.value:+.6f}  after {fp.iterations} iterations, gap {fp.gap:.1e}")
    print(f"  mixed (exact)    : {exact[2]:+.6f}  closed form {-a / (1 + a):+.6f}")
    print(f"  adversary leads  : {matrix_maxmin(M)[2]:+.4f}")
    print(f"  row mix {np.round(fp.row, 4)}, column mix {np.round(fp.col, 4)}")
