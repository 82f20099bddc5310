"""
Two quadratics, one of them an outlier
======================================

f1(w) = w^2 is clean, f2(w) = (w - 2)^2 is the outlier, so w* = 0.
Plain SGD settles at the average-loss minimum w = 1. Min-2-loss SGD
prefers whichever loss is smaller, which moves its fixed point to 0.5.
"""
import numpy as np

from mklsgd import Dataset, SelectionScheme
from mklsgd.surrogate import find_stationary_point, scan_line, surrogate_gradient
from mklsgd.theory import check_bounds, condition1, p_hat_max, sgd_stationary_point

ds = Dataset("quadratic", [[0.0], [2.0]], None, [0.0], [False, True])
mkl = SelectionScheme.mkl(2)

# the expected update vanishes at 0.5: ranks get 3/4 and 1/4, gradients 1 and -3
print("expected step at 0.5:", surrogate_gradient(ds, [0.5], mkl))

# scan the segment [-1, 3]; the derivative changes sign at each stationary point
tab = scan_line(ds, [-1.0], [3.0], 401, mkl)
w = -1.0 + 4.0 * tab.t
print("derivative is zero at w =", w[np.abs(tab.derivative) < 1e-12])
# at the crossing point w = 1 the derivative jumps from + to -, a ridge between the basins
print("ranking flips between w =", w[tab.flips()], "and", w[tab.flips() + 1])

# two basins: the scalar condition p_hat < 1/2 fails (p_hat = 3/4)
print("p_hat_max =", p_hat_max(2, 1, mkl), " condition holds:", condition1(1.0, p_hat_max(2, 1, mkl)))
good = find_stationary_point(ds, [0.0], mkl)
bad = find_stationary_point(ds, [2.0], mkl)
print(f"from 0: {good.point[0]:.6f} (clean ranks first: {good.top_ranks_clean})")
print(f"from 2: {bad.point[0]:.6f} (clean ranks first: {bad.top_ranks_clean})")

rep = check_bounds(sgd_stationary_point(ds), good.point, ds, 2)
for name in rep.NAMES:
    print(f"{name:16s} ok={getattr(rep, name + '_ok')!s:5s} slack={getattr(rep, name + '_slack'):.3g}")
