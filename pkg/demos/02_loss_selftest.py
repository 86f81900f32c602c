"""
Loss functions and their analytic gradients
===========================================

Evaluates the detection-training losses at a few hand-picked points, then
runs the finite-difference self-test that checks every analytic gradient at
random interior points.
"""

import numpy as np

from nodulescreen.losses import (
    cross_entropy,
    dice_loss,
    dual_loss,
    focal_loss,
    gradient_selftest,
    smooth_l1,
)

# Spot values on a toy two-class problem.
p = [0.8, 0.2]
y = [1.0, 0.0]
print(f"cross_entropy({p}, {y}) = {cross_entropy(p, y):.6f}")
print(f"dice_loss({y}, {p})     = {dice_loss(y, p):.6f}")
print(f"dual_loss({p}, {y})     = {dual_loss(p, y):.6f}")
print(f"smooth_l1(0.5)          = {smooth_l1(0.5):.6f}")
print(f"smooth_l1(2.0)          = {smooth_l1(2.0):.6f}")
print(f"focal_loss(0.8, 1)      = {focal_loss(0.8, 1):.6f}")

# With gamma 0 the focal modulation disappears: alpha 0.5 leaves exactly
# half the cross-entropy. Show the worst deviation over a dense grid.
grid = np.linspace(0.001, 0.999, 1000)
worst = max(
    abs(focal_loss(float(pi), 1, alpha=0.5, gamma=0.0)
        - 0.5 * cross_entropy([float(pi), 1.0 - float(pi)], [1.0, 0.0]))
    for pi in grid
)
print(f"\nmax |focal(gamma=0, alpha=0.5) - CE/2| over {grid.size} points: {worst:.2e}")

# Gradient check: analytic vs central finite differences, 200 random
# interior points per loss, tolerance 1e-5 on the max relative error.
print("\ngradient self-test (200 points per loss):")
for name, err, passed in gradient_selftest(points_per_loss=200):
    status = "PASS" if passed else "FAIL"
    print(f"  {name:15s} max relative error {err:.3e}  {status}")
