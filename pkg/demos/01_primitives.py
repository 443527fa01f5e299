"""Numerical primitives: simplex projection, linear solves, seeded RNG.

Everything downstream builds on these four operations, so this script
shows their exactness guarantees on small examples you can verify by hand.
"""

import numpy as np

from olsofu import (
    make_rng,
    min_singular_value,
    project_simplex,
    softmax,
    solve_linear,
)

print("=== Euclidean projection onto the probability simplex ===")
for v in ([0.2, 0.3, 0.5], [0.6, 0.6], [1.2, -0.1, 0.3], [-1.0, -2.0, -3.0]):
    p = project_simplex(v)
    print(f"  {np.asarray(v)} -> {p}  (sum={p.sum():.12f})")

print("\nProjection is idempotent:")
v = np.array([2.2, -0.4, 0.1])
p1 = project_simplex(v)
p2 = project_simplex(p1)
print(f"  project(project(v)) == project(v): {np.array_equal(p1, p2)}")

print("\n=== Linear solves (used to invert confusion matrices) ===")
c = np.array([[0.9, 0.1], [0.1, 0.9]])
b = np.array([0.9, 0.1])
x = solve_linear(c, b)
print(f"  C = {c.tolist()}, b = {b}")
print(f"  solve(C, b) = {x}, residual = {np.abs(c @ x - b).max():.2e}")

print("\n=== Minimum singular values ===")
print(f"  sigma_min(I_3)        = {min_singular_value(np.eye(3)):.6f}")
print(f"  sigma_min(diag(2,.5)) = {min_singular_value(np.diag([2.0, 0.5])):.6f}")
rng = make_rng(0)
a = rng.standard_normal((4, 4))
oracle = np.sqrt(np.linalg.eigvalsh(a.T @ a).min())
print(f"  random 4x4: svd route {min_singular_value(a):.10f} "
      f"vs eigen oracle {oracle:.10f}")

print("\n=== Temperature-scaled softmax ===")
print(f"  softmax((1, 2), T=1)    = {softmax([1.0, 2.0])}")
print(f"  softmax((1, 2), T=1000) = {softmax([1.0, 2.0], temperature=1000)}")
print(f"  softmax((1000, 999))    = {softmax([1000.0, 999.0])}  (no overflow)")

print("\n=== Seeded generators ===")
a = make_rng(42).standard_normal(3)
b = make_rng(42).standard_normal(3)
c = make_rng(43).standard_normal(3)
print(f"  seed 42, twice: {a} == {b}: {np.array_equal(a, b)}")
print(f"  seed 43 differs: {not np.array_equal(a, c)}")
