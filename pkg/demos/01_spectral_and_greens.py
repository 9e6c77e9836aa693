"""Spectral data of the box and the Green's function, two ways.

The dynamics' relaxation is governed by the Dirichlet Laplacian on the
box: its smallest eigenvalue lambda_1 = 1 - cos(pi/n) sets the decay
rate of every mean observable, and its Green's function is both the
expected-visit-count matrix of the killed walk and the covariance of the
equilibrium surface.  Everything here is closed-form, so the module can
serve as an oracle for the Monte Carlo demos that follow.
"""

import math

import numpy as np

from dgff_glauber import (
    build_box,
    eigenbasis,
    greens_matrix,
    lambda_1,
    phi_hat_1,
    survival_prediction,
    t_star,
)

print("=== smallest eigenvalue vs the continuum limit pi^2 / (2 n^2) ===")
for n in (8, 16, 32, 64, 128):
    lam = lambda_1(n)
    cont = math.pi**2 / (2 * n * n)
    print(f"  n={n:4d}  lambda_1={lam:.8f}  pi^2/2n^2={cont:.8f}  "
          f"rel diff {abs(lam / cont - 1):.2e}")

print("\n=== two independent routes to the Green's function ===")
for n in (4, 8, 16, 32):
    Gs = greens_matrix(n, "solve").matrix
    Gf = greens_matrix(n, "fourier").matrix
    print(f"  n={n:3d}  max |solve - fourier| = {np.abs(Gs - Gf).max():.2e}")

print("\n=== hand-solved values at n=3 ===")
G = greens_matrix(3).matrix
print(f"  G(x,x) = {G[0, 0]:.12f}   (exactly 7/6)")
print(f"  adjacent = {G[0, 1]:.12f}  (exactly 1/3)")
print(f"  diagonal = {G[0, 3]:.12f}  (exactly 1/6)")

print("\n=== the survival-normalized principal mode ===")
n = 64
box = build_box(n)
center = box.index_of((n // 2, n // 2))
print(f"  phi_hat_1(center) at n={n}: {phi_hat_1(n)[center]:.5f}"
      f"  (limit 16/pi^2 = {16 / math.pi**2:.5f})")

print("\n=== predicted survival of the backward walk from the center ===")
n = 16
ts = [t_star(n, n) * k for k in (1, 2, 3)]
for t in ts:
    p = survival_prediction(n, (n // 2, n // 2), t)
    print(f"  t = {t:8.1f}  predicted survival {p:.3e}")

print("\n=== eigenvalue growth across modes ===")
sd = eigenbasis(16)
print("  lowest five:", np.round(np.sort(sd.lambdas)[:5], 6).tolist())
print("  the bound lambda_i >= ((i1+i2)/2) lambda_1 holds:",
      bool(np.all(sd.lambdas >= 0.5 * sd.modes.sum(axis=1) * sd.lambdas[0] - 1e-12)))
