"""Exponent bookkeeping of the multi-particle induction.

The decay exponent degrades with the particle number as
beta(k) = beta(1) / (1 + (k - 1) beta(1)), and polynomially decaying
interactions only support particle numbers below (p_w + 8d) / (48d).
The second half runs the scale iteration on a synthetic fractional-moment
functional B(L) = exp(-L) and prints how far each step reaches.

    python demos/iteration_bookkeeping.py
"""

import math

from anderloc.model import InteractionSpec
from anderloc.verifier import RescalingConstants, exponent_schedule, iterate_corollary

for p_w in (100.0, 200.0, 1000.0):
    sch = exponent_schedule(1.0, 3, 1, p_w)
    betas = ", ".join(f"{sch.beta[k]:.4f}" for k in sorted(sch.beta))
    print(f"p_w = {p_w:6g}: beta = {betas}; largest admissible n = {sch.max_n}")

k = RescalingConstants(nu2=1.0, alpha=1.0, gamma_star=1.0, s=0.25, d=1, n=2, R=7.0,
                       interaction=InteractionSpec("exponential", c_w=1.0), C=1.0)
for L1 in (1e2, 1e8, 1e14):
    rep = iterate_corollary(1.0, 17.0, L1, k, "exp", steps=6, B=lambda L: math.exp(-L))
    reach = rep.steps[-1].covered[1] if rep.steps else L1
    print(f"L1 = {L1:g}: nu' = {rep.nu_prime:.3e}, all steps closed: {rep.verdict}, "
          f"covered up to L = {reach:.3e}, first failure: {rep.first_failure}")
