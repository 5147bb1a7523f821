"""Fit a log-power law to a synthetic blow-up trace and classify it.

A trace ``|u|_inf ~ (t* - t)^(-1/3)`` with 1% noise stands in for the output
of a supercritical run.  The fit recovers the exponent and blow-up time, and
the classifier compares the exponent with the predicted rates.
"""

from fractions import Fraction

import numpy as np

from gkpsim.diagnostics import NormTrace
from gkpsim.fit import classify, fit_log_power, predict_rates

rng = np.random.default_rng(0)
t_star = 0.0258
t = np.linspace(0.015, 0.0257, 400)
values = 3.0 * (t_star - t) ** (-1 / 3) * (1 + 0.01 * rng.standard_normal(t.size))

fit = fit_log_power(NormTrace("linf_u", t, values), k_last=200)
print(f"c = {fit.c:.4f}, t* = {fit.t_star:.6f}, C = {fit.C:.4f}")

verdict = classify(fit, [predict_rates(2), predict_rates(Fraction(4, 3))])
print(f"verdict: {verdict.verdict}")
