"""
Fitting fractional transfer functions to step responses
=======================================================

A fractional model replaces integer powers of ``s`` with real ones. Its
time response is computed with Grünwald-Letnikov differences over the whole
history, and its coefficients and exponents are fitted by a bounded simplex
search on the output error.
"""

import numpy as np

from iaqfusion import ChannelKind
from iaqfusion.sysid import (
    FractionalTransferFunction,
    alpha_from_ftf,
    co2_reference_model,
    identify,
    simulate_ftf,
    channel_models,
)

###############################################################################
# A half-order integrator has the closed-form step response t^0.5 / Gamma(1.5)
from scipy.special import gamma

half = FractionalTransferFunction(((1.0, 0.0),), ((1.0, 0.5),))
t = np.arange(1001) * 1e-3
y = simulate_ftf(half, np.ones_like(t), 1e-3)
print("t=1 s:", y[-1], "exact:", 1 / gamma(1.5))

###############################################################################
# Round trip: generate data from a known model, start the search elsewhere
truth = FractionalTransferFunction(((1.5, 0.0),), ((1.0, 1.4), (0.8, 0.0)))
u = np.ones(100)
data = simulate_ftf(truth, u, 0.1)
start = FractionalTransferFunction(((1.0, 0.0),), ((1.0, 1.2), (0.5, 0.1)))
rep = identify(data, u, start, dt=0.1, restarts=2)
print("start :", start)
print("fitted:", rep.model)
print(f"eps_mse {rep.eps_mse:.2e} after {rep.iterations} simplex iterations")

###############################################################################
# The integer-order CO2 model, fitted with free exponents from a shifted start
base = co2_reference_model()
shifted = FractionalTransferFunction(
    base.num_terms, tuple((c, e + d) for (c, e), d in zip(base.den_terms, (-0.1, 0.1, -0.1, 0.1, 0.0))))
rep = identify(simulate_ftf(base, np.ones(78), 1.0), template=shifted, restarts=0)
print("recovered exponents:", np.round(rep.model.den_exponents, 3))

###############################################################################
# Reference per-channel models and the filter order they suggest
for ch, model in channel_models().items():
    print(f"{ch.value:>11}: highest exponent {model.den_exponents.max():.4f} -> alpha {alpha_from_ftf(model):.4f}")
