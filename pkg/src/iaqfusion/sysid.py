"""Fractional-order transfer functions: simulation and output-error identification.

A model is ``sum_j b_j s^beta_j / sum_i a_i s^alpha_i``. In the time domain
every ``s^alpha`` becomes a GL fractional difference over the whole
available history, so simulating a model is a single IIR filter whose
numerator and denominator are the combined GL weight sequences.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.signal import lfilter

from .core import ChannelKind, DomainError, NumericalError, TimeSeries

__all__ = [
    "FractionalTransferFunction",
    "FitReport",
    "simulate_ftf",
    "output_error",
    "identify",
    "co2_reference_model",
    "load_ftf",
    "channel_models",
    "alpha_from_ftf",
    "MAX_SIM_SAMPLES",
]

MAX_SIM_SAMPLES = 10_000
EXPONENT_BOUNDS = (0.0, 5.0)
COEF_BOUNDS = (-1e4, 1e4)
_PENALTY = 1e30


def _terms(terms) -> tuple[tuple[float, float], ...]:
    out = []
    for t in terms:
        coef, exp = (float(v) for v in t)
        if not (math.isfinite(coef) and math.isfinite(exp)):
            raise DomainError(f"non-finite term {t}")
        if exp < 0:
            raise DomainError(f"exponents must be non-negative, got {exp}")
        out.append((coef, exp))
    return tuple(out)


@dataclass(frozen=True)
class FractionalTransferFunction:
    num_terms: tuple[tuple[float, float], ...]
    den_terms: tuple[tuple[float, float], ...]

    def __post_init__(self):
        num = _terms(self.num_terms)
        den = _terms(self.den_terms)
        if not den:
            raise DomainError("denominator needs at least one term")
        if num and max(e for _, e in num) >= max(e for _, e in den):
            raise DomainError("transfer function must be strictly proper")
        object.__setattr__(self, "num_terms", num)
        object.__setattr__(self, "den_terms", den)

    @property
    def den_exponents(self) -> np.ndarray:
        return np.array([e for _, e in self.den_terms])

    @property
    def num_exponents(self) -> np.ndarray:
        return np.array([e for _, e in self.num_terms])

    def normalized(self) -> "FractionalTransferFunction":
        """Same model scaled so that the highest-order denominator coefficient is 1."""
        lead = max(self.den_terms, key=lambda t: t[1])[0]
        if lead == 0:
            raise DomainError("leading denominator coefficient is zero")
        return FractionalTransferFunction(
            tuple((c / lead, e) for c, e in self.num_terms),
            tuple((c / lead, e) for c, e in self.den_terms),
        )

    def to_dict(self) -> dict:
        return {"num": [list(t) for t in self.num_terms], "den": [list(t) for t in self.den_terms]}

    @classmethod
    def from_dict(cls, d: dict) -> "FractionalTransferFunction":
        try:
            return cls(tuple(d["num"]), tuple(d["den"]))
        except (KeyError, TypeError) as exc:
            raise DomainError(f"bad transfer-function document: {exc}") from None

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    def __str__(self) -> str:
        def poly(terms):
            return " + ".join(f"{c:g}s^{e:g}" for c, e in terms) or "0"
        return f"({poly(self.num_terms)}) / ({poly(self.den_terms)})"


def co2_reference_model() -> FractionalTransferFunction:
    """The integer-order fourth-order CO2 model used to seed identification."""
    return FractionalTransferFunction(
        ((1.0, 0.0),),
        ((1.0, 4.0), (1.058e-1, 3.0), (4.2e-3, 2.0), (7.408e-5, 1.0), (4.9e-7, 0.0)),
    )


def load_ftf(path: str | Path) -> FractionalTransferFunction:
    return FractionalTransferFunction.from_dict(json.loads(Path(path).read_text()))


_FIXTURE_DIR = Path(__file__).with_name("fixtures")


def channel_models() -> dict[ChannelKind, FractionalTransferFunction]:
    """Reference per-channel fractional models, shipped as JSON fixtures."""
    return {
        ch: load_ftf(_FIXTURE_DIR / f"{ch.value.lower()}.json")
        for ch in ChannelKind
    }


def alpha_from_ftf(ftf: FractionalTransferFunction, n_states: int = 4) -> float:
    """Commensurate order for the filter: highest denominator exponent / state count.

    This is a heuristic; the result is clipped into (0, 2].
    """
    a = float(ftf.den_exponents.max()) / n_states
    return float(min(max(a, 1e-3), 2.0))


def _gl_sequence(order: float, n: int) -> np.ndarray:
    j = np.arange(1, n)
    return np.concatenate(([1.0], np.cumprod(1.0 - (order + 1.0) / j)))


def _combined(terms, n: int, dt: float) -> np.ndarray:
    acc = np.zeros(n)
    for coef, exp in terms:
        acc += coef * dt ** (-exp) * _gl_sequence(exp, n)
    return acc


def _as_array(x) -> np.ndarray:
    if isinstance(x, TimeSeries):
        x = x.values
    arr = np.asarray(x, dtype=float).ravel()
    if np.isnan(arr).any():
        raise DomainError("input contains gaps")
    return arr


def _simulate(ftf: FractionalTransferFunction, u: np.ndarray, dt: float) -> np.ndarray:
    n = u.size
    den = _combined(ftf.den_terms, n, dt)
    if den[0] == 0 or not math.isfinite(den[0]):
        raise NumericalError("singular GL solve: combined leading denominator weight is zero")
    num = _combined(ftf.num_terms, n, dt)
    # zero-order hold: the output at t_k responds to inputs up to t_{k-1}
    u_held = np.concatenate(([0.0], u[:-1]))
    return lfilter(num, den, u_held)


def simulate_ftf(ftf: FractionalTransferFunction, input, dt: float):
    """Simulate the model from rest.

    Returns a :class:`TimeSeries` when given one, else an array. The input is
    held over each step, so a unit step applied at sample 0 produces
    ``y(t) = t`` exactly for ``1/s``.
    """
    if not dt > 0:
        raise DomainError(f"dt must be positive, got {dt}")
    u = _as_array(input)
    y = _simulate(ftf, u, dt)
    if isinstance(input, TimeSeries):
        return input.with_values(y)
    return y


def output_error(y_r, y_m) -> tuple[np.ndarray, float, float]:
    """Error series ``y_r - y_m``, its max-abs and its mean square (over N samples)."""
    a, b = _as_array(y_r), _as_array(y_m)
    if a.size != b.size:
        raise DomainError(f"length mismatch: {a.size} vs {b.size}")
    if a.size == 0:
        raise DomainError("empty series")
    eps = a - b
    return eps, float(np.max(np.abs(eps))), float(eps @ eps / eps.size)


@dataclass
class FitReport:
    model: FractionalTransferFunction
    eps_max: float
    eps_mse: float
    iterations: int
    converged: bool
    initial_mse: float = math.nan
    history: list = field(default_factory=list, repr=False)  # best mse per start

    def to_dict(self) -> dict:
        return {
            "model": self.model.to_dict(),
            "eps_max": self.eps_max,
            "eps_mse": self.eps_mse,
            "initial_mse": self.initial_mse,
            "iterations": self.iterations,
            "converged": self.converged,
        }


class _Param:
    """Maps the free parameters of a template to a scaled vector and back.

    Free: all numerator coefficients, all denominator coefficients except the
    leading one (fixed to 1), all denominator exponents and, optionally, the
    numerator exponents. Each entry is divided by the magnitude of its
    initial value so the simplex sees comparable scales.
    """

    def __init__(self, template: FractionalTransferFunction, fit_num_exponents: bool):
        t = template.normalized()
        self.num = list(t.num_terms)
        self.den = list(t.den_terms)
        self.lead = int(np.argmax([e for _, e in self.den]))
        self.fit_num_exponents = fit_num_exponents
        vals, lo, hi = [], [], []
        for c, e in self.num:
            vals.append(c); lo.append(COEF_BOUNDS[0]); hi.append(COEF_BOUNDS[1])
            if fit_num_exponents:
                vals.append(e); lo.append(EXPONENT_BOUNDS[0]); hi.append(EXPONENT_BOUNDS[1])
        for i, (c, e) in enumerate(self.den):
            if i != self.lead:
                vals.append(c); lo.append(COEF_BOUNDS[0]); hi.append(COEF_BOUNDS[1])
            vals.append(e); lo.append(EXPONENT_BOUNDS[0]); hi.append(EXPONENT_BOUNDS[1])
        v = np.array(vals)
        self.scale = np.where(np.abs(v) > 0, np.abs(v), 1.0)
        self.x0 = v / self.scale
        self.bounds = list(zip(np.array(lo) / self.scale, np.array(hi) / self.scale))
        self.is_exponent = self._exponent_mask()

    def _exponent_mask(self) -> np.ndarray:
        mask = []
        for _ in self.num:
            mask.append(False)
            if self.fit_num_exponents:
                mask.append(True)
        for i, _ in enumerate(self.den):
            if i != self.lead:
                mask.append(False)
            mask.append(True)
        return np.array(mask)

    def clip(self, x: np.ndarray) -> np.ndarray:
        lo = np.array([b[0] for b in self.bounds])
        hi = np.array([b[1] for b in self.bounds])
        return np.clip(x, lo, hi)

    def decode(self, x: np.ndarray) -> FractionalTransferFunction:
        v = iter(np.asarray(x) * self.scale)
        num = []
        for c, e in self.num:
            c = next(v)
            if self.fit_num_exponents:
                e = next(v)
            num.append((c, e))
        den = []
        for i, (c, e) in enumerate(self.den):
            c = 1.0 if i == self.lead else next(v)
            den.append((c, next(v)))
        return FractionalTransferFunction(tuple(num), tuple(den))


def identify(
    y_r,
    input=None,
    template: Optional[FractionalTransferFunction] = None,
    dt: float = 1.0,
    restarts: int = 5,
    seed: int = 0,
    fit_num_exponents: bool = False,
    maxiter: int = 4000,
    tol: float = 1e-12,
) -> FitReport:
    """Fit a fractional model to ``y_r`` by minimising the output mean-square error.

    ``input`` defaults to a unit step. The search is a bounded Nelder-Mead
    simplex started from the template and from ``restarts`` random
    perturbations of it (seeded), each run re-started from its own optimum
    until it stops improving. The best result is returned; it is never
    worse than the template itself.
    """
    y = _as_array(y_r)
    u = np.ones_like(y) if input is None else _as_array(input)
    if u.size != y.size:
        raise DomainError(f"input and output lengths differ: {u.size} vs {y.size}")
    if y.size > MAX_SIM_SAMPLES:
        raise DomainError(f"identification window exceeds {MAX_SIM_SAMPLES} samples")
    template = co2_reference_model() if template is None else template
    par = _Param(template, fit_num_exponents)
    # relative MSE keeps the stopping tolerance independent of signal scale
    power = float(y @ y / y.size) or 1.0

    def objective(x):
        try:
            model = par.decode(x)
            ym = _simulate(model, u, dt)
        except (DomainError, NumericalError):
            return _PENALTY
        if not np.all(np.isfinite(ym)):
            return _PENALTY
        with np.errstate(over="ignore", invalid="ignore"):
            e = y - ym
            rel = float(e @ e / e.size) / power
        return rel if math.isfinite(rel) else _PENALTY

    f0 = objective(par.x0)
    rng = np.random.default_rng(seed)
    starts = [par.x0]
    for _ in range(restarts):
        jitter = np.where(par.is_exponent, rng.normal(0.0, 0.1, par.x0.size) / par.scale,
                          par.x0 * rng.normal(0.0, 0.2, par.x0.size))
        starts.append(par.clip(par.x0 + jitter))

    best_x, best_f, best_ok, iters, history = par.x0, f0, False, 0, []
    for x in starts:
        fx, ok = objective(x), False
        for _ in range(10):
            res = minimize(objective, x, method="Nelder-Mead", bounds=par.bounds,
                           options={"maxiter": maxiter, "xatol": 1e-10, "fatol": tol,
                                    "adaptive": True})
            iters += res.nit
            improved = res.fun < fx * (1 - 1e-9)
            if res.fun <= fx:
                x, fx, ok = res.x, res.fun, bool(res.success)
            if not improved:
                break
        history.append(fx * power)
        if fx < best_f:
            best_x, best_f, best_ok = x, fx, ok
    if best_f >= _PENALTY:
        raise NumericalError("identification failed: every candidate diverged")
    model = par.decode(best_x)
    _, eps_max, eps_mse = output_error(y, _simulate(model, u, dt))
    return FitReport(model, eps_max, eps_mse, iters, best_ok, f0 * power, history)
