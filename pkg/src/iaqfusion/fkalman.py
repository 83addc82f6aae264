"""Fractional-order Kalman filtering on a Matérn state-space model.

The fractional derivative is realised with the Grünwald-Letnikov (GL)
binomial expansion truncated to ``horizon`` past samples::

    sum_j c_j x[k+1-j] = A_d x[k] + w[k],   c_j = (-1)^j binom(alpha, j)

so the one-step prediction carries a weighted memory of past estimates and,
for the covariance, of past covariances. With ``alpha = 1`` the memory
vanishes and the recursion is the ordinary Kalman filter with transition
``A_d + I``.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve
from scipy.optimize import minimize_scalar

from .core import DomainError, NumericalError, TimeSeries

__all__ = [
    "GlWeights",
    "FractionalStateModel",
    "FilterState",
    "FilterRun",
    "gl_weights",
    "matern_model",
    "matern_lambda",
    "matern_companion",
    "initial_state",
    "predict",
    "update",
    "run_filter",
    "fuse_series",
    "tune_process_noise",
    "estimate_noise_variance",
]

DEFAULT_HORIZON = 64


@dataclass(frozen=True)
class GlWeights:
    """GL coefficients ``c_j`` for ``j = 0..horizon``, one column per state."""

    alpha: np.ndarray
    horizon: int
    matrix: np.ndarray  # shape (horizon + 1, n)

    @property
    def weights(self) -> np.ndarray:
        """Coefficients as a 1-D array for a single order, else the full matrix."""
        return self.matrix[:, 0] if self.matrix.shape[1] == 1 else self.matrix

    def __len__(self) -> int:
        return self.horizon + 1


def _check_orders(alpha) -> np.ndarray:
    a = np.atleast_1d(np.asarray(alpha, dtype=float))
    if a.ndim != 1 or not np.all((a > 0) & (a <= 2)):
        raise DomainError(f"fractional orders must lie in (0, 2], got {alpha}")
    return a


def _gl_matrix(a: np.ndarray, horizon: int) -> np.ndarray:
    c = np.empty((horizon + 1, a.size))
    c[0] = 1.0
    for j in range(1, horizon + 1):
        c[j] = c[j - 1] * (1.0 - (a + 1.0) / j)
    return c


def gl_weights(alpha: float | Sequence[float], horizon: int) -> GlWeights:
    """GL binomial weights via ``c_j = c_{j-1} * (1 - (alpha + 1) / j)``.

    >>> gl_weights(0.5, 2).weights.tolist()
    [1.0, -0.5, -0.125]
    """
    a = _check_orders(alpha)
    if int(horizon) != horizon or horizon < 1:
        raise DomainError(f"horizon must be a positive integer, got {horizon}")
    horizon = int(horizon)
    m = _gl_matrix(a, horizon)
    m.setflags(write=False)
    return GlWeights(a, horizon, m)


def _frozen(x) -> np.ndarray:
    arr = np.array(x, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class FractionalStateModel:
    """Discrete fractional state-space model.

    ``A`` is the per-step transition coefficient matrix (already scaled by
    ``dt**alpha``), ``orders`` holds one fractional order per state and
    ``horizon`` is the GL memory length in samples (``None`` keeps the full
    history). ``dt`` is the sampling step in hours.

    For the extended filter pass ``transition``/``transition_jacobian``
    (``x, u -> x'``) and ``observation``/``observation_jacobian``
    (``x -> y``); they replace ``A x + B u`` and ``C x`` respectively.
    """

    A: np.ndarray
    C: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    orders: np.ndarray
    dt: float = 1.0
    horizon: Optional[int] = DEFAULT_HORIZON
    B: Optional[np.ndarray] = None
    initial_covariance: Optional[np.ndarray] = None
    transition: Optional[Callable] = None
    transition_jacobian: Optional[Callable] = None
    observation: Optional[Callable] = None
    observation_jacobian: Optional[Callable] = None
    lam: Optional[float] = None
    A_continuous: Optional[np.ndarray] = None
    _gl: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        A = _frozen(self.A)
        n = A.shape[0]
        if A.shape != (n, n):
            raise DomainError(f"A must be square, got {A.shape}")
        C = _frozen(np.atleast_2d(self.C))
        if C.shape[1] != n:
            raise DomainError(f"C must have {n} columns, got {C.shape}")
        p = C.shape[0]
        Q = _frozen(np.atleast_2d(self.Q))
        R = _frozen(np.atleast_2d(self.R))
        if Q.shape != (n, n) or R.shape != (p, p):
            raise DomainError("Q must be n x n and R must be p x p")
        if not (np.allclose(Q, Q.T) and np.linalg.eigvalsh(Q).min() >= -1e-12 * max(1.0, np.abs(Q).max())):
            raise DomainError("Q must be symmetric positive semi-definite")
        if not (np.allclose(R, R.T) and np.linalg.eigvalsh(R).min() > 0):
            raise DomainError("R must be symmetric positive definite")
        orders = np.broadcast_to(_check_orders(self.orders), (n,)).copy()
        orders.setflags(write=False)
        if self.horizon is not None and (int(self.horizon) != self.horizon or self.horizon < 1):
            raise DomainError(f"horizon must be >= 1 or None, got {self.horizon}")
        if not self.dt > 0:
            raise DomainError(f"dt must be positive, got {self.dt}")
        P0 = np.eye(n) * 0.1 if self.initial_covariance is None else self.initial_covariance
        P0 = _frozen(np.atleast_2d(P0))
        if P0.shape != (n, n):
            raise DomainError("initial covariance must be n x n")
        for name, val in (("A", A), ("C", C), ("Q", Q), ("R", R), ("orders", orders), ("initial_covariance", P0)):
            object.__setattr__(self, name, val)
        if self.B is not None:
            object.__setattr__(self, "B", _frozen(np.asarray(self.B).reshape(n, -1)))
        if self.horizon is not None:
            object.__setattr__(self, "horizon", int(self.horizon))
        object.__setattr__(self, "_gl", _gl_matrix(orders, self.horizon or 256))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    @property
    def extended(self) -> bool:
        return self.transition is not None or self.observation is not None

    def gl(self, lags: int) -> np.ndarray:
        """GL coefficient matrix covering at least ``lags`` lags."""
        if lags >= self._gl.shape[0]:
            # full-history mode grows the cache on demand
            object.__setattr__(self, "_gl", _gl_matrix(self.orders, max(lags, 2 * self._gl.shape[0])))
        return self._gl

    def f(self, x: np.ndarray, u=None) -> np.ndarray:
        if self.transition is not None:
            return np.asarray(self.transition(x, u), dtype=float)
        fx = self.A @ x
        if u is not None and self.B is not None:
            fx = fx + self.B @ np.atleast_1d(u)
        return fx

    def F(self, x: np.ndarray, u=None) -> np.ndarray:
        if self.transition is not None:
            if self.transition_jacobian is None:
                raise DomainError("extended model needs a transition Jacobian")
            return np.asarray(self.transition_jacobian(x, u), dtype=float)
        return self.A

    def h(self, x: np.ndarray) -> np.ndarray:
        if self.observation is not None:
            return np.atleast_1d(np.asarray(self.observation(x), dtype=float))
        return self.C @ x

    def H(self, x: np.ndarray) -> np.ndarray:
        if self.observation is not None:
            if self.observation_jacobian is None:
                raise DomainError("extended model needs an observation Jacobian")
            return np.atleast_2d(np.asarray(self.observation_jacobian(x), dtype=float))
        return self.C


def matern_lambda(length_scale: float) -> float:
    """Pole magnitude ``sqrt(5) / l`` for correlation length ``l``."""
    if not length_scale > 0:
        raise DomainError(f"correlation length must be positive, got {length_scale}")
    return math.sqrt(5.0) / length_scale


def matern_companion(lam):
    """Companion matrix of ``(s + lam)^4`` as nested lists.

    Works with any number type supporting ``*`` and ``**`` (floats,
    ``fractions.Fraction``, ``mpmath.mpf``), so the pole structure can be
    checked at higher precision than float64 allows: a defective quadruple
    eigenvalue splits by roughly ``eps**0.25`` under rounding.
    """
    zero, one = lam * 0, lam ** 0
    return [
        [zero, one, zero, zero],
        [zero, zero, one, zero],
        [zero, zero, zero, one],
        [-lam ** 4, -4 * lam ** 3, -6 * lam ** 2, -4 * lam],
    ]


def matern_model(
    l: float = 5.0,
    dt: float = 1.0,
    q: float = 1e-6,
    r: float = 0.5 ** 2,
    alpha: float = 1.0,
    horizon: Optional[int] = DEFAULT_HORIZON,
    p0: float | np.ndarray = 0.1,
) -> FractionalStateModel:
    """Four-state Matérn model with a quadruple pole at ``-sqrt(5)/l``.

    The continuous companion matrix has last row
    ``[-lam^4, -4 lam^3, -6 lam^2, -4 lam]``; noise enters the last state and
    only the first state is observed. Discretisation absorbs the GL step:
    ``A_d = A_c * dt**alpha`` and the driven-state process variance is
    ``q * dt**alpha``.

    ``p0`` is the initial covariance: a scalar for ``p0 * I`` or a full
    matrix.
    """
    for name, val in (("dt", dt), ("q", q), ("r", r)):
        if not val > 0:
            raise DomainError(f"{name} must be positive, got {val}")
    _check_orders(alpha)
    lam = matern_lambda(l)
    Ac = np.array(matern_companion(lam), dtype=float)
    scale = dt ** alpha
    Q = np.zeros((4, 4))
    Q[3, 3] = q * scale
    P0 = np.eye(4) * p0 if np.isscalar(p0) else np.asarray(p0, dtype=float)
    return FractionalStateModel(
        A=Ac * scale,
        B=np.array([[0.0], [0.0], [0.0], [1.0]]),
        C=np.array([[1.0, 0.0, 0.0, 0.0]]),
        Q=Q,
        R=np.array([[r]]),
        orders=np.full(4, float(alpha)),
        dt=dt,
        horizon=horizon,
        initial_covariance=P0,
        lam=lam,
        A_continuous=Ac,
    )


@dataclass(frozen=True)
class FilterState:
    """Estimate, covariance and bounded memory of earlier posteriors.

    ``history`` holds ``(x, P)`` pairs for the posteriors preceding the
    current one, oldest first; its length is ``min(k, horizon)``.
    """

    estimate: np.ndarray
    covariance: np.ndarray
    history: deque
    k: int = 0


def initial_state(model: FractionalStateModel, x0: Optional[np.ndarray] = None) -> FilterState:
    """Zero mean (unless given) with the model's initial covariance."""
    x = np.zeros(model.n) if x0 is None else np.asarray(x0, dtype=float).copy()
    return FilterState(x, model.initial_covariance.copy(), deque(maxlen=model.horizon), 0)


def _sym(P: np.ndarray) -> np.ndarray:
    return 0.5 * (P + P.T)


def predict(model: FractionalStateModel, state: FilterState, u=None) -> FilterState:
    """One GL prediction step.

    ``x-[k+1] = f(x[k]) - sum_{j=1..m} c_j * x[k+1-j]`` and
    ``P-[k+1] = (F + Y1) P[k] (F + Y1)^T + Q + sum_{j=2..m} Yj P[k+1-j] Yj``
    with ``Yj = diag(|c_j|)`` (``Y1 = diag(alpha)``) and
    ``m = min(k + 1, horizon)``.
    """
    if state.k > 0 and not state.history:
        raise NumericalError(f"filter state at k={state.k} has no history")
    hist = state.history
    lags = state.k + 1 if model.horizon is None else min(state.k + 1, model.horizon)
    lags = min(lags, len(hist) + 1)
    c = model.gl(lags)

    x, P = state.estimate, state.covariance
    y1 = -c[1]
    x_prior = model.f(x, u) + y1 * x
    F1 = model.F(x, u) + np.diag(y1)
    P_prior = F1 @ P @ F1.T + model.Q

    if lags > 1:
        past = list(hist)[-(lags - 1):][::-1]  # x[k-1], x[k-2], ...
        xs = np.array([e[0] for e in past])
        Ps = np.array([e[1] for e in past])
        cj = c[2:lags + 1]
        x_prior = x_prior - np.einsum("ji,ji->i", cj, xs)
        w = np.abs(cj)
        P_prior = P_prior + np.einsum("ji,jik,jk->ik", w, Ps, w)

    new_hist = deque(hist, maxlen=model.horizon)
    new_hist.append((x, P))
    return FilterState(x_prior, _sym(P_prior), new_hist, state.k + 1)


def update(model: FractionalStateModel, prior: FilterState, y) -> FilterState:
    """Kalman correction (Joseph form). A gap (``None``/NaN) leaves the prior unchanged."""
    if y is None:
        return prior
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if np.isnan(y).all():
        return prior
    x, P = prior.estimate, prior.covariance
    H = model.H(x)
    S = H @ P @ H.T + model.R
    try:
        cf = cho_factor(_sym(S))
    except (LinAlgError, ValueError):
        raise NumericalError(f"innovation covariance is not invertible: S={S.tolist()}") from None
    K = cho_solve(cf, H @ P).T
    innov = y - model.h(x)
    x_post = x + K @ innov
    I_KH = np.eye(model.n) - K @ H
    P_post = I_KH @ P @ I_KH.T + K @ model.R @ K.T
    return FilterState(x_post, _sym(P_post), prior.history, prior.k)


@dataclass
class FilterRun:
    estimates: np.ndarray      # posterior states, shape (N, n)
    covariances: np.ndarray    # posterior covariances, shape (N, n, n)
    outputs: np.ndarray        # h(x) of each posterior, shape (N, p)
    neg_log_likelihood: float  # Gaussian innovation NLL over observed samples (constant dropped)


def run_filter(model: FractionalStateModel, y, state: Optional[FilterState] = None, inputs=None) -> FilterRun:
    """Predict/update over every sample of ``y`` (NaN = gap).

    The first sample is treated as an update of the initial state (the
    initial state is the prior at ``k = 0``).
    """
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = y[:, None]
    N = y.shape[0]
    st = initial_state(model) if state is None else state
    xs = np.empty((N, model.n))
    Ps = np.empty((N, model.n, model.n))
    outs = np.empty((N, model.p))
    nll = 0.0
    for k in range(N):
        try:
            if k > 0:
                st = predict(model, st, None if inputs is None else inputs[k - 1])
            yk = y[k]
            if not np.isnan(yk).all():
                H = model.H(st.estimate)
                S = H @ st.covariance @ H.T + model.R
                v = yk - model.h(st.estimate)
                sign, logdet = np.linalg.slogdet(S)
                if sign > 0:
                    nll += 0.5 * (logdet + float(v @ np.linalg.solve(S, v)))
                else:
                    nll = math.inf
            st = update(model, st, yk)
        except NumericalError as exc:
            raise NumericalError(f"step {k}: {exc}") from None
        xs[k] = st.estimate
        Ps[k] = st.covariance
        outs[k] = model.h(st.estimate)
    return FilterRun(xs, Ps, outs, nll)


def fuse_series(
    model: FractionalStateModel,
    series: TimeSeries,
    center: bool = True,
    offset: Optional[float] = None,
) -> TimeSeries:
    """Filter a channel and return the gap-free estimated output.

    The Matérn state has zero mean, so by default the series is centred on
    the mean of its observed samples before filtering and shifted back
    afterwards. Pass ``offset`` to fix the centring value, or
    ``center=False`` to filter the raw values.
    """
    if not math.isclose(series.step_hours, model.dt, rel_tol=1e-9):
        raise DomainError(f"series step {series.step_hours} h does not match model dt {model.dt} h")
    vals = series.values
    if offset is None:
        offset = float(np.nanmean(vals)) if center and not np.isnan(vals).all() else 0.0
    run = run_filter(model, vals - offset)
    return series.with_values(run.outputs[:, 0] + offset)


def tune_process_noise(
    model: FractionalStateModel,
    series: TimeSeries | np.ndarray,
    bounds: tuple[float, float] = (1e-12, 1e8),
    data_scaled_prior: bool = True,
) -> FractionalStateModel:
    """Pick the driven-state noise density ``q`` by maximum likelihood.

    The innovation likelihood of the centred series is maximised over
    ``log q`` (bounded scalar search). With ``data_scaled_prior`` the
    initial covariance becomes ``var(y) * I`` so that an uninformative start
    does not get absorbed into ``q``. Only models built by
    :func:`matern_model` (noise on the last state) are supported.
    """
    vals = series.values if isinstance(series, TimeSeries) else np.asarray(series, dtype=float)
    obs = vals[~np.isnan(vals)]
    if obs.size < 2:
        raise DomainError("need at least two observed samples to tune q")
    yc = vals - obs.mean()
    scale = model.dt ** model.orders[-1]
    base = model
    if data_scaled_prior:
        var = float(np.var(obs)) or 1.0
        base = replace(model, initial_covariance=np.eye(model.n) * var)

    def with_q(q):
        Q = np.zeros((model.n, model.n))
        Q[-1, -1] = q * scale
        return replace(base, Q=Q)

    def objective(log_q):
        try:
            return run_filter(with_q(math.exp(log_q)), yc).neg_log_likelihood
        except NumericalError:
            return math.inf

    lo, hi = (math.log(b) for b in bounds)
    res = minimize_scalar(objective, bounds=(lo, hi), method="bounded", options={"xatol": 1e-3})
    return with_q(math.exp(res.x))


def estimate_noise_variance(series: TimeSeries | np.ndarray) -> float:
    """Measurement-noise variance from first differences of consecutive samples.

    Uses the median absolute deviation of the differences, so slow trends
    and occasional spikes have little effect. Differences of white noise
    have twice its variance, hence the halving.
    """
    vals = series.values if isinstance(series, TimeSeries) else np.asarray(series, dtype=float)
    d = np.diff(vals)
    d = d[~np.isnan(d)]
    if d.size < 2:
        raise DomainError("need at least two consecutive observed pairs to estimate noise")
    mad = float(np.median(np.abs(d - np.median(d))))
    sigma_d = mad / 0.6744897501960817
    var = sigma_d ** 2 / 2
    if var <= 0:
        # quantised or constant data: fall back to the plain variance of differences
        var = float(np.var(d)) / 2 or 1e-12
    return var
