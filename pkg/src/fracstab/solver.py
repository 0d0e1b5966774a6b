"""Trajectory solvers for Caputo systems ^C D^alpha x = A x + f(t, x).

Provides the exact linear propagator, a fractional Adams-Bashforth-Moulton
predictor-corrector, the Lyapunov-Perron fixed-point iteration on the
variation-of-constants form, and the closed-form Riemann-Liouville scalar
solution used by the divergence demonstration.
"""

import math
from dataclasses import dataclass, field as dataclass_field
from typing import Callable, Optional

import numpy as np

from .errors import (
    DomainError,
    GridError,
    IterationDivergenceError,
    NonFiniteStateError,
)
from .matfun import as_square_matrix, ml_matrix, spectral_decompose
from .norms import check_norm, operator_norm, vector_norm
from .quad import TimeGrid, convolve_singular, singular_weights, _power_diff
from .special_fn import FracOrder, MLParams, ml

_LP_TOL = 1e-10
_LP_MAX_ITER = 200


def _order(alpha):
    """Solver order: FracOrder or a float in (0, 1].

    Unlike FracOrder itself, the solvers admit alpha = 1 so classical
    first-order problems remain available as sanity limits.
    """
    if isinstance(alpha, FracOrder):
        return alpha.alpha
    a = float(alpha)
    if not math.isfinite(a) or not 0.0 < a <= 1.0:
        raise DomainError(f"order must lie in (0, 1], got {alpha!r}")
    return a


def _as_state(x0, d=None):
    x = np.atleast_1d(np.asarray(x0, dtype=float))
    if x.ndim != 1:
        raise DomainError("initial state must be a scalar or a vector")
    if not np.all(np.isfinite(x)):
        raise DomainError("initial state must be finite")
    if d is not None and x.shape[0] != d:
        raise DomainError(f"initial state has length {x.shape[0]}, expected {d}")
    return x


def _as_q_matrix(q0):
    m = np.atleast_2d(np.asarray(q0, dtype=float))
    if m.shape[0] != m.shape[1]:
        raise DomainError("perturbation matrix must be square")
    if not np.all(np.isfinite(m)):
        raise DomainError("perturbation matrix entries must be finite")
    return m


class PerturbationSpec:
    """Base class for the perturbation f(t, x); subclasses are the kinds.

    Every kind exposes the value f(t, x), the Lipschitz envelope K(t) with
    K(t) >= ||Q(t)|| for the linear kinds, and the envelope limit at large
    times used by the decay certificates.
    """

    is_linear = False

    def field(self, t, x):
        raise NotImplementedError

    def envelope(self, t, norm="max"):
        raise NotImplementedError

    def limit_envelope(self, norm="max"):
        raise NotImplementedError

    def q_matrix(self, t):
        raise DomainError(f"{type(self).__name__} has no perturbation matrix")


@dataclass(frozen=True)
class NoPerturbation(PerturbationSpec):
    """f identically zero."""

    is_linear = True

    def field(self, t, x):
        return np.zeros_like(np.atleast_1d(np.asarray(x, dtype=float)))

    def envelope(self, t, norm="max"):
        return 0.0

    def limit_envelope(self, norm="max"):
        return 0.0

    def q_matrix(self, t):
        return None


@dataclass(frozen=True)
class LinearConstant(PerturbationSpec):
    """f(t, x) = Q0 x; the envelope equals ||Q0|| by construction."""

    q0: np.ndarray

    is_linear = True

    def __post_init__(self):
        object.__setattr__(self, "q0", _as_q_matrix(self.q0))

    def field(self, t, x):
        return self.q0 @ np.atleast_1d(np.asarray(x, dtype=float))

    def envelope(self, t, norm="max"):
        return operator_norm(self.q0, norm)

    def limit_envelope(self, norm="max"):
        return operator_norm(self.q0, norm)

    def q_matrix(self, t):
        return self.q0


@dataclass(frozen=True)
class LinearDecaying(PerturbationSpec):
    """f(t, x) = Q0 x / (1+t)^gamma with gamma > 0."""

    q0: np.ndarray
    gamma: float

    is_linear = True

    def __post_init__(self):
        object.__setattr__(self, "q0", _as_q_matrix(self.q0))
        g = float(self.gamma)
        if not math.isfinite(g) or g <= 0.0:
            raise DomainError(f"decay exponent must be positive, got {self.gamma!r}")
        object.__setattr__(self, "gamma", g)

    def field(self, t, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return (self.q0 @ x) / (1.0 + float(t)) ** self.gamma

    def envelope(self, t, norm="max"):
        return operator_norm(self.q0, norm) / (1.0 + float(t)) ** self.gamma

    def limit_envelope(self, norm="max"):
        return 0.0

    def q_matrix(self, t):
        return self.q0 / (1.0 + float(t)) ** self.gamma


@dataclass(frozen=True)
class LinearTable(PerturbationSpec):
    """f(t, x) = Q(t) x with Q interpolated linearly between table rows.

    Beyond the last table time the last matrix is held constant.  The
    envelope interpolates the node norms, which dominates the norm of the
    interpolated matrix by convexity.
    """

    times: np.ndarray
    matrices: np.ndarray

    is_linear = True

    def __post_init__(self):
        ts = np.asarray(self.times, dtype=float)
        ms = np.stack([_as_q_matrix(m) for m in self.matrices])
        if ts.ndim != 1 or len(ts) != ms.shape[0] or len(ts) < 1:
            raise DomainError("table times and matrices must have equal nonzero length")
        if not np.all(np.isfinite(ts)) or np.any(np.diff(ts) <= 0.0):
            raise DomainError("table times must be finite and strictly increasing")
        if ts[0] < 0.0:
            raise DomainError("table times must be nonnegative")
        object.__setattr__(self, "times", ts)
        object.__setattr__(self, "matrices", ms)

    def q_matrix(self, t):
        t = float(t)
        ts = self.times
        if t <= ts[0]:
            return self.matrices[0]
        if t >= ts[-1]:
            return self.matrices[-1]
        k = int(np.searchsorted(ts, t) - 1)
        w = (t - ts[k]) / (ts[k + 1] - ts[k])
        return (1.0 - w) * self.matrices[k] + w * self.matrices[k + 1]

    def field(self, t, x):
        return self.q_matrix(t) @ np.atleast_1d(np.asarray(x, dtype=float))

    def envelope(self, t, norm="max"):
        t = float(t)
        ts = self.times
        norms = np.array([operator_norm(m, norm) for m in self.matrices])
        if t <= ts[0]:
            return float(norms[0])
        if t >= ts[-1]:
            return float(norms[-1])
        k = int(np.searchsorted(ts, t) - 1)
        w = (t - ts[k]) / (ts[k + 1] - ts[k])
        return float((1.0 - w) * norms[k] + w * norms[k + 1])

    def limit_envelope(self, norm="max"):
        return float(operator_norm(self.matrices[-1], norm))


@dataclass(frozen=True)
class NonlinearSaturating(PerturbationSpec):
    """f(t, x) = c (1+t)^(-gamma) tanh(x) componentwise.

    tanh is the fixed saturation map: smooth, tanh(0) = 0, derivative
    bounded by one, so |c| (1+t)^(-gamma) is a Lipschitz envelope in each
    of the supported norms.  gamma = 0 gives a constant envelope.
    """

    c: float
    gamma: float = 0.0

    def __post_init__(self):
        c = float(self.c)
        g = float(self.gamma)
        if not math.isfinite(c):
            raise DomainError("saturation gain must be finite")
        if not math.isfinite(g) or g < 0.0:
            raise DomainError(f"decay exponent must be >= 0, got {self.gamma!r}")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "gamma", g)

    def field(self, t, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return self.c * (1.0 + float(t)) ** (-self.gamma) * np.tanh(x)

    def envelope(self, t, norm="max"):
        return abs(self.c) * (1.0 + float(t)) ** (-self.gamma)

    def limit_envelope(self, norm="max"):
        return 0.0 if self.gamma > 0.0 else abs(self.c)


@dataclass(frozen=True)
class NonlinearTable(PerturbationSpec):
    """f(t, x) = K(t) tanh(x) with K interpolated linearly between rows."""

    times: np.ndarray
    k_values: np.ndarray

    def __post_init__(self):
        ts = np.asarray(self.times, dtype=float)
        ks = np.asarray(self.k_values, dtype=float)
        if ts.ndim != 1 or ks.ndim != 1 or len(ts) != len(ks) or len(ts) < 1:
            raise DomainError("table times and values must have equal nonzero length")
        if not np.all(np.isfinite(ts)) or np.any(np.diff(ts) <= 0.0):
            raise DomainError("table times must be finite and strictly increasing")
        if ts[0] < 0.0 or not np.all(np.isfinite(ks)) or np.any(ks < 0.0):
            raise DomainError("table values must be finite and nonnegative")
        object.__setattr__(self, "times", ts)
        object.__setattr__(self, "k_values", ks)

    def _k(self, t):
        return float(np.interp(float(t), self.times, self.k_values))

    def field(self, t, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return self._k(t) * np.tanh(x)

    def envelope(self, t, norm="max"):
        return self._k(t)

    def limit_envelope(self, norm="max"):
        return float(self.k_values[-1])


def as_perturbation(pert) -> PerturbationSpec:
    """None means no perturbation; anything else must already be a kind."""
    if pert is None:
        return NoPerturbation()
    if not isinstance(pert, PerturbationSpec):
        raise DomainError(f"expected a PerturbationSpec, got {type(pert).__name__}")
    return pert


@dataclass(frozen=True)
class Trajectory:
    """States on a time grid plus solver metadata.

    states[k] belongs to grid.nodes[start_index + k]; start_index is zero
    for every Caputo path and one for the Riemann-Liouville closed form,
    whose states are singular at t = 0.
    """

    grid: TimeGrid
    states: np.ndarray
    meta: dict = dataclass_field(default_factory=dict)
    start_index: int = 0

    def __post_init__(self):
        states = np.atleast_2d(np.asarray(self.states, dtype=float))
        if states.shape[0] != len(self.grid) - self.start_index:
            raise GridError("states length must match the grid length")
        object.__setattr__(self, "states", states)

    @property
    def times(self):
        return self.grid.nodes[self.start_index :]


def solve_linear_exact(alpha, a, x0, grid: TimeGrid, spec=None) -> Trajectory:
    """states[n] = E_alpha(t_n^alpha A) x0, the exact linear solution."""
    al = _order(alpha)
    m = as_square_matrix(a)
    x = _as_state(x0, m.shape[0])
    if spec is None:
        spec = spectral_decompose(m)
    params = MLParams(al, 1.0)
    states = np.empty((len(grid), m.shape[0]))
    states[0] = x
    for n, t in enumerate(grid.nodes[1:], start=1):
        states[n] = ml_matrix(params, t, m, spec) @ x
    return Trajectory(
        grid=grid,
        states=states,
        meta={"method": "linear_exact", "iterations": 0, "residual": 0.0},
    )


def _rectangle_weights(t, n, al):
    # integral of (t_n - tau)^(alpha-1) over each history interval
    left = t[n] - t[:n]
    right = t[n] - t[1 : n + 1]
    return _power_diff(left, right, al) / al


def solve_abm(alpha, field: Callable, x0, grid: TimeGrid, corrector_sweeps: int = 1) -> Trajectory:
    """Fractional Adams-Bashforth-Moulton predictor-corrector.

    Predictor: product-rectangle rule over the field history.  Corrector:
    product-trapezoid rule, swept corrector_sweeps times.  Global order is
    min(2, 1 + alpha) for smooth fields.
    """
    al = _order(alpha)
    sweeps = int(corrector_sweeps)
    if sweeps < 1:
        raise DomainError("corrector_sweeps must be >= 1")
    x = _as_state(x0)
    d = x.shape[0]
    n_nodes = len(grid)
    states = np.empty((n_nodes, d))
    states[0] = x
    if n_nodes == 1:
        return Trajectory(
            grid=grid,
            states=states,
            meta={"method": "abm", "iterations": sweeps, "residual": 0.0},
        )
    t = grid.nodes
    inv_gamma = 1.0 / math.gamma(al)
    fhist = np.empty((n_nodes, d))
    fhist[0] = np.atleast_1d(np.asarray(field(t[0], x), dtype=float))
    for n in range(1, n_nodes):
        rect = _rectangle_weights(t, n, al)
        predictor = x + inv_gamma * (rect @ fhist[:n])
        w = singular_weights(grid, al, n)
        base = x + inv_gamma * (w[:n] @ fhist[:n])
        state = predictor
        for _ in range(sweeps):
            fn = np.atleast_1d(np.asarray(field(t[n], state), dtype=float))
            state = base + inv_gamma * w[n] * fn
        if not np.all(np.isfinite(state)):
            raise NonFiniteStateError(f"state left the representable range at t = {t[n]}")
        states[n] = state
        fhist[n] = np.atleast_1d(np.asarray(field(t[n], state), dtype=float))
    return Trajectory(
        grid=grid,
        states=states,
        meta={"method": "abm", "iterations": sweeps, "residual": None},
    )


def _ml_kernel(al, m, spec):
    """Memoized lag -> E_{alpha,alpha}(lag^alpha A) for the operator kernel."""
    params = MLParams(al, al)
    memo = {}

    def kernel(lag):
        k = memo.get(lag)
        if k is None:
            k = ml_matrix(params, lag, m, spec)
            memo[lag] = k
        return k

    return kernel


def _apply_operator(grid, al, linear_states, pert, states, kernel):
    fvals = np.stack(
        [pert.field(t, s) for t, s in zip(grid.nodes, states)]
    ).astype(float)
    return linear_states + convolve_singular(grid, al, fvals, kernel)


def lyapunov_perron_iterate(
    alpha,
    a,
    pert,
    x0,
    grid: TimeGrid,
    max_iter: int = _LP_MAX_ITER,
    tol: float = _LP_TOL,
    norm: str = "max",
    spec=None,
) -> Trajectory:
    """Fixed-point iteration on the variation-of-constants operator.

    Starts from the unperturbed solution and applies the discretized
    operator T(xi)(t) = E_alpha(t^alpha A) x0 + convolution of the kernel
    E_{alpha,alpha} with f(., xi(.)) until the successive sup-norm
    difference falls below tol.  Iteration ratios are recorded in
    meta["ratios"].
    """
    al = _order(alpha)
    m = as_square_matrix(a)
    pert = as_perturbation(pert)
    check_norm(norm)
    max_iter = int(max_iter)
    if max_iter < 1:
        raise DomainError("max_iter must be >= 1")
    tol = float(tol)
    if not tol > 0.0:
        raise DomainError("tol must be positive")
    if spec is None:
        spec = spectral_decompose(m)
    x = _as_state(x0, m.shape[0])
    linear = solve_linear_exact(al, m, x, grid, spec=spec).states
    if len(grid) == 1:
        return Trajectory(
            grid=grid,
            states=linear,
            meta={"method": "lyapunov_perron", "iterations": 0, "residual": 0.0, "ratios": []},
        )
    kernel = _ml_kernel(al, m, spec)
    states = linear
    ratios = []
    prev_diff = None
    for k in range(1, max_iter + 1):
        new_states = _apply_operator(grid, al, linear, pert, states, kernel)
        diff = float(np.max(vector_norm(new_states - states, norm)))
        if prev_diff is not None and prev_diff > 0.0:
            ratios.append(diff / prev_diff)
        states = new_states
        if diff <= tol:
            return Trajectory(
                grid=grid,
                states=states,
                meta={
                    "method": "lyapunov_perron",
                    "iterations": k,
                    "residual": diff,
                    "ratios": ratios,
                },
            )
        if not math.isfinite(diff):
            break
        prev_diff = diff
    last_ratio = ratios[-1] if ratios else math.inf
    raise IterationDivergenceError(
        f"no convergence after {k} iterations; last ratio {last_ratio:.6g}"
    )


def solve_rl_scalar_exact(alpha, lam, b, x0, grid: TimeGrid) -> Trajectory:
    """Closed form t^(alpha-1) E_{alpha,alpha}((-lambda+b) t^alpha) x0.

    Solves the scalar Riemann-Liouville problem with constant coefficient
    b; states start at the first positive node because the solution is
    singular at t = 0.
    """
    al = _order(alpha)
    lam = float(lam)
    if not math.isfinite(lam) or lam <= 0.0:
        raise DomainError(f"lambda must be positive, got {lam!r}")
    b = float(b)
    if not math.isfinite(b):
        raise DomainError("b must be finite")
    x = float(np.asarray(x0, dtype=float).reshape(()))
    params = MLParams(al, al)
    coeff = -lam + b
    ts = grid.nodes[1:]
    states = np.array(
        [[t ** (al - 1.0) * ml(params, coeff * t ** al).real * x] for t in ts]
    )
    if len(ts) == 0:
        states = np.empty((0, 1))
    return Trajectory(
        grid=grid,
        states=states,
        meta={"method": "rl_exact", "iterations": 0, "residual": None},
        start_index=1,
    )


def residual_check(traj: Trajectory, alpha, a, pert=None, norm: str = "max", spec=None) -> float:
    """Defect of the variation-of-constants equation along a trajectory.

    Returns the max over nodes of ||xi(t_n) - (T xi)(t_n)|| with T the same
    discretized operator the fixed-point iteration applies.
    """
    al = _order(alpha)
    m = as_square_matrix(a)
    pert = as_perturbation(pert)
    check_norm(norm)
    if traj.start_index != 0:
        raise GridError("residual check requires a trajectory defined from t = 0")
    if traj.states.shape[0] != len(traj.grid):
        raise GridError("trajectory states do not cover its grid")
    if traj.states.shape[1] != m.shape[0]:
        raise GridError("trajectory dimension does not match the matrix")
    grid = traj.grid
    if len(grid) == 1:
        return 0.0
    if spec is None:
        spec = spectral_decompose(m)
    x = traj.states[0]
    linear = solve_linear_exact(al, m, x, grid, spec=spec).states
    kernel = _ml_kernel(al, m, spec)
    image = _apply_operator(grid, al, linear, pert, traj.states, kernel)
    return float(np.max(vector_norm(image - traj.states, norm)))
