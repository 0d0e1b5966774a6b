"""Quadrature for weakly singular convolution kernels and algebraic tails.

The central integral is ∫_0^t (t-tau)^(alpha-1) g(tau) dtau with alpha in
(0,1): the kernel factor is integrated exactly against the piecewise-linear
interpolant of g (product trapezoidal rule), so the endpoint singularity
never enters a function evaluation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .errors import (
    DomainError,
    GridError,
    NonIntegrableTailError,
    QuadratureConvergenceError,
)

__all__ = [
    "TimeGrid",
    "uniform_grid",
    "graded_grid",
    "singular_weights",
    "convolve_singular",
    "TailEnvelope",
    "ImproperResult",
    "improper_integral",
]


@dataclass(frozen=True)
class TimeGrid:
    """Strictly increasing nodes starting at 0; r = 1 means uniform."""

    nodes: np.ndarray
    r: float = 1.0

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        object.__setattr__(self, "nodes", nodes)
        if nodes.ndim != 1 or nodes.size < 1:
            raise GridError("grid needs a 1-d array of at least one node")
        if not np.all(np.isfinite(nodes)):
            raise GridError("grid nodes must be finite")
        if nodes[0] != 0.0:
            raise GridError("grid must start at t = 0")
        if nodes.size > 1 and not np.all(np.diff(nodes) > 0.0):
            raise GridError("grid nodes must be strictly increasing")
        if not (self.r >= 1.0):
            raise GridError("grading exponent must satisfy r >= 1")

    @property
    def horizon(self) -> float:
        return float(self.nodes[-1])

    @property
    def is_uniform(self) -> bool:
        return self.r == 1.0

    @property
    def step(self) -> float:
        """Node spacing; only meaningful on uniform grids."""
        if not self.is_uniform:
            raise GridError("step is undefined on a graded grid")
        if self.nodes.size < 2:
            raise GridError("degenerate grid has no step")
        return float(self.nodes[1] - self.nodes[0])

    def __len__(self) -> int:
        return int(self.nodes.size)


def uniform_grid(horizon: float, n_steps: int) -> TimeGrid:
    if not (horizon > 0.0) or not math.isfinite(horizon):
        raise GridError("horizon must be positive and finite")
    if n_steps < 1:
        raise GridError("need at least one step")
    return TimeGrid(np.linspace(0.0, horizon, n_steps + 1))


def graded_grid(horizon: float, n_steps: int, r: float) -> TimeGrid:
    """Nodes t_k = T (k/N)^r, clustering near t = 0 for r > 1."""
    if not (horizon > 0.0) or not math.isfinite(horizon):
        raise GridError("horizon must be positive and finite")
    if n_steps < 1:
        raise GridError("need at least one step")
    if not (r >= 1.0):
        raise GridError("grading exponent must satisfy r >= 1")
    k = np.arange(n_steps + 1, dtype=float)
    return TimeGrid(horizon * (k / n_steps) ** r, r=r)


def _power_diff(a, b, p):
    """a**p - b**p without cancellation when a and b are close.

    Requires a >= b >= 0 elementwise.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    out = np.empty_like(a)
    zero = b <= 0.0
    out[zero] = a[zero] ** p
    nz = ~zero
    with np.errstate(divide="ignore"):
        out[nz] = b[nz] ** p * np.expm1(p * np.log1p((a[nz] - b[nz]) / b[nz]))
    return out


def singular_weights(grid: TimeGrid, alpha, target_index: int) -> np.ndarray:
    """Product-trapezoidal weights w_j with
    sum_j w_j g(t_j) = ∫_0^{t_n} (t_n - tau)^(alpha-1) ghat(tau) dtau
    exact for the piecewise-linear interpolant ghat; n = target_index."""
    a = float(alpha)
    if not (0.0 < a <= 1.0):
        raise DomainError("alpha must lie in (0, 1]")
    n = int(target_index)
    if n < 1 or n >= len(grid):
        raise GridError("target_index must name an interior or final node")
    t = grid.nodes[: n + 1]
    tn = t[-1]
    left = tn - t[:-1]
    right = tn - t[1:]
    dt = t[1:] - t[:-1]
    seg0 = _power_diff(left, right, a) / a
    seg1 = left * seg0 - _power_diff(left, right, a + 1.0) / (a + 1.0)
    w = np.zeros(n + 1)
    w[:-1] += seg0 - seg1 / dt
    w[1:] += seg1 / dt
    return w


def _as_kernel(raw, d):
    k = np.asarray(raw, dtype=float)
    if k.ndim == 0:
        return float(k) * np.eye(d)
    if k.shape != (d, d):
        raise DomainError(
            f"kernel matrix shape {k.shape} does not match state dimension {d}"
        )
    return k


def convolve_singular(grid: TimeGrid, alpha, values, kernel_matrix_at):
    """Product-integration approximation of the singular convolution

        out[n] = ∫_0^{t_n} (t_n - tau)^(alpha-1) K(t_n - tau) g(tau) dtau.

    The values g interpolate linearly in tau.  The kernel interpolates
    linearly in y = lag^alpha, the variable in which the intended kernels
    E_{alpha,alpha}(lag^alpha A) are entire; a kernel that is constant
    between nodes reduces the rule to the plain product trapezoid.  Kernel
    evaluations are memoized by lag, so uniform grids cost O(N) evaluations
    and O(N^2) arithmetic.
    """
    a_ = float(alpha)
    if not (0.0 < a_ <= 1.0):
        raise DomainError("alpha must lie in (0, 1]")
    vals = np.asarray(values, dtype=float)
    if vals.shape[0] != len(grid):
        raise GridError("values length must equal the grid length")
    scalar_input = vals.ndim == 1
    work = vals[:, None] if scalar_input else vals
    if work.ndim != 2:
        raise DomainError("values must be a list of scalars or of vectors")
    d = work.shape[1]

    memo: dict[float, np.ndarray] = {}

    def kernel(lag: float) -> np.ndarray:
        k = memo.get(lag)
        if k is None:
            k = _as_kernel(kernel_matrix_at(lag), d)
            memo[lag] = k
        return k

    n_nodes = len(grid)
    out = np.zeros_like(work)
    t = grid.nodes
    dt = np.diff(t)
    u_all = work[:-1]
    v_all = np.diff(work, axis=0) / dt[:, None]

    def row_coeffs(lag_a, lag_b):
        # per-interval moment coefficients multiplying the value samples;
        # the u-part of (second moment - yb * first moment) collapses to
        # dy^2 / (2 alpha), which keeps the cross term stable near lag 0
        dy = _power_diff(lag_a, lag_b, a_)
        m1 = dy / a_
        m1t = _power_diff(lag_a, lag_b, a_ + 1.0) / (a_ + 1.0)
        m2t = _power_diff(lag_a, lag_b, 2.0 * a_ + 1.0) / (2.0 * a_ + 1.0)
        yb = lag_b ** a_
        c_phi_u = m1
        c_phi_v = lag_a * m1 - m1t
        c_psi_u = dy / (2.0 * a_)
        c_psi_v = lag_a * c_psi_u - (m2t - yb * m1t) / dy
        return c_phi_u, c_phi_v, c_psi_u, c_psi_v

    if grid.is_uniform and n_nodes > 2:
        # on a uniform grid interval j of row n sees lags that depend only
        # on n - j, so moments and kernel samples tabulate once
        cpu, cpv, csu, csv = row_coeffs(t[1:], t[:-1])
        kstack = np.stack([kernel(float(lag)) for lag in t])
        for n in range(1, n_nodes):
            r = slice(n - 1, None, -1)
            phi0 = u_all[:n] * cpu[r][:, None] + v_all[:n] * cpv[r][:, None]
            psi = u_all[:n] * csu[r][:, None] + v_all[:n] * csv[r][:, None]
            out[n] = np.einsum(
                "jab,jb->a", kstack[n - 1 :: -1], phi0 - psi
            ) + np.einsum("jab,jb->a", kstack[n:0:-1], psi)
        return out[:, 0] if scalar_input else out

    for n in range(1, n_nodes):
        lag_a = t[n] - t[:n]       # lag at the left node of each interval
        lag_b = t[n] - t[1 : n + 1]  # lag at the right node
        cpu, cpv, csu, csv = row_coeffs(lag_a, lag_b)
        phi0 = u_all[:n] * cpu[:, None] + v_all[:n] * cpv[:, None]
        psi = u_all[:n] * csu[:, None] + v_all[:n] * csv[:, None]
        ka = np.stack([kernel(float(lag)) for lag in lag_a])
        kb = np.stack([kernel(float(lag)) for lag in lag_b])
        out[n] = np.einsum("jab,jb->a", kb, phi0 - psi) + np.einsum(
            "jab,jb->a", ka, psi
        )
    return out[:, 0] if scalar_input else out


@dataclass(frozen=True)
class TailEnvelope:
    """Algebraic tail bound C * s^(-p) valid beyond the split point."""

    C: float
    p: float


@dataclass(frozen=True)
class ImproperResult:
    value: float
    tail_bound: float


def improper_integral(envelope: TailEnvelope, integrand_on_finite, split: float) -> ImproperResult:
    """Finite-part quadrature on [0, split] plus the exact integral of the
    algebraic envelope over (split, infinity)."""
    if not (envelope.p > 1.0):
        raise NonIntegrableTailError(
            f"tail exponent p = {envelope.p} does not integrate at infinity"
        )
    if not (split > 0.0) or not math.isfinite(split):
        raise DomainError("split must be positive and finite")
    val, abserr = integrate.quad(integrand_on_finite, 0.0, split, limit=400)
    if abserr > 1e-7 * max(1.0, abs(val)):
        raise QuadratureConvergenceError(
            f"finite-part quadrature error estimate {abserr:.3e} too large"
        )
    tail = envelope.C * split ** (1.0 - envelope.p) / (envelope.p - 1.0)
    return ImproperResult(value=val + tail, tail_bound=tail)
