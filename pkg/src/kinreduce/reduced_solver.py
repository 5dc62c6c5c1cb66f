"""Time integration of the reduced system on a periodic 1D mesh.

For ``ConservativeMoment`` the update is in conservative form: the raw
moments c_0..c_{N+2} are global coordinates and obey balanced laws
d_t c_k + d_x F_k = s_k with F_k = c_{k+1} for k < N+2, a closure flux
F_{N+2} = int xi^{N+3} f_hat for the top moment, and s_k the moment of
the collision operator (zero for k <= 2 by collision invariance).
Fluxes are differenced with a local Lax-Friedrichs scheme and advanced
by SSP-RK2; parameters are recovered per cell by damped Newton.

Other manifolds use the quasi-linear form
A0(omega) d_t omega + A1(omega) d_x omega = Q(omega)
with central differences plus Rusanov-type dissipation.

Propagation speeds come from the symmetric-definite pencil
A1 x = lambda A0 x; on the truncated grid they never exceed the
velocity bound L.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .ansatz import AnsatzPoint, ConservativeMoment, Manifold, recover_batch
from .errors import BlowUpError, DegenerateChartError, InversionError, StepError
from .kinetic import (
    CollisionModel,
    DistributionField,
    SpatialMesh,
    collision_rate,
    entropy_density,
)
from .projection import assemble_coefficients, flux_matrix, gram_matrix
from .quadrature import QuadratureRule

__all__ = [
    "ReducedState",
    "ReducedTrajectory",
    "spectral_radius",
    "initial_state",
    "step",
    "run_reduced",
]

_SPEED_BLOWUP = 1e6


def spectral_radius(p: AnsatzPoint, grid: QuadratureRule) -> float:
    """Maximum |lambda| of the generalized eigenproblem A1 x = lambda A0 x."""
    a0 = gram_matrix(p, grid)
    a1 = flux_matrix(p, grid)
    try:
        lam = scipy.linalg.eigh(a1, a0, eigvals_only=True)
    except scipy.linalg.LinAlgError as exc:
        raise DegenerateChartError(f"pencil solve failed: {exc}") from exc
    return float(np.abs(lam).max())


def _pencil_radius_batch(M: np.ndarray, V: np.ndarray) -> np.ndarray:
    """Speeds of the pencil V x = lambda M x for stacked SPD M."""
    L = np.linalg.cholesky(M)
    Y = np.linalg.solve(L, V)
    Z = np.linalg.solve(L, np.swapaxes(Y, -1, -2))
    lam = np.linalg.eigvalsh(0.5 * (Z + np.swapaxes(Z, -1, -2)))
    return np.abs(lam).max(axis=-1)


@dataclass
class ReducedState:
    """Per-cell parameters (and, for the conservative path, the moment
    coordinates that are the authoritative state)."""

    manifold: Manifold
    grid: QuadratureRule
    mesh: SpatialMesh
    time: float
    omegas: np.ndarray
    moments: np.ndarray | None = None

    def points(self) -> list[AnsatzPoint]:
        return [AnsatzPoint(self.manifold, w) for w in self.omegas]


@dataclass
class ReducedTrajectory:
    manifold: Manifold
    grid: QuadratureRule
    mesh: SpatialMesh
    times: np.ndarray
    omegas: np.ndarray          # (n_times, cells, dim)
    moment_totals: np.ndarray   # (n_times, n_recorded_moments)
    entropy: np.ndarray         # (n_times,)
    model: CollisionModel | None = None
    moment_labels: list[str] = field(default_factory=list)


def initial_state(
    manifold: Manifold, f0: DistributionField
) -> ReducedState:
    """Project an initial kinetic field onto the manifold."""
    from .ansatz import project_initial

    points = project_initial(manifold, f0)
    omegas = np.stack([p.omega for p in points])
    moments = None
    if isinstance(manifold, ConservativeMoment):
        # the conservative state is the moment vector itself
        xi = f0.grid.nodes
        powers = np.stack([xi**k for k in range(manifold.n_moments)])
        moments = f0.values @ (powers * f0.grid.weights).T
    return ReducedState(manifold, f0.grid, f0.mesh, 0.0, omegas, moments)


def _moments_of_values(vals: np.ndarray, grid: QuadratureRule):
    """Vectorized (rho, u, theta, q) of stacked velocity profiles."""
    wts = grid.weights
    xi = grid.nodes
    rho = vals @ wts
    u = (vals @ (xi * wts)) / rho
    c = xi[None, :] - u[:, None]
    theta = np.einsum("mn,mn->m", vals, c * c * wts[None, :]) / rho
    q = np.einsum("mn,mn->m", vals, c * c * c * wts[None, :]) / rho
    return rho, u, theta, q


def _target_batch(model: CollisionModel, vals: np.ndarray, grid: QuadratureRule):
    """Collision targets for stacked profiles (d=1 formulas)."""
    rho, u, theta, q = _moments_of_values(vals, grid)
    if np.any(rho <= 0.0) or np.any(theta <= 0.0):
        bad = int(np.flatnonzero((rho <= 0.0) | (theta <= 0.0))[0])
        raise StepError("unrealizable moments during collision evaluation", cell=bad)
    c = grid.nodes[None, :] - u[:, None]
    th = theta[:, None]
    feq = rho[:, None] / np.sqrt(2.0 * np.pi * th) * np.exp(-c * c / (2.0 * th))
    if model.kind == "shakhov":
        factor = 1.0 + (1.0 - model.prandtl) * q[:, None] * c / (3.0 * th**2) * (
            c * c / (2.0 * th) - 1.5
        )
        return feq * factor
    # BGK; ES-BGK degenerates to the Maxwellian in d=1 (pressure = theta)
    return feq


def _warm_starts(manifold, omega_prev, grid):
    """Warm starts for the next Newton solve.  Rows sitting numerically
    on the chart's rank-deficient ridge (all alphas ~ 0) are nudged off
    it: Newton cannot leave the ridge because the Jacobian is singular
    there, while a generic nearby start converges quadratically."""
    warm = omega_prev.copy()
    N = manifold.degree
    if N == 0:
        return warm
    span = max(grid.half_width, 1.0)
    scales = span ** -np.arange(1, N + 1)
    alpha0 = np.maximum(np.abs(warm[:, 0]), 1e-300)
    on_ridge = np.all(
        np.abs(warm[:, 1 : N + 1]) <= 1e-9 * alpha0[:, None] * scales[None, :], axis=1
    )
    if on_ridge.any():
        warm[on_ridge, 1 : N + 1] += 3e-2 * alpha0[on_ridge, None] * scales[None, :]
    return warm


def _cm_recover(manifold, C, grid, omega_prev):
    """Batch Newton with a one-shot retry from the neighboring cell's
    parameters (Newton basins are continuous along smooth fields).
    Signed polynomial factors are admitted: the conservative update
    consumes only integrals of f, and smooth runs ride along the
    realizability boundary."""
    omega_prev = _warm_starts(manifold, omega_prev, grid)
    try:
        return recover_batch(manifold, C, grid, omega0=omega_prev,
                             require_nonnegative=False)
    except InversionError:
        pass
    omegas = omega_prev.copy()
    cells = C.shape[0]
    for i in range(cells):
        try:
            omegas[i] = recover_batch(manifold, C[i][None, :], grid,
                                      omega0=omega_prev[i][None, :],
                                      require_nonnegative=False)[0]
        except InversionError:
            guess = omega_prev[(i - 1) % cells][None, :]
            try:
                omegas[i] = recover_batch(manifold, C[i][None, :], grid, omega0=guess,
                                          require_nonnegative=False)[0]
            except InversionError as exc:
                raise StepError(f"parameter recovery failed: {exc}", cell=i) from exc
    return omegas


def _cm_speeds(manifold, omegas, grid):
    M, V = manifold.moment_frame_grams_batch(omegas, grid)
    return _pencil_radius_batch(M, V)


def _cm_rhs(manifold, model, grid, mesh, C, omegas, speeds):
    """Semi-discrete right-hand side of the balanced-law update."""
    K = manifold.n_moments
    vals = manifold.values_batch(omegas, grid.nodes)
    top_flux = vals @ (grid.nodes**K * grid.weights)
    F = np.empty_like(C)
    F[:, :-1] = C[:, 1:]
    F[:, -1] = top_flux

    if model is not None:
        targets = _target_batch(model, vals, grid)
        xiPw = np.stack([grid.nodes**k for k in range(K)]) * grid.weights
        target_mom = targets @ xiPw.T
        source = collision_rate(model) * (target_mom - C)
    else:
        source = 0.0

    # local Lax-Friedrichs interface fluxes, periodic wrap
    C_r = np.roll(C, -1, axis=0)
    F_r = np.roll(F, -1, axis=0)
    a_iface = np.maximum(speeds, np.roll(speeds, -1))[:, None]
    F_half = 0.5 * (F + F_r) - 0.5 * a_iface * (C_r - C)
    div = (F_half - np.roll(F_half, 1, axis=0)) / mesh.dx
    return -div + source


def _cm_step(state: ReducedState, model, cfl, dt_cap):
    manifold, grid, mesh = state.manifold, state.grid, state.mesh
    C = state.moments
    omegas = _cm_recover(manifold, C, grid, state.omegas)
    speeds = _cm_speeds(manifold, omegas, grid)
    smax = float(speeds.max())
    if smax > _SPEED_BLOWUP:
        raise BlowUpError(f"propagation speed {smax:.3e} exceeds blow-up guard",
                          time=state.time)
    dt = cfl * mesh.dx / smax
    if dt_cap is not None:
        dt = min(dt, dt_cap)

    r1 = _cm_rhs(manifold, model, grid, mesh, C, omegas, speeds)
    C1 = C + dt * r1
    omegas1 = _cm_recover(manifold, C1, grid, omegas)
    r2 = _cm_rhs(manifold, model, grid, mesh, C1, omegas1, speeds)
    C_new = 0.5 * C + 0.5 * (C1 + dt * r2)
    omegas_new = _cm_recover(manifold, C_new, grid, omegas1)
    return ReducedState(manifold, grid, mesh, state.time + dt, omegas_new, C_new), smax


def _generic_speeds(manifold, omegas, grid):
    points = [AnsatzPoint(manifold, w) for w in omegas]
    return np.array([spectral_radius(p, grid) for p in points])


def _generic_rhs(manifold, model, grid, mesh, omegas, speeds):
    cells = omegas.shape[0]
    dx = mesh.dx
    grad = (np.roll(omegas, -1, axis=0) - np.roll(omegas, 1, axis=0)) / (2.0 * dx)
    lap = (np.roll(omegas, -1, axis=0) - 2.0 * omegas + np.roll(omegas, 1, axis=0)) / dx
    a_loc = np.maximum(np.maximum(speeds, np.roll(speeds, -1)), np.roll(speeds, 1))
    rhs = np.empty_like(omegas)
    for i in range(cells):
        p = AnsatzPoint(manifold, omegas[i])
        if model is not None:
            coef = assemble_coefficients(p, model, grid)
            a0, a1, q = coef.a0, coef.a1, coef.q
        else:
            a0, a1, q = gram_matrix(p, grid), flux_matrix(p, grid), 0.0
        rhs[i] = scipy.linalg.solve(a0, q - a1 @ grad[i], assume_a="pos")
        rhs[i] += 0.5 * a_loc[i] * lap[i]
    return rhs


def _generic_step(state: ReducedState, model, cfl, dt_cap):
    manifold, grid, mesh = state.manifold, state.grid, state.mesh
    omegas = state.omegas
    speeds = _generic_speeds(manifold, omegas, grid)
    smax = float(speeds.max())
    if smax > _SPEED_BLOWUP:
        raise BlowUpError(f"propagation speed {smax:.3e} exceeds blow-up guard",
                          time=state.time)
    dt = cfl * mesh.dx / smax
    if dt_cap is not None:
        dt = min(dt, dt_cap)
    r1 = _generic_rhs(manifold, model, grid, mesh, omegas, speeds)
    w1 = omegas + dt * r1
    r2 = _generic_rhs(manifold, model, grid, mesh, w1, speeds)
    w_new = 0.5 * omegas + 0.5 * (w1 + dt * r2)
    return ReducedState(manifold, grid, mesh, state.time + dt, w_new, None), smax


def step(
    state: ReducedState,
    model: CollisionModel | None,
    cfl: float,
    dt_cap: float | None = None,
) -> ReducedState:
    """One SSP-RK2 step with dt = cfl * dx / max propagation speed."""
    if not 0.0 < cfl < 1.0:
        raise StepError(f"cfl must lie in (0, 1), got {cfl}")
    if isinstance(state.manifold, ConservativeMoment):
        new, _ = _cm_step(state, model, cfl, dt_cap)
    else:
        new, _ = _generic_step(state, model, cfl, dt_cap)
    return new


def _record(state: ReducedState, n_mom: int):
    manifold, grid, mesh = state.manifold, state.grid, state.mesh
    vals = manifold.values_batch(state.omegas, grid.nodes)
    # parameter recovery admits negative round-off at 1e-12 relative
    vals = np.maximum(vals, 0.0)
    if state.moments is not None:
        totals = mesh.dx * state.moments.sum(axis=0)
    else:
        xiPw = np.stack([grid.nodes**k for k in range(n_mom)]) * grid.weights
        totals = mesh.dx * (vals @ xiPw.T).sum(axis=0)
    ent = mesh.dx * float(
        np.add.reduce(np.array([entropy_density(v, grid) for v in vals]))
    )
    return totals, ent


def run_reduced(
    manifold: Manifold,
    model: CollisionModel | None,
    f0: DistributionField,
    final_time: float,
    cfl: float = 0.45,
    output_interval: float | None = None,
    dt_cap: float | None = None,
) -> ReducedTrajectory:
    """Integrate to ``final_time`` recording conserved-quantity totals
    and entropy at the output cadence."""
    state = initial_state(manifold, f0)
    if isinstance(manifold, ConservativeMoment):
        n_mom = manifold.n_moments
    else:
        n_mom = 3
    if output_interval is None:
        output_interval = final_time if final_time > 0 else 1.0

    out_times = [state.time]
    out_omegas = [state.omegas.copy()]
    totals, ent = _record(state, n_mom)
    out_totals = [totals]
    out_entropy = [ent]

    next_out = output_interval
    eps = 1e-12 * max(final_time, 1.0)
    while state.time < final_time - eps:
        target = min(next_out, final_time)
        cap = target - state.time
        if dt_cap is not None:
            cap = min(cap, dt_cap)
        try:
            state = step(state, model, cfl, dt_cap=cap)
        except StepError as exc:
            exc.time = state.time
            raise
        if state.time >= target - eps:
            totals, ent = _record(state, n_mom)
            out_times.append(state.time)
            out_omegas.append(state.omegas.copy())
            out_totals.append(totals)
            out_entropy.append(ent)
            if abs(target - next_out) < eps:
                next_out += output_interval
    labels = [f"c{k}" for k in range(n_mom)]
    return ReducedTrajectory(
        manifold=manifold,
        grid=state.grid,
        mesh=state.mesh,
        times=np.array(out_times),
        omegas=np.array(out_omegas),
        moment_totals=np.array(out_totals),
        entropy=np.array(out_entropy),
        model=model,
        moment_labels=labels,
    )
