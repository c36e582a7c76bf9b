"""Time-splitting spectral solver for the rotating semiclassical equation.

One Strang step is the palindrome

    P(dt/2) K1(dt/2) K2(dt) K1(dt/2) P(dt/2)

where P is the pointwise potential plus nonlinearity phase rotation and
K1, K2 are kinetic-plus-rotation substeps, each solved exactly in
Fourier space along a single axis:

    K1:  i eps d_t psi = -(eps^2/2) d11 psi + i eps Omega x2 d1 psi
    K2:  i eps d_t psi = -(eps^2/2) d22 psi - i eps Omega x1 d2 psi

The rotation term is linear in the transform variable along its own
axis, so each substep is a diagonal unit-modulus multiplier: every
substep conserves the discrete L^2 mass to machine precision, and P
leaves |psi| pointwise invariant.  In 3d the plain z-kinetic factor
rides along with K1.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .core import GridSpec, NumericalAbort, SimParams, WaveField, potential_grid


def _k1_multiplier(grid: GridSpec, params: SimParams, dt: float) -> np.ndarray:
    """exp(-i dt (eps (k1^2 [+ k3^2])/2 - Omega x2 k1)), FFT along axis 0 (and 2)."""
    k1 = grid.wavenumber_mesh(0)
    x2 = grid.axes[1].reshape((1, -1) + (1,) * (grid.dim - 2))
    sym = 0.5 * params.eps * k1 ** 2 - params.Omega * x2 * k1
    if grid.dim == 3:
        sym = sym + 0.5 * params.eps * grid.wavenumber_mesh(2) ** 2
    return np.exp(-1j * dt * sym)

def _k2_multiplier(grid: GridSpec, params: SimParams, dt: float) -> np.ndarray:
    """exp(-i dt (eps k2^2/2 + Omega x1 k2)), FFT along axis 1."""
    k2 = grid.wavenumber_mesh(1)
    x1 = grid.axes[0].reshape((-1,) + (1,) * (grid.dim - 1))
    sym = 0.5 * params.eps * k2 ** 2 + params.Omega * x1 * k2
    return np.exp(-1j * dt * sym)

_K1_AXES = {2: (0,), 3: (0, 2)}


class SplitStepPlan:
    """Precomputed multipliers for repeated Strang steps at a fixed dt."""

    def __init__(self, grid: GridSpec, params: SimParams, dt: float):
        if dt == 0:
            raise ValueError("dt must be nonzero")
        self.grid = grid
        self.params = params
        self.dt = dt
        self.k1_half = _k1_multiplier(grid, params, 0.5 * dt)
        self.k2_full = _k2_multiplier(grid, params, dt)
        self.potential = potential_grid(grid, params.omega)
        self.fft_axes = _K1_AXES[grid.dim]

    def _phase_half(self, values: np.ndarray) -> np.ndarray:
        rho = values.real ** 2 + values.imag ** 2
        f = self.params.nonlinearity.f(rho)
        return np.exp((-0.5j * self.dt / self.params.eps) * (self.potential + f))

    def step(self, values: np.ndarray) -> np.ndarray:
        """One Strang step on a bare sample array."""
        values = values * self._phase_half(values)
        values = np.fft.ifftn(self.k1_half * np.fft.fftn(values, axes=self.fft_axes),
                              axes=self.fft_axes)
        values = np.fft.ifft(self.k2_full * np.fft.fft(values, axis=1), axis=1)
        values = np.fft.ifftn(self.k1_half * np.fft.fftn(values, axes=self.fft_axes),
                              axes=self.fft_axes)
        return values * self._phase_half(values)


def step_kinetic_rotation_axis1(psi: WaveField, dt: float) -> WaveField:
    """Exact substep K1 over dt (plus the z-kinetic factor in 3d)."""
    axes = _K1_AXES[psi.grid.dim]
    mult = _k1_multiplier(psi.grid, psi.params, dt)
    out = np.fft.ifftn(mult * np.fft.fftn(psi.values, axes=axes), axes=axes)
    return WaveField(out, psi.t + dt, psi.grid, psi.params)


def step_kinetic_rotation_axis2(psi: WaveField, dt: float) -> WaveField:
    """Exact substep K2 over dt."""
    mult = _k2_multiplier(psi.grid, psi.params, dt)
    out = np.fft.ifft(mult * np.fft.fft(psi.values, axis=1), axis=1)
    return WaveField(out, psi.t + dt, psi.grid, psi.params)


def step_potential_nonlinear(psi: WaveField, dt: float) -> WaveField:
    """Pointwise phase substep; |psi| is exactly invariant."""
    rho = psi.density()
    f = psi.params.nonlinearity.f(rho)
    V = potential_grid(psi.grid, psi.params.omega)
    out = psi.values * np.exp((-1j * dt / psi.params.eps) * (V + f))
    return WaveField(out, psi.t + dt, psi.grid, psi.params)


def strang_step(psi: WaveField, dt: float) -> WaveField:
    plan = SplitStepPlan(psi.grid, psi.params, dt)
    return WaveField(plan.step(psi.values), psi.t + dt, psi.grid, psi.params)


def evolve_nls(psi0: WaveField, T: float, dt: float,
               observer: Callable[[float, WaveField], None] | None = None,
               observer_stride: int = 1) -> WaveField:
    """March psi0 forward by duration T with Strang steps of size dt.

    A negative dt integrates backward (the substeps are all reversible).
    dt should divide T; a shorter final step absorbs any remainder.  The
    observer, when given, is called at t = 0, every observer_stride
    steps, and at the final time.  Non-finite samples abort the run with
    the offending step index.
    """
    if T < 0:
        raise ValueError(f"duration T must be nonnegative, got {T}")
    if dt == 0:
        raise ValueError("dt must be nonzero")
    if observer_stride < 1:
        raise ValueError(f"observer_stride must be >= 1, got {observer_stride}")

    n_full = int(np.floor(T / abs(dt) + 1e-9))
    remainder = T - n_full * abs(dt)
    if remainder <= 1e-9 * max(T, abs(dt)):
        remainder = 0.0

    plan = SplitStepPlan(psi0.grid, psi0.params, dt)
    sign = 1.0 if dt > 0 else -1.0
    values = np.array(psi0.values)
    t = psi0.t

    def wrap(v: np.ndarray, tt: float) -> WaveField:
        return WaveField(v, tt, psi0.grid, psi0.params)

    if observer is not None:
        observer(t, psi0)
    total_steps = n_full + (1 if remainder else 0)
    for step in range(1, total_steps + 1):
        if step <= n_full:
            values = plan.step(values)
            t = psi0.t + step * dt
        else:
            tail = SplitStepPlan(psi0.grid, psi0.params, sign * remainder)
            values = tail.step(values)
            t = psi0.t + sign * T
        if not np.isfinite(values).all():
            raise NumericalAbort(
                f"non-finite samples after step {step} (t = {t:.6g})", step, t)
        if observer is not None and (step % observer_stride == 0 or step == total_steps):
            observer(t, wrap(values, t))
    return wrap(values, t)
