"""Physical diagnostics and the angular-momentum moment system.

Quadratures over grid fields: mass, energy, the angular momentum
expectation

    m_eps = Re[ i eps int conj(psi) (x_perp . grad psi) dx ],

its hydrodynamic limit m = -int rho x_perp . v dx, the radial momentum
moment n = int x . J dx with current J = eps Im(conj(psi) grad psi),
the spread X = <|x|^2>, and the cross moment <x1 x2>.

The closed moment system for (m, n, X) reads

    dm/dt = Omega n + (omega1^2 - omega2^2) <x1 x2>
    dn/dt = 2 (E0 - Omega m) - 2 int |diag(omega) x|^2 rho
    dX/dt = 2 n

with the anisotropic forcing coefficient omega1^2 - omega2^2 (it is
x_perp . grad V; the deformation-scaled prefactor sometimes quoted for
it is dimensionally inconsistent, and both values are exposed on
MomentODEParams so the gap stays visible).  For isotropic traps the
system closes and m(t) solves a driven oscillator at frequency
sqrt(4 omega^2 + 2 Omega^2); isotropic_closed_form evaluates its
solution.

A caution from direct Ehrenfest computation (and its classical and
hydrodynamic analogues): the generator of rotations commutes with an
isotropically trapped Hamiltonian, so the exact law is

    dm_eps/dt = (omega1^2 - omega2^2) <x1 x2>    (no Omega n term),

and m_eps is exactly conserved in isotropic traps.  The moment system
above keeps the Omega n coupling of its source derivation; tests
document where the two disagree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import (GridSpec, SimParams, WaveField, integrate, potential_grid,
                   spectral_gradient)
from .hydro import HydroState, WKBState

CSV_HEADER = "t,mass,energy,m_eps,n,X,xy"


@dataclass(frozen=True)
class ObservableRecord:
    t: float
    mass: float
    energy: float
    m_eps: float
    n: float
    X: float
    xy: float

    def __post_init__(self):
        vals = [self.t, self.mass, self.energy, self.m_eps, self.n, self.X, self.xy]
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite observable record at t = {self.t}")
        if self.mass <= 0:
            raise ValueError(f"mass must be positive, got {self.mass}")


def _require_real(value: complex, what: str) -> float:
    tol = 1e-10 * max(1.0, abs(value.real))
    if abs(value.imag) > tol:
        raise FloatingPointError(
            f"{what} quadrature has imaginary residue {value.imag:.3e} "
            f"against real part {value.real:.3e}")
    return float(value.real)


def mass(psi: WaveField) -> float:
    return float(integrate(psi.density(), psi.grid))


def probability_current(psi: WaveField) -> np.ndarray:
    """J = eps Im(conj(psi) grad psi), shape (dim, *grid.shape)."""
    grad = spectral_gradient(psi.values, psi.grid)
    return psi.params.eps * np.imag(np.conj(psi.values)[None] * grad)


def _x_perp_dot_grad(psi: WaveField) -> np.ndarray:
    """x_perp . grad psi = x2 d1 psi - x1 d2 psi (acts in the x1-x2 plane)."""
    grad = spectral_gradient(psi.values, psi.grid)
    X1, X2 = psi.grid.meshes[0], psi.grid.meshes[1]
    return X2 * grad[0] - X1 * grad[1]


def energy(psi: WaveField, params: SimParams | None = None) -> float:
    """Total energy: kinetic + trap + interaction + rotation coupling.

    E = int eps^2/2 |grad psi|^2 + V |psi|^2 + G(|psi|^2)
        + Re(i eps Omega conj(psi) x_perp . grad psi) dx,
    with G the antiderivative of f.  The rotation term is real
    analytically; its roundoff residue is checked before discarding.
    """
    if params is None:
        params = psi.params
    eps = params.eps
    grid = psi.grid
    grad = spectral_gradient(psi.values, grid)
    rho = psi.density()
    kinetic = 0.5 * eps * eps * np.sum(np.abs(grad) ** 2, axis=0)
    trap = potential_grid(grid, params.omega) * rho
    inter = params.nonlinearity.antiderivative(rho)
    total = complex(integrate(kinetic + trap + inter, grid))
    if params.Omega != 0.0:
        X1, X2 = grid.meshes[0], grid.meshes[1]
        rot = 1j * eps * params.Omega * np.conj(psi.values) * (
            X2 * grad[0] - X1 * grad[1])
        total += complex(integrate(rot, grid))
    return _require_real(total, "energy")


def angular_momentum(psi: WaveField, eps: float | None = None) -> float:
    """m_eps = Re[i eps int conj(psi) x_perp . grad psi dx]."""
    if eps is None:
        eps = psi.params.eps
    val = 1j * eps * complex(integrate(np.conj(psi.values) * _x_perp_dot_grad(psi),
                                       psi.grid))
    return _require_real(val, "angular momentum")


def limit_angular_momentum(rho: np.ndarray, v: np.ndarray, grid: GridSpec) -> float:
    """m = -int rho x_perp . v dx (note the minus sign)."""
    X1, X2 = grid.meshes[0], grid.meshes[1]
    return float(integrate(-rho * (X2 * v[0] - X1 * v[1]), grid))


def moments_density(rho: np.ndarray, v: np.ndarray | None, grid: GridSpec):
    """(n, X, xy) from density samples; n needs a velocity (else 0)."""
    r2 = sum(X * X for X in grid.meshes)
    Xm = float(integrate(r2 * rho, grid))
    xy = float(integrate(grid.meshes[0] * grid.meshes[1] * rho, grid))
    if v is None:
        n = 0.0
    else:
        xv = sum(grid.meshes[j] * v[j] for j in range(grid.dim))
        n = float(integrate(rho * xv, grid))
    return n, Xm, xy


def moments(psi: WaveField):
    """(n, X, xy) of a wavefunction; n = int x . J dx is vacuum-safe."""
    rho = psi.density()
    J = probability_current(psi)
    xJ = sum(psi.grid.meshes[j] * J[j] for j in range(psi.grid.dim))
    n = float(integrate(xJ, psi.grid))
    _, Xm, xy = moments_density(rho, None, psi.grid)
    return n, Xm, xy


# ---------- records ----------

def record_from_wavefield(psi: WaveField) -> ObservableRecord:
    n, Xm, xy = moments(psi)
    return ObservableRecord(t=psi.t, mass=mass(psi), energy=energy(psi),
                            m_eps=angular_momentum(psi), n=n, X=Xm, xy=xy)


def limit_energy(rho: np.ndarray, v: np.ndarray, grid: GridSpec,
                 params: SimParams) -> float:
    """Energy of the limit system: int rho |v|^2/2 + V rho + G(rho) + Omega m."""
    kin = 0.5 * rho * sum(v[j] ** 2 for j in range(grid.dim))
    trap = potential_grid(grid, params.omega) * rho
    inter = params.nonlinearity.antiderivative(rho)
    m = limit_angular_momentum(rho, v, grid)
    return float(integrate(kin + trap + inter, grid)) + params.Omega * m


def record_from_hydro(h: HydroState) -> ObservableRecord:
    rho, v = np.asarray(h.rho), np.asarray(h.v)
    n, Xm, xy = moments_density(rho, v, h.grid)
    return ObservableRecord(
        t=h.t, mass=float(integrate(rho, h.grid)),
        energy=limit_energy(rho, v, h.grid, h.params),
        m_eps=limit_angular_momentum(rho, v, h.grid), n=n, X=Xm, xy=xy)


def record_from_wkb(state: WKBState) -> ObservableRecord:
    """Observables of a WKB state: exact functionals of the reassembled
    wavefunction when eps > 0, limit functionals at eps = 0."""
    if state.eps > 0:
        return record_from_wavefield(state.to_wavefield())
    rho = state.density()
    v = state.total_velocity()
    n, Xm, xy = moments_density(rho, v, state.grid)
    return ObservableRecord(
        t=state.t, mass=float(integrate(rho, state.grid)),
        energy=limit_energy(rho, v, state.grid, state.params),
        m_eps=limit_angular_momentum(rho, v, state.grid), n=n, X=Xm, xy=xy)


def records_to_csv(records: Sequence[ObservableRecord]) -> str:
    lines = [CSV_HEADER]
    for r in records:
        lines.append(",".join(f"{x:.17g}" for x in
                              (r.t, r.mass, r.energy, r.m_eps, r.n, r.X, r.xy)))
    return "\n".join(lines) + "\n"


def records_from_csv(text: str) -> list[ObservableRecord]:
    lines = [ln for ln in text.strip().splitlines() if ln]
    if not lines or lines[0] != CSV_HEADER:
        raise ValueError(f"bad observables CSV header: {lines[0] if lines else ''!r}")
    out = []
    for ln in lines[1:]:
        t, m, e, me, n, Xm, xy = (float(tok) for tok in ln.split(","))
        out.append(ObservableRecord(t, m, e, me, n, Xm, xy))
    return out


# ---------- moment ODE system ----------

@dataclass(frozen=True)
class MomentODEParams:
    """Coefficients and initial data of the closed moment system."""

    Omega: float
    omega: tuple[float, ...]
    E0: float
    m0: float
    n0: float
    X0: float

    def __post_init__(self):
        if self.omega_perp_sq <= 0:
            raise ValueError("trap frequencies must not both vanish")

    @property
    def delta(self) -> float:
        """Trap deformation (omega1^2 - omega2^2) / (omega1^2 + omega2^2)."""
        w1, w2 = self.omega[0] ** 2, self.omega[1] ** 2
        return (w1 - w2) / (w1 + w2)

    @property
    def omega_perp_sq(self) -> float:
        return 0.5 * (self.omega[0] ** 2 + self.omega[1] ** 2)

    @property
    def isotropic(self) -> bool:
        return len(set(self.omega)) == 1

    @staticmethod
    def from_record(r: ObservableRecord, params: SimParams) -> "MomentODEParams":
        return MomentODEParams(Omega=params.Omega, omega=params.omega,
                               E0=r.energy, m0=r.m_eps, n0=r.n, X0=r.X)


def moment_ode_rhs(m: float, n: float, X: float, xy: float,
                   p: MomentODEParams, weighted_x2: float | None = None):
    """(dm/dt, dn/dt) of the moment system.

    The trap moment int |diag(omega) x|^2 rho closes to omega^2 X only
    for isotropic traps; anisotropic use must supply it.
    """
    if weighted_x2 is None:
        if not p.isotropic:
            raise ValueError("anisotropic trap: supply weighted_x2 = "
                             "int |diag(omega) x|^2 rho dx")
        weighted_x2 = p.omega[0] ** 2 * X
    mdot = p.Omega * n + (p.omega[0] ** 2 - p.omega[1] ** 2) * xy
    ndot = 2.0 * (p.E0 - p.Omega * m) - 2.0 * weighted_x2
    return mdot, ndot


def integrate_isotropic_moments(p: MomentODEParams, T: float, dt: float = 5e-4):
    """RK4 the closed isotropic (m, n, X) system; returns (t, m, n, X) arrays."""
    if not p.isotropic:
        raise ValueError("the moment system closes only for isotropic traps")
    w2 = p.omega[0] ** 2

    def rhs(y):
        m, n, X = y
        return np.array([p.Omega * n,
                         2.0 * (p.E0 - p.Omega * m) - 2.0 * w2 * X,
                         2.0 * n])

    n_steps = max(1, int(round(T / dt)))
    h = T / n_steps
    y = np.array([p.m0, p.n0, p.X0], dtype=float)
    out = np.empty((n_steps + 1, 3))
    ts = np.linspace(0.0, T, n_steps + 1)
    out[0] = y
    for i in range(1, n_steps + 1):
        k1 = rhs(y)
        k2 = rhs(y + 0.5 * h * k1)
        k3 = rhs(y + 0.5 * h * k2)
        k4 = rhs(y + h * k3)
        y = y + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        out[i] = y
    return ts, out[:, 0], out[:, 1], out[:, 2]


def isotropic_closed_form(t, p: MomentODEParams):
    """m(t) of the isotropic moment system.

    m(t) = C1 cos(kappa t) + C2 sin(kappa t) + m_p with
    kappa = sqrt(4 omega^2 + 2 Omega^2); the particular value m_p is
    solved from the second-order ODE the system implies,
    m_p = (2 Omega E0 + 4 omega^2 m0 - 2 Omega omega^2 X0) / kappa^2.
    """
    if not p.isotropic:
        raise ValueError("closed form requires an isotropic trap")
    w2 = p.omega[0] ** 2
    kappa_sq = 4.0 * w2 + 2.0 * p.Omega ** 2
    kappa = math.sqrt(kappa_sq)
    m_p = (2.0 * p.Omega * p.E0 + 4.0 * w2 * p.m0
           - 2.0 * p.Omega * w2 * p.X0) / kappa_sq
    c1 = p.m0 - m_p
    c2 = p.Omega * p.n0 / kappa
    t = np.asarray(t, dtype=float)
    return c1 * np.cos(kappa * t) + c2 * np.sin(kappa * t) + m_p


def semiclassical_am_relation(records: Sequence[ObservableRecord],
                              m_limit0: float | None = None) -> np.ndarray:
    """Residual of m_eps(t) = m(0) + (Omega/2)(X(t) - X(0)) + O(eps).

    Uses m_eps(0) for the limit m(0) unless given.  The relation rests
    on the moment system's Omega-coupling; see the module docstring for
    the regime where it fails to hold.
    """
    if m_limit0 is None:
        m_limit0 = records[0].m_eps
    X0 = records[0].X
    out = np.empty(len(records))
    for i, r in enumerate(records):
        # records do not carry Omega; caller applies the factor
        out[i] = r.m_eps - m_limit0 - 0.5 * (r.X - X0)
    return out


def am_relation_residual(records: Sequence[ObservableRecord], Omega: float,
                         m_limit0: float | None = None) -> np.ndarray:
    """As semiclassical_am_relation but with the Omega/2 factor applied."""
    if m_limit0 is None:
        m_limit0 = records[0].m_eps
    X0 = records[0].X
    return np.array([r.m_eps - m_limit0 - 0.5 * Omega * (r.X - X0)
                     for r in records])


# ---------- frequency measurement ----------

def dominant_frequency(times: np.ndarray, series: np.ndarray) -> float:
    """Angular frequency of the strongest oscillation in a sampled series.

    De-means, Hann-windows, zero-pads for a first FFT estimate, then
    refines by golden-section maximization of the continuous windowed
    DTFT power, so the answer is not quantized to the FFT bin width.
    """
    times = np.asarray(times, dtype=float)
    series = np.asarray(series, dtype=float)
    if len(times) != len(series) or len(times) < 8:
        raise ValueError("need at least 8 aligned samples")
    dt = times[1] - times[0]
    x = (series - series.mean()) * np.hanning(len(series))
    nfft = 8 * len(x)
    spec = np.abs(np.fft.rfft(x, n=nfft))
    freqs = 2.0 * np.pi * np.fft.rfftfreq(nfft, d=dt)
    k = int(np.argmax(spec[1:]) + 1)

    def power(w):
        return -np.abs(np.sum(x * np.exp(-1j * w * times))) ** 2

    lo = freqs[max(k - 2, 0)]
    hi = freqs[min(k + 2, len(freqs) - 1)]
    phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - phi * (b - a)
    d = a + phi * (b - a)
    fc, fd = power(c), power(d)
    for _ in range(80):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - phi * (b - a)
            fc = power(c)
        else:
            a, c, fc = c, d, fd
            d = a + phi * (b - a)
            fd = power(d)
    return 0.5 * (a + b)
