"""Hamilton-Jacobi ray tracing for the rotating-frame eikonal phase.

The phase S(t, x) solves

    d_t S + (1/2)|grad S|^2 + V(x) - Omega (x_perp . grad S) = 0,

whose characteristics follow the Hamiltonian H(x, p) = |p|^2/2 + V(x)
- Omega x_perp . p:

    x' = p - Omega J x,      p' = -diag(omega^2) x - Omega J p,

with J the rotation generator (J x = x_perp).  Along a ray we carry the
action s' = |p|^2/2 - V(x), the phase Hessian Sigma(t) = D^2 S(t, x(t))
via the rotation-coupled Riccati flow

    Sigma' = -Sigma^2 - diag(omega^2) + Omega (J^T Sigma + Sigma J),

and the Jacobian Gamma(t) = dx(t)/dx(0) via Gamma' = (Sigma - Omega J)
Gamma.  Since tr(Omega J) = 0, det Gamma(t) = exp(int_0^t tr Sigma),
which doubles as a cross-check between the two matrix flows.  A ray is
truncated and flagged when det Gamma falls to the caustic floor.

A globally quadratic phase S = x.Sigma x/2 + b.x + c stays quadratic;
its coefficients obey the closed system integrated by
quadratic_phase_evolve, and that path supplies the WKB drift field
exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import SimParams, eval_potential, potential_gradient, rotation_generator


class CausticError(RuntimeError):
    """Phase evaluation was requested at or beyond a caustic."""


class ShootingError(RuntimeError):
    """Newton shooting for a target point did not converge."""


# ---------- phase descriptions ----------

@dataclass(frozen=True)
class QuadraticPhase:
    """S(x) = x . Sigma x / 2 + b . x + c with Sigma symmetric."""

    Sigma: np.ndarray
    b: np.ndarray
    c: float = 0.0

    def __post_init__(self):
        S = np.asarray(self.Sigma, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if S.ndim != 2 or S.shape[0] != S.shape[1]:
            raise ValueError(f"Sigma must be square, got shape {S.shape}")
        if b.shape != (S.shape[0],):
            raise ValueError(f"b shape {b.shape} does not match Sigma {S.shape}")
        if np.max(np.abs(S - S.T)) > 1e-10 * (1.0 + np.max(np.abs(S))):
            raise ValueError("Sigma must be symmetric")
        object.__setattr__(self, "Sigma", 0.5 * (S + S.T))
        object.__setattr__(self, "b", b)

    @staticmethod
    def zero(dim: int) -> "QuadraticPhase":
        return QuadraticPhase(np.zeros((dim, dim)), np.zeros(dim), 0.0)

    @property
    def dim(self) -> int:
        return self.b.shape[0]

    def value(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return 0.5 * np.sum(x * (x @ self.Sigma.T), axis=-1) + x @ self.b + self.c

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=float) @ self.Sigma.T + self.b

    def hessian(self, x: np.ndarray) -> np.ndarray:
        return self.Sigma


@dataclass(frozen=True)
class SmoothPhase:
    """Initial phase given by callables: value, gradient, hessian of S_in."""

    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    hessian: Callable[[np.ndarray], np.ndarray]


# ---------- single-ray state ----------

@dataclass(frozen=True)
class Ray:
    """Ray state: position, momentum, phase Hessian, flow Jacobian, action."""

    x: np.ndarray
    p: np.ndarray
    sigma: np.ndarray
    gamma: np.ndarray
    action: float = 0.0
    t: float = 0.0

    @staticmethod
    def from_phase(x0: Sequence[float], phase) -> "Ray":
        """Launch a ray from x0 with data read off an initial phase."""
        x0 = np.asarray(x0, dtype=float)
        d = x0.shape[0]
        return Ray(
            x=x0,
            p=np.asarray(phase.gradient(x0), dtype=float),
            sigma=np.asarray(phase.hessian(x0), dtype=float),
            gamma=np.eye(d),
            action=float(phase.value(x0)),
            t=0.0,
        )


def hamiltonian_rhs(x: np.ndarray, p: np.ndarray, params: SimParams):
    """Phase-space velocity (x', p'); batched over leading axes."""
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    J = rotation_generator(x.shape[-1])
    xdot = p - params.Omega * (x @ J.T)
    pdot = -potential_gradient(x, params.omega) - params.Omega * (p @ J.T)
    return xdot, pdot


def hamiltonian(x: np.ndarray, p: np.ndarray, params: SimParams) -> np.ndarray:
    J = rotation_generator(np.asarray(x).shape[-1])
    return (0.5 * np.sum(p * p, axis=-1) + eval_potential(x, params.omega)
            - params.Omega * np.sum((x @ J.T) * p, axis=-1))


# ---------- batched integration ----------

def _ray_rhs(X, P, S, G, params: SimParams, J, W2):
    """Time derivatives of the batched ray state (B,d)/(B,d,d) arrays."""
    Om = params.Omega
    Xd = P - Om * (X @ J.T)
    Pd = -(W2 * X) - Om * (P @ J.T)
    Sd = -(S @ S) - np.diag(W2) + Om * (J.T @ S + S @ J)
    Gd = (S - Om * J) @ G
    Ad = 0.5 * np.sum(P * P, axis=-1) - eval_potential(X, params.omega)
    return Xd, Pd, Sd, Gd, Ad


@dataclass
class RayTrajectory:
    """Stored ray history plus the dense tr Sigma record for quadrature.

    caustic is True when det Gamma reached the floor; the trajectory
    then stops at caustic_time instead of the requested horizon.
    """

    times: np.ndarray
    x: np.ndarray
    p: np.ndarray
    sigma: np.ndarray
    gamma: np.ndarray
    action: np.ndarray
    dense_times: np.ndarray
    dense_tr_sigma: np.ndarray
    caustic: bool = False
    caustic_time: float | None = None

    @property
    def det_gamma(self) -> np.ndarray:
        return np.linalg.det(self.gamma)

    def det_gamma_from_trace(self) -> np.ndarray:
        """exp of the cumulative trapezoid of tr Sigma, at the stored times.

        By the Jacobi identity this reproduces det Gamma; the gap
        between the two is an integration-quality certificate.
        """
        f = self.dense_tr_sigma
        dt = np.diff(self.dense_times)
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (f[1:] + f[:-1]) * dt)])
        idx = np.searchsorted(self.dense_times, self.times)
        idx = np.clip(idx, 0, len(cum) - 1)
        return np.exp(cum[idx])

    def det_trace_gap(self) -> float:
        """|det Gamma(end) - exp(int tr Sigma dt)| with Simpson quadrature.

        The dense record is uniformly spaced, so composite Simpson
        applies; an odd interval count gets one trapezoid tail.
        """
        f = self.dense_tr_sigma
        n = len(f) - 1
        if n <= 0:
            return 0.0
        h = (self.dense_times[-1] - self.dense_times[0]) / n
        total = 0.0
        m = n if n % 2 == 0 else n - 1
        if m >= 2:
            total += (h / 3.0) * (f[0] + 4.0 * np.sum(f[1:m:2])
                                  + 2.0 * np.sum(f[2:m - 1:2]) + f[m])
        if m < n:
            total += 0.5 * h * (f[n - 1] + f[n])
        return float(abs(np.linalg.det(self.gamma[-1]) - np.exp(total)))

    def final(self) -> Ray:
        return Ray(self.x[-1], self.p[-1], self.sigma[-1], self.gamma[-1],
                   float(self.action[-1]), float(self.times[-1]))


def integrate_rays(rays: Sequence[Ray], dt: float, T: float, params: SimParams,
                   store_stride: int = 1, det_floor: float = 1e-8):
    """RK4 the whole bundle at once; returns one RayTrajectory per ray.

    Rays are mutually independent, so they advance as one batched state.
    A ray whose det Gamma reaches det_floor is frozen and its stored
    history truncated at that step.
    """
    if dt <= 0 or T < 0:
        raise ValueError(f"need dt > 0 and T >= 0, got dt={dt}, T={T}")
    B = len(rays)
    d = rays[0].x.shape[0]
    J = rotation_generator(d)
    W2 = np.asarray(params.omega, dtype=float) ** 2
    if W2.shape[0] != d:
        raise ValueError(f"ray dim {d} does not match params dim {W2.shape[0]}")

    X = np.stack([r.x for r in rays]).astype(float)
    P = np.stack([r.p for r in rays]).astype(float)
    S = np.stack([r.sigma for r in rays]).astype(float)
    G = np.stack([r.gamma for r in rays]).astype(float)
    A = np.array([r.action for r in rays], dtype=float)
    t0 = rays[0].t

    n_steps = max(1, int(round(T / dt)))
    h = T / n_steps

    active = np.ones(B, dtype=bool)
    cut_step = np.full(B, n_steps, dtype=int)

    stored_steps = list(range(0, n_steps + 1, store_stride))
    if stored_steps[-1] != n_steps:
        stored_steps.append(n_steps)
    store_at = set(stored_steps)

    hist = {k: [] for k in ("t", "x", "p", "s", "g", "a")}
    dense_t = np.empty(n_steps + 1)
    dense_tr = np.empty((n_steps + 1, B))

    def record_dense(i, t):
        dense_t[i] = t
        dense_tr[i] = np.trace(S, axis1=-2, axis2=-1)

    def record(t):
        hist["t"].append(t)
        hist["x"].append(X.copy())
        hist["p"].append(P.copy())
        hist["s"].append(S.copy())
        hist["g"].append(G.copy())
        hist["a"].append(A.copy())

    record_dense(0, t0)
    if 0 in store_at:
        record(t0)

    for step in range(1, n_steps + 1):
        X0, P0, S0, G0, A0 = X.copy(), P.copy(), S.copy(), G.copy(), A.copy()
        k1 = _ray_rhs(X, P, S, G, params, J, W2)
        k2 = _ray_rhs(X + 0.5 * h * k1[0], P + 0.5 * h * k1[1], S + 0.5 * h * k1[2],
                      G + 0.5 * h * k1[3], params, J, W2)
        k3 = _ray_rhs(X + 0.5 * h * k2[0], P + 0.5 * h * k2[1], S + 0.5 * h * k2[2],
                      G + 0.5 * h * k2[3], params, J, W2)
        k4 = _ray_rhs(X + h * k3[0], P + h * k3[1], S + h * k3[2],
                      G + h * k3[3], params, J, W2)
        X = X + (h / 6.0) * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        P = P + (h / 6.0) * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        S = S + (h / 6.0) * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
        G = G + (h / 6.0) * (k1[3] + 2 * k2[3] + 2 * k3[3] + k4[3])
        A = A + (h / 6.0) * (k1[4] + 2 * k2[4] + 2 * k3[4] + k4[4])
        S = 0.5 * (S + np.swapaxes(S, -1, -2))

        # frozen rays keep their pre-step state
        if not active.all():
            frozen = ~active
            X[frozen], P[frozen], S[frozen] = X0[frozen], P0[frozen], S0[frozen]
            G[frozen], A[frozen] = G0[frozen], A0[frozen]

        det = np.linalg.det(G)
        bad = active & ((det <= det_floor) | ~np.isfinite(det)
                        | ~np.isfinite(X).all(axis=-1))
        if bad.any():
            # roll the newly flagged rays back to the last good state
            X[bad], P[bad], S[bad] = X0[bad], P0[bad], S0[bad]
            G[bad], A[bad] = G0[bad], A0[bad]
            cut_step[bad] = step - 1
            active &= ~bad

        record_dense(step, t0 + step * h)
        if step in store_at:
            record(t0 + step * h)

    times = np.array(hist["t"])
    steps_arr = np.array(stored_steps)
    out = []
    for i in range(B):
        n_keep = int(np.searchsorted(steps_arr, cut_step[i], side="right"))
        caustic = bool(cut_step[i] < n_steps)
        out.append(RayTrajectory(
            times=times[:n_keep],
            x=np.array([h[i] for h in hist["x"][:n_keep]]),
            p=np.array([h[i] for h in hist["p"][:n_keep]]),
            sigma=np.array([h[i] for h in hist["s"][:n_keep]]),
            gamma=np.array([h[i] for h in hist["g"][:n_keep]]),
            action=np.array([h[i] for h in hist["a"][:n_keep]]),
            dense_times=dense_t[:cut_step[i] + 1].copy(),
            dense_tr_sigma=dense_tr[:cut_step[i] + 1, i].copy(),
            caustic=caustic,
            caustic_time=float(t0 + cut_step[i] * h) if caustic else None,
        ))
    return out


def integrate_ray(ray: Ray, dt: float, T: float, params: SimParams,
                  store_stride: int = 1, det_floor: float = 1e-8) -> RayTrajectory:
    return integrate_rays([ray], dt, T, params, store_stride, det_floor)[0]


# ---------- quadratic phase flow ----------

def quadratic_phase_rhs(Sigma: np.ndarray, b: np.ndarray, params: SimParams):
    """Coefficient ODE for a globally quadratic solution of the phase equation."""
    J = rotation_generator(b.shape[0])
    W2 = np.diag(np.asarray(params.omega, dtype=float) ** 2)
    Om = params.Omega
    Sd = -(Sigma @ Sigma) - W2 + Om * (J.T @ Sigma + Sigma @ J)
    bd = -(Sigma @ b) + Om * (J.T @ b)
    cd = -0.5 * float(b @ b)
    return Sd, bd, cd


@dataclass
class QuadraticPhaseTrajectory:
    times: np.ndarray
    Sigma: np.ndarray
    b: np.ndarray
    c: np.ndarray
    blown_up: bool = False
    blowup_time: float | None = None

    def at_index(self, i: int) -> QuadraticPhase:
        return QuadraticPhase(self.Sigma[i], self.b[i], float(self.c[i]))

    def final(self) -> QuadraticPhase:
        return self.at_index(len(self.times) - 1)


def quadratic_phase_evolve(phase0: QuadraticPhase, dt: float, T: float,
                           params: SimParams, store_stride: int = 1,
                           blowup_norm: float = 1e8) -> QuadraticPhaseTrajectory:
    """RK4 the (Sigma, b, c) system; truncate and flag on caustic blow-up.

    Sigma' = -Sigma^2 - diag(omega^2) + Omega (J^T Sigma + Sigma J)
    b'     = -Sigma b + Omega J^T b
    c'     = -|b|^2 / 2

    Symmetry of Sigma is preserved by the flow and re-imposed after
    every step to keep roundoff from accumulating.
    """
    if dt <= 0 or T < 0:
        raise ValueError(f"need dt > 0 and T >= 0, got dt={dt}, T={T}")
    n_steps = max(1, int(round(T / dt)))
    h = T / n_steps
    S = np.array(phase0.Sigma, dtype=float)
    b = np.array(phase0.b, dtype=float)
    c = float(phase0.c)

    ts, Ss, bs, cs = [0.0], [S.copy()], [b.copy()], [c]
    blown, t_blow = False, None

    for step in range(1, n_steps + 1):
        k1 = quadratic_phase_rhs(S, b, params)
        k2 = quadratic_phase_rhs(S + 0.5 * h * k1[0], b + 0.5 * h * k1[1], params)
        k3 = quadratic_phase_rhs(S + 0.5 * h * k2[0], b + 0.5 * h * k2[1], params)
        k4 = quadratic_phase_rhs(S + h * k3[0], b + h * k3[1], params)
        S_new = S + (h / 6.0) * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        b_new = b + (h / 6.0) * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        c_new = c + (h / 6.0) * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
        S_new = 0.5 * (S_new + S_new.T)
        if not np.isfinite(S_new).all() or np.linalg.norm(S_new) > blowup_norm:
            blown, t_blow = True, step * h
            break
        S, b, c = S_new, b_new, c_new
        if step % store_stride == 0 or step == n_steps:
            ts.append(step * h)
            Ss.append(S.copy())
            bs.append(b.copy())
            cs.append(c)

    return QuadraticPhaseTrajectory(
        times=np.array(ts), Sigma=np.array(Ss), b=np.array(bs), c=np.array(cs),
        blown_up=blown, blowup_time=t_blow)


# ---------- general phase evaluation by shooting ----------

def eval_phase_general(t: float, x_target: Sequence[float], phase_in,
                       params: SimParams, dt: float = 1e-3,
                       max_iter: int = 50, tol: float = 1e-10,
                       escape_radius: float = 1e6):
    """Phase value, gradient, Hessian at (t, x_target) by Newton shooting.

    Finds the launch point x0 whose ray lands on x_target at time t;
    the flow Jacobian Gamma supplies the exact Newton matrix.  Returns
    (S, grad S, Hess S).  Raises CausticError if the connecting ray
    crosses a caustic and ShootingError if Newton does not converge.
    """
    x_target = np.asarray(x_target, dtype=float)
    scale = 1.0 + float(np.linalg.norm(x_target))

    def land(x0: np.ndarray) -> RayTrajectory:
        traj = integrate_ray(Ray.from_phase(x0, phase_in), dt, t, params,
                             store_stride=max(1, int(round(t / dt))))
        if traj.caustic:
            raise CausticError(
                f"ray from {x0.tolist()} hits a caustic at t = {traj.caustic_time:.6g} "
                f"before reaching t = {t:.6g}")
        return traj

    if t == 0.0:
        x0 = x_target
        return (float(phase_in.value(x0)), np.asarray(phase_in.gradient(x0), float),
                np.asarray(phase_in.hessian(x0), float))

    x0 = x_target.copy()
    traj = land(x0)
    res = traj.x[-1] - x_target
    for _ in range(max_iter):
        if np.linalg.norm(res) < tol * scale:
            final = traj.final()
            return float(final.action), final.p, final.sigma
        try:
            delta = np.linalg.solve(traj.gamma[-1], res)
        except np.linalg.LinAlgError as exc:
            raise CausticError(
                f"singular flow Jacobian while targeting {x_target.tolist()}") from exc
        step_scale = 1.0
        for _ in range(30):
            x0_try = x0 - step_scale * delta
            if np.linalg.norm(x0_try) > escape_radius:
                raise ShootingError(
                    f"shooting iterate escaped while targeting {x_target.tolist()}")
            traj_try = land(x0_try)
            res_try = traj_try.x[-1] - x_target
            if np.linalg.norm(res_try) < np.linalg.norm(res):
                break
            step_scale *= 0.5
        else:
            raise ShootingError(
                f"no descent step found while targeting {x_target.tolist()}")
        x0, traj, res = x0_try, traj_try, res_try
    if np.linalg.norm(res) < tol * scale:
        final = traj.final()
        return float(final.action), final.p, final.sigma
    raise ShootingError(
        f"Newton shooting failed to converge on target {x_target.tolist()} "
        f"(residual {np.linalg.norm(res):.3g} after {max_iter} iterations)")


def subquadratic_monitor(hessian_at: Callable[[np.ndarray], np.ndarray],
                         points: np.ndarray) -> float:
    """Max spectral norm of the phase Hessian over sample points.

    Bounded output certifies the phase stays subquadratic on the
    sampled region, the standing assumption of the WKB route.
    """
    worst = 0.0
    for x in np.asarray(points, dtype=float):
        H = np.asarray(hessian_at(x), dtype=float)
        worst = max(worst, float(np.max(np.abs(np.linalg.eigvalsh(0.5 * (H + H.T))))))
    return worst
