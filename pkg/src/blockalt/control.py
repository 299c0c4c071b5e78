"""Closed-loop thermal control demo.

A small heater block obeys the energy balance

    m c_p dT/dt = U A (T_amb - T) + eps sigma A (T_amb^4 - T^4) + alpha Q

and is regulated either by a one-step-ahead predictive controller, whose
input and Lyapunov matrix are found each tick by the block-alternating
solver, or by a saturated infinite-horizon LQR law. Both controllers see the
plant only through a Luenberger observer built on a discrete 2-state linear
model sampled at 0.5 s.
"""

from __future__ import annotations

import csv
import io
import math
import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .bai import SolverConfig
from .expr import DomainError
from .multistart import AllStartsFailed, run as multistart_run
from .problem import Problem, check_feasible
from .sampling import SamplerConfig, SamplingError, hybrid

KELVIN = 273.15
U_MAX = 100.0
P_MIN = 1e-6  # P > 0 realized as p11, p22, det(P) >= P_MIN
LYAP_MARGIN = 1e-9  # strict Lyapunov decrease realized as <= -LYAP_MARGIN
P_MAX = 100.0  # box on the Lyapunov matrix entries


@dataclass(frozen=True)
class PlantParams:
    m: float = 0.004  # kg
    cp: float = 500.0  # J/(kg K)
    U: float = 10.0  # W/(m^2 K)
    A: float = 12e-4  # m^2
    T_amb: float = 25.0 + KELVIN  # K
    eps: float = 0.9
    sigma: float = 5.67e-8  # W/(m^2 K^4)
    alpha: float = 0.01

    def __post_init__(self):
        for k, v in self.__dict__.items():
            if not v > 0:
                raise ValueError(f"plant parameter {k} must be positive")


def plant_rhs(params: PlantParams, T: float, Q: float) -> float:
    """dT/dt in K/s."""
    p = params
    heat = (
        p.U * p.A * (p.T_amb - T)
        + p.eps * p.sigma * p.A * (p.T_amb**4 - T**4)
        + p.alpha * Q
    )
    return heat / (p.m * p.cp)


def plant_step(
    params: PlantParams, T: float, Q: float, dt: float, h: float = 0.01
) -> float:
    """Advance the plant by ``dt`` seconds with the heater held at ``Q`` percent (RK4)."""
    if not 0.0 <= Q <= U_MAX:
        raise ValueError(f"heater output {Q} outside [0, 100]")
    if not T > 0:
        raise ValueError("temperature must be positive (kelvin)")
    steps = max(1, int(round(dt / h)))
    h = dt / steps
    for _ in range(steps):
        k1 = plant_rhs(params, T, Q)
        k2 = plant_rhs(params, T + 0.5 * h * k1, Q)
        k3 = plant_rhs(params, T + 0.5 * h * k2, Q)
        k4 = plant_rhs(params, T + h * k3, Q)
        T += h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
    return T


@dataclass(frozen=True)
class LinearModel:
    A: np.ndarray = field(
        default_factory=lambda: np.array([[0.0, -0.0005], [1.0, -0.0965]])
    )
    B: np.ndarray = field(default_factory=lambda: np.array([0.0004, 0.0]))
    C: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0]))
    T_amb: float = 25.0  # output offset, Celsius
    dt: float = 0.5

    def __post_init__(self):
        object.__setattr__(self, "A", np.asarray(self.A, dtype=float).reshape(2, 2))
        object.__setattr__(self, "B", np.asarray(self.B, dtype=float).reshape(2))
        object.__setattr__(self, "C", np.asarray(self.C, dtype=float).reshape(2))
        if not self.dt > 0:
            raise ValueError("sample period must be positive")

    def predict(self, x, u: float) -> np.ndarray:
        return self.A @ x + self.B * u

    def output(self, x) -> float:
        return float(self.C @ x) + self.T_amb


def equilibrium_target(model: LinearModel, r: float) -> tuple[np.ndarray, float]:
    """Steady state ``(x_bar, u_bar)`` of the linear model with output ``r``."""
    M = np.zeros((3, 3))
    M[:2, :2] = np.eye(2) - model.A
    M[:2, 2] = -model.B
    M[2, :2] = model.C
    rhs = np.array([0.0, 0.0, r - model.T_amb])
    if abs(np.linalg.det(M)) < 1e-14:
        raise np.linalg.LinAlgError("steady-state system is singular")
    sol = np.linalg.solve(M, rhs)
    return sol[:2], float(sol[2])


def lqr_baseline(
    model: LinearModel,
    Qx=np.diag([0.1, 10.0]),
    Qu: float = 0.001,
    tol: float = 1e-12,
    max_iter: int = 1_000_000,
) -> np.ndarray:
    """Infinite-horizon discrete LQR gain by iterating the Riccati recursion."""
    A, B = model.A, model.B.reshape(2, 1)
    Qx = np.asarray(Qx, dtype=float)
    P = Qx.copy()
    for _ in range(max_iter):
        S = Qu + (B.T @ P @ B).item()
        K = (B.T @ P @ A) / S
        P_next = Qx + A.T @ P @ A - A.T @ P @ B @ K
        P_next = 0.5 * (P_next + P_next.T)
        if not np.all(np.isfinite(P_next)):
            raise ArithmeticError("Riccati recursion diverged")
        if np.max(np.abs(P_next - P)) <= tol * max(1.0, np.max(np.abs(P))):
            P = P_next
            break
        P = P_next
    else:
        raise ArithmeticError("Riccati recursion did not converge")
    S = Qu + (B.T @ P @ B).item()
    return ((B.T @ P @ A) / S).reshape(2)


@dataclass
class ControllerState:
    x_hat: np.ndarray = field(default_factory=lambda: np.zeros(2))
    P_prev: np.ndarray = field(default_factory=lambda: np.eye(2))
    u_prev: float = 0.0
    L: np.ndarray = field(default_factory=lambda: np.array([0.85, 0.9]))
    Qx: np.ndarray = field(default_factory=lambda: np.diag([0.1, 10.0]))
    Qu: float = 0.001
    theta: float = 0.01
    r: float = 50.0
    x_bar: Optional[np.ndarray] = None
    u_bar: Optional[float] = None
    norm: str = "sqrt"  # 'sqrt': V = sqrt(z'Pz); 'squared': V = z'Pz

    def __post_init__(self):
        if self.norm not in ("sqrt", "squared"):
            raise ValueError("norm must be 'sqrt' or 'squared'")
        if not (self.theta > 0 and self.Qu > 0):
            raise ValueError("theta and Qu must be positive")


def observer_step(
    model: LinearModel, state: ControllerState, u: float, y: float
) -> np.ndarray:
    """One Luenberger update, ``A x + B u + L (y - T_amb - C x)``."""
    x = state.x_hat
    innovation = y - model.T_amb - float(model.C @ x)
    return model.A @ x + model.B * u + state.L * innovation


def lyapunov_value(z, P, norm: str = "sqrt") -> float:
    q = float(z @ P @ z)
    return math.sqrt(max(q, 0.0)) if norm == "sqrt" else q


def _num(v: float) -> str:
    return repr(float(v))


def osap_problem(model: LinearModel, state: ControllerState) -> Problem:
    """The per-tick optimization over ``(u, p11, p22, p12)`` as a :class:`Problem`.

    Cost: ``|x+ - x_bar|^2_Qx + Qu (u - u_bar)^2 + V(x_hat - x_bar, P)`` with
    ``x+ = A x_hat + B u``. Constraints: ``P`` positive definite with margin,
    and the Lyapunov decrease ``V(x+) - V(x_hat) + theta V(x_hat) <= -margin``,
    dropped when ``x_hat`` already sits on the target.
    """
    xb, ub = state.x_bar, state.u_bar
    e = state.x_hat - xb
    d = model.A @ state.x_hat - xb  # x+ - x_bar = d + B u
    b = model.B
    q1, q2 = state.Qx[0, 0], state.Qx[1, 1]
    q12 = state.Qx[0, 1]

    def quad(z1, z2):
        # z'Pz with P = [[x2, x4], [x4, x3]]; z entries are expression strings
        return f"(x2*({z1})^2 + 2*x4*({z1})*({z2}) + x3*({z2})^2)"

    def V(z1, z2):
        q = quad(z1, z2)
        return f"sqrt({q})" if state.norm == "sqrt" else q

    e1, e2 = _num(e[0]), _num(e[1])
    z1 = f"{_num(d[0])} + {_num(b[0])}*x1"
    z2 = f"{_num(d[1])} + {_num(b[1])}*x1"
    track = f"{_num(q1)}*({z1})^2 + {_num(q2)}*({z2})^2"
    if q12:
        track += f" + {_num(2 * q12)}*({z1})*({z2})"
    cost = f"{track} + {_num(state.Qu)}*(x1 - {_num(ub)})^2 + {V(e1, e2)}"
    cons = [
        f"x2 >= {_num(P_MIN)}",
        f"x3 >= {_num(P_MIN)}",
        f"x2*x3 - x4^2 >= {_num(P_MIN)}",
    ]
    if np.linalg.norm(e) > 1e-12:
        cons.append(
            f"{V(z1, z2)} - {_num(1 - state.theta)}*{V(e1, e2)} <= {_num(-LYAP_MARGIN)}"
        )
    bounds = [(0.0, U_MAX), (P_MIN, P_MAX), (P_MIN, P_MAX), (-P_MAX, P_MAX)]
    return Problem.from_text(bounds, cost, cons, name="osap")


@dataclass
class TickResult:
    u: float
    P: np.ndarray
    iterations: int = 0
    starts: int = 0
    fallback: bool = False
    lyapunov_ok: bool = True
    pd_ok: bool = True
    solve_time: float = 0.0
    message: str = ""


def _pd(P) -> bool:
    try:
        np.linalg.cholesky(P)
    except np.linalg.LinAlgError:
        return False
    return True


def check_lyapunov(model, state, u, P) -> bool:
    e = state.x_hat - state.x_bar
    if np.linalg.norm(e) <= 1e-12:
        return True
    e_next = model.A @ state.x_hat + model.B * u - state.x_bar
    v0 = lyapunov_value(e, P, state.norm)
    return lyapunov_value(e_next, P, state.norm) - v0 + state.theta * v0 <= 0.0


def controller_step(
    model: LinearModel,
    state: ControllerState,
    n_starts: int = 16,
    cfg: SolverConfig = SolverConfig(max_iterations=400, x_tol=1e-6, cost_tol=1e-8),
    grid_cap: int = 4096,
    seed: int = 0,
) -> TickResult:
    """Solve the one-step-ahead problem for the current estimate.

    Starts are the previous tick's ``(u, P)`` when still feasible plus hybrid
    samples, ``n_starts`` in total. If nothing feasible is found the previous
    input is held and the tick is flagged.
    """
    t0 = time.perf_counter()
    if state.x_bar is None or state.u_bar is None:
        state.x_bar, state.u_bar = equilibrium_target(model, state.r)
    p = osap_problem(model, state)
    P0 = state.P_prev
    warm = (state.u_prev, P0[0, 0], P0[1, 1], P0[0, 1])
    starts = []
    if check_feasible(p, warm).feasible:
        starts.append(warm)
    try:
        sampled = hybrid(
            p,
            SamplerConfig(
                n_points=n_starts - len(starts),
                seed=seed,
                grid_candidate_cap=grid_cap,
                rejection_cap=4,
            ),
        )
        starts.extend(sampled.points)
    except SamplingError:
        pass
    fail = TickResult(state.u_prev, state.P_prev.copy(), fallback=True)
    if not starts:
        fail.message = "no feasible start"
        fail.solve_time = time.perf_counter() - t0
        return fail
    try:
        rep = multistart_run(p, starts, cfg)
    except AllStartsFailed as exc:
        fail.message = str(exc)
        fail.solve_time = time.perf_counter() - t0
        return fail
    u, p11, p22, p12 = rep.best_point
    P = np.array([[p11, p12], [p12, p22]])
    return TickResult(
        u=u,
        P=P,
        iterations=sum(r.iterations for r in rep.per_start),
        starts=len(starts),
        lyapunov_ok=check_lyapunov(model, state, u, P),
        pd_ok=_pd(P),
        solve_time=time.perf_counter() - t0,
    )


@dataclass(frozen=True)
class Scenario:
    controller: str = "osap"
    duration: float = 600.0
    T_amb: float = 25.0  # Celsius
    r: float = 50.0
    seed: int = 0
    noise_std: float = 0.0
    theta: float = 0.01
    norm: str = "sqrt"
    n_starts: int = 16

    def __post_init__(self):
        if self.controller not in ("osap", "lqr"):
            raise ValueError(f"unknown controller {self.controller!r}")
        if self.duration < 0:
            raise ValueError("duration must be non-negative")
        if self.n_starts < 1:
            raise ValueError("n_starts must be at least 1")


@dataclass
class Telemetry:
    scenario: Scenario
    t: list = field(default_factory=list)
    y: list = field(default_factory=list)
    u: list = field(default_factory=list)
    x1_hat: list = field(default_factory=list)
    x2_hat: list = field(default_factory=list)
    solver_iterations: list = field(default_factory=list)
    tick_time: list = field(default_factory=list)
    solve_time: list = field(default_factory=list)
    P: list = field(default_factory=list)  # [p11, p22, p12] used at each tick
    fallback: list = field(default_factory=list)
    lyapunov_ok: list = field(default_factory=list)
    pd_ok: list = field(default_factory=list)

    COLUMNS = ("t", "y", "u", "x1_hat", "x2_hat", "solver_iterations", "tick_time")

    def __len__(self) -> int:
        return len(self.t)

    def to_json(self) -> dict:
        s = self.scenario
        return {
            "schema_version": 1,
            "scenario": {
                "controller": s.controller,
                "duration": s.duration,
                "T_amb": s.T_amb,
                "r": s.r,
                "seed": s.seed,
                "noise_std": s.noise_std,
                "theta": s.theta,
                "norm": s.norm,
                "n_starts": s.n_starts,
            },
            "t": self.t,
            "y": self.y,
            "u": self.u,
            "x1_hat": self.x1_hat,
            "x2_hat": self.x2_hat,
            "solver_iterations": self.solver_iterations,
            "tick_time": self.tick_time,
            "solve_time": self.solve_time,
            "P": self.P,
            "fallback": self.fallback,
            "lyapunov_ok": self.lyapunov_ok,
            "pd_ok": self.pd_ok,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.COLUMNS)
        for row in zip(*(getattr(self, c) for c in self.COLUMNS)):
            w.writerow([repr(v) if isinstance(v, float) else v for v in row])
        return buf.getvalue()


def run_closed_loop(
    scenario: Scenario,
    params: Optional[PlantParams] = None,
    model: Optional[LinearModel] = None,
) -> Telemetry:
    """Simulate ``scenario.duration`` seconds of closed-loop operation.

    Each 0.5 s tick: measure the plant, correct the observer with the
    measurement and the input applied over the previous tick, compute the
    new input from the updated estimate, then integrate the plant over the
    tick with that input held.
    """
    params = params or PlantParams(T_amb=scenario.T_amb + KELVIN)
    model = model or LinearModel(T_amb=scenario.T_amb)
    state = ControllerState(r=scenario.r, theta=scenario.theta, norm=scenario.norm)
    state.x_bar, state.u_bar = equilibrium_target(model, scenario.r)
    K = lqr_baseline(model, state.Qx, state.Qu) if scenario.controller == "lqr" else None
    rng = np.random.default_rng(np.random.SeedSequence(scenario.seed & (2**64 - 1)))
    tele = Telemetry(scenario)
    T = params.T_amb
    n_ticks = int(round(scenario.duration / model.dt))
    for k in range(n_ticks):
        t0 = time.perf_counter()
        y = T - KELVIN
        if scenario.noise_std > 0:
            y += scenario.noise_std * rng.standard_normal()
        state.x_hat = observer_step(model, state, state.u_prev, y)
        if K is not None:
            e = state.x_hat - state.x_bar
            u = float(np.clip(state.u_bar - K @ e, 0.0, U_MAX))
            tick = TickResult(u=u, P=state.P_prev)
        else:
            tick = controller_step(
                model, state, n_starts=scenario.n_starts, seed=scenario.seed + k
            )
            u = float(np.clip(tick.u, 0.0, U_MAX))
            if not tick.fallback:
                state.P_prev = tick.P
        tele.t.append(k * model.dt)
        tele.y.append(y)
        tele.u.append(u)
        tele.x1_hat.append(float(state.x_hat[0]))
        tele.x2_hat.append(float(state.x_hat[1]))
        tele.solver_iterations.append(tick.iterations)
        tele.solve_time.append(tick.solve_time)
        tele.P.append([float(tick.P[0, 0]), float(tick.P[1, 1]), float(tick.P[0, 1])])
        tele.fallback.append(tick.fallback)
        tele.lyapunov_ok.append(tick.lyapunov_ok)
        tele.pd_ok.append(tick.pd_ok)
        state.u_prev = u
        T = plant_step(params, T, u, model.dt)
        tele.tick_time.append(time.perf_counter() - t0)
    return tele
