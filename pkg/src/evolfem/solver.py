"""Restarted GMRES and the conservative implicit Euler stepper.

The stepper advances  d/dt (M(t) alpha) + S(t) alpha = r(t)  by

    (M(t_{n+1}) + tau S(t_{n+1})) alpha^{n+1} = M(t_n) alpha^n + tau r(t_{n+1}).
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .errors import ConfigurationError, SolverError

log = logging.getLogger(__name__)

SCHEME_ID = "conservative-IE"


@dataclass(frozen=True)
class LinearSolverConfig:
    relative_tolerance: float = 1e-10
    max_iterations: int = 2000
    restart: int = 50
    preconditioner: str = "jacobi"

    def __post_init__(self):
        if not self.relative_tolerance > 0:
            raise ConfigurationError("solver tolerance must be positive")
        if self.restart < 1 or self.max_iterations < 1:
            raise ConfigurationError("restart and max_iterations must be >= 1")
        if self.preconditioner not in ("none", "jacobi"):
            raise ConfigurationError(f"unknown preconditioner {self.preconditioner!r}")


@dataclass
class GMRESResult:
    x: np.ndarray
    iterations: int
    residual: float
    history: list = field(default_factory=list)

    def __iter__(self):
        return iter((self.x, self.iterations, self.residual))


def spmv(A: sp.spmatrix, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    if A.shape[1] != x.shape[0]:
        raise ValueError(f"dimension mismatch: {A.shape} times {x.shape}")
    return A @ x


def gmres_solve(A, b, x0=None, cfg: LinearSolverConfig = LinearSolverConfig()) -> GMRESResult:
    """Right-preconditioned restarted GMRES (modified Gram-Schmidt, Givens).

    Stops when ||b - A x||_2 <= tol ||b||_2.  The convergence test uses the
    true residual at the end of each cycle, so the returned residual is
    never the recursively updated estimate alone.
    """
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError("GMRES needs a square matrix")
    b = np.asarray(b, dtype=float)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    if cfg.preconditioner == "jacobi":
        d = A.diagonal()
        dinv = np.where(d != 0, 1.0 / np.where(d != 0, d, 1.0), 1.0)
    else:
        dinv = np.ones(n)

    bnorm = np.linalg.norm(b)
    target = cfg.relative_tolerance * bnorm
    r = b - A @ x
    beta = np.linalg.norm(r)
    history = [beta]
    if beta <= target:
        return GMRESResult(x, 0, beta, history)

    m = max(1, min(cfg.restart, n))
    iters = 0
    while iters < cfg.max_iterations:
        V = np.zeros((m + 1, n))
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        V[0] = r / beta
        j_used = 0
        for j in range(m):
            w = A @ (dinv * V[j])
            for i in range(j + 1):
                H[i, j] = w @ V[i]
                w -= H[i, j] * V[i]
            H[j + 1, j] = np.linalg.norm(w)
            if H[j + 1, j] > 0:
                V[j + 1] = w / H[j + 1, j]
            for i in range(j):
                tmp = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = tmp
            denom = np.hypot(H[j, j], H[j + 1, j])
            cs[j], sn[j] = (1.0, 0.0) if denom == 0 else (H[j, j] / denom, H[j + 1, j] / denom)
            H[j, j] = cs[j] * H[j, j] + sn[j] * H[j + 1, j]
            H[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]
            iters += 1
            j_used = j + 1
            # stop a little below the target so the true residual also passes
            if abs(g[j + 1]) <= 0.5 * target or H[j, j] == 0 or iters >= cfg.max_iterations:
                break
        y = np.linalg.solve(np.triu(H[:j_used, :j_used]), g[:j_used]) if j_used else np.zeros(0)
        x = x + dinv * (y @ V[:j_used])
        r = b - A @ x
        beta = np.linalg.norm(r)
        history.append(beta)
        if beta <= target:
            return GMRESResult(x, iters, beta, history)
        if beta == 0:
            break
    raise SolverError(
        f"GMRES did not converge: residual {beta:.3e} > {target:.3e} after {iters} iterations",
        residual=beta, iterations=iters)


# ------------------------------------------------------------ time stepping

@dataclass
class TimeStepperState:
    t: float
    alpha: np.ndarray
    M_current: sp.spmatrix
    step_index: int = 0
    gmres_iterations: int = 0
    assembly_seconds: float = 0.0
    solve_seconds: float = 0.0


def initial_state(system, alpha0=None, t0: float = 0.0) -> TimeStepperState:
    alpha0 = system.initial(t0) if alpha0 is None else np.asarray(alpha0, dtype=float)
    if len(alpha0) != system.size:
        raise ValueError("initial vector does not match the system size")
    return TimeStepperState(t0, alpha0.copy(), system.mass(t0))


def implicit_euler_step(system, state: TimeStepperState, tau: float,
                        cfg: LinearSolverConfig = LinearSolverConfig(),
                        with_rhs: bool = True) -> TimeStepperState:
    """One step of the conservative implicit Euler scheme.

    ``system.assemble(t)`` must return ``(M, S, r)`` at time t.
    """
    if not tau > 0:
        raise ConfigurationError("time step must be positive")
    t_new = state.t + tau
    t0 = time.perf_counter()
    M, S, r = system.assemble(t_new, with_rhs=with_rhs)
    t1 = time.perf_counter()
    lhs = (M + tau * S).tocsr()
    rhs = state.M_current @ state.alpha + tau * r
    res = gmres_solve(lhs, rhs, state.alpha, cfg)
    t2 = time.perf_counter()
    return TimeStepperState(
        t_new, res.x, M, state.step_index + 1,
        state.gmres_iterations + res.iterations,
        state.assembly_seconds + (t1 - t0),
        state.solve_seconds + (t2 - t1))


def integrate(system, alpha0, final_time: float, num_steps: int,
              cfg: LinearSolverConfig = LinearSolverConfig(), t0: float = 0.0,
              with_rhs: bool = True, callback=None) -> TimeStepperState:
    """Apply ``num_steps`` uniform steps from ``t0`` to ``t0 + final_time``.

    ``callback`` sees the initial state and then the state after every step.
    """
    if num_steps < 1:
        raise ConfigurationError("num_steps must be >= 1")
    tau = final_time / num_steps
    state = initial_state(system, alpha0, t0)
    if callback is not None:
        callback(state)
    for n in range(num_steps):
        state = implicit_euler_step(system, state, tau, cfg, with_rhs)
        # accumulate time exactly on the uniform grid
        state = replace(state, t=t0 + (n + 1) * tau)
        if callback is not None:
            callback(state)
    log.debug("integrated %d steps, %d GMRES iterations", num_steps, state.gmres_iterations)
    return state


class ScalarSurrogate:
    """Constant 1x1 system M = m, S = s, r = q, handy for checking the stepper."""

    def __init__(self, m=1.0, s=1.0, q=0.0):
        self.m, self.s, self.q = m, s, q
        self.size = 1

    def mass(self, t):
        return sp.csr_matrix([[self.m]])

    def assemble(self, t, with_rhs=True):
        return (sp.csr_matrix([[self.m]]), sp.csr_matrix([[self.s]]),
                np.array([self.q if with_rhs else 0.0]))

    def initial(self, t=0.0):
        return np.ones(1)
