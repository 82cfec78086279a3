"""Blahut-Arimoto style solvers for the single-stage and serial problems.

These iterate the self-consistent equations directly on tables and serve as
the reference ("baseline") solutions for the gradient trainer.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from .infotheory import JointSystem, free_energy_table, mutual_information, objective_J, to_unit


class SolverDivergenceError(FloatingPointError):
    pass


@dataclass
class SolverConfig:
    tol: float = 1e-10
    max_iter: int = 10_000
    patience: int = 10  # consecutive sub-tolerance sweeps required before stopping
    jitter: float = 0.0  # Dirichlet concentration for q(a|x) restarts; 0 = uniform rows
    seed: int | None = None

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if self.patience < 1:
            raise ValueError("patience must be at least 1")


def _normalize_exp(log_weights):
    z = log_weights - log_weights.max(axis=-1, keepdims=True)
    w = np.exp(z)
    partition = w.sum(axis=-1, keepdims=True)
    return w / partition, partition


@dataclass
class RateDistortionSolution:
    p_a_given_w: np.ndarray
    p_a: np.ndarray
    objective: float
    info: float  # nats
    n_iter: int
    converged: bool
    history: list = field(default_factory=list)


def solve_rate_distortion(model, beta, cfg=None, init=None):
    """Single-stage bounded-rational policy p*(a|w) for inverse temperature ``beta``.

    Alternates ``p(a|w) ~ p(a) exp(beta U)`` and ``p(a) = sum_w p(w) p(a|w)``.
    """
    cfg = cfg or SolverConfig()
    if not beta > 0:
        raise ValueError("beta must be positive")
    prior, U = model.prior, model.utility
    p_a = np.full(model.n_actions, 1.0 / model.n_actions) if init is None else np.asarray(init, float)
    if np.any(p_a <= 0):
        raise ValueError("initial action marginal needs full support")

    def objective(cond, marg):
        # inlined I(W;A): this runs every iteration and the checked version is slow
        joint = prior[:, None] * cond
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(joint > 0, joint * (np.log(cond) - np.log(marg)[None, :]), 0.0)
        info = float(terms.sum())
        return float((joint * U).sum() - info / beta), info

    history = []
    cond = np.tile(p_a, (model.n_worlds, 1))
    converged = False
    for it in range(1, cfg.max_iter + 1):
        with np.errstate(divide="ignore"):
            log_pa = np.log(p_a)
        new_cond, _ = _normalize_exp(log_pa[None, :] + beta * U)
        new_pa = prior @ new_cond
        change = max(np.abs(new_cond - cond).max(), np.abs(new_pa - p_a).max())
        cond, p_a = new_cond, new_pa
        history.append(objective(cond, p_a)[0])
        if change < cfg.tol:
            converged = True
            break
    value, info = objective(cond, p_a)
    return RateDistortionSolution(cond, p_a, value, info, it, converged, history)


@dataclass
class TabularSolution:
    p_x_given_w: np.ndarray
    p_a_given_x: np.ndarray
    p_x: np.ndarray
    p_a: np.ndarray
    objective: float
    n_iter: int
    max_change: float
    converged: bool
    trace: list = field(default_factory=list)  # (sweep, J, I_wx, I_xa, change), nats
    restart: int = 0

    def system(self, model, beta1, beta2):
        return JointSystem(model.prior, self.p_x_given_w, self.p_a_given_x, model.utility, beta1, beta2)

    @property
    def behavior(self):
        return self.p_x_given_w @ self.p_a_given_x


def serial_sweep(prior, U, beta1, beta2, q_x, q_a, q_a_given_x):
    """One pass through the four self-consistent equations, in order.

    Returns the updated (p(x|w), p(x), p(a|x), p(a)) and the two partition sums.
    """
    sys = JointSystem(prior, np.tile(q_x, (len(prior), 1)), q_a_given_x, U, beta1, beta2)
    dF = free_energy_table(sys, p_a=q_a)
    with np.errstate(divide="ignore"):
        log_qx, log_qa = np.log(q_x), np.log(q_a)
    p_xw, z_w = _normalize_exp(log_qx[None, :] + beta1 * dF)
    p_x = prior @ p_xw
    joint_wx = prior[:, None] * p_xw
    with np.errstate(divide="ignore", invalid="ignore"):
        post = np.where(p_x[None, :] > 0, joint_wx / p_x[None, :], 0.0)  # p(w|x)
    p_ax, z_x = _normalize_exp(log_qa[None, :] + beta2 * (post.T @ U))
    p_a = p_x @ p_ax
    return p_xw, p_x, p_ax, p_a, z_w, z_x


def solve_serial(model, beta1, beta2, n_percepts, cfg=None, restart=0):
    """Iterate the serial self-consistent equations to a fixed point.

    Starts from uniform q(x), q(a) and uniform (or Dirichlet-jittered) q(a|x).
    Records J and both mutual informations every sweep.
    """
    cfg = cfg or SolverConfig()
    if not (beta1 > 0 and beta2 > 0):
        raise ValueError("beta1 and beta2 must be positive")
    if n_percepts < 1:
        raise ValueError("n_percepts must be at least 1")
    prior, U = model.prior, model.utility
    n_a = model.n_actions
    q_x = np.full(n_percepts, 1.0 / n_percepts)
    q_a = np.full(n_a, 1.0 / n_a)
    if cfg.jitter > 0:
        rng = np.random.default_rng(cfg.seed)
        q_ax = rng.dirichlet(np.full(n_a, cfg.jitter), size=n_percepts)
        q_ax = np.clip(q_ax, 1e-300, None)
        q_ax /= q_ax.sum(axis=1, keepdims=True)
    else:
        q_ax = np.full((n_percepts, n_a), 1.0 / n_a)
    p_xw = np.tile(q_x, (len(prior), 1))

    trace = []
    converged = False
    change = np.inf
    calm = 0
    for sweep in range(1, cfg.max_iter + 1):
        new = serial_sweep(prior, U, beta1, beta2, q_x, q_a, q_ax)
        n_xw, n_x, n_ax, n_a_marg, z_w, z_x = new
        for name, table in (("p(x|w)", n_xw), ("p(x)", n_x), ("p(a|x)", n_ax), ("p(a)", n_a_marg)):
            if not np.all(np.isfinite(table)):
                bad = np.argwhere(~np.isfinite(np.atleast_1d(table)))[0]
                raise SolverDivergenceError(f"sweep {sweep}: non-finite {name} at {tuple(bad)}")
        if not (np.all(z_w > 0) and np.all(z_x > 0)):
            raise SolverDivergenceError(f"sweep {sweep}: non-positive partition sum")
        change = max(
            np.abs(n_xw - p_xw).max(),
            np.abs(n_x - q_x).max(),
            np.abs(n_ax - q_ax).max(),
            np.abs(n_a_marg - q_a).max(),
        )
        p_xw, q_x, q_ax, q_a = n_xw, n_x, n_ax, n_a_marg
        sys = JointSystem(prior, p_xw, q_ax, U, beta1, beta2)
        i_wx = mutual_information(prior[:, None] * p_xw)
        i_xa = mutual_information(q_x[:, None] * q_ax)
        trace.append((sweep, objective_J(sys), i_wx, i_xa, float(change)))
        calm = calm + 1 if change < cfg.tol else 0
        if calm >= cfg.patience:
            converged = True
            break

    return TabularSolution(
        p_x_given_w=p_xw,
        p_a_given_x=q_ax,
        p_x=q_x,
        p_a=q_a,
        objective=trace[-1][1],
        n_iter=sweep,
        max_change=float(change),
        converged=converged,
        trace=trace,
        restart=restart,
    )


def fixed_point_residual(model, beta1, beta2, sol):
    """Max abs difference between a solution and one further sweep from it."""
    n_xw, n_x, n_ax, n_a, _, _ = serial_sweep(
        model.prior, model.utility, beta1, beta2, sol.p_x, sol.p_a, sol.p_a_given_x
    )
    return max(
        np.abs(n_xw - sol.p_x_given_w).max(),
        np.abs(n_x - sol.p_x).max(),
        np.abs(n_ax - sol.p_a_given_x).max(),
        np.abs(n_a - sol.p_a).max(),
    )


def solve_serial_restarts(model, beta1, beta2, n_percepts, n_restarts=5, cfg=None, seed=0):
    """Best-J solution over one uniform start and ``n_restarts - 1`` jittered ones.

    Ties go to the lowest restart index.  Returns ``(best, all_solutions)``.
    """
    cfg = cfg or SolverConfig()
    solutions = []
    for r in range(n_restarts):
        rcfg = SolverConfig(cfg.tol, cfg.max_iter, cfg.patience, 0.0 if r == 0 else 1.0, seed + r)
        solutions.append(solve_serial(model, beta1, beta2, n_percepts, rcfg, restart=r))
    best = solutions[0]
    for s in solutions[1:]:
        if s.objective > best.objective:
            best = s
    return best, solutions


def write_trace_csv(path, sol, unit="bits"):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["sweep", "J", "I_omega_x", "I_x_a", "max_change"])
        for sweep, J, i_wx, i_xa, change in sol.trace:
            w.writerow([sweep, repr(J), repr(to_unit(i_wx, unit)), repr(to_unit(i_xa, unit)), repr(change)])
