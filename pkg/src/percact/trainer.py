"""Online stochastic gradient ascent on the perceptual network and action channel.

Each iteration rolls out world -> input -> percept -> action, scores the
triplet with the integrand ``j`` (utility minus the two weighted log-ratios,
using exact model marginals) and moves every parameter along
``score(theta) * j``.  Exact metrics are materialised every ``stride``
iterations from the tabulated channels, never from samples.
"""

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from . import channels as ch_mod
from .channels import ActionChannel, PerceptualNetwork, init_glorot, init_uniform_actions, sample_index
from .env import sample_world
from .infotheory import (
    JointSystem,
    expected_utility,
    info_percept_action,
    info_world_percept,
    objective_J,
    to_unit,
)


class NumericalError(FloatingPointError):
    """Non-finite value during a gradient step; ``diagnostics`` holds the context."""

    def __init__(self, message, diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


@dataclass
class TrainingConfig:
    beta1: float
    beta2: float
    alpha_vw: float
    alpha_eta: float
    n_iter: int = 100_000
    batch_size: int = 1
    stride: int = 500
    seed: int = 0
    n_hidden: int = 20
    n_percepts: int = 13

    def __post_init__(self):
        if not (self.beta1 > 0 and self.beta2 > 0):
            raise ValueError("beta1 and beta2 must be positive")
        if self.alpha_vw < 0 or self.alpha_eta < 0:
            raise ValueError("learning rates must be nonnegative")
        if self.n_iter < 0 or self.batch_size < 1 or self.stride < 1:
            raise ValueError("n_iter >= 0, batch_size >= 1 and stride >= 1 required")
        if self.n_hidden < 1 or self.n_percepts < 1:
            raise ValueError("network dimensions must be positive")


@dataclass
class Snapshot:
    iteration: int
    J: float
    expected_utility: float
    info_world_percept: float  # nats
    info_percept_action: float  # nats


@dataclass
class TrainingTrace:
    snapshots: list = field(default_factory=list)
    net: PerceptualNetwork | None = None
    channel: ActionChannel | None = None
    p_x_given_w: np.ndarray | None = None
    p_a_given_x: np.ndarray | None = None
    prior: np.ndarray | None = None

    @property
    def final(self):
        return self.snapshots[-1]

    @property
    def behavior(self):
        return self.p_x_given_w @ self.p_a_given_x

    @property
    def p_a(self):
        return self.prior @ self.behavior

    def to_csv(self, unit="bits"):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "J", "EU", f"I_omega_x_{unit}", f"I_x_a_{unit}"])
        for s in self.snapshots:
            w.writerow(
                [
                    s.iteration,
                    repr(s.J),
                    repr(s.expected_utility),
                    repr(float(to_unit(s.info_world_percept, unit))),
                    repr(float(to_unit(s.info_percept_action, unit))),
                ]
            )
        return buf.getvalue()


def tabulate(model, net, channel):
    """Exact p(x|w) on noise-free inputs and p(a|x) as tables."""
    return net.forward(model.clean_inputs()), channel.table()


def joint_system(model, net, channel, beta1, beta2):
    p_xw, p_ax = tabulate(model, net, channel)
    return JointSystem(model.prior, p_xw, p_ax, model.utility, beta1, beta2)


def exact_objective(model, net, channel, beta1, beta2):
    return objective_J(joint_system(model, net, channel, beta1, beta2))


def snapshot(model, net, channel, beta1, beta2, iteration):
    sys = joint_system(model, net, channel, beta1, beta2)
    return Snapshot(
        iteration,
        objective_J(sys),
        expected_utility(sys),
        max(info_world_percept(sys), 0.0),
        max(info_percept_action(sys), 0.0),
    )


def rollout(model, net, channel, rng):
    """One interaction: returns (world, input, percept, action, utility).

    Randomness is consumed in the fixed order world, encoder noise, percept, action.
    """
    world = sample_world(model, rng)
    xi = model.encoder(world, rng)
    percept = sample_index(net.forward(xi), rng.random())
    action = sample_index(ch_mod.action_prob(channel, percept), rng.random())
    return world, xi, percept, action, float(model.utility[world, action])


def expected_gradient(model, net, channel, beta1, beta2):
    """Exact expectation of the score x j estimators over the full joint.

    Enumerates every (world, percept, action) triplet; only practical for
    small tasks and noise-free encoders.  Returns (dV, dW, d_eta).
    """
    sys = joint_system(model, net, channel, beta1, beta2)
    joint = sys.joint()
    p_x = sys.prior @ sys.p_x_given_w
    p_a = p_x @ sys.p_a_given_x
    inputs = model.clean_inputs()
    dV = np.zeros_like(net.V)
    dW = np.zeros_like(net.W)
    d_eta = np.zeros_like(channel.eta)
    for w, x, a in np.ndindex(joint.shape):
        p = joint[w, x, a]
        if p == 0.0:
            continue
        j = (
            model.utility[w, a]
            - np.log(sys.p_x_given_w[w, x] / p_x[x]) / beta1
            - np.log(sys.p_a_given_x[x, a] / p_a[a]) / beta2
        )
        dV += p * j * ch_mod.grad_log_perceptual_V(net, inputs[w], x)
        dW += p * j * ch_mod.grad_log_perceptual_W(net, inputs[w], x)
        d_eta[:, x] += p * j * ch_mod.grad_log_action_eta(channel, x, a)
    return dV, dW, d_eta


def exact_gradient(model, net, channel, beta1, beta2):
    """Vectorised form of :func:`expected_gradient` (same quantity, no loops)."""
    X = model.clean_inputs()
    prior, U = model.prior, model.utility
    H = np.tanh(X @ net.V)
    P = net.forward(X)
    A = channel.table()
    p_x = prior @ P
    p_a = p_x @ A
    with np.errstate(divide="ignore"):
        log_px = np.log(P) - np.log(p_x)
        log_pa = np.log(A) - np.log(p_a)
    j = U[:, None, :] - log_px[:, :, None] / beta1 - log_pa[None, :, :] / beta2
    # perceptual scores only depend on (w, x): average j over actions first
    g = np.where(A[None, :, :] > 0, A[None, :, :] * j, 0.0).sum(axis=2)
    c = P * g - P * (P * g).sum(axis=1, keepdims=True)
    dW = np.einsum("w,wh,wx->hx", prior, H, c)
    dV = X.T @ (prior[:, None] * (1.0 - H**2) * (c @ net.W.T))
    r = np.where(A[None, :, :] > 0, (prior[:, None] * P)[:, :, None] * A[None, :, :] * j, 0.0).sum(axis=0)
    d_eta = (r[:, 1:] - r.sum(axis=1, keepdims=True) * A[:, 1:]).T
    return dV, dW, d_eta


class _StepState:
    """Per-run scratch: cached noise-free inputs for the exact marginals."""

    def __init__(self, model):
        self.inputs = model.clean_inputs()
        self.prior = model.prior
        self.utility = model.utility
        self.noisy = getattr(model.encoder, "flip_prob", 0.0) > 0.0


def gradient_step(model, net, channel, cfg, rng, iteration=0, state=None):
    """Draw ``cfg.batch_size`` rollouts and apply one ascent step in place.

    Returns a dict of step diagnostics (mean integrand, last triplet).
    """
    state = state or _StepState(model)
    V, W, eta = net.V, net.W, channel.eta
    n_act = eta.shape[0] + 1

    # exact marginals at the current parameters
    H_all = np.tanh(state.inputs @ V)
    P_all = H_all @ W
    P_all = np.exp(P_all - P_all.max(axis=1, keepdims=True))
    P_all /= P_all.sum(axis=1, keepdims=True)
    A = channel.table()
    p_x = state.prior @ P_all
    p_a = p_x @ A

    gV = np.zeros_like(V)
    gW = np.zeros_like(W)
    g_eta = np.zeros_like(eta)
    j_sum = 0.0
    for _ in range(cfg.batch_size):
        world = sample_world(model, rng)
        if state.noisy:
            xi = model.encoder(world, rng)
            h = np.tanh(xi @ V)
            px = h @ W
            px = np.exp(px - px.max())
            px /= px.sum()
        else:
            xi, h, px = state.inputs[world], H_all[world], P_all[world]
        x = sample_index(px, rng.random())
        a = sample_index(A[x], rng.random())
        with np.errstate(divide="ignore"):
            j = (
                state.utility[world, a]
                - np.log(px[x] / p_x[x]) / cfg.beta1
                - np.log(A[x, a] / p_a[a]) / cfg.beta2
            )
        if not np.isfinite(j):
            raise NumericalError(
                f"iteration {iteration}: non-finite integrand",
                {"iteration": iteration, "parameter": "j", "triplet": (world, x, a)},
            )
        coeff = -px
        coeff[x] += 1.0
        gW += np.outer(h, coeff * j)
        gV += np.outer(xi, (1.0 - h * h) * ((W @ coeff) * j))
        score_eta = -A[x, 1:]
        if a > 0:
            score_eta[a - 1] += 1.0
        g_eta[:, x] += score_eta * j
        j_sum += j

    scale = 1.0 / cfg.batch_size
    for name, g in (("V", gV), ("W", gW), ("eta", g_eta)):
        if not np.all(np.isfinite(g)):
            raise NumericalError(
                f"iteration {iteration}: non-finite gradient for {name}",
                {"iteration": iteration, "parameter": name, "triplet": (world, x, a)},
            )
    V += (cfg.alpha_vw * scale) * gV
    W += (cfg.alpha_vw * scale) * gW
    eta += (cfg.alpha_eta * scale) * g_eta
    if n_act > 1 and not np.all(np.isfinite(eta)):
        raise NumericalError(
            f"iteration {iteration}: eta diverged",
            {"iteration": iteration, "parameter": "eta", "triplet": (world, x, a)},
        )
    return {"mean_j": j_sum * scale, "triplet": (world, x, a)}


def init_parameters(model, cfg, rng):
    net = init_glorot(model.input_dim, cfg.n_hidden, cfg.n_percepts, rng)
    channel = init_uniform_actions(model.n_actions, cfg.n_percepts)
    return net, channel


def train(model, cfg, net=None, channel=None, callback=None):
    """Run ``cfg.n_iter`` online updates and return the exact-metric trace.

    Parameters default to Glorot / uniform initialisation drawn from the run's
    seeded stream.  ``callback(iteration, snapshot)`` is invoked at each stride.
    """
    rng = np.random.default_rng(cfg.seed)
    if net is None or channel is None:
        net, channel = init_parameters(model, cfg, rng)
    else:
        net, channel = net.copy(), channel.copy()
    if net.n_percepts != channel.n_percepts or channel.n_actions != model.n_actions:
        raise ValueError("network, action channel and task dimensions disagree")
    state = _StepState(model)
    trace = TrainingTrace()
    trace.snapshots.append(snapshot(model, net, channel, cfg.beta1, cfg.beta2, 0))
    for it in range(1, cfg.n_iter + 1):
        try:
            # overflow means the ascent has diverged; stop rather than carry inf/nan
            with np.errstate(over="raise", invalid="raise"):
                gradient_step(model, net, channel, cfg, rng, iteration=it, state=state)
        except NumericalError:
            raise
        except FloatingPointError as exc:
            raise NumericalError(
                f"iteration {it}: {exc}", {"iteration": it, "parameter": "update", "triplet": None}
            ) from exc
        if it % cfg.stride == 0 or it == cfg.n_iter:
            snap = snapshot(model, net, channel, cfg.beta1, cfg.beta2, it)
            trace.snapshots.append(snap)
            if callback is not None:
                callback(it, snap)
    trace.net, trace.channel = net, channel
    trace.p_x_given_w, trace.p_a_given_x = tabulate(model, net, channel)
    trace.prior = model.prior
    return trace


def write_behavior_csv(path, behavior, action_names=None):
    behavior = np.asarray(behavior)
    names = action_names or [f"a{k}" for k in range(behavior.shape[1])]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["world", *names])
        for world, row in enumerate(behavior):
            w.writerow([world, *(repr(float(v)) for v in row)])


@dataclass
class GridCell:
    alpha_vw: float
    alpha_eta: float
    final_J: float | None
    error: str | None = None

    @property
    def ok(self):
        return self.error is None and self.final_J is not None and np.isfinite(self.final_J)


def _run_cell(model, base, alpha_vw, alpha_eta):
    cfg = TrainingConfig(**{**base.__dict__, "alpha_vw": alpha_vw, "alpha_eta": alpha_eta})
    try:
        with np.errstate(over="raise", invalid="raise"):
            trace = train(model, cfg)
        J = trace.final.J
        if not np.isfinite(J):
            return GridCell(alpha_vw, alpha_eta, None, "non-finite objective")
        return GridCell(alpha_vw, alpha_eta, J)
    except (FloatingPointError, ValueError) as exc:
        return GridCell(alpha_vw, alpha_eta, None, f"{type(exc).__name__}: {exc}")


def grid_search(model, base_cfg, alpha_vw_grid, alpha_eta_grid, n_jobs=1):
    """Train every (alpha_vw, alpha_eta) cell and rank successful ones by final J.

    Failed or non-finite cells are returned separately and never ranked.  Ties
    in J are broken by (alpha_vw, alpha_eta) ascending.
    """
    cells = [(a, b) for a in alpha_vw_grid for b in alpha_eta_grid]
    if not cells:
        raise ValueError("grid is empty")
    if n_jobs == 1:
        results = [_run_cell(model, base_cfg, a, b) for a, b in cells]
    else:
        try:
            from joblib import Parallel, delayed
        except ImportError as exc:
            raise ImportError("n_jobs > 1 needs joblib; install percact[parallel]") from exc

        results = Parallel(n_jobs=n_jobs)(delayed(_run_cell)(model, base_cfg, a, b) for a, b in cells)
    ranked = sorted((c for c in results if c.ok), key=lambda c: (-c.final_J, c.alpha_vw, c.alpha_eta))
    failed = [c for c in results if not c.ok]
    return ranked, failed
