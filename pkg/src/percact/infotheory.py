"""Exact information quantities over the discrete chain world -> percept -> action.

Everything is computed in nats. Use :func:`to_unit` to convert for display.
The convention ``0 * log 0 = 0`` is applied everywhere.
"""

from dataclasses import dataclass

import numpy as np

LN2 = np.log(2.0)


class InfiniteDivergenceError(ValueError):
    """Raised when p has mass where q has none."""


def to_unit(value_nats, unit="bits"):
    """Convert from nats; scalars come back as plain floats."""
    if unit not in ("bits", "nats"):
        raise ValueError(f"unknown unit {unit!r}, expected 'bits' or 'nats'")
    value = value_nats / LN2 if unit == "bits" else value_nats
    return float(value) if np.ndim(value) == 0 else value


def _check_rows(table, name, atol=1e-10):
    table = np.asarray(table, dtype=float)
    if np.any(table < 0):
        raise ValueError(f"{name} has negative entries")
    sums = table.sum(axis=-1)
    if not np.allclose(sums, 1.0, rtol=0.0, atol=atol):
        raise ValueError(f"{name} rows do not sum to 1 (max dev {np.abs(sums - 1).max():.3g})")
    return table


@dataclass(frozen=True)
class JointSystem:
    """Prior p(w), channels p(x|w) and p(a|x), utility U(w,a) and the two prices.

    ``beta1`` prices perceptual information, ``beta2`` action information.
    """

    prior: np.ndarray
    p_x_given_w: np.ndarray
    p_a_given_x: np.ndarray
    utility: np.ndarray
    beta1: float
    beta2: float

    def __post_init__(self):
        prior = _check_rows(self.prior, "prior")
        pxw = _check_rows(self.p_x_given_w, "p(x|w)")
        pax = _check_rows(self.p_a_given_x, "p(a|x)")
        utility = np.asarray(self.utility, dtype=float)
        if pxw.shape[0] != prior.shape[0] or pax.shape[0] != pxw.shape[1]:
            raise ValueError(
                f"inconsistent shapes prior={prior.shape} p(x|w)={pxw.shape} p(a|x)={pax.shape}"
            )
        if utility.shape != (prior.shape[0], pax.shape[1]):
            raise ValueError(f"utility shape {utility.shape} does not match |W| x |A|")
        if not (self.beta1 > 0 and self.beta2 > 0):
            raise ValueError("beta1 and beta2 must be positive")
        object.__setattr__(self, "prior", prior)
        object.__setattr__(self, "p_x_given_w", pxw)
        object.__setattr__(self, "p_a_given_x", pax)
        object.__setattr__(self, "utility", utility)

    def joint(self):
        """Full joint p(w, x, a) as a |W| x |X| x |A| array."""
        return (
            self.prior[:, None, None]
            * self.p_x_given_w[:, :, None]
            * self.p_a_given_x[None, :, :]
        )


def marginal_x(sys):
    return sys.prior @ sys.p_x_given_w


def marginal_a(sys):
    return marginal_x(sys) @ sys.p_a_given_x


def behavior(sys):
    """Effective policy p(a|w) = sum_x p(x|w) p(a|x)."""
    return sys.p_x_given_w @ sys.p_a_given_x


def _xlogy_ratio(p, q):
    # p * log(p / q) with 0 log 0 = 0; q = 0 where p > 0 gives +inf
    out = np.zeros(np.broadcast(p, q).shape)
    p_b = np.broadcast_to(p, out.shape)
    q_b = np.broadcast_to(q, out.shape)
    mask = p_b > 0
    with np.errstate(divide="ignore"):
        out[mask] = p_b[mask] * (np.log(p_b[mask]) - np.log(q_b[mask]))
    return out


def mutual_information(joint):
    """Mutual information of a 2-D joint distribution, in nats.

    Parameters
    ----------
    joint : array-like, shape (n_u, n_v)
        Nonnegative entries summing to one.
    """
    joint = np.asarray(joint, dtype=float)
    if joint.ndim != 2:
        raise ValueError("joint must be 2-D")
    if np.any(joint < 0):
        raise ValueError("joint has negative entries")
    if abs(joint.sum() - 1.0) > 1e-10:
        raise ValueError(f"joint sums to {joint.sum()!r}, expected 1")
    pu = np.broadcast_to(joint.sum(axis=1, keepdims=True), joint.shape)
    pv = np.broadcast_to(joint.sum(axis=0, keepdims=True), joint.shape)
    mask = joint > 0
    # log differences, not a ratio of products: p(u)p(v) can underflow
    terms = np.log(joint[mask]) - np.log(pu[mask]) - np.log(pv[mask])
    return float((joint[mask] * terms).sum())


def kl_divergence(p, q):
    """KL(p || q) in nats. Raises :class:`InfiniteDivergenceError` off-support."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError(f"shape mismatch {p.shape} vs {q.shape}")
    if np.any((p > 0) & (q <= 0)):
        raise InfiniteDivergenceError("p is not absolutely continuous w.r.t. q")
    return float(_xlogy_ratio(p, q).sum())


def entropy(p):
    p = np.asarray(p, dtype=float)
    return float(-_xlogy_ratio(p, np.ones_like(p)).sum())


def info_world_percept(sys):
    return mutual_information(sys.prior[:, None] * sys.p_x_given_w)


def info_percept_action(sys):
    return mutual_information(marginal_x(sys)[:, None] * sys.p_a_given_x)


def expected_utility(sys):
    return float((sys.prior[:, None] * behavior(sys) * sys.utility).sum())


def free_energy_diff(sys, world, percept, p_a=None):
    """Free-energy difference of the action stage for one (world, percept) pair.

    Expected utility of ``p(.|percept)`` in ``world`` minus ``1/beta2`` times its
    KL divergence from the action marginal.
    """
    if p_a is None:
        p_a = marginal_a(sys)
    row = sys.p_a_given_x[percept]
    return float(row @ sys.utility[world] - kl_divergence(row, p_a) / sys.beta2)


def free_energy_table(sys, p_a=None):
    """Vectorised :func:`free_energy_diff` over all (world, percept), shape |W| x |X|."""
    if p_a is None:
        p_a = marginal_a(sys)
    pax = sys.p_a_given_x
    kl = _xlogy_ratio(pax, p_a[None, :]).sum(axis=1)
    return sys.utility @ pax.T - kl[None, :] / sys.beta2


def objective_J(sys):
    """E[U] - I(W;X)/beta1 - I(X;A)/beta2, in utility units."""
    return (
        expected_utility(sys)
        - info_world_percept(sys) / sys.beta1
        - info_percept_action(sys) / sys.beta2
    )


def sample_integrand_j(sys, world, percept, action, p_x=None, p_a=None):
    """Per-triplet integrand whose expectation under the joint is J."""
    if p_x is None:
        p_x = marginal_x(sys)
    if p_a is None:
        p_a = marginal_a(sys)
    pxw = sys.p_x_given_w[world, percept]
    pax = sys.p_a_given_x[percept, action]
    if pxw <= 0 or pax <= 0:
        raise ValueError(
            f"zero-probability triplet (w={world}, x={percept}, a={action}) has undefined integrand"
        )
    return float(
        sys.utility[world, action]
        - np.log(pxw / p_x[percept]) / sys.beta1
        - np.log(pax / p_a[action]) / sys.beta2
    )


def integrand_table(sys):
    """j(w, x, a) for every triplet, shape |W| x |X| x |A|; NaN where undefined."""
    p_x = marginal_x(sys)
    p_a = marginal_a(sys)
    with np.errstate(divide="ignore", invalid="ignore"):
        log_px = np.log(sys.p_x_given_w) - np.log(p_x)[None, :]
        log_pa = np.log(sys.p_a_given_x) - np.log(p_a)[None, :]
    out = (
        sys.utility[:, None, :]
        - log_px[:, :, None] / sys.beta1
        - log_pa[None, :, :] / sys.beta2
    )
    out[~np.isfinite(out)] = np.nan
    return out
