import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from percact import channels as ch


def random_net(rng, d=3, h=4, nx=5, scale=1.0):
    return ch.PerceptualNetwork(rng.normal(scale=scale, size=(d, h)), rng.normal(scale=scale, size=(h, nx)))


def naive_forward(V, W, xi):
    # straight-line reference: no max subtraction, explicit loops
    hidden = [np.tanh(sum(xi[r] * V[r, c] for r in range(V.shape[0]))) for c in range(V.shape[1])]
    logits = [sum(hidden[c] * W[c, k] for c in range(W.shape[0])) for k in range(W.shape[1])]
    e = [np.exp(v) for v in logits]
    return np.array(e) / sum(e)


def log_perceptual(net, xi, i):
    return np.log(net.forward(xi)[i])


def central_diff(f, theta, step=1e-6):
    grad = np.zeros_like(theta)
    for idx in np.ndindex(theta.shape):
        orig = theta[idx]
        theta[idx] = orig + step
        up = f()
        theta[idx] = orig - step
        down = f()
        theta[idx] = orig
        grad[idx] = (up - down) / (2 * step)
    return grad


class TestPerceptualForward:
    def test_zero_W_uniform(self, rng):
        net = ch.PerceptualNetwork(rng.normal(size=(4, 6)), np.zeros((6, 7)))
        np.testing.assert_allclose(net.forward(rng.normal(size=4)), np.full(7, 1 / 7))

    def test_zero_input_uniform(self, rng):
        net = random_net(rng, nx=13)
        np.testing.assert_allclose(net.forward(np.zeros(3)), np.full(13, 1 / 13), atol=1e-15)

    def test_matches_naive(self, rng):
        net = random_net(rng, d=4, h=20, nx=13)
        xi = rng.normal(size=4)
        p = ch.perceptual_forward(net, xi)
        assert abs(p.sum() - 1) < 1e-12
        np.testing.assert_allclose(p, naive_forward(net.V, net.W, xi), atol=1e-10, rtol=0)

    def test_large_logits_finite(self, rng):
        net = random_net(rng, scale=400.0)
        p = net.forward(rng.normal(size=3))
        assert np.all(np.isfinite(p)) and abs(p.sum() - 1) < 1e-12

    def test_dimension_mismatch(self, rng):
        with pytest.raises(ValueError):
            random_net(rng).forward(np.zeros(5))
        with pytest.raises(ValueError):
            ch.PerceptualNetwork(np.zeros((3, 4)), np.zeros((5, 2)))

    def test_batch_forward(self, rng):
        net = random_net(rng)
        xs = rng.normal(size=(6, 3))
        table = ch.perceptual_table(net, xs)
        for k in range(6):
            np.testing.assert_allclose(table[k], net.forward(xs[k]))


class TestPerceptualGradients:
    def test_zero_input_gives_zero(self, rng):
        net = random_net(rng)
        assert not ch.grad_log_perceptual_V(net, np.zeros(3), 2).any()
        assert not ch.grad_log_perceptual_W(net, np.zeros(3), 2).any()

    def test_single_percept_zero_V(self, rng):
        net = random_net(rng, nx=1)
        np.testing.assert_allclose(ch.grad_log_perceptual_V(net, rng.normal(size=3), 0), 0.0, atol=1e-15)

    def test_W_uniform_two_percepts(self, rng):
        net = ch.PerceptualNetwork(rng.normal(size=(3, 4)), np.zeros((4, 2)))
        xi = rng.normal(size=3)
        g = ch.grad_log_perceptual_W(net, xi, 1)
        np.testing.assert_allclose(g[:, 1], 0.5 * np.tanh(xi @ net.V), atol=1e-15)
        np.testing.assert_allclose(g[:, 0], -0.5 * np.tanh(xi @ net.V), atol=1e-15)

    @pytest.mark.parametrize("i", range(5))
    def test_finite_differences(self, rng, i):
        net = random_net(rng)
        xi = rng.normal(size=3)
        fd_V = central_diff(lambda: log_perceptual(net, xi, i), net.V)
        fd_W = central_diff(lambda: log_perceptual(net, xi, i), net.W)
        assert np.abs(ch.grad_log_perceptual_V(net, xi, i) - fd_V).max() < 1e-6
        assert np.abs(ch.grad_log_perceptual_W(net, xi, i) - fd_W).max() < 1e-6


class TestActionChannel:
    def test_zero_eta_uniform(self):
        c = ch.ActionChannel(np.zeros((3, 2)))
        np.testing.assert_allclose(ch.action_prob(c, 1), np.full(4, 0.25), atol=1e-15)
        assert c.log_partition(0) == pytest.approx(np.log(4))

    def test_saturation_limit(self):
        t = 800.0
        c = ch.ActionChannel(np.array([[t], [-t], [-t]]))
        p = ch.action_prob(c, 0)
        assert p[1] == pytest.approx(1.0, abs=1e-12)
        assert np.all(np.isfinite(p)) and p[0] == pytest.approx(0.0, abs=1e-12)

    def test_matches_naive(self, rng):
        c = ch.ActionChannel(rng.normal(size=(12, 5)))
        for x in range(5):
            p = ch.action_prob(c, x)
            logits = np.concatenate([[0.0], c.eta[:, x]])
            naive = np.exp(logits) / np.exp(logits).sum()
            assert abs(p.sum() - 1) < 1e-12
            np.testing.assert_allclose(p, naive, atol=1e-10, rtol=0)
            np.testing.assert_allclose(c.table()[x], p, atol=1e-15)

    def test_psi_finite_for_large_eta(self):
        c = ch.ActionChannel(np.array([[1e4, -1e4]]))
        assert np.isfinite(c.log_partition(0)) and np.isfinite(c.log_partition(1))

    def test_grad_examples(self):
        c = ch.ActionChannel(np.zeros((3, 1)))
        np.testing.assert_allclose(ch.grad_log_action_eta(c, 0, 0), [-0.25, -0.25, -0.25])
        np.testing.assert_allclose(ch.grad_log_action_eta(c, 0, 2), [-0.25, 0.75, -0.25])

    def test_grad_finite_differences(self, rng):
        c = ch.ActionChannel(rng.normal(size=(4, 3)))
        for x in range(3):
            for a in range(5):
                fd = central_diff(lambda: np.log(ch.action_prob(c, x)[a]), c.eta)
                analytic = np.zeros_like(c.eta)
                analytic[:, x] = ch.grad_log_action_eta(c, x, a)
                assert np.abs(analytic - fd).max() < 1e-6


class TestInit:
    def test_uniform_actions(self):
        c = ch.init_uniform_actions(13, 4)
        np.testing.assert_allclose(c.table(), np.full((4, 13), 1 / 13))

    def test_glorot_bounds(self):
        rng = np.random.default_rng(0)
        net = ch.init_glorot(100, 50, 200, rng)  # 5000 + 10000 samples
        assert np.abs(net.V).max() <= ch.glorot_bound(100, 50)
        assert np.abs(net.W).max() <= ch.glorot_bound(50, 200)
        assert np.abs(net.V).max() > 0.95 * ch.glorot_bound(100, 50)

    def test_seeded(self):
        a = ch.init_glorot(4, 20, 13, np.random.default_rng(5))
        b = ch.init_glorot(4, 20, 13, np.random.default_rng(5))
        assert np.array_equal(a.V, b.V) and np.array_equal(a.W, b.W)


class TestSampling:
    def test_inverse_cdf(self):
        p = np.array([0.2, 0.0, 0.5, 0.3])
        assert ch.sample_index(p, 0.0) == 0
        assert ch.sample_index(p, 0.19) == 0
        assert ch.sample_index(p, 0.2) == 2
        assert ch.sample_index(p, 0.999999) == 3

    def test_never_picks_zero_mass(self, rng):
        p = np.array([0.0, 0.4, 0.0, 0.6, 0.0])
        picks = {ch.sample_index(p, u) for u in rng.random(2000)}
        assert picks == {1, 3}


class TestSnapshot:
    def test_round_trip(self, rng):
        net = random_net(rng, d=4, h=3, nx=5)
        c = ch.ActionChannel(rng.normal(size=(6, 5)))
        net2, c2 = ch.load_parameters(ch.dump_parameters(net, c))
        # 17 significant digits round-trip exactly
        assert np.array_equal(net.V, net2.V) and np.array_equal(net.W, net2.W)
        assert np.array_equal(c.eta, c2.eta)

    def test_bad_header(self):
        with pytest.raises(ValueError):
            ch.load_parameters("V\n1 2\n")


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), nx=st.integers(1, 13), na=st.integers(1, 13))
def test_score_identities(seed, nx, na):
    rng = np.random.default_rng(seed)
    net = ch.PerceptualNetwork(rng.normal(size=(4, 6)), rng.normal(size=(6, nx)))
    xi = rng.normal(size=4)
    p = net.forward(xi)
    assert abs(p.sum() - 1) < 1e-12
    eV = sum(p[i] * ch.grad_log_perceptual_V(net, xi, i) for i in range(nx))
    eW = sum(p[i] * ch.grad_log_perceptual_W(net, xi, i) for i in range(nx))
    assert np.abs(eV).max() < 1e-9 and np.abs(eW).max() < 1e-9

    c = ch.ActionChannel(rng.normal(size=(na - 1, nx)))
    for x in range(nx):
        q = ch.action_prob(c, x)
        assert abs(q.sum() - 1) < 1e-12
        if na > 1:
            score = sum(q[a] * ch.grad_log_action_eta(c, x, a) for a in range(na))
            assert np.abs(score).max() < 1e-12
