import numpy as np
import pytest
from scipy.linalg import expm

from diffsmib import mlp, node
from diffsmib.integrate import rk4_step
from diffsmib.smib import State
from diffsmib.trajectory import Trajectory

from conftest import central_fd_vec


def _zero_net(din=2):
    p = mlp.init(mlp.MlpConfig(din, 2, hidden=(4,)), seed=0)
    for W in p.weights:
        W[:] = 0.0
    return p


def test_zero_net_constant_rollout():
    model = node.NodeModel(_zero_net())
    traj = node.rollout(model, State(0.3, -0.4), None, 10, 0.02)
    assert np.all(traj.states == [0.3, -0.4])


def test_linear_net_matches_matrix_exponential():
    A = np.array([[0.0, 1.0], [-2.0, -0.3]])
    cfg = mlp.MlpConfig(2, 2, hidden=())
    p = mlp.init(cfg, seed=0)
    p.weights[0][:] = A  # weights are stored (n_out, n_in)
    p.biases[0][:] = 0.0
    model = node.NodeModel(p)
    x0 = np.array([1.0, 0.0])
    steps, dt = 100, 0.02
    traj = node.rollout(model, State(*x0), None, steps, dt)
    exact = expm(A * steps * dt) @ x0
    # RK4 local truncation error accumulates as O(dt^4)
    assert np.allclose(traj.states[-1], exact, atol=1e-7)


def test_single_step_equals_rk4_step():
    p = mlp.init(mlp.MlpConfig(2, 2, hidden=(6,)), seed=1)
    model = node.NodeModel(p)
    x0 = (0.2, -0.1)
    traj = node.rollout(model, State(*x0), None, 1, 0.02)
    ref = rk4_step(lambda t, x, u: tuple(mlp.forward(p, np.asarray(x))),
                   0.0, x0, 0.02)
    assert np.allclose(traj.states[-1], ref, atol=1e-12)


def test_segment_loss_zero_on_exact_match():
    preds = np.zeros((3, 4, 2))
    assert node.segment_loss(preds, preds) == 0.0


def test_segment_loss_constant_offset():
    rngl = np.random.default_rng(0)
    targets = rngl.standard_normal((5, 7, 2))
    eps = 0.3
    assert node.segment_loss(targets + eps, targets) == pytest.approx(
        2 * eps * eps, rel=1e-12)


def test_segment_loss_batch_permutation_invariant():
    rngl = np.random.default_rng(1)
    preds = rngl.standard_normal((4, 6, 2))
    targets = rngl.standard_normal((4, 6, 2))
    perm = rngl.permutation(6)
    assert node.segment_loss(preds[:, perm], targets[:, perm]) == \
        pytest.approx(node.segment_loss(preds, targets), rel=1e-12)


def test_rollout_vjp_matches_fd(rng):
    cfg = mlp.MlpConfig(2, 2, hidden=(5,))
    p = mlp.init(cfg, seed=2)
    X0 = rng.standard_normal((3, 2)) * 0.3
    targets = rng.standard_normal((3, 3, 2)) * 0.3

    def loss_of(flat):
        q = mlp.MlpParams.from_flat(cfg, flat)
        preds, _ = node.rollout_batch(q, X0, None, 3, 0.05)
        return node.segment_loss(preds, targets)

    loss, g = node.loss_and_grad(p, X0, None, targets, 0.05)
    assert loss == pytest.approx(loss_of(p.flatten()), rel=1e-12)
    fd = central_fd_vec(loss_of, p.flatten())
    assert np.allclose(g, fd, atol=2e-6)


def test_rollout_vjp_control_conditioned_matches_fd(rng):
    cfg = mlp.MlpConfig(3, 2, hidden=(5,))
    p = mlp.init(cfg, seed=3)
    X0 = rng.standard_normal((2, 2)) * 0.3
    U = np.array([[0.1], [0.4]])
    targets = rng.standard_normal((2, 2, 2)) * 0.3

    def loss_of(flat):
        q = mlp.MlpParams.from_flat(cfg, flat)
        preds, _ = node.rollout_batch(q, X0, U, 2, 0.05)
        return node.segment_loss(preds, targets)

    _, g = node.loss_and_grad(p, X0, U, targets, 0.05)
    fd = central_fd_vec(loss_of, p.flatten())
    assert np.allclose(g, fd, atol=2e-6)


def test_training_reduces_loss():
    grid_times = 0.02 * np.arange(51)
    states = np.column_stack([np.cos(grid_times), -np.sin(grid_times)])
    traj = Trajectory(grid_times, states)
    cfg = node.NodeTrainConfig(n_b=20, m=5, dt=0.02, epochs=100, lr=1e-2)
    res = node.train_node([(traj, None)], cfg, seed=0,
                          net_cfg=mlp.MlpConfig(2, 2, hidden=(16,)))
    assert res.loss_history[-1] < res.loss_history[0]


def test_control_conditioned_requires_three_inputs():
    traj = Trajectory(0.02 * np.arange(20), np.zeros((20, 2)))
    cfg = node.NodeTrainConfig(epochs=1, control_conditioned=True)
    with pytest.raises(ValueError):
        node.train_node([(traj, 0.1)], cfg, seed=0,
                        net_cfg=mlp.MlpConfig(2, 2, hidden=(4,)))


def test_linearize_zero_net():
    model = node.NodeModel(_zero_net(din=3))
    lm = node.node_linearize(model, State(0.6435, 0.0), 0.3)
    assert np.all(lm.A == 0.0) and np.all(lm.B == 0.0)


def test_linearize_rejects_autonomous_net():
    model = node.NodeModel(_zero_net())
    with pytest.raises(ValueError):
        node.node_linearize(model, State(0.0, 0.0), 0.0)


def test_model_validates_output_dim():
    with pytest.raises(ValueError):
        node.NodeModel(mlp.init(mlp.MlpConfig(2, 3, hidden=(4,)), seed=0))
