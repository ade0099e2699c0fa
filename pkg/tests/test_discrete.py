import copy

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from icf import rng as rngs
from icf.discrete import (DiscreteTrainer, SelectivityMode, TrainConfig, reinforce_loss, selectivity,
                          selectivity_all, selectivity_graph)
from icf.envs import EnvConfig, make_world
from icf.gradcore import Parameter, Tensor, backward, ops

ABS = SelectivityMode("absolute")
DIR = SelectivityMode("directed")
H0 = np.zeros(4)


# --------------------------------------------------------------- selectivity

def test_single_feature_change_is_fully_selective():
    assert selectivity(H0, [0.5, 0, 0, 0], 0, ABS) == pytest.approx(1.0, abs=1e-7)


def test_equal_two_way_split():
    assert selectivity(H0, [0.3, 0.3, 0, 0], 0, ABS) == pytest.approx(0.5, abs=1e-7)


def test_directed_ignores_decrease():
    assert selectivity(H0, [-0.2, 0.2, 0, 0], 0, DIR) == 0.0
    assert selectivity(H0, [-0.2, 0.2, 0, 0], 1, DIR) == pytest.approx(0.5, abs=1e-7)


def test_no_change_gives_zero():
    assert np.all(selectivity_all(H0, H0, ABS) == 0.0)


def test_log_variants():
    h1 = np.array([0.3, 0.1, 0, 0])
    assert selectivity(H0, h1, 0, SelectivityMode("log", log_numerator="absolute")) == pytest.approx(np.log(0.75))
    assert selectivity(H0, h1, 0, SelectivityMode("sharpened-log", log_numerator="absolute")) == pytest.approx(
        np.log(3.0))


def test_bad_mode_and_index():
    with pytest.raises(ValueError):
        SelectivityMode("signed")
    with pytest.raises(IndexError):
        selectivity(H0, H0, 4)


vec4 = st.lists(st.floats(-1, 1), min_size=4, max_size=4)


@settings(max_examples=200, deadline=None)
@given(vec4, vec4)
def test_partition_of_unity(h, h1):
    h, h1 = np.array(h), np.array(h1)
    total = np.abs(h1 - h).sum()
    sel_sum = selectivity_all(h, h1, ABS).sum()
    # exactly S / (S + eps); within 1e-5 of one once S > 1e5 * eps
    assert sel_sum == pytest.approx(total / (total + ABS.eps), abs=1e-12)
    if total > 1e5 * ABS.eps:
        assert abs(sel_sum - 1.0) < 1e-5


@settings(max_examples=100, deadline=None)
@given(vec4, vec4, st.floats(0.01, 100))
def test_scale_invariance(h, h1, c):
    h, h1 = np.array(h), np.array(h1)
    if min(1.0, c) * np.abs(h1 - h).sum() < 1e-2:
        return
    np.testing.assert_allclose(selectivity_all(h, h1, ABS), selectivity_all(h, h + c * (h1 - h), ABS),
                               atol=1e-5)  # exact up to the eps guard


@pytest.mark.parametrize("variant", ["absolute", "directed", "log", "sharpened-log"])
def test_graph_matches_numpy(variant):
    mode = SelectivityMode(variant, log_numerator="absolute")
    rng = np.random.default_rng(0)
    delta = rng.normal(size=(4, 6, 4))
    out = selectivity_graph(Tensor(delta), np.eye(4)[:, None, :], mode).data
    for k in range(4):
        np.testing.assert_allclose(out[k], selectivity(np.zeros(4), delta[k], k, mode), rtol=1e-6, atol=1e-9)


# ------------------------------------------------------------ reconstruction

def square_trainer(seed=0, **kw):
    world = make_world(EnvConfig(kind="square", seed=seed))
    cfg = TrainConfig(**{"batch": 8, **kw})
    return DiscreteTrainer(world, cfg, seed=seed)


def test_reconstruction_loss_matches_scalar_loop():
    tr = square_trainer()
    rng = np.random.default_rng(1)
    x = rng.random((3, 1, 12, 12)).astype(np.float32)
    got = float(tr.model.reconstruction_loss(x).data)
    recon = tr.model.decode(tr.model.encode(Tensor(x))[0]).data
    total = 0.0
    for b in range(3):
        s = 0.0
        for i in range(12):
            for j in range(12):
                s += 0.5 * (float(x[b, 0, i, j]) - float(recon[b, 0, i, j])) ** 2
        total += s
    assert got == pytest.approx(total / 3, rel=1e-6)


def test_reconstruction_loss_trivial_cases():
    assert float(ops.mse(Tensor(np.zeros((2, 1, 3, 3))), Tensor(np.zeros((2, 1, 3, 3)))).data) == 0.0
    x = np.random.default_rng(0).random((2, 3))
    assert float(ops.mse(Tensor(x), Tensor(x)).data) == 0.0
    with pytest.raises(ValueError):
        square_trainer().model.reconstruction_loss(np.zeros((1, 1, 8, 8)))


# ----------------------------------------------------------------- REINFORCE

def test_centered_reward_gives_zero_gradient():
    theta = Parameter("theta", np.random.default_rng(0).normal(size=(1, 4)))
    backward(reinforce_loss(ops.log_softmax(theta), np.array([2]), np.array([0.7]), 0.7))
    assert np.all(theta.grad == 0)


def test_zero_probability_action_rejected():
    logits = Tensor(np.array([[0.0, -np.inf, 0.0, 0.0]]))
    with pytest.raises(ValueError, match="zero probability"):
        reinforce_loss(ops.log_softmax(logits), np.array([1]), np.array([1.0]), 0.0)


@pytest.mark.parametrize("seed", range(5))
def test_reinforce_matches_exact_enumeration(seed):
    """sum_a pi(a) * estimator(a) equals grad_theta sum_a pi(a) sel(a) on 4 actions."""
    rng = np.random.default_rng(seed)
    hid = rng.normal(size=(1, 5))
    w0 = rng.normal(size=(5, 4))
    sel = rng.random(4)
    b = 0.3

    theta = Parameter("theta", w0.copy())
    probs = np.exp(ops.log_softmax(ops.matmul(Tensor(hid), theta)).data[0])
    estimate = np.zeros_like(w0)
    for a in range(4):
        theta.zero_grad()
        lp = ops.log_softmax(ops.matmul(Tensor(hid), theta))
        backward(reinforce_loss(lp, np.array([a]), np.array([sel[a]]), b))
        estimate += probs[a] * -theta.grad  # the surrogate is minimized

    exact_theta = Parameter("theta", w0.copy())
    pi = ops.softmax(ops.matmul(Tensor(hid), exact_theta))
    backward(ops.sum(ops.mul(pi, Tensor(sel[None]))))
    np.testing.assert_allclose(estimate, exact_theta.grad, atol=1e-5)


def test_baseline_shift_leaves_expected_gradient_unchanged():
    rng = np.random.default_rng(7)
    n, c = 100_000, 0.8
    logits = rng.normal(size=4)
    p = np.exp(logits - logits.max())
    p /= p.sum()
    actions = rng.choice(4, size=n, p=p)
    rewards = rng.random(n)

    def grad(b):
        theta = Parameter("theta", np.tile(logits, (n, 1)))
        backward(reinforce_loss(ops.log_softmax(theta), actions, rewards, b))
        return theta.grad.sum(axis=0)  # per-logit gradient summed over the batch = batch mean

    diff = grad(0.2 + c) - grad(0.2)
    # per-sample difference is c * (onehot(a) - p); its mean has standard error sd / sqrt(n)
    per_sample = c * (np.eye(4)[actions] - p)
    se = per_sample.std(axis=0) / np.sqrt(n)
    assert np.all(np.abs(diff) <= 3 * se + 1e-12)


# ---------------------------------------------------------------- train_step

def test_zero_learning_rates_leave_parameters_unchanged():
    tr = square_trainer(lr_f=0.0, lr_g=0.0, lr_k=0.0)
    before = {k: v.data.copy() for k, v in tr.params.items()}
    tr.train(3)
    for k, v in tr.params.items():
        np.testing.assert_array_equal(v.data, before[k])


def test_lambda_zero_autoencoder_trajectory_is_plain_autoencoder():
    a = square_trainer(lam=0.0, lr_f=1e-3, lr_g=1e-3, lr_k=1e-3)
    b = square_trainer(lam=0.0, selectivity=False, lr_f=1e-3, lr_g=1e-3)
    a.train(5)
    b.train(5)
    for name, p in a.params.items():
        if name.startswith("ae."):
            np.testing.assert_array_equal(p.data, b.params[name].data, err_msg=name)
    assert not np.array_equal(a.params["policy.head.weight"].data, b.params["policy.head.weight"].data)


def test_lambda_zero_policy_gradient_is_reinforce():
    tr = square_trainer(lam=0.0)
    tr.train(2)
    twin = copy.deepcopy(tr)
    tr.train_step()
    K, B, world = twin.n_features, twin.config.batch, twin.world

    # replay the step with independent pieces: numpy selectivity as the reward
    states = world.sample(B, twin.rngs["states"])
    h, hid = twin.model.encode(Tensor(world.render(states)))
    theta = twin.model.policy.head.weight
    theta.zero_grad()
    lp = twin.model.policy.log_probs(hid.detach())
    actions = rngs.categorical(twin.rngs["actions"], np.exp(lp.data))
    nxt = world.transition(np.tile(states, (K, 1, 1)), actions.reshape(B, K).T.ravel(), twin.rngs["env"])
    h_next = twin.model.features(world.render(nxt)).reshape(K, B, K)
    sel = np.stack([selectivity(h.data, h_next[k], k, twin.config.mode) for k in range(K)])  # [K, B]
    backward(ops.mul(reinforce_loss(lp, actions, sel.T.ravel(), np.tile(twin.baseline, B)), float(K)))
    np.testing.assert_allclose(tr.params["policy.head.weight"].grad, theta.grad, rtol=1e-5, atol=1e-7)
    # and the encoder saw reconstruction gradients only
    enc = tr.params["ae.enc_out.weight"].grad
    ref = copy.deepcopy(twin)
    ref.config.selectivity = False
    ref.model.zero_grad()
    backward(ref.model.reconstruction_loss(world.render(states)))
    np.testing.assert_allclose(enc, ref.params["ae.enc_out.weight"].grad, rtol=1e-5, atol=1e-7)


def test_policy_rows_stay_distributions():
    tr = square_trainer(lr_k=1e-2)
    tr.train(10)
    p = tr.model.action_probs(tr.world.render(tr.world.sample(20, np.random.default_rng(0))))
    np.testing.assert_allclose(p.sum(axis=-1), 1.0, atol=1e-6)
    assert p.min() >= 0


def test_metrics_record():
    m = square_trainer().train_step()
    assert set(m) >= {"step", "recon_loss", "sel_mean", "sel_0", "sel_3"}
    assert m["step"] == 1 and np.isfinite(m["recon_loss"])


def test_selectivity_only_leaves_decoder_untouched():
    world = make_world(EnvConfig(kind="two-sprite"))
    tr = DiscreteTrainer(world, TrainConfig(reconstruction=False, batch=4, lr_f=1e-3, lr_g=1e-3), n_features=8)
    dec = {k: v.data.copy() for k, v in tr.params.items() if k.startswith("ae.dec_")}
    enc = tr.params["ae.enc_conv1.weight"].data.copy()
    tr.train(4)
    for k, v in dec.items():
        np.testing.assert_array_equal(tr.params[k].data, v)
    assert not np.array_equal(tr.params["ae.enc_conv1.weight"].data, enc)


def test_encoder_gradient_nonzero_when_selectivity_below_one():
    world = make_world(EnvConfig(kind="two-sprite"))
    tr = DiscreteTrainer(world, TrainConfig(reconstruction=False, batch=4), n_features=8)
    m = tr.train_step()
    assert m["sel_mean"] < 1.0
    assert np.abs(tr.params["ae.enc_conv1.weight"].grad).sum() > 0
    assert np.abs(tr.params["ae.enc_out.weight"].grad).sum() > 0


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(lam=-1)
    with pytest.raises(ValueError):
        TrainConfig(lr_k=-1e-3)
    assert TrainConfig(mode="absolute").mode.variant == "absolute"
