import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ganlab.autodiff import MlpParams, grad_input, gradcheck, unflatten
from ganlab import autodiff as ad
from ganlab.errors import ConfigurationError, InvalidInputError, TooLargeError
from ganlab.gan2d import (
    ArchSpec,
    Dataset2D,
    EquilibriumArch,
    Nets,
    TrainConfig,
    construct_equilibrium,
    discriminator_gradient,
    init_state,
    penalty,
    sample_data,
    train,
    training_step,
    verify_equilibrium_jacobian,
)


def tiny_cfg(**kw):
    base = dict(
        generator=ArchSpec(8),
        discriminator=ArchSpec(8),
        latent_dim=4,
        batch_size=16,
        iterations=20,
        eval_every=10,
        eval_samples=32,
        final_window=10,
    )
    base.update(kw)
    return TrainConfig(**base)


# --- data ---------------------------------------------------------------------


def test_gaussian_mean():
    x = sample_data(Dataset2D("gaussian"), 10_000)
    assert np.all(np.abs(x.mean(axis=0)) < 0.05)
    assert np.all(np.abs(x.std(axis=0) - 1) < 0.05)


def test_circle_radii():
    d = Dataset2D("circle", center=(1.0, -2.0), scale=1.5)
    x = sample_data(d, 500)
    assert np.all(np.abs(np.linalg.norm(x - [1.0, -2.0], axis=1) - 1.5) <= 1e-12)
    x = sample_data(Dataset2D("circle"), 5)
    assert np.all(np.abs(np.linalg.norm(x, axis=1) - 1.0) <= 1e-12)


def test_line_segment():
    x = sample_data(Dataset2D("line-segment", start=(0, 0), end=(1, 0)), 100)
    assert np.all(x[:, 1] == 0) and np.all((0 <= x[:, 0]) & (x[:, 0] <= 1))


def test_four_lines_uses_every_segment():
    x = sample_data(Dataset2D("four-lines"), 2000)
    ys, counts = np.unique(x[:, 1], return_counts=True)
    assert ys.tolist() == [-1.5, -0.5, 0.5, 1.5]
    assert counts.min() > 400
    assert np.all(np.abs(x[:, 0]) <= 1)


@pytest.mark.parametrize("kind", ["gaussian", "line-segment", "circle", "four-lines"])
def test_sampling_deterministic(kind):
    a = sample_data(Dataset2D(kind, seed=3), 50)
    b = sample_data(Dataset2D(kind, seed=3), 50)
    c = sample_data(Dataset2D(kind, seed=4), 50)
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_dataset_validation():
    with pytest.raises(ConfigurationError):
        Dataset2D("spiral")
    with pytest.raises(ConfigurationError):
        Dataset2D("circle", scale=0.0)
    with pytest.raises(InvalidInputError):
        sample_data(Dataset2D(), 0)


# --- penalties ----------------------------------------------------------------


def random_disc(seed, activation="tanh", sizes=(2, 6, 6, 1)):
    return MlpParams.init(list(sizes), activation, seed)


def test_r1_zero_output_discriminator():
    disc = random_disc(0).with_zero_output_layer()
    real = np.random.default_rng(0).normal(size=(8, 2))
    value, g = penalty("r1", disc, real, real, gamma=10.0)
    assert value == 0.0
    assert np.all(g[-disc.layers[-1][0].size - 1 :] == 0.0)


def test_r1_linear_discriminator():
    w = np.array([[0.7, -1.2]])
    disc = MlpParams(((w, [0.3]),))
    rng = np.random.default_rng(1)
    value, g = penalty("r1", disc, rng.normal(size=(5, 2)), rng.normal(size=(7, 2)), gamma=2.0)
    assert value == pytest.approx(np.sum(w * w), rel=1e-15)
    np.testing.assert_allclose(g, [1.4, -2.4, 0.0], rtol=1e-15)


def test_wgangp_unit_norm_linear_discriminator():
    disc = MlpParams(((np.array([[0.6, 0.8]]), [0.0]),))
    rng = np.random.default_rng(2)
    value, g = penalty("wgangp", disc, rng.normal(size=(6, 2)), rng.normal(size=(6, 2)), gamma=10.0, g0=1.0, rng=0)
    assert value == pytest.approx(0.0, abs=1e-15)
    assert np.all(np.abs(g) <= 1e-14)


def test_penalty_batch_errors():
    disc = random_disc(0)
    with pytest.raises(InvalidInputError):
        penalty("r1", disc, np.zeros((0, 2)), np.zeros((3, 2)), 1.0)
    with pytest.raises(InvalidInputError):
        penalty("wgangp", disc, np.zeros((2, 2)), np.zeros((3, 2)), 1.0)
    with pytest.raises(InvalidInputError):
        penalty("r3", disc, np.zeros((2, 2)), np.zeros((2, 2)), 1.0)


def test_r1_ignores_fake_and_r2_ignores_real():
    disc = random_disc(3)
    rng = np.random.default_rng(3)
    real, fake, other = rng.normal(size=(3, 8, 2))
    v1, g1 = penalty("r1", disc, real, fake, 3.0)
    v2, g2 = penalty("r1", disc, real, other, 3.0)
    assert v1 == v2 and np.array_equal(g1, g2)
    v1, g1 = penalty("r2", disc, real, fake, 3.0)
    v2, g2 = penalty("r2", disc, other, fake, 3.0)
    assert v1 == v2 and np.array_equal(g1, g2)


def penalty_value(kind, disc, real, fake, gamma, g0, t):
    """The penalty as a plain function of the flat parameter vector."""

    def fn(vec):
        if isinstance(vec, ad.Node):
            raise TypeError
        p = disc.from_flat(vec)
        if kind == "r1":
            pts = real
        elif kind == "r2":
            pts = fake
        else:
            pts = t * real + (1 - t) * fake
        sq = np.sum(grad_input(p, pts) ** 2, axis=1)
        if kind == "wgangp":
            return gamma / 2 * np.mean((np.sqrt(sq) - g0) ** 2)
        return gamma / 2 * np.mean(sq)

    return fn


def fd_grad(fn, x, eps=1e-5):
    out = np.zeros_like(x)
    for i in range(x.size):
        h = eps * max(1.0, abs(x[i]))
        u, d = x.copy(), x.copy()
        u[i] += h
        d[i] -= h
        out[i] = (fn(u) - fn(d)) / (2 * h)
    return out


@pytest.mark.parametrize("kind", ["r1", "r2", "wgangp"])
def test_penalty_gradients_match_fd(kind):
    rng = np.random.default_rng(4)
    worst = 0.0
    for seed in range(10):
        disc = random_disc(seed)
        real, fake = rng.normal(size=(2, 6, 2))
        t = rng.uniform(size=(6, 1))
        value, g = penalty(kind, disc, real, fake, 3.0, 1.0, t=t)
        fn = penalty_value(kind, disc, real, fake, 3.0, 1.0, t)
        assert value == pytest.approx(fn(disc.flatten()), rel=1e-12)
        fd = fd_grad(fn, disc.flatten())
        worst = max(worst, np.max(np.abs(g - fd) / np.maximum(1.0, np.abs(fd))))
    assert worst <= 1e-3


# --- config ---------------------------------------------------------------------


@pytest.mark.parametrize(
    "kw",
    [
        dict(method="wgan"),
        dict(method="r1", gamma=0.0),
        dict(n_d=0),
        dict(lr=-1.0),
        dict(optimizer="adam"),
        dict(generator=ArchSpec(12)),
        dict(discriminator=ArchSpec(16, depth=3)),
        dict(batch_size=0),
    ],
)
def test_config_validation(kw):
    with pytest.raises(ConfigurationError):
        TrainConfig(**kw)


def test_config_defaults_follow_desk_protocol():
    cfg = TrainConfig()
    assert (cfg.iterations, cfg.eval_every, cfg.eval_samples, cfg.final_window) == (10_000, 500, 512, 2000)
    assert cfg.latent_dim == 16
    assert TrainConfig(method="wgangp", gamma=10.0).loss_kind == "linear"


# --- training steps ---------------------------------------------------------------


def test_zero_lr_leaves_parameters_unchanged():
    cfg = tiny_cfg(lr=0.0, optimizer="sgd")
    s0 = init_state(cfg)
    s1, stats = training_step(s0, cfg, 0)
    assert np.array_equal(s0.gen, s1.gen) and np.array_equal(s0.disc, s1.disc)
    assert np.isfinite(stats.d_loss)
    cfg = tiny_cfg(lr=0.0, optimizer="rmsprop", method="wgangp", n_d=5)
    s0 = init_state(cfg)
    s1, _ = training_step(s0, cfg, 0)
    assert np.array_equal(s0.gen, s1.gen) and np.array_equal(s0.disc, s1.disc)


def test_sgd_descends_discriminator_loss_on_frozen_batch():
    cfg = tiny_cfg(method="unregularized", optimizer="sgd", lr=1e-4)
    nets = Nets.from_config(cfg)
    s = init_state(cfg)
    rng = np.random.default_rng(5)
    real = sample_data(cfg.dataset, 32, rng)
    z = rng.normal(size=(32, cfg.latent_dim))
    disc = s.disc
    losses = []
    for _ in range(10):
        loss, _, g = discriminator_gradient(nets, cfg, s.gen, disc, real, z)
        losses.append(loss)
        disc = disc - cfg.lr * g
    assert all(b < a for a, b in zip(losses, losses[1:]))


def test_r1_gradient_is_sum_of_parts():
    cfg = tiny_cfg(method="r1", gamma=3.0)
    nets = Nets.from_config(cfg)
    s = init_state(cfg)
    rng = np.random.default_rng(6)
    real = sample_data(cfg.dataset, 16, rng)
    z = rng.normal(size=(16, cfg.latent_dim))
    _, _, g_r1 = discriminator_gradient(nets, cfg, s.gen, s.disc, real, z)
    _, _, g_plain = discriminator_gradient(nets, cfg, s.gen, s.disc, real, z, method="unregularized")
    disc = MlpParams(tuple(zip(*[iter(unflatten(s.disc, nets.disc_shapes))] * 2)), cfg.discriminator.activation)
    _, g_pen = penalty("r1", disc, real, nets.generate(s.gen, z), 3.0)
    np.testing.assert_allclose(g_r1, g_plain + g_pen, rtol=0, atol=1e-12)


def test_gamma_zero_regularized_step_equals_unregularized():
    plain = tiny_cfg(method="unregularized")
    r1 = tiny_cfg(method="r1", gamma=1.0)
    object.__setattr__(r1, "gamma", 0.0)
    r2 = tiny_cfg(method="r2", gamma=1.0)
    object.__setattr__(r2, "gamma", 0.0)
    s0 = init_state(plain)
    a, _ = training_step(s0, plain, 0)
    for cfg in (r1, r2):
        b, _ = training_step(s0, cfg, 0)
        assert np.array_equal(a.disc, b.disc) and np.array_equal(a.gen, b.gen)


def test_wgangp_runs_nd_discriminator_updates():
    cfg1 = tiny_cfg(method="wgangp", gamma=10.0, n_d=1, optimizer="sgd", lr=1e-2)
    cfg5 = tiny_cfg(method="wgangp", gamma=10.0, n_d=5, optimizer="sgd", lr=1e-2)
    s0 = init_state(cfg1)
    a, _ = training_step(s0, cfg1, 0)
    b, _ = training_step(s0, cfg5, 0)
    assert not np.array_equal(a.disc, b.disc)


def test_divergence_freezes_state():
    cfg = tiny_cfg(method="unregularized", optimizer="sgd", lr=1e300)
    s = init_state(cfg)
    for it in range(5):
        s_next, _ = training_step(s, cfg, it)
        if s_next.diverged:
            break
        s = s_next
    assert s_next.diverged
    assert np.array_equal(s_next.gen, s.gen) and np.array_equal(s_next.disc, s.disc)
    again, _ = training_step(s_next, cfg, 99)
    assert again is s_next


# --- train ------------------------------------------------------------------------


def test_train_zero_iterations():
    rep = train(tiny_cfg(iterations=0))
    assert rep.w1_curve == [] and rep.diverged is False and rep.final_w1 is None


def test_train_is_deterministic_and_curve_well_formed():
    cfg = tiny_cfg(iterations=25)
    a, b = train(cfg), train(cfg)
    assert a.w1_curve == b.w1_curve and a.final_w1 == b.final_w1
    its = [i for i, _ in a.w1_curve]
    assert its == [10, 20, 25]
    assert all(w >= 0 for _, w in a.w1_curve)
    assert a.final_w1 == pytest.approx(np.mean([w for i, w in a.w1_curve if i > 15]))


def test_train_reports_divergence():
    rep = train(tiny_cfg(method="unregularized", optimizer="sgd", lr=1e300))
    assert rep.diverged and rep.final_w1 is None


def test_train_seed_changes_result():
    assert train(tiny_cfg(seed=1)).w1_curve != train(tiny_cfg(seed=2)).w1_curve


# --- equilibrium structure --------------------------------------------------------


def test_equilibrium_tiny_tanh():
    rep = verify_equilibrium_jacobian(EquilibriumArch(), n=64, seed=0)
    assert rep.passed, rep.discrepancies
    assert np.abs(rep.K_DD_formula).max() > 0.1  # the check is not vacuous
    assert np.abs(rep.K_DG_formula).max() > 1e-3
    assert np.abs(rep.L_DD_formula).max() > 1e-3


def test_equilibrium_gamma_zero():
    rep = verify_equilibrium_jacobian(EquilibriumArch(), n=16, seed=1, gamma=0.0)
    assert np.all(rep.L_DD_fd == 0.0) and np.all(rep.L_DD_formula == 0.0)


def test_equilibrium_refuses_nonzero_output_layer():
    eq = construct_equilibrium(EquilibriumArch(), n=8, seed=2)
    eq.disc = MlpParams.init(EquilibriumArch().disc_sizes(), "tanh", 3)
    with pytest.raises(InvalidInputError, match="not zero"):
        verify_equilibrium_jacobian(equilibrium=eq)


def test_equilibrium_refuses_mismatched_data():
    eq = construct_equilibrium(EquilibriumArch(), n=8, seed=2)
    eq.data = eq.data + 1.0
    with pytest.raises(InvalidInputError):
        verify_equilibrium_jacobian(equilibrium=eq)


def test_equilibrium_parameter_budget():
    with pytest.raises(TooLargeError):
        verify_equilibrium_jacobian(EquilibriumArch(gen_hidden=8, disc_hidden=8), n=4)


def test_equilibrium_random_architectures():
    rng = np.random.default_rng(7)
    for k in range(10):
        arch = EquilibriumArch(
            latent_dim=int(rng.integers(1, 4)),
            gen_hidden=int(rng.integers(2, 5)),
            disc_hidden=int(rng.integers(2, 5)),
            depth=int(rng.integers(2, 5)),
        )
        rep = verify_equilibrium_jacobian(arch, n=32, seed=k)
        assert rep.passed, (arch, rep.discrepancies)
