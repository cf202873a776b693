import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ganlab import autodiff as ad
from ganlab.autodiff import (
    MlpParams,
    Tape,
    forward,
    grad,
    grad_gradnorm_params,
    grad_input,
    grad_params,
    gradcheck,
    mlp_apply,
    record_forward,
    unflatten,
)
from ganlab.errors import InvalidInputError


def oracle_forward(p, x):
    """Independent loop-based evaluation of a net on one input vector."""
    h = [float(v) for v in x]
    for k, (w, b) in enumerate(p.layers):
        z = [sum(w[i][j] * h[j] for j in range(len(h))) + b[i] for i in range(len(b))]
        if k < len(p.layers) - 1:
            if p.activation == "tanh":
                z = [math.tanh(v) for v in z]
            else:
                z = [v if v >= 0 else 0.2 * v for v in z]
        h = z
    return np.array(h)


def min_preactivation(p, x):
    """Smallest |pre-activation| over hidden units (distance to a leaky-relu kink)."""
    h = np.atleast_2d(x)
    smallest = np.inf
    for w, b in p.layers[:-1]:
        z = h @ w.T + b
        smallest = min(smallest, np.min(np.abs(z)))
        h = np.where(z >= 0, z, 0.2 * z) if p.activation == "leaky_relu" else np.tanh(z)
    return smallest


def away_from_kinks(p, rng, n=None, margin=1e-2):
    """Normal inputs, redrawing any sample whose hidden pre-activations come within ``margin`` of 0."""
    rows = []
    while len(rows) < (n or 1):
        x = rng.normal(size=p.input_dim)
        if p.activation == "tanh" or min_preactivation(p, x) > margin:
            rows.append(x)
    return rows[0] if n is None else np.array(rows)


def random_net(seed, activation, sizes=(2, 8, 8, 8, 1)):
    return MlpParams.init(list(sizes), activation, np.random.default_rng(seed))


def single_tanh_unit():
    # one hidden tanh unit with w=1, b=0, then a linear output unit w=1, b=0
    return MlpParams((([[1.0]], [0.0]), ([[1.0]], [0.0])), "tanh")


# --- MlpParams ---------------------------------------------------------------


def test_flatten_order():
    p = MlpParams(((np.array([[1.0, 2.0], [3.0, 4.0]]), [5.0, 6.0]), ([[7.0, 8.0]], [9.0])))
    assert p.flatten().tolist() == [1, 2, 3, 4, 5, 6, 7, 8, 9]
    assert p.n_params == 9
    assert p.sizes == (2, 2, 1)
    q = p.from_flat(np.arange(9.0))
    assert q.layers[1][0].tolist() == [[6.0, 7.0]]


def test_init_bounds_and_determinism():
    p = MlpParams.init([3, 16, 1], "tanh", 7)
    q = MlpParams.init([3, 16, 1], "tanh", 7)
    assert np.array_equal(p.flatten(), q.flatten())
    w, b = p.layers[0]
    assert np.all(np.abs(w) <= 1 / math.sqrt(3)) and np.all(np.abs(b) <= 1 / math.sqrt(3))
    assert np.all(np.abs(p.layers[1][0]) <= 0.25)


@pytest.mark.parametrize(
    "layers",
    [
        (([[1.0, 2.0]], [0.0, 0.0]),),
        (([[1.0, 2.0]], [0.0]), ([[1.0, 2.0]], [0.0])),
        (([[np.nan]], [0.0]),),
    ],
)
def test_invalid_params(layers):
    with pytest.raises(InvalidInputError):
        MlpParams(layers)


def test_invalid_activation():
    with pytest.raises(InvalidInputError):
        MlpParams((([[1.0]], [0.0]),), "relu")


# --- forward ---------------------------------------------------------------


def test_forward_identity_layer():
    p = MlpParams(((np.eye(2), np.zeros(2)),), "tanh")
    assert forward(p, [2.0, 3.0]).tolist() == [2.0, 3.0]


def test_forward_tanh_at_zero():
    assert forward(single_tanh_unit(), [0.0]).tolist() == [0.0]


@pytest.mark.parametrize("activation", ["tanh", "leaky_relu"])
def test_forward_matches_oracle(activation):
    rng = np.random.default_rng(11)
    for seed in range(20):
        p = random_net(seed, activation, (3, 8, 16, 8, 2))
        x = rng.normal(size=3) * 2
        np.testing.assert_allclose(forward(p, x), oracle_forward(p, x), rtol=1e-12, atol=1e-12)


def test_forward_batch_rows_are_independent():
    p = random_net(0, "leaky_relu")
    x = np.random.default_rng(0).normal(size=(6, 2))
    batch = forward(p, x)
    for i in range(6):
        np.testing.assert_allclose(batch[i], forward(p, x[i]), rtol=1e-14)


def test_forward_shape_mismatch():
    with pytest.raises(InvalidInputError):
        forward(random_net(0, "tanh"), [1.0, 2.0, 3.0])


def test_empty_net_is_identity():
    p = MlpParams((), input_dim=2)
    assert p.n_params == 0
    rec = record_forward(p, [1.0, 2.0])
    assert grad_params(ad.sum(rec.out * rec.out), rec).shape == (0,)
    assert forward(p, [1.0, 2.0]).tolist() == [1.0, 2.0]


# --- tape --------------------------------------------------------------------


def test_tape_is_topological_and_replays_bitwise():
    p = random_net(3, "tanh")
    rec = record_forward(p, np.random.default_rng(3).normal(size=(4, 2)))
    ad.input_grad_sqnorm(rec)  # extends the tape with a backward pass
    for i, r in enumerate(rec.tape.records):
        assert all(j < i for j in r.parents)
    assert rec.tape.replay_matches()


def test_tape_determinism():
    def run():
        p = random_net(5, "leaky_relu")
        x = np.random.default_rng(5).normal(size=(8, 2))
        rec = record_forward(p, x)
        return rec.tape, grad_params(ad.input_grad_sqnorm(rec), rec)

    (t1, g1), (t2, g2) = run(), run()
    assert t1.digest() == t2.digest()
    assert np.array_equal(g1, g2)


def test_grad_requires_scalar_root():
    tape = Tape()
    v = tape.variable([1.0, 2.0])
    with pytest.raises(InvalidInputError):
        grad(v * v, [v])


def test_mixing_tapes_is_an_error():
    a, b = Tape().variable(1.0), Tape().variable(2.0)
    with pytest.raises(InvalidInputError):
        a + b


def test_unreached_target_has_zero_gradient():
    tape = Tape()
    a, b = tape.variable([1.0, 2.0]), tape.variable(3.0)
    (ga, gb) = grad(ad.sum(a * a), [a, b])
    assert ga.tolist() == [2.0, 4.0] and gb == 0.0


# --- first-order gradients --------------------------------------------------


def test_sum_of_squares_gradient_is_exact():
    p = random_net(1, "leaky_relu")
    rec = record_forward(p, [0.0, 0.0])
    obj = ad.sum(ad.tanh(rec.out) * 0.0)
    for w in rec.params:
        obj = obj + ad.sum(w * w)
    assert np.array_equal(grad_params(obj, rec), 2.0 * p.flatten())


def logistic_disc_loss(p, real, fake):
    def fn(vec):
        arrays = unflatten(vec, p.shapes())
        d_real = mlp_apply(arrays, real, p.activation)
        d_fake = mlp_apply(arrays, fake, p.activation)
        return -(ad.mean(ad.log_sigmoid(d_real)) + ad.mean(ad.log_sigmoid(-d_fake)))

    return fn


@pytest.mark.parametrize("activation", ["tanh", "leaky_relu"])
def test_gan_loss_gradcheck(activation):
    rng = np.random.default_rng(2)
    p = random_net(2, activation, (2, 16, 16, 16, 1))
    real = away_from_kinks(p, rng, 32)
    fake = away_from_kinks(p, rng, 32)
    fn = logistic_disc_loss(p, real, fake)
    assert gradcheck(fn, p.flatten(), eps=1e-4) <= 1e-4


def test_grad_params_matches_recorded_objective():
    rng = np.random.default_rng(8)
    p = random_net(8, "tanh")
    real, fake = rng.normal(size=(16, 2)), rng.normal(size=(16, 2))
    tape = Tape()
    params = [tape.variable(a) for a in p.arrays()]
    loss = -(ad.mean(ad.log_sigmoid(mlp_apply(params, real, "tanh"))) + ad.mean(ad.log_sigmoid(-mlp_apply(params, fake, "tanh"))))
    g = np.concatenate([np.ravel(x) for x in grad(loss, params)])
    via_flat = ad.Tape()
    vec = via_flat.variable(p.flatten())
    (g2,) = grad(logistic_disc_loss(p, real, fake)(vec), [vec])
    np.testing.assert_allclose(g, g2, rtol=1e-13, atol=1e-15)


@pytest.mark.parametrize("activation", ["tanh", "leaky_relu"])
def test_first_order_gradcheck_random_nets(activation):
    rng = np.random.default_rng(100)
    worst_p = worst_x = 0.0
    for seed in range(100):
        p = random_net(seed, activation, (2, 8, 8, 8, 1))
        x = away_from_kinks(p, rng, 3)
        shapes = p.shapes()
        worst_p = max(worst_p, gradcheck(lambda v: ad.sum(mlp_apply(unflatten(v, shapes), x, activation)), p.flatten(), 1e-4))
        arrays = p.arrays()
        worst_x = max(worst_x, gradcheck(lambda v: ad.sum(mlp_apply(arrays, v, activation)), x, 1e-4))
        # grad_input agrees with the generic gradient on the input leaf
        tape = Tape()
        leaf = tape.variable(x)
        (gx,) = grad(ad.sum(mlp_apply(arrays, leaf, activation)), [leaf])
        np.testing.assert_array_equal(grad_input(p, x), gx)
    assert worst_p <= 1e-4
    assert worst_x <= 1e-4


def test_grad_input_linear_net():
    w = np.array([[0.3, -1.7]])
    p = MlpParams(((w, [0.5]),))
    assert grad_input(p, [4.0, -2.0]).tolist() == [0.3, -1.7]


def test_grad_input_single_tanh_unit():
    assert grad_input(single_tanh_unit(), [0.0]).tolist() == [1.0]


def test_grad_input_kink_uses_positive_branch():
    # hidden pre-activation is exactly 0 at x = 0
    p = MlpParams((([[2.0]], [0.0]), ([[3.0]], [0.0])), "leaky_relu")
    assert grad_input(p, [0.0]).tolist() == [6.0]
    assert grad_input(p, [-1.0]).tolist() == [pytest.approx(6.0 * 0.2)]


def test_grad_input_needs_scalar_output():
    with pytest.raises(InvalidInputError):
        grad_input(random_net(0, "tanh", (2, 4, 3)), [0.0, 0.0])


@settings(max_examples=30, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 10_000))
def test_gradient_linearity(a, b, seed):
    rng = np.random.default_rng(seed)
    p = random_net(seed, "tanh")
    x = rng.normal(size=(4, 2))
    rec = record_forward(p, x)
    l1 = ad.sum(rec.out * rec.out)
    l2 = ad.sum(ad.log_sigmoid(rec.out))
    combined = grad_params(l1 * a + l2 * b, rec)
    separate = a * grad_params(l1, rec) + b * grad_params(l2, rec)
    np.testing.assert_allclose(combined, separate, rtol=0, atol=1e-12 * max(1.0, np.abs(separate).max()))


# --- second order ------------------------------------------------------------


def test_gradnorm_single_tanh_unit():
    g = grad_gradnorm_params(single_tanh_unit(), [0.0])
    # order: hidden w, hidden b, output w, output b
    assert g.tolist() == [2.0, 0.0, 2.0, 0.0]


def test_gradnorm_linear_net():
    w = np.array([[0.3, -1.7, 2.0]])
    p = MlpParams(((w, [0.1]),))
    g = grad_gradnorm_params(p, [1.0, 2.0, 3.0])
    assert g.tolist() == (2 * w.ravel()).tolist() + [0.0]


def fd_gradnorm(p, x, eps=1e-4):
    flat = p.flatten()
    out = np.zeros_like(flat)
    for i in range(flat.size):
        h = eps * max(1.0, abs(flat[i]))
        up, dn = flat.copy(), flat.copy()
        up[i] += h
        dn[i] -= h
        fu = np.sum(grad_input(p.from_flat(up), x) ** 2)
        fdn = np.sum(grad_input(p.from_flat(dn), x) ** 2)
        out[i] = (fu - fdn) / (2 * h)
    return out


def test_gradnorm_fd_random_tanh_nets():
    rng = np.random.default_rng(42)
    worst = 0.0
    for seed in range(100):
        p = random_net(seed, "tanh", (2, 6, 6, 6, 1))
        x = rng.normal(size=2)
        ad_g = grad_gradnorm_params(p, x)
        fd_g = fd_gradnorm(p, x)
        worst = max(worst, np.max(np.abs(ad_g - fd_g) / np.maximum(1.0, np.abs(fd_g))))
    assert worst <= 1e-4


def test_gradnorm_gradcheck_through_flat_vector():
    # the same quantity expressed entirely on the tape and checked with gradcheck
    p = random_net(9, "tanh")
    x = np.random.default_rng(9).normal(size=(5, 2))
    shapes = p.shapes()

    def sqnorm(vec):
        if not isinstance(vec, ad.Node):
            return np.sum(grad_input(p.from_flat(vec), x) ** 2)
        xn = vec.tape.variable(x)
        (gx,) = grad(ad.sum(mlp_apply(unflatten(vec, shapes), xn, "tanh")), [xn], create_graph=True)
        return ad.sum(gx * gx)

    assert gradcheck(sqnorm, p.flatten(), 1e-4) <= 1e-4


def test_gradnorm_leaky_relu_away_from_kinks():
    rng = np.random.default_rng(4)
    for seed in range(20):
        p = random_net(seed, "leaky_relu", (2, 6, 6, 1))
        x = away_from_kinks(p, rng)
        np.testing.assert_allclose(grad_gradnorm_params(p, x), fd_gradnorm(p, x, 1e-6), atol=1e-5)


# --- gradcheck itself -------------------------------------------------------


def test_gradcheck_quadratic_and_constant():
    assert gradcheck(lambda v: ad.sum(v * v * 3.0 + v), [0.5, -2.0, 7.0], 1e-5) <= 1e-9
    assert gradcheck(lambda v: 4.0, [1.0, 2.0]) == 0.0


def test_gradcheck_detects_wrong_gradient():
    def wrong(v):
        # value v^2 but gradient of 3 v^2 on the tape
        if isinstance(v, ad.Node):
            return ad.sum(v * v * 3.0)
        return np.sum(v * v)

    assert gradcheck(wrong, [1.0, 2.0]) > 0.5
