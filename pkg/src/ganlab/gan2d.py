"""Small MLP GANs on 2D toy distributions.

Objective convention (shared with the Dirac model)::

    L(theta, psi) = E_z f(D(G(z))) + E_x f(-D(x))

The discriminator ascends ``L`` minus its regularizer; the generator uses the
nonsaturating objective, i.e. it ascends ``E_z f(-D(G(z)))``.  ``f`` is the
logistic loss except for WGAN-GP, which uses the linear one.
"""

import math
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Optional

import numpy as np

from . import autodiff as ad
from .autodiff import MlpParams, Tape, grad, mlp_apply, unflatten
from .errors import ConfigurationError, InvalidInputError, TooLargeError
from .transport import w1_exact

DATASETS = ("gaussian", "line-segment", "circle", "four-lines")
METHODS = ("unregularized", "r1", "r2", "wgangp")
OPTIMIZERS = ("sgd", "rmsprop")
HIDDEN_CHOICES = (8, 16, 32)
DEPTH = 4
EQUILIBRIUM_PARAM_BUDGET = 200

# four parallel horizontal segments, x in [-1, 1]
FOUR_LINES_Y = (-1.5, -0.5, 0.5, 1.5)


# ---------------------------------------------------------------------------
# data


@dataclass(frozen=True)
class Dataset2D:
    """``scale`` is the standard deviation (gaussian) or the radius (circle).

    ``start``/``end`` are the endpoints of the line segment.
    """

    kind: str = "gaussian"
    center: tuple = (0.0, 0.0)
    scale: float = 1.0
    start: tuple = (-1.0, 0.0)
    end: tuple = (1.0, 0.0)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in DATASETS:
            raise ConfigurationError(f"dataset kind must be one of {DATASETS}, got {self.kind!r}")
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise ConfigurationError(f"dataset scale must be positive, got {self.scale}")
        for name in ("center", "start", "end"):
            val = tuple(float(v) for v in getattr(self, name))
            if len(val) != 2 or not all(math.isfinite(v) for v in val):
                raise ConfigurationError(f"dataset {name} must be a finite 2D point")
            object.__setattr__(self, name, val)


def sample_data(d: Dataset2D, n: int, rng=None) -> np.ndarray:
    """``n`` points as an ``(n, 2)`` array; without ``rng`` the dataset seed is used."""
    if n < 1:
        raise InvalidInputError(f"need n >= 1 samples, got {n}")
    if rng is None:
        rng = np.random.default_rng(d.seed)
    c = np.asarray(d.center)
    if d.kind == "gaussian":
        return c + d.scale * rng.standard_normal((n, 2))
    if d.kind == "circle":
        phi = rng.uniform(0.0, 2.0 * np.pi, size=n)
        return c + d.scale * np.column_stack([np.cos(phi), np.sin(phi)])
    if d.kind == "line-segment":
        t = rng.uniform(0.0, 1.0, size=(n, 1))
        a, b = np.asarray(d.start), np.asarray(d.end)
        return a + t * (b - a)
    # four-lines
    idx = rng.integers(0, len(FOUR_LINES_Y), size=n)
    x = rng.uniform(-1.0, 1.0, size=n)
    return c + np.column_stack([x, np.asarray(FOUR_LINES_Y)[idx]])


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class ArchSpec:
    hidden: int = 16
    activation: str = "leaky_relu"
    depth: int = DEPTH

    def __post_init__(self):
        if self.activation not in ad.ACTIVATIONS:
            raise ConfigurationError(f"activation must be one of {ad.ACTIVATIONS}, got {self.activation!r}")
        if self.hidden < 1 or self.depth < 1:
            raise ConfigurationError("hidden units and depth must be positive")

    def sizes(self, input_dim, output_dim):
        return [input_dim] + [self.hidden] * (self.depth - 1) + [output_dim]


@dataclass(frozen=True)
class TrainConfig:
    dataset: Dataset2D = field(default_factory=Dataset2D)
    method: str = "r1"
    gamma: float = 10.0
    g0: float = 1.0
    n_d: int = 1
    optimizer: str = "rmsprop"
    lr: float = 1e-4
    alpha: float = 0.9
    epsilon: float = 1e-8
    generator: ArchSpec = field(default_factory=ArchSpec)
    discriminator: ArchSpec = field(default_factory=ArchSpec)
    latent_dim: int = 16
    batch_size: int = 64
    iterations: int = 10_000
    eval_every: int = 500
    eval_samples: int = 512
    final_window: int = 2000
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigurationError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigurationError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        if self.method != "unregularized" and not self.gamma > 0:
            raise ConfigurationError(f"gamma must be > 0 for {self.method}, got {self.gamma}")
        if self.n_d < 1:
            raise ConfigurationError(f"n_d must be >= 1, got {self.n_d}")
        if not self.lr >= 0:  # lr = 0 is allowed as a no-op probe
            raise ConfigurationError(f"lr must be positive, got {self.lr}")
        if self.optimizer == "rmsprop" and not (0 <= self.alpha < 1 and self.epsilon > 0):
            raise ConfigurationError("rmsprop needs 0 <= alpha < 1 and epsilon > 0")
        for name in ("generator", "discriminator"):
            arch = getattr(self, name)
            if arch.hidden not in HIDDEN_CHOICES or arch.depth != DEPTH:
                raise ConfigurationError(
                    f"{name}: {DEPTH}-layer nets with hidden units in {HIDDEN_CHOICES} are supported"
                )
        for name in ("latent_dim", "batch_size", "eval_every", "eval_samples"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1")
        if self.iterations < 0 or self.final_window < 1:
            raise ConfigurationError("iterations must be >= 0 and final_window >= 1")

    @property
    def loss_kind(self) -> str:
        return "linear" if self.method == "wgangp" else "logistic"

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# objectives on the tape


def _f(t, kind):
    return ad.log_sigmoid(t) if kind == "logistic" else t


def _sqnorm_rows(rec_x, out):
    """Per-sample ``||grad_x D||^2`` as an ``(n, 1)`` node (graph kept for double backprop)."""
    (gx,) = grad(ad.sum(out), [rec_x], create_graph=True)
    return ad.sum(gx * gx, axis=1)


def _penalty_node(kind, d_params, activation, real, fake, gamma, g0, t=None):
    tape = d_params[0].tape
    if kind == "r1":
        x = tape.variable(real)
        return ad.mean(_sqnorm_rows(x, mlp_apply(d_params, x, activation))) * (gamma / 2.0)
    if kind == "r2":
        x = tape.variable(fake)
        return ad.mean(_sqnorm_rows(x, mlp_apply(d_params, x, activation))) * (gamma / 2.0)
    if kind == "wgangp":
        if real.shape != fake.shape:
            raise InvalidInputError("WGAN-GP interpolation needs equally sized batches")
        x = tape.variable(t * real + (1.0 - t) * fake)
        norms = ad.sqrt(_sqnorm_rows(x, mlp_apply(d_params, x, activation)))
        gap = norms - g0
        return ad.mean(gap * gap) * (gamma / 2.0)
    raise InvalidInputError(f"unknown penalty {kind!r}")


def _check_batch(name, batch):
    batch = np.asarray(batch, dtype=float)
    if batch.ndim != 2 or batch.shape[0] == 0:
        raise InvalidInputError(f"{name} batch must be a non-empty (n, d) array")
    return batch


def penalty(kind, disc: MlpParams, real, fake, gamma, g0=1.0, rng=None, t=None):
    """Value and flat parameter gradient of a discriminator regularizer.

    ``r1``: ``gamma/2 * mean ||grad D||^2`` on ``real``; ``r2``: the same on
    ``fake``; ``wgangp``: ``gamma/2 * mean (||grad D(x_hat)|| - g0)^2`` with
    ``x_hat = t*real + (1-t)*fake`` and ``t ~ U[0, 1]`` per pair (or given).
    """
    real = _check_batch("real", real)
    fake = _check_batch("fake", fake)
    if kind == "wgangp" and t is None:
        rng = np.random.default_rng(rng)
        t = rng.uniform(size=(real.shape[0], 1))
    tape = Tape()
    params = [tape.variable(a) for a in disc.arrays()]
    node = _penalty_node(kind, params, disc.activation, real, fake, gamma, g0, t)
    grads = grad(node, params)
    return float(node.value), np.concatenate([np.ravel(g) for g in grads])


def discriminator_loss_node(d_params, activation, real, fake, loss_kind):
    """``-L`` as seen by the discriminator (to be minimized)."""
    d_real = mlp_apply(d_params, real, activation)
    d_fake = mlp_apply(d_params, fake, activation)
    return -(ad.mean(_f(d_fake, loss_kind)) + ad.mean(_f(-d_real, loss_kind)))


# ---------------------------------------------------------------------------
# optimizers and training


@dataclass
class TrainState:
    gen: np.ndarray
    disc: np.ndarray
    gen_acc: np.ndarray
    disc_acc: np.ndarray
    iteration: int = 0
    diverged: bool = False

    def copy(self):
        return TrainState(
            self.gen.copy(), self.disc.copy(), self.gen_acc.copy(), self.disc_acc.copy(), self.iteration, self.diverged
        )


@dataclass(frozen=True)
class StepStats:
    d_loss: float
    g_loss: float
    penalty: float


@dataclass
class Nets:
    """Shapes and activations of the two players; parameters travel as flat vectors."""

    gen_shapes: list
    disc_shapes: list
    gen_activation: str
    disc_activation: str
    latent_dim: int

    @classmethod
    def from_config(cls, cfg: TrainConfig):
        g = MlpParams.init(cfg.generator.sizes(cfg.latent_dim, 2), cfg.generator.activation, 0)
        d = MlpParams.init(cfg.discriminator.sizes(2, 1), cfg.discriminator.activation, 0)
        return cls(g.shapes(), d.shapes(), cfg.generator.activation, cfg.discriminator.activation, cfg.latent_dim)

    def generate(self, gen_flat, z):
        return mlp_apply(unflatten(gen_flat, self.gen_shapes), z, self.gen_activation)

    def discriminate(self, disc_flat, x):
        return mlp_apply(unflatten(disc_flat, self.disc_shapes), x, self.disc_activation)


def init_state(cfg: TrainConfig) -> TrainState:
    rng = np.random.default_rng([cfg.seed, 0xC0FFEE])
    g = MlpParams.init(cfg.generator.sizes(cfg.latent_dim, 2), cfg.generator.activation, rng)
    d = MlpParams.init(cfg.discriminator.sizes(2, 1), cfg.discriminator.activation, rng)
    gf, df = g.flatten(), d.flatten()
    return TrainState(gf, df, np.zeros_like(gf), np.zeros_like(df))


def _optimizer_update(params, acc, g, cfg: TrainConfig):
    if cfg.optimizer == "sgd":
        return params - cfg.lr * g, acc
    acc = cfg.alpha * acc + (1.0 - cfg.alpha) * g * g
    return params - cfg.lr * g / (np.sqrt(acc) + cfg.epsilon), acc


def _batch_rngs(cfg, iteration, update):
    return [np.random.default_rng([cfg.seed, iteration, update, stream]) for stream in range(3)]


def discriminator_gradient(nets: Nets, cfg: TrainConfig, gen_flat, disc_flat, real, z, t=None, method=None):
    """Loss, penalty and flat gradient of the discriminator objective on given batches."""
    method = cfg.method if method is None else method
    fake = nets.generate(gen_flat, z)
    tape = Tape()
    d_params = [tape.variable(a) for a in unflatten(disc_flat, nets.disc_shapes)]
    loss = discriminator_loss_node(d_params, nets.disc_activation, real, fake, cfg.loss_kind)
    pen_value = 0.0
    total = loss
    if method != "unregularized":
        pen = _penalty_node(method, d_params, nets.disc_activation, real, fake, cfg.gamma, cfg.g0, t)
        pen_value = float(pen.value)
        total = loss + pen
    grads = grad(total, d_params)
    return float(loss.value), pen_value, np.concatenate([np.ravel(g) for g in grads])


def generator_gradient(nets: Nets, cfg: TrainConfig, gen_flat, disc_flat, z):
    """Nonsaturating generator loss ``-E f(-D(G(z)))`` and its flat gradient."""
    tape = Tape()
    g_params = [tape.variable(a) for a in unflatten(gen_flat, nets.gen_shapes)]
    fake = mlp_apply(g_params, z, nets.gen_activation)
    d_arrays = unflatten(disc_flat, nets.disc_shapes)
    loss = -ad.mean(_f(-mlp_apply(d_arrays, fake, nets.disc_activation), cfg.loss_kind))
    grads = grad(loss, g_params)
    return float(loss.value), np.concatenate([np.ravel(g) for g in grads])


def training_step(state: TrainState, cfg: TrainConfig, iteration: int, nets: Optional[Nets] = None):
    """``n_d`` discriminator updates, then one generator update, on fresh seeded batches.

    A non-finite loss or gradient marks the state diverged and leaves it unchanged.
    """
    if state.diverged:
        return state, StepStats(math.nan, math.nan, math.nan)
    nets = Nets.from_config(cfg) if nets is None else nets
    # overflow is detected below and reported as divergence
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        return _training_step(state, cfg, iteration, nets)


def _training_step(state, cfg, iteration, nets):
    new = state.copy()
    d_loss = pen = math.nan
    for k in range(cfg.n_d):
        r_data, r_latent, r_t = _batch_rngs(cfg, iteration, k)
        real = sample_data(cfg.dataset, cfg.batch_size, r_data)
        z = r_latent.standard_normal((cfg.batch_size, cfg.latent_dim))
        t = r_t.uniform(size=(cfg.batch_size, 1)) if cfg.method == "wgangp" else None
        d_loss, pen, g = discriminator_gradient(nets, cfg, new.gen, new.disc, real, z, t)
        if not (math.isfinite(d_loss) and math.isfinite(pen) and np.all(np.isfinite(g))):
            state = state.copy()
            state.diverged = True
            return state, StepStats(d_loss, math.nan, pen)
        new.disc, new.disc_acc = _optimizer_update(new.disc, new.disc_acc, g, cfg)
    _, r_latent, _ = _batch_rngs(cfg, iteration, cfg.n_d)
    z = r_latent.standard_normal((cfg.batch_size, cfg.latent_dim))
    g_loss, g = generator_gradient(nets, cfg, new.gen, new.disc, z)
    if not (math.isfinite(g_loss) and np.all(np.isfinite(g))):
        state = state.copy()
        state.diverged = True
        return state, StepStats(d_loss, g_loss, pen)
    new.gen, new.gen_acc = _optimizer_update(new.gen, new.gen_acc, g, cfg)
    new.iteration = iteration + 1
    if not (np.all(np.isfinite(new.gen)) and np.all(np.isfinite(new.disc))):
        state = state.copy()
        state.diverged = True
    else:
        state = new
    return state, StepStats(d_loss, g_loss, pen)


@dataclass
class TrainReport:
    w1_curve: list
    final_w1: Optional[float]
    wall_time: float
    diverged: bool
    config: dict = field(default_factory=dict)
    state: Optional[TrainState] = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        return {
            "w1_curve": [[int(i), float(v)] for i, v in self.w1_curve],
            "final_w1": self.final_w1,
            "wall_time": self.wall_time,
            "diverged": self.diverged,
            "config": self.config,
        }


def evaluation_sets(cfg: TrainConfig):
    """Fixed data sample and latent batch used for every W1 evaluation."""
    rng = np.random.default_rng([cfg.seed, 0xE7A1])
    data = sample_data(cfg.dataset, cfg.eval_samples, rng)
    z = rng.standard_normal((cfg.eval_samples, cfg.latent_dim))
    return data, z


def evaluate_w1(nets: Nets, gen_flat, data, z) -> float:
    return w1_exact(nets.generate(gen_flat, z), data)


def train(cfg: TrainConfig, state: Optional[TrainState] = None, progress=None) -> TrainReport:
    """Run ``cfg.iterations`` steps, evaluating W1 every ``eval_every`` steps and at the end."""
    start = time.perf_counter()
    nets = Nets.from_config(cfg)
    state = init_state(cfg) if state is None else state
    data, z = evaluation_sets(cfg)
    curve = []
    for it in range(cfg.iterations):
        state, _ = training_step(state, cfg, it, nets)
        if state.diverged:
            break
        done = it + 1
        if done % cfg.eval_every == 0 or done == cfg.iterations:
            w1 = evaluate_w1(nets, state.gen, data, z)
            if not math.isfinite(w1):
                state.diverged = True
                break
            curve.append((done, w1))
            if progress is not None:
                progress(done, w1)
    final = None
    if curve and not state.diverged:
        cutoff = cfg.iterations - cfg.final_window
        window = [w for i, w in curve if i > cutoff]
        final = float(np.mean(window))
    return TrainReport(curve, final, time.perf_counter() - start, state.diverged, cfg.to_dict(), state)


# ---------------------------------------------------------------------------
# equilibrium Jacobian structure


@dataclass(frozen=True)
class EquilibriumArch:
    latent_dim: int = 2
    gen_hidden: int = 2
    disc_hidden: int = 2
    depth: int = DEPTH
    activation: str = "tanh"

    def gen_sizes(self):
        return [self.latent_dim] + [self.gen_hidden] * (self.depth - 1) + [2]

    def disc_sizes(self):
        return [2] + [self.disc_hidden] * (self.depth - 1) + [1]


@dataclass
class Equilibrium:
    gen: MlpParams
    disc: MlpParams
    z: np.ndarray
    data: np.ndarray


def construct_equilibrium(arch: EquilibriumArch, n: int = 64, seed: int = 0) -> Equilibrium:
    """Random generator, data := its output on a fixed latent set, discriminator with zeroed output layer."""
    rng = np.random.default_rng(seed)
    gen = MlpParams.init(arch.gen_sizes(), arch.activation, rng)
    disc = MlpParams.init(arch.disc_sizes(), arch.activation, rng).with_zero_output_layer()
    z = rng.standard_normal((n, arch.latent_dim))
    return Equilibrium(gen, disc, z, ad.forward(gen, z))


@dataclass
class EquilibriumJacobianReport:
    hessian_theta_block: np.ndarray
    K_DD_fd: np.ndarray
    K_DD_formula: np.ndarray
    K_DG_fd: np.ndarray
    K_DG_formula: np.ndarray
    L_DD_fd: np.ndarray
    L_DD_formula: np.ndarray
    cross_R1: np.ndarray
    cross_R2: np.ndarray
    discrepancies: dict
    tolerances: dict

    @property
    def checks(self) -> dict:
        return {k: v <= self.tolerances[k] for k, v in self.discrepancies.items()}

    @property
    def passed(self) -> bool:
        return all(self.checks.values())


EQ_TOLERANCES = {
    "hessian_theta": 1e-5,
    "K_DD": 1e-4,
    "K_DG": 1e-3,
    "L_DD": 1e-4,
    "cross_R": 1e-5,
}


def _rel(a, b):
    return float(np.max(np.abs(a - b)) / max(1.0, np.max(np.abs(b)))) if a.size else 0.0


def _fd_jacobian_of(fn, x, eps):
    cols = []
    for j in range(x.size):
        up, dn = x.copy(), x.copy()
        up[j] += eps
        dn[j] -= eps
        cols.append((fn(up) - fn(dn)) / (2.0 * eps))
    return np.column_stack(cols) if cols else np.zeros((0, 0))


def verify_equilibrium_jacobian(
    arch: EquilibriumArch = EquilibriumArch(),
    n: int = 64,
    seed: int = 0,
    gamma: float = 1.0,
    equilibrium: Optional[Equilibrium] = None,
    eps: float = 1e-5,
) -> EquilibriumJacobianReport:
    """Compare finite-difference Hessian blocks at a constructed equilibrium with their closed forms.

    Blocks are built from parameter gradients (reverse mode) differentiated
    once more by central differences.  Uses the logistic loss.
    """
    eq = construct_equilibrium(arch, n, seed) if equilibrium is None else equilibrium
    gen, disc, z, data = eq.gen, eq.disc, eq.z, eq.data
    n_total = gen.n_params + disc.n_params
    if n_total > EQUILIBRIUM_PARAM_BUDGET:
        raise TooLargeError(f"{n_total} parameters exceed the budget of {EQUILIBRIUM_PARAM_BUDGET}")
    w_out, b_out = disc.layers[-1]
    if np.any(w_out) or np.any(b_out):
        raise InvalidInputError("discriminator output layer is not zero: not an equilibrium (D must vanish)")
    if not np.array_equal(ad.forward(gen, z), data):
        raise InvalidInputError("data must equal the generator output on the fixed latent set")
    if gamma < 0:
        raise InvalidInputError("gamma must be >= 0")

    g_shapes, d_shapes = gen.shapes(), disc.shapes()
    g_act, d_act = gen.activation, disc.activation
    theta0, psi0 = gen.flatten(), disc.flatten()
    f1_0, f2_0 = 0.5, -0.25  # logistic f'(0), f''(0)

    def grads_L(theta, psi):
        tape = Tape()
        tp = [tape.variable(a) for a in unflatten(theta, g_shapes)]
        pp = [tape.variable(a) for a in unflatten(psi, d_shapes)]
        fake = mlp_apply(tp, z, g_act)
        value = ad.mean(ad.log_sigmoid(mlp_apply(pp, fake, d_act))) + ad.mean(
            ad.log_sigmoid(-mlp_apply(pp, data, d_act))
        )
        gs = grad(value, tp + pp)
        k = len(tp)
        flat = lambda parts: np.concatenate([np.ravel(p) for p in parts])
        return flat(gs[:k]), flat(gs[k:])

    def grad_psi_R(theta, psi, on_fake):
        tape = Tape()
        pp = [tape.variable(a) for a in unflatten(psi, d_shapes)]
        pts = ad.forward(gen.from_flat(theta), z) if on_fake else data
        x = tape.variable(pts)
        value = ad.mean(_sqnorm_rows(x, mlp_apply(pp, x, d_act))) * (gamma / 2.0)
        return np.concatenate([np.ravel(g) for g in grad(value, pp)])

    def per_sample_grad_psi(theta, psi, points_fn):
        """Rows: grad_psi D(x_i)."""
        pts = points_fn(theta)
        rows = []
        for i in range(pts.shape[0]):
            tape = Tape()
            pp = [tape.variable(a) for a in unflatten(psi, d_shapes)]
            out = mlp_apply(pp, pts[i : i + 1], d_act)
            rows.append(np.concatenate([np.ravel(g) for g in grad(ad.sum(out), pp)]))
        return np.array(rows)

    def mixed_psi_x(psi, pts):
        """Per sample the (n_psi, dim_x) matrix of mixed derivatives of D."""
        mats = []
        for i in range(pts.shape[0]):
            tape = Tape()
            pp = [tape.variable(a) for a in unflatten(psi, d_shapes)]
            x = tape.variable(pts[i : i + 1])
            (gx,) = grad(ad.sum(mlp_apply(pp, x, d_act)), [x], create_graph=True)
            cols = []
            for k in range(pts.shape[1]):
                gk = grad(ad.getitem(gx, (0, k)), pp)
                cols.append(np.concatenate([np.ravel(g) for g in gk]))
            mats.append(np.column_stack(cols))
        return np.array(mats)

    gen_points = lambda theta: ad.forward(gen.from_flat(theta), z)

    h_tt = _fd_jacobian_of(lambda th: grads_L(th, psi0)[0], theta0, eps)
    k_dd_fd = _fd_jacobian_of(lambda ps: grads_L(theta0, ps)[1], psi0, eps)
    k_dg_fd = _fd_jacobian_of(lambda th: grads_L(th, psi0)[1], theta0, eps)

    gpsi = per_sample_grad_psi(theta0, psi0, lambda th: data)
    k_dd_formula = 2.0 * f2_0 * (gpsi.T @ gpsi) / gpsi.shape[0]
    mean_gpsi = lambda th: per_sample_grad_psi(th, psi0, gen_points).mean(axis=0)
    k_dg_formula = f1_0 * _fd_jacobian_of(mean_gpsi, theta0, eps)

    l_dd_fd = _fd_jacobian_of(lambda ps: grad_psi_R(theta0, ps, False), psi0, eps)
    mixed = mixed_psi_x(psi0, data)
    l_dd_formula = gamma * np.einsum("npk,nqk->pq", mixed, mixed) / mixed.shape[0]

    cross_r1 = _fd_jacobian_of(lambda th: grad_psi_R(th, psi0, False), theta0, eps)
    cross_r2 = _fd_jacobian_of(lambda th: grad_psi_R(th, psi0, True), theta0, eps)

    disc_ = {
        "hessian_theta": float(np.max(np.abs(h_tt))) if h_tt.size else 0.0,
        "K_DD": _rel(k_dd_fd, k_dd_formula),
        "K_DG": _rel(k_dg_fd, k_dg_formula),
        "L_DD": _rel(l_dd_fd, l_dd_formula),
        "cross_R": max(float(np.max(np.abs(cross_r1))), float(np.max(np.abs(cross_r2)))),
    }
    return EquilibriumJacobianReport(
        h_tt, k_dd_fd, k_dd_formula, k_dg_fd, k_dg_formula, l_dd_fd, l_dd_formula, cross_r1, cross_r2,
        disc_, dict(EQ_TOLERANCES),
    )
