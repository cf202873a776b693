"""The Dirac-GAN: a one-parameter generator against a one-parameter discriminator.

The generator distribution is a point mass at ``theta``, the data distribution a
point mass at 0, and the discriminator is ``D(x) = psi * x`` (linear), or one of
two alternative parameterizations:

* quadratic: ``D(x) = psi1 * x**2 + psi * x`` (state carries ``psi1``)
* exponential: ``D(x) = psi * exp(x)``

Vector fields follow the convention ``v = (-dL/dtheta, dL/dpsi)`` with the
discriminator ascending and the generator descending the objective.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import (
    ConfigurationError,
    DivergenceError,
    InvalidInputError,
    NoDifferentiableEquilibriumError,
)
from .objectives import LossFunction, make_loss

METHODS = (
    "standard",
    "nonsaturating",
    "wgan",
    "wgangp",
    "instance_noise",
    "gradient_penalty",
    "consensus",
)
DISCRIMINATORS = ("linear", "quadratic", "exponential")
LINEAR_LOSS_METHODS = ("wgan", "wgangp")

DIVERGENCE_BOUND = 1e6
SIMGD_DEFAULT_STEP = 0.1
ALTGD_DEFAULT_STEP = 0.2
MIN_QUAD_ORDER = 8


@dataclass(frozen=True)
class DiracState:
    theta: float
    psi: float
    psi1: Optional[float] = None

    def __post_init__(self):
        vals = (self.theta, self.psi) if self.psi1 is None else (self.theta, self.psi, self.psi1)
        if not all(math.isfinite(v) for v in vals):
            raise InvalidInputError(f"non-finite Dirac state {vals}")

    @property
    def is_quadratic(self) -> bool:
        return self.psi1 is not None

    def as_tuple(self) -> tuple:
        if self.psi1 is None:
            return (self.theta, self.psi)
        return (self.theta, self.psi, self.psi1)

    def as_array(self) -> np.ndarray:
        return np.array(self.as_tuple(), dtype=float)

    @classmethod
    def from_sequence(cls, values: Sequence[float]) -> "DiracState":
        values = [float(v) for v in values]
        if len(values) == 2:
            return cls(values[0], values[1])
        if len(values) == 3:
            return cls(values[0], values[1], values[2])
        raise InvalidInputError(f"Dirac state needs 2 or 3 components, got {len(values)}")


ORIGIN = DiracState(0.0, 0.0)


@dataclass(frozen=True)
class MethodSpec:
    """Training method for the Dirac-GAN plus its hyperparameters.

    Only the hyperparameters relevant to ``kind`` are used: ``gamma`` for
    wgangp / gradient_penalty / consensus, ``g0`` for wgan / wgangp, and
    ``sigma`` / ``quad_order`` for instance_noise.
    """

    kind: str = "standard"
    gamma: float = 1.0
    g0: float = 1.0
    sigma: float = 1.0
    quad_order: int = 32
    discriminator: str = "linear"

    def __post_init__(self):
        if self.kind not in METHODS:
            raise ConfigurationError(f"unknown method {self.kind!r}; expected one of {METHODS}")
        if self.discriminator not in DISCRIMINATORS:
            raise ConfigurationError(f"unknown discriminator {self.discriminator!r}")
        if self.discriminator != "linear" and self.kind != "standard":
            raise ConfigurationError(
                f"{self.discriminator} discriminator is only defined for the standard method"
            )
        if self.kind in ("wgangp", "gradient_penalty", "consensus") and not self.gamma > 0:
            raise ConfigurationError(f"{self.kind} needs gamma > 0, got {self.gamma}")
        if self.kind == "wgan" and not self.g0 > 0:
            raise ConfigurationError(f"wgan needs a clip bound g0 > 0, got {self.g0}")
        if self.kind == "wgangp" and not self.g0 >= 0:
            raise ConfigurationError(f"wgangp needs g0 >= 0, got {self.g0}")
        if self.kind == "instance_noise":
            if not self.sigma > 0:
                raise ConfigurationError(f"instance noise needs sigma > 0, got {self.sigma}")
            if self.quad_order < MIN_QUAD_ORDER:
                raise ConfigurationError(f"quad_order must be >= {MIN_QUAD_ORDER}")

    @property
    def state_dim(self) -> int:
        return 3 if self.discriminator == "quadratic" else 2

    def default_loss(self) -> LossFunction:
        return make_loss("linear" if self.kind in LINEAR_LOSS_METHODS else "logistic")

    @classmethod
    def standard(cls, discriminator="linear"):
        return cls("standard", discriminator=discriminator)

    @classmethod
    def nonsaturating(cls):
        return cls("nonsaturating")

    @classmethod
    def wgan(cls, g0=1.0):
        return cls("wgan", g0=g0)

    @classmethod
    def wgangp(cls, gamma=1.0, g0=1.0):
        return cls("wgangp", gamma=gamma, g0=g0)

    @classmethod
    def instance_noise(cls, sigma=1.0, quad_order=32):
        return cls("instance_noise", sigma=sigma, quad_order=quad_order)

    @classmethod
    def gradient_penalty(cls, gamma=1.0):
        return cls("gradient_penalty", gamma=gamma)

    @classmethod
    def consensus(cls, gamma=1.0):
        return cls("consensus", gamma=gamma)


@dataclass(frozen=True)
class UpdateRule:
    """Simultaneous or alternating gradient steps.

    ``h_g != h_d`` gives two-timescale training. For AltGD the generator makes
    ``n_g`` steps first, then the discriminator makes ``n_d`` steps.
    """

    kind: str = "simgd"
    h_g: float = 0.1
    h_d: float = 0.1
    n_g: int = 1
    n_d: int = 1

    def __post_init__(self):
        if self.kind not in ("simgd", "altgd"):
            raise ConfigurationError(f"unknown update rule {self.kind!r}")
        for name in ("h_g", "h_d"):
            h = getattr(self, name)
            if not (math.isfinite(h) and h > 0):
                raise ConfigurationError(f"{name} must be positive and finite, got {h}")
        if self.n_g < 1 or self.n_d < 1:
            raise ConfigurationError("n_g and n_d must be >= 1")
        if self.kind == "simgd" and (self.n_g != 1 or self.n_d != 1):
            raise ConfigurationError("SimGD takes exactly one step per player")

    @classmethod
    def simgd(cls, h, h_d=None):
        return cls("simgd", h, h if h_d is None else h_d)

    @classmethod
    def altgd(cls, h=ALTGD_DEFAULT_STEP, n_g=1, n_d=1, h_d=None):
        return cls("altgd", h, h if h_d is None else h_d, n_g, n_d)


@dataclass
class Trajectory:
    """Iterates (or integration samples) of the Dirac-GAN.

    ``points`` has one row per recorded state; ``steps`` holds the step index
    (discrete) or time (continuous) of each row.
    """

    points: np.ndarray
    steps: np.ndarray
    radii: np.ndarray = field(init=False)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float).reshape(len(self.steps), -1)
        self.steps = np.asarray(self.steps, dtype=float)
        self.radii = _radii(self.points)

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def theta(self) -> np.ndarray:
        return self.points[:, 0]

    @property
    def psi(self) -> np.ndarray:
        return self.points[:, 1]

    @property
    def states(self) -> list:
        return [DiracState.from_sequence(row) for row in self.points]

    def state(self, i: int) -> DiracState:
        return DiracState.from_sequence(self.points[i])

    @property
    def final(self) -> DiracState:
        return self.state(-1)


def _radii(points: np.ndarray) -> np.ndarray:
    r = points[:, 0] * points[:, 0] + points[:, 1] * points[:, 1]
    if points.shape[1] == 3:
        r = r + points[:, 2] * points[:, 2]
    return r


def radius(s: DiracState) -> float:
    """Unhalved squared norm theta**2 + psi**2 (+ psi1**2)."""
    r = s.theta * s.theta + s.psi * s.psi
    if s.psi1 is not None:
        r = r + s.psi1 * s.psi1
    return r


# ---------------------------------------------------------------------------
# vector fields


def _sign(x: float) -> float:
    if x > 0:
        return 1.0
    if x < 0:
        return -1.0
    return 0.0


def _check_config(method: MethodSpec, loss: LossFunction):
    if method.kind in LINEAR_LOSS_METHODS and loss.kind != "linear":
        raise ConfigurationError(f"{method.kind} requires the linear loss, got {loss.kind}")


def _gauss_hermite(order: int):
    # Nodes/weights for E[g(X)], X ~ N(0, 1).
    x, w = np.polynomial.hermite.hermgauss(order)
    return math.sqrt(2.0) * x, w / math.sqrt(math.pi)


def field_function(method: MethodSpec, loss: LossFunction) -> Callable[..., tuple]:
    """Return a fast scalar field ``fn(theta, psi[, psi1]) -> tuple``.

    This is the primitive behind :func:`vector_field`, :func:`step_discrete`
    and the integrators.
    """
    _check_config(method, loss)
    f1, f2 = loss.f1, loss.f2
    kind = method.kind

    if method.discriminator == "quadratic":
        def quadratic(theta, psi, psi1):
            d = f1(psi1 * theta * theta + psi * theta)
            return (-d * (2.0 * psi1 * theta + psi), d * theta, d * theta * theta)
        return quadratic

    if method.discriminator == "exponential":
        def exponential(theta, psi):
            e = math.exp(theta)
            t = psi * e
            return (-f1(t) * t, f1(t) * e - f1(-psi))
        return exponential

    if kind == "standard":
        def standard(theta, psi):
            d = f1(theta * psi)
            return (-d * psi, d * theta)
        return standard

    if kind == "nonsaturating":
        def nonsaturating(theta, psi):
            t = theta * psi
            return (-f1(-t) * psi, f1(t) * theta)
        return nonsaturating

    if kind == "wgan":
        def wgan(theta, psi):
            return (-psi, theta)
        return wgan

    if kind == "wgangp":
        gamma, g0 = method.gamma, method.g0

        def wgangp(theta, psi):
            return (-psi, theta - _sign(psi) * gamma * (abs(psi) - g0))
        return wgangp

    if kind == "gradient_penalty":
        gamma = method.gamma

        def gradient_penalty(theta, psi):
            d = f1(theta * psi)
            return (-d * psi, d * theta - gamma * psi)
        return gradient_penalty

    if kind == "instance_noise":
        nodes, weights = _gauss_hermite(method.quad_order)
        noise = method.sigma * nodes

        def instance_noise(theta, psi):
            theta_t = theta + noise
            d_fake = f1(theta_t * psi)
            d_real = f1(-noise * psi)
            dtheta = -psi * float(weights @ d_fake)
            dpsi = float(weights @ (theta_t * d_fake)) - float(weights @ (noise * d_real))
            return (dtheta, dpsi)
        return instance_noise

    if kind == "consensus":
        gamma = method.gamma

        def consensus(theta, psi):
            t = theta * psi
            d1, d2 = f1(t), f2(t)
            v0, v1 = -d1 * psi, d1 * theta
            # Jacobian of the standard field at (theta, psi)
            j00 = -d2 * psi * psi
            j01 = -d1 - d2 * t
            j10 = d1 + d2 * t
            j11 = d2 * theta * theta
            return (v0 - gamma * (j00 * v0 + j10 * v1), v1 - gamma * (j01 * v0 + j11 * v1))
        return consensus

    raise ConfigurationError(f"no field for method {kind!r}")  # pragma: no cover


def _check_state(method: MethodSpec, s: DiracState):
    if s.is_quadratic != (method.discriminator == "quadratic"):
        raise ConfigurationError(
            f"state {s} does not match the {method.discriminator} discriminator"
        )


def vector_field(method: MethodSpec, loss: LossFunction, s: DiracState) -> DiracState:
    _check_state(method, s)
    return DiracState.from_sequence(field_function(method, loss)(*s.as_tuple()))


def equilibrium_jacobian(method: MethodSpec, loss: LossFunction, psi1: float = 1.0) -> np.ndarray:
    """Closed-form Jacobian of the vector field at the equilibrium.

    For the quadratic discriminator the equilibrium is ``theta = psi = 0`` with
    the given ``psi1``; coordinates are ordered ``(theta, psi, psi1)``.
    """
    _check_config(method, loss)
    a = loss.f1(0.0)
    b = loss.f2(0.0)
    kind = method.kind
    if method.discriminator == "quadratic":
        return np.array([[-2.0 * psi1 * a, -a, 0.0], [a, 0.0, 0.0], [0.0, 0.0, 0.0]])
    if method.discriminator == "exponential":
        return np.array([[0.0, -a], [a, 2.0 * b]])
    if kind in ("standard", "nonsaturating", "wgan"):
        return np.array([[0.0, -a], [a, 0.0]])
    if kind == "gradient_penalty":
        return np.array([[0.0, -a], [a, -method.gamma]])
    if kind == "instance_noise":
        return np.array([[0.0, -a], [a, 2.0 * b * method.sigma ** 2]])
    if kind == "consensus":
        c = method.gamma * a * a
        return np.array([[-c, -a], [a, -c]])
    if kind == "wgangp":
        raise NoDifferentiableEquilibriumError(
            "the WGAN-GP field is discontinuous at the equilibrium"
        )
    raise ConfigurationError(f"no Jacobian for {kind!r}")  # pragma: no cover


def update_jacobian(rule: UpdateRule, method: MethodSpec, loss: LossFunction, psi1: float = 1.0) -> np.ndarray:
    """Jacobian of one SimGD/AltGD update operator at the equilibrium."""
    jac = equilibrium_jacobian(method, loss, psi1)
    n = jac.shape[0]
    eye = np.eye(n)
    if rule.kind == "simgd":
        steps = np.array([rule.h_g] + [rule.h_d] * (n - 1))
        return eye + steps[:, None] * jac
    gen = np.zeros_like(jac)
    gen[0] = jac[0]
    disc = np.zeros_like(jac)
    disc[1:] = jac[1:]
    gen_op = np.linalg.matrix_power(eye + rule.h_g * gen, rule.n_g)
    disc_op = np.linalg.matrix_power(eye + rule.h_d * disc, rule.n_d)
    return disc_op @ gen_op


# ---------------------------------------------------------------------------
# discrete dynamics


def _stepper(rule: UpdateRule, method: MethodSpec, loss: LossFunction):
    fn = field_function(method, loss)
    h_g, h_d = rule.h_g, rule.h_d
    clip = method.g0 if method.kind == "wgan" else None
    quadratic = method.discriminator == "quadratic"

    def project(psi):
        if clip is None:
            return psi
        return min(clip, max(-clip, psi))

    if rule.kind == "simgd":
        if quadratic:
            def step(x):
                v = fn(*x)
                return (x[0] + h_g * v[0], x[1] + h_d * v[1], x[2] + h_d * v[2])
        else:
            def step(x):
                v = fn(*x)
                return (x[0] + h_g * v[0], project(x[1] + h_d * v[1]))
        return step

    n_g, n_d = rule.n_g, rule.n_d

    def step(x):
        x = list(x)
        for _ in range(n_g):
            x[0] = x[0] + h_g * fn(*x)[0]
        for _ in range(n_d):
            v = fn(*x)
            x[1] = project(x[1] + h_d * v[1])
            if quadratic:
                x[2] = x[2] + h_d * v[2]
        return tuple(x)

    return step


def step_discrete(s: DiracState, rule: UpdateRule, method: MethodSpec, loss: LossFunction) -> DiracState:
    _check_state(method, s)
    return DiracState.from_sequence(_stepper(rule, method, loss)(s.as_tuple()))


def _diverged(x) -> bool:
    return not all(math.isfinite(c) and abs(c) <= DIVERGENCE_BOUND for c in x[:2]) or (
        len(x) == 3 and not math.isfinite(x[2])
    )


def simulate(s0: DiracState, rule: UpdateRule, method: MethodSpec, loss: LossFunction, k: int) -> Trajectory:
    """Iterate the update operator ``k`` times starting from ``s0``."""
    if k < 1:
        raise InvalidInputError("simulate needs k >= 1")
    _check_state(method, s0)
    step = _stepper(rule, method, loss)
    x = s0.as_tuple()
    rows = [x]
    for i in range(k):
        x = step(x)
        if _diverged(x):
            prefix = Trajectory(np.array(rows), np.arange(len(rows)))
            raise DivergenceError(f"iterate left the finite region at step {i + 1}", prefix)
        rows.append(x)
    return Trajectory(np.array(rows), np.arange(k + 1))


# ---------------------------------------------------------------------------
# continuous dynamics


def flow_continuous(
    s0: DiracState,
    method: MethodSpec,
    loss: LossFunction,
    dt: float,
    T: float,
    record_every: int = 1,
    field: Optional[Callable[..., tuple]] = None,
) -> Trajectory:
    """Integrate the gradient flow with classic fixed-step RK4.

    Uses ``round(T / dt)`` steps. With ``record_every > 1`` only every n-th
    state (plus the final one) is stored. ``field`` replaces the method's
    vector field (same calling convention as :func:`field_function`). The WGAN-GP field is discontinuous
    on ``psi = 0``; there the fourth-order accuracy is lost.
    """
    if not dt > 0 or not T >= dt:
        raise InvalidInputError("flow_continuous needs dt > 0 and T >= dt")
    if record_every < 1:
        raise InvalidInputError("record_every must be >= 1")
    _check_state(method, s0)
    fn = field_function(method, loss) if field is None else field
    n_steps = int(round(T / dt))
    dim = method.state_dim
    n_rec = n_steps // record_every + 1 + (1 if n_steps % record_every else 0)
    out = np.empty((n_rec, dim))
    times = np.empty(n_rec)
    x = s0.as_tuple()
    out[0] = x
    times[0] = 0.0
    j = 1
    half = 0.5 * dt
    sixth = dt / 6.0
    for i in range(1, n_steps + 1):
        k1 = fn(*x)
        k2 = fn(*[a + half * b for a, b in zip(x, k1)])
        k3 = fn(*[a + half * b for a, b in zip(x, k2)])
        k4 = fn(*[a + dt * b for a, b in zip(x, k3)])
        x = tuple(a + sixth * (b1 + 2.0 * b2 + 2.0 * b3 + b4) for a, b1, b2, b3, b4 in zip(x, k1, k2, k3, k4))
        if _diverged(x):
            prefix = Trajectory(out[:j], times[:j])
            raise DivergenceError(f"flow left the finite region at t={i * dt}", prefix)
        if i % record_every == 0 or i == n_steps:
            out[j] = x
            times[j] = i * dt
            j += 1
    return Trajectory(out[:j], times[:j])


# ---------------------------------------------------------------------------
# phase portraits


@dataclass
class PortraitGrid:
    """Row-major vector-field samples: row ``i`` is ``psi[i]``, column ``j`` is ``theta[j]``."""

    theta: np.ndarray
    psi: np.ndarray
    dtheta: np.ndarray
    dpsi: np.ndarray

    def entries(self) -> list:
        n_rows, n_cols = self.theta.shape
        return [
            (DiracState(self.theta[i, j], self.psi[i, j]), DiracState(self.dtheta[i, j], self.dpsi[i, j]))
            for i in range(n_rows)
            for j in range(n_cols)
        ]


def portrait_grid(method: MethodSpec, loss: LossFunction, bounds: Sequence[float], n: int) -> PortraitGrid:
    """Evaluate the field on an ``n x n`` grid over ``bounds = (theta_min, theta_max, psi_min, psi_max)``."""
    if n < 2:
        raise InvalidInputError("portrait grid needs n >= 2 points per axis")
    if method.discriminator != "linear":
        raise ConfigurationError("portraits are drawn for the linear discriminator only")
    fn = field_function(method, loss)
    t0, t1, p0, p1 = (float(b) for b in bounds)
    thetas = np.linspace(t0, t1, n)
    psis = np.linspace(p0, p1, n)
    tt, pp = np.meshgrid(thetas, psis)
    du = np.empty_like(tt)
    dv = np.empty_like(tt)
    for i in range(n):
        for j in range(n):
            du[i, j], dv[i, j] = fn(float(tt[i, j]), float(pp[i, j]))
    return PortraitGrid(tt, pp, du, dv)


def critical_gamma(loss: LossFunction) -> float:
    """Gradient-penalty weight at which the equilibrium eigenvalues turn real."""
    return 2.0 * abs(loss.f1(0.0))


def critical_sigma(loss: LossFunction) -> float:
    """Instance-noise level at which the equilibrium eigenvalues turn real."""
    b = loss.f2(0.0)
    if b == 0:
        raise ConfigurationError(f"{loss.kind} loss has f''(0) = 0; instance noise has no effect")
    return math.sqrt(abs(loss.f1(0.0)) / abs(b))


def with_loss(method: MethodSpec, loss: Optional[LossFunction]) -> LossFunction:
    """The given loss, or the method's default one."""
    return method.default_loss() if loss is None else loss


__all__ = [
    "DiracState",
    "MethodSpec",
    "UpdateRule",
    "Trajectory",
    "PortraitGrid",
    "ORIGIN",
    "field_function",
    "vector_field",
    "equilibrium_jacobian",
    "update_jacobian",
    "step_discrete",
    "simulate",
    "flow_continuous",
    "radius",
    "portrait_grid",
    "critical_gamma",
    "critical_sigma",
    "with_loss",
]
