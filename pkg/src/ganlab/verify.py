"""Self-check suite: quick versions of the library's invariants, reported as named checks.

``inject`` deliberately breaks a component so the suite can be seen to catch it.
"""

import math
import traceback
from dataclasses import asdict, dataclass
from typing import Iterable, Optional

import numpy as np

from . import autodiff as ad
from .dirac import (
    DiracState,
    MethodSpec,
    UpdateRule,
    equilibrium_jacobian,
    field_function,
    flow_continuous,
    simulate,
    update_jacobian,
)
from .errors import ConfigurationError, DivergenceError
from .gan2d import EquilibriumArch, penalty, verify_equilibrium_jacobian
from .objectives import check_loss, make_loss
from .spectral import (
    EigBoundMatrices,
    Spectrum,
    check_eig_bounds,
    classify,
    eig_residuals,
    eig_small,
    eigvals,
    estimate_rate,
    fd_jacobian,
    max_stable_step,
)
from .transport import w1_bruteforce, w1_exact

SUITES = ("objectives", "dirac", "spectral", "autodiff", "transport", "gan2d")
FAULTS = ("gp-sign-flip",)


@dataclass
class CheckResult:
    suite: str
    name: str
    passed: bool
    value: Optional[float] = None
    tolerance: Optional[float] = None
    detail: str = ""


@dataclass
class VerifyReport:
    results: list
    inject: Optional[str] = None

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def failures(self) -> list:
        return [r for r in self.results if not r.passed]

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "inject": self.inject,
            "n_checks": len(self.results),
            "n_failed": len(self.failures()),
            "checks": [asdict(r) for r in self.results],
        }


def _le(suite, name, value, tol, detail=""):
    value = float(value)
    return CheckResult(suite, name, bool(value <= tol), value, tol, detail)


def _ok(suite, name, cond, detail=""):
    return CheckResult(suite, name, bool(cond), None, None, detail)


# ---------------------------------------------------------------------------
# suites


def _objectives(rng, inject):
    grid = np.linspace(-10, 10, 201)
    for kind in ("logistic", "linear"):
        rep = check_loss(make_loss(kind), grid)
        yield _le("objectives", f"derivatives-{kind}", max(rep.f1_max_error, rep.f2_max_error), rep.tol)
    f = make_loss("logistic")
    err = max(abs(f.f(0.0) + math.log(2)), abs(f.f1(0.0) - 0.5), abs(f.f2(0.0) + 0.25))
    yield _le("objectives", "logistic-at-zero", err, 1e-15)


def _dirac_field(method, loss, inject):
    fn = field_function(method, loss)
    if inject == "gp-sign-flip" and method.kind == "gradient_penalty":
        gamma = method.gamma

        def flipped(theta, psi):
            vt, vp = fn(theta, psi)
            return vt, vp + 2.0 * gamma * psi

        return flipped
    return fn


DIRAC_METHODS = (
    MethodSpec.standard(),
    MethodSpec.nonsaturating(),
    MethodSpec.wgan(),
    MethodSpec.gradient_penalty(1.0),
    MethodSpec.instance_noise(1.0),
    MethodSpec.consensus(1.0),
    MethodSpec.standard("exponential"),
)

EXPECTED_SPECTRA = {
    "standard-linear": [-0.5j, 0.5j],
    "nonsaturating-linear": [-0.5j, 0.5j],
    "wgan-linear": [-1j, 1j],
    "gradient_penalty-linear": [-0.5, -0.5],
    "instance_noise-linear": [complex(-0.25, -math.sqrt(3) / 4), complex(-0.25, math.sqrt(3) / 4)],
    "consensus-linear": [-0.25 - 0.5j, -0.25 + 0.5j],
    "standard-exponential": [complex(-0.25, -math.sqrt(3) / 4), complex(-0.25, math.sqrt(3) / 4)],
}


def _spectrum_distance(got, expected):
    got = Spectrum(got).eigenvalues
    exp = Spectrum(expected).eigenvalues
    return float(np.max(np.abs(got - exp)))


def _dirac(rng, inject):
    for m in DIRAC_METHODS:
        loss = m.default_loss()
        tag = f"{m.kind}-{m.discriminator}"
        fn = _dirac_field(m, loss, inject)
        fd = fd_jacobian(lambda p: fn(*p), [0.0, 0.0])
        closed = equilibrium_jacobian(m, loss)
        yield _le("dirac", f"jacobian-{tag}", np.max(np.abs(fd - closed)), 1e-5, "finite differences vs closed form")
        yield _le("dirac", f"spectrum-{tag}", _spectrum_distance(eigvals(fd).eigenvalues, EXPECTED_SPECTRA[tag]), 1e-5)

    logistic = make_loss("logistic")
    std = MethodSpec.standard()
    traj = flow_continuous(DiracState(1.0, 0.0), std, logistic, 0.01, 10.0, field=_dirac_field(std, logistic, inject))
    yield _le("dirac", "conservation-standard", np.max(np.abs(traj.radii - 1.0)), 1e-8, "RK4 radius drift")

    gp = MethodSpec.gradient_penalty(1.0)
    try:
        traj = flow_continuous(DiracState(1.0, 0.0), gp, logistic, 0.01, 30.0, field=_dirac_field(gp, logistic, inject))
    except DivergenceError as exc:  # judge the prefix that was computed
        traj = exc.trajectory
    growth = float(np.max(np.diff(traj.radii)))
    yield _le("dirac", "dissipation-gradient_penalty", max(growth, 0.0), 0.0, "radius must not increase")
    yield _le("dirac", "decay-gradient_penalty", traj.radii[-1], 1e-6)

    h = 0.1
    traj = simulate(DiracState(1.0, 0.0), UpdateRule.simgd(h), std, logistic, 1000)
    pts = traj.points
    pred = traj.radii[:-1] * (1.0 + h * h * logistic.f1(pts[:-1, 0] * pts[:-1, 1]) ** 2)
    yield _le("dirac", "simgd-norm-recurrence", np.max(np.abs(traj.radii[1:] / pred - 1.0)), 1e-12)

    worst = 0.0
    for _ in range(20):
        n_g, n_d = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        h = float(rng.uniform(0.01, 4.0 / math.sqrt(n_g * n_d)))
        ev = eigvals(update_jacobian(UpdateRule.altgd(h, n_g, n_d), std, logistic)).eigenvalues
        worst = max(worst, float(np.max(np.abs(np.abs(ev) - 1.0))))
    yield _le("dirac", "altgd-unit-circle", worst, 1e-12)


def _spectral(rng, inject):
    for with_p in (False, True):
        failures = 0
        for _ in range(100):
            n = int(rng.integers(1, 5))
            m = int(rng.integers(n, 5))
            a = rng.normal(size=(m, m))
            b = rng.normal(size=(m, n))
            p = None
            if with_p:
                c = rng.normal(size=(n, n))
                p = c @ c.T
            rep = check_eig_bounds(EigBoundMatrices(a @ a.T + 0.1 * np.eye(m), b, p))
            failures += not rep.passed
        yield _le("spectral", "saddle-bounds" + ("-psd" if with_p else ""), failures, 0, "violating instances of 100")

    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(2, 9))
        m = rng.normal(size=(n, n))
        worst = max(worst, float(np.max(eig_residuals(m, eig_small(m).eigenvalues))))
    yield _le("spectral", "eig-small-residuals", worst, 1e-7)

    bad = 0
    for _ in range(50):
        k = int(rng.integers(1, 4))
        re = -rng.uniform(0.05, 3.0, size=k)
        im = rng.uniform(0.0, 3.0, size=k)
        spec = Spectrum(np.concatenate([re + 1j * im, re - 1j * im]))
        hmax = max_stable_step(spec)
        bad += classify(spec, 0.99 * hmax).discrete != "linearly-convergent"
        bad += classify(spec, 1.01 * hmax).discrete != "not-convergent"
    yield _le("spectral", "stable-step-threshold", bad, 0)

    gp = MethodSpec.gradient_penalty(1.0)
    traj = simulate(DiracState(1.0, 0.0), UpdateRule.simgd(0.5), gp, make_loss("logistic"), 2000)
    yield _le("spectral", "rate-gradient_penalty", abs(estimate_rate(traj) / 0.75 - 1.0), 0.05)


def _autodiff(rng, inject):
    worst = 0.0
    for seed in range(10):
        for act in ("tanh", "leaky_relu"):
            p = ad.MlpParams.init([2, 6, 6, 1], act, int(rng.integers(1 << 31)))
            x = rng.normal(size=(3, 2))
            shapes = p.shapes()
            fn = lambda v: ad.sum(ad.mlp_apply(ad.unflatten(v, shapes), x, act))
            if act == "leaky_relu":
                # kinks make FD meaningless; keep draws where no unit sits near one
                z = x
                near = False
                for w, b in p.layers[:-1]:
                    z = z @ w.T + b
                    near |= bool(np.min(np.abs(z)) < 1e-2)
                    z = np.where(z >= 0, z, 0.2 * z)
                if near:
                    continue
            worst = max(worst, ad.gradcheck(fn, p.flatten(), 1e-4))
    yield _le("autodiff", "first-order-gradcheck", worst, 1e-4)

    worst = 0.0
    for seed in range(10):
        p = ad.MlpParams.init([2, 5, 5, 1], "tanh", int(rng.integers(1 << 31)))
        x = rng.normal(size=2)
        g = ad.grad_gradnorm_params(p, x)
        flat = p.flatten()
        for i in range(flat.size):
            h = 1e-4 * max(1.0, abs(flat[i]))
            up, dn = flat.copy(), flat.copy()
            up[i] += h
            dn[i] -= h
            fd = (np.sum(ad.grad_input(p.from_flat(up), x) ** 2) - np.sum(ad.grad_input(p.from_flat(dn), x) ** 2)) / (2 * h)
            worst = max(worst, abs(g[i] - fd) / max(1.0, abs(fd)))
    yield _le("autodiff", "double-backprop", worst, 1e-4)

    p = ad.MlpParams.init([2, 8, 1], "tanh", 0)
    rec = ad.record_forward(p, rng.normal(size=(4, 2)))
    ad.input_grad_sqnorm(rec)
    yield _ok("autodiff", "tape-replay", rec.tape.replay_matches())


def _transport(rng, inject):
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(2, 8))
        a, b = rng.normal(size=(n, 2)), rng.normal(size=(n, 2))
        worst = max(worst, abs(w1_exact(a, b) - w1_bruteforce(a, b)))
    yield _le("transport", "oracle-equivalence", worst, 1e-12)
    a = rng.normal(size=(64, 2))
    yield _le("transport", "translation", abs(w1_exact(a, a + [1.0, 0.0]) - 1.0), 1e-9)
    b = rng.normal(size=(64, 2))
    yield _ok("transport", "symmetry", w1_exact(a, b) == w1_exact(b, a))


def _gan2d(rng, inject):
    for kind in ("r1", "r2", "wgangp"):
        worst = 0.0
        for _ in range(3):
            disc = ad.MlpParams.init([2, 5, 5, 1], "tanh", int(rng.integers(1 << 31)))
            real, fake = rng.normal(size=(2, 5, 2))
            t = rng.uniform(size=(5, 1))
            _, g = penalty(kind, disc, real, fake, 2.0, 1.0, t=t)
            flat = disc.flatten()
            for i in range(flat.size):
                h = 1e-5 * max(1.0, abs(flat[i]))
                vals = []
                for sgn in (1, -1):
                    v = flat.copy()
                    v[i] += sgn * h
                    vals.append(penalty(kind, disc.from_flat(v), real, fake, 2.0, 1.0, t=t)[0])
                fd = (vals[0] - vals[1]) / (2 * h)
                worst = max(worst, abs(g[i] - fd) / max(1.0, abs(fd)))
        yield _le("gan2d", f"penalty-gradient-{kind}", worst, 1e-3)
    for k in range(2):
        rep = verify_equilibrium_jacobian(EquilibriumArch(), n=16, seed=int(rng.integers(1 << 31)))
        for name, ok in rep.checks.items():
            yield CheckResult("gan2d", f"equilibrium-{name}[{k}]", ok, rep.discrepancies[name], rep.tolerances[name])


_SUITE_FNS = {
    "objectives": _objectives,
    "dirac": _dirac,
    "spectral": _spectral,
    "autodiff": _autodiff,
    "transport": _transport,
    "gan2d": _gan2d,
}


def run_verify(selection: Optional[Iterable[str]] = None, inject: Optional[str] = None, seed: int = 0) -> VerifyReport:
    """Run the selected suites (all by default); exceptions become failed checks."""
    selection = list(SUITES) if not selection else list(selection)
    unknown = [s for s in selection if s not in SUITES]
    if unknown:
        raise ConfigurationError(f"unknown suite(s) {unknown}; choose from {SUITES}")
    if inject is not None and inject not in FAULTS:
        raise ConfigurationError(f"unknown fault {inject!r}; choose from {FAULTS}")
    results = []
    for name in SUITES:
        if name not in selection:
            continue
        rng = np.random.default_rng([seed, SUITES.index(name)])
        try:
            for res in _SUITE_FNS[name](rng, inject):
                results.append(res)
        except Exception as exc:  # a crash is a failure, reported with its cause
            results.append(CheckResult(name, "suite-crashed", False, detail="".join(traceback.format_exception_only(exc)).strip()))
    return VerifyReport(results, inject)
