"""Self-checks run by ``bido selftest``: estimators against slow oracles,
analytic gradients against finite differences, and permutation calibration.

Each check returns a :class:`CheckResult`. ``run_selftest`` runs them in a
fixed order with fixed seeds, so two runs print the same lines.
"""

from dataclasses import dataclass

import numpy as np

from .dependency import DependencyMeasureConfig, coco, dependency_gradient_wrt_z, hsic
from .kernels import KernelDescriptor, gaussian_gram, linear_gram
from .model import mlp
from .numerics import center_gram, finite_diff_check
from .oracles import central_interval_contains, coco_svd, hsic_naive, permutation_null
from .training import BiDOConfig, bido_objective, objective_and_param_grads


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self):
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def random_gram_pair(rng, n=8):
    """Two Gaussian Grams over loosely dependent samples."""
    x = rng.normal(size=(n, 3))
    y = np.tanh(x[:, :2]) + 0.3 * rng.normal(size=(n, 2))
    return gaussian_gram(x, 1.5).matrix, gaussian_gram(y, 1.0).matrix


def _rel(a, b):
    return abs(a - b) / max(abs(b), 1e-300)


def check_hsic_oracle(hsic_fn=hsic, pairs=50, tol=1e-12, seed=0):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(pairs):
        K, L = random_gram_pair(rng)
        worst = max(worst, _rel(hsic_fn(K, L).value, hsic_naive(K, L)))
    return CheckResult("hsic-oracle", worst < tol,
                       f"max relative error {worst:.3e} over {pairs} pairs (tol {tol:g})")


def check_coco_oracle(coco_fn=coco, pairs=50, tol=1e-9, seed=1):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(pairs):
        K, L = random_gram_pair(rng)
        worst = max(worst, _rel(coco_fn(K, L).value, coco_svd(K, L)))
    return CheckResult("coco-oracle", worst < tol,
                       f"max relative error {worst:.3e} over {pairs} pairs (tol {tol:g})")


def calibration_rate(hsic_fn=hsic, n=64, trials=40, n_perm=1000, coverage=0.99, seed=0):
    """Fraction of independent-data trials whose HSIC sits inside the central
    ``coverage`` band of its permutation null."""
    rng = np.random.default_rng([seed, n])
    inside = 0
    for _ in range(trials):
        x = rng.normal(size=(n, 2))
        y = rng.normal(size=(n, 2))
        K, L = gaussian_gram(x, 1.0).matrix, gaussian_gram(y, 1.0).matrix
        null = permutation_null(K, L, n_perm, rng, statistic=lambda a, b: hsic_fn(a, b).value)
        inside += central_interval_contains(hsic_fn(K, L).value, null, coverage)
    return inside / trials


def check_calibration(hsic_fn=hsic, sizes=(32, 64, 128), trials=40, n_perm=1000, need=0.95):
    rates = {n: calibration_rate(hsic_fn, n, trials, n_perm) for n in sizes}
    ok = all(r >= need for r in rates.values())
    text = ", ".join(f"N={n}: {r:.3f}" for n, r in rates.items())
    return CheckResult("permutation-calibration", ok, f"inside-99% rates {text} (need {need})")


def check_permutation_power(hsic_fn=hsic, seed=11):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, size=(64, 1))
    K, L = gaussian_gram(x, 0.5).matrix, gaussian_gram(np.sin(3 * x), 0.5).matrix
    null = permutation_null(K, L, 500, rng, statistic=lambda a, b: hsic_fn(a, b).value)
    value = hsic_fn(K, L).value
    q = float(np.quantile(null, 0.99))
    return CheckResult("permutation-power", value > q,
                       f"dependent pair HSIC {value:.4e} vs null 99th percentile {q:.4e}")


def check_measure_gradients(seeds=5):
    worst = {"hsic": 0.0, "coco": 0.0}
    for measure, tol, step in (("hsic", 1e-4, 1e-5), ("coco", 1e-3, 1e-6)):
        cfg = DependencyMeasureConfig(measure, kernel_z=KernelDescriptor("gaussian", 2.0))
        done, seed = 0, 0
        while done < seeds:
            rng = np.random.default_rng(seed)
            seed += 1
            z = rng.normal(size=(6, 4))
            other = gaussian_gram(rng.normal(size=(6, 3)), 1.0)
            if measure == "coco" and not _gap_ok([(other.matrix, cfg.gram_z(z).matrix)]):
                continue

            def f(zz):
                return cfg.value(other.matrix, cfg.gram_z(zz).matrix).value

            def g(zz):
                return dependency_gradient_wrt_z(cfg, other, zz, z_first=False)

            rep = finite_diff_check(f, g, z, step=step, tolerance=tol)
            worst[measure] = max(worst[measure], rep.max_relative_error)
            if not rep.passed:
                return CheckResult("measure-gradients", False,
                                   f"{measure} seed {seed - 1}: relative error "
                                   f"{rep.max_relative_error:.3e} (tol {tol:g})")
            done += 1
    return CheckResult("measure-gradients", True,
                       f"max relative error hsic {worst['hsic']:.3e}, coco {worst['coco']:.3e}")


def _gap_ok(pairs, ratio=0.1):
    """Top two singular values of every centered product differ by ``ratio * s_max``."""
    for K, L in pairs:
        s = np.linalg.svd(center_gram(K) @ center_gram(L), compute_uv=False)
        if not s[0] - s[1] > ratio * s[0]:
            return False
    return True


def probe_batch(seed=7):
    rng = np.random.default_rng(seed)
    x = rng.uniform(size=(8, 3))
    y = np.eye(3)[[0, 1, 2, 0, 1, 2, 0, 1]]
    return x, y


def probe_model(seed, d=3, hidden=(4, 3), k=3):
    """Small two-tap network with random biases, so that no ReLU sits exactly at its kink."""
    model = mlp(d, hidden, k, seed=seed)
    rng = np.random.default_rng([seed, 99])
    for p in model.params:
        if p is not None:
            p["b"] = rng.normal(scale=0.3, size=p["b"].shape)
    return model


def probe_smooth(model, x, margin=1e-4):
    """True if every ReLU input is at least ``margin`` away from zero."""
    trace = model.forward(x)
    for i, layer in enumerate(model.layers[:-1]):
        if layer.kind == "dense" and model.layers[i + 1].kind == "relu":
            if np.min(np.abs(trace.activations[i])) < margin:
                return False
    return True


def probe_gap_ok(model, x, y, measure):
    trace = model.forward(x)
    Kx, Ky = measure.gram_x(x).matrix, measure.gram_y(y).matrix
    pairs = []
    for z in trace.taps:
        Kz = measure.gram_z(z).matrix
        pairs += [(Kx, Kz), (Kz, Ky)]
    return _gap_ok(pairs)


def objective_gradient_error(model, x, y, config, tolerance, step=1e-6):
    theta0 = model.get_flat()

    def f(theta):
        model.set_flat(theta)
        return bido_objective(model.forward(x), y, config).value

    def g(theta):
        model.set_flat(theta)
        return model.flatten_grads(objective_and_param_grads(model, x, y, config)[1])

    try:
        return finite_diff_check(f, g, theta0, step=step, tolerance=tolerance)
    finally:
        model.set_flat(theta0)


def check_objective_gradient(measure="hsic", probes=3, tolerance=None):
    """Full objective on a 43-parameter, two-tap probe network."""
    tolerance = tolerance or (1e-4 if measure == "hsic" else 1e-3)
    config = BiDOConfig("bilateral", DependencyMeasureConfig(measure), 2.0, 20.0)
    x, y = probe_batch()
    worst, done, seed = 0.0, 0, 0
    while done < probes and seed < 200:
        model = probe_model(seed)
        seed += 1
        if not probe_smooth(model, x):
            continue
        if measure == "coco" and not probe_gap_ok(model, x, y, config.measure):
            continue
        rep = objective_gradient_error(model, x, y, config, tolerance)
        worst = max(worst, rep.max_relative_error)
        if not rep.passed:
            return CheckResult(f"objective-gradient-{measure}", False,
                               f"probe seed {seed - 1}: relative error "
                               f"{rep.max_relative_error:.3e} (tol {tolerance:g})")
        done += 1
    ok = done == probes
    return CheckResult(f"objective-gradient-{measure}", ok,
                       f"max relative error {worst:.3e} over {done} probes (tol {tolerance:g})")


def check_linear_kernel_gradient():
    rng = np.random.default_rng(5)
    cfg = DependencyMeasureConfig("hsic", kernel_z=KernelDescriptor("linear"))
    z = rng.normal(size=(7, 3))
    other = linear_gram(np.eye(3)[rng.integers(0, 3, 7)])

    def f(zz):
        return cfg.value(other.matrix, cfg.gram_z(zz).matrix).value

    rep = finite_diff_check(f, lambda zz: dependency_gradient_wrt_z(cfg, other, zz), z,
                            step=1e-5, tolerance=1e-6)
    return CheckResult("linear-kernel-gradient", rep.passed,
                       f"max relative error {rep.max_relative_error:.3e}")


def run_selftest(hsic_fn=hsic, coco_fn=coco, emit=print):
    """Run every check in order; return ``(all_passed, results)``.

    The first failure is also reported on its own line prefixed ``first failure``.
    """
    checks = [
        lambda: check_hsic_oracle(hsic_fn),
        lambda: check_coco_oracle(coco_fn),
        check_measure_gradients,
        check_linear_kernel_gradient,
        lambda: check_objective_gradient("hsic"),
        lambda: check_objective_gradient("coco"),
        lambda: check_calibration(hsic_fn),
        lambda: check_permutation_power(hsic_fn),
    ]
    results = []
    for check in checks:
        res = check()
        results.append(res)
        emit(res.line())
    failed = [r for r in results if not r.passed]
    if failed:
        emit(f"first failure: {failed[0].name}")
    return not failed, results
