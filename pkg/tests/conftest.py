import numpy as np
import pytest

from mglbo.kernels import Region


def make_region(center, radius, hessian=None, min_point=None, min_value=-1.0):
    center = np.atleast_1d(np.asarray(center, float))
    d = center.size
    H = np.eye(d) if hessian is None else np.asarray(hessian, float)
    xs = center if min_point is None else np.asarray(min_point, float)
    beta1 = -H @ xs
    beta0 = min_value - beta1 @ xs - 0.5 * xs @ H @ xs
    return Region(center, float(radius), float(beta0), beta1, H, xs, float(min_value), ())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def dense_posterior(X, y, Xs, kfun, c_mu, jitter):
    """Reference posterior through an explicit matrix inverse."""
    K = np.array([[kfun(a, b) for b in X] for a in X]) + jitter * np.eye(len(X))
    Kinv = np.linalg.inv(K)
    ks = np.array([[kfun(a, b) for b in X] for a in Xs])
    kss = np.array([kfun(a, a) for a in Xs])
    mean = c_mu + ks @ Kinv @ (y - c_mu)
    var = kss - np.einsum("ij,jk,ik->i", ks, Kinv, ks)
    return mean, var


def random_spd(d, rng, lo=1.0, hi=10.0):
    Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    return Q @ np.diag(rng.uniform(lo, hi, d)) @ Q.T


def quadratic_cloud(d, seed, sign=1.0, gap=0.055):
    """Samples of ``y0 + sign * 0.5 (x - m)' H (x - m)`` with one well isolated seed.

    The seed sits next to the minimizer ``m`` with ``N_U - 1`` tight
    neighbours; ``N_U + 1`` further samples lie on shells around the seed
    whose radii grow by ``gap``, so every kNN ball from ``N_U`` up to
    ``2 N_U`` points leaves the next sample more than 0.05 away.
    Returns ``(points, values, H, m, y0)``.
    """
    from mglbo.regions import n_unknowns

    rng = np.random.default_rng(seed)
    nu = n_unknowns(d)
    H = random_spd(d, rng)
    m = np.full(d, 0.12)
    y0 = -1.5
    seed_pt = m + rng.uniform(0.002, 0.004, d)
    tight = seed_pt + rng.uniform(-0.015, 0.015, (nu - 1, d))
    radii = 0.03 + gap * np.arange(1, nu + 2)
    dirs = np.abs(rng.standard_normal((nu + 1, d)))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    shells = seed_pt + radii[:, None] * dirs
    X = np.vstack([seed_pt, tight, shells])
    D = X - m
    y = y0 + sign * 0.5 * np.einsum("ij,jk,ik->i", D, H, D)
    return X, y, H, m, y0


ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record one ``PASS``/``FAIL`` line per acceptance criterion."""
    lines = request.config.stash.setdefault(ACCEPTANCE_KEY, [])

    def report(number, title, ok, detail):
        line = f"criterion {number} {'PASS' if ok else 'FAIL'}: {title} ({detail})"
        lines.append(line)
        print(line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
