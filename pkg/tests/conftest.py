import numpy as np
import pytest

import cdefit as c


@pytest.fixture(scope="session")
def small_instance():
    """The fixed seeded n=50, m=20, kernel A instance used by oracle checks."""
    data = c.gen_model("I", 50, seed=42)
    domain = c.domain_from_data(data.ys)
    grid = c.make_grid(domain, 20)
    return data, grid, c.kernel_a()


@pytest.fixture(scope="session")
def small_direct_theta(small_instance):
    data, grid, fm = small_instance
    return c.direct_fit(data, fm, grid, tol=1e-10)


def random_instance(seed, n=8, m=5, fm=None):
    """A small random dataset/grid pair for derivative and identity checks."""
    rng = np.random.default_rng(seed)
    fm = fm or c.kernel_a()
    xs = rng.uniform(-1.0, 1.0, size=(n, fm.x_dim))
    ys = rng.uniform(-1.5, 2.0, size=n)
    data = c.Dataset(xs=xs, ys=ys)
    domain = c.Domain(float(ys.min()) - 0.3, float(ys.max()) + 0.3)
    grid = c.make_grid(domain, m)
    return data, grid, fm


def finite_diff_gradient(f, theta, rel_step=1e-5):
    """Central differences with per-coordinate steps rel_step*max(1, |theta_k|)."""
    theta = np.asarray(theta, dtype=float)
    grad = np.zeros_like(theta)
    for k in range(theta.size):
        h = rel_step * max(1.0, abs(theta[k]))
        up, dn = theta.copy(), theta.copy()
        up[k] += h
        dn[k] -= h
        grad[k] = (f(up) - f(dn)) / (2.0 * h)
    return grad
