import math

import numpy as np
import pytest

from qbsde.lattice import Lattice
from qbsde.models import BUILTIN_NAMES, ModelWarning, builtin, custom


@pytest.mark.parametrize("name", BUILTIN_NAMES)
def test_builtin_invariants(name):
    p = builtin(name)
    assert p.T == 1.0 and p.c_y == 0.0 and p.has_reference
    assert math.isfinite(p.g_bound)
    rng = np.random.default_rng(0)
    # sampled on the positive orthant, where the GBM coordinates live
    x = np.exp(rng.normal(scale=1.0, size=(2000, p.dim)))
    y = np.exp(rng.normal(scale=1.0, size=(2000, p.dim)))
    gx, gy = p.g(x), p.g(y)
    assert np.max(np.abs(gx)) <= p.g_bound + 1e-12
    assert np.max(np.abs(gx - gy) / np.linalg.norm(x - y, axis=1)) <= p.g_lipschitz + 1e-12
    np.testing.assert_array_equal(p.g(x), gx)  # pure


def test_model_ii():
    p = builtin("model_II")
    assert (p.dim, p.a, p.nu) == (3, 5.0, 1.0)
    x = np.array([[0.3, 1.2, 2.0]])
    assert p.g(x)[0] == pytest.approx(3 * np.sum(np.sin(x) ** 2))
    np.testing.assert_array_equal(p.x0, [1.0, 1.0, 1.0])


def test_d1_alpha():
    p = builtin("d1_alpha")
    assert (p.dim, p.a, p.nu) == (1, 5.0, 0.4)
    np.testing.assert_array_equal(p.x0, [1.0])


def test_model_iv_parse():
    p = builtin("model_IV")
    assert p.a == 4.0
    # (3 min [x1 - x2]_+) + [2 - x3]_+
    assert p.g(np.array([[10.0, 1.0, 0.5]]))[0] == pytest.approx(3.0 + 1.5)
    assert p.g(np.array([[1.0, 2.0, 3.0]]))[0] == 0.0


def test_two_dimensional_models():
    assert builtin("d2_fig1").a == 1.0 and builtin("d2_fig2").a == 3.5
    assert builtin("d2_fig1").dim == 2


def test_unknown_name():
    with pytest.raises(KeyError, match="unknown model"):
        builtin("model_V")


def test_lattices_cover_the_terminal_law():
    # every registered lattice reaches at least 2.5 terminal standard deviations above x0
    for name in BUILTIN_NAMES:
        p = builtin(name)
        delta, kappa = p.lattice
        sd = p.x0[0] * math.sqrt(math.exp(p.nu**2) - 1)
        assert Lattice(p.dim, delta, kappa, p.x0).radius >= 2.5 * sd


class TestCustom:
    def test_unbounded_rejected(self):
        with pytest.raises(ValueError, match="bounded"):
            custom(dict(dim=1, g=np.sin, g_bound=math.inf, g_lipschitz=1.0, x0=[0.0], nu=1.0, a=1.0))

    def test_missing_constants(self):
        with pytest.raises(ValueError, match="missing: .*g_lipschitz"):
            custom(dict(dim=1, g=np.sin, g_bound=1.0, x0=[0.0], nu=1.0, a=1.0))
        with pytest.raises(ValueError, match="driver or a"):
            custom(dict(dim=1, g=np.sin, g_bound=1.0, g_lipschitz=1.0, x0=[0.0], nu=1.0))

    def test_duplicate_of_model_i(self):
        ref = builtin("model_I")
        p = custom(dict(dim=3, g=lambda x: 3 * np.sin(np.sum(x, axis=-1)) ** 2, g_bound=3.0,
                        g_lipschitz=3 * math.sqrt(3), x0=[1, 1, 1], nu=1.0, a=5.0))
        x = np.random.default_rng(4).uniform(0, 3, (100, 3))
        np.testing.assert_array_equal(p.g(x), ref.g(x))
        np.testing.assert_array_equal(p.coeffs.sigma(x), ref.coeffs.sigma(x))
        assert p.driver(x, np.zeros(100), x).tolist() == ref.driver(x, np.zeros(100), x).tolist()

    def test_misstated_lipschitz_warns(self):
        with pytest.warns(ModelWarning, match="Lipschitz"):
            custom(dict(dim=1, g=lambda x: np.sin(5 * x[..., 0]), g_bound=1.0, g_lipschitz=1.0, x0=[0.0],
                        nu=1.0, a=1.0))

    def test_misstated_bound_warns(self):
        with pytest.warns(ModelWarning, match="exceeds g_bound"):
            custom(dict(dim=1, g=lambda x: 2 * np.tanh(x[..., 0]), g_bound=1.0, g_lipschitz=2.0, x0=[0.0],
                        nu=1.0, a=1.0))

    def test_reference_needs_quadratic_family(self):
        p = custom(dict(dim=1, g=lambda x: np.tanh(x[..., 0]), g_bound=1.0, g_lipschitz=1.0, x0=[0.0],
                        nu=1.0, a=1.0, c_y=0.5))
        with pytest.raises(ValueError, match="closed-form"):
            p.reference_spec()
