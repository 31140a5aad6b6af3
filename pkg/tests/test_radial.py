import numpy as np
import pytest

from gldeg.radial import annulus_profile, disk_profile


def _ode_residual(prof, r, d, eps, h=1e-4):
    f, fp = prof(r)
    fpp = (prof(r + h)[1] - prof(r - h)[1]) / (2 * h)
    return fpp + fp / r - d * d * f / r ** 2 + f * (1 - f ** 2) / eps ** 2


@pytest.mark.parametrize("d", [1, 2])
def test_disk_profile(d):
    eps = 0.2
    p = disk_profile(d, eps)
    r = np.linspace(0.05, 0.95, 30)
    assert np.isclose(p(1.0)[0], 1.0, atol=1e-8)
    assert np.all(np.diff(p(r)[0]) > 0) and np.all(p(r)[0] < 1)
    assert np.max(np.abs(_ode_residual(p, r, d, eps))) < 1e-4


def test_annulus_profile():
    eps = 0.1
    p = annulus_profile(0.3, 1, eps)
    assert np.allclose(p(np.array([0.3, 1.0]))[0], 1.0)
    r = np.linspace(0.35, 0.95, 20)
    f = p(r)[0]
    assert np.all(f < 1) and np.all(f > 0.8)
    assert np.max(np.abs(_ode_residual(p, r, 1, eps))) < 1e-3
