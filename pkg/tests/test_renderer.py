import numpy as np
import pytest

from dualscore.camera import pose_from_spherical
from dualscore.field import ParamGradient
from dualscore.renderer import RenderConfig, render, render_backward


class UniformMedium:
    """Constant density inside the unit sphere, constant color."""

    def __init__(self, sigma, color=(0.3, 0.5, 0.7)):
        self.sigma = sigma
        self.color = np.asarray(color, dtype=float)

    def query_batch(self, pts, dirs):
        inside = np.einsum("mi,mi->m", pts, pts) <= 1.0
        sigma = np.where(inside, self.sigma, 0.0)
        return sigma, np.tile(self.color, (len(pts), 1))


def front_pose(res=33, fov=40.0, dist=2.2):
    return pose_from_spherical(0.0, 0.0, dist, fov, res)


def test_zero_density_gives_background():
    view = render(UniformMedium(0.0), front_pose(), RenderConfig(n_samples=32))
    np.testing.assert_array_equal(view.rgb, 1.0)
    np.testing.assert_array_equal(view.opacity, 0.0)


@pytest.mark.parametrize("sigma", [0.5, 2.0, 10.0])
def test_homogeneous_opacity_matches_beer_lambert(sigma):
    # diameter ray: chord length 2, closed form 1 - exp(-2 sigma)
    view = render(UniformMedium(sigma), front_pose(33),
                  RenderConfig(n_samples=256))
    expected = 1.0 - np.exp(-2.0 * sigma)
    assert abs(view.opacity[16, 16] - expected) <= 1e-3


def test_quadrature_convergence_128_to_256():
    a = render(UniformMedium(2.0), front_pose(), RenderConfig(n_samples=128))
    b = render(UniformMedium(2.0), front_pose(), RenderConfig(n_samples=256))
    assert abs(a.opacity[16, 16] - b.opacity[16, 16]) < 1e-3


def test_opaque_sphere_saturates():
    view = render(UniformMedium(500.0, (1.0, 0.0, 0.0)), front_pose(33),
                  RenderConfig(n_samples=256))
    center = view.rgb[16, 16]
    np.testing.assert_allclose(center, [1.0, 0.0, 0.0], atol=1e-2)
    assert view.opacity[16, 16] >= 0.999


def test_energy_bound(small_field, rng):
    small_field.grid[...] = rng.uniform(-3, 3, small_field.grid.shape)
    view = render(small_field, front_pose(16), RenderConfig(n_samples=64))
    assert np.all(view.opacity <= 1.0 + 1e-12)
    assert np.all(view.opacity >= 0.0)


def test_forward_determinism_with_seed(small_field):
    cfg = RenderConfig(n_samples=16)
    a = render(small_field, front_pose(16), cfg, np.random.default_rng(3))
    b = render(small_field, front_pose(16), cfg, np.random.default_rng(3))
    assert a.rgb.tobytes() == b.rgb.tobytes()


def test_miss_pixels_are_background():
    pose = front_pose(32, fov=60.0, dist=3.0)  # corners miss the sphere
    view = render(UniformMedium(5.0), pose, RenderConfig(n_samples=32))
    miss = ~view.sample_cache.hit
    assert miss.any()
    np.testing.assert_array_equal(view.rgb[miss], 1.0)
    np.testing.assert_array_equal(view.opacity[miss], 0.0)


def test_zero_pixel_grad_gives_zero_gradient(small_field):
    view = render(small_field, front_pose(8), RenderConfig(n_samples=16))
    grad = render_backward(view, np.zeros((8, 8, 3)))
    assert grad.global_norm() == 0.0


def test_background_pixel_gradient_exactly_zero(small_field):
    pose = front_pose(16, fov=60.0, dist=3.0)
    view = render(small_field, pose, RenderConfig(n_samples=16))
    miss = ~view.sample_cache.hit
    assert miss.any()
    pixel_grad = np.zeros((16, 16, 3))
    pixel_grad[miss] = 1.0  # only background pixels carry upstream signal
    grad = render_backward(view, pixel_grad)
    assert grad.global_norm() == 0.0


def test_backward_matches_finite_differences(small_field, rng):
    fld = small_field
    pose = front_pose(8, fov=45.0, dist=1.8)
    cfg = RenderConfig(n_samples=16)
    g = rng.standard_normal((8, 8, 3))
    grad = render_backward(render(fld, pose, cfg), g)

    def objective():
        return float(np.sum(render(fld, pose, cfg).rgb * g))

    h = 1e-4
    params = [(fld.grid, grad.grid)] + [
        (arr, garr) for (W, b), (gW, gb) in zip(fld.layers, grad.layers)
        for arr, garr in ((W, gW), (b, gb))]
    checked = 0
    for arr, garr in params:
        idx = rng.choice(arr.size, size=min(20, arr.size), replace=False)
        for i in idx:
            orig = arr.flat[i]
            arr.flat[i] = orig + h
            up = objective()
            arr.flat[i] = orig - h
            dn = objective()
            arr.flat[i] = orig
            fd = (up - dn) / (2.0 * h)
            an = garr.flat[i]
            if min(abs(fd), abs(an)) < 1e-6:
                assert abs(fd - an) <= 1e-6
            else:
                assert abs(fd - an) / max(abs(fd), abs(an)) <= 1e-3
            checked += 1
    assert checked >= 100


def test_missing_cache_rejected(small_field):
    view = render(small_field, front_pose(8), RenderConfig(n_samples=8))
    view.sample_cache = None
    with pytest.raises(ValueError, match="cache"):
        render_backward(view, np.zeros((8, 8, 3)))


def test_backward_is_param_gradient(small_field):
    view = render(small_field, front_pose(8), RenderConfig(n_samples=8))
    grad = render_backward(view, np.ones((8, 8, 3)))
    assert isinstance(grad, ParamGradient)
    assert grad.all_finite()
