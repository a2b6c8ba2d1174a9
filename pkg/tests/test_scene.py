import numpy as np
import pytest

from dualscore.errors import ConfigurationError
from dualscore.scene import (BUILTIN_SCENES, Primitive, SyntheticScene,
                             load_scene, make_shell_scene, make_sphere_scene,
                             make_two_box_scene, save_scene, scene_from_dict)


def test_sphere_membership():
    scene = make_sphere_scene()
    pts = np.array([[0.0, 0.0, 0.0], [0.49, 0.0, 0.0], [0.51, 0.0, 0.0],
                    [0.9, 0.9, 0.9]])
    sigma, rgb = scene.query_batch(pts)
    np.testing.assert_array_equal(sigma, [5.0, 5.0, 0.0, 0.0])
    np.testing.assert_array_equal(rgb[0], [0.8, 0.1, 0.1])
    np.testing.assert_array_equal(rgb[2], 0.5)


def test_box_membership_is_axis_aligned():
    scene = make_two_box_scene()
    # corner of the first box: center (-0.35, 0, -0.15), half 0.25
    inside = np.array([[-0.35 + 0.24, 0.24, -0.15 + 0.24]])
    outside = np.array([[-0.35 + 0.26, 0.0, -0.15]])
    assert scene.query_batch(inside)[0][0] == 5.0
    assert scene.query_batch(outside)[0][0] == 0.0


def test_painter_order_last_primitive_wins():
    scene = make_shell_scene()
    sigma, rgb = scene.query_batch(np.array([[0.0, 0.0, 0.0],
                                             [0.45, 0.0, 0.0]]))
    # inner sphere overrides the outer one at the origin
    assert sigma[0] == 0.05
    assert sigma[1] == 1.5
    np.testing.assert_array_equal(rgb[1], [0.4, 0.6, 0.9])


def test_occupancy_threshold():
    scene = make_shell_scene()
    pts = np.array([[0.0, 0.0, 0.0], [0.45, 0.0, 0.0]])
    np.testing.assert_array_equal(scene.occupancy(pts, 1.0), [False, True])
    np.testing.assert_array_equal(scene.occupancy(pts, 0.01), [True, True])


def test_primitive_validation():
    with pytest.raises(ConfigurationError):
        Primitive("cone", (0, 0, 0), 0.5, (1, 0, 0), 1.0)
    with pytest.raises(ConfigurationError):
        Primitive("sphere", (0, 0, 0), 0.5, (1, 0, 0), 0.0)
    with pytest.raises(ConfigurationError):
        Primitive("sphere", (0, 0, 0), 0.5, (1.5, 0, 0), 1.0)
    with pytest.raises(ConfigurationError):
        Primitive("sphere", (0.8, 0, 0), 0.5, (1, 0, 0), 1.0)  # pokes out


def test_scene_json_round_trip(tmp_path):
    scene = make_two_box_scene()
    path = tmp_path / "scene.json"
    save_scene(scene, path)
    loaded = load_scene(path)
    assert loaded.key() == scene.key()
    pts = np.random.default_rng(0).uniform(-1, 1, (50, 3))
    s1, c1 = scene.query_batch(pts)
    s2, c2 = loaded.query_batch(pts)
    np.testing.assert_array_equal(s1, s2)
    np.testing.assert_array_equal(c1, c2)


def test_unknown_primitive_key_rejected():
    with pytest.raises(ConfigurationError, match="unknown keys"):
        scene_from_dict({"name": "x", "primitives": [
            {"shape": "sphere", "center": [0, 0, 0], "size": 0.3,
             "color": [1, 0, 0], "density": 1.0, "glow": True}]})


def test_invalid_json_rejected(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(ConfigurationError, match="invalid scene file"):
        load_scene(path)


def test_builtin_scenes_match_shipped_files():
    import pathlib
    root = pathlib.Path(__file__).resolve().parent.parent / "scenes"
    for name, make in BUILTIN_SCENES.items():
        assert load_scene(root / f"{name}.json").key() == make().key()


def test_scene_key_stable_under_primitive_order():
    a = SyntheticScene("s", [
        Primitive("sphere", (0.0, 0.0, 0.0), 0.4, (1, 0, 0), 1.0)])
    b = SyntheticScene("s", [
        Primitive("sphere", (0.0, 0.0, 0.0), 0.4, (1, 0, 0), 1.0)])
    assert a.key() == b.key()
    c = SyntheticScene("s", [
        Primitive("sphere", (0.0, 0.0, 0.0), 0.4, (0, 1, 0), 1.0)])
    assert a.key() != c.key()
