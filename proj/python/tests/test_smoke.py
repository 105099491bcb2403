import json
import os

import numpy as np
import pytest

import garmentgen as gg

SCENES = os.path.join(os.path.dirname(__file__), "..", "..", "data", "scenes")


def test_version():
    assert gg.__version__.count(".") == 2


def test_mesh_round_trip(tmp_path):
    ball = gg.make_icosphere(2, 0.5)
    assert ball.num_faces == 320
    path = str(tmp_path / "ball.obj")
    gg.save_mesh(ball, path)
    again = gg.load_mesh(path)
    np.testing.assert_allclose(again.vertices, ball.vertices)
    assert (again.faces == ball.faces).all()


def test_bad_mesh_raises():
    with pytest.raises(ValueError):
        gg.TriMesh(np.zeros((3, 3)), np.array([[0, 1, 5]]))
    with pytest.raises(gg.MeshError):
        gg.load_mesh("/nonexistent.obj")


def test_identity_jacobians_reproduce_template():
    tube = gg.make_tube(0.5, -1.0, 1.0, 16, 8)
    sys = gg.PoissonSystem(tube)
    x = sys.solve(np.tile(np.eye(3), (sys.num_faces, 1, 1)))
    np.testing.assert_allclose(x, tube.vertices, atol=1e-9)


def test_losses_and_oracles():
    rng = np.random.default_rng(0)
    pts = rng.uniform(-1, 1, (100, 3))
    value, grad = gg.symmetry_loss(np.vstack([pts, pts * [-1, 1, 1]]))
    assert value == 0.0
    assert grad.shape == (200, 3)
    a, b = rng.uniform(-1, 1, (50, 3)), rng.uniform(-1, 1, (60, 3))
    d2 = ((a[:, None, :] - b[None, :, :]) ** 2).sum(-1)
    assert gg.chamfer_distance(a, b) == pytest.approx(d2.min(1).mean() + d2.min(0).mean(), rel=1e-12)
    body = gg.BodySdf(gg.make_icosphere(3))
    value, _ = gg.collision_loss(np.array([[3.0, 0, 0]]), body)
    assert value == 0.0
    cyl = gg.BlockingCylinder([0, 0, 0], [1, 0, 0], 0.5)
    value, grad = gg.blocking_loss(np.array([[0.2, 0, 0]]), [cyl])
    assert value == pytest.approx(0.2)
    np.testing.assert_allclose(grad, [[1, 0, 0]])


def test_reweighting_worked_table():
    out = gg.reweight_side_views(np.array([[0.5, 0.2, 0.3]]), 0, 2)
    assert out[0, 1] == pytest.approx(0.04, abs=1e-15)
    assert out[0, 0] == 0.5 and out[0, 2] == 0.3


def test_attention_without_mirror_is_distance_kernel():
    pts = np.array([[-1.0, 0, 0], [1.0, 0, 0], [0, 1.0, 0]])
    bias = gg.symmetric_attention_bias(pts, pts, 1.0, 0.0, 0.5)
    d2 = ((pts[:, None] - pts[None]) ** 2).sum(-1)
    np.testing.assert_allclose(bias, np.log(np.exp(-d2 / 0.5) + 1e-12), rtol=1e-12)


def test_short_deformation_reduces_penetration():
    body, sleeve, cylinders = gg.sleeve_scene()
    sdf = gg.BodySdf(body)
    before = gg.penetrating_fraction(sleeve, sdf, 5000, 1)
    mesh, trace = gg.deform(sleeve, body, cylinders, iterations=100, num_samples=2000, seed=3)
    assert trace.shape == (100, 8)
    assert gg.penetrating_fraction(mesh, sdf, 5000, 1) < before
    mesh2, trace2 = gg.deform(sleeve, body, cylinders, iterations=100, num_samples=2000, seed=3)
    assert (trace == trace2).all()


def test_cli_entry(tmp_path):
    code, out, err = gg.run_cli(["deform", "--print-config"])
    assert code == 0
    assert json.loads(out)["weights"]["lambda_coll"] == 5e5
    code, out, _ = gg.run_cli(["validate", "--mesh", os.path.join(SCENES, "sleeve.obj")])
    assert code == 0 and "uvs: yes" in out
    code, _, _ = gg.run_cli(["render", "--mesh", os.path.join(SCENES, "sleeve.obj"), "--out", str(tmp_path), "--views", "0"])
    assert code == 1
