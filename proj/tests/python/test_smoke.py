"""Smoke tests for the python bindings: every exposed operation runs and
returns sane shapes/values on a tiny synthetic problem."""

import json
import math
import os
import sys
import tempfile

import numpy as np

import psir


def test_encode():
    code = psir.encode(0.0, 0.0, octaves=2)
    assert len(code) == 8
    assert code == [0, 1, 0, 1, 0, 1, 0, 1]


def test_fit_normals_plane():
    n = 9
    depth = np.fromfunction(lambda y, x: x.astype(float), (n, n))  # w = u
    mask = np.ones((n, n))
    normals = psir.fit_normals(depth, mask)
    assert normals.shape == (n, n, 3)
    expect = 1 / math.sqrt(2)
    assert abs(normals[4, 4, 0] - expect) < 1e-9
    assert abs(normals[4, 4, 2] - expect) < 1e-9


def test_soft_shadow_flat():
    depth = np.full((12, 12), 5.0)
    mask = np.ones((12, 12))
    s = psir.soft_shadow_map(depth, mask, [0.4, 0.2, 0.9])
    sigmoid3 = 1 / (1 + math.exp(-3.0))
    assert s.shape == (12, 12)
    assert np.all(s >= sigmoid3 - 1e-9)
    assert np.all(s < 1.0)


def write_tiny_scene(path):
    psir.default_scene_json(path)
    with open(path) as f:
        doc = json.load(f)
    doc["resolution"] = 24
    doc["lights"] = {"ring": 5, "elevation_deg": 45.0, "random": 1, "seed": 3}
    with open(path, "w") as f:
        json.dump(doc, f)


def test_oracle_and_metrics(tmpdir):
    scene = os.path.join(tmpdir, "scene.json")
    write_tiny_scene(scene)
    rendered = psir.render_scene(scene)
    assert len(rendered["images"]) == 6
    assert rendered["normals"].shape == (24, 24, 3)
    assert rendered["mask"].sum() > 0

    normals = rendered["normals"].reshape(-1, 3)
    keep = rendered["mask"].reshape(-1) > 0
    normals = normals[keep]
    g = psir.gbr_transform(normals, rendered["lights"], 0.0, 0.0, 1.0)
    assert np.allclose(g["normals"], normals, atol=1e-12)
    assert psir.mae_degrees(normals, normals) == 0.0
    e = np.asarray(rendered["intensities"])
    assert psir.e_int(2.0 * e, e) < 1e-12
    assert psir.shadow_iou(
        rendered["hard_shadows"][0], rendered["hard_shadows"][0], rendered["mask"]
    ) == 1.0
    return rendered


def test_solve(tmpdir):
    scene = os.path.join(tmpdir, "scene.json")
    write_tiny_scene(scene)
    dataset = os.path.join(tmpdir, "data")
    psir.render_dataset(scene, dataset)

    config = json.loads(psir.default_config_json())
    config.update(
        {
            "encoding_octaves": 4,
            "depth_hidden": [16, 16],
            "material_hidden": [16, 16],
            "asg_bases": 3,
            "shadow_samples": 8,
            "stage_epochs": [16, 6, 6],
            "anneal_epochs": 16,
            "lr_max": 5e-3,
        }
    )
    result = psir.solve(dataset, json.dumps(config))
    assert result["normals"].shape == (24, 24, 3)
    assert result["lights"].shape == (6, 3)
    assert len(result["history"]) == 28
    assert result["history"][-1]["l_ir"] < result["history"][0]["l_ir"]
    lens = np.linalg.norm(result["lights"], axis=1)
    assert np.allclose(lens, 1.0, atol=1e-9)


def main():
    test_encode()
    test_fit_normals_plane()
    test_soft_shadow_flat()
    with tempfile.TemporaryDirectory() as tmpdir:
        test_oracle_and_metrics(tmpdir)
    with tempfile.TemporaryDirectory() as tmpdir:
        test_solve(tmpdir)
    print("python smoke tests passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
