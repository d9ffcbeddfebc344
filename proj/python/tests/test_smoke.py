import numpy as np
import pytest

import meshmotion as mm


def reference_label(scale=1.0):
    return mm.MotionLabel(mm.Expression.SURPRISE, 100, 10, 30, 80, 95, scale)


def test_label_amplitude():
    label = reference_label(0.4)
    assert label.amplitude(55) == 0.4
    assert label.amplitude(20) == 0.2
    signal = label.signal()
    assert signal.shape == (6, 100)
    assert signal[int(mm.Expression.SURPRISE), 55] == 0.4


def test_invalid_label_raises():
    with pytest.raises(mm.MeshMotionError):
        mm.MotionLabel(mm.Expression.HAPPY, 100, 40, 30, 80, 95)


def test_extremeness_scale():
    assert mm.extremeness_scale(2.0, 2.0, 0.5) == 0.5
    assert mm.extremeness_scale(2.5, 2.0, 0.5) == 1.0
    assert mm.extremeness_scale(0.0, 2.0, 0.5) == pytest.approx(0.05)


def test_mesh_arrays_and_rings():
    sphere = mm.icosphere(1, 80.0)
    assert sphere.vertices.shape == (42, 3)
    assert sphere.faces.shape == (80, 3)
    rebuilt = mm.Mesh(sphere.vertices, sphere.faces)
    assert mm.same_topology(rebuilt, sphere)
    assert mm.k_disk(sphere, 0, 0) == [0]
    assert len(mm.k_ring(sphere, 0, 1)) in (5, 6)


def test_mesh_round_trip(tmp_path):
    sphere = mm.icosphere(1, 80.0)
    path = tmp_path / "s.obj"
    mm.save_mesh(sphere, path, ["config test"])
    back = mm.load_mesh(path)
    np.testing.assert_array_equal(back.vertices, sphere.vertices)
    np.testing.assert_array_equal(back.faces, sphere.faces)


def test_topology_cache_and_synthetic_data(tmp_path):
    sphere = mm.icosphere(2, 80.0)
    cache = mm.build_topology_cache(sphere, [4, 4])
    assert cache.level_sizes[-1] == 162
    assert len(cache.level_sizes) == 3
    cache.save(tmp_path / "topo.bin")
    assert mm.load_cache(tmp_path / "topo.bin").hash() == cache.hash()

    seqs = mm.synth_dataset(sphere, subjects=1, frames=20, stride=2, seed=3)
    assert len(seqs) == 6
    frames = seqs[0].frames
    assert frames.shape == (10, 162, 3)
    assert seqs[0].mean_abs_deformation() > 0.0
    assert mm.per_vertex_error(frames, frames) == 0.0
    assert len(mm.per_frame_l1(frames, frames)) == 10


def test_error_on_bad_shape():
    with pytest.raises(mm.MeshMotionError):
        mm.per_vertex_error(np.zeros((2, 3)), np.zeros((2, 3)))
