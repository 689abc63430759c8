import numpy as np
import pytest

from errors import ParameterError
from scene import (ArrayConfig, Scene, Source, SourceRole, build_scene, coherency, draw_background, known_effects,
                   known_effects_all, make_scene)


def test_make_scene_counts():
    array, sources = make_scene(0, 8, 2, 4)
    assert array.nBaselines == 28
    assert len(sources) == 6
    assert sum(s.role is SourceRole.CALIBRATOR for s in sources) == 2

    array, sources = make_scene(0, 2, 1, 0)
    assert array.nBaselines == 1
    assert len(sources) == 1


def test_make_scene_deterministic():
    a1, s1 = make_scene(7, 8, 2, 4)
    a2, s2 = make_scene(7, 8, 2, 4)
    np.testing.assert_array_equal(a1.positions, a2.positions)
    assert s1 == s2

    a3, _ = make_scene(8, 8, 2, 4)
    assert not np.array_equal(a1.positions, a3.positions)


@pytest.mark.parametrize("seed", range(10))
def test_background_weaker_than_calibrators(seed):
    _, sources = make_scene(seed, 8, 2, 4)
    calibrators = [s.flux for s in sources if s.role is SourceRole.CALIBRATOR]
    background = [s.flux for s in sources if s.role is SourceRole.BACKGROUND]
    assert all(0.5 <= f <= 1.5 for f in calibrators)
    assert max(background) <= min(calibrators) / 10
    assert all(s.l**2 + s.m**2 <= 1 for s in sources)


@pytest.mark.parametrize("counts", [(1, 1, 0), (8, 0, 4), (8, 2, -1)])
def test_make_scene_invalid_counts(counts):
    with pytest.raises(ParameterError):
        make_scene(0, *counts)


def test_baseline_map():
    array = ArrayConfig(np.zeros((5, 2)))
    assert array.baselines[:4] == [(0, 1), (0, 2), (0, 3), (0, 4)]
    assert array.baselines[-1] == (3, 4)
    assert sorted(array.baselineIndex.values()) == list(range(10))
    for k, (p, q) in enumerate(array.baselines):
        assert array.baselineIndex[(p, q)] == k
        assert p < q


def test_source_validation():
    with pytest.raises(ParameterError):
        Source(0.9, 0.9, 1.0)
    with pytest.raises(ParameterError):
        Source(0.0, 0.0, -1.0)


def test_coherency():
    np.testing.assert_array_equal(coherency(Source(0.0, 0.0, 2.0)), np.eye(2))
    np.testing.assert_array_equal(coherency(Source(0.0, 0.0, 0.0)), np.zeros((2, 2)))
    C = coherency(Source(0.01, 0.02, 0.7))
    np.testing.assert_allclose(C, C.conj().T)
    assert np.all(np.linalg.eigvalsh(C) >= 0)


def test_known_effects():
    array, sources = make_scene(3, 8, 2, 0)
    H = known_effects(array, Source(0.0, 0.0, 1.0), 150e6)
    np.testing.assert_allclose(H, np.broadcast_to(np.eye(2), (8, 2, 2)), atol=1e-15)

    H = known_effects(array, sources[0], 150e6)
    for Hp in H:
        np.testing.assert_allclose(Hp @ Hp.conj().T, np.eye(2), atol=1e-12)
        assert abs(np.linalg.det(Hp)) == pytest.approx(1.0, abs=1e-12)

    # antenna at the origin sees no geometric phase
    origin = ArrayConfig(np.array([[0.0, 0.0], [100.0, 50.0]]))
    H = known_effects(origin, sources[1], 150e6)
    np.testing.assert_allclose(H[0], np.eye(2), atol=1e-15)


def test_known_effects_all_shape():
    scene = build_scene(1, 6, 3, 2, frequencies=[140e6, 150e6])
    assert known_effects_all(scene, 140e6).shape == (3, 6, 2, 2)
    assert known_effects_all(scene, 140e6, scene.background).shape == (2, 6, 2, 2)
    assert known_effects_all(scene, 140e6, []).shape == (0, 6, 2, 2)


def test_scene_dumps_loads():
    scene = build_scene(5, 8, 2, 4, frequencies=[130e6, 145e6])
    text = scene.dumps()
    restored = Scene.loads(text)
    np.testing.assert_array_equal(restored.array.positions, scene.array.positions)
    assert restored.calibrators == scene.calibrators
    assert restored.background == scene.background
    assert restored.frequencies == scene.frequencies
    assert restored.dumps() == text


def test_draw_background():
    scene = build_scene(2, 8, 2, 4)
    redrawn = draw_background(scene, np.random.default_rng(11))
    assert redrawn.calibrators == scene.calibrators
    assert len(redrawn.background) == 4
    assert redrawn.background != scene.background
    weakest = min(s.flux for s in scene.calibrators)
    assert all(s.flux <= weakest / 10 for s in redrawn.background)
    assert len(draw_background(scene, np.random.default_rng(0), count=0).background) == 0
