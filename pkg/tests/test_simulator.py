import numpy as np
import pytest

from gprdeclutter.radargram import Provenance, Radargram, normalize_unit
from gprdeclutter.simulator import (
    TRACE_SPACING,
    SceneGridConfig,
    SceneSpec,
    SoilSpec,
    SurfaceSpec,
    TargetSpec,
    generate_dataset,
    hybridize,
    synth_clutter,
    synth_pair,
    synth_target_response,
)


def _scene(**kwargs):
    defaults = dict(
        targets=(),
        surface=SurfaceSpec(),
        soil=SoilSpec(relative_permittivity=3.0),
        height=256,
        width=64,
        seed=5,
    )
    defaults.update(kwargs)
    return SceneSpec(**defaults)


def _apex_row(grid: np.ndarray, col: int) -> int:
    return int(np.argmax(np.abs(grid[:, col])))


def test_spec_validation():
    with pytest.raises(ValueError):
        TargetSpec(x0=0.3, depth=-0.01)
    with pytest.raises(ValueError):
        TargetSpec(x0=0.3, depth=0.05, reflectivity=1.5)
    with pytest.raises(ValueError):
        SurfaceSpec(kind="flat", roughness_amp=0.04)
    with pytest.raises(ValueError):
        SoilSpec(relative_permittivity=0.5)
    with pytest.raises(ValueError):
        _scene(targets=(TargetSpec(0.30, 0.05, radius=0.03), TargetSpec(0.32, 0.07, radius=0.03)))


def test_zero_targets_all_zero():
    r = synth_target_response(_scene())
    assert np.array_equal(r.data, np.zeros((256, 64)))


def test_apex_at_center_matches_travel_time():
    scene = _scene(targets=(TargetSpec(x0=0.32, depth=0.05),))
    r = synth_target_response(scene)
    v = scene.wave_speed()
    dt = scene.time_window / scene.height
    apex_col = int(round(0.32 / TRACE_SPACING))
    expected_row = 2 * 0.05 / v / dt
    # Earliest (strongest) arrival sits at the apex column, at t = 2 d / v.
    rows = [_apex_row(r.data, c) for c in range(scene.width)]
    assert min(rows) == rows[apex_col]
    assert abs(rows[apex_col] - expected_row) <= 1.0


def test_hyperbola_symmetry_about_apex():
    scene = _scene(targets=(TargetSpec(x0=0.32, depth=0.04),))
    grid = synth_target_response(scene).data
    apex_col = 32
    for delta in (1, 5, 11):
        np.testing.assert_allclose(
            grid[:, apex_col - delta], grid[:, apex_col + delta], atol=1e-12
        )


def test_deeper_target_has_lower_apex_row():
    # Same horizontal position compared across two scenes to respect the
    # no-horizontal-overlap invariant within a single scene.
    shallow = synth_target_response(_scene(targets=(TargetSpec(x0=0.32, depth=0.03),)))
    deep = synth_target_response(_scene(targets=(TargetSpec(x0=0.32, depth=0.08),)))
    assert _apex_row(shallow.data, 32) < _apex_row(deep.data, 32)


def test_two_targets_in_one_scene_order():
    scene = _scene(
        targets=(
            TargetSpec(x0=0.22, depth=0.03, radius=0.02),
            TargetSpec(x0=0.42, depth=0.08, radius=0.02),
        )
    )
    grid = synth_target_response(scene).data
    assert _apex_row(grid, 22) < _apex_row(grid, 42)


def test_apex_beyond_window_clipped_into_label():
    soil = SoilSpec(relative_permittivity=12.0)
    scene = _scene(
        targets=(TargetSpec(x0=0.32, depth=0.05),),
        soil=soil,
        time_window=2e-10,
    )
    r = synth_target_response(scene)
    assert np.array_equal(r.data, np.zeros_like(r.data))
    assert "clipped" in r.label


def test_flat_homogeneous_clutter_is_rank_one():
    clutter = synth_clutter(_scene()).data
    assert not np.allclose(clutter, 0)
    np.testing.assert_allclose(clutter, np.tile(clutter[:, :1], (1, clutter.shape[1])))
    s = np.linalg.svd(clutter, compute_uv=False)
    assert s[1] <= 1e-10 * s[0]


def test_clutter_deterministic_given_seed():
    scene = _scene(surface=SurfaceSpec(kind="rough", roughness_amp=0.04, seed=3))
    a = synth_clutter(scene).data
    b = synth_clutter(scene).data
    assert np.array_equal(a, b)


def test_rough_surface_jitter_bounded():
    amp = 0.04
    scene = _scene(surface=SurfaceSpec(kind="rough", roughness_amp=amp, seed=12))
    clutter = synth_clutter(scene).data
    dt = scene.time_window / scene.height
    peak_rows = np.array([_apex_row(clutter, c) for c in range(scene.width)])
    bound_samples = amp / scene.wave_speed() / dt
    assert peak_rows.max() - peak_rows.min() <= bound_samples
    assert peak_rows.max() - peak_rows.min() > 0  # surface actually jitters


def test_pair_additivity_exact():
    scene = _scene(
        targets=(TargetSpec(x0=0.25, depth=0.04),),
        surface=SurfaceSpec(kind="rough", roughness_amp=0.04, seed=1),
        soil=SoilSpec(relative_permittivity=6.0, heterogeneity_level=0.15),
    )
    pair = synth_pair(scene)
    clutter = synth_clutter(scene)
    # Exact up to one rounding step of the raw = response + clutter sum.
    np.testing.assert_allclose(
        pair.raw.data - pair.clutter_free.data, clutter.data, rtol=1e-12, atol=1e-14
    )
    assert pair.provenance == Provenance.SIMULATED


def test_pair_zero_targets_and_shape():
    pair = synth_pair(_scene(), out_size=(128, 32), normalize=True)
    assert pair.raw.data.shape == pair.clutter_free.data.shape == (128, 32)
    assert np.array_equal(pair.clutter_free.data, np.zeros((128, 32)))


def test_hybridize_zero_target_gives_normalized_clutter():
    rng = np.random.default_rng(0)
    clutter = Radargram(rng.normal(size=(64, 32)))
    zeros = Radargram(np.zeros((64, 32)))
    pair = hybridize(clutter, zeros, mix=0.7)
    np.testing.assert_allclose(
        pair.raw.data, normalize_unit(Radargram(0.7 * normalize_unit(clutter).data)).data
    )
    assert pair.provenance == Provenance.HYBRID


def test_hybridize_small_mix_approaches_target():
    rng = np.random.default_rng(1)
    clutter = Radargram(rng.normal(size=(32, 16)))
    target = Radargram(rng.normal(size=(32, 16)))
    pair = hybridize(clutter, target, mix=1e-7)
    np.testing.assert_allclose(pair.raw.data, normalize_unit(target).data, atol=1e-5)


def test_hybridize_disjoint_supports_full_scale():
    clutter = np.zeros((16, 16))
    clutter[2:5, 1:7] = np.linspace(0.2, 1.0, 18).reshape(3, 6)
    target = np.zeros((16, 16))
    target[10:13, 9:15] = np.linspace(0.1, 0.9, 18).reshape(3, 6)
    pair = hybridize(Radargram(clutter), Radargram(target), mix=1.0)
    raw = pair.raw.data
    assert raw[2:5, 1:7].max() == pytest.approx(1.0)
    assert raw[10:13, 9:15].max() == pytest.approx(1.0)


def test_hybridize_shape_mismatch_and_mix_range():
    a = Radargram(np.zeros((4, 4)) + np.eye(4))
    b = Radargram(np.eye(5))
    with pytest.raises(ValueError):
        hybridize(a, b, mix=0.5)
    with pytest.raises(ValueError):
        hybridize(a, a, mix=0.0)


def test_generate_dataset_deterministic():
    cfg = SceneGridConfig(count=10, seed=7)
    ds1, scenes1 = generate_dataset(cfg)
    ds2, scenes2 = generate_dataset(cfg)
    assert scenes1 == scenes2
    assert len(ds1) == 10
    for p1, p2 in zip(ds1, ds2):
        assert np.array_equal(p1.raw.data, p2.raw.data)
        assert np.array_equal(p1.clutter_free.data, p2.clutter_free.data)


def test_generate_dataset_flat_homogeneous_rank_one_clutter():
    cfg = SceneGridConfig(
        count=4, seed=3, surfaces=("flat",), soils=("dry_sand",), normalize=False
    )
    ds, _ = generate_dataset(cfg)
    for pair in ds:
        clutter = pair.raw.data - pair.clutter_free.data
        s = np.linalg.svd(clutter, compute_uv=False)
        assert s[1] <= 1e-10 * s[0]


def test_generate_dataset_rejects_bad_count():
    with pytest.raises(ValueError):
        SceneGridConfig(count=0)


def test_depth_grid_yields_distinct_apex_rows():
    rows = []
    for cm in range(1, 11):
        scene = _scene(targets=(TargetSpec(x0=0.32, depth=cm / 100.0),))
        rows.append(_apex_row(synth_target_response(scene).data, 32))
    assert len(set(rows)) == 10
    assert rows == sorted(rows)
