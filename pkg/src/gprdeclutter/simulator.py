"""Analytic scene simulator producing paired raw / clutter-free B-scans.

Target responses are kinematic hyperbolae carrying a Ricker wavelet; clutter
is a jittered direct-wave band plus a low-pass-filtered heterogeneity field.
Every generator is a pure function of its scene description and seed, so
datasets regenerate bit-identically.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .radargram import (
    Dataset,
    DatasetPair,
    Provenance,
    Radargram,
    normalize_unit,
    resize_bilinear,
)

C0 = 299792458.0
TRACE_SPACING = 0.01

# Direct-wave band: arrival as a fraction of the time window, amplitude
# relative to a unit-reflectivity target at the 5 cm reference range.
DIRECT_WAVE_FRACTION = 0.08
CLUTTER_BAND_AMP = 1.5
BAND_GAIN_MOD = 0.3
SPREAD_REF_RANGE = 0.05
RADIUS_REF = 0.03
# Trace-axis smoothing of the surface height field, per surface kind.
SURFACE_SMOOTH_TRACES = {"rough": 8.0, "grass": 2.0, "rough_water": 8.0}
WATER_ECHO_DELAY = 2 * 0.01 / (C0 / 9.0)
WATER_ECHO_GAIN = 0.6

SURFACE_KINDS = ("flat", "rough", "grass", "rough_water")

# name -> (relative permittivity, heterogeneity level)
SOIL_PRESETS = {
    "dry_sand": (3.0, 0.0),
    "damp_sand": (8.0, 0.0),
    "dry_clay": (10.0, 0.0),
    "wet_clay": (12.0, 0.0),
    "dry_loam": (10.0, 0.0),
    "heterogeneous": (6.0, 0.15),
}


@dataclass(frozen=True)
class TargetSpec:
    """Buried cylinder: apex position, cover depth, and response strength."""

    x0: float
    depth: float
    radius: float = 0.03
    reflectivity: float = 1.0
    wave_speed: float | None = None  # None: derive from the scene soil

    def __post_init__(self):
        if self.depth <= 0:
            raise ValueError(f"target depth must be positive, got {self.depth}")
        if abs(self.reflectivity) > 1:
            raise ValueError(f"|reflectivity| must be <= 1, got {self.reflectivity}")
        if self.wave_speed is not None and self.wave_speed <= 0:
            raise ValueError(f"wave speed must be positive, got {self.wave_speed}")


@dataclass(frozen=True)
class SurfaceSpec:
    kind: str = "flat"
    roughness_amp: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in SURFACE_KINDS:
            raise ValueError(f"unknown surface kind {self.kind!r}")
        if self.roughness_amp < 0:
            raise ValueError("roughness amplitude must be >= 0")
        if self.kind == "flat" and self.roughness_amp != 0:
            raise ValueError("flat surface requires roughness_amp == 0")


@dataclass(frozen=True)
class SoilSpec:
    relative_permittivity: float = 3.0
    heterogeneity_level: float = 0.0
    correlation_length: float = 4.0  # traces

    def __post_init__(self):
        if self.relative_permittivity < 1:
            raise ValueError("relative permittivity must be >= 1")
        if self.heterogeneity_level < 0:
            raise ValueError("heterogeneity level must be >= 0")


@dataclass(frozen=True)
class SceneSpec:
    targets: tuple[TargetSpec, ...] = ()
    surface: SurfaceSpec = SurfaceSpec()
    soil: SoilSpec = SoilSpec()
    height: int = 256
    width: int = 64
    time_window: float = 4e-9
    wavelet_center_freq: float = 1.5e9
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(self.targets))
        if len(self.targets) > 3:
            raise ValueError("at most 3 targets per scene")
        if self.height < 1 or self.width < 1:
            raise ValueError("scene grid must be non-empty")
        if self.time_window <= 0 or self.wavelet_center_freq <= 0:
            raise ValueError("time window and wavelet frequency must be positive")
        for i, a in enumerate(self.targets):
            for b in self.targets[i + 1 :]:
                if abs(a.x0 - b.x0) < a.radius + b.radius:
                    raise ValueError(
                        f"targets at x0={a.x0} and x0={b.x0} overlap horizontally"
                    )

    def wave_speed(self) -> float:
        return C0 / np.sqrt(self.soil.relative_permittivity)


def _ricker(tau: np.ndarray, f: float) -> np.ndarray:
    a = (np.pi * f * tau) ** 2
    return (1.0 - 2.0 * a) * np.exp(-a)


def _gabor(tau: np.ndarray, f: float) -> np.ndarray:
    # Damped oscillation with its peak exactly at tau = 0.
    width = 0.75 / f
    return np.exp(-((tau / width) ** 2)) * np.cos(2 * np.pi * f * tau)


def _gaussian_smooth_1d(values: np.ndarray, sigma: float) -> np.ndarray:
    if sigma <= 0:
        return values
    radius = max(1, int(np.ceil(3 * sigma)))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    kern = np.exp(-0.5 * (x / sigma) ** 2)
    kern /= kern.sum()
    padded = np.pad(values, radius, mode="wrap")
    return np.convolve(padded, kern, mode="valid")


def _surface_height_field(scene: SceneSpec) -> np.ndarray:
    """Per-trace surface height, bounded to [-amp/2, amp/2]."""
    surf = scene.surface
    if surf.kind == "flat" or surf.roughness_amp == 0:
        return np.zeros(scene.width)
    rng = np.random.default_rng(
        np.random.SeedSequence([scene.seed & 0xFFFFFFFF, surf.seed & 0xFFFFFFFF, 11])
    )
    z = rng.standard_normal(scene.width)
    z = _gaussian_smooth_1d(z, SURFACE_SMOOTH_TRACES[surf.kind])
    peak = np.max(np.abs(z))
    if peak > 0:
        z = z / peak
    return 0.5 * surf.roughness_amp * z


def synth_target_response(scene: SceneSpec) -> Radargram:
    """Hyperbolic Ricker responses of all scene targets; zero targets -> zeros.

    Two-way travel time per trace is t(x) = 2 * sqrt(depth^2 + (x - x0)^2) / v
    with v = c0 / sqrt(permittivity) unless the target carries its own speed.
    Amplitude falls off as 1 / sqrt(slant range). Targets whose apex time
    exceeds the time window are skipped and noted in the label.
    """
    H, W = scene.height, scene.width
    dt = scene.time_window / H
    t = np.arange(H) * dt
    x = np.arange(W) * TRACE_SPACING
    grid = np.zeros((H, W))
    clipped = []
    for idx, target in enumerate(scene.targets):
        v = target.wave_speed if target.wave_speed is not None else scene.wave_speed()
        if 2 * target.depth / v > scene.time_window:
            clipped.append(idx)
            continue
        slant = np.sqrt(target.depth**2 + (x - target.x0) ** 2)
        arrival = 2.0 * slant / v
        amp = (
            target.reflectivity
            * np.sqrt(SPREAD_REF_RANGE / slant)
            * np.sqrt(target.radius / RADIUS_REF)
        )
        grid += amp[None, :] * _ricker(t[:, None] - arrival[None, :], scene.wavelet_center_freq)
    label = f"targets={len(scene.targets)}"
    if clipped:
        label += f" clipped={','.join(map(str, clipped))}"
    return Radargram(grid, time_window=scene.time_window, label=label)


def synth_clutter(scene: SceneSpec) -> Radargram:
    """Direct-wave/surface band plus smoothed heterogeneity noise.

    Flat surface with zero heterogeneity yields a rank-1 grid (identical
    columns). The per-trace band arrival shifts by height/c0, which keeps the
    sample jitter below roughness_amp / v for any soil speed v <= c0.
    """
    H, W = scene.height, scene.width
    dt = scene.time_window / H
    t = np.arange(H) * dt
    heights = _surface_height_field(scene)
    t0 = DIRECT_WAVE_FRACTION * scene.time_window
    arrival = t0 + heights / C0
    if scene.surface.roughness_amp > 0:
        gain = 1.0 + BAND_GAIN_MOD * (2.0 * heights / scene.surface.roughness_amp)
    else:
        gain = np.ones(W)
    tau = t[:, None] - arrival[None, :]
    grid = CLUTTER_BAND_AMP * gain[None, :] * _gabor(tau, scene.wavelet_center_freq)
    if scene.surface.kind == "rough_water":
        grid += (
            CLUTTER_BAND_AMP
            * WATER_ECHO_GAIN
            * gain[None, :]
            * _gabor(tau - WATER_ECHO_DELAY, scene.wavelet_center_freq)
        )
    level = scene.soil.heterogeneity_level
    if level > 0:
        rng = np.random.default_rng(
            np.random.SeedSequence([scene.seed & 0xFFFFFFFF, 23])
        )
        noise = rng.standard_normal((H, W))
        sigma = scene.soil.correlation_length
        noise = np.apply_along_axis(_gaussian_smooth_1d, 1, noise, sigma)
        noise = np.apply_along_axis(_gaussian_smooth_1d, 0, noise, sigma)
        noise -= noise.mean()
        std = noise.std()
        if std > 0:
            noise /= std
        grid = grid + level * noise
    return Radargram(grid, time_window=scene.time_window, label=f"clutter:{scene.surface.kind}")


def synth_pair(
    scene: SceneSpec,
    out_size: tuple[int, int] | None = None,
    normalize: bool = False,
) -> DatasetPair:
    """Raw = clutter + target response, ground truth = target response.

    With out_size/normalize unset the pair is returned at native scene size
    without scaling, so raw - clutter_free reproduces the clutter field
    exactly.
    """
    response = synth_target_response(scene)
    clutter = synth_clutter(scene)
    raw = response.with_data(response.data + clutter.data, label=f"raw {response.label}")
    gt = response
    if out_size is not None:
        raw = resize_bilinear(raw, *out_size)
        gt = resize_bilinear(gt, *out_size)
    if normalize:
        raw = normalize_unit(raw)
        gt = normalize_unit(gt)
    return DatasetPair(raw=raw, clutter_free=gt, provenance=Provenance.SIMULATED)


def hybridize(
    clutter_only: Radargram,
    clutter_free: Radargram,
    mix: float,
    size: tuple[int, int] | None = None,
) -> DatasetPair:
    """Blend a clutter-only scan with a clutter-free scan into a hybrid pair.

    raw = normalize(mix * normalize(clutter_only) + normalize(clutter_free));
    the ground truth is the normalized clutter-free scan.
    """
    if not 0 < mix <= 1:
        raise ValueError(f"mix must be in (0, 1], got {mix}")
    if size is not None:
        clutter_only = resize_bilinear(clutter_only, *size)
        clutter_free = resize_bilinear(clutter_free, *size)
    if clutter_only.data.shape != clutter_free.data.shape:
        raise ValueError(
            f"shape mismatch after resize: clutter {clutter_only.data.shape} vs "
            f"target {clutter_free.data.shape}"
        )
    c = normalize_unit(clutter_only)
    g = normalize_unit(clutter_free)
    raw = normalize_unit(g.with_data(mix * c.data + g.data, label="hybrid raw"))
    return DatasetPair(raw=raw, clutter_free=g, provenance=Provenance.HYBRID)


@dataclass(frozen=True)
class SceneGridConfig:
    """Sampling grid for dataset generation; mirrors the scene taxonomy."""

    count: int = 10
    seed: int = 0
    height: int = 256
    width: int = 64
    time_window: float = 4e-9
    wavelet_center_freq: float = 1.5e9
    surfaces: tuple[str, ...] = SURFACE_KINDS
    soils: tuple[str, ...] = tuple(SOIL_PRESETS)
    target_counts: tuple[int, ...] = (1, 2, 3)
    depth_range: tuple[float, float] = (0.01, 0.10)
    radius_range: tuple[float, float] = (0.01, 0.05)
    reflectivity_range: tuple[float, float] = (0.3, 1.0)
    roughness_amp: float = 0.04
    x0_margin: float = 0.2
    out_size: tuple[int, int] | None = None
    normalize: bool = True

    def __post_init__(self):
        if self.count <= 0:
            raise ValueError(f"dataset count must be positive, got {self.count}")
        for s in self.surfaces:
            if s not in SURFACE_KINDS:
                raise ValueError(f"unknown surface kind {s!r}")
        for s in self.soils:
            if s not in SOIL_PRESETS:
                raise ValueError(f"unknown soil preset {s!r}")


def _sample_scene(cfg: SceneGridConfig, index: int) -> SceneSpec:
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed & 0xFFFFFFFF, index]))
    surface_kind = cfg.surfaces[rng.integers(len(cfg.surfaces))]
    soil_name = cfg.soils[rng.integers(len(cfg.soils))]
    permittivity, het_level = SOIL_PRESETS[soil_name]
    n_targets = int(cfg.target_counts[rng.integers(len(cfg.target_counts))])
    span = (cfg.width - 1) * TRACE_SPACING
    lo_x, hi_x = cfg.x0_margin * span, (1 - cfg.x0_margin) * span
    targets: list[TargetSpec] = []
    attempts = 0
    while len(targets) < n_targets and attempts < 200:
        attempts += 1
        x0 = float(rng.uniform(lo_x, hi_x))
        radius = float(rng.uniform(*cfg.radius_range))
        if any(abs(x0 - t.x0) < radius + t.radius for t in targets):
            continue
        refl = float(rng.uniform(*cfg.reflectivity_range)) * (1 if rng.random() < 0.5 else -1)
        depth = float(rng.uniform(*cfg.depth_range))
        targets.append(TargetSpec(x0=x0, depth=depth, radius=radius, reflectivity=refl))
    surface = SurfaceSpec(
        kind=surface_kind,
        roughness_amp=0.0 if surface_kind == "flat" else cfg.roughness_amp,
        seed=index,
    )
    soil = SoilSpec(relative_permittivity=permittivity, heterogeneity_level=het_level)
    return SceneSpec(
        targets=tuple(targets),
        surface=surface,
        soil=soil,
        height=cfg.height,
        width=cfg.width,
        time_window=cfg.time_window,
        wavelet_center_freq=cfg.wavelet_center_freq,
        seed=int(rng.integers(2**31)),
    )


def generate_dataset(cfg: SceneGridConfig) -> tuple[Dataset, list[SceneSpec]]:
    """Draw scenes from the grid and render pairs; deterministic in cfg.seed."""
    scenes = [_sample_scene(cfg, i) for i in range(cfg.count)]
    pairs = [
        synth_pair(scene, out_size=cfg.out_size, normalize=cfg.normalize)
        for scene in scenes
    ]
    return Dataset(pairs=pairs, seed=cfg.seed), scenes
