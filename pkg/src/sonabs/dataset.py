"""Synthetic corpus generation: parameter sampling, the two-step BEM run,
infinite-sample labels, and on-disk dataset files.

Generation is split the way the simulations are actually cheap to run:
step one draws sample geometries and caches their frequency-wise Green
matrices ("base cases"); step two reuses each base case for many draws of
the remaining parameters, solving only the cheap per-frequency systems.

Dataset layout (one directory):

    manifest.json   counts, split ratio, seeds, config hash, file layout
    records.jsonl   one JSON object per record: provenance + split tag
    features.f64    float64 little-endian rows [Re H12 (L) | Im H12 (L) | theta]
    labels.f64      float64 little-endian rows [alpha (L)]
    stats.json      training-split standardization statistics
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from sonabs import __version__
from sonabs.bem.cache import GreenCache
from sonabs.bem.mesh import build_mesh
from sonabs.bem.solver import GreenMatrixSet, simulate_transfer_function
from sonabs.material import reference_absorption, surface_impedance
from sonabs.network.model import FeatureStats
from sonabs.types import (
    AirProperties,
    FrequencyGrid,
    MaterialParams,
    ScenarioGeometry,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ParameterSpace:
    """Sampling ranges and laws for the scenario parameters.

    Uniform: sample sides, source distance, azimuth, elevation.
    Log-uniform (uniform in ln): thickness and flow resistivity.
    """

    lx_m: tuple = (0.2, 1.0)
    ly_m: tuple = (0.2, 1.0)
    thickness_m: tuple = (0.005, 0.2)
    sigma_kns_m4: tuple = (5.0, 100.0)
    source_distance_m: tuple = (1.2, 1.8)
    azimuth_deg: tuple = (0.0, 360.0)
    elevation_deg: tuple = (0.0, 80.0)

    def __post_init__(self):
        for name in (
            "lx_m", "ly_m", "thickness_m", "sigma_kns_m4",
            "source_distance_m", "azimuth_deg", "elevation_deg",
        ):
            lo, hi = getattr(self, name)
            if not (hi > lo):
                raise ValueError(f"{name}: range must be increasing, got {(lo, hi)}")
        for name in ("thickness_m", "sigma_kns_m4"):
            if getattr(self, name)[0] <= 0:
                raise ValueError(f"{name}: log-uniform range must be positive")

    def to_dict(self) -> dict:
        return {
            "lx_m": list(self.lx_m),
            "ly_m": list(self.ly_m),
            "thickness_m": list(self.thickness_m),
            "sigma_kns_m4": list(self.sigma_kns_m4),
            "source_distance_m": list(self.source_distance_m),
            "azimuth_deg": list(self.azimuth_deg),
            "elevation_deg": list(self.elevation_deg),
        }


def log_uniform(rng: np.random.Generator, lo: float, hi: float) -> float:
    return float(np.exp(rng.uniform(np.log(lo), np.log(hi))))


def sample_geometry(space: ParameterSpace, rng: np.random.Generator) -> tuple:
    return (
        float(rng.uniform(*space.lx_m)),
        float(rng.uniform(*space.ly_m)),
    )


def sample_scenario(space: ParameterSpace, rng: np.random.Generator) -> dict:
    """One draw of the non-geometry parameters."""
    return {
        "d_m": log_uniform(rng, *space.thickness_m),
        "sigma_kns_m4": log_uniform(rng, *space.sigma_kns_m4),
        "source_distance_m": float(rng.uniform(*space.source_distance_m)),
        "azimuth_deg": float(rng.uniform(*space.azimuth_deg)),
        "elevation_deg": float(rng.uniform(*space.elevation_deg)),
    }


@dataclass
class BaseCase:
    """A cached sample geometry with its assembled Green matrices."""

    index: int
    lx: float
    ly: float
    nx: int
    ny: int
    cache_key: str
    role: str  # "trainval" | "test"


@dataclass
class DatasetRecord:
    features_re: np.ndarray  # (L,)
    features_im: np.ndarray  # (L,)
    theta_deg: float
    label: np.ndarray  # (L,)
    provenance: dict


@dataclass
class GenerationConfig:
    base_cases: int = 20
    test_base_cases: int = 3
    draws_per_case: int = 100
    resolution: float = 4.0
    quad_order: int = 6
    train_fraction: float = 0.8
    seed: int = 2024
    space: ParameterSpace = field(default_factory=ParameterSpace)

    def paper_scale(self) -> "GenerationConfig":
        """The published corpus dimensions: 530 base cases, 6 elements/wavelength."""
        return GenerationConfig(
            base_cases=500,
            test_base_cases=30,
            draws_per_case=self.draws_per_case,
            resolution=6.0,
            quad_order=self.quad_order,
            train_fraction=self.train_fraction,
            seed=self.seed,
            space=self.space,
        )

    def to_dict(self) -> dict:
        return {
            "base_cases": self.base_cases,
            "test_base_cases": self.test_base_cases,
            "draws_per_case": self.draws_per_case,
            "resolution": self.resolution,
            "quad_order": self.quad_order,
            "train_fraction": self.train_fraction,
            "seed": self.seed,
            "space": self.space.to_dict(),
        }

    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def generate_base_cases(
    config: GenerationConfig,
    grid: FrequencyGrid,
    air: AirProperties,
    cache: GreenCache,
    progress=None,
) -> list[BaseCase]:
    """Step one: draw geometries and cache their Green matrices.

    Seeding is hierarchical (SeedSequence spawn per base case), so the i-th
    base case is reproducible independently of how many cases are generated.
    """
    root = np.random.SeedSequence(config.seed)
    geometry_seeds = root.spawn(config.base_cases + config.test_base_cases)
    cases = []
    total = config.base_cases + config.test_base_cases
    for i in range(total):
        rng = np.random.default_rng(geometry_seeds[i])
        lx, ly = sample_geometry(config.space, rng)
        geom = ScenarioGeometry(lx=lx, ly=ly, source_distance=1.5)
        mesh = build_mesh(geom, air, grid.f_max, config.resolution)
        gset = GreenMatrixSet(
            mesh, grid, air, geom.mic_positions, config.quad_order, cache
        )
        assembled = gset.assemble_all()
        role = "trainval" if i < config.base_cases else "test"
        cases.append(
            BaseCase(i, lx, ly, mesh.nx, mesh.ny, gset.key, role)
        )
        if progress is not None:
            progress(i, total, assembled)
    return cases


def generate_records(
    case: BaseCase,
    config: GenerationConfig,
    grid: FrequencyGrid,
    air: AirProperties,
    cache: GreenCache,
) -> list[DatasetRecord]:
    """Step two: solve the cached geometry for unique parameter draws.

    Draw uniqueness is enforced by rejection on exact duplicates. The label
    is the infinite-sample absorption at the drawn elevation; any label
    outside [0, 1] aborts generation (the reference model cannot produce one).
    """
    draw_rng = np.random.default_rng(
        np.random.SeedSequence(entropy=config.seed, spawn_key=(1, case.index))
    )
    draws = []
    seen = set()
    while len(draws) < config.draws_per_case:
        draw = sample_scenario(config.space, draw_rng)
        key = tuple(draw.values())
        if key in seen:
            continue
        seen.add(key)
        draws.append(draw)

    geom0 = ScenarioGeometry(lx=case.lx, ly=case.ly, source_distance=1.5)
    mesh = build_mesh(geom0, air, grid.f_max, config.resolution)
    gset = GreenMatrixSet(mesh, grid, air, geom0.mic_positions, config.quad_order, cache)
    if gset.key != case.cache_key:
        raise ValueError(
            f"base case {case.index}: cache key mismatch "
            f"({gset.key} != {case.cache_key})"
        )
    n_freq = len(grid)
    k0 = gset.k0
    n = mesh.n_elements
    n_draws = len(draws)

    # Frequency-independent geometry terms per draw. Surface collocation
    # points sit on the baffle plane, so direct and image paths coincide;
    # only the distances are stored and the oscillatory factor is applied
    # per frequency.
    couplings = np.empty((n_draws, n_freq), dtype=np.complex128)
    labels = np.empty((n_draws, n_freq))
    surf_dist = np.empty((n_draws, n))
    mic_dist_dir = np.empty((n_draws, 2))
    mic_dist_img = np.empty((n_draws, 2))
    for j, draw in enumerate(draws):
        geom = ScenarioGeometry(
            lx=case.lx,
            ly=case.ly,
            source_distance=draw["source_distance_m"],
            elevation_deg=draw["elevation_deg"],
            azimuth_deg=draw["azimuth_deg"],
        )
        mat = MaterialParams(sigma=draw["sigma_kns_m4"], d=draw["d_m"])
        zs = surface_impedance(grid, mat, air, draw["elevation_deg"])
        couplings[j] = 1j * k0 * zs.normalized_admittance(air)
        labels[j] = reference_absorption(grid, mat, air, draw["elevation_deg"])
        src = geom.source_position
        surf_dist[j] = np.linalg.norm(mesh.centroids - src, axis=1)
        mic_dist_dir[j] = np.linalg.norm(geom.mic_positions - src, axis=1)
        mic_dist_img[j] = np.linalg.norm(
            geom.mic_positions - geom.image_source_position, axis=1
        )
    if np.any(labels < 0.0) or np.any(labels > 1.0):
        raise RuntimeError(
            f"base case {case.index}: reference label outside [0, 1]; aborting"
        )

    # Frequency-outer solve loop: one cached matrix read serves all draws.
    h12 = np.empty((n_draws, n_freq), dtype=np.complex128)
    eye = np.eye(n)
    for fi in range(n_freq):
        g, recv = gset.get(fi)
        k = k0[fi]
        b_all = 2.0 * np.exp(-1j * k * surf_dist) / surf_dist  # (n_draws, n)
        b_mics = (
            np.exp(-1j * k * mic_dist_dir) / mic_dist_dir
            + np.exp(-1j * k * mic_dist_img) / mic_dist_img
        )
        for j in range(n_draws):
            c = couplings[j, fi]
            if c == 0:
                p_surf = 2.0 * b_all[j]
            else:
                lu, piv = lu_factor(0.5 * eye + c * g)
                p_surf = lu_solve((lu, piv), b_all[j])
            p_mics = b_mics[j] - c * (recv @ p_surf)
            h12[j, fi] = p_mics[0] / p_mics[1]

    records = []
    for j, draw in enumerate(draws):
        flagged = np.flatnonzero(~np.isfinite(h12[j]))
        if flagged.size:
            log.warning(
                "base case %d draw %d: non-finite H12 at frequency indices %s",
                case.index, j, flagged.tolist(),
            )
        records.append(
            DatasetRecord(
                features_re=h12[j].real.copy(),
                features_im=h12[j].imag.copy(),
                theta_deg=draw["elevation_deg"],
                label=labels[j].copy(),
                provenance={
                    "base_case": case.index,
                    "role": case.role,
                    "draw": j,
                    "lx_m": case.lx,
                    "ly_m": case.ly,
                    "nx": case.nx,
                    "ny": case.ny,
                    "cache_key": case.cache_key,
                    **draw,
                    "flagged_indices": flagged.tolist(),
                },
            )
        )
    return records


def split_and_finalize(
    records: list[DatasetRecord],
    test_records: list[DatasetRecord],
    config: GenerationConfig,
    grid: FrequencyGrid,
    out_dir,
) -> dict:
    """Shuffle, split train/val, compute train-only statistics, write files."""
    if not records:
        raise ValueError("no records to split")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(
        np.random.SeedSequence(entropy=config.seed, spawn_key=(2,))
    )
    order = rng.permutation(len(records))
    n_train = int(round(config.train_fraction * len(records)))
    split_tags = {}
    for rank, idx in enumerate(order):
        split_tags[int(idx)] = "train" if rank < n_train else "val"

    ordered = [(rec, split_tags[i]) for i, rec in enumerate(records)]
    ordered += [(rec, "test") for rec in test_records]

    n_freq = len(grid)
    features = np.empty((len(ordered), 2 * n_freq + 1))
    labels = np.empty((len(ordered), n_freq))
    lines = []
    for row, (rec, tag) in enumerate(ordered):
        features[row, :n_freq] = rec.features_re
        features[row, n_freq : 2 * n_freq] = rec.features_im
        features[row, -1] = rec.theta_deg
        labels[row] = rec.label
        lines.append(
            json.dumps(
                {"row": row, "split": tag, **rec.provenance}, sort_keys=True
            )
        )

    train_rows = [r for r, (_, tag) in enumerate(ordered) if tag == "train"]
    stats = FeatureStats.from_training_set(
        features[train_rows, :n_freq],
        features[train_rows, n_freq : 2 * n_freq],
        features[train_rows, -1],
    )

    (out / "features.f64").write_bytes(
        np.ascontiguousarray(features, dtype="<f8").tobytes()
    )
    (out / "labels.f64").write_bytes(
        np.ascontiguousarray(labels, dtype="<f8").tobytes()
    )
    (out / "records.jsonl").write_text("\n".join(lines) + "\n")
    (out / "stats.json").write_text(json.dumps(stats.to_dict(), sort_keys=True) + "\n")
    manifest = {
        "tool_version": __version__,
        "config": config.to_dict(),
        "config_hash": config.hash(),
        "grid_f_hz": grid.f.tolist(),
        "n_freq": n_freq,
        "feature_layout": "re_h12[n_freq], im_h12[n_freq], theta_deg",
        "dtype": "<f8",
        "counts": {
            "train": len(train_rows),
            "val": sum(1 for _, (_, tag) in zip(range(len(ordered)), ordered) if tag == "val"),
            "test": len(test_records),
            "total": len(ordered),
        },
        "split_ratio": [config.train_fraction, 1.0 - config.train_fraction],
        "seed": config.seed,
        "stats_file": "stats.json",
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def generate_dataset(
    config: GenerationConfig,
    grid: FrequencyGrid,
    air: AirProperties,
    cache_dir,
    out_dir,
    keep_cache: bool = False,
    progress=None,
) -> dict:
    """Full pipeline: base cases, per-case records, split, and files on disk."""
    cache = GreenCache(cache_dir)
    cases = generate_base_cases(config, grid, air, cache, progress=None)
    trainval, test = [], []
    for i, case in enumerate(cases):
        recs = generate_records(case, config, grid, air, cache)
        (trainval if case.role == "trainval" else test).extend(recs)
        if not keep_cache:
            cache.drop(case.cache_key)
        if progress is not None:
            progress(i + 1, len(cases))
    return split_and_finalize(trainval, test, config, grid, out_dir)


def reconstruct_record_features(
    provenance: dict,
    grid: FrequencyGrid,
    air: AirProperties,
    resolution: float,
    quad_order: int = 6,
) -> np.ndarray:
    """Re-solve one record's H12 from its provenance through the public chain.

    Used to verify that every dataset record is reproducible independently of
    the batched generation path.
    """
    geom = ScenarioGeometry(
        lx=provenance["lx_m"],
        ly=provenance["ly_m"],
        source_distance=provenance["source_distance_m"],
        elevation_deg=provenance["elevation_deg"],
        azimuth_deg=provenance["azimuth_deg"],
    )
    mat = MaterialParams(sigma=provenance["sigma_kns_m4"], d=provenance["d_m"])
    h = simulate_transfer_function(
        geom, mat, air, grid, resolution=resolution, quad_order=quad_order
    )
    return h.h12


# ---------------------------------------------------------------------------
# Loading
# ---------------------------------------------------------------------------

@dataclass
class LoadedDataset:
    manifest: dict
    grid: FrequencyGrid
    features: np.ndarray  # (n, 2*L+1)
    labels: np.ndarray  # (n, L)
    splits: np.ndarray  # (n,) of "train"/"val"/"test"
    provenance: list[dict]
    stats: FeatureStats

    @property
    def n_freq(self) -> int:
        return self.manifest["n_freq"]

    def rows(self, split: str) -> np.ndarray:
        return np.flatnonzero(self.splits == split)

    def arrays_for(self, split: str):
        """(re, im, theta, labels) for one split, in file order."""
        rows = self.rows(split)
        L = self.n_freq
        return (
            self.features[rows, :L],
            self.features[rows, L : 2 * L],
            self.features[rows, -1],
            self.labels[rows],
        )

    def standardized_for(self, split: str):
        """(features (n,2,L), theta_std (n,), labels) using the train statistics."""
        re, im, theta, labels = self.arrays_for(split)
        features, theta_std = self.stats.standardize(re, im, theta)
        return features, theta_std, labels


def load_dataset(path) -> LoadedDataset:
    path = Path(path)
    manifest = json.loads((path / "manifest.json").read_text())
    n_freq = manifest["n_freq"]
    total = manifest["counts"]["total"]
    features = np.frombuffer(
        (path / "features.f64").read_bytes(), dtype="<f8"
    ).reshape(total, 2 * n_freq + 1)
    labels = np.frombuffer((path / "labels.f64").read_bytes(), dtype="<f8").reshape(
        total, n_freq
    )
    provenance = [
        json.loads(line)
        for line in (path / "records.jsonl").read_text().splitlines()
        if line.strip()
    ]
    if len(provenance) != total:
        raise ValueError(f"{path}: records.jsonl row count mismatch")
    splits = np.array([p["split"] for p in provenance])
    stats = FeatureStats.from_dict(json.loads((path / "stats.json").read_text()))
    return LoadedDataset(
        manifest=manifest,
        grid=FrequencyGrid(np.asarray(manifest["grid_f_hz"])),
        features=features.copy(),
        labels=labels.copy(),
        splits=splits,
        provenance=provenance,
        stats=stats,
    )
