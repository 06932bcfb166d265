import json

import numpy as np
import pytest
from scipy import stats as sps

from sonabs.dataset import (
    GenerationConfig,
    ParameterSpace,
    generate_base_cases,
    generate_dataset,
    generate_records,
    load_dataset,
    log_uniform,
    reconstruct_record_features,
    sample_scenario,
    split_and_finalize,
)
from sonabs.bem.cache import GreenCache
from sonabs.material import reference_absorption
from sonabs.types import AirProperties, FrequencyGrid, MaterialParams

AIR = AirProperties()

SMALL_SPACE = ParameterSpace(lx_m=(0.2, 0.3), ly_m=(0.2, 0.3))
SMALL_GRID = FrequencyGrid(np.linspace(100.0, 1990.0, 12))


def small_config(**overrides):
    defaults = dict(
        base_cases=2,
        test_base_cases=1,
        draws_per_case=3,
        resolution=4.0,
        seed=77,
        space=SMALL_SPACE,
    )
    defaults.update(overrides)
    return GenerationConfig(**defaults)


class TestSampling:
    def test_log_uniform_median(self):
        rng = np.random.default_rng(0)
        draws = np.array([log_uniform(rng, 0.005, 0.2) for _ in range(10_000)])
        assert np.median(draws) == pytest.approx(np.sqrt(0.005 * 0.2), rel=0.05)

    def test_uniform_elevation_mean(self):
        rng = np.random.default_rng(1)
        thetas = [sample_scenario(ParameterSpace(), rng)["elevation_deg"]
                  for _ in range(10_000)]
        assert np.mean(thetas) == pytest.approx(40.0, abs=1.0)

    def test_ks_against_target_laws(self):
        rng = np.random.default_rng(2)
        space = ParameterSpace()
        draws = [sample_scenario(space, rng) for _ in range(10_000)]
        d = np.log([x["d_m"] for x in draws])
        lo, hi = np.log(space.thickness_m)
        assert sps.kstest(d, "uniform", args=(lo, hi - lo)).pvalue > 0.01
        sig = np.log([x["sigma_kns_m4"] for x in draws])
        lo, hi = np.log(space.sigma_kns_m4)
        assert sps.kstest(sig, "uniform", args=(lo, hi - lo)).pvalue > 0.01
        th = [x["elevation_deg"] for x in draws]
        assert sps.kstest(th, "uniform", args=(0.0, 80.0)).pvalue > 0.01

    def test_invalid_ranges_rejected(self):
        with pytest.raises(ValueError, match="increasing"):
            ParameterSpace(lx_m=(1.0, 0.2))
        with pytest.raises(ValueError, match="positive"):
            ParameterSpace(sigma_kns_m4=(-1.0, 5.0))


class TestBaseCases:
    def test_seeded_geometries_reproduce(self, tmp_path):
        config = small_config()
        a = generate_base_cases(config, SMALL_GRID, AIR, GreenCache(tmp_path / "a"))
        b = generate_base_cases(config, SMALL_GRID, AIR, GreenCache(tmp_path / "b"))
        assert [(c.lx, c.ly, c.cache_key) for c in a] == [
            (c.lx, c.ly, c.cache_key) for c in b
        ]
        assert [c.role for c in a] == ["trainval", "trainval", "test"]

    def test_cache_hit_skips_assembly(self, tmp_path):
        config = small_config()
        cache = GreenCache(tmp_path / "cache")
        counts_first = []
        generate_base_cases(
            config, SMALL_GRID, AIR, cache,
            progress=lambda i, n, asm: counts_first.append(asm),
        )
        assert all(c == len(SMALL_GRID) for c in counts_first)
        counts_second = []
        generate_base_cases(
            config, SMALL_GRID, AIR, cache,
            progress=lambda i, n, asm: counts_second.append(asm),
        )
        assert all(c == 0 for c in counts_second)


@pytest.fixture(scope="module")
def generated(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("records")
    config = small_config()
    cache = GreenCache(tmp / "cache")
    cases = generate_base_cases(config, SMALL_GRID, AIR, cache)
    records = generate_records(cases[0], config, SMALL_GRID, AIR, cache)
    return config, cases, records


class TestRecords:
    def test_feature_and_label_lengths(self, generated):
        _, _, records = generated
        for rec in records:
            assert rec.features_re.shape == (len(SMALL_GRID),)
            assert rec.features_im.shape == (len(SMALL_GRID),)
            assert rec.label.shape == (len(SMALL_GRID),)

    def test_draws_are_unique(self, generated):
        _, _, records = generated
        keys = {
            (r.provenance["d_m"], r.provenance["sigma_kns_m4"],
             r.provenance["source_distance_m"], r.provenance["azimuth_deg"],
             r.provenance["elevation_deg"])
            for r in records
        }
        assert len(keys) == len(records)

    def test_labels_match_reference_model_exactly(self, generated):
        _, _, records = generated
        for rec in records[:2]:
            mat = MaterialParams(
                sigma=rec.provenance["sigma_kns_m4"], d=rec.provenance["d_m"]
            )
            expected = reference_absorption(
                SMALL_GRID, mat, AIR, rec.provenance["elevation_deg"]
            )
            np.testing.assert_array_equal(rec.label, expected)

    def test_labels_bounded(self, generated):
        _, _, records = generated
        for rec in records:
            assert np.all(rec.label >= 0.0) and np.all(rec.label <= 1.0)

    def test_provenance_reconstruction(self, generated):
        config, _, records = generated
        rec = records[0]
        h12 = reconstruct_record_features(
            rec.provenance, SMALL_GRID, AIR, config.resolution, config.quad_order
        )
        np.testing.assert_allclose(h12.real, rec.features_re, rtol=1e-12, atol=1e-15)
        np.testing.assert_allclose(h12.imag, rec.features_im, rtol=1e-12, atol=1e-15)


class TestLabelsPhysics:
    def test_rigid_like_draw_low_absorption_below_500(self):
        label = reference_absorption(
            FrequencyGrid.default(), MaterialParams(sigma=100.0, d=0.005), AIR, 0.0
        )
        grid = FrequencyGrid.default()
        assert np.all(label[grid.f < 500.0] < 0.3)

    def test_default_grid_has_190_points(self):
        assert len(FrequencyGrid.default()) == 190


class TestSplitAndFiles:
    def test_split_counts_and_stats(self, tmp_path):
        config = small_config(draws_per_case=5)
        cache = GreenCache(tmp_path / "cache")
        cases = generate_base_cases(config, SMALL_GRID, AIR, cache)
        trainval, test = [], []
        for case in cases:
            recs = generate_records(case, config, SMALL_GRID, AIR, cache)
            (trainval if case.role == "trainval" else test).extend(recs)
        manifest = split_and_finalize(trainval, test, config, SMALL_GRID, tmp_path / "ds")
        assert manifest["counts"]["train"] == 8  # round(0.8 * 10)
        assert manifest["counts"]["val"] == 2
        assert manifest["counts"]["test"] == 5
        ds = load_dataset(tmp_path / "ds")
        re, im, theta, labels = ds.arrays_for("train")
        features, theta_std, _ = ds.standardized_for("train")
        np.testing.assert_allclose(features.mean(axis=0), 0.0, atol=1e-9)
        np.testing.assert_allclose(features.std(axis=0), 1.0, atol=1e-9)
        # Validation is standardized with train statistics, not its own.
        val_features, _, _ = ds.standardized_for("val")
        assert abs(val_features.mean()) > 1e-9

    def test_loader_round_trip(self, tmp_path):
        config = small_config()
        manifest = generate_dataset(
            config, SMALL_GRID, AIR, tmp_path / "cache", tmp_path / "ds"
        )
        ds = load_dataset(tmp_path / "ds")
        assert ds.manifest["config_hash"] == config.hash()
        assert ds.features.shape == (9, 2 * len(SMALL_GRID) + 1)
        assert ds.labels.shape == (9, len(SMALL_GRID))
        assert sorted(set(ds.splits)) == ["test", "train", "val"]
        assert len(ds.provenance) == 9
        assert ds.grid == SMALL_GRID

    def test_byte_identical_regeneration(self, tmp_path):
        config = small_config()
        generate_dataset(config, SMALL_GRID, AIR, tmp_path / "c1", tmp_path / "d1")
        generate_dataset(config, SMALL_GRID, AIR, tmp_path / "c2", tmp_path / "d2")
        for name in ("features.f64", "labels.f64", "records.jsonl",
                     "stats.json", "manifest.json"):
            a = (tmp_path / "d1" / name).read_bytes()
            b = (tmp_path / "d2" / name).read_bytes()
            assert a == b, f"{name} differs between identically-seeded runs"

    def test_cache_cleanup_default(self, tmp_path):
        config = small_config()
        generate_dataset(config, SMALL_GRID, AIR, tmp_path / "cache", tmp_path / "ds")
        leftovers = [
            p for p in (tmp_path / "cache").rglob("*.gmat")
        ]
        assert leftovers == []

    def test_empty_split_rejected(self, tmp_path):
        with pytest.raises(ValueError, match="no records"):
            split_and_finalize([], [], small_config(), SMALL_GRID, tmp_path / "ds")


class TestPaperScale:
    def test_paper_scale_dimensions(self):
        cfg = small_config().paper_scale()
        assert cfg.base_cases == 500
        assert cfg.test_base_cases == 30
        assert cfg.resolution == 6.0
