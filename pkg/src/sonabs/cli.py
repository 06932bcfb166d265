"""Command-line interface: simulate | gen-dataset | train | predict | evaluate | verify."""

from __future__ import annotations

import argparse
import contextlib
import csv
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from sonabs import __version__
from sonabs.bem.cache import GreenCache
from sonabs.bem.mesh import build_mesh
from sonabs.bem.solver import (
    GreenMatrixSet,
    field_at_receivers,
    incident_field,
    simulate_transfer_function,
    solve_surface_pressure,
)
from sonabs.dataset import (
    GenerationConfig,
    ParameterSpace,
    generate_dataset,
    load_dataset,
)
from sonabs.evaluate import (
    ScenarioComparison,
    compare_methods,
    export_comparison,
    geometry_from_provenance,
    write_report,
)
from sonabs.material import ImpedanceSpectrum, reference_absorption, surface_impedance
from sonabs.network.model import (
    NetworkConfig,
    build_network,
    load_model,
    save_model,
)
from sonabs.network.training import TrainConfig, train, write_history_csv
from sonabs.twomic import (
    absorption_two_mic,
    condition_measured,
    load_geometry_sidecar,
    load_measured_csv,
    synthesize_transfer_function,
)
from sonabs.types import (
    AirProperties,
    FrequencyGrid,
    MaterialParams,
    ScenarioGeometry,
    TransferSpectrum,
)

CACHE_ENV_VAR = "SONABS_CACHE_DIR"


# ---------------------------------------------------------------------------
# Config files (TOML with JSON fallback)
# ---------------------------------------------------------------------------

def load_config(path) -> dict:
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".json":
        return json.loads(text)
    try:
        import tomllib  # Python >= 3.11
    except ImportError:
        import tomli as tomllib
    return tomllib.loads(text)


def air_from_config(cfg: dict) -> AirProperties:
    section = cfg.get("air", {})
    return AirProperties(
        c0=section.get("c0_m_s", 343.0),
        rho0=section.get("rho0_kg_m3", 1.21),
    )


def grid_from_config(cfg: dict) -> FrequencyGrid:
    section = cfg.get("grid", {})
    start = section.get("f_start_hz", 100.0)
    step = section.get("f_step_hz", 10.0)
    n = section.get("n_points", 190)
    return FrequencyGrid(start + step * np.arange(n))


def geometry_from_config(cfg: dict) -> ScenarioGeometry:
    g = cfg["geometry"]
    return ScenarioGeometry(
        lx=g["lx_m"],
        ly=g["ly_m"],
        source_distance=g["source_distance_m"],
        elevation_deg=g.get("elevation_deg", 0.0),
        azimuth_deg=g.get("azimuth_deg", 0.0),
        mic_heights=tuple(g.get("mic_heights_m", (0.01, 0.03))),
    )


def material_from_config(cfg: dict) -> MaterialParams:
    m = cfg["material"]
    return MaterialParams(sigma=m["sigma_kns_m4"], d=m["thickness_mm"] / 1000.0)


def mesh_params_from_config(cfg: dict) -> tuple:
    """(resolution, quad_order). Config states total points per element."""
    section = cfg.get("mesh", {})
    resolution = section.get("elements_per_wavelength", 6.0)
    pts = section.get("quadrature_points_per_element", 36)
    order = int(round(np.sqrt(pts)))
    if order * order != pts:
        raise ValueError(
            f"quadrature_points_per_element must be a perfect square, got {pts}"
        )
    return resolution, order


def space_from_config(section: dict) -> ParameterSpace:
    defaults = ParameterSpace()
    thickness_mm = section.get("thickness_mm")
    thickness = (
        (thickness_mm[0] / 1000.0, thickness_mm[1] / 1000.0)
        if thickness_mm
        else defaults.thickness_m
    )
    return ParameterSpace(
        lx_m=tuple(section.get("lx_m", defaults.lx_m)),
        ly_m=tuple(section.get("ly_m", defaults.ly_m)),
        thickness_m=thickness,
        sigma_kns_m4=tuple(section.get("sigma_kns_m4", defaults.sigma_kns_m4)),
        source_distance_m=tuple(
            section.get("source_distance_m", defaults.source_distance_m)
        ),
        azimuth_deg=tuple(section.get("azimuth_deg", defaults.azimuth_deg)),
        elevation_deg=tuple(section.get("elevation_deg", defaults.elevation_deg)),
    )


def warn_outside_reference_ranges(space: ParameterSpace) -> None:
    reference = ParameterSpace()
    for name in (
        "lx_m", "ly_m", "thickness_m", "sigma_kns_m4",
        "source_distance_m", "azimuth_deg", "elevation_deg",
    ):
        lo, hi = getattr(space, name)
        rlo, rhi = getattr(reference, name)
        if lo < rlo or hi > rhi:
            print(
                f"warning: {name} range [{lo:g}, {hi:g}] exceeds the published "
                f"sampling range [{rlo:g}, {rhi:g}]",
                file=sys.stderr,
            )


def generation_config_from(cfg: dict, seed_override=None) -> GenerationConfig:
    section = cfg.get("dataset", {})
    resolution, quad_order = mesh_params_from_config(cfg)
    space = space_from_config(section.get("space", {}))
    warn_outside_reference_ranges(space)
    return GenerationConfig(
        base_cases=section.get("base_cases", 20),
        test_base_cases=section.get("test_base_cases", 3),
        draws_per_case=section.get("draws_per_case", 100),
        resolution=resolution,
        quad_order=quad_order,
        train_fraction=section.get("train_fraction", 0.8),
        seed=seed_override if seed_override is not None else section.get("seed", 2024),
        space=space,
    )


def train_config_from(cfg: dict, seed_override=None) -> TrainConfig:
    section = cfg.get("training", {})
    return TrainConfig(
        max_epochs=section.get("max_epochs", 250),
        batch_size=section.get("batch_size", 64),
        lr=section.get("learning_rate", 1e-3),
        lr_decay=section.get("lr_decay", 0.9),
        lr_decay_start_epoch=section.get("lr_decay_start_epoch", 11),
        l2=section.get("l2", 1e-3),
        patience=section.get("patience", 20),
        min_delta=section.get("min_delta", 1e-6),
        decoupled_weight_decay=section.get("decoupled_weight_decay", False),
        seed=seed_override if seed_override is not None else section.get("seed", 7),
    )


def cache_dir_for(args, out_dir: Path) -> Path:
    if args.cache_dir:
        return Path(args.cache_dir)
    env = os.environ.get(CACHE_ENV_VAR)
    return Path(env) if env else out_dir / "bem_cache"


def write_csv(path, header: list, columns: list) -> None:
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in zip(*columns):
            writer.writerow([f"{v:.12g}" for v in row])


@contextlib.contextmanager
def thread_limit(threads):
    if threads is None:
        yield
        return
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:
        os.environ.setdefault("OMP_NUM_THREADS", str(threads))
        yield
        return
    with threadpool_limits(limits=threads):
        yield


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    air = air_from_config(cfg)
    grid = grid_from_config(cfg)
    geom = geometry_from_config(cfg)
    resolution, quad_order = mesh_params_from_config(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    cache = None
    if args.cache_dir or os.environ.get(CACHE_ENV_VAR):
        cache = GreenCache(cache_dir_for(args, out))

    if args.rigid:
        mat = None
        alpha_ref = np.zeros(len(grid))
    else:
        mat = material_from_config(cfg)
        alpha_ref = reference_absorption(grid, mat, air, geom.elevation_deg)

    t0 = time.perf_counter()
    h = simulate_transfer_function(
        geom, mat, air, grid,
        resolution=resolution, quad_order=quad_order, cache=cache, rigid=args.rigid,
    )
    elapsed = time.perf_counter() - t0
    alpha_est = absorption_two_mic(h, geom, air)

    write_csv(out / "h12.csv", ["frequency_hz", "re_h12", "im_h12"],
              [grid.f, h.h12.real, h.h12.imag])
    write_csv(out / "alpha_comparison.csv",
              ["frequency_hz", "alpha_miki", "alpha_2mic"],
              [grid.f, alpha_ref, alpha_est.alpha])
    manifest = {
        "tool_version": __version__,
        "command": "simulate",
        "config": cfg,
        "rigid": bool(args.rigid),
        "mesh": {"resolution": resolution, "quad_order": quad_order},
        "elapsed_s": round(elapsed, 3),
        "flagged_frequencies": grid.f[h.flagged].tolist(),
    }
    (out / "simulation.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")

    from sonabs import figures

    figures.save_transfer_function_figure(grid.f, h.h12, out / "transfer_function.png")
    figures.save_absorption_figure(
        grid.f,
        {"reference": alpha_ref, "traditional": alpha_est.alpha},
        out / "absorption.png",
    )
    print(f"simulate: wrote {out} ({elapsed:.1f} s, N={len(grid)} frequencies)")
    return 0


def cmd_gen_dataset(args) -> int:
    cfg = load_config(args.config)
    air = air_from_config(cfg)
    grid = grid_from_config(cfg)
    config = generation_config_from(cfg, seed_override=args.seed)
    if args.paper_scale:
        config = config.paper_scale()
    out = Path(args.out)
    cache_dir = cache_dir_for(args, out)

    t0 = time.perf_counter()

    def progress(done, total):
        print(f"gen-dataset: base case {done}/{total} "
              f"({time.perf_counter() - t0:.0f} s elapsed)", flush=True)

    manifest = generate_dataset(
        config, grid, air, cache_dir, out,
        keep_cache=args.keep_cache, progress=progress,
    )
    print(f"gen-dataset: wrote {out} "
          f"(train {manifest['counts']['train']}, val {manifest['counts']['val']}, "
          f"test {manifest['counts']['test']})")
    return 0


def cmd_train(args) -> int:
    cfg = load_config(args.config) if args.config else {}
    tcfg = train_config_from(cfg, seed_override=args.seed)
    ds = load_dataset(args.dataset)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    n_freq = ds.n_freq
    net_cfg = NetworkConfig() if n_freq == 190 else NetworkConfig(
        input_len=n_freq,
        dense_widths=(2 * n_freq, n_freq, n_freq),
        expected_params=None,
    )
    model = build_network(net_cfg, seed=tcfg.seed)
    model.stats = ds.stats
    model.grid_f = ds.grid.f

    train_set = ds.standardized_for("train")
    val_set = ds.standardized_for("val")
    t0 = time.perf_counter()

    def progress(rec):
        print(f"epoch {rec.epoch:3d}  lr {rec.lr:.3e}  "
              f"train {rec.train_loss:.6e}  val {rec.val_loss:.6e}", flush=True)

    history = train(model, train_set, val_set, tcfg, progress=progress)
    elapsed = time.perf_counter() - t0

    save_model(model, out / "model.snn")
    write_history_csv(history, out / "history.csv")
    manifest = {
        "tool_version": __version__,
        "command": "train",
        "dataset": str(args.dataset),
        "dataset_config_hash": ds.manifest.get("config_hash"),
        "epochs_run": len(history),
        "best_val_loss": min(r.val_loss for r in history),
        "final_train_loss": history[-1].train_loss,
        "elapsed_s": round(elapsed, 1),
        "parameters": model.parameter_count(),
        "seed": tcfg.seed,
    }
    (out / "train.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")

    from sonabs import figures

    figures.save_history_figure(history, out / "training_curve.png")
    print(f"train: {len(history)} epochs in {elapsed:.0f} s, "
          f"best val MSE {manifest['best_val_loss']:.3e}, wrote {out}")
    return 0


def cmd_predict(args) -> int:
    model = load_model(args.model)
    if model.grid_f is None:
        raise SystemExit("model file carries no frequency grid; cannot regrid input")
    grid = FrequencyGrid(model.grid_f)
    f_meas, h12_raw, hc = load_measured_csv(args.h12, delimiter=args.delimiter)
    geom = load_geometry_sidecar(args.geometry)
    h12 = condition_measured(
        f_meas, h12_raw, grid, hc=hc,
        window=min(args.window, len(grid)),
        passes=0 if args.no_smooth else args.passes,
    )
    alpha = model.predict(h12, geom.elevation_deg)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(out, ["frequency_hz", "alpha_nn"], [grid.f, alpha])

    from sonabs import figures

    figures.save_absorption_figure(
        grid.f, {"network": alpha}, out.with_suffix(".png")
    )
    print(f"predict: wrote {out} ({len(grid)} rows)")
    return 0


def cmd_evaluate(args) -> int:
    model = load_model(args.model)
    ds = load_dataset(args.dataset)
    air = AirProperties()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    report = compare_methods(ds, model, air, split=args.split)
    payload = write_report(report, out)

    rows = ds.rows(args.split)
    re, im, theta, labels = ds.arrays_for(args.split)
    preds = model.predict_batch(re, im, theta)
    comparisons = []
    for j in np.linspace(0, rows.size - 1, min(args.n_spectra, rows.size)).astype(int):
        prov = ds.provenance[rows[j]]
        geom = geometry_from_provenance(prov)
        h = TransferSpectrum(re[j] + 1j * im[j], ds.grid, geometry=geom)
        comparisons.append(
            ScenarioComparison(
                name=f"record{rows[j]:04d}",
                frequency_hz=ds.grid.f,
                alpha_miki=labels[j],
                alpha_2mic=absorption_two_mic(h, geom, air).alpha,
                alpha_nn=preds[j],
            )
        )
    export_comparison(comparisons, out)

    from sonabs import figures

    figures.save_mse_histogram_figure(report, out / "mse_histogram.png")
    for comp in comparisons:
        figures.save_comparison_figure(comp, out / f"spectra_{comp.name}.png")

    summary = payload["summary"]
    print(json.dumps(summary, indent=2, sort_keys=True))
    ok = True
    if args.max_mean_ratio is not None:
        ok &= summary["mean_ratio_nn_over_2mic"] <= args.max_mean_ratio
    if args.max_median is not None:
        ok &= summary["mse_nn"]["median"] <= args.max_median
    if not ok:
        print("evaluate: acceptance thresholds violated", file=sys.stderr)
        return 1
    return 0


def cmd_verify(args) -> int:
    air = AirProperties()
    results = []

    def check(name, fn):
        t0 = time.perf_counter()
        try:
            fn()
            results.append((name, True, time.perf_counter() - t0, ""))
        except Exception as exc:  # noqa: BLE001 - report, don't crash the table
            results.append((name, False, time.perf_counter() - t0, str(exc)[:120]))

    def check_parameter_count():
        model = build_network()
        assert model.parameter_count() == 406300

    def check_gradients():
        from sonabs.network.model import loss_and_gradients

        cfg = NetworkConfig(input_len=16, in_channels=2, block_channels=(2, 4),
                            kernel=5, dense_widths=(8, 16), expected_params=None)
        model = build_network(cfg, seed=7)
        rng = np.random.default_rng(7)
        features = rng.standard_normal((3, 2, 16))
        theta = rng.standard_normal(3)
        labels = rng.uniform(0.1, 0.9, (3, 16))
        loss_and_gradients(model, features, theta, labels, l2=1e-3)
        analytic = {n: g.copy() for n, _, g, _ in model.named_params()}

        def objective():
            pred = model.forward(features, theta)
            err = pred - labels
            return float(np.mean(err * err)) + 1e-3 * model.weight_square_sum()

        h = 1e-5
        worst = 0.0
        rng2 = np.random.default_rng(13)
        for name, value, _, _ in model.named_params():
            flat = value.reshape(-1)
            grads = analytic[name].reshape(-1)
            idx = rng2.choice(flat.size, size=min(10, flat.size), replace=False)
            for j in idx:
                orig = flat[j]
                flat[j] = orig + h
                fp = objective()
                flat[j] = orig - h
                fm = objective()
                flat[j] = orig
                numeric = (fp - fm) / (2 * h)
                denom = max(abs(numeric), abs(grads[j]), 1e-8)
                worst = max(worst, abs(numeric - grads[j]) / denom)
        assert worst < 1e-5, f"gradient check worst relative error {worst:.2e}"

    def check_rigid_limit():
        geom = ScenarioGeometry(lx=0.6, ly=0.6, source_distance=1.21)
        grid = FrequencyGrid.default()
        h = simulate_transfer_function(geom, None, air, grid,
                                       resolution=6, rigid=True)
        analytic = incident_field(geom.mic_positions, geom.source_position,
                                  grid.wavenumbers(air))
        rel = np.abs(h.h12 - analytic[0] / analytic[1]) / np.abs(analytic[0] / analytic[1])
        assert np.max(rel) < 1e-10, f"max relative deviation {np.max(rel):.2e}"

    def check_round_trip():
        geom = ScenarioGeometry(lx=0.6, ly=0.6, source_distance=1.21)
        grid = FrequencyGrid.default()
        r0 = 0.5 + 0.2j
        h = synthesize_transfer_function(r0, geom, grid, air)
        from sonabs.twomic import reflection_two_mic

        r = reflection_two_mic(h, geom, air)
        rel = np.max(np.abs(r - r0)) / abs(r0)
        assert rel < 1e-10, f"round-trip relative error {rel:.2e}"

    def check_mesh_convergence():
        # Reference scenario; the quick variant samples the grid sparsely
        # (the refinement sensitivity peaks near the top of the band, which
        # the subset includes).
        geom = ScenarioGeometry(lx=0.6, ly=0.6, source_distance=1.21)
        full = FrequencyGrid.default()
        grid = full if args.full else FrequencyGrid(full.f[9::18])
        resolution = 6.0
        mat = MaterialParams(sigma=54.7, d=0.02)
        h_coarse = simulate_transfer_function(geom, mat, air, grid,
                                              resolution=resolution)
        mesh = build_mesh(geom, air, grid.f_max, resolution).refine()
        zs = surface_impedance(grid, mat, air, geom.elevation_deg)
        gset = GreenMatrixSet(mesh, grid, air, geom.mic_positions)
        surface = solve_surface_pressure(gset, zs, geom.source_position, air)
        p = field_at_receivers(gset, surface, zs, geom.source_position, air)
        h_fine = p[0] / p[1]
        rel = np.max(np.abs(h_fine - h_coarse.h12) / np.abs(h_coarse.h12))
        assert rel < 0.01, f"H12 changed by {rel:.3%} under refinement"

    check("parameter-count", check_parameter_count)
    check("gradient-check", check_gradients)
    check("two-mic-round-trip", check_round_trip)
    check("rigid-limit", check_rigid_limit)
    check("mesh-convergence", check_mesh_convergence)

    width = max(len(name) for name, *_ in results)
    print(f"{'suite':<{width + 2}}{'status':<8}{'time':>8}")
    failed = 0
    for name, ok, dt, msg in results:
        status = "PASS" if ok else "FAIL"
        failed += not ok
        line = f"{name:<{width + 2}}{status:<8}{dt:>7.1f}s"
        if msg:
            line += f"  {msg}"
        print(line)
    return 1 if failed else 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sonabs",
        description="In-situ sound absorption workbench: BEM simulation, "
                    "dataset synthesis, network training, and evaluation.",
    )
    parser.add_argument("--version", action="version", version=f"sonabs {__version__}")
    parser.add_argument("--threads", type=int, default=None,
                        help="limit BLAS/worker threads (1 guarantees "
                             "bit-reproducible runs)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="BEM + two-mic chain for one scenario")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--rigid", action="store_true",
                   help="replace the absorber with a rigid surface")
    p.add_argument("--cache-dir", default=None)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("gen-dataset", help="synthesize the labeled corpus")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--paper-scale", action="store_true",
                   help="530 base cases at 6 elements/wavelength "
                        "(multi-day CPU job)")
    p.add_argument("--keep-cache", action="store_true")
    p.add_argument("--cache-dir", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(fn=cmd_gen_dataset)

    p = sub.add_parser("train", help="train the network on a dataset directory")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("predict", help="predict absorption from a measured H12 CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--h12", required=True)
    p.add_argument("--geometry", required=True,
                   help="JSON sidecar with lx_m, ly_m, source_distance_m, "
                        "elevation_deg")
    p.add_argument("--out", required=True)
    p.add_argument("--delimiter", default=",")
    p.add_argument("--window", type=int, default=20)
    p.add_argument("--passes", type=int, default=2)
    p.add_argument("--no-smooth", action="store_true")
    p.set_defaults(fn=cmd_predict)

    p = sub.add_parser("evaluate", help="compare estimators on a dataset split")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--n-spectra", type=int, default=3)
    p.add_argument("--max-mean-ratio", type=float, default=None,
                   help="fail if mean MSE_NN / mean MSE_2mic exceeds this")
    p.add_argument("--max-median", type=float, default=None,
                   help="fail if median MSE_NN exceeds this")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("verify", help="run the built-in verification suites")
    p.add_argument("--full", action="store_true",
                   help="acceptance-scale mesh-convergence scenario")
    p.set_defaults(fn=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    with thread_limit(args.threads):
        return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
