"""Estimator comparison: network vs. traditional two-mic vs. reference labels.

Emits plot-ready data only (per-record errors, histogram counts, spectrum
tables); rendering lives in sonabs.figures.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from sonabs.dataset import LoadedDataset
from sonabs.network.model import NetworkModel
from sonabs.twomic import absorption_two_mic
from sonabs.types import AirProperties, ScenarioGeometry, TransferSpectrum

#: Histogram support: 40 log-spaced bins spanning both method distributions.
HISTOGRAM_BINS = np.logspace(-8.0, 0.0, 41)


def mse_per_record(prediction: np.ndarray, label: np.ndarray) -> float:
    """Mean squared error over the frequency grid; no regularization term."""
    prediction = np.asarray(prediction, dtype=np.float64)
    label = np.asarray(label, dtype=np.float64)
    if prediction.shape != label.shape:
        raise ValueError(
            f"length mismatch: prediction {prediction.shape} vs label {label.shape}"
        )
    err = prediction - label
    return float(np.mean(err * err))


@dataclass
class EvaluationReport:
    """Per-record errors for both estimators plus summary statistics."""

    mse_nn: np.ndarray
    mse_2mic: np.ndarray
    histogram_bins: np.ndarray
    histogram_nn: np.ndarray
    histogram_2mic: np.ndarray
    split: str
    n_records: int
    metadata: dict = field(default_factory=dict)

    def summary(self) -> dict:
        def stats(x):
            return {
                "mean": float(np.mean(x)),
                "median": float(np.median(x)),
                "max": float(np.max(x)),
            }

        return {
            "split": self.split,
            "n_records": self.n_records,
            "mse_nn": stats(self.mse_nn),
            "mse_2mic": stats(self.mse_2mic),
            "mean_ratio_nn_over_2mic": float(
                np.mean(self.mse_nn) / np.mean(self.mse_2mic)
            ),
            **self.metadata,
        }


def geometry_from_provenance(prov: dict) -> ScenarioGeometry:
    try:
        return ScenarioGeometry(
            lx=prov["lx_m"],
            ly=prov["ly_m"],
            source_distance=prov["source_distance_m"],
            elevation_deg=prov["elevation_deg"],
            azimuth_deg=prov["azimuth_deg"],
        )
    except KeyError as exc:
        raise ValueError(f"record provenance missing geometry field {exc}") from exc


def compare_methods(
    dataset: LoadedDataset,
    model: NetworkModel,
    air: AirProperties,
    split: str = "test",
) -> EvaluationReport:
    """Evaluate both estimators per record against the infinite-sample label."""
    rows = dataset.rows(split)
    if rows.size == 0:
        raise ValueError(f"dataset has no '{split}' records")
    re, im, theta, labels = dataset.arrays_for(split)
    preds = model.predict_batch(re, im, theta)
    mse_nn = np.array([mse_per_record(p, y) for p, y in zip(preds, labels)])

    mse_2mic = np.empty(rows.size)
    for j, row in enumerate(rows):
        prov = dataset.provenance[row]
        geom = geometry_from_provenance(prov)
        h = TransferSpectrum(re[j] + 1j * im[j], dataset.grid, geometry=geom)
        alpha = absorption_two_mic(h, geom, air)
        mse_2mic[j] = mse_per_record(alpha.alpha, labels[j])

    hist_nn, _ = np.histogram(mse_nn, bins=HISTOGRAM_BINS)
    hist_2mic, _ = np.histogram(mse_2mic, bins=HISTOGRAM_BINS)
    return EvaluationReport(
        mse_nn=mse_nn,
        mse_2mic=mse_2mic,
        histogram_bins=HISTOGRAM_BINS,
        histogram_nn=hist_nn,
        histogram_2mic=hist_2mic,
        split=split,
        n_records=rows.size,
    )


@dataclass
class ScenarioComparison:
    """One scenario's absorption spectra from all three routes."""

    name: str
    frequency_hz: np.ndarray
    alpha_miki: np.ndarray
    alpha_2mic: np.ndarray
    alpha_nn: np.ndarray

    def __post_init__(self):
        n = self.frequency_hz.size
        for attr in ("alpha_miki", "alpha_2mic", "alpha_nn"):
            if getattr(self, attr).shape != (n,):
                raise ValueError(f"{attr} length must match the frequency axis")


def export_comparison(comparisons: list[ScenarioComparison], out_dir) -> list[Path]:
    """One CSV per scenario (frequency, alpha_miki, alpha_2mic, alpha_nn)
    plus a JSON summary across scenarios. Returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    summary = {}
    for comp in comparisons:
        path = out / f"spectra_{comp.name}.csv"
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["frequency_hz", "alpha_miki", "alpha_2mic", "alpha_nn"])
            for i in range(comp.frequency_hz.size):
                writer.writerow(
                    [
                        f"{comp.frequency_hz[i]:.10g}",
                        f"{comp.alpha_miki[i]:.12g}",
                        f"{comp.alpha_2mic[i]:.12g}",
                        f"{comp.alpha_nn[i]:.12g}",
                    ]
                )
        written.append(path)
        summary[comp.name] = {
            "mse_2mic_vs_miki": mse_per_record(comp.alpha_2mic, comp.alpha_miki),
            "mse_nn_vs_miki": mse_per_record(comp.alpha_nn, comp.alpha_miki),
        }
    summary_path = out / "spectra_summary.json"
    summary_path.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    written.append(summary_path)
    return written


def read_comparison_csv(path) -> ScenarioComparison:
    with Path(path).open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    name = Path(path).stem.removeprefix("spectra_")
    return ScenarioComparison(
        name=name,
        frequency_hz=np.array([float(r["frequency_hz"]) for r in rows]),
        alpha_miki=np.array([float(r["alpha_miki"]) for r in rows]),
        alpha_2mic=np.array([float(r["alpha_2mic"]) for r in rows]),
        alpha_nn=np.array([float(r["alpha_nn"]) for r in rows]),
    )


def write_report(report: EvaluationReport, out_dir) -> dict:
    """report.json (summary + histograms) and per_record_mse.csv."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    payload = {
        "summary": report.summary(),
        "histogram_bins": report.histogram_bins.tolist(),
        "histogram_nn": report.histogram_nn.tolist(),
        "histogram_2mic": report.histogram_2mic.tolist(),
    }
    (out / "report.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    with (out / "per_record_mse.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["record", "mse_nn", "mse_2mic"])
        for i, (a, b) in enumerate(zip(report.mse_nn, report.mse_2mic)):
            writer.writerow([i, f"{a:.12g}", f"{b:.12g}"])
    return payload
