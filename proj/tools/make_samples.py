#!/usr/bin/env python3
"""Regenerates the fixture files under samples/.

Deterministic: fixed RNG seeds, values rounded to the counter granularity
where the data are count rates. Run from the repository root.
"""

import json
import math
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parent.parent / "samples"
H = 6.62607015e-34
C = 299792458.0


def write_json(path, obj):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2) + "\n")


def write_csv(path, header, rows, fmt="{:.12g}"):
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    for r in rows:
        lines.append(",".join(fmt.format(v) if isinstance(v, float) else str(v) for v in r))
    path.write_text("\n".join(lines) + "\n")


def granular(rate, t_int):
    return round(rate * t_int) / t_int


def simulate():
    d = ROOT / "simulate"
    write_json(d / "materials" / "nbtin_placeholder.json", {
        "table": [
            {"wavelength": "1.20um", "n": 4.40, "k": 5.00},
            {"wavelength": "1.30um", "n": 4.65, "k": 5.25},
            {"wavelength": "1.40um", "n": 4.90, "k": 5.50},
            {"wavelength": "1.50um", "n": 5.10, "k": 5.70},
            {"wavelength": "1.55um", "n": 5.20, "k": 5.80},
            {"wavelength": "1.60um", "n": 5.30, "k": 5.90},
            {"wavelength": "1.70um", "n": 5.50, "k": 6.10},
        ]
    })
    write_json(d / "paper_default.json", {
        "description": "hybrid converter with default dimensions; nanowire constants are a placeholder",
        "materials": {"nbtin": {"file": "materials/nbtin_placeholder.json"}},
        "geometry": {"preset": "paper_default"},
        "wavelength": "1570nm",
        "polarization": "TE",
        "tips": {"t_det_sq": 0.995, "t_pic_sq": 0.925},
        "numerics": {"tol": 1e-3},
    })
    coarse = {"dx": "20nm", "dy": "10nm", "padding_x": "1.5um", "padding_y": "1.5um"}
    write_json(d / "lossless.json", {
        "description": "hairpin replaced by lossless nitride: nothing absorbs",
        "geometry": {"preset": "paper_default", "nanowire": {"material": "sin"}, "grid": coarse},
        "wavelength": "1570nm",
        "tips": {"t_det_sq": 0.995, "t_pic_sq": 0.925},
        "numerics": {"slices": 9},
    })
    write_json(d / "constant_alpha.json", {
        "description": "PIC core made of cladding oxide, so every slice is identical and alpha is constant",
        "geometry": {
            "preset": "paper_default",
            "pic_waveguide": {"material": "sio2", "taper_length": "15um"},
            "segmentation": {"z1": "10um", "z2": "15um", "dz2": "5um"},
            "pivot_z": "0um",
            "grid": coarse,
        },
        "wavelength": "1570nm",
        "tips": {"t_det_sq": 0.995, "t_pic_sq": 0.925},
        "numerics": {"slices": 9},
    })


def rotation():
    d = ROOT / "rotation"
    sweeps = {
        "paper_endpoints": [(0.0, 2.0), (0.8, 0.574)],
        "identity": [(-1.0, 3.5), (0.0, 3.5), (0.4, 3.5), (0.8, 3.5)],
        "unsorted": [(0.8, 0.574), (-0.4, 1.6), (0.0, 2.0), (0.4, 1.2)],
        "missing_zero": [(0.4, 1.2), (0.8, 0.574)],
    }
    for name, rows in sweeps.items():
        write_csv(d / f"{name}.csv", ["angle_deg", "u_a"], rows)
        write_json(d / f"{name}.json", {"sweep_csv": f"{name}.csv", "aligned_ode": 0.303})


def extract():
    d = ROOT / "extract"
    t_int = 0.1
    rng = np.random.default_rng(1570)
    bias = [round(6.0e-6 + 0.1e-6 * i, 10) for i in range(16)]
    rows = []
    for b in bias:
        if abs(b - 7.0e-6) < 1e-12:
            rate = 1.356e6
        else:
            rate = granular(1.356e6 * (1.0 + 4e-4 * rng.standard_normal()), t_int)
        dark = granular(40.0 * math.exp((b - 7.0e-6) / 0.5e-6), t_int)
        rows.append((b, rate, dark))
    write_csv(d / "trace_1570nm.csv", ["bias_a", "photon_rate_hz", "dark_rate_hz"], rows)
    # P_in scaled so the stage losses deliver the flux implied by the
    # reported rate and efficiency (1 mW would give ~3.23e7 photons/s).
    write_json(d / "paper_numbers.json", {
        "description": "count rate and loss chain at 1570 nm; p_in scaled for self-consistency",
        "budget": {
            "p_in": "0.53746mW",
            "wavelength": "1570nm",
            "db_fiber": [4.18, 1.35],
            "db_coupler": {"loopback_total_db": 22.23, "fiber_in_db": 2.70, "fiber_out_db": 2.83},
            "db_attenuator": 70,
            "db_fiber_sigma": 0.1,
        },
        "trace": {"csv": "trace_1570nm.csv", "integration_time": "100ms"},
        "at_bias": "7.0uA",
    })

    hv = H * C / 1570e-9
    unity = [(round(5e-6 + 0.25e-6 * i, 10), 1.0e6, 0.0) for i in range(7)]
    write_csv(d / "unity_trace.csv", ["bias_a", "photon_rate_hz", "dark_rate_hz"], unity)
    write_json(d / "unity.json", {
        "description": "one photon per count: rate equals flux, no dark counts",
        "budget": {"p_in": 1.0e6 * hv, "wavelength": "1570nm", "db_fiber": 0, "db_coupler": 0,
                   "db_attenuator": 0, "db_fiber_sigma": 0},
        "trace": {"csv": "unity_trace.csv", "integration_time": "100ms"},
        "at_bias": "5.75uA",
    })
    write_csv(d / "six_points.csv", ["bias_a", "photon_rate_hz", "dark_rate_hz"], rows[:6])
    write_json(d / "six_points.json", {
        "description": "too few points for the seven-point scatter",
        "budget": {"p_in": "0.53746mW", "wavelength": "1570nm", "db_fiber": 5.53, "db_coupler": 8.35,
                   "db_attenuator": 70, "db_fiber_sigma": 0.1},
        "trace": {"csv": "six_points.csv", "integration_time": "100ms"},
        "at_bias": "6.2uA",
    })


def analyze():
    d = ROOT / "analyze"
    t_int = 0.1
    rng = np.random.default_rng(242)

    iv = []
    for i in range(101):
        b = round(0.1e-6 * i, 10)
        v = 1e-6 * rng.uniform(-1, 1) if b <= 7.1e-6 + 1e-12 else 2.5e-3 + 1.2e3 * (b - 7.1e-6)
        iv.append((b, v))
    write_csv(d / "iv.csv", ["bias_a", "voltage_v"], iv)

    sigma = 242e-12 / (2.0 * math.sqrt(2.0 * math.log(2.0)))
    center = 2.0e-9
    width = 5e-12
    t0 = 1.2e-9
    nbins = 320
    events = rng.normal(center, sigma, 1_000_000)
    counts, _ = np.histogram(events, bins=nbins, range=(t0, t0 + nbins * width))
    counts = counts + rng.poisson(2.0, nbins)
    write_csv(d / "jitter.csv", ["bin_start_s", "counts"],
              [(t0 + i * width, int(c)) for i, c in enumerate(counts)])

    lin = [(float(db), 1.2e6 * 10 ** (-db / 10)) for db in range(0, 31, 3)]
    write_csv(d / "linearity.csv", ["attenuation_db", "rate_hz"], lin)

    plateau = []
    for i in range(80):
        b = round(0.1e-6 * i, 10)
        rate = granular(1.356e6 * 0.5 * (1 + math.erf((b - 4e-6) / 0.8e-6)), t_int)
        dark = granular(40.0 * math.exp((b - 7.0e-6) / 0.5e-6), t_int)
        plateau.append((b, rate, dark))
    write_csv(d / "plateau_trace.csv", ["bias_a", "photon_rate_hz", "dark_rate_hz"], plateau)

    write_json(d / "all.json", {
        "description": "synthetic IV, jitter, linearity, extinction, plateau and dark-count inputs",
        "iv": {"csv": "iv.csv", "v_threshold": "50uV"},
        "jitter": {"csv": "jitter.csv"},
        "linearity": {"csv": "linearity.csv"},
        "extinction": {"coupled_rate_hz": 1e6, "uncoupled_rate_hz": 100},
        "plateau": {"trace_csv": "plateau_trace.csv", "integration_time": "100ms"},
        "dark_counts": {"trace_csv": "plateau_trace.csv", "integration_time": "100ms", "bias": "7.0uA"},
    })
    write_json(d / "extinction_floor.json", {
        "description": "no counts on the uncoupled detector: lower bound from the counter floor",
        "extinction": {"coupled_rate_hz": 1e6, "uncoupled_rate_hz": 0, "integration_time": "100ms"},
    })
    bad = [(b, r, 43.0 if abs(b - 7.0e-6) < 1e-12 else dk) for b, r, dk in plateau]
    write_csv(d / "bad_dark_trace.csv", ["bias_a", "photon_rate_hz", "dark_rate_hz"], bad)
    write_json(d / "granularity_violation.json", {
        "description": "a 43 Hz dark rate cannot come from a 100 ms counter",
        "dark_counts": {"trace_csv": "bad_dark_trace.csv", "integration_time": "100ms", "bias": "7.0uA"},
    })
    write_json(d / "empty.json", {})


if __name__ == "__main__":
    simulate()
    rotation()
    extract()
    analyze()
