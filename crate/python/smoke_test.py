#!/usr/bin/env python3
"""Smoke test for the holo_py extension module.

Builds nothing itself: run `cargo build -p holo-python --release` first,
then `python3 python/smoke_test.py`. Copies the cdylib next to a temp
directory under the importable name and exercises the simulate ->
reconstruct -> analyze chain end to end.
"""

import math
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np

ROOT = Path(__file__).resolve().parent.parent


def import_holo_py():
    candidates = [
        ROOT / "target" / "release" / "libholo_py.so",
        ROOT / "target" / "debug" / "libholo_py.so",
    ]
    built = [p for p in candidates if p.exists()]
    if not built:
        print("FAIL: build the extension first: cargo build -p holo-python --release")
        sys.exit(1)
    newest = max(built, key=lambda p: p.stat().st_mtime)
    stage = Path(tempfile.mkdtemp(prefix="holo_py_"))
    shutil.copy2(newest, stage / "holo_py.so")
    sys.path.insert(0, str(stage))
    import holo_py

    return holo_py


def main():
    holo = import_holo_py()
    print(f"loaded holo_py {holo.__version__}")

    # analytic 1D quadratic phase at x = 1 mm, f = 58 mm, 810 nm
    values, shape = holo.mask_phase("quadratic1d", 512, 4.0, focal_mm=58.0)
    phase = np.asarray(values).reshape(shape)
    got = phase[256, 506]  # x = (506 - 256) * 4 um = 1.000 mm, y = 0
    want = math.pi * 1e-6 / (810e-9 * 58e-3)
    assert abs(got - want) < 1e-9, f"quadratic1d phase {got} != {want}"
    print(f"PASS mask_phase: phi(1 mm) = {got:.6f} rad")

    cfg = """
    mask.kind = spiral
    mask.charge = 1
    grid.size = 128
    grid.pitch_um = 4.0
    tilt.a1 = 4.0e5
    noise.signal_hz = 1.0e6
    """
    sim = holo.simulate(cfg, events=2e5, seed=11)
    counts = np.asarray(sim.counts).reshape(sim.shape)
    assert sim.shape == (128, 128)
    assert sim.n_events > 1.9e5
    assert counts.sum() == sim.n_events, "histogram must keep every event"
    again = holo.simulate(cfg, events=2e5, seed=11)
    assert np.array_equal(np.asarray(again.counts), np.asarray(sim.counts))
    kinds = {k for _, _, k in sim.events()}
    assert "signal" in kinds
    print(f"PASS simulate: {sim.n_events} events, repeatable, kinds {sorted(kinds)}")

    flat = holo.simulate(cfg.replace("spiral", "flat"), events=2e5, seed=12)
    rec = holo.reconstruct(
        sim.counts, sim.width, sim.height, sim.pitch_m, reference=flat.counts
    )
    validity = np.asarray(rec.validity).reshape(rec.shape)
    assert validity.any(), "no valid pixels"
    kx, ky, radius, taper = rec.sideband
    assert kx > 0 and radius > 0 and taper >= 0
    slope = holo.azimuthal_slope(
        rec.phase, sim.width, sim.height, validity=rec.validity
    )
    assert abs(slope - 1.0) < 0.05, f"azimuthal slope {slope}"
    print(f"PASS reconstruct: sideband kx = {kx:.0f} rad/m, winding slope {slope:.4f}")

    median, clip_fraction, n_pixels = holo.visibility_median(
        sim.counts, sim.width, sim.height, sim.pitch_m
    )
    assert 0.9 <= median <= 1.0, f"visibility median {median}"
    print(f"PASS visibility: median {median:.4f} over {n_pixels} pixels")

    unc = holo.bootstrap(
        flat.counts, flat.width, flat.height, flat.pitch_m, resamples=25, seed=3
    )
    std = np.asarray(unc.std_phase).reshape(unc.shape)
    ok = np.asarray(unc.validity).reshape(unc.shape)
    assert unc.n_failures == 0
    assert np.median(std[ok]) < 0.2, f"flat-beam std median {np.median(std[ok])}"
    print(f"PASS bootstrap: {unc.n_resamples} resamples, std median {np.median(std[ok]):.4f} rad")

    abscissa, prof_values, errors, valid = holo.column_profile(
        rec.phase, sim.width, sim.height, sim.pitch_m, validity=rec.validity
    )
    assert len(abscissa) == sim.height
    assert any(valid)
    assert all(np.isfinite(v) for v, ok_ in zip(prof_values, valid) if ok_)
    print(f"PASS column_profile: {sum(valid)} valid points")

    with tempfile.TemporaryDirectory() as d:
        path = str(Path(d) / "counts.map")
        holo.write_map(path, sim.counts, sim.width, sim.height, sim.pitch_m, name="counts")
        back, shape_back, pitch_back, name, dtype = holo.read_map(path)
        assert shape_back == sim.shape and dtype == "f64" and name == "counts"
        assert pitch_back == sim.pitch_m
        assert np.array_equal(np.asarray(back), np.asarray(sim.counts))
    print("PASS map file round trip")

    print("all smoke tests passed")


if __name__ == "__main__":
    main()
