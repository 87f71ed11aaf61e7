//! Fourier off-axis reconstruction: isolate the tilt sideband of an
//! interferogram spectrum, demodulate it, and turn its argument into an
//! unwrapped, reference-subtracted phase map.

use ndarray::Array2;
use num_complex::Complex64;
use std::collections::BinaryHeap;
use std::f64::consts::{PI, TAU};
use thiserror::Error;

use crate::fft2::{fft2, fftshift};
use crate::field::ComplexField;
use crate::grid::GridSpec;
use crate::photonsim::Interferogram;

#[derive(Debug, Error)]
pub enum ReconError {
    #[error("forward_fft: grid sides must be powers of two, got {0}x{1}")]
    NotPowerOfTwo(usize, usize),
    #[error("locate_sideband: no spectral peak clears the noise floor (max {max:.3e}, floor {floor:.3e}); tilt fringes too weak or absent")]
    NoSideband { max: f64, floor: f64 },
    #[error("extract_sideband: selection disk reaches the DC peak")]
    SelectionOverlapsDc,
    #[error("extract_sideband: {0}")]
    BadSelection(String),
    #[error("unwrap: shapes differ")]
    ShapeMismatch,
    #[error("unwrap: no valid pixel to seed from")]
    EmptyValidity,
    #[error("subtract_reference: fewer than 3 valid pixels for the plane fit")]
    PlaneFitUnderdetermined,
}

impl ReconError {
    /// Name of the pipeline stage that produced the error.
    pub fn stage(&self) -> &'static str {
        match self {
            ReconError::NotPowerOfTwo(..) => "forward_fft",
            ReconError::NoSideband { .. } => "locate_sideband",
            ReconError::SelectionOverlapsDc | ReconError::BadSelection(_) => "extract_sideband",
            ReconError::ShapeMismatch | ReconError::EmptyValidity => "unwrap_2d",
            ReconError::PlaneFitUnderdetermined => "subtract_reference",
        }
    }
}

/// Centered 2D spectrum; bin `(i, j)` holds spatial frequency
/// `(grid.kx(i), grid.ky(j))` in radians per meter.
#[derive(Debug, Clone)]
pub struct SpectrumMap {
    pub grid: GridSpec,
    pub values: Array2<Complex64>,
}

/// Disk in the Fourier plane, all quantities in radians per meter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SidebandSelection {
    pub center: (f64, f64),
    pub radius: f64,
    /// Raised-cosine edge width; 0 gives a hard edge.
    pub taper_width: f64,
}

#[derive(Debug, Clone)]
pub struct ReconstructionResult {
    /// Unwrapped, reference-subtracted phase in radians.
    pub phase: Array2<f64>,
    /// `|p|`, the product of the two arm amplitudes.
    pub cross_amplitude: Array2<f64>,
    pub validity: Array2<bool>,
    pub sideband: SidebandSelection,
    pub offset_convention: String,
}

/// Unitary DFT of a count histogram with DC shifted to the array center.
pub fn forward_fft(interferogram: &Interferogram) -> Result<SpectrumMap, ReconError> {
    let (h, w) = interferogram.counts.dim();
    if !w.is_power_of_two() || !h.is_power_of_two() {
        return Err(ReconError::NotPowerOfTwo(w, h));
    }
    let complex = interferogram.counts.mapv(|v| Complex64::new(v, 0.0));
    Ok(SpectrumMap {
        grid: interferogram.grid,
        values: fftshift(&fft2(&complex, false)),
    })
}

/// Pick the sideband peak: argmax of `|spectrum|` outside the DC exclusion
/// disk, restricted to the `kx > 0` half-plane (`ky > 0` on the `kx = 0`
/// line) so exactly one of the two conjugate lobes is chosen. Ties resolve
/// toward smaller `kx`, then smaller `ky`.
pub fn locate_sideband(
    spectrum: &SpectrumMap,
    dc_exclusion_radius: f64,
) -> Result<(f64, f64), ReconError> {
    let grid = &spectrum.grid;
    let mut best: Option<(f64, f64, f64)> = None;
    let mut mags: Vec<f64> = Vec::new();
    let mut global_max = 0.0f64;
    for ((j, i), v) in spectrum.values.indexed_iter() {
        let m = v.norm();
        global_max = global_max.max(m);
        let (kx, ky) = (grid.kx(i), grid.ky(j));
        if !(kx > 0.0 || (kx == 0.0 && ky > 0.0)) {
            continue;
        }
        if kx.hypot(ky) <= dc_exclusion_radius {
            continue;
        }
        mags.push(m);
        let better = match best {
            None => true,
            Some((bm, bkx, bky)) => {
                m > bm || (m == bm && (kx < bkx || (kx == bkx && ky < bky)))
            }
        };
        if better {
            best = Some((m, kx, ky));
        }
    }
    let (m, kx, ky) = best.ok_or(ReconError::NoSideband { max: 0.0, floor: 0.0 })?;
    let mid = mags.len() / 2;
    let (_, &mut median, _) = mags.select_nth_unstable_by(mid, f64::total_cmp);
    // a numerically flat image leaves only rounding noise; catch that with an
    // absolute guard relative to the DC peak
    let floor = (3.0 * median).max(1e-9 * global_max);
    if m < floor {
        return Err(ReconError::NoSideband { max: m, floor });
    }
    Ok((kx, ky))
}

fn disk_weight(d: f64, radius: f64, taper: f64) -> f64 {
    if d <= radius {
        1.0
    } else if taper > 0.0 && d <= radius + taper {
        0.5 * (1.0 + (PI * (d - radius) / taper).cos())
    } else {
        0.0
    }
}

fn wrap_index(idx: i64, n: usize) -> usize {
    idx.rem_euclid(n as i64) as usize
}

/// Mask a disk around the selection center, translate that center onto DC by
/// whole spectral bins, and inverse transform. The result's argument carries
/// the unknown phase plus a sub-bin linear residual that later plane handling
/// removes.
pub fn extract_sideband(
    spectrum: &SpectrumMap,
    sel: &SidebandSelection,
) -> Result<ComplexField, ReconError> {
    if !(sel.radius > 0.0) || sel.taper_width < 0.0 {
        return Err(ReconError::BadSelection(format!(
            "radius {} and taper {} must be positive and nonnegative",
            sel.radius, sel.taper_width
        )));
    }
    let grid = &spectrum.grid;
    let (h, w) = spectrum.values.dim();
    let cx_bins = (sel.center.0 / grid.dk_x()).round() as i64;
    let cy_bins = (sel.center.1 / grid.dk_y()).round() as i64;
    let off_dc = cx_bins != 0 || cy_bins != 0;
    if off_dc && sel.center.0.hypot(sel.center.1) <= sel.radius + sel.taper_width {
        return Err(ReconError::SelectionOverlapsDc);
    }

    let mut masked = Array2::zeros((h, w));
    for ((j, i), v) in spectrum.values.indexed_iter() {
        let d = (grid.kx(i) - sel.center.0).hypot(grid.ky(j) - sel.center.1);
        let wgt = disk_weight(d, sel.radius, sel.taper_width);
        if wgt > 0.0 {
            masked[[j, i]] = v * wgt;
        }
    }
    // demodulate: bin (center) -> bin (0, 0)
    let rolled = Array2::from_shape_fn((h, w), |(j, i)| {
        masked[[wrap_index(j as i64 + cy_bins, h), wrap_index(i as i64 + cx_bins, w)]]
    });
    let mut values = fft2(&fftshift(&rolled), true);
    // a whole-bin roll demodulates against x measured from index 0; the
    // parity factor moves the reference point to the grid center, so any
    // sub-bin residual plane crosses zero there
    if (cx_bins + cy_bins).rem_euclid(2) == 1 {
        values.mapv_inplace(|v| -v);
    }
    Ok(ComplexField { grid: *grid, values })
}

/// Low-passed intensity from the equivalent disk kept at DC; the local mean
/// `|u|^2 + |r|^2` that visibility estimates divide by.
pub fn dc_band_intensity(spectrum: &SpectrumMap, sel: &SidebandSelection) -> Array2<f64> {
    let grid = &spectrum.grid;
    let (h, w) = spectrum.values.dim();
    let mut masked = Array2::zeros((h, w));
    for ((j, i), v) in spectrum.values.indexed_iter() {
        let d = grid.kx(i).hypot(grid.ky(j));
        let wgt = disk_weight(d, sel.radius, sel.taper_width);
        if wgt > 0.0 {
            masked[[j, i]] = v * wgt;
        }
    }
    fft2(&fftshift(&masked), true).mapv(|v| v.re)
}

/// Per-pixel argument in `(-pi, pi]` plus a validity mask cutting pixels
/// whose modulus falls below `floor_frac` of the maximum.
pub fn wrapped_phase(p: &ComplexField, floor_frac: f64) -> (Array2<f64>, Array2<bool>) {
    let amp = p.values.mapv(|v| v.norm());
    let max = amp.iter().cloned().fold(0.0f64, f64::max);
    let floor = floor_frac * max;
    let validity = amp.mapv(|a| a >= floor && max > 0.0);
    let phase = p.values.mapv(|v| {
        let ph = v.arg();
        if ph == -PI {
            PI
        } else {
            ph
        }
    });
    (phase, validity)
}

#[derive(PartialEq)]
struct QEntry(f64, usize, usize);

impl Eq for QEntry {}
impl PartialOrd for QEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for QEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0
            .total_cmp(&other.0)
            .then(self.1.cmp(&other.1))
            .then(self.2.cmp(&other.2))
    }
}

const NEIGHBORS: [(i64, i64); 4] = [(-1, 0), (1, 0), (0, -1), (0, 1)];

/// Quality-guided unwrapping. Starts from the highest-quality valid pixel,
/// grows the region in descending quality order, and offsets each new pixel
/// by the 2-pi multiple that minimizes the jump to its best already-unwrapped
/// neighbor. Disconnected valid regions are re-seeded independently; invalid
/// pixels pass through unchanged.
pub fn unwrap_2d(
    wrapped: &Array2<f64>,
    quality: &Array2<f64>,
    validity: &Array2<bool>,
) -> Result<Array2<f64>, ReconError> {
    let dim = wrapped.dim();
    if quality.dim() != dim || validity.dim() != dim {
        return Err(ReconError::ShapeMismatch);
    }
    if !validity.iter().any(|&v| v) {
        return Err(ReconError::EmptyValidity);
    }
    let (h, w) = dim;
    let mut out = wrapped.clone();
    let mut visited = Array2::from_elem(dim, false);
    let mut heap: BinaryHeap<QEntry> = BinaryHeap::new();
    let mut remaining: usize = validity.iter().filter(|&&v| v).count();

    while remaining > 0 {
        // seed the next connected component at its best pixel
        let mut seed: Option<(f64, usize, usize)> = None;
        for ((j, i), &ok) in validity.indexed_iter() {
            if ok && !visited[[j, i]] {
                let q = quality[[j, i]];
                if seed.map_or(true, |(bq, ..)| q > bq) {
                    seed = Some((q, j, i));
                }
            }
        }
        let (_, sj, si) = seed.expect("remaining > 0 guarantees a seed");
        visited[[sj, si]] = true;
        remaining -= 1;
        heap.clear();
        for (dj, di) in NEIGHBORS {
            let (nj, ni) = (sj as i64 + dj, si as i64 + di);
            if nj >= 0 && ni >= 0 && nj < h as i64 && ni < w as i64 {
                let (nj, ni) = (nj as usize, ni as usize);
                if validity[[nj, ni]] && !visited[[nj, ni]] {
                    heap.push(QEntry(quality[[nj, ni]], nj, ni));
                }
            }
        }
        while let Some(QEntry(_, j, i)) = heap.pop() {
            if visited[[j, i]] {
                continue;
            }
            // anchor on the highest-quality neighbor already unwrapped
            let mut anchor: Option<(f64, f64)> = None;
            for (dj, di) in NEIGHBORS {
                let (nj, ni) = (j as i64 + dj, i as i64 + di);
                if nj >= 0 && ni >= 0 && nj < h as i64 && ni < w as i64 {
                    let (nj, ni) = (nj as usize, ni as usize);
                    if visited[[nj, ni]] {
                        let q = quality[[nj, ni]];
                        if anchor.map_or(true, |(bq, _)| q > bq) {
                            anchor = Some((q, out[[nj, ni]]));
                        }
                    }
                }
            }
            let (_, anchor_val) = anchor.expect("frontier pixels touch the region");
            let turns = ((anchor_val - wrapped[[j, i]]) / TAU).round();
            out[[j, i]] = wrapped[[j, i]] + TAU * turns;
            visited[[j, i]] = true;
            remaining -= 1;
            for (dj, di) in NEIGHBORS {
                let (nj, ni) = (j as i64 + dj, i as i64 + di);
                if nj >= 0 && ni >= 0 && nj < h as i64 && ni < w as i64 {
                    let (nj, ni) = (nj as usize, ni as usize);
                    if validity[[nj, ni]] && !visited[[nj, ni]] {
                        heap.push(QEntry(quality[[nj, ni]], nj, ni));
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Least-squares plane `c0 + c1 x + c2 y` through scattered samples.
pub(crate) fn fit_plane_points(pts: &[(f64, f64, f64)]) -> Result<(f64, f64, f64), ReconError> {
    if pts.len() < 3 {
        return Err(ReconError::PlaneFitUnderdetermined);
    }
    let n = pts.len() as f64;
    let (mut mx, mut my, mut mv) = (0.0, 0.0, 0.0);
    for &(x, y, v) in pts {
        mx += x;
        my += y;
        mv += v;
    }
    mx /= n;
    my /= n;
    mv /= n;
    let (mut sxx, mut sxy, mut syy, mut sxv, mut syv) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(x, y, v) in pts {
        let (dx, dy, dv) = (x - mx, y - my, v - mv);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
        sxv += dx * dv;
        syv += dy * dv;
    }
    let det = sxx * syy - sxy * sxy;
    let scale = (sxx * syy).max(sxy * sxy);
    if det.abs() <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
        return Err(ReconError::PlaneFitUnderdetermined);
    }
    let c1 = (sxv * syy - syv * sxy) / det;
    let c2 = (syv * sxx - sxv * sxy) / det;
    Ok((mv - c1 * mx - c2 * my, c1, c2))
}

fn nearest_valid_value(
    map: &Array2<f64>,
    validity: &Array2<bool>,
    target: (f64, f64),
) -> Option<f64> {
    let mut best: Option<(f64, f64)> = None;
    for ((j, i), &ok) in validity.indexed_iter() {
        if ok {
            let dx = i as f64 - target.0;
            let dy = j as f64 - target.1;
            let d2 = dx * dx + dy * dy;
            if best.map_or(true, |(bd, _)| d2 < bd) {
                best = Some((d2, map[[j, i]]));
            }
        }
    }
    best.map(|(_, v)| v)
}

/// Remove the reference phase: subtract `ref_phase` when given, otherwise the
/// best-fit plane over valid pixels. The result is then shifted to be zero at
/// the valid pixel nearest the amplitude-weighted centroid, fixing the free
/// constant offset.
pub fn subtract_reference(
    phase: &Array2<f64>,
    ref_phase: Option<&Array2<f64>>,
    validity: &Array2<bool>,
    amplitude: &Array2<f64>,
    grid: &GridSpec,
) -> Result<Array2<f64>, ReconError> {
    if validity.dim() != phase.dim() || amplitude.dim() != phase.dim() {
        return Err(ReconError::ShapeMismatch);
    }
    let mut out = phase.clone();
    match ref_phase {
        Some(r) => {
            if r.dim() != phase.dim() {
                return Err(ReconError::ShapeMismatch);
            }
            out.zip_mut_with(r, |v, &rv| *v -= rv);
        }
        None => {
            let pts: Vec<(f64, f64, f64)> = out
                .indexed_iter()
                .filter(|((j, i), _)| validity[[*j, *i]])
                .map(|((j, i), &v)| (grid.x(i), grid.y(j), v))
                .collect();
            let (c0, c1, c2) = fit_plane_points(&pts)?;
            for ((j, i), v) in out.indexed_iter_mut() {
                *v -= c0 + c1 * grid.x(i) + c2 * grid.y(j);
            }
        }
    }
    // pin the free constant: zero at the amplitude-weighted centroid
    let (mut sw, mut sx, mut sy) = (0.0, 0.0, 0.0);
    for ((j, i), &ok) in validity.indexed_iter() {
        if ok {
            let a = amplitude[[j, i]];
            sw += a;
            sx += a * i as f64;
            sy += a * j as f64;
        }
    }
    if !(sw > 0.0) {
        return Err(ReconError::EmptyValidity);
    }
    let offset = nearest_valid_value(&out, validity, (sx / sw, sy / sw))
        .ok_or(ReconError::EmptyValidity)?;
    out.mapv_inplace(|v| v - offset);
    Ok(out)
}

/// Tunable knobs of `reconstruct`, with the defaults used throughout.
#[derive(Debug, Clone)]
pub struct ReconParams {
    /// DC exclusion radius for the sideband search in radians per meter;
    /// `None` means 16 spectral bins.
    pub dc_exclusion: Option<f64>,
    /// Mask radius as a fraction of the sideband-to-DC distance.
    pub mask_radius_frac: f64,
    /// Raised-cosine taper width as a fraction of the mask radius.
    pub taper_frac: f64,
    /// Validity floor as a fraction of the peak cross amplitude.
    pub amplitude_floor_frac: f64,
    /// Reuse a fixed selection instead of locating the sideband again.
    pub sideband: Option<SidebandSelection>,
}

impl Default for ReconParams {
    fn default() -> Self {
        ReconParams {
            dc_exclusion: None,
            mask_radius_frac: 0.5,
            taper_frac: 0.1,
            amplitude_floor_frac: 0.05,
            sideband: None,
        }
    }
}

pub(crate) struct SingleRun {
    pub sel: SidebandSelection,
    pub amplitude: Array2<f64>,
    pub validity: Array2<bool>,
    pub unwrapped: Array2<f64>,
}

/// The selection `reconstruct` will use: either the one pinned in `params`
/// or a disk sized from the located peak.
pub(crate) fn resolve_selection(
    spectrum: &SpectrumMap,
    params: &ReconParams,
) -> Result<SidebandSelection, ReconError> {
    if let Some(s) = params.sideband {
        return Ok(s);
    }
    let grid = &spectrum.grid;
    let dc_ex = params
        .dc_exclusion
        .unwrap_or(16.0 * grid.dk_x().min(grid.dk_y()));
    let center = locate_sideband(spectrum, dc_ex)?;
    let radius = params.mask_radius_frac * center.0.hypot(center.1);
    Ok(SidebandSelection { center, radius, taper_width: params.taper_frac * radius })
}

pub(crate) fn single_run(
    interferogram: &Interferogram,
    params: &ReconParams,
) -> Result<SingleRun, ReconError> {
    let spectrum = forward_fft(interferogram)?;
    let sel = resolve_selection(&spectrum, params)?;
    let p = extract_sideband(&spectrum, &sel)?;
    let (wrapped, validity) = wrapped_phase(&p, params.amplitude_floor_frac);
    let amplitude = p.values.mapv(|v| v.norm());
    let unwrapped = unwrap_2d(&wrapped, &amplitude, &validity)?;
    Ok(SingleRun { sel, amplitude, validity, unwrapped })
}

/// Full pipeline: locate and extract the sideband, unwrap its phase, and
/// remove the reference. A reference interferogram, when given, is processed
/// with the same sideband selection and its unwrapped phase subtracted;
/// otherwise a fitted plane stands in for it.
pub fn reconstruct(
    interferogram: &Interferogram,
    reference: Option<&Interferogram>,
    params: &ReconParams,
) -> Result<ReconstructionResult, ReconError> {
    let sig = single_run(interferogram, params)?;
    let (ref_phase, validity) = match reference {
        None => (None, sig.validity.clone()),
        Some(r) => {
            let mut ref_params = params.clone();
            ref_params.sideband = Some(sig.sel);
            let ref_run = single_run(r, &ref_params)?;
            let combined = Array2::from_shape_fn(sig.validity.dim(), |(j, i)| {
                sig.validity[[j, i]] && ref_run.validity[[j, i]]
            });
            (Some(ref_run.unwrapped), combined)
        }
    };
    let phase = subtract_reference(
        &sig.unwrapped,
        ref_phase.as_ref(),
        &validity,
        &sig.amplitude,
        &interferogram.grid,
    )?;
    Ok(ReconstructionResult {
        phase,
        cross_amplitude: sig.amplitude,
        validity,
        sideband: sig.sel,
        offset_convention: "zero at the valid pixel nearest the amplitude-weighted centroid"
            .to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{
        apply_mask, apply_phase, gaussian_field, interfere, mask_phase, PhaseMask, TiltSpec,
    };
    use approx::assert_relative_eq;

    fn intensity_interferogram(
        grid: &GridSpec,
        mask: &PhaseMask,
        tilt: &TiltSpec,
        waist: f64,
    ) -> Interferogram {
        let u = apply_mask(&gaussian_field(grid, waist, (0.0, 0.0)).unwrap(), mask).unwrap();
        let r = gaussian_field(grid, waist, (0.0, 0.0)).unwrap();
        let counts = interfere(&u, &r, tilt).unwrap();
        Interferogram { grid: *grid, counts }
    }

    #[test]
    fn constant_image_concentrates_at_dc() {
        let g = GridSpec::square(64, 1e-5).unwrap();
        let i = Interferogram { grid: g, counts: Array2::from_elem(g.shape(), 2.5) };
        let s = forward_fft(&i).unwrap();
        let dc = s.values[[32, 32]].norm();
        for ((j, i_), v) in s.values.indexed_iter() {
            if (j, i_) != (32, 32) {
                assert!(v.norm() < 1e-12 * dc, "leak at {j},{i_}");
            }
        }
        assert_relative_eq!(dc, 2.5 * 64.0, max_relative = 1e-12);
    }

    #[test]
    fn cosine_fringe_peaks_at_its_frequency() {
        let g = GridSpec::square(128, 1e-5).unwrap();
        let m0 = 9.0;
        let a1 = m0 * g.dk_x();
        let counts = Array2::from_shape_fn(g.shape(), |(_, i)| 1.0 + (a1 * g.x(i)).cos());
        let s = forward_fft(&Interferogram { grid: g, counts }).unwrap();
        let found = locate_sideband(&s, 3.0 * g.dk_x()).unwrap();
        assert_relative_eq!(found.0, a1, max_relative = 1e-12);
        assert_eq!(found.1, 0.0);
        // conjugate lobe is the mirror image
        let plus = s.values[[64, 64 + 9]].norm();
        let minus = s.values[[64, 64 - 9]].norm();
        assert_relative_eq!(plus, minus, max_relative = 1e-9);
    }

    #[test]
    fn spectrum_of_a_real_image_is_hermitian() {
        let g = GridSpec::square(64, 1e-5).unwrap();
        let counts = Array2::from_shape_fn(g.shape(), |(j, i)| {
            ((i * 7 + j * 3) % 11) as f64 + 0.1 * (i as f64 * 0.3).sin()
        });
        let s = forward_fft(&Interferogram { grid: g, counts }).unwrap();
        let (h, w) = s.values.dim();
        let scale = s.values.iter().map(|v| v.norm()).fold(0.0f64, f64::max);
        for ((j, i), v) in s.values.indexed_iter() {
            let mj = (2 * (h / 2) + h - j) % h;
            let mi = (2 * (w / 2) + w - i) % w;
            let mirror = s.values[[mj, mi]];
            assert!((v - mirror.conj()).norm() < 1e-9 * scale);
        }
    }

    #[test]
    fn flat_image_has_no_sideband() {
        let g = GridSpec::square(64, 1e-5).unwrap();
        let i = Interferogram { grid: g, counts: Array2::from_elem(g.shape(), 1.0) };
        let s = forward_fft(&i).unwrap();
        assert!(matches!(
            locate_sideband(&s, 3.0 * g.dk_x()),
            Err(ReconError::NoSideband { .. })
        ));
    }

    #[test]
    fn simulated_tilt_is_located_within_one_bin() {
        let g = GridSpec::square(256, 1e-5).unwrap();
        let tilt = TiltSpec { a1: 1.2e5, a2: 0.0, phi0: 0.0 };
        let mask = PhaseMask::quadratic_2d(810e-9, 125e-3);
        let i = intensity_interferogram(&g, &mask, &tilt, 350e-6);
        let s = forward_fft(&i).unwrap();
        let (kx, ky) = locate_sideband(&s, 16.0 * g.dk_x()).unwrap();
        assert!((kx - tilt.a1).abs() <= g.dk_x());
        assert!(ky.abs() <= g.dk_y());
    }

    #[test]
    fn extracting_a_pure_cosine_gives_a_constant_quarter() {
        let g = GridSpec::square(128, 1e-5).unwrap();
        let a1 = 9.0 * g.dk_x();
        let counts = Array2::from_shape_fn(g.shape(), |(_, i)| 0.5 * (a1 * g.x(i)).cos());
        let s = forward_fft(&Interferogram { grid: g, counts }).unwrap();
        let sel = SidebandSelection { center: (a1, 0.0), radius: 4.0 * g.dk_x(), taper_width: 0.0 };
        let p = extract_sideband(&s, &sel).unwrap();
        for v in p.values.iter() {
            assert!((v.norm() - 0.25).abs() < 1e-9);
            assert!(v.arg().abs() < 1e-9);
        }
    }

    #[test]
    fn taper_choice_barely_moves_the_phase() {
        let g = GridSpec::square(256, 1e-5).unwrap();
        let tilt = TiltSpec { a1: 1.5e5, a2: 0.0, phi0: 0.0 };
        let mask = PhaseMask::quadratic_2d(810e-9, 125e-3);
        let i = intensity_interferogram(&g, &mask, &tilt, 350e-6);
        let s = forward_fft(&i).unwrap();
        let dist = tilt.a1;
        let hard = SidebandSelection { center: (tilt.a1, 0.0), radius: 0.5 * dist, taper_width: 0.0 };
        let soft = SidebandSelection {
            center: (tilt.a1, 0.0),
            radius: 0.5 * dist,
            taper_width: 0.05 * dist,
        };
        let ph = extract_sideband(&s, &hard).unwrap();
        let ps = extract_sideband(&s, &soft).unwrap();
        let amax = ph.values.iter().map(|v| v.norm()).fold(0.0f64, f64::max);
        let mut se = 0.0;
        let mut n = 0;
        for (a, b) in ph.values.iter().zip(ps.values.iter()) {
            if a.norm() > 0.2 * amax {
                let d = (b * a.conj()).arg();
                se += d * d;
                n += 1;
            }
        }
        let rms = (se / n as f64).sqrt();
        assert!(rms < 1e-3, "rms {rms}");
    }

    #[test]
    fn full_disk_at_dc_reproduces_the_image() {
        let g = GridSpec::square(64, 1e-5).unwrap();
        let counts = Array2::from_shape_fn(g.shape(), |(j, i)| {
            1.0 + 0.3 * ((i as f64) * 0.2).sin() + 0.1 * ((j as f64) * 0.4).cos()
        });
        let i = Interferogram { grid: g, counts: counts.clone() };
        let s = forward_fft(&i).unwrap();
        // radius beyond Nyquist keeps every bin
        let sel = SidebandSelection {
            center: (0.0, 0.0),
            radius: 64.0 * g.dk_x(),
            taper_width: 0.0,
        };
        let back = extract_sideband(&s, &sel).unwrap();
        for (a, b) in back.values.iter().zip(counts.iter()) {
            assert!((a.re - b).abs() < 1e-10 && a.im.abs() < 1e-10);
        }
    }

    #[test]
    fn selection_reaching_dc_is_rejected() {
        let g = GridSpec::square(64, 1e-5).unwrap();
        let i = Interferogram { grid: g, counts: Array2::from_elem(g.shape(), 1.0) };
        let s = forward_fft(&i).unwrap();
        let sel = SidebandSelection {
            center: (10.0 * g.dk_x(), 0.0),
            radius: 11.0 * g.dk_x(),
            taper_width: 0.0,
        };
        assert!(matches!(
            extract_sideband(&s, &sel),
            Err(ReconError::SelectionOverlapsDc)
        ));
    }

    #[test]
    fn wrapped_phase_follows_the_atan2_conventions() {
        let g = GridSpec::square(8, 1.0).unwrap();
        let mut values = Array2::from_elem(g.shape(), Complex64::new(1.0, 0.0));
        values[[0, 1]] = Complex64::new(-1.0, 1e-300);
        values[[0, 2]] = Complex64::new(0.0, 1.0);
        values[[0, 3]] = Complex64::new(-1.0, 0.0);
        let (ph, validity) = wrapped_phase(&ComplexField { grid: g, values }, 0.0);
        assert_eq!(ph[[0, 0]], 0.0);
        assert_relative_eq!(ph[[0, 1]], PI);
        assert_relative_eq!(ph[[0, 2]], PI / 2.0);
        assert_eq!(ph[[0, 3]], PI);
        assert!(validity.iter().all(|&v| v));
    }

    #[test]
    fn amplitude_floor_marks_weak_pixels_invalid() {
        let g = GridSpec::square(8, 1.0).unwrap();
        let mut values = Array2::from_elem(g.shape(), Complex64::new(1.0, 0.0));
        values[[3, 3]] = Complex64::new(0.01, 0.0);
        let (_, validity) = wrapped_phase(&ComplexField { grid: g, values }, 0.05);
        assert!(!validity[[3, 3]]);
        assert!(validity[[0, 0]]);
    }

    fn wrap(v: f64) -> f64 {
        let mut w = v.rem_euclid(TAU);
        if w > PI {
            w -= TAU;
        }
        w
    }

    #[test]
    fn unwrap_recovers_a_steep_1d_ramp() {
        let n = 64;
        let truth = Array2::from_shape_fn((8, n), |(_, i)| {
            6.0 * PI * i as f64 / (n as f64 - 1.0)
        });
        let wrapped = truth.mapv(wrap);
        let quality = Array2::from_elem((8, n), 1.0);
        let validity = Array2::from_elem((8, n), true);
        let un = unwrap_2d(&wrapped, &quality, &validity).unwrap();
        let k = ((un[[0, 0]] - truth[[0, 0]]) / TAU).round();
        for (u, t) in un.iter().zip(truth.iter()) {
            assert!((u - t - TAU * k).abs() < 1e-9);
        }
    }

    #[test]
    fn in_range_phase_unwraps_to_itself() {
        let n = 32;
        let smooth = Array2::from_shape_fn((n, n), |(j, i)| {
            1.2 * ((i as f64) * 0.1).sin() + 0.8 * ((j as f64) * 0.13).cos() - 1.0
        });
        let quality = Array2::from_elem((n, n), 1.0);
        let validity = Array2::from_elem((n, n), true);
        let un = unwrap_2d(&smooth, &quality, &validity).unwrap();
        let k = ((un[[0, 0]] - smooth[[0, 0]]) / TAU).round();
        for (u, t) in un.iter().zip(smooth.iter()) {
            assert!((u - t - TAU * k).abs() < 1e-12);
        }
    }

    #[test]
    fn unwrap_matches_an_analytic_quadratic_surface() {
        let g = GridSpec::square(128, 1e-5).unwrap();
        let mask = PhaseMask::quadratic_2d(810e-9, 30e-3);
        let truth = mask_phase(&mask, &g).unwrap();
        // max per-pixel gradient stays under pi
        let wrapped = truth.mapv(wrap);
        let u = gaussian_field(&g, 300e-6, (0.0, 0.0)).unwrap();
        let quality = u.values.mapv(|v| v.norm());
        let validity = Array2::from_elem(g.shape(), true);
        let un = unwrap_2d(&wrapped, &quality, &validity).unwrap();
        let k = ((un[[64, 64]] - truth[[64, 64]]) / TAU).round();
        let worst = un
            .iter()
            .zip(truth.iter())
            .map(|(a, b)| (a - b - TAU * k).abs())
            .fold(0.0f64, f64::max);
        assert!(worst < 1e-9, "worst {worst}");
    }

    #[test]
    fn unwrap_output_differs_by_whole_turns_only() {
        let n = 48;
        let wrapped = Array2::from_shape_fn((n, n), |(j, i)| {
            wrap(0.37 * i as f64 + 0.22 * j as f64 + ((i * j) as f64 * 0.01).sin())
        });
        let quality = Array2::from_shape_fn((n, n), |(j, i)| ((i + 2 * j) % 17) as f64 + 1.0);
        let validity = Array2::from_shape_fn((n, n), |(j, i)| (i + j) % 13 != 0);
        let un = unwrap_2d(&wrapped, &quality, &validity).unwrap();
        for (u, w_) in un.iter().zip(wrapped.iter()) {
            let turns = (u - w_) / TAU;
            assert!((turns - turns.round()).abs() < 1e-8, "turns {turns}");
        }
    }

    #[test]
    fn plane_input_subtracts_to_zero() {
        let g = GridSpec::square(64, 1e-5).unwrap();
        let phase = Array2::from_shape_fn(g.shape(), |(j, i)| {
            1.3e4 * g.x(i) - 0.7e4 * g.y(j) + 0.4
        });
        let validity = Array2::from_elem(g.shape(), true);
        let amplitude = Array2::from_elem(g.shape(), 1.0);
        let out = subtract_reference(&phase, None, &validity, &amplitude, &g).unwrap();
        let worst = out.iter().cloned().fold(0.0f64, |a, b| a.max(b.abs()));
        assert!(worst < 1e-9, "worst {worst}");
    }

    #[test]
    fn identical_reference_subtracts_to_zero() {
        let g = GridSpec::square(64, 1e-5).unwrap();
        let phase = Array2::from_shape_fn(g.shape(), |(j, i)| {
            ((i as f64) * 0.21).sin() + ((j as f64) * 0.17).cos()
        });
        let validity = Array2::from_elem(g.shape(), true);
        let amplitude = Array2::from_elem(g.shape(), 1.0);
        let out = subtract_reference(&phase, Some(&phase), &validity, &amplitude, &g).unwrap();
        assert!(out.iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn noiseless_quadratic_1d_reconstructs_to_the_analytic_mask() {
        let g = GridSpec::square(256, 1e-5).unwrap();
        let mask = PhaseMask::quadratic_1d(810e-9, 58e-3);
        let tilt = TiltSpec { a1: 1.5e5, a2: 0.0, phi0: 0.0 };
        let i = intensity_interferogram(&g, &mask, &tilt, 350e-6);
        let r = reconstruct(&i, None, &ReconParams::default()).unwrap();
        let truth = mask_phase(&mask, &g).unwrap();
        // compare up to the plane and constant the pipeline removes
        let pts: Vec<(f64, f64, f64)> = truth
            .indexed_iter()
            .filter(|((j, i_), _)| r.validity[[*j, *i_]])
            .map(|((j, i_), &v)| (g.x(i_), g.y(j), v - r.phase[[j, i_]]))
            .collect();
        let (c0, c1, c2) = fit_plane_points(&pts).unwrap();
        let worst = pts
            .iter()
            .map(|&(x, y, d)| (d - c0 - c1 * x - c2 * y).abs())
            .fold(0.0f64, f64::max);
        assert!(worst < TAU / 200.0, "worst {worst}");
    }

    #[test]
    fn self_reference_gives_identically_zero_phase() {
        let g = GridSpec::square(256, 1e-5).unwrap();
        let tilt = TiltSpec { a1: 1.2e5, a2: 0.0, phi0: 0.0 };
        let i = intensity_interferogram(&g, &PhaseMask::flat(), &tilt, 350e-6);
        let r = reconstruct(&i, Some(&i), &ReconParams::default()).unwrap();
        for ((j, i_), &ok) in r.validity.indexed_iter() {
            if ok {
                assert!(r.phase[[j, i_]].abs() < 1e-9);
            }
        }
    }

    #[test]
    fn conjugate_sidebands_carry_identical_phase() {
        let g = GridSpec::square(256, 1e-5).unwrap();
        let tilt = TiltSpec { a1: 1.2e5, a2: 0.0, phi0: 0.3 };
        let mask = PhaseMask::quadratic_2d(810e-9, 125e-3);
        let i = intensity_interferogram(&g, &mask, &tilt, 350e-6);
        let s = forward_fft(&i).unwrap();
        let radius = 0.5 * tilt.a1;
        let plus = extract_sideband(
            &s,
            &SidebandSelection { center: (tilt.a1, 0.0), radius, taper_width: 0.1 * radius },
        )
        .unwrap();
        let minus = extract_sideband(
            &s,
            &SidebandSelection { center: (-tilt.a1, 0.0), radius, taper_width: 0.1 * radius },
        )
        .unwrap();
        // the lobes are conjugates: their product's argument is constant
        let amax = plus.values.iter().map(|v| v.norm()).fold(0.0f64, f64::max);
        let mut se = 0.0;
        let mut n = 0;
        for (a, b) in plus.values.iter().zip(minus.values.iter()) {
            if a.norm() > 0.05 * amax {
                let d = (a * b).arg();
                se += d * d;
                n += 1;
            }
        }
        let rms = (se / n as f64).sqrt();
        assert!(rms < 1e-6, "rms {rms}");
    }

    #[test]
    fn reconstruction_is_insensitive_to_the_tilt_choice() {
        let g = GridSpec::square(256, 1e-5).unwrap();
        let mask = PhaseMask::quadratic_2d(810e-9, 125e-3);
        let t1 = TiltSpec { a1: 1.2e5, a2: 0.0, phi0: 0.0 };
        let t2 = TiltSpec { a1: 1.5e5, a2: 2e4, phi0: 0.0 };
        let r1 = reconstruct(
            &intensity_interferogram(&g, &mask, &t1, 350e-6),
            None,
            &ReconParams::default(),
        )
        .unwrap();
        let r2 = reconstruct(
            &intensity_interferogram(&g, &mask, &t2, 350e-6),
            None,
            &ReconParams::default(),
        )
        .unwrap();
        let mut se = 0.0;
        let mut n = 0;
        for ((j, i), &ok) in r1.validity.indexed_iter() {
            if ok && r2.validity[[j, i]] {
                let d = r1.phase[[j, i]] - r2.phase[[j, i]];
                se += d * d;
                n += 1;
            }
        }
        let rms = (se / n as f64).sqrt();
        assert!(rms < TAU / 100.0, "rms {rms}");
    }

    #[test]
    fn linear_phase_on_the_reference_only_shifts_the_plane() {
        let g = GridSpec::square(256, 1e-5).unwrap();
        let mask = PhaseMask::quadratic_2d(810e-9, 125e-3);
        let tilt = TiltSpec { a1: 1.2e5, a2: 0.0, phi0: 0.0 };
        let u = apply_mask(&gaussian_field(&g, 350e-6, (0.0, 0.0)).unwrap(), &mask).unwrap();
        let r = gaussian_field(&g, 350e-6, (0.0, 0.0)).unwrap();
        let extra = Array2::from_shape_fn(g.shape(), |(_, i)| TAU * 2000.0 * g.x(i));
        let r_shifted = apply_phase(&r, &extra).unwrap();
        let ia = Interferogram { grid: g, counts: interfere(&u, &r, &tilt).unwrap() };
        let ib = Interferogram { grid: g, counts: interfere(&u, &r_shifted, &tilt).unwrap() };
        let ra = reconstruct(&ia, None, &ReconParams::default()).unwrap();
        let rb = reconstruct(&ib, None, &ReconParams::default()).unwrap();
        let mut se = 0.0;
        let mut n = 0;
        for ((j, i), &ok) in ra.validity.indexed_iter() {
            if ok && rb.validity[[j, i]] {
                let d = ra.phase[[j, i]] - rb.phase[[j, i]];
                se += d * d;
                n += 1;
            }
        }
        let rms = (se / n as f64).sqrt();
        assert!(rms < TAU / 100.0, "rms {rms}");
    }
}
