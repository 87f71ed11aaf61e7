//! Statistics on reconstructed maps: bootstrap uncertainty, fringe
//! visibility, and 1D profiles checked against analytic masks.

use ndarray::Array2;
use rand_distr::{Distribution, Poisson};
use std::f64::consts::{PI, TAU};
use std::ops::Range;
use thiserror::Error;

use crate::field::PhaseMask;
use crate::grid::GridSpec;
use crate::photonsim::Interferogram;
use crate::recon::{
    dc_band_intensity, extract_sideband, forward_fft, resolve_selection, single_run,
    subtract_reference, unwrap_2d, ReconError, ReconParams,
};
use crate::rng::stream_rng;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error(transparent)]
    Recon(#[from] ReconError),
    #[error("bootstrap: need at least 2 resamples, got {0}")]
    TooFewResamples(usize),
    #[error("bootstrap: {failed} of {total} resamples failed, first error: {first}")]
    TooManyFailures { failed: usize, total: usize, first: String },
    #[error("visibility: no pixel clears the intensity floor")]
    EmptyVisibility,
    #[error("profile: {0}")]
    BadProfile(String),
    #[error("profile: no valid pixels fall in the requested region")]
    EmptyProfile,
    #[error("compare_theory: profile has {0} points but the model has {1}")]
    ModelLengthMismatch(usize, usize),
}

/// Ceiling applied to reported circular standard deviations, 2 pi / sqrt 3.
pub const MAX_CIRCULAR_STD: f64 = 3.6275987284684357;

/// Running mean direction and dispersion of a stream of angles.
#[derive(Debug, Clone, Copy, Default)]
pub struct CircularAccumulator {
    sum_cos: f64,
    sum_sin: f64,
    n: usize,
}

impl CircularAccumulator {
    pub fn push(&mut self, angle: f64) {
        self.sum_cos += angle.cos();
        self.sum_sin += angle.sin();
        self.n += 1;
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Mean direction in `(-pi, pi]`; 0 when nothing was pushed.
    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        let m = self.sum_sin.atan2(self.sum_cos);
        if m == -PI {
            PI
        } else {
            m
        }
    }

    /// Resultant length R in [0, 1]; 0 when nothing was pushed.
    pub fn resultant(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        (self.sum_cos.hypot(self.sum_sin) / self.n as f64).min(1.0)
    }

    /// Circular standard deviation `sqrt(-2 ln R)`, capped so that spread-out
    /// angle sets report `MAX_CIRCULAR_STD` instead of diverging.
    pub fn std(&self) -> f64 {
        let r = self.resultant();
        if r <= 0.0 {
            return MAX_CIRCULAR_STD;
        }
        (-2.0 * r.ln()).sqrt().min(MAX_CIRCULAR_STD)
    }
}

/// Per-pixel phase statistics over bootstrap resamples.
#[derive(Debug, Clone)]
pub struct UncertaintyMaps {
    /// Unwrapped circular mean of the resampled phase maps, radians.
    pub mean_phase: Array2<f64>,
    /// Circular standard deviation per pixel, radians.
    pub std_phase: Array2<f64>,
    pub validity: Array2<bool>,
    pub n_resamples: usize,
    pub n_failures: usize,
    pub seed: u64,
}

/// Parametric bootstrap of the reconstruction. Each resample redraws every
/// pixel count from a Poisson law with the observed count as its mean, then
/// runs the full pipeline with the sideband selection pinned to the one the
/// original data chose. The reference map, when given, is reconstructed once
/// and held fixed. Resamples may fail (a draw can lose the whole signal);
/// more than 1% failures aborts.
pub fn bootstrap(
    interferogram: &Interferogram,
    reference: Option<&Interferogram>,
    params: &ReconParams,
    n_resamples: usize,
    seed: u64,
) -> Result<UncertaintyMaps, StatsError> {
    if n_resamples < 2 {
        return Err(StatsError::TooFewResamples(n_resamples));
    }
    let base = single_run(interferogram, params)?;
    let grid = interferogram.grid;
    let (ref_phase, validity) = match reference {
        None => (None, base.validity.clone()),
        Some(r) => {
            let mut ref_params = params.clone();
            ref_params.sideband = Some(base.sel);
            let ref_run = single_run(r, &ref_params)?;
            let combined = Array2::from_shape_fn(base.validity.dim(), |(j, i)| {
                base.validity[[j, i]] && ref_run.validity[[j, i]]
            });
            (Some(ref_run.unwrapped), combined)
        }
    };
    let mut fixed = params.clone();
    fixed.sideband = Some(base.sel);

    let mut acc = Array2::from_elem(interferogram.counts.dim(), CircularAccumulator::default());
    let mut n_failures = 0usize;
    let mut first_failure = String::new();
    for r in 0..n_resamples {
        let mut rng = stream_rng(seed, r as u64);
        let counts = interferogram.counts.mapv(|c| {
            if c > 0.0 {
                match Poisson::new(c) {
                    Ok(p) => p.sample(&mut rng),
                    Err(_) => c,
                }
            } else {
                0.0
            }
        });
        let resampled = Interferogram { grid, counts };
        let outcome = single_run(&resampled, &fixed).and_then(|run| {
            // base validity and amplitude keep the zero-offset pixel fixed
            // across resamples, so the spread is relative to that anchor
            subtract_reference(
                &run.unwrapped,
                ref_phase.as_ref(),
                &validity,
                &base.amplitude,
                &grid,
            )
        });
        match outcome {
            Ok(phase) => {
                for (a, &v) in acc.iter_mut().zip(phase.iter()) {
                    a.push(v);
                }
            }
            Err(e) => {
                n_failures += 1;
                if first_failure.is_empty() {
                    first_failure = e.to_string();
                }
            }
        }
    }
    if n_failures * 100 > n_resamples {
        return Err(StatsError::TooManyFailures {
            failed: n_failures,
            total: n_resamples,
            first: first_failure,
        });
    }
    let wrapped_mean = acc.mapv(|a| a.mean());
    let std_phase = acc.mapv(|a| a.std());
    let quality = acc.mapv(|a| a.resultant());
    let mean_phase = unwrap_2d(&wrapped_mean, &quality, &validity)?;
    Ok(UncertaintyMaps {
        mean_phase,
        std_phase,
        validity,
        n_resamples,
        n_failures,
        seed,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct VisibilitySummary {
    /// Median visibility over pixels above the floor.
    pub median: f64,
    /// Fraction of those pixels whose raw value exceeded 1 before clipping.
    pub clip_fraction: f64,
    pub n_pixels: usize,
}

/// Fringe visibility map `2 |p| / I_lowpass`, where `p` is the demodulated
/// sideband and `I_lowpass` keeps the same disk of frequencies around DC.
/// For two beams with amplitude ratio rho this approaches the ideal
/// `2 rho / (1 + rho^2)`. Values are clipped to [0, 1]; pixels whose local
/// intensity falls below `floor_frac` of its maximum are left at zero.
pub fn visibility(
    interferogram: &Interferogram,
    params: &ReconParams,
    floor_frac: f64,
) -> Result<(Array2<f64>, VisibilitySummary), StatsError> {
    let spectrum = forward_fft(interferogram)?;
    let sel = resolve_selection(&spectrum, params)?;
    let p = extract_sideband(&spectrum, &sel)?;
    let dc = dc_band_intensity(&spectrum, &sel);
    let dc_max = dc.iter().cloned().fold(0.0f64, f64::max);
    let floor = floor_frac * dc_max;
    let mut map = Array2::zeros(p.values.dim());
    let mut vals = Vec::new();
    let mut clipped = 0usize;
    for ((j, i), v) in p.values.indexed_iter() {
        let d = dc[[j, i]];
        if d > floor && d > 0.0 {
            let raw = 2.0 * v.norm() / d;
            if raw > 1.0 {
                clipped += 1;
            }
            let value = raw.min(1.0);
            map[[j, i]] = value;
            vals.push(value);
        }
    }
    if vals.is_empty() {
        return Err(StatsError::EmptyVisibility);
    }
    let mid = vals.len() / 2;
    let (_, &mut median, _) = vals.select_nth_unstable_by(mid, f64::total_cmp);
    Ok((
        map,
        VisibilitySummary {
            median,
            clip_fraction: clipped as f64 / vals.len() as f64,
            n_pixels: vals.len(),
        },
    ))
}

/// Which coordinate the profile runs along.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileAxis {
    X,
    Y,
}

#[derive(Debug, Clone, Copy)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
}

/// A 1D profile extracted from a map. Points with no contributing pixels
/// hold NaN and are flagged invalid.
#[derive(Debug, Clone)]
pub struct ProfileResult {
    /// Position in meters for lane averages, angle in radians for azimuthal
    /// profiles.
    pub abscissa: Vec<f64>,
    pub values: Vec<f64>,
    /// Standard error of each value: propagated from the supplied
    /// uncertainty map when given, otherwise spread / sqrt(n).
    pub errors: Vec<f64>,
    /// Dispersion of the contributing pixels around each value.
    pub spread: Vec<f64>,
    /// Lane averages: every pixel of the point was valid. Azimuthal
    /// profiles: the bin is non-empty.
    pub valid: Vec<bool>,
    pub n_pixels: Vec<usize>,
    pub fit: Option<LineFit>,
}

fn line_fit(pts: &[(f64, f64)]) -> Option<LineFit> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let slope = sxy / sxx;
    Some(LineFit { slope, intercept: my - slope * mx })
}

/// Average a band of lanes into a profile along the chosen axis. With
/// `ProfileAxis::Y` the lanes are column indices and the profile runs down
/// the rows; with `ProfileAxis::X` the lanes are row indices and the profile
/// runs across the columns. Invalid pixels are skipped; a point keeps its
/// `valid` flag only when no pixel was skipped.
pub fn column_average(
    phase: &Array2<f64>,
    std_map: Option<&Array2<f64>>,
    validity: Option<&Array2<bool>>,
    lanes: Range<usize>,
    axis: ProfileAxis,
    grid: &GridSpec,
) -> Result<ProfileResult, StatsError> {
    let dim = phase.dim();
    if dim != grid.shape() {
        return Err(StatsError::BadProfile(format!(
            "map is {}x{} but the grid is {}x{}",
            dim.1, dim.0, grid.width, grid.height
        )));
    }
    if let Some(s) = std_map {
        if s.dim() != dim {
            return Err(StatsError::BadProfile("uncertainty map shape differs".into()));
        }
    }
    if let Some(v) = validity {
        if v.dim() != dim {
            return Err(StatsError::BadProfile("validity shape differs".into()));
        }
    }
    let (n_lanes_max, n_points) = match axis {
        ProfileAxis::Y => (grid.width, grid.height),
        ProfileAxis::X => (grid.height, grid.width),
    };
    if lanes.is_empty() || lanes.end > n_lanes_max {
        return Err(StatsError::BadProfile(format!(
            "lane range {}..{} out of 0..{}",
            lanes.start, lanes.end, n_lanes_max
        )));
    }
    let lane_count = lanes.len();

    let mut out = ProfileResult {
        abscissa: Vec::with_capacity(n_points),
        values: Vec::with_capacity(n_points),
        errors: Vec::with_capacity(n_points),
        spread: Vec::with_capacity(n_points),
        valid: Vec::with_capacity(n_points),
        n_pixels: Vec::with_capacity(n_points),
        fit: None,
    };
    let mut any = false;
    for t in 0..n_points {
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let mut var_sum = 0.0;
        let mut n = 0usize;
        for lane in lanes.clone() {
            let (j, i) = match axis {
                ProfileAxis::Y => (t, lane),
                ProfileAxis::X => (lane, t),
            };
            if validity.map_or(true, |v| v[[j, i]]) {
                let ph = phase[[j, i]];
                sum += ph;
                sum_sq += ph * ph;
                if let Some(s) = std_map {
                    var_sum += s[[j, i]] * s[[j, i]];
                }
                n += 1;
            }
        }
        out.abscissa.push(match axis {
            ProfileAxis::Y => grid.y(t),
            ProfileAxis::X => grid.x(t),
        });
        out.n_pixels.push(n);
        out.valid.push(n == lane_count);
        if n == 0 {
            out.values.push(f64::NAN);
            out.errors.push(f64::NAN);
            out.spread.push(f64::NAN);
            continue;
        }
        any = true;
        let nf = n as f64;
        let mean = sum / nf;
        out.values.push(mean);
        let var = (sum_sq / nf - mean * mean).max(0.0);
        let spread = if n > 1 { (var * nf / (nf - 1.0)).sqrt() } else { 0.0 };
        out.spread.push(spread);
        out.errors.push(if std_map.is_some() {
            var_sum.sqrt() / nf
        } else {
            spread / nf.sqrt()
        });
    }
    if !any {
        return Err(StatsError::EmptyProfile);
    }
    Ok(out)
}

/// Bin an annulus of the map by polar angle around `center` (fractional
/// column/row indices) and take circular means per bin. Each abscissa is the
/// circular mean of its pixels' angles rather than the nominal bin center,
/// which keeps the profile of an exact spiral on the identity line. The bin
/// sequence is unwrapped by whole turns and fitted with a line, so `fit`
/// reports radians of phase per radian of azimuth: the winding charge.
pub fn azimuthal_profile(
    phase: &Array2<f64>,
    validity: Option<&Array2<bool>>,
    center: (f64, f64),
    r_inner: f64,
    r_outer: f64,
    n_bins: usize,
) -> Result<ProfileResult, StatsError> {
    if n_bins < 8 {
        return Err(StatsError::BadProfile(format!(
            "need at least 8 azimuthal bins, got {n_bins}"
        )));
    }
    if !(r_inner >= 0.0) || !(r_outer > r_inner) {
        return Err(StatsError::BadProfile(format!(
            "bad annulus radii {r_inner}..{r_outer}"
        )));
    }
    if let Some(v) = validity {
        if v.dim() != phase.dim() {
            return Err(StatsError::BadProfile("validity shape differs".into()));
        }
    }
    let mut angle_acc = vec![CircularAccumulator::default(); n_bins];
    let mut value_acc = vec![CircularAccumulator::default(); n_bins];
    for ((j, i), &ph) in phase.indexed_iter() {
        if !validity.map_or(true, |v| v[[j, i]]) {
            continue;
        }
        let dx = i as f64 - center.0;
        let dy = j as f64 - center.1;
        let r = dx.hypot(dy);
        if r < r_inner || r > r_outer {
            continue;
        }
        let theta = dy.atan2(dx);
        let b = (((theta + PI) / TAU) * n_bins as f64).floor() as usize;
        let b = b.min(n_bins - 1);
        angle_acc[b].push(theta);
        value_acc[b].push(ph);
    }

    let mut out = ProfileResult {
        abscissa: Vec::with_capacity(n_bins),
        values: Vec::with_capacity(n_bins),
        errors: Vec::with_capacity(n_bins),
        spread: Vec::with_capacity(n_bins),
        valid: Vec::with_capacity(n_bins),
        n_pixels: Vec::with_capacity(n_bins),
        fit: None,
    };
    for b in 0..n_bins {
        let n = value_acc[b].len();
        out.n_pixels.push(n);
        out.valid.push(n > 0);
        if n == 0 {
            out.abscissa.push(-PI + TAU * (b as f64 + 0.5) / n_bins as f64);
            out.values.push(f64::NAN);
            out.errors.push(f64::NAN);
            out.spread.push(f64::NAN);
            continue;
        }
        out.abscissa.push(angle_acc[b].mean());
        out.values.push(value_acc[b].mean());
        let spread = value_acc[b].std();
        out.spread.push(spread);
        out.errors.push(spread / (n as f64).sqrt());
    }
    if !out.valid.iter().any(|&v| v) {
        return Err(StatsError::EmptyProfile);
    }
    // unwrap the circular means into one continuous sequence
    let mut prev: Option<f64> = None;
    for b in 0..n_bins {
        if !out.valid[b] {
            continue;
        }
        if let Some(p) = prev {
            out.values[b] += TAU * ((p - out.values[b]) / TAU).round();
        }
        prev = Some(out.values[b]);
    }
    let pts: Vec<(f64, f64)> = (0..n_bins)
        .filter(|&b| out.valid[b])
        .map(|b| (out.abscissa[b], out.values[b]))
        .collect();
    out.fit = line_fit(&pts);
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
pub struct TheoryComparison {
    /// RMS residual after removing the best constant offset, radians.
    pub rms: f64,
    pub max_abs: f64,
    /// The removed offset, profile minus model.
    pub offset: f64,
    pub n_points: usize,
}

/// Residuals of a profile against a model evaluated at the same points. The
/// reconstruction only ever fixes phase up to a constant, so the mean
/// difference is removed before measuring.
pub fn compare_theory(
    profile: &ProfileResult,
    model: &[f64],
) -> Result<TheoryComparison, StatsError> {
    if model.len() != profile.values.len() {
        return Err(StatsError::ModelLengthMismatch(profile.values.len(), model.len()));
    }
    let diffs: Vec<f64> = profile
        .values
        .iter()
        .zip(model)
        .zip(&profile.valid)
        .filter(|(_, &ok)| ok)
        .map(|((&v, &m), _)| v - m)
        .collect();
    if diffs.is_empty() {
        return Err(StatsError::EmptyProfile);
    }
    let n = diffs.len() as f64;
    let offset = diffs.iter().sum::<f64>() / n;
    let mut sq = 0.0;
    let mut max_abs = 0.0f64;
    for d in &diffs {
        let r = d - offset;
        sq += r * r;
        max_abs = max_abs.max(r.abs());
    }
    Ok(TheoryComparison {
        rms: (sq / n).sqrt(),
        max_abs,
        offset,
        n_points: diffs.len(),
    })
}

/// Evaluate a mask's analytic phase along one axis, for `compare_theory`.
/// Coordinates are meters; the other coordinate is held at zero.
pub fn mask_profile(mask: &PhaseMask, abscissa: &[f64], axis: ProfileAxis) -> Vec<f64> {
    abscissa
        .iter()
        .map(|&c| match axis {
            ProfileAxis::X => mask.phase_at(c, 0.0),
            ProfileAxis::Y => mask.phase_at(0.0, c),
        })
        .collect()
}
