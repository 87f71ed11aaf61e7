//! Complex beam fields, analytic phase masks, and two-arm interference.

use ndarray::Array2;
use num_complex::Complex64;
use std::f64::consts::PI;
use thiserror::Error;

use crate::fft2::{fft2, fftshift};
use crate::grid::GridSpec;

/// Default optical wavelength in meters (near-infrared downconversion band).
pub const DEFAULT_WAVELENGTH: f64 = 810e-9;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("waist {waist} m undersampled by pitch {pitch} m; need waist >= 2*pitch")]
    WaistTooSmall { waist: f64, pitch: f64 },
    #[error("grid mismatch: {0}x{1} vs {2}x{3}")]
    GridMismatch(usize, usize, usize, usize),
    #[error("tilt exceeds the fringe Nyquist limit: |a|*pitch = {0:.4} must stay below pi")]
    TiltTooSteep(f64),
    #[error("invalid phase mask: {0}")]
    BadMask(String),
    #[error("pinhole radius must be positive, got {0}")]
    BadPinholeRadius(f64),
    #[error("pinhole filter blocked essentially all light (passed fraction {0:.3e})")]
    EmptyReference(f64),
    #[error("field carries no energy")]
    ZeroField,
}

/// Complex amplitude sampled on a grid, stored `[j][i]` = `[y][x]`.
#[derive(Debug, Clone)]
pub struct ComplexField {
    pub grid: GridSpec,
    pub values: Array2<Complex64>,
}

impl ComplexField {
    /// Discrete L2 norm squared, `sum |v|^2 * pitch^2`.
    pub fn norm_sq(&self) -> f64 {
        let p2 = self.grid.pitch * self.grid.pitch;
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * p2
    }

    /// Scale so `norm_sq` becomes 1.
    pub fn normalized(mut self) -> Result<Self, FieldError> {
        let n = self.norm_sq();
        if !(n > 0.0) {
            return Err(FieldError::ZeroField);
        }
        let s = 1.0 / n.sqrt();
        self.values.mapv_inplace(|v| v * s);
        Ok(self)
    }
}

/// L2-normalized Gaussian beam `exp(-((x-xc)^2+(y-yc)^2)/waist^2)` with flat
/// phase. `waist` is the 1/e amplitude radius.
pub fn gaussian_field(
    grid: &GridSpec,
    waist: f64,
    center: (f64, f64),
) -> Result<ComplexField, FieldError> {
    if !(waist > 0.0) || waist < 2.0 * grid.pitch {
        return Err(FieldError::WaistTooSmall { waist, pitch: grid.pitch });
    }
    let w2 = waist * waist;
    let values = Array2::from_shape_fn(grid.shape(), |(j, i)| {
        let dx = grid.x(i) - center.0;
        let dy = grid.y(j) - center.1;
        Complex64::new((-(dx * dx + dy * dy) / w2).exp(), 0.0)
    });
    ComplexField { grid: *grid, values }.normalized()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskKind {
    Quadratic2D,
    Quadratic1D,
    Spiral,
    Flat,
}

/// Analytic phase mask; lens-like kinds use `pi * x^2 / (lambda f)` with the
/// positive sign so retrieved maps compare directly against this formula.
#[derive(Debug, Clone, Copy)]
pub struct PhaseMask {
    pub kind: MaskKind,
    /// Meters; used by the quadratic kinds.
    pub focal_length: f64,
    /// Meters; must be positive.
    pub wavelength: f64,
    /// Topological charge of the spiral kind.
    pub charge: i32,
    /// Mask center in meters.
    pub center: (f64, f64),
}

impl PhaseMask {
    pub fn quadratic_1d(wavelength: f64, focal_length: f64) -> Self {
        PhaseMask { kind: MaskKind::Quadratic1D, focal_length, wavelength, charge: 0, center: (0.0, 0.0) }
    }

    pub fn quadratic_2d(wavelength: f64, focal_length: f64) -> Self {
        PhaseMask { kind: MaskKind::Quadratic2D, focal_length, wavelength, charge: 0, center: (0.0, 0.0) }
    }

    pub fn spiral(charge: i32) -> Self {
        PhaseMask {
            kind: MaskKind::Spiral,
            focal_length: 0.0,
            wavelength: DEFAULT_WAVELENGTH,
            charge,
            center: (0.0, 0.0),
        }
    }

    pub fn flat() -> Self {
        PhaseMask {
            kind: MaskKind::Flat,
            focal_length: 0.0,
            wavelength: DEFAULT_WAVELENGTH,
            charge: 0,
            center: (0.0, 0.0),
        }
    }

    /// Unwrapped analytic phase at a point, in radians.
    pub fn phase_at(&self, x: f64, y: f64) -> f64 {
        let x = x - self.center.0;
        let y = y - self.center.1;
        match self.kind {
            MaskKind::Quadratic1D => PI * x * x / (self.wavelength * self.focal_length),
            MaskKind::Quadratic2D => {
                PI * (x * x + y * y) / (self.wavelength * self.focal_length)
            }
            MaskKind::Spiral => f64::from(self.charge) * y.atan2(x),
            MaskKind::Flat => 0.0,
        }
    }

    fn validate(&self) -> Result<(), FieldError> {
        if !(self.wavelength > 0.0) {
            return Err(FieldError::BadMask(format!(
                "wavelength must be positive, got {}",
                self.wavelength
            )));
        }
        match self.kind {
            MaskKind::Quadratic1D | MaskKind::Quadratic2D if self.focal_length == 0.0 => Err(
                FieldError::BadMask("quadratic mask needs a nonzero focal length".into()),
            ),
            _ => Ok(()),
        }
    }
}

/// Evaluate the unwrapped analytic mask phase on a grid, in radians.
pub fn mask_phase(mask: &PhaseMask, grid: &GridSpec) -> Result<Array2<f64>, FieldError> {
    mask.validate()?;
    Ok(Array2::from_shape_fn(grid.shape(), |(j, i)| {
        mask.phase_at(grid.x(i), grid.y(j))
    }))
}

/// Multiply a field by `e^{i phase}` pointwise.
pub fn apply_phase(field: &ComplexField, phase: &Array2<f64>) -> Result<ComplexField, FieldError> {
    let (h, w) = field.values.dim();
    let (ph, pw) = phase.dim();
    if (h, w) != (ph, pw) {
        return Err(FieldError::GridMismatch(w, h, pw, ph));
    }
    let mut values = field.values.clone();
    values.zip_mut_with(phase, |v, &p| *v *= Complex64::from_polar(1.0, p));
    Ok(ComplexField { grid: field.grid, values })
}

/// Imprint an analytic mask on a field; the modulus is untouched.
pub fn apply_mask(field: &ComplexField, mask: &PhaseMask) -> Result<ComplexField, FieldError> {
    let phase = mask_phase(mask, &field.grid)?;
    apply_phase(field, &phase)
}

/// Linear phase between the two interferometer arms plus a global offset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TiltSpec {
    /// Radians per meter along x.
    pub a1: f64,
    /// Radians per meter along y.
    pub a2: f64,
    /// Radians.
    pub phi0: f64,
}

impl TiltSpec {
    pub fn validate(&self, grid: &GridSpec) -> Result<(), FieldError> {
        let worst = (self.a1.abs() * grid.pitch).max(self.a2.abs() * grid.pitch);
        if worst >= PI {
            return Err(FieldError::TiltTooSteep(worst));
        }
        Ok(())
    }
}

/// Interference intensity `|u + r e^{-i(a1 x + a2 y - phi0)}|^2` without
/// normalization.
pub fn interfere_raw(
    unknown: &ComplexField,
    reference: &ComplexField,
    tilt: &TiltSpec,
) -> Result<Array2<f64>, FieldError> {
    if unknown.grid != reference.grid {
        let (uh, uw) = unknown.values.dim();
        let (rh, rw) = reference.values.dim();
        return Err(FieldError::GridMismatch(uw, uh, rw, rh));
    }
    tilt.validate(&unknown.grid)?;
    let grid = &unknown.grid;
    let mut out = Array2::zeros(grid.shape());
    for ((j, i), v) in out.indexed_iter_mut() {
        let ph = -(tilt.a1 * grid.x(i) + tilt.a2 * grid.y(j) - tilt.phi0);
        let r = reference.values[[j, i]] * Complex64::from_polar(1.0, ph);
        *v = (unknown.values[[j, i]] + r).norm_sqr();
    }
    Ok(out)
}

/// Interference intensity normalized to unit sum, ready for photon sampling.
pub fn interfere(
    unknown: &ComplexField,
    reference: &ComplexField,
    tilt: &TiltSpec,
) -> Result<Array2<f64>, FieldError> {
    let mut out = interfere_raw(unknown, reference, tilt)?;
    let total: f64 = out.iter().sum();
    if !(total > 0.0) {
        return Err(FieldError::ZeroField);
    }
    out.mapv_inplace(|v| v / total);
    Ok(out)
}

/// Low-pass a field through a circular pinhole in the Fourier plane.
///
/// `pinhole_radius` and `pinhole_offset = (fx, fy)` are spatial frequencies in
/// cycles per meter. The passed band is the hard-edged disk around the offset;
/// the result is renormalized. Fails when the disk passes essentially no
/// energy, which is what an on-axis pinhole does to a pure vortex beam.
pub fn reference_from_filter(
    unknown: &ComplexField,
    pinhole_radius: f64,
    pinhole_offset: (f64, f64),
) -> Result<ComplexField, FieldError> {
    if !(pinhole_radius > 0.0) {
        return Err(FieldError::BadPinholeRadius(pinhole_radius));
    }
    let grid = &unknown.grid;
    let mut spec = fftshift(&fft2(&unknown.values, false));
    let total_energy: f64 = spec.iter().map(|v| v.norm_sqr()).sum();
    if !(total_energy > 0.0) {
        return Err(FieldError::ZeroField);
    }
    let tau = std::f64::consts::TAU;
    let mut passed = 0.0;
    for ((j, i), v) in spec.indexed_iter_mut() {
        let fx = grid.kx(i) / tau - pinhole_offset.0;
        let fy = grid.ky(j) / tau - pinhole_offset.1;
        if fx.hypot(fy) <= pinhole_radius {
            passed += v.norm_sqr();
        } else {
            *v = Complex64::new(0.0, 0.0);
        }
    }
    let fraction = passed / total_energy;
    // any usable pinhole passes percent-level energy; a vortex null leaks
    // only the odd unpaired sample, orders of magnitude below this
    if fraction < 1e-6 {
        return Err(FieldError::EmptyReference(fraction));
    }
    // even-size fftshift is self-inverse
    let values = fft2(&fftshift(&spec), true);
    ComplexField { grid: *grid, values }.normalized()
}
