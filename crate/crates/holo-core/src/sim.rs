//! End-to-end synthesis driven by a `key=value` config: build the masked
//! beam and its reference, interfere them, draw photon events, add detector
//! noise, and histogram the result.

use ndarray::Array2;
use thiserror::Error;

use crate::field::{
    apply_mask, gaussian_field, interfere, reference_from_filter, FieldError, MaskKind, PhaseMask,
    TiltSpec,
};
use crate::grid::{GridError, GridSpec};
use crate::photonsim::{
    add_noise, histogram_events, sample_events, AccidentalDistribution, Interferogram,
    NoiseSpec, PhotonError, PhotonEvent,
};
use crate::rng::derive;

pub const VALID_KEYS: [&str; 17] = [
    "beam.waist_um",
    "beam.wavelength_nm",
    "grid.pitch_um",
    "grid.size",
    "mask.charge",
    "mask.focal_mm",
    "mask.kind",
    "noise.accidental_hz",
    "noise.accidental_shape",
    "noise.dark_hz",
    "noise.signal_hz",
    "reference.mode",
    "reference.pinhole_offset",
    "reference.pinhole_radius",
    "tilt.a1",
    "tilt.a2",
    "tilt.phi0",
];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config line {line}: expected key=value, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("config line {line}: unknown key {key:?}; valid keys: {}", VALID_KEYS.join(", "))]
    UnknownKey { line: usize, key: String },
    #[error("config line {line}: bad value {value:?} for {key}: {reason}")]
    BadValue { line: usize, key: String, value: String, reason: String },
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Photon(#[from] PhotonError),
    #[error("simulate: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReferenceMode {
    /// Ideal flat-phase Gaussian, same waist as the unknown beam.
    Analytic,
    /// The unknown beam itself, low-passed through a Fourier-plane pinhole.
    Pinhole,
}

/// Everything `simulate` needs, one field per config key.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub mask_kind: MaskKind,
    pub focal_mm: f64,
    pub charge: i32,
    pub grid_size: usize,
    pub pitch_um: f64,
    /// Reference tilt in radians per meter.
    pub a1: f64,
    pub a2: f64,
    /// Global reference phase in radians.
    pub phi0: f64,
    pub dark_hz: f64,
    pub accidental_hz: f64,
    /// Signal detection rate; with the requested event count this sets the
    /// exposure time and through it the noise totals.
    pub signal_hz: f64,
    pub accidental_shape: AccidentalDistribution,
    pub waist_um: f64,
    pub wavelength_nm: f64,
    pub reference_mode: ReferenceMode,
    /// Pinhole radius and offset in cycles per meter.
    pub pinhole_radius: f64,
    pub pinhole_offset: (f64, f64),
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            mask_kind: MaskKind::Quadratic2D,
            focal_mm: 125.0,
            charge: 1,
            grid_size: 512,
            pitch_um: 10.0,
            a1: 1.2e5,
            a2: 0.0,
            phi0: 0.0,
            dark_hz: 25.0,
            accidental_hz: 3.0,
            signal_hz: 400.0,
            accidental_shape: AccidentalDistribution::SignalShaped,
            waist_um: 450.0,
            wavelength_nm: 810.0,
            reference_mode: ReferenceMode::Analytic,
            pinhole_radius: 2000.0,
            pinhole_offset: (0.0, 0.0),
        }
    }
}

impl SimConfig {
    pub fn grid(&self) -> Result<GridSpec, GridError> {
        GridSpec::square(self.grid_size, self.pitch_um * 1e-6)
    }

    pub fn mask(&self) -> PhaseMask {
        let wavelength = self.wavelength_nm * 1e-9;
        let focal = self.focal_mm * 1e-3;
        match self.mask_kind {
            MaskKind::Quadratic1D => PhaseMask::quadratic_1d(wavelength, focal),
            MaskKind::Quadratic2D => PhaseMask::quadratic_2d(wavelength, focal),
            MaskKind::Spiral => PhaseMask::spiral(self.charge),
            MaskKind::Flat => PhaseMask::flat(),
        }
    }

    pub fn tilt(&self) -> TiltSpec {
        TiltSpec { a1: self.a1, a2: self.a2, phi0: self.phi0 }
    }

    pub fn noise(&self, exposure: f64) -> NoiseSpec {
        NoiseSpec {
            dark_rate: self.dark_hz,
            accidental_rate: self.accidental_hz,
            signal_rate: self.signal_hz,
            exposure,
            accidental_distribution: self.accidental_shape,
        }
    }

    /// The effective settings as config text, parseable back into an equal
    /// config. Keys come out in the `VALID_KEYS` order.
    pub fn render(&self) -> String {
        let mask_kind = match self.mask_kind {
            MaskKind::Quadratic1D => "quadratic1d",
            MaskKind::Quadratic2D => "quadratic2d",
            MaskKind::Spiral => "spiral",
            MaskKind::Flat => "flat",
        };
        let shape = match self.accidental_shape {
            AccidentalDistribution::Uniform => "uniform",
            AccidentalDistribution::SignalShaped => "signal",
        };
        let mode = match self.reference_mode {
            ReferenceMode::Analytic => "analytic",
            ReferenceMode::Pinhole => "pinhole",
        };
        format!(
            "beam.waist_um={}\nbeam.wavelength_nm={}\ngrid.pitch_um={}\ngrid.size={}\n\
             mask.charge={}\nmask.focal_mm={}\nmask.kind={}\nnoise.accidental_hz={}\n\
             noise.accidental_shape={}\nnoise.dark_hz={}\nnoise.signal_hz={}\n\
             reference.mode={}\nreference.pinhole_offset={},{}\nreference.pinhole_radius={}\n\
             tilt.a1={}\ntilt.a2={}\ntilt.phi0={}\n",
            self.waist_um,
            self.wavelength_nm,
            self.pitch_um,
            self.grid_size,
            self.charge,
            self.focal_mm,
            mask_kind,
            self.accidental_hz,
            shape,
            self.dark_hz,
            self.signal_hz,
            mode,
            self.pinhole_offset.0,
            self.pinhole_offset.1,
            self.pinhole_radius,
            self.a1,
            self.a2,
            self.phi0,
        )
    }
}

fn parse_f64(key: &str, value: &str, line: usize) -> Result<f64, ConfigError> {
    let bad = |reason: &str| ConfigError::BadValue {
        line,
        key: key.to_string(),
        value: value.to_string(),
        reason: reason.to_string(),
    };
    let v: f64 = value.parse().map_err(|_| bad("not a number"))?;
    if !v.is_finite() {
        return Err(bad("must be finite"));
    }
    Ok(v)
}

fn parse_pair(key: &str, value: &str, line: usize) -> Result<(f64, f64), ConfigError> {
    let (a, b) = value.split_once(',').ok_or_else(|| ConfigError::BadValue {
        line,
        key: key.to_string(),
        value: value.to_string(),
        reason: "expected two comma-separated numbers".to_string(),
    })?;
    Ok((parse_f64(key, a.trim(), line)?, parse_f64(key, b.trim(), line)?))
}

fn apply_key(cfg: &mut SimConfig, key: &str, value: &str, line: usize) -> Result<(), ConfigError> {
    let bad = |reason: String| ConfigError::BadValue {
        line,
        key: key.to_string(),
        value: value.to_string(),
        reason,
    };
    match key {
        "mask.kind" => {
            cfg.mask_kind = match value {
                "quadratic1d" => MaskKind::Quadratic1D,
                "quadratic2d" => MaskKind::Quadratic2D,
                "spiral" => MaskKind::Spiral,
                "flat" => MaskKind::Flat,
                _ => {
                    return Err(bad(
                        "expected quadratic1d, quadratic2d, spiral or flat".to_string(),
                    ))
                }
            }
        }
        "mask.focal_mm" => cfg.focal_mm = parse_f64(key, value, line)?,
        "mask.charge" => {
            cfg.charge = value
                .parse()
                .map_err(|_| bad("not an integer".to_string()))?
        }
        "grid.size" => {
            cfg.grid_size = value
                .parse()
                .map_err(|_| bad("not a positive integer".to_string()))?
        }
        "grid.pitch_um" => cfg.pitch_um = parse_f64(key, value, line)?,
        "tilt.a1" => cfg.a1 = parse_f64(key, value, line)?,
        "tilt.a2" => cfg.a2 = parse_f64(key, value, line)?,
        "tilt.phi0" => cfg.phi0 = parse_f64(key, value, line)?,
        "noise.dark_hz" => cfg.dark_hz = parse_f64(key, value, line)?,
        "noise.accidental_hz" => cfg.accidental_hz = parse_f64(key, value, line)?,
        "noise.signal_hz" => cfg.signal_hz = parse_f64(key, value, line)?,
        "noise.accidental_shape" => {
            cfg.accidental_shape = match value {
                "uniform" => AccidentalDistribution::Uniform,
                "signal" => AccidentalDistribution::SignalShaped,
                _ => return Err(bad("expected uniform or signal".to_string())),
            }
        }
        "beam.waist_um" => cfg.waist_um = parse_f64(key, value, line)?,
        "beam.wavelength_nm" => cfg.wavelength_nm = parse_f64(key, value, line)?,
        "reference.mode" => {
            cfg.reference_mode = match value {
                "analytic" => ReferenceMode::Analytic,
                "pinhole" => ReferenceMode::Pinhole,
                _ => return Err(bad("expected analytic or pinhole".to_string())),
            }
        }
        "reference.pinhole_radius" => cfg.pinhole_radius = parse_f64(key, value, line)?,
        "reference.pinhole_offset" => cfg.pinhole_offset = parse_pair(key, value, line)?,
        _ => {
            return Err(ConfigError::UnknownKey { line, key: key.to_string() });
        }
    }
    Ok(())
}

/// Parse `key=value` lines over the defaults. Blank lines and `#` comments
/// (full-line or trailing) are ignored.
pub fn parse_config(text: &str) -> Result<SimConfig, ConfigError> {
    let mut cfg = SimConfig::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let stripped = raw.split('#').next().unwrap_or("").trim();
        if stripped.is_empty() {
            continue;
        }
        let (key, value) = stripped
            .split_once('=')
            .ok_or_else(|| ConfigError::Syntax { line, text: stripped.to_string() })?;
        apply_key(&mut cfg, key.trim(), value.trim(), line)?;
    }
    Ok(cfg)
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    /// Shuffled signal, dark and accidental events in arrival order.
    pub events: Vec<PhotonEvent>,
    /// Histogram of those events on the configured grid.
    pub interferogram: Interferogram,
    /// Ideal unit-sum interference intensity the signal was drawn from.
    pub intensity: Array2<f64>,
    /// Seconds of acquisition the event count corresponds to.
    pub exposure: f64,
}

/// Run the whole synthesis chain for `n_events` expected signal photons.
pub fn simulate(config: &SimConfig, n_events: f64, seed: u64) -> Result<SimOutput, SimError> {
    if !(n_events > 0.0) {
        return Err(SimError::Invalid(format!(
            "expected event count must be positive, got {n_events}"
        )));
    }
    if !(config.signal_hz > 0.0) {
        return Err(SimError::Invalid(format!(
            "noise.signal_hz must be positive to set the exposure, got {}",
            config.signal_hz
        )));
    }
    let grid = config.grid()?;
    let waist = config.waist_um * 1e-6;
    let unknown = apply_mask(&gaussian_field(&grid, waist, (0.0, 0.0))?, &config.mask())?;
    let reference = match config.reference_mode {
        ReferenceMode::Analytic => gaussian_field(&grid, waist, (0.0, 0.0))?,
        ReferenceMode::Pinhole => {
            reference_from_filter(&unknown, config.pinhole_radius, config.pinhole_offset)?
        }
    };
    let intensity = interfere(&unknown, &reference, &config.tilt())?;
    let exposure = n_events / config.signal_hz;
    let signal = sample_events(&intensity, n_events, derive(seed, 1))?;
    let events = add_noise(&signal, &config.noise(exposure), &intensity, derive(seed, 2))?;
    let (interferogram, discarded) = histogram_events(&events, &grid);
    debug_assert_eq!(discarded, 0, "synthesized events must stay on the grid");
    Ok(SimOutput { events, interferogram, intensity, exposure })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::photonsim::EventKind;

    #[test]
    fn empty_config_is_the_documented_default() {
        let cfg = parse_config("").unwrap();
        assert_eq!(cfg, SimConfig::default());
        assert_eq!(cfg.mask_kind, MaskKind::Quadratic2D);
        assert_eq!(cfg.focal_mm, 125.0);
        assert_eq!(cfg.grid_size, 512);
        assert_eq!(cfg.pitch_um, 10.0);
        assert_eq!(cfg.a1, 1.2e5);
        assert_eq!(cfg.a2, 0.0);
        assert_eq!(cfg.dark_hz, 25.0);
        assert_eq!(cfg.accidental_hz, 3.0);
        assert_eq!(cfg.signal_hz, 400.0);
        assert_eq!(cfg.waist_um, 450.0);
        assert_eq!(cfg.wavelength_nm, 810.0);
        assert_eq!(cfg.reference_mode, ReferenceMode::Analytic);
        assert_eq!(cfg.pinhole_radius, 2000.0);
    }

    #[test]
    fn every_key_is_settable() {
        let text = "\
# full override
mask.kind = spiral
mask.focal_mm = 58
mask.charge = -2
grid.size = 256        # power of two
grid.pitch_um = 5.5
tilt.a1 = 1.5e5
tilt.a2 = 2e4
tilt.phi0 = 0.25
noise.dark_hz = 11
noise.accidental_hz = 0.5
noise.signal_hz = 250
noise.accidental_shape = uniform
beam.waist_um = 300
beam.wavelength_nm = 405
reference.mode = pinhole
reference.pinhole_radius = 1500
reference.pinhole_offset = 2000, -500

";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.mask_kind, MaskKind::Spiral);
        assert_eq!(cfg.focal_mm, 58.0);
        assert_eq!(cfg.charge, -2);
        assert_eq!(cfg.grid_size, 256);
        assert_eq!(cfg.pitch_um, 5.5);
        assert_eq!(cfg.a1, 1.5e5);
        assert_eq!(cfg.a2, 2e4);
        assert_eq!(cfg.phi0, 0.25);
        assert_eq!(cfg.dark_hz, 11.0);
        assert_eq!(cfg.accidental_hz, 0.5);
        assert_eq!(cfg.signal_hz, 250.0);
        assert_eq!(cfg.accidental_shape, AccidentalDistribution::Uniform);
        assert_eq!(cfg.waist_um, 300.0);
        assert_eq!(cfg.wavelength_nm, 405.0);
        assert_eq!(cfg.reference_mode, ReferenceMode::Pinhole);
        assert_eq!(cfg.pinhole_radius, 1500.0);
        assert_eq!(cfg.pinhole_offset, (2000.0, -500.0));
    }

    #[test]
    fn rendered_config_parses_back_to_itself() {
        let mut cfg = SimConfig::default();
        cfg.mask_kind = MaskKind::Quadratic1D;
        cfg.focal_mm = 58.0;
        cfg.a1 = 1.5e5;
        cfg.pinhole_offset = (-1250.5, 3.25);
        cfg.reference_mode = ReferenceMode::Pinhole;
        cfg.accidental_shape = AccidentalDistribution::Uniform;
        assert_eq!(parse_config(&cfg.render()).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_list_the_valid_ones() {
        let err = parse_config("mask.focal = 5\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("unknown key"), "{msg}");
        assert!(msg.contains("mask.focal_mm"), "{msg}");
        assert!(msg.contains("grid.size"), "{msg}");
        assert!(msg.contains("line 1"), "{msg}");
    }

    #[test]
    fn bad_values_and_syntax_are_rejected_with_context() {
        for text in [
            "grid.size = abc\n",
            "mask.kind = cubic\n",
            "tilt.a1 = fast\n",
            "tilt.a1 = inf\n",
            "noise.accidental_shape = odd\n",
            "reference.mode = mirror\n",
            "reference.pinhole_offset = 5\n",
            "mask.charge = 1.5\n",
        ] {
            let err = parse_config(text).unwrap_err();
            assert!(
                matches!(err, ConfigError::BadValue { line: 1, .. }),
                "{text:?} gave {err}"
            );
        }
        assert!(matches!(
            parse_config("just words\n"),
            Err(ConfigError::Syntax { line: 1, .. })
        ));
        assert!(matches!(
            parse_config("\n\nkey_without_eq\n"),
            Err(ConfigError::Syntax { line: 3, .. })
        ));
    }

    fn small_config() -> SimConfig {
        let mut cfg = SimConfig::default();
        cfg.grid_size = 64;
        cfg.waist_um = 150.0;
        cfg.a1 = 12.0 * std::f64::consts::TAU / (64.0 * 10e-6);
        cfg
    }

    #[test]
    fn simulation_is_bitwise_repeatable() {
        let cfg = small_config();
        let a = simulate(&cfg, 2e4, 9).unwrap();
        let b = simulate(&cfg, 2e4, 9).unwrap();
        assert_eq!(a.events, b.events);
        assert_eq!(a.interferogram.counts, b.interferogram.counts);
        let c = simulate(&cfg, 2e4, 10).unwrap();
        assert!(a.events != c.events);
    }

    #[test]
    fn histogram_covers_every_event_and_exposure_sets_noise() {
        let cfg = small_config();
        let out = simulate(&cfg, 4000.0, 3).unwrap();
        assert_eq!(out.interferogram.total(), out.events.len() as f64);
        assert!((out.exposure - 10.0).abs() < 1e-12);
        let n_noise = out
            .events
            .iter()
            .filter(|e| e.kind != EventKind::Signal)
            .count();
        // 28 Hz of noise for 10 s
        assert!((140..=560).contains(&n_noise), "{n_noise} noise events");
        assert!(out.events.iter().any(|e| e.kind == EventKind::Dark));
        assert!(out.events.iter().any(|e| e.kind == EventKind::Accidental));
    }

    #[test]
    fn pinhole_reference_mode_runs_end_to_end() {
        let mut cfg = small_config();
        cfg.mask_kind = MaskKind::Spiral;
        cfg.charge = 1;
        cfg.reference_mode = ReferenceMode::Pinhole;
        cfg.pinhole_radius = 2000.0;
        let out = simulate(&cfg, 1e4, 21).unwrap();
        assert!(out.interferogram.total() > 9000.0);
    }

    #[test]
    fn unusable_settings_fail_at_the_right_stage() {
        let mut steep = small_config();
        steep.a1 = 1.1 * std::f64::consts::PI / 10e-6;
        assert!(matches!(simulate(&steep, 1e3, 0), Err(SimError::Field(_))));

        let mut odd_grid = small_config();
        odd_grid.grid_size = 100;
        assert!(matches!(simulate(&odd_grid, 1e3, 0), Err(SimError::Grid(_))));

        let mut no_rate = small_config();
        no_rate.signal_hz = 0.0;
        assert!(matches!(simulate(&no_rate, 1e3, 0), Err(SimError::Invalid(_))));

        assert!(simulate(&small_config(), 0.0, 0).is_err());
    }
}
