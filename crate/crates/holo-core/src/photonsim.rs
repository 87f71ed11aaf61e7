//! Photon-counting statistics: event sampling, noise injection, and a
//! parametric intensifier flash renderer.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Exp1, Poisson};
use thiserror::Error;

use crate::grid::GridSpec;
use crate::rng::stream_rng;

#[derive(Debug, Error)]
pub enum PhotonError {
    #[error("intensity must be normalized to unit sum, got {0}")]
    Unnormalized(f64),
    #[error("intensity has a negative pixel ({0})")]
    NegativeIntensity(f64),
    #[error("expected event count must be positive, got {0}")]
    BadCount(f64),
    #[error("invalid noise spec: {0}")]
    BadNoise(String),
    #[error("invalid frame spec: {0}")]
    BadFrameSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Signal,
    Dark,
    Accidental,
}

/// A detected photon position in sub-pixel units: pixel `(i, j)` covers
/// `[i, i+1) x [j, j+1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhotonEvent {
    pub x: f64,
    pub y: f64,
    pub kind: EventKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccidentalDistribution {
    Uniform,
    /// Accidentals traverse the same interferometer, so by default they
    /// follow the signal intensity.
    SignalShaped,
}

#[derive(Debug, Clone, Copy)]
pub struct NoiseSpec {
    pub dark_rate: f64,
    pub accidental_rate: f64,
    pub signal_rate: f64,
    pub exposure: f64,
    pub accidental_distribution: AccidentalDistribution,
}

impl NoiseSpec {
    fn validate(&self) -> Result<(), PhotonError> {
        if self.dark_rate < 0.0 || self.accidental_rate < 0.0 || self.signal_rate < 0.0 {
            return Err(PhotonError::BadNoise("rates must be nonnegative".into()));
        }
        if !(self.exposure > 0.0) {
            return Err(PhotonError::BadNoise(format!(
                "exposure must be positive, got {}",
                self.exposure
            )));
        }
        Ok(())
    }
}

/// 2D histogram of detection counts per pixel.
#[derive(Debug, Clone)]
pub struct Interferogram {
    pub grid: GridSpec,
    pub counts: Array2<f64>,
}

impl Interferogram {
    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }
}

/// Draw photon events from a unit-sum intensity map.
///
/// Each pixel count is Poisson with mean `n_expected * I`, expanded to events
/// with independent uniform sub-pixel jitter. The generator is re-derived per
/// pixel from `seed`, so output is bitwise reproducible regardless of
/// traversal order.
pub fn sample_events(
    intensity: &Array2<f64>,
    n_expected: f64,
    seed: u64,
) -> Result<Vec<PhotonEvent>, PhotonError> {
    if !(n_expected > 0.0) {
        return Err(PhotonError::BadCount(n_expected));
    }
    if let Some(&bad) = intensity.iter().find(|&&v| v < 0.0) {
        return Err(PhotonError::NegativeIntensity(bad));
    }
    let total: f64 = intensity.iter().sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(PhotonError::Unnormalized(total));
    }
    let (_h, w) = intensity.dim();
    let mut events = Vec::new();
    for ((j, i), &v) in intensity.indexed_iter() {
        let mean = n_expected * v;
        if mean <= 0.0 {
            continue;
        }
        let mut rng = stream_rng(seed, (j * w + i) as u64);
        let count = match Poisson::new(mean) {
            Ok(p) => p.sample(&mut rng) as usize,
            Err(_) => return Err(PhotonError::BadCount(mean)),
        };
        for _ in 0..count {
            events.push(PhotonEvent {
                x: i as f64 + rng.random::<f64>(),
                y: j as f64 + rng.random::<f64>(),
                kind: EventKind::Signal,
            });
        }
    }
    Ok(events)
}

/// Append dark and accidental events to a signal sample and shuffle the
/// combined list deterministically.
pub fn add_noise(
    events: &[PhotonEvent],
    noise: &NoiseSpec,
    intensity: &Array2<f64>,
    seed: u64,
) -> Result<Vec<PhotonEvent>, PhotonError> {
    noise.validate()?;
    let (h, w) = intensity.dim();
    let (wf, hf) = (w as f64, h as f64);
    let n_dark_mean = noise.dark_rate * noise.exposure;
    let n_acc_mean = noise.accidental_rate * noise.exposure;
    if n_dark_mean <= 0.0 && n_acc_mean <= 0.0 {
        return Ok(events.to_vec());
    }

    let mut out = events.to_vec();

    if n_dark_mean > 0.0 {
        let mut rng = stream_rng(seed, 0);
        let n = Poisson::new(n_dark_mean).unwrap().sample(&mut rng) as usize;
        for _ in 0..n {
            out.push(PhotonEvent {
                x: rng.random::<f64>() * wf,
                y: rng.random::<f64>() * hf,
                kind: EventKind::Dark,
            });
        }
    }

    if n_acc_mean > 0.0 {
        let mut rng = stream_rng(seed, 1);
        let n = Poisson::new(n_acc_mean).unwrap().sample(&mut rng) as usize;
        match noise.accidental_distribution {
            AccidentalDistribution::Uniform => {
                for _ in 0..n {
                    out.push(PhotonEvent {
                        x: rng.random::<f64>() * wf,
                        y: rng.random::<f64>() * hf,
                        kind: EventKind::Accidental,
                    });
                }
            }
            AccidentalDistribution::SignalShaped => {
                let mut cum = Vec::with_capacity(w * h);
                let mut acc = 0.0;
                for &v in intensity.iter() {
                    acc += v.max(0.0);
                    cum.push(acc);
                }
                if !(acc > 0.0) {
                    return Err(PhotonError::BadNoise(
                        "signal-shaped accidentals need a nonzero intensity".into(),
                    ));
                }
                for _ in 0..n {
                    let r = rng.random::<f64>() * acc;
                    let idx = cum.partition_point(|&c| c <= r).min(w * h - 1);
                    let (j, i) = (idx / w, idx % w);
                    out.push(PhotonEvent {
                        x: i as f64 + rng.random::<f64>(),
                        y: j as f64 + rng.random::<f64>(),
                        kind: EventKind::Accidental,
                    });
                }
            }
        }
    }

    let mut rng = stream_rng(seed, 2);
    out.shuffle(&mut rng);
    Ok(out)
}

/// Bin events into integer pixel counts. Out-of-bounds events are tallied and
/// returned rather than silently dropped.
pub fn histogram_events(events: &[PhotonEvent], grid: &GridSpec) -> (Interferogram, usize) {
    let mut counts = Array2::zeros(grid.shape());
    let mut discarded = 0usize;
    for e in events {
        let (i, j) = (e.x.floor(), e.y.floor());
        if i >= 0.0 && j >= 0.0 && (i as usize) < grid.width && (j as usize) < grid.height {
            counts[[j as usize, i as usize]] += 1.0;
        } else {
            discarded += 1;
        }
    }
    (Interferogram { grid: *grid, counts }, discarded)
}

/// Flash rendering parameters for the intensifier model.
#[derive(Debug, Clone, Copy)]
pub struct FrameSpec {
    pub width: usize,
    pub height: usize,
    /// Isotropic Gaussian spot size in pixels.
    pub psf_sigma: f64,
    /// Mean of the per-flash gain distribution.
    pub gain_mean: f64,
    /// 0 = every flash carries `gain_mean` exactly; 1 = fully exponential.
    pub gain_dispersion: f64,
}

#[derive(Debug, Clone)]
pub struct FrameStack {
    pub frames: Vec<Array2<f64>>,
    pub spec: FrameSpec,
}

fn normal_cdf(t: f64) -> f64 {
    0.5 * (1.0 + libm::erf(t / std::f64::consts::SQRT_2))
}

/// Render events as pixel-integrated Gaussian flashes, `events_per_frame` to
/// a frame. Flash amplitude is `gain_mean * (1 + dispersion * (E - 1))` with
/// `E` unit-exponential, so the mean total charge per flash is `gain_mean`.
pub fn render_frames(
    events: &[PhotonEvent],
    events_per_frame: usize,
    spec: &FrameSpec,
    seed: u64,
) -> Result<FrameStack, PhotonError> {
    if events_per_frame == 0 {
        return Err(PhotonError::BadFrameSpec("events_per_frame must be >= 1".into()));
    }
    if !(spec.psf_sigma > 0.0) {
        return Err(PhotonError::BadFrameSpec("psf_sigma must be positive".into()));
    }
    if !(spec.gain_mean > 0.0) || !(0.0..=1.0).contains(&spec.gain_dispersion) {
        return Err(PhotonError::BadFrameSpec(
            "need gain_mean > 0 and gain_dispersion in [0, 1]".into(),
        ));
    }
    let n_frames = events.len().div_ceil(events_per_frame);
    let mut frames = vec![Array2::zeros((spec.height, spec.width)); n_frames];
    let reach = (4.0 * spec.psf_sigma).ceil() as i64 + 1;
    for (idx, e) in events.iter().enumerate() {
        let mut rng = stream_rng(seed, idx as u64);
        let exp: f64 = Exp1.sample(&mut rng);
        let gain = spec.gain_mean * (1.0 + spec.gain_dispersion * (exp - 1.0));
        let frame = &mut frames[idx / events_per_frame];
        let (ci, cj) = (e.x.floor() as i64, e.y.floor() as i64);
        for j in (cj - reach).max(0)..=(cj + reach).min(spec.height as i64 - 1) {
            let wy = normal_cdf((j as f64 + 1.0 - e.y) / spec.psf_sigma)
                - normal_cdf((j as f64 - e.y) / spec.psf_sigma);
            for i in (ci - reach).max(0)..=(ci + reach).min(spec.width as i64 - 1) {
                let wx = normal_cdf((i as f64 + 1.0 - e.x) / spec.psf_sigma)
                    - normal_cdf((i as f64 - e.x) / spec.psf_sigma);
                frame[[j as usize, i as usize]] += gain * wx * wy;
            }
        }
    }
    Ok(FrameStack { frames, spec: *spec })
}
