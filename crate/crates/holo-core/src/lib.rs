//! Simulator and reconstruction toolkit for off-axis holography of
//! photon-counting beams.
//!
//! The pipeline runs in three stages: `field` builds complex beam amplitudes
//! and their interference pattern, `photonsim` turns the pattern into a finite
//! stream of detection events (optionally rendered as intensifier flashes that
//! `detect` turns back into sub-pixel positions), and `recon` recovers phase
//! and amplitude from the accumulated count histogram by Fourier sideband
//! filtering. `stats` adds bootstrap uncertainty maps and profile analyses,
//! `io` defines the on-disk formats, and `sim` wires a key=value config into
//! a full simulation run.

pub use ndarray;
pub use num_complex;

pub mod detect;
pub mod fft2;
pub mod field;
pub mod grid;
pub mod io;
pub mod photonsim;
pub mod recon;
pub mod rng;
pub mod sim;
pub mod stats;

pub use field::{ComplexField, FieldError, MaskKind, PhaseMask, TiltSpec};
pub use grid::{GridError, GridSpec};
pub use io::{EventRecord, IoError, MapData, MapFile};
pub use photonsim::{EventKind, Interferogram, NoiseSpec, PhotonEvent};
pub use recon::{ReconError, ReconParams, ReconstructionResult, SidebandSelection, SpectrumMap};
pub use sim::{ConfigError, SimConfig, SimError, SimOutput};
pub use stats::{ProfileResult, StatsError, UncertaintyMaps};
