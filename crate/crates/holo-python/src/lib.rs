//! Python bindings for the holography toolkit.
//!
//! Arrays cross the boundary as flat row-major float lists with an explicit
//! (width, height); `numpy.asarray(x.phase).reshape(x.shape)` puts them back
//! into matrix form. Input validation raises ValueError, pipeline failures
//! raise RuntimeError.

use holo_core::io::{self as diskio, MapData, MapFile};
use holo_core::ndarray::Array2;
use holo_core::recon::{reconstruct as run_reconstruction, ReconParams, SidebandSelection};
use holo_core::sim::{parse_config, simulate as run_simulation};
use holo_core::stats::{
    azimuthal_profile, bootstrap as run_bootstrap, column_average, visibility, ProfileAxis,
};
use holo_core::{
    EventKind, GridSpec, Interferogram, PhaseMask, ReconstructionResult, SimOutput,
    UncertaintyMaps,
};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn run_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn grid_spec(width: usize, height: usize, pitch_m: f64) -> PyResult<GridSpec> {
    GridSpec::new(width, height, pitch_m, (0.0, 0.0)).map_err(value_err)
}

fn to_array(data: Vec<f64>, width: usize, height: usize) -> PyResult<Array2<f64>> {
    if data.len() != width * height {
        return Err(PyValueError::new_err(format!(
            "expected {width}x{height} = {} values, got {}",
            width * height,
            data.len()
        )));
    }
    Array2::from_shape_vec((height, width), data).map_err(value_err)
}

fn to_interferogram(
    counts: Vec<f64>,
    width: usize,
    height: usize,
    pitch_m: f64,
) -> PyResult<Interferogram> {
    Ok(Interferogram {
        grid: grid_spec(width, height, pitch_m)?,
        counts: to_array(counts, width, height)?,
    })
}

fn to_validity(data: Vec<bool>, width: usize, height: usize) -> PyResult<Array2<bool>> {
    if data.len() != width * height {
        return Err(PyValueError::new_err(format!(
            "validity needs {width}x{height} = {} flags, got {}",
            width * height,
            data.len()
        )));
    }
    Array2::from_shape_vec((height, width), data).map_err(value_err)
}

#[allow(clippy::too_many_arguments)]
fn build_params(
    grid: &GridSpec,
    dc_exclusion_bins: Option<f64>,
    mask_radius_frac: f64,
    taper_frac: f64,
    amplitude_floor_frac: f64,
    sideband: Option<(f64, f64)>,
) -> ReconParams {
    let mut params = ReconParams {
        dc_exclusion: dc_exclusion_bins.map(|b| b * grid.dk_x().min(grid.dk_y())),
        mask_radius_frac,
        taper_frac,
        amplitude_floor_frac,
        sideband: None,
    };
    if let Some(center) = sideband {
        let radius = mask_radius_frac * center.0.hypot(center.1);
        params.sideband = Some(SidebandSelection {
            center,
            radius,
            taper_width: taper_frac * radius,
        });
    }
    params
}

/// One simulated run: the photon events and their count histogram.
#[pyclass(name = "Simulation")]
struct PySimulation {
    out: SimOutput,
}

#[pymethods]
impl PySimulation {
    /// Count histogram as a flat row-major list.
    #[getter]
    fn counts(&self) -> Vec<f64> {
        self.out.interferogram.counts.iter().cloned().collect()
    }

    /// (height, width), ready for `numpy.reshape`.
    #[getter]
    fn shape(&self) -> (usize, usize) {
        self.out.interferogram.counts.dim()
    }

    #[getter]
    fn width(&self) -> usize {
        self.out.interferogram.grid.width
    }

    #[getter]
    fn height(&self) -> usize {
        self.out.interferogram.grid.height
    }

    #[getter]
    fn pitch_m(&self) -> f64 {
        self.out.interferogram.grid.pitch
    }

    #[getter]
    fn exposure_s(&self) -> f64 {
        self.out.exposure
    }

    #[getter]
    fn n_events(&self) -> usize {
        self.out.events.len()
    }

    /// Detection positions in pixel units as (x, y, kind) tuples, where kind
    /// is "signal", "dark" or "accidental".
    fn events(&self) -> Vec<(f64, f64, &'static str)> {
        self.out
            .events
            .iter()
            .map(|e| {
                let kind = match e.kind {
                    EventKind::Signal => "signal",
                    EventKind::Dark => "dark",
                    EventKind::Accidental => "accidental",
                };
                (e.x, e.y, kind)
            })
            .collect()
    }

    fn __repr__(&self) -> String {
        format!(
            "Simulation({} events on {}x{}, exposure {:.3} s)",
            self.out.events.len(),
            self.out.interferogram.grid.width,
            self.out.interferogram.grid.height,
            self.out.exposure
        )
    }
}

/// Recovered phase and amplitude maps with their validity mask.
#[pyclass(name = "Reconstruction")]
struct PyReconstruction {
    result: ReconstructionResult,
}

#[pymethods]
impl PyReconstruction {
    /// Unwrapped, reference-subtracted phase in radians, flat row-major.
    #[getter]
    fn phase(&self) -> Vec<f64> {
        self.result.phase.iter().cloned().collect()
    }

    /// |p|, the demodulated cross-term modulus.
    #[getter]
    fn cross_amplitude(&self) -> Vec<f64> {
        self.result.cross_amplitude.iter().cloned().collect()
    }

    #[getter]
    fn validity(&self) -> Vec<bool> {
        self.result.validity.iter().cloned().collect()
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        self.result.phase.dim()
    }

    /// (kx, ky, radius, taper) of the spectral disk used, in rad/m.
    #[getter]
    fn sideband(&self) -> (f64, f64, f64, f64) {
        let s = &self.result.sideband;
        (s.center.0, s.center.1, s.radius, s.taper_width)
    }

    #[getter]
    fn offset_convention(&self) -> &str {
        &self.result.offset_convention
    }

    fn __repr__(&self) -> String {
        let (h, w) = self.result.phase.dim();
        let n = self.result.validity.iter().filter(|&&v| v).count();
        format!("Reconstruction({w}x{h}, {n} valid pixels)")
    }
}

/// Per-pixel bootstrap statistics of the reconstructed phase.
#[pyclass(name = "Uncertainty")]
struct PyUncertainty {
    maps: UncertaintyMaps,
}

#[pymethods]
impl PyUncertainty {
    #[getter]
    fn mean_phase(&self) -> Vec<f64> {
        self.maps.mean_phase.iter().cloned().collect()
    }

    #[getter]
    fn std_phase(&self) -> Vec<f64> {
        self.maps.std_phase.iter().cloned().collect()
    }

    #[getter]
    fn validity(&self) -> Vec<bool> {
        self.maps.validity.iter().cloned().collect()
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        self.maps.std_phase.dim()
    }

    #[getter]
    fn n_resamples(&self) -> usize {
        self.maps.n_resamples
    }

    #[getter]
    fn n_failures(&self) -> usize {
        self.maps.n_failures
    }

    fn __repr__(&self) -> String {
        let (h, w) = self.maps.std_phase.dim();
        format!(
            "Uncertainty({w}x{h}, {} resamples, {} failures)",
            self.maps.n_resamples, self.maps.n_failures
        )
    }
}

/// Run a full simulation from key=value config text; an empty string uses
/// the defaults. `events` is the expected signal photon count.
#[pyfunction]
#[pyo3(signature = (config_text = "", *, events, seed = 0))]
fn simulate(config_text: &str, events: f64, seed: u64) -> PyResult<PySimulation> {
    let config = parse_config(config_text).map_err(value_err)?;
    let out = run_simulation(&config, events, seed).map_err(run_err)?;
    Ok(PySimulation { out })
}

/// Evaluate an analytic mask phase on a square grid. `kind` is one of
/// "quadratic1d", "quadratic2d", "spiral", "flat".
#[pyfunction]
#[pyo3(signature = (kind, size, pitch_um, *, focal_mm = 125.0, charge = 1, wavelength_nm = 810.0))]
fn mask_phase(
    kind: &str,
    size: usize,
    pitch_um: f64,
    focal_mm: f64,
    charge: i32,
    wavelength_nm: f64,
) -> PyResult<(Vec<f64>, (usize, usize))> {
    let wavelength = wavelength_nm * 1e-9;
    let focal = focal_mm * 1e-3;
    let mask = match kind {
        "quadratic1d" => PhaseMask::quadratic_1d(wavelength, focal),
        "quadratic2d" => PhaseMask::quadratic_2d(wavelength, focal),
        "spiral" => PhaseMask::spiral(charge),
        "flat" => PhaseMask::flat(),
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown mask kind {other:?}; expected quadratic1d, quadratic2d, spiral or flat"
            )))
        }
    };
    let grid = GridSpec::square(size, pitch_um * 1e-6).map_err(value_err)?;
    let phase = holo_core::field::mask_phase(&mask, &grid).map_err(value_err)?;
    let dim = phase.dim();
    Ok((phase.into_iter().collect(), dim))
}

/// Recover phase and amplitude from a count histogram. A reference histogram,
/// when given, is demodulated with the same sideband and its phase
/// subtracted; otherwise a fitted plane stands in for it.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (counts, width, height, pitch_m, *, reference = None,
    dc_exclusion_bins = None, mask_radius_frac = 0.5, taper_frac = 0.1,
    amplitude_floor_frac = 0.05, sideband = None))]
fn reconstruct(
    counts: Vec<f64>,
    width: usize,
    height: usize,
    pitch_m: f64,
    reference: Option<Vec<f64>>,
    dc_exclusion_bins: Option<f64>,
    mask_radius_frac: f64,
    taper_frac: f64,
    amplitude_floor_frac: f64,
    sideband: Option<(f64, f64)>,
) -> PyResult<PyReconstruction> {
    let interferogram = to_interferogram(counts, width, height, pitch_m)?;
    let reference = reference
        .map(|r| to_interferogram(r, width, height, pitch_m))
        .transpose()?;
    let params = build_params(
        &interferogram.grid,
        dc_exclusion_bins,
        mask_radius_frac,
        taper_frac,
        amplitude_floor_frac,
        sideband,
    );
    let result =
        run_reconstruction(&interferogram, reference.as_ref(), &params).map_err(run_err)?;
    Ok(PyReconstruction { result })
}

/// Poisson-resample a count histogram and report per-pixel phase statistics.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (counts, width, height, pitch_m, *, reference = None,
    resamples = 200, seed = 0, dc_exclusion_bins = None, mask_radius_frac = 0.5,
    taper_frac = 0.1, amplitude_floor_frac = 0.05, sideband = None))]
fn bootstrap(
    counts: Vec<f64>,
    width: usize,
    height: usize,
    pitch_m: f64,
    reference: Option<Vec<f64>>,
    resamples: usize,
    seed: u64,
    dc_exclusion_bins: Option<f64>,
    mask_radius_frac: f64,
    taper_frac: f64,
    amplitude_floor_frac: f64,
    sideband: Option<(f64, f64)>,
) -> PyResult<PyUncertainty> {
    let interferogram = to_interferogram(counts, width, height, pitch_m)?;
    let reference = reference
        .map(|r| to_interferogram(r, width, height, pitch_m))
        .transpose()?;
    let params = build_params(
        &interferogram.grid,
        dc_exclusion_bins,
        mask_radius_frac,
        taper_frac,
        amplitude_floor_frac,
        sideband,
    );
    let maps = run_bootstrap(&interferogram, reference.as_ref(), &params, resamples, seed)
        .map_err(run_err)?;
    Ok(PyUncertainty { maps })
}

/// Median fringe visibility of a count histogram, with the fraction of
/// pixels clipped at 1 and the number of pixels that entered the median.
#[pyfunction]
#[pyo3(signature = (counts, width, height, pitch_m, *, floor_frac = 0.05))]
fn visibility_median(
    counts: Vec<f64>,
    width: usize,
    height: usize,
    pitch_m: f64,
    floor_frac: f64,
) -> PyResult<(f64, f64, usize)> {
    let interferogram = to_interferogram(counts, width, height, pitch_m)?;
    let (_, summary) =
        visibility(&interferogram, &ReconParams::default(), floor_frac).map_err(run_err)?;
    Ok((summary.median, summary.clip_fraction, summary.n_pixels))
}

/// Winding slope of a phase map: circular-mean azimuthal bins over an
/// annulus, fitted with a line. `center` defaults to the grid center.
#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (phase, width, height, *, validity = None, center = None,
    r_inner = 15.0, r_outer = 45.0, bins = 72))]
fn azimuthal_slope(
    phase: Vec<f64>,
    width: usize,
    height: usize,
    validity: Option<Vec<bool>>,
    center: Option<(f64, f64)>,
    r_inner: f64,
    r_outer: f64,
    bins: usize,
) -> PyResult<f64> {
    let phase = to_array(phase, width, height)?;
    let validity = validity.map(|v| to_validity(v, width, height)).transpose()?;
    let center = center.unwrap_or(((width / 2) as f64, (height / 2) as f64));
    let profile = azimuthal_profile(&phase, validity.as_ref(), center, r_inner, r_outer, bins)
        .map_err(run_err)?;
    profile
        .fit
        .map(|f| f.slope)
        .ok_or_else(|| PyRuntimeError::new_err("too few populated bins for a slope fit"))
}

/// Average a band of lanes into a 1D profile. With axis "y" the lanes are
/// column indices and the profile runs down the rows; with "x" the lanes are
/// row indices. Returns (abscissa_m, values, errors, valid).
#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (phase, width, height, pitch_m, *, std = None, validity = None,
    lanes = None, axis = "y"))]
fn column_profile(
    phase: Vec<f64>,
    width: usize,
    height: usize,
    pitch_m: f64,
    std: Option<Vec<f64>>,
    validity: Option<Vec<bool>>,
    lanes: Option<(usize, usize)>,
    axis: &str,
) -> PyResult<(Vec<f64>, Vec<f64>, Vec<f64>, Vec<bool>)> {
    let grid = grid_spec(width, height, pitch_m)?;
    let phase = to_array(phase, width, height)?;
    let std = std.map(|s| to_array(s, width, height)).transpose()?;
    let validity = validity.map(|v| to_validity(v, width, height)).transpose()?;
    let axis = match axis {
        "x" => ProfileAxis::X,
        "y" => ProfileAxis::Y,
        other => {
            return Err(PyValueError::new_err(format!(
                "axis must be \"x\" or \"y\", got {other:?}"
            )))
        }
    };
    let lane_max = match axis {
        ProfileAxis::Y => width,
        ProfileAxis::X => height,
    };
    let lanes = match lanes {
        Some((a, b)) => a..b,
        None => {
            let half = (lane_max / 2).saturating_sub(25);
            half..(lane_max / 2 + 25).min(lane_max)
        }
    };
    let profile = column_average(&phase, std.as_ref(), validity.as_ref(), lanes, axis, &grid)
        .map_err(run_err)?;
    Ok((profile.abscissa, profile.values, profile.errors, profile.valid))
}

/// Read a map file. Returns (values, (height, width), pitch_m, name, dtype).
/// Float and count maps come back as floats; complex maps return their
/// modulus with dtype "c128".
#[pyfunction]
fn read_map(path: &str) -> PyResult<(Vec<f64>, (usize, usize), f64, String, &'static str)> {
    let map = diskio::read_map(path).map_err(run_err)?;
    let (values, dim, dtype): (Vec<f64>, _, _) = match &map.data {
        MapData::F64(a) => (a.iter().cloned().collect(), a.dim(), "f64"),
        MapData::U32(a) => (a.iter().map(|&v| v as f64).collect(), a.dim(), "u32"),
        MapData::C128(a) => (a.iter().map(|v| v.norm()).collect(), a.dim(), "c128"),
    };
    Ok((values, dim, map.pitch_m, map.name.clone(), dtype))
}

/// Write a float map file compatible with the command-line tools.
#[pyfunction]
#[pyo3(signature = (path, values, width, height, pitch_m, *, name = "map"))]
fn write_map(
    path: &str,
    values: Vec<f64>,
    width: usize,
    height: usize,
    pitch_m: f64,
    name: &str,
) -> PyResult<()> {
    let data = to_array(values, width, height)?;
    let map = MapFile::new(name, pitch_m, MapData::F64(data));
    diskio::write_map(path, &map).map_err(run_err)
}

#[pymodule]
fn holo_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PySimulation>()?;
    m.add_class::<PyReconstruction>()?;
    m.add_class::<PyUncertainty>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(mask_phase, m)?)?;
    m.add_function(wrap_pyfunction!(reconstruct, m)?)?;
    m.add_function(wrap_pyfunction!(bootstrap, m)?)?;
    m.add_function(wrap_pyfunction!(visibility_median, m)?)?;
    m.add_function(wrap_pyfunction!(azimuthal_slope, m)?)?;
    m.add_function(wrap_pyfunction!(column_profile, m)?)?;
    m.add_function(wrap_pyfunction!(read_map, m)?)?;
    m.add_function(wrap_pyfunction!(write_map, m)?)?;
    Ok(())
}
