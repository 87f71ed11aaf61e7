//! `holo`: simulate photon-counting interferograms, reconstruct phase maps,
//! and analyze the results from the command line.
//!
//! Exit codes: 0 success, 1 usage or config errors, 2 pipeline errors
//! (physics or numerical validation), 3 file I/O and format errors.

use clap::{Args, Parser, Subcommand, ValueEnum};
use holo_core::io::{self as diskio, MapData, MapFile};
use holo_core::ndarray::Array2;
use holo_core::recon::{reconstruct, ReconParams, SidebandSelection};
use holo_core::sim::{parse_config, simulate, ConfigError, SimConfig, SimError};
use holo_core::stats::{
    azimuthal_profile, bootstrap, column_average, visibility, ProfileAxis, ProfileResult,
    StatsError,
};
use holo_core::{GridSpec, IoError, ReconError};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "holo",
    version,
    about = "Photon-counting holography: simulate, reconstruct, analyze"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Synthesize photon events and a count histogram from a config
    Simulate(SimulateArgs),
    /// Recover phase and amplitude maps from a count histogram
    Reconstruct(ReconstructArgs),
    /// Profiles, visibility and bootstrap uncertainty from maps
    Analyze(AnalyzeArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// key=value settings file; defaults apply when omitted
    #[arg(long)]
    config: Option<PathBuf>,
    /// Expected number of signal photons
    #[arg(long)]
    events: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the event list here
    #[arg(long)]
    out_events: Option<PathBuf>,
    /// Write the count histogram here
    #[arg(long)]
    out_map: Option<PathBuf>,
    /// Write a JSON run manifest here
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct ReconstructArgs {
    /// Input count map
    #[arg(long = "in")]
    input: PathBuf,
    /// Reference count map; its phase is subtracted instead of a fitted plane
    #[arg(long = "ref")]
    reference: Option<PathBuf>,
    /// Output path prefix for .phase.map, .amplitude.map, .validity.map
    /// and .summary.json
    #[arg(long)]
    out: PathBuf,
    /// Sideband search exclusion radius around DC, in spectral bins
    #[arg(long)]
    dc_exclusion_bins: Option<f64>,
    /// Selection radius as a fraction of the sideband-to-DC distance
    #[arg(long, default_value_t = 0.5)]
    mask_radius_frac: f64,
    /// Raised-cosine taper as a fraction of the selection radius
    #[arg(long, default_value_t = 0.1)]
    taper_frac: f64,
    /// Validity floor as a fraction of the peak cross amplitude
    #[arg(long, default_value_t = 0.05)]
    amplitude_floor_frac: f64,
    /// Pin the sideband center to "kx,ky" in rad/m instead of searching
    #[arg(long)]
    sideband: Option<String>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AnalyzeMode {
    /// Average a band of lanes in a phase map into a 1D profile
    Column,
    /// Bin a phase-map annulus by azimuth and fit the winding slope
    Azimuthal,
    /// Fringe visibility of a count map
    Visibility,
    /// Bootstrap per-pixel phase uncertainty of a count map
    Bootstrap,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum AxisArg {
    X,
    Y,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long, value_enum)]
    mode: AnalyzeMode,
    /// Phase map for column/azimuthal, count map for visibility/bootstrap
    #[arg(long = "in")]
    input: PathBuf,
    /// Validity map (u32, nonzero = valid) aligned with the input
    #[arg(long)]
    validity: Option<PathBuf>,
    /// Per-pixel uncertainty map for profile error propagation
    #[arg(long)]
    std: Option<PathBuf>,
    /// Reference count map for bootstrap
    #[arg(long = "ref")]
    reference: Option<PathBuf>,
    /// CSV destination for profiles; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
    /// Lane index range "start..end"; default the middle 50 lanes
    #[arg(long)]
    lanes: Option<String>,
    /// Profile direction for column mode
    #[arg(long, value_enum, default_value_t = AxisArg::Y)]
    axis: AxisArg,
    /// Annulus center in pixels "cx,cy"; default the grid center
    #[arg(long)]
    center: Option<String>,
    #[arg(long, default_value_t = 15.0)]
    r_inner: f64,
    #[arg(long, default_value_t = 45.0)]
    r_outer: f64,
    #[arg(long, default_value_t = 72)]
    bins: usize,
    #[arg(long, default_value_t = 200)]
    resamples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write bootstrap .mean.map and .std.map with this prefix
    #[arg(long)]
    out_prefix: Option<PathBuf>,
    /// Intensity floor fraction for visibility
    #[arg(long, default_value_t = 0.05)]
    floor: f64,
}

enum CliError {
    Usage(String),
    Config(ConfigError),
    Pipeline(String),
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Pipeline(_) => 2,
            CliError::Io(_) => 3,
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Usage(m) => m.clone(),
            CliError::Config(e) => e.to_string(),
            CliError::Pipeline(m) => m.clone(),
            CliError::Io(m) => m.clone(),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        CliError::Pipeline(e.to_string())
    }
}

impl From<ReconError> for CliError {
    fn from(e: ReconError) -> Self {
        CliError::Pipeline(e.to_string())
    }
}

impl From<StatsError> for CliError {
    fn from(e: StatsError) -> Self {
        CliError::Pipeline(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    let result = match cli.cmd {
        Cmd::Simulate(args) => cmd_simulate(args),
        Cmd::Reconstruct(args) => cmd_reconstruct(args),
        Cmd::Analyze(args) => cmd_analyze(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn basename(path: &Path) -> String {
    path.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn suffixed(prefix: &Path, suffix: &str) -> PathBuf {
    PathBuf::from(format!("{}.{suffix}", prefix.display()))
}

fn parse_f64_pair(flag: &str, text: &str) -> Result<(f64, f64), CliError> {
    let err = || CliError::Usage(format!("--{flag} expects \"a,b\", got {text:?}"));
    let (a, b) = text.split_once(',').ok_or_else(err)?;
    Ok((
        a.trim().parse().map_err(|_| err())?,
        b.trim().parse().map_err(|_| err())?,
    ))
}

fn parse_lanes(text: &str, max: usize) -> Result<Range<usize>, CliError> {
    let err = || CliError::Usage(format!("--lanes expects \"start..end\", got {text:?}"));
    let (a, b) = text.split_once("..").ok_or_else(err)?;
    let start: usize = a.trim().parse().map_err(|_| err())?;
    let end: usize = b.trim().parse().map_err(|_| err())?;
    if start >= end || end > max {
        return Err(CliError::Usage(format!(
            "--lanes {start}..{end} must be non-empty and within 0..{max}"
        )));
    }
    Ok(start..end)
}

fn middle_lanes(max: usize) -> Range<usize> {
    let half = (max / 2).saturating_sub(25);
    half..(max / 2 + 25).min(max)
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let config = match &args.config {
        None => SimConfig::default(),
        Some(path) => parse_config(&read_text(path)?)?,
    };
    let out = simulate(&config, args.events, args.seed)?;
    let grid = out.interferogram.grid;
    if let Some(path) = &args.out_events {
        diskio::write_events(path, &out.events, grid.width, grid.height)?;
    }
    if let Some(path) = &args.out_map {
        let map = MapFile::new(
            "counts",
            grid.pitch,
            MapData::F64(out.interferogram.counts.clone()),
        );
        diskio::write_map(path, &map)?;
    }
    if let Some(path) = &args.manifest {
        let rendered = config.render();
        let digest = Sha256::digest(rendered.as_bytes());
        let mut sha = String::new();
        for b in digest {
            let _ = write!(sha, "{b:02x}");
        }
        let manifest = serde_json::json!({
            "command": "simulate",
            "seed": args.seed,
            "events_requested": args.events,
            "events_emitted": out.events.len(),
            "exposure_s": out.exposure,
            "grid": { "size": grid.width, "pitch_m": grid.pitch },
            "config_sha256": sha,
            "config": rendered,
            "outputs": {
                "events": args.out_events.as_deref().map(basename),
                "map": args.out_map.as_deref().map(basename),
            },
        });
        let mut text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| CliError::Io(e.to_string()))?;
        text.push('\n');
        write_text(path, &text)?;
    }
    println!(
        "simulated {} events on a {}x{} grid (exposure {:.3} s)",
        out.events.len(),
        grid.width,
        grid.height,
        out.exposure
    );
    Ok(())
}

fn map_grid(map: &MapFile) -> Result<GridSpec, CliError> {
    GridSpec::new(map.width(), map.height(), map.pitch_m, (0.0, 0.0))
        .map_err(|e| CliError::Pipeline(e.to_string()))
}

fn read_f64_map(path: &Path) -> Result<(MapFile, Array2<f64>), CliError> {
    let map = diskio::read_map(path)?;
    match &map.data {
        MapData::F64(a) => {
            let a = a.clone();
            Ok((map, a))
        }
        other => Err(CliError::Io(format!(
            "{}: expected an f64 map, found dtype {}",
            path.display(),
            other.dtype_code()
        ))),
    }
}

fn read_validity(path: &Path) -> Result<Array2<bool>, CliError> {
    let map = diskio::read_map(path)?;
    match &map.data {
        MapData::U32(a) => Ok(a.mapv(|v| v != 0)),
        other => Err(CliError::Io(format!(
            "{}: expected a u32 validity map, found dtype {}",
            path.display(),
            other.dtype_code()
        ))),
    }
}

fn build_recon_params(
    args: &ReconstructArgs,
    grid: &GridSpec,
) -> Result<ReconParams, CliError> {
    let mut params = ReconParams {
        dc_exclusion: args
            .dc_exclusion_bins
            .map(|b| b * grid.dk_x().min(grid.dk_y())),
        mask_radius_frac: args.mask_radius_frac,
        taper_frac: args.taper_frac,
        amplitude_floor_frac: args.amplitude_floor_frac,
        sideband: None,
    };
    if let Some(text) = &args.sideband {
        let center = parse_f64_pair("sideband", text)?;
        let radius = args.mask_radius_frac * center.0.hypot(center.1);
        params.sideband = Some(SidebandSelection {
            center,
            radius,
            taper_width: args.taper_frac * radius,
        });
    }
    Ok(params)
}

fn cmd_reconstruct(args: ReconstructArgs) -> Result<(), CliError> {
    let interferogram = diskio::read_map(&args.input)?.to_interferogram()?;
    let reference = match &args.reference {
        Some(path) => Some(diskio::read_map(path)?.to_interferogram()?),
        None => None,
    };
    let params = build_recon_params(&args, &interferogram.grid)?;
    let result = reconstruct(&interferogram, reference.as_ref(), &params)?;

    let vis_params = ReconParams { sideband: Some(result.sideband), ..params };
    let (_, vis) = visibility(&interferogram, &vis_params, args.amplitude_floor_frac)?;

    let grid = interferogram.grid;
    diskio::write_map(
        suffixed(&args.out, "phase.map"),
        &MapFile::new("phase", grid.pitch, MapData::F64(result.phase.clone())),
    )?;
    diskio::write_map(
        suffixed(&args.out, "amplitude.map"),
        &MapFile::new(
            "amplitude",
            grid.pitch,
            MapData::F64(result.cross_amplitude.clone()),
        ),
    )?;
    diskio::write_map(
        suffixed(&args.out, "validity.map"),
        &MapFile::new(
            "validity",
            grid.pitch,
            MapData::U32(result.validity.mapv(u32::from)),
        ),
    )?;
    let n_valid = result.validity.iter().filter(|&&v| v).count();
    let summary = serde_json::json!({
        "command": "reconstruct",
        "input": basename(&args.input),
        "reference": args.reference.as_deref().map(basename),
        "sideband": {
            "kx_rad_per_m": result.sideband.center.0,
            "ky_rad_per_m": result.sideband.center.1,
            "radius_rad_per_m": result.sideband.radius,
            "taper_rad_per_m": result.sideband.taper_width,
        },
        "n_valid": n_valid,
        "n_pixels": grid.width * grid.height,
        "offset_convention": result.offset_convention,
        "visibility": {
            "median": vis.median,
            "clip_fraction": vis.clip_fraction,
            "n_pixels": vis.n_pixels,
        },
    });
    let mut text =
        serde_json::to_string_pretty(&summary).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    write_text(&suffixed(&args.out, "summary.json"), &text)?;
    println!(
        "sideband at ({:.1}, {:.1}) rad/m, {}/{} pixels valid, visibility median {:.4}",
        result.sideband.center.0,
        result.sideband.center.1,
        n_valid,
        grid.width * grid.height,
        vis.median
    );
    println!(
        "wrote {}.{{phase,amplitude,validity}}.map and {}.summary.json",
        args.out.display(),
        args.out.display()
    );
    Ok(())
}

fn profile_csv(profile: &ProfileResult) -> String {
    let mut out = String::from("abscissa,value,error\n");
    for t in 0..profile.values.len() {
        if profile.valid[t] {
            let _ = writeln!(
                out,
                "{},{},{}",
                profile.abscissa[t], profile.values[t], profile.errors[t]
            );
        }
    }
    out
}

fn emit_csv(out: Option<&Path>, csv: &str, summary: &str) -> Result<(), CliError> {
    match out {
        Some(path) => {
            write_text(path, csv)?;
            println!("{summary}, wrote {}", path.display());
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<(), CliError> {
    let validity = match &args.validity {
        Some(path) => Some(read_validity(path)?),
        None => None,
    };
    match args.mode {
        AnalyzeMode::Column => {
            let (map, phase) = read_f64_map(&args.input)?;
            let grid = map_grid(&map)?;
            let std_map = match &args.std {
                Some(path) => Some(read_f64_map(path)?.1),
                None => None,
            };
            let axis = match args.axis {
                AxisArg::X => ProfileAxis::X,
                AxisArg::Y => ProfileAxis::Y,
            };
            let lane_max = match axis {
                ProfileAxis::Y => grid.width,
                ProfileAxis::X => grid.height,
            };
            let lanes = match &args.lanes {
                Some(text) => parse_lanes(text, lane_max)?,
                None => middle_lanes(lane_max),
            };
            let profile = column_average(
                &phase,
                std_map.as_ref(),
                validity.as_ref(),
                lanes.clone(),
                axis,
                &grid,
            )?;
            let n = profile.valid.iter().filter(|&&v| v).count();
            let summary =
                format!("column profile over lanes {}..{}, {n} valid points", lanes.start, lanes.end);
            emit_csv(args.out.as_deref(), &profile_csv(&profile), &summary)?;
        }
        AnalyzeMode::Azimuthal => {
            let (map, phase) = read_f64_map(&args.input)?;
            let grid = map_grid(&map)?;
            let center = match &args.center {
                Some(text) => parse_f64_pair("center", text)?,
                None => ((grid.width / 2) as f64, (grid.height / 2) as f64),
            };
            let profile = azimuthal_profile(
                &phase,
                validity.as_ref(),
                center,
                args.r_inner,
                args.r_outer,
                args.bins,
            )?;
            let fit = profile
                .fit
                .ok_or_else(|| CliError::Pipeline("too few bins for a slope fit".into()))?;
            if let Some(path) = &args.out {
                write_text(path, &profile_csv(&profile))?;
            }
            println!("azimuthal slope {:.6}", fit.slope);
        }
        AnalyzeMode::Visibility => {
            let interferogram = diskio::read_map(&args.input)?.to_interferogram()?;
            let (map, vis) = visibility(&interferogram, &ReconParams::default(), args.floor)?;
            if let Some(path) = &args.out {
                diskio::write_map(
                    path,
                    &MapFile::new(
                        "visibility",
                        interferogram.grid.pitch,
                        MapData::F64(map),
                    ),
                )?;
            }
            println!(
                "visibility median {:.6} (clip fraction {:.4}, {} pixels)",
                vis.median, vis.clip_fraction, vis.n_pixels
            );
        }
        AnalyzeMode::Bootstrap => {
            let interferogram = diskio::read_map(&args.input)?.to_interferogram()?;
            let reference = match &args.reference {
                Some(path) => Some(diskio::read_map(path)?.to_interferogram()?),
                None => None,
            };
            let maps = bootstrap(
                &interferogram,
                reference.as_ref(),
                &ReconParams::default(),
                args.resamples,
                args.seed,
            )?;
            if let Some(prefix) = &args.out_prefix {
                let pitch = interferogram.grid.pitch;
                diskio::write_map(
                    suffixed(prefix, "mean.map"),
                    &MapFile::new("phase_mean", pitch, MapData::F64(maps.mean_phase.clone())),
                )?;
                diskio::write_map(
                    suffixed(prefix, "std.map"),
                    &MapFile::new("phase_std", pitch, MapData::F64(maps.std_phase.clone())),
                )?;
            }
            let mut vals: Vec<f64> = maps
                .std_phase
                .indexed_iter()
                .filter(|((j, i), _)| maps.validity[[*j, *i]])
                .map(|(_, &s)| s)
                .collect();
            if vals.is_empty() {
                return Err(CliError::Pipeline("no valid pixels".into()));
            }
            let mid = vals.len() / 2;
            let (_, &mut median, _) = vals.select_nth_unstable_by(mid, f64::total_cmp);
            let max = vals.iter().cloned().fold(0.0f64, f64::max);
            println!(
                "bootstrap phase std over {} valid pixels: median {:.6} rad, max {:.6} rad ({} resamples, {} failed)",
                vals.len(),
                median,
                max,
                maps.n_resamples,
                maps.n_failures
            );
        }
    }
    Ok(())
}
