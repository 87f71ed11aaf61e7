//! On-disk formats: a small binary container for 2D maps and a plain-text
//! event list.
//!
//! Map layout, all little-endian:
//!
//! ```text
//! "HG2D" | u16 version | u16 dtype | u32 width | u32 height
//!        | f64 pitch_m | u16 name length | name UTF-8 | row-major payload
//! ```
//!
//! dtype 0 is f64, 1 is complex128 (re then im per element), 2 is u32.
//! Event files start with `# holo-events v1 width=<w> height=<h>` and carry
//! one `x,y,kind` line per event, positions in pixel units with six decimal
//! places, kind `s` (signal), `d` (dark) or `a` (accidental).

use ndarray::Array2;
use num_complex::Complex64;
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

use crate::grid::{GridError, GridSpec};
use crate::photonsim::{EventKind, Interferogram, PhotonEvent};

pub const MAP_MAGIC: [u8; 4] = *b"HG2D";
pub const MAP_VERSION: u16 = 1;
pub const EVENT_HEADER_PREFIX: &str = "# holo-events v1";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("map: {0}")]
    BadMap(String),
    #[error("events: {0}")]
    BadEvents(String),
    #[error(transparent)]
    Grid(#[from] GridError),
}

fn file_err(path: &Path, source: std::io::Error) -> IoError {
    IoError::File { path: path.display().to_string(), source }
}

#[derive(Debug, Clone, PartialEq)]
pub enum MapData {
    F64(Array2<f64>),
    C128(Array2<Complex64>),
    U32(Array2<u32>),
}

impl MapData {
    pub fn dtype_code(&self) -> u16 {
        match self {
            MapData::F64(_) => 0,
            MapData::C128(_) => 1,
            MapData::U32(_) => 2,
        }
    }

    /// `(height, width)`.
    pub fn dim(&self) -> (usize, usize) {
        match self {
            MapData::F64(a) => a.dim(),
            MapData::C128(a) => a.dim(),
            MapData::U32(a) => a.dim(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapFile {
    pub pitch_m: f64,
    pub name: String,
    pub data: MapData,
}

impl MapFile {
    pub fn new(name: impl Into<String>, pitch_m: f64, data: MapData) -> Self {
        MapFile { pitch_m, name: name.into(), data }
    }

    pub fn width(&self) -> usize {
        self.data.dim().1
    }

    pub fn height(&self) -> usize {
        self.data.dim().0
    }

    /// Reinterpret an f64 map as a count histogram on its stored grid.
    pub fn to_interferogram(&self) -> Result<Interferogram, IoError> {
        let counts = match &self.data {
            MapData::F64(a) => a.clone(),
            other => {
                return Err(IoError::BadMap(format!(
                    "expected an f64 map, found dtype {}",
                    other.dtype_code()
                )))
            }
        };
        let grid = GridSpec::new(self.width(), self.height(), self.pitch_m, (0.0, 0.0))?;
        Ok(Interferogram { grid, counts })
    }
}

pub fn encode_map(map: &MapFile) -> Result<Vec<u8>, IoError> {
    let (h, w) = map.data.dim();
    if w == 0 || h == 0 {
        return Err(IoError::BadMap("refusing to write an empty map".into()));
    }
    if w > u32::MAX as usize || h > u32::MAX as usize {
        return Err(IoError::BadMap(format!("{w}x{h} exceeds the u32 size fields")));
    }
    if map.name.len() > u16::MAX as usize {
        return Err(IoError::BadMap(format!(
            "name is {} bytes, limit is {}",
            map.name.len(),
            u16::MAX
        )));
    }
    let mut out = Vec::with_capacity(26 + map.name.len() + 16 * w * h);
    out.extend_from_slice(&MAP_MAGIC);
    out.extend_from_slice(&MAP_VERSION.to_le_bytes());
    out.extend_from_slice(&map.data.dtype_code().to_le_bytes());
    out.extend_from_slice(&(w as u32).to_le_bytes());
    out.extend_from_slice(&(h as u32).to_le_bytes());
    out.extend_from_slice(&map.pitch_m.to_le_bytes());
    out.extend_from_slice(&(map.name.len() as u16).to_le_bytes());
    out.extend_from_slice(map.name.as_bytes());
    match &map.data {
        MapData::F64(a) => {
            for v in a.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        MapData::C128(a) => {
            for v in a.iter() {
                out.extend_from_slice(&v.re.to_le_bytes());
                out.extend_from_slice(&v.im.to_le_bytes());
            }
        }
        MapData::U32(a) => {
            for v in a.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], IoError> {
        if self.pos + n > self.bytes.len() {
            return Err(IoError::BadMap(format!(
                "truncated in {what}: need {n} bytes at offset {}, file has {}",
                self.pos,
                self.bytes.len()
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16, IoError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32, IoError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64, IoError> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

pub fn decode_map(bytes: &[u8]) -> Result<MapFile, IoError> {
    let mut c = Cursor { bytes, pos: 0 };
    let magic = c.take(4, "magic")?;
    if magic != MAP_MAGIC {
        return Err(IoError::BadMap(format!("bad magic {magic:02x?}")));
    }
    let version = c.u16("version")?;
    if version != MAP_VERSION {
        return Err(IoError::BadMap(format!(
            "unsupported version {version}, expected {MAP_VERSION}"
        )));
    }
    let dtype = c.u16("dtype")?;
    let w = c.u32("width")? as usize;
    let h = c.u32("height")? as usize;
    if w == 0 || h == 0 {
        return Err(IoError::BadMap(format!("empty map {w}x{h}")));
    }
    let pitch_m = c.f64("pitch")?;
    let name_len = c.u16("name length")? as usize;
    let name = std::str::from_utf8(c.take(name_len, "name")?)
        .map_err(|e| IoError::BadMap(format!("name is not UTF-8: {e}")))?
        .to_string();
    let count = w
        .checked_mul(h)
        .ok_or_else(|| IoError::BadMap(format!("{w}x{h} overflows")))?;
    let data = match dtype {
        0 => {
            let raw = c.take(8 * count, "f64 payload")?;
            let vals: Vec<f64> = raw
                .chunks_exact(8)
                .map(|ch| f64::from_le_bytes(ch.try_into().unwrap()))
                .collect();
            MapData::F64(Array2::from_shape_vec((h, w), vals).expect("length checked"))
        }
        1 => {
            let raw = c.take(16 * count, "complex payload")?;
            let vals: Vec<Complex64> = raw
                .chunks_exact(16)
                .map(|ch| {
                    Complex64::new(
                        f64::from_le_bytes(ch[..8].try_into().unwrap()),
                        f64::from_le_bytes(ch[8..].try_into().unwrap()),
                    )
                })
                .collect();
            MapData::C128(Array2::from_shape_vec((h, w), vals).expect("length checked"))
        }
        2 => {
            let raw = c.take(4 * count, "u32 payload")?;
            let vals: Vec<u32> = raw
                .chunks_exact(4)
                .map(|ch| u32::from_le_bytes(ch.try_into().unwrap()))
                .collect();
            MapData::U32(Array2::from_shape_vec((h, w), vals).expect("length checked"))
        }
        other => return Err(IoError::BadMap(format!("unknown dtype {other}"))),
    };
    if c.pos != bytes.len() {
        return Err(IoError::BadMap(format!(
            "{} trailing bytes after the payload",
            bytes.len() - c.pos
        )));
    }
    Ok(MapFile { pitch_m, name, data })
}

pub fn write_map(path: impl AsRef<Path>, map: &MapFile) -> Result<(), IoError> {
    let path = path.as_ref();
    std::fs::write(path, encode_map(map)?).map_err(|e| file_err(path, e))
}

pub fn read_map(path: impl AsRef<Path>) -> Result<MapFile, IoError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| file_err(path, e))?;
    decode_map(&bytes)
}

fn kind_letter(kind: EventKind) -> char {
    match kind {
        EventKind::Signal => 's',
        EventKind::Dark => 'd',
        EventKind::Accidental => 'a',
    }
}

/// An event list with the detector dimensions it was recorded on.
#[derive(Debug, Clone, PartialEq)]
pub struct EventRecord {
    pub width: usize,
    pub height: usize,
    pub events: Vec<PhotonEvent>,
}

pub fn encode_events(events: &[PhotonEvent], width: usize, height: usize) -> Result<String, IoError> {
    let mut out = String::with_capacity(32 + 24 * events.len());
    let _ = writeln!(out, "{EVENT_HEADER_PREFIX} width={width} height={height}");
    for (n, e) in events.iter().enumerate() {
        if !(0.0..width as f64).contains(&e.x) || !(0.0..height as f64).contains(&e.y) {
            return Err(IoError::BadEvents(format!(
                "event {n} at ({}, {}) is outside the {width}x{height} detector",
                e.x, e.y
            )));
        }
        let _ = writeln!(out, "{:.6},{:.6},{}", e.x, e.y, kind_letter(e.kind));
    }
    Ok(out)
}

pub fn decode_events(text: &str) -> Result<EventRecord, IoError> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| IoError::BadEvents("empty file".into()))?
        .trim_end_matches('\r');
    let dims = header
        .strip_prefix(EVENT_HEADER_PREFIX)
        .ok_or_else(|| IoError::BadEvents(format!("bad header {header:?}")))?;
    let mut width = None;
    let mut height = None;
    for tok in dims.split_whitespace() {
        if let Some(v) = tok.strip_prefix("width=") {
            width = v.parse::<usize>().ok();
        } else if let Some(v) = tok.strip_prefix("height=") {
            height = v.parse::<usize>().ok();
        } else {
            return Err(IoError::BadEvents(format!("unexpected header token {tok:?}")));
        }
    }
    let (width, height) = match (width, height) {
        (Some(w), Some(h)) if w > 0 && h > 0 => (w, h),
        _ => {
            return Err(IoError::BadEvents(format!(
                "header must give positive width and height: {header:?}"
            )))
        }
    };
    let mut events = Vec::new();
    for (idx, raw) in lines.enumerate() {
        let line_no = idx + 2;
        let line = raw.trim_end_matches('\r');
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split(',');
        let x: f64 = fields
            .next()
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| IoError::BadEvents(format!("line {line_no}: bad x in {line:?}")))?;
        let y: f64 = fields
            .next()
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| IoError::BadEvents(format!("line {line_no}: bad y in {line:?}")))?;
        let kind = match fields.next().map(str::trim) {
            None | Some("s") => EventKind::Signal,
            Some("d") => EventKind::Dark,
            Some("a") => EventKind::Accidental,
            Some(other) => {
                return Err(IoError::BadEvents(format!(
                    "line {line_no}: unknown kind {other:?}"
                )))
            }
        };
        if fields.next().is_some() {
            return Err(IoError::BadEvents(format!(
                "line {line_no}: too many fields in {line:?}"
            )));
        }
        if !x.is_finite() || !y.is_finite() {
            return Err(IoError::BadEvents(format!(
                "line {line_no}: non-finite position in {line:?}"
            )));
        }
        if !(0.0..width as f64).contains(&x) || !(0.0..height as f64).contains(&y) {
            return Err(IoError::BadEvents(format!(
                "line {line_no}: ({x}, {y}) is outside the {width}x{height} detector"
            )));
        }
        events.push(PhotonEvent { x, y, kind });
    }
    Ok(EventRecord { width, height, events })
}

pub fn write_events(
    path: impl AsRef<Path>,
    events: &[PhotonEvent],
    width: usize,
    height: usize,
) -> Result<(), IoError> {
    let path = path.as_ref();
    std::fs::write(path, encode_events(events, width, height)?).map_err(|e| file_err(path, e))
}

pub fn read_events(path: impl AsRef<Path>) -> Result<EventRecord, IoError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| file_err(path, e))?;
    decode_events(&text)
}
