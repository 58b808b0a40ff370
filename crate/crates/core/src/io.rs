//! Raw binary + JSON header file pairs.
//!
//! An array named `name` is stored as `name.hdr.json` (shape, element type,
//! byte order, layout, semantic tag, free-form extras) and `name.bin`
//! (interleaved little-endian `f64` real/imaginary pairs, row-major).

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::grid::{ComplexGrid, Measurements};

pub const DTYPE: &str = "complex128";
pub const BYTE_ORDER: &str = "little-endian";
pub const LAYOUT: &str = "row-major";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Semantic {
    Image,
    Csm,
    Mask,
    Measurements,
    CsmCoeffs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub shape: Vec<usize>,
    pub dtype: String,
    pub order: String,
    pub layout: String,
    pub semantic: Semantic,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl Header {
    pub fn new(shape: Vec<usize>, semantic: Semantic) -> Self {
        Self {
            shape,
            dtype: DTYPE.into(),
            order: BYTE_ORDER.into(),
            layout: LAYOUT.into(),
            semantic,
            extra: Map::new(),
        }
    }

    pub fn with_extra(mut self, key: &str, value: Value) -> Self {
        self.extra.insert(key.into(), value);
        self
    }

    pub fn num_elements(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Strips a trailing `.hdr.json` or `.bin` so either file of the pair names it.
pub fn stem(path: &Path) -> PathBuf {
    let s = path.to_string_lossy();
    for suffix in [".hdr.json", ".bin"] {
        if let Some(base) = s.strip_suffix(suffix) {
            return PathBuf::from(base);
        }
    }
    path.to_path_buf()
}

pub fn header_path(path: &Path) -> PathBuf {
    let mut s = stem(path).into_os_string();
    s.push(".hdr.json");
    s.into()
}

pub fn payload_path(path: &Path) -> PathBuf {
    let mut s = stem(path).into_os_string();
    s.push(".bin");
    s.into()
}

pub fn save_array(path: &Path, header: &Header, data: &[Complex64]) -> Result<()> {
    if header.num_elements() != data.len() {
        return Err(Error::Dimension(format!(
            "header shape {:?} does not match {} elements",
            header.shape,
            data.len()
        )));
    }
    let hdr = header_path(path);
    let bin = payload_path(path);
    if let Some(dir) = hdr.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut text = serde_json::to_string_pretty(header).expect("header serializes");
    text.push('\n');
    fs::write(&hdr, text).map_err(|e| Error::io(&hdr, e))?;

    let mut bytes = Vec::with_capacity(data.len() * 16);
    for z in data {
        bytes.extend_from_slice(&z.re.to_le_bytes());
        bytes.extend_from_slice(&z.im.to_le_bytes());
    }
    fs::write(&bin, bytes).map_err(|e| Error::io(&bin, e))
}

pub fn load_header(path: &Path) -> Result<Header> {
    let hdr = header_path(path);
    let text = fs::read_to_string(&hdr).map_err(|e| Error::io(&hdr, e))?;
    let header: Header =
        serde_json::from_str(&text).map_err(|e| Error::format(&hdr, e.to_string()))?;
    if header.dtype != DTYPE {
        return Err(Error::Unsupported {
            path: hdr,
            msg: format!("element type {:?}, only {DTYPE} is supported", header.dtype),
        });
    }
    if header.order != BYTE_ORDER {
        return Err(Error::Unsupported {
            path: hdr,
            msg: format!("byte order {:?}, only {BYTE_ORDER} is supported", header.order),
        });
    }
    if header.layout != LAYOUT {
        return Err(Error::Unsupported {
            path: hdr,
            msg: format!("layout {:?}, only {LAYOUT} is supported", header.layout),
        });
    }
    Ok(header)
}

pub fn load_array(path: &Path) -> Result<(Header, Vec<Complex64>)> {
    let header = load_header(path)?;
    let bin = payload_path(path);
    let bytes = fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
    let expected = header.num_elements() * 16;
    if bytes.len() != expected {
        return Err(Error::format(
            &bin,
            format!(
                "payload has {} bytes, header shape {:?} needs {expected}",
                bytes.len(),
                header.shape
            ),
        ));
    }
    let data = bytes
        .chunks_exact(16)
        .map(|c| {
            let re = f64::from_le_bytes(c[..8].try_into().unwrap());
            let im = f64::from_le_bytes(c[8..].try_into().unwrap());
            Complex64::new(re, im)
        })
        .collect();
    Ok((header, data))
}

pub fn save_grid(grid: &ComplexGrid, path: &Path) -> Result<()> {
    save_grid_as(grid, path, Semantic::Image)
}

pub fn save_grid_as(grid: &ComplexGrid, path: &Path, semantic: Semantic) -> Result<()> {
    save_array(
        path,
        &Header::new(vec![grid.height(), grid.width()], semantic),
        grid.data(),
    )
}

pub fn load_grid(path: &Path) -> Result<ComplexGrid> {
    let (header, data) = load_array(path)?;
    grid_from(path, &header, data)
}

pub(crate) fn grid_from(path: &Path, header: &Header, data: Vec<Complex64>) -> Result<ComplexGrid> {
    if header.shape.len() != 2 {
        return Err(Error::format(
            header_path(path),
            format!("expected a 2D shape, got {:?}", header.shape),
        ));
    }
    ComplexGrid::new(header.shape[0], header.shape[1], data)
        .map_err(|e| Error::format(payload_path(path), e.to_string()))
}

/// Saves a stack of equally sized grids (e.g. one map per coil) as shape `[n, H, W]`.
pub fn save_stack(grids: &[ComplexGrid], path: &Path, semantic: Semantic) -> Result<()> {
    let first = grids
        .first()
        .ok_or_else(|| Error::Dimension("empty grid stack".into()))?;
    if grids.iter().any(|g| !g.same_shape(first)) {
        return Err(Error::Dimension("grid stack shapes differ".into()));
    }
    let data: Vec<Complex64> = grids.iter().flat_map(|g| g.data().iter().copied()).collect();
    save_array(
        path,
        &Header::new(vec![grids.len(), first.height(), first.width()], semantic),
        &data,
    )
}

pub fn load_stack(path: &Path) -> Result<Vec<ComplexGrid>> {
    let (header, data) = load_array(path)?;
    if header.shape.len() != 3 {
        return Err(Error::format(
            header_path(path),
            format!("expected a 3D shape, got {:?}", header.shape),
        ));
    }
    let (n, h, w) = (header.shape[0], header.shape[1], header.shape[2]);
    (0..n)
        .map(|i| ComplexGrid::new(h, w, data[i * h * w..(i + 1) * h * w].to_vec()))
        .collect()
}

/// Measurements as shape `[num_coils, num_samples]`.
pub fn save_measurements(y: &Measurements, path: &Path) -> Result<()> {
    let data: Vec<Complex64> = y.coils().iter().flatten().copied().collect();
    save_array(
        path,
        &Header::new(vec![y.num_coils(), y.num_samples()], Semantic::Measurements),
        &data,
    )
}

pub fn load_measurements(path: &Path) -> Result<Measurements> {
    let (header, data) = load_array(path)?;
    if header.shape.len() != 2 || header.semantic != Semantic::Measurements {
        return Err(Error::format(
            header_path(path),
            "expected a [coils, samples] measurement array",
        ));
    }
    let m = header.shape[1];
    Measurements::new(data.chunks(m.max(1)).map(|c| c.to_vec()).collect())
}
