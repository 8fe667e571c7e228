//! Volume file I/O.
//!
//! Two containers are supported:
//!
//! * a small NRRD subset: `NRRD0001`..`NRRD0005`, `dimension: 3`, element
//!   types `uint8`, `uint32` and `float`, `raw` or `gzip` encoding, little
//!   endian, spacing given by `spacings` or a diagonal `space directions`;
//! * a raw dump plus JSON sidecar (`<name>.raw` + `<name>.json` with keys
//!   `dims`, `spacing_mm`, `dtype`).
//!
//! Element types map onto payloads: `uint8` is a binary mask (values must be
//! 0 or 1), `uint32` holds branch labels and `float` is a scalar field.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{Dims, LabelVolume, MaskVolume, ScalarVolume, Spacing, Volume};

/// A volume of any supported payload kind.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyVolume {
    Mask(MaskVolume),
    Labels(LabelVolume),
    Scalar(ScalarVolume),
}

impl AnyVolume {
    pub fn kind(&self) -> &'static str {
        match self {
            AnyVolume::Mask(_) => "binary-mask",
            AnyVolume::Labels(_) => "branch-labels",
            AnyVolume::Scalar(_) => "scalar",
        }
    }

    pub fn dims(&self) -> Dims {
        match self {
            AnyVolume::Mask(v) => v.dims(),
            AnyVolume::Labels(v) => v.dims(),
            AnyVolume::Scalar(v) => v.dims(),
        }
    }

    pub fn spacing(&self) -> Spacing {
        match self {
            AnyVolume::Mask(v) => v.spacing(),
            AnyVolume::Labels(v) => v.spacing(),
            AnyVolume::Scalar(v) => v.spacing(),
        }
    }

    pub fn into_mask(self) -> Result<MaskVolume> {
        match self {
            AnyVolume::Mask(v) => Ok(v),
            other => Err(Error::WrongPayload {
                expected: "binary-mask",
                found: other.kind(),
            }),
        }
    }

    pub fn into_labels(self) -> Result<LabelVolume> {
        match self {
            AnyVolume::Labels(v) => Ok(v),
            other => Err(Error::WrongPayload {
                expected: "branch-labels",
                found: other.kind(),
            }),
        }
    }

    fn dtype(&self) -> ElementType {
        match self {
            AnyVolume::Mask(_) => ElementType::Uint8,
            AnyVolume::Labels(_) => ElementType::Uint32,
            AnyVolume::Scalar(_) => ElementType::Float,
        }
    }

    fn payload_bytes(&self) -> Vec<u8> {
        match self {
            AnyVolume::Mask(v) => v.data().iter().map(|b| *b as u8).collect(),
            AnyVolume::Labels(v) => v.data().iter().flat_map(|l| l.to_le_bytes()).collect(),
            AnyVolume::Scalar(v) => v.data().iter().flat_map(|f| f.to_le_bytes()).collect(),
        }
    }
}

impl From<MaskVolume> for AnyVolume {
    fn from(v: MaskVolume) -> Self {
        AnyVolume::Mask(v)
    }
}

impl From<LabelVolume> for AnyVolume {
    fn from(v: LabelVolume) -> Self {
        AnyVolume::Labels(v)
    }
}

impl From<ScalarVolume> for AnyVolume {
    fn from(v: ScalarVolume) -> Self {
        AnyVolume::Scalar(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ElementType {
    Uint8,
    Uint32,
    Float,
}

impl ElementType {
    fn width(self) -> usize {
        match self {
            ElementType::Uint8 => 1,
            ElementType::Uint32 | ElementType::Float => 4,
        }
    }

    fn nrrd_name(self) -> &'static str {
        match self {
            ElementType::Uint8 => "uint8",
            ElementType::Uint32 => "uint32",
            ElementType::Float => "float",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "uint8" | "uchar" | "unsigned char" | "uint8_t" => Some(ElementType::Uint8),
            "uint32" | "uint" | "unsigned int" | "uint32_t" => Some(ElementType::Uint32),
            "float" => Some(ElementType::Float),
            _ => None,
        }
    }
}

/// On-disk container selection for [`save_volume_as`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Nrrd,
    RawJson,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Nrrd => "nrrd",
            Format::RawJson => "raw",
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    dims: [usize; 3],
    spacing_mm: [f64; 3],
    dtype: String,
}

/// Loads a volume from an NRRD file or a raw+JSON pair (either file of the
/// pair may be named).
pub fn load_volume(path: impl AsRef<Path>) -> Result<AnyVolume> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some("raw") | Some("json") => load_raw_json(path),
        _ => load_nrrd(path),
    }
}

/// Saves a volume, choosing the container from the file extension
/// (`.raw`/`.json` → raw+JSON, anything else → NRRD).
pub fn save_volume(v: &AnyVolume, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some("raw") | Some("json") => save_volume_as(v, path, Format::RawJson),
        _ => save_volume_as(v, path, Format::Nrrd),
    }
}

pub fn save_volume_as(v: &AnyVolume, path: &Path, format: Format) -> Result<()> {
    match format {
        Format::Nrrd => write_atomic(path, &encode_nrrd(v)),
        Format::RawJson => {
            let raw = path.with_extension("raw");
            let json = path.with_extension("json");
            let sidecar = Sidecar {
                dims: v.dims().as_array(),
                spacing_mm: v.spacing().0,
                dtype: v.dtype().nrrd_name().to_string(),
            };
            let mut text = serde_json::to_vec_pretty(&sidecar)?;
            text.push(b'\n');
            write_atomic(&raw, &v.payload_bytes())?;
            write_atomic(&json, &text)
        }
    }
}

/// Serializes a volume as a raw-encoded NRRD byte stream.
pub fn encode_nrrd(v: &AnyVolume) -> Vec<u8> {
    let d = v.dims();
    let s = v.spacing().0;
    let mut out = format!(
        "NRRD0004\n# vessel-scales\ntype: {}\ndimension: 3\nsizes: {} {} {}\nspacings: {} {} {}\nencoding: raw\nendian: little\n\n",
        v.dtype().nrrd_name(),
        d.nx,
        d.ny,
        d.nz,
        fmt_f64(s[0]),
        fmt_f64(s[1]),
        fmt_f64(s[2]),
    )
    .into_bytes();
    out.extend_from_slice(&v.payload_bytes());
    out
}

// Shortest round-trip representation, always with a decimal point.
fn fmt_f64(v: f64) -> String {
    let s = format!("{v}");
    if s.contains(['.', 'e', 'E']) {
        s
    } else {
        format!("{s}.0")
    }
}

/// Writes `bytes` to a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = path.with_file_name(format!(".{file_name}.tmp{}", std::process::id()));
    let write = || -> std::io::Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

fn malformed(path: &Path, reason: impl Into<String>) -> Error {
    Error::MalformedHeader {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn load_nrrd(path: &Path) -> Result<AnyVolume> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_nrrd(&bytes, path)
}

/// Parses an in-memory NRRD stream; `path` is used for diagnostics only.
pub fn decode_nrrd(bytes: &[u8], path: &Path) -> Result<AnyVolume> {
    let mut pos = 0usize;
    let mut lines = Vec::new();
    loop {
        let rest = &bytes[pos..];
        let Some(nl) = rest.iter().position(|b| *b == b'\n') else {
            return Err(malformed(path, "header is not terminated by a blank line"));
        };
        let line = std::str::from_utf8(&rest[..nl])
            .map_err(|_| malformed(path, "header is not valid UTF-8"))?
            .trim_end_matches('\r');
        pos += nl + 1;
        if line.is_empty() {
            break;
        }
        lines.push(line.to_string());
    }
    let payload = &bytes[pos..];

    let magic = lines.first().map(String::as_str).unwrap_or("");
    let version = magic
        .strip_prefix("NRRD000")
        .and_then(|v| v.parse::<u8>().ok())
        .filter(|v| (1..=5).contains(v));
    if version.is_none() {
        return Err(malformed(path, format!("bad magic line `{magic}`")));
    }

    let mut dtype = None;
    let mut dimension = None;
    let mut sizes = None;
    let mut spacing = None;
    let mut encoding = None;
    let mut endian = None;
    for line in &lines[1..] {
        if line.starts_with('#') || line.contains(":=") {
            continue;
        }
        let Some((key, value)) = line.split_once(':') else {
            return Err(malformed(path, format!("unparseable line `{line}`")));
        };
        let value = value.trim();
        match key.trim() {
            "type" => {
                dtype = Some(ElementType::parse(value).ok_or_else(|| Error::Unsupported {
                    path: path.to_path_buf(),
                    what: "type",
                    value: value.to_string(),
                })?)
            }
            "dimension" => {
                dimension = Some(
                    value
                        .parse::<usize>()
                        .map_err(|_| malformed(path, "dimension is not an integer"))?,
                )
            }
            "sizes" => {
                sizes = Some(parse_sizes(value).ok_or_else(|| malformed(path, "bad sizes"))?)
            }
            "spacings" => {
                spacing =
                    Some(parse_spacings(value).ok_or_else(|| malformed(path, "bad spacings"))?)
            }
            "space directions" => {
                spacing = Some(
                    parse_space_directions(value)
                        .ok_or_else(|| malformed(path, "space directions must be diagonal"))?,
                )
            }
            "encoding" => encoding = Some(value.to_string()),
            "endian" => endian = Some(value.to_string()),
            "data file" | "datafile" => {
                return Err(Error::Unsupported {
                    path: path.to_path_buf(),
                    what: "detached data file",
                    value: value.to_string(),
                })
            }
            _ => {}
        }
    }

    let dtype = dtype.ok_or_else(|| malformed(path, "missing `type`"))?;
    if dimension != Some(3) {
        return Err(malformed(path, "`dimension: 3` is required"));
    }
    let sizes = sizes.ok_or_else(|| malformed(path, "missing `sizes`"))?;
    let dims = Dims::new(sizes[0], sizes[1], sizes[2])?;
    let spacing = match spacing {
        Some(s) => Spacing::new(s[0], s[1], s[2])?,
        None => return Err(malformed(path, "missing `spacings` or `space directions`")),
    };
    if dtype.width() > 1 {
        match endian.as_deref() {
            Some("little") => {}
            Some(other) => {
                return Err(Error::Unsupported {
                    path: path.to_path_buf(),
                    what: "endian",
                    value: other.to_string(),
                })
            }
            None => return Err(malformed(path, "missing `endian`")),
        }
    }
    let data = match encoding.as_deref() {
        Some("raw") => payload.to_vec(),
        Some("gzip") | Some("gz") => {
            let mut out = Vec::new();
            GzDecoder::new(payload)
                .read_to_end(&mut out)
                .map_err(|e| Error::io(path, e))?;
            out
        }
        Some(other) => {
            return Err(Error::Unsupported {
                path: path.to_path_buf(),
                what: "encoding",
                value: other.to_string(),
            })
        }
        None => return Err(malformed(path, "missing `encoding`")),
    };
    decode_payload(dtype, dims, spacing, &data)
}

fn parse_sizes(v: &str) -> Option<[usize; 3]> {
    let parts: Vec<usize> = v
        .split_whitespace()
        .map(|t| t.parse().ok())
        .collect::<Option<_>>()?;
    (parts.len() == 3).then(|| [parts[0], parts[1], parts[2]])
}

fn parse_spacings(v: &str) -> Option<[f64; 3]> {
    let parts: Vec<f64> = v
        .split_whitespace()
        .map(|t| t.parse().ok())
        .collect::<Option<_>>()?;
    (parts.len() == 3).then(|| [parts[0], parts[1], parts[2]])
}

fn parse_space_directions(v: &str) -> Option<[f64; 3]> {
    let vectors: Vec<Vec<f64>> = v
        .split(')')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.strip_prefix('(')
                .unwrap_or("")
                .split(',')
                .map(|c| c.trim().parse::<f64>().ok())
                .collect::<Option<Vec<_>>>()
        })
        .collect::<Option<_>>()?;
    if vectors.len() != 3 || vectors.iter().any(|v| v.len() != 3) {
        return None;
    }
    let mut out = [0.0; 3];
    for (axis, vec) in vectors.iter().enumerate() {
        for (k, c) in vec.iter().enumerate() {
            if k != axis && *c != 0.0 {
                return None;
            }
        }
        out[axis] = vec[axis].abs();
    }
    Some(out)
}

fn decode_payload(
    dtype: ElementType,
    dims: Dims,
    spacing: Spacing,
    data: &[u8],
) -> Result<AnyVolume> {
    let expected = dims.len() * dtype.width();
    if data.len() != expected {
        return Err(Error::DataLength {
            expected: dims.len(),
            found: data.len() / dtype.width(),
        });
    }
    Ok(match dtype {
        ElementType::Uint8 => {
            let mut mask = Vec::with_capacity(data.len());
            for (index, &value) in data.iter().enumerate() {
                match value {
                    0 => mask.push(false),
                    1 => mask.push(true),
                    _ => return Err(Error::NonBinaryMask { index, value }),
                }
            }
            AnyVolume::Mask(Volume::from_vec(dims, spacing, mask)?)
        }
        ElementType::Uint32 => AnyVolume::Labels(Volume::from_vec(
            dims,
            spacing,
            data.chunks_exact(4)
                .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect(),
        )?),
        ElementType::Float => AnyVolume::Scalar(Volume::from_vec(
            dims,
            spacing,
            data.chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect(),
        )?),
    })
}

fn load_raw_json(path: &Path) -> Result<AnyVolume> {
    let json: PathBuf = path.with_extension("json");
    let raw: PathBuf = path.with_extension("raw");
    let text = fs::read(&json).map_err(|e| Error::io(&json, e))?;
    let sidecar: Sidecar = serde_json::from_slice(&text)?;
    let dtype = ElementType::parse(&sidecar.dtype).ok_or_else(|| Error::Unsupported {
        path: json.clone(),
        what: "dtype",
        value: sidecar.dtype.clone(),
    })?;
    let dims = Dims::new(sidecar.dims[0], sidecar.dims[1], sidecar.dims[2])?;
    let s = sidecar.spacing_mm;
    let spacing = Spacing::new(s[0], s[1], s[2])?;
    let data = fs::read(&raw).map_err(|e| Error::io(&raw, e))?;
    decode_payload(dtype, dims, spacing, &data)
}
