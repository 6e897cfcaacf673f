//! Native cube format: a JSON header next to a raw little-endian `f32`
//! payload in band-sequential order.
//!
//! ```json
//! {
//!   "format": "hsicube-1",
//!   "height": 512, "width": 512, "bands": 31,
//!   "wavelengths_nm": [400.0, 410.0, ...],
//!   "scale": 4095.0,
//!   "dtype": "f32le",
//!   "layout": "BSQ",
//!   "payload": "scene.bin",
//!   "metadata": {}
//! }
//! ```
//!
//! `payload` is resolved relative to the header's directory and holds exactly
//! `height·width·bands·4` bytes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::HsiCube;
use crate::error::{Error, Result};

pub const CUBE_FORMAT: &str = "hsicube-1";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    height: usize,
    width: usize,
    bands: usize,
    wavelengths_nm: Vec<f64>,
    scale: f64,
    dtype: String,
    layout: String,
    payload: String,
    #[serde(default)]
    metadata: BTreeMap<String, String>,
}

/// Payload file belonging to a header path: same stem, `.bin` extension.
pub fn payload_path(header: &Path) -> PathBuf {
    header.with_extension("bin")
}

/// Writes `path` (the JSON header) and its `.bin` payload.
pub fn save_cube(cube: &HsiCube, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let payload = payload_path(path);
    let payload_name = payload
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::Input(format!("cannot derive a payload name from {}", path.display())))?
        .to_string();
    let header = Header {
        format: CUBE_FORMAT.into(),
        height: cube.height(),
        width: cube.width(),
        bands: cube.bands(),
        wavelengths_nm: cube.wavelengths().to_vec(),
        scale: cube.scale(),
        dtype: "f32le".into(),
        layout: "BSQ".into(),
        payload: payload_name,
        metadata: cube.metadata.clone(),
    };
    let mut text = serde_json::to_string_pretty(&header).expect("header serializes");
    text.push('\n');
    let bytes: Vec<u8> = cube.data().iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(&payload, bytes).map_err(|e| Error::io(&payload, e))?;
    fs::write(path, text).map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Reads a cube written by [`save_cube`].
pub fn load_cube(path: impl AsRef<Path>) -> Result<HsiCube> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let header: Header = serde_json::from_str(&text).map_err(|e| Error::format("header", e.to_string()))?;
    if header.format != CUBE_FORMAT {
        return Err(Error::format("format", format!("unsupported format `{}`", header.format)));
    }
    if header.dtype != "f32le" {
        return Err(Error::format("dtype", format!("unsupported dtype `{}`", header.dtype)));
    }
    if header.layout != "BSQ" {
        return Err(Error::format("layout", format!("unsupported layout `{}`", header.layout)));
    }
    if header.wavelengths_nm.len() != header.bands {
        return Err(Error::format(
            "wavelengths_nm",
            format!("{} entries for {} bands", header.wavelengths_nm.len(), header.bands),
        ));
    }
    let payload = path.parent().unwrap_or(Path::new("")).join(&header.payload);
    let bytes = fs::read(&payload).map_err(|e| Error::io(&payload, e))?;
    let expected = header
        .height
        .checked_mul(header.width)
        .and_then(|n| n.checked_mul(header.bands))
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::format("header", "dimensions overflow"))?;
    if bytes.len() < expected {
        return Err(Error::format(
            "payload",
            format!("truncated: expected {expected} bytes, found {}", bytes.len()),
        ));
    }
    if bytes.len() > expected {
        return Err(Error::format(
            "payload",
            format!("{} trailing bytes after {expected}", bytes.len() - expected),
        ));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let mut cube = HsiCube::new(header.height, header.width, header.wavelengths_nm, data, header.scale)?;
    cube.metadata = header.metadata;
    Ok(cube)
}

#[cfg(test)]
mod tests {
    use super::super::test_cube;
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut cube = test_cube(4, 5, 3, 7);
        cube.data_mut()[0] = f32::from_bits(0x3f80_0001);
        cube.metadata.insert("source".into(), "unit".into());
        let p = dir.path().join("c.json");
        save_cube(&cube, &p).unwrap();
        let back = load_cube(&p).unwrap();
        assert_eq!(back, cube);
        let first = (fs::read(&p).unwrap(), fs::read(payload_path(&p)).unwrap());
        save_cube(&back, &p).unwrap();
        assert_eq!(first, (fs::read(&p).unwrap(), fs::read(payload_path(&p)).unwrap()));
    }

    #[test]
    fn band_count_beyond_payload_is_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let cube = test_cube(2, 2, 9, 3);
        let p = dir.path().join("c.json");
        save_cube(&cube, &p).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
        v["bands"] = 10.into();
        v["wavelengths_nm"].as_array_mut().unwrap().push(999.0.into());
        fs::write(&p, v.to_string()).unwrap();
        match load_cube(&p) {
            Err(Error::Format { field, reason }) => {
                assert_eq!(field, "payload");
                assert!(reason.contains("truncated"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_monotone_wavelengths_named() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        save_cube(&test_cube(2, 2, 3, 3), &p).unwrap();
        let text = fs::read_to_string(&p).unwrap().replace("420.0", "405.0");
        fs::write(&p, text.replace("410.0", "430.0")).unwrap();
        assert!(matches!(load_cube(&p), Err(Error::Format { field, .. }) if field == "wavelengths"));
    }

    #[test]
    fn unknown_header_key_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        save_cube(&test_cube(2, 2, 1, 3), &p).unwrap();
        let text = fs::read_to_string(&p).unwrap().replacen('{', "{\"extra\": 1,", 1);
        fs::write(&p, text).unwrap();
        assert!(matches!(load_cube(&p), Err(Error::Format { field, .. }) if field == "header"));
    }
}
