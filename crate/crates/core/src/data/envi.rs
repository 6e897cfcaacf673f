//! ENVI header + raw image interchange. Export always writes 32-bit float
//! BSQ little-endian; import accepts the common integer and float types in
//! any interleave and byte order.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::HsiCube;
use crate::error::{Error, Result};

/// Writes `<stem>.hdr` and `<stem>.img` for the given header path.
pub fn export_envi(cube: &HsiCube, header_path: impl AsRef<Path>) -> Result<()> {
    let hdr = header_path.as_ref();
    let img = hdr.with_extension("img");
    let wavelengths = cube.wavelengths().iter().map(|w| format!("{w}")).collect::<Vec<_>>().join(", ");
    let text = format!(
        "ENVI\n\
         description = {{hypersr export}}\n\
         samples = {}\n\
         lines = {}\n\
         bands = {}\n\
         header offset = 0\n\
         file type = ENVI Standard\n\
         data type = 4\n\
         interleave = bsq\n\
         byte order = 0\n\
         reflectance scale factor = {}\n\
         wavelength units = Nanometers\n\
         wavelength = {{{wavelengths}}}\n",
        cube.width(),
        cube.height(),
        cube.bands(),
        cube.scale()
    );
    let bytes: Vec<u8> = cube.data().iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(&img, bytes).map_err(|e| Error::io(&img, e))?;
    fs::write(hdr, text).map_err(|e| Error::io(hdr, e))?;
    Ok(())
}

fn parse_header(text: &str) -> Result<HashMap<String, String>> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("ENVI") {
        return Err(Error::format("envi header", "missing ENVI signature"));
    }
    let mut fields = HashMap::new();
    let mut pending: Option<(String, String)> = None;
    for line in lines {
        if let Some((key, mut value)) = pending.take() {
            value.push(' ');
            value.push_str(line.trim());
            if line.contains('}') {
                fields.insert(key, value);
            } else {
                pending = Some((key, value));
            }
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            continue;
        };
        let (key, value) = (key.trim().to_ascii_lowercase(), value.trim().to_string());
        if value.starts_with('{') && !value.contains('}') {
            pending = Some((key, value));
        } else {
            fields.insert(key, value);
        }
    }
    if let Some((key, _)) = pending {
        return Err(Error::format(key, "unterminated brace list"));
    }
    Ok(fields)
}

fn field_usize(fields: &HashMap<String, String>, key: &str) -> Result<usize> {
    fields
        .get(key)
        .ok_or_else(|| Error::format(key, "missing"))?
        .parse()
        .map_err(|_| Error::format(key, "not an unsigned integer"))
}

fn list(value: &str) -> Vec<&str> {
    value
        .trim_matches(|c| c == '{' || c == '}')
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect()
}

fn data_file(hdr: &Path) -> Result<PathBuf> {
    for candidate in [hdr.with_extension("img"), hdr.with_extension("dat"), hdr.with_extension("")] {
        if candidate.is_file() {
            return Ok(candidate);
        }
    }
    Err(Error::Input(format!("no image file next to {}", hdr.display())))
}

/// Reads an ENVI header and the raw image beside it (`.img`, `.dat` or no
/// extension).
pub fn import_envi(header_path: impl AsRef<Path>) -> Result<HsiCube> {
    let hdr = header_path.as_ref();
    let text = fs::read_to_string(hdr).map_err(|e| Error::io(hdr, e))?;
    let fields = parse_header(&text)?;
    let width = field_usize(&fields, "samples")?;
    let height = field_usize(&fields, "lines")?;
    let bands = field_usize(&fields, "bands")?;
    let offset = fields.get("header offset").map_or(Ok(0), |_| field_usize(&fields, "header offset"))?;
    let data_type = field_usize(&fields, "data type")?;
    let big_endian = match fields.get("byte order").map(String::as_str).unwrap_or("0") {
        "0" => false,
        "1" => true,
        other => return Err(Error::format("byte order", format!("unknown value `{other}`"))),
    };
    let interleave = fields.get("interleave").map(|s| s.to_ascii_lowercase()).unwrap_or_else(|| "bsq".into());

    let wavelengths: Vec<f64> = match fields.get("wavelength") {
        Some(v) => list(v)
            .iter()
            .map(|s| s.parse().map_err(|_| Error::format("wavelength", format!("`{s}` is not a number"))))
            .collect::<Result<_>>()?,
        None => {
            log::warn!("{} has no wavelength list; using band indices", hdr.display());
            (0..bands).map(|b| b as f64).collect()
        }
    };
    if wavelengths.len() != bands {
        return Err(Error::format("wavelength", format!("{} entries for {bands} bands", wavelengths.len())));
    }
    let scale = match fields.get("reflectance scale factor") {
        Some(v) => v.parse().map_err(|_| Error::format("reflectance scale factor", "not a number"))?,
        None => 1.0,
    };

    let width_bytes = match data_type {
        1 => 1,
        2 | 12 => 2,
        4 => 4,
        5 => 8,
        other => return Err(Error::format("data type", format!("unsupported ENVI data type {other}"))),
    };
    let path = data_file(hdr)?;
    let raw = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let n = height * width * bands;
    let needed = offset + n * width_bytes;
    if raw.len() < needed {
        return Err(Error::format(
            "payload",
            format!("truncated: expected {needed} bytes, found {}", raw.len()),
        ));
    }
    let decode = |i: usize| -> f32 {
        let b = &raw[offset + i * width_bytes..offset + (i + 1) * width_bytes];
        macro_rules! num {
            ($t:ty) => {{
                let arr = b.try_into().expect("slice width matches type");
                if big_endian {
                    <$t>::from_be_bytes(arr)
                } else {
                    <$t>::from_le_bytes(arr)
                }
            }};
        }
        match data_type {
            1 => b[0] as f32,
            2 => num!(i16) as f32,
            12 => num!(u16) as f32,
            4 => num!(f32),
            _ => num!(f64) as f32,
        }
    };
    let mut data = vec![0f32; n];
    for band in 0..bands {
        for y in 0..height {
            for x in 0..width {
                let src = match interleave.as_str() {
                    "bsq" => (band * height + y) * width + x,
                    "bil" => (y * bands + band) * width + x,
                    "bip" => (y * width + x) * bands + band,
                    other => return Err(Error::format("interleave", format!("unknown interleave `{other}`"))),
                };
                data[(band * height + y) * width + x] = decode(src);
            }
        }
    }
    HsiCube::new(height, width, wavelengths, data, scale)
}
