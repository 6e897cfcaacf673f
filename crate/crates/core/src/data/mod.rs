//! Hyperspectral cubes, broad-band simulation through spectral response
//! functions, training patches and dataset splits.

mod envi;
mod io;
mod patches;
mod split;
mod srf;

pub use envi::{export_envi, import_envi};
pub use io::{load_cube, payload_path, save_cube, CUBE_FORMAT};
pub use patches::{augment, compose_codes, extract_patch, inverse_code, sample_patches, Patch, PatchOrigin, PatchSet, AUGMENT_CODES};
pub use split::{parse_split_file, split_dataset, Fold, SplitMode};
pub use srf::{parse_spectrum_csv, simulate_input, SpectralResponse};

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::tensor::{Shape4, Tensor4};

/// A hyperspectral image stored band-sequentially: `data[b·H·W + y·W + x]`.
///
/// Broad-band images produced by [`simulate_input`] use the same type; their
/// wavelength axis holds channel indices.
#[derive(Clone, Debug, PartialEq)]
pub struct HsiCube {
    height: usize,
    width: usize,
    wavelengths: Vec<f64>,
    data: Vec<f32>,
    scale: f64,
    /// Free-form provenance carried through save/load.
    pub metadata: BTreeMap<String, String>,
}

impl HsiCube {
    pub fn new(height: usize, width: usize, wavelengths: Vec<f64>, data: Vec<f32>, scale: f64) -> Result<Self> {
        if height == 0 || width == 0 || wavelengths.is_empty() {
            return Err(Error::Input(format!(
                "cube dimensions {height}x{width}x{} must be non-zero",
                wavelengths.len()
            )));
        }
        check_wavelengths(&wavelengths)?;
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::format("scale", format!("{scale} is not a positive number")));
        }
        let expected = height * width * wavelengths.len();
        if data.len() != expected {
            return Err(Error::format(
                "data",
                format!("{} values for a {height}x{width}x{} cube", data.len(), wavelengths.len()),
            ));
        }
        Ok(Self {
            height,
            width,
            wavelengths,
            data,
            scale,
            metadata: BTreeMap::new(),
        })
    }

    /// Builds a cube from a `(1, bands, H, W)` or `(bands, H, W)`-shaped tensor item.
    pub fn from_tensor(t: &Tensor4<f32>, item: usize, wavelengths: Vec<f64>, scale: f64) -> Result<Self> {
        let s = t.shape();
        if wavelengths.len() != s.channels {
            return Err(Error::shape(format!(
                "{} wavelengths for a {}-channel tensor",
                wavelengths.len(),
                s.channels
            )));
        }
        Self::new(s.height, s.width, wavelengths, t.item(item).to_vec(), scale)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bands(&self) -> usize {
        self.wavelengths.len()
    }

    pub fn wavelengths(&self) -> &[f64] {
        &self.wavelengths
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn band(&self, b: usize) -> &[f32] {
        let n = self.pixels();
        &self.data[b * n..(b + 1) * n]
    }

    pub fn get(&self, b: usize, y: usize, x: usize) -> f32 {
        self.data[(b * self.height + y) * self.width + x]
    }

    /// Spectrum of pixel `p = y·W + x`.
    pub fn spectrum(&self, p: usize) -> Vec<f32> {
        let n = self.pixels();
        (0..self.bands()).map(|b| self.data[b * n + p]).collect()
    }

    /// The cube as a single-item `(1, bands, H, W)` tensor.
    pub fn to_tensor(&self) -> Tensor4<f32> {
        Tensor4::from_vec(Shape4::new(1, self.bands(), self.height, self.width), self.data.clone())
            .expect("cube invariants guarantee a valid shape")
    }

    pub fn same_geometry(&self, other: &HsiCube) -> bool {
        self.height == other.height && self.width == other.width && self.wavelengths == other.wavelengths
    }

    /// Spatial window of the cube, all bands.
    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<HsiCube> {
        if height == 0 || width == 0 || top + height > self.height || left + width > self.width {
            return Err(Error::Input(format!(
                "window {height}x{width} at ({top}, {left}) exceeds the {}x{} cube",
                self.height, self.width
            )));
        }
        let mut data = Vec::with_capacity(height * width * self.bands());
        for b in 0..self.bands() {
            for y in top..top + height {
                let row = (b * self.height + y) * self.width;
                data.extend_from_slice(&self.data[row + left..row + left + width]);
            }
        }
        let mut out = HsiCube::new(height, width, self.wavelengths.clone(), data, self.scale)?;
        out.metadata = self.metadata.clone();
        Ok(out)
    }
}

fn check_wavelengths(w: &[f64]) -> Result<()> {
    if let Some(bad) = w.iter().position(|v| !v.is_finite()) {
        return Err(Error::format("wavelengths", format!("entry {bad} is not finite")));
    }
    if let Some(i) = w.windows(2).position(|p| p[1] <= p[0]) {
        return Err(Error::format(
            "wavelengths",
            format!("not strictly increasing at index {} ({} then {})", i + 1, w[i], w[i + 1]),
        ));
    }
    Ok(())
}

/// Maps a stored value onto the 8-bit range: `clip(255·v/scale, 0, 255)`,
/// without rounding.
pub fn to_8bit(v: f64, scale: f64) -> f64 {
    (255.0 * v / scale).clamp(0.0, 255.0)
}

/// Whether an illumination spectrum is applied or removed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Illumination {
    /// Reflectance to radiance.
    Multiply,
    /// Radiance to reflectance.
    Divide,
}

/// Per-band multiplication or division by an illumination spectrum.
pub fn apply_illumination(cube: &HsiCube, illum: &[f64], op: Illumination) -> Result<HsiCube> {
    if illum.len() != cube.bands() {
        return Err(Error::Input(format!(
            "illumination has {} entries for {} bands",
            illum.len(),
            cube.bands()
        )));
    }
    if let Some(b) = illum.iter().position(|v| !v.is_finite() || (op == Illumination::Divide && *v == 0.0)) {
        return Err(Error::Input(format!("illumination entry {b} is {} and cannot be applied", illum[b])));
    }
    let mut out = cube.clone();
    let n = cube.pixels();
    for (b, &e) in illum.iter().enumerate() {
        for v in &mut out.data[b * n..(b + 1) * n] {
            *v = match op {
                Illumination::Multiply => (*v as f64 * e) as f32,
                Illumination::Divide => (*v as f64 / e) as f32,
            };
        }
    }
    Ok(out)
}

#[cfg(test)]
pub(crate) fn test_cube(h: usize, w: usize, bands: usize, seed: u64) -> HsiCube {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let wl = (0..bands).map(|b| 400.0 + 10.0 * b as f64).collect();
    let data = (0..h * w * bands).map(|_| rng.gen_range(0.0f32..1.0)).collect();
    HsiCube::new(h, w, wl, data, 1.0).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn invariants_checked() {
        assert!(HsiCube::new(2, 2, vec![400.0, 410.0], vec![0.0; 8], 1.0).is_ok());
        assert!(matches!(
            HsiCube::new(2, 2, vec![410.0, 400.0], vec![0.0; 8], 1.0),
            Err(Error::Format { field, .. }) if field == "wavelengths"
        ));
        assert!(matches!(
            HsiCube::new(2, 2, vec![400.0, 410.0], vec![0.0; 7], 1.0),
            Err(Error::Format { .. })
        ));
        assert!(HsiCube::new(2, 2, vec![400.0, 410.0], vec![0.0; 8], 0.0).is_err());
    }

    #[test]
    fn eight_bit_mapping() {
        assert_eq!(to_8bit(2.0, 2.0), 255.0);
        assert_eq!(to_8bit(-1.0, 1.0), 0.0);
        assert_eq!(to_8bit(1.5 * 4.0, 4.0), 255.0);
        assert_eq!(to_8bit(0.5, 1.0), 127.5);
    }

    #[test]
    fn crop_and_spectrum() {
        let c = test_cube(4, 5, 3, 1);
        let w = c.crop(1, 2, 2, 3).unwrap();
        assert_eq!(w.get(2, 1, 2), c.get(2, 2, 4));
        assert_eq!(c.spectrum(7), vec![c.get(0, 1, 2), c.get(1, 1, 2), c.get(2, 1, 2)]);
        assert!(c.crop(3, 0, 2, 1).is_err());
    }

    #[test]
    fn illumination_round_trip() {
        let c = test_cube(3, 3, 4, 2);
        let e = [0.5, 2.0, 4.0, 1.0];
        let lit = apply_illumination(&c, &e, Illumination::Multiply).unwrap();
        assert_eq!(lit.get(1, 0, 0), c.get(1, 0, 0) * 2.0);
        let back = apply_illumination(&lit, &e, Illumination::Divide).unwrap();
        assert_eq!(back, c);
        assert!(apply_illumination(&c, &[1.0, 0.0, 1.0, 1.0], Illumination::Divide).is_err());
        assert!(apply_illumination(&c, &[1.0], Illumination::Multiply).is_err());
    }
}
