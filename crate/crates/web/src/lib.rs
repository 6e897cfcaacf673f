//! Browser demo: a synthetic hyperspectral scene rendered through the CIE
//! observer, with per-pixel spectra, VCA + FCLS unmixing and PCA denoising.
//!
//! The logic lives in plain functions returning `Result<_, String>` so it
//! runs under `cargo test`; the `wasm_bindgen` wrappers only convert errors.

use hypersr::data::{simulate_input, HsiCube, SpectralResponse};
use hypersr::metrics::evaluate;
use hypersr::synth::{random_spectra, smooth_simplex_cube, visible_wavelengths};
use hypersr::unmixing::{fcls_abundances, pca_project, spectral_angle_deg, vca_extract};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Distinct display colours for abundance maps.
const PALETTE: [[f64; 3]; 8] = [
    [230.0, 25.0, 75.0],
    [60.0, 180.0, 75.0],
    [0.0, 130.0, 200.0],
    [255.0, 225.0, 25.0],
    [145.0, 30.0, 180.0],
    [70.0, 240.0, 240.0],
    [245.0, 130.0, 48.0],
    [240.0, 50.0, 230.0],
];

#[wasm_bindgen]
pub struct Scene {
    cube: HsiCube,
    truth: Vec<Vec<f64>>,
}

#[derive(Serialize)]
pub struct UnmixResult {
    /// One spectrum per extracted endmember.
    pub endmembers: Vec<Vec<f64>>,
    /// Angle in degrees between each extracted spectrum and its closest true one.
    pub angles_deg: Vec<f64>,
    /// RGBA image colouring each pixel by its abundance vector.
    pub abundance_rgba: Vec<u8>,
}

#[derive(Serialize)]
pub struct DenoiseResult {
    pub noisy_rmse: f64,
    pub noisy_sam_deg: f64,
    pub denoised_rmse: f64,
    pub denoised_sam_deg: f64,
}

impl Scene {
    pub fn generate(seed: u64, size: usize, endmembers: usize) -> Result<Scene, String> {
        if !(8..=256).contains(&size) {
            return Err(format!("size {size} outside 8..=256"));
        }
        if !(2..=PALETTE.len()).contains(&endmembers) {
            return Err(format!("endmember count {endmembers} outside 2..={}", PALETTE.len()));
        }
        let wl = visible_wavelengths();
        let truth = random_spectra(endmembers, &wl, &mut ChaCha8Rng::seed_from_u64(seed));
        let (cube, _) = smooth_simplex_cube(&truth, size, size, &wl, seed.wrapping_add(1)).map_err(|e| e.to_string())?;
        Ok(Scene { cube, truth })
    }

    pub fn render(&self) -> Result<Vec<u8>, String> {
        let rgb = simulate_input(&self.cube, &SpectralResponse::cie1964()).map_err(|e| e.to_string())?;
        let peak = rgb.data().iter().cloned().fold(f32::MIN_POSITIVE, f32::max) as f64;
        let n = rgb.pixels();
        let mut out = vec![255u8; 4 * n];
        for c in 0..3 {
            for (p, &v) in rgb.band(c).iter().enumerate() {
                out[4 * p + c] = (255.0 * (v as f64 / peak).clamp(0.0, 1.0).powf(1.0 / 2.2)).round() as u8;
            }
        }
        Ok(out)
    }

    pub fn spectrum_at(&self, x: usize, y: usize) -> Result<Vec<f64>, String> {
        if x >= self.cube.width() || y >= self.cube.height() {
            return Err(format!("pixel ({x}, {y}) outside the scene"));
        }
        Ok(self.cube.spectrum(y * self.cube.width() + x).iter().map(|&v| v as f64).collect())
    }

    pub fn unmix_scene(&self, k: usize, seed: u64) -> Result<UnmixResult, String> {
        if !(2..=PALETTE.len()).contains(&k) {
            return Err(format!("k = {k} outside 2..={}", PALETTE.len()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = vca_extract(&self.cube, k, &mut rng).map_err(|e| e.to_string())?;
        let a = fcls_abundances(&self.cube, &e).map_err(|e| e.to_string())?;
        let angles_deg = e
            .columns
            .iter()
            .map(|c| self.truth.iter().map(|t| spectral_angle_deg(c, t)).fold(f64::INFINITY, f64::min))
            .collect();
        let n = self.cube.pixels();
        let mut abundance_rgba = vec![255u8; 4 * n];
        for p in 0..n {
            let mut rgb = [0.0; 3];
            for (j, colour) in PALETTE.iter().take(k).enumerate() {
                let w = a.data[j * n + p].clamp(0.0, 1.0);
                for c in 0..3 {
                    rgb[c] += w * colour[c];
                }
            }
            for c in 0..3 {
                abundance_rgba[4 * p + c] = rgb[c].round().clamp(0.0, 255.0) as u8;
            }
        }
        Ok(UnmixResult {
            endmembers: e.columns,
            angles_deg,
            abundance_rgba,
        })
    }

    /// Adds Gaussian noise with standard deviation `noise` (reflectance
    /// units) and compares the noisy and PCA-projected cubes with the clean one.
    pub fn denoise(&self, noise: f64, k: usize, seed: u64) -> Result<DenoiseResult, String> {
        let dist = Normal::new(0.0, noise).map_err(|e| e.to_string())?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut noisy = self.cube.clone();
        for v in noisy.data_mut() {
            *v += dist.sample(&mut rng) as f32;
        }
        let denoised = pca_project(&noisy, k).map_err(|e| e.to_string())?;
        let before = evaluate(&noisy, &self.cube).map_err(|e| e.to_string())?;
        let after = evaluate(&denoised, &self.cube).map_err(|e| e.to_string())?;
        Ok(DenoiseResult {
            noisy_rmse: before.rmse,
            noisy_sam_deg: before.sam_deg,
            denoised_rmse: after.rmse,
            denoised_sam_deg: after.sam_deg,
        })
    }
}

fn js<T: Serialize>(v: Result<T, String>) -> Result<JsValue, JsError> {
    let v = v.map_err(|e| JsError::new(&e))?;
    let text = serde_json::to_string(&v).map_err(|e| JsError::new(&e.to_string()))?;
    Ok(JsValue::from_str(&text))
}

#[wasm_bindgen]
impl Scene {
    #[wasm_bindgen(constructor)]
    pub fn new(seed: u32, size: u32, endmembers: u32) -> Result<Scene, JsError> {
        Scene::generate(seed as u64, size as usize, endmembers as usize).map_err(|e| JsError::new(&e))
    }

    pub fn width(&self) -> u32 {
        self.cube.width() as u32
    }

    pub fn height(&self) -> u32 {
        self.cube.height() as u32
    }

    pub fn wavelengths(&self) -> Vec<f64> {
        self.cube.wavelengths().to_vec()
    }

    /// RGBA bytes of the simulated camera image.
    pub fn rgb(&self) -> Result<Vec<u8>, JsError> {
        self.render().map_err(|e| JsError::new(&e))
    }

    pub fn spectrum(&self, x: u32, y: u32) -> Result<Vec<f64>, JsError> {
        self.spectrum_at(x as usize, y as usize).map_err(|e| JsError::new(&e))
    }

    /// JSON `{endmembers, angles_deg, abundance_rgba}`.
    pub fn unmix(&self, k: u32, seed: u32) -> Result<JsValue, JsError> {
        js(self.unmix_scene(k as usize, seed as u64))
    }

    /// JSON with RMSE and SAM before and after PCA projection.
    pub fn denoise_metrics(&self, noise: f64, k: u32, seed: u32) -> Result<JsValue, JsError> {
        js(self.denoise(noise, k as usize, seed as u64))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_is_opaque_rgba() {
        let s = Scene::generate(1, 16, 3).unwrap();
        let img = s.render().unwrap();
        assert_eq!(img.len(), 4 * 256);
        assert!(img.chunks(4).all(|p| p[3] == 255));
        assert!(img.chunks(4).any(|p| p[0] > 0));
    }

    #[test]
    fn unmixing_finds_the_materials() {
        let s = Scene::generate(3, 48, 3).unwrap();
        let r = s.unmix_scene(3, 0).unwrap();
        assert_eq!(r.endmembers.len(), 3);
        assert!(r.angles_deg.iter().all(|&a| a < 5.0), "{:?}", r.angles_deg);
    }

    #[test]
    fn projection_reduces_noise() {
        let s = Scene::generate(5, 32, 4).unwrap();
        let r = s.denoise(0.02, 4, 9).unwrap();
        assert!(r.denoised_rmse < r.noisy_rmse);
    }

    #[test]
    fn bad_inputs_are_errors() {
        assert!(Scene::generate(0, 4, 3).is_err());
        let s = Scene::generate(0, 16, 3).unwrap();
        assert!(s.spectrum_at(16, 0).is_err());
        assert!(s.unmix_scene(1, 0).is_err());
    }
}
