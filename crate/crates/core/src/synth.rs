//! Synthetic scenes with known structure, for tests, demos and sanity runs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::HsiCube;
use crate::error::{Error, Result};

/// 31 bands from 400 to 700 nm in 10 nm steps.
pub fn visible_wavelengths() -> Vec<f64> {
    (0..31).map(|b| 400.0 + 10.0 * b as f64).collect()
}

/// `count` smooth, strictly positive spectra over `wavelengths`: a baseline
/// plus two Gaussian bumps at random centres.
pub fn random_spectra(count: usize, wavelengths: &[f64], rng: &mut impl Rng) -> Vec<Vec<f64>> {
    let (lo, hi) = (wavelengths[0], wavelengths[wavelengths.len() - 1]);
    let span = (hi - lo).max(1.0);
    (0..count)
        .map(|_| {
            let base = rng.gen_range(0.05..0.2);
            let bumps: Vec<(f64, f64, f64)> = (0..2)
                .map(|_| (rng.gen_range(lo..=hi), rng.gen_range(0.08..0.3) * span, rng.gen_range(0.3..1.0)))
                .collect();
            wavelengths
                .iter()
                .map(|&l| base + bumps.iter().map(|(c, w, a)| a * (-((l - c) / w).powi(2)).exp()).sum::<f64>())
                .collect()
        })
        .collect()
}

/// Smooth non-negative field in `[0, 1]` built from a few random Gaussian
/// blobs and a low-frequency wave.
fn smooth_field(h: usize, w: usize, rng: &mut impl Rng) -> Vec<f64> {
    let blobs: Vec<(f64, f64, f64)> = (0..4)
        .map(|_| {
            (
                rng.gen_range(0.0..h as f64),
                rng.gen_range(0.0..w as f64),
                rng.gen_range(0.1..0.35) * h.max(w) as f64,
            )
        })
        .collect();
    let (fy, fx, phase) = (rng.gen_range(0.5..3.0), rng.gen_range(0.5..3.0), rng.gen_range(0.0..6.3));
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let (yf, xf) = (y as f64, x as f64);
            let blob: f64 = blobs
                .iter()
                .map(|(cy, cx, r)| (-((yf - cy).powi(2) + (xf - cx).powi(2)) / (2.0 * r * r)).exp())
                .sum();
            let wave = 0.5 + 0.5 * (fy * yf / h as f64 * 6.283 + fx * xf / w as f64 * 6.283 + phase).sin();
            out.push(0.2 * wave + 0.8 * blob.min(1.0));
        }
    }
    out
}

/// Cube whose every spectrum is a non-negative combination of `basis`
/// spectra, with smoothly varying coefficients.
pub fn linear_model_cube(h: usize, w: usize, basis: &[Vec<f64>], wavelengths: &[f64], seed: u64) -> Result<HsiCube> {
    if basis.is_empty() || basis.iter().any(|b| b.len() != wavelengths.len()) {
        return Err(Error::Input("basis spectra must match the wavelength grid".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fields: Vec<Vec<f64>> = basis.iter().map(|_| smooth_field(h, w, &mut rng)).collect();
    let n = h * w;
    let bands = wavelengths.len();
    // Keep values comfortably inside the unit range.
    let peak = basis.iter().map(|b| b.iter().cloned().fold(0.0, f64::max)).sum::<f64>().max(1e-12);
    let mut data = vec![0f32; bands * n];
    for b in 0..bands {
        for p in 0..n {
            let v: f64 = basis.iter().zip(&fields).map(|(s, f)| s[b] * f[p]).sum();
            data[b * n + p] = (0.9 * v / peak) as f32;
        }
    }
    HsiCube::new(h, w, wavelengths.to_vec(), data, 1.0)
}

/// Cube of random convex mixtures of `endmembers`, with the first `k`
/// pixels pure. Returns the cube and the generating abundances per pixel.
pub fn simplex_cube(endmembers: &[Vec<f64>], h: usize, w: usize, wavelengths: &[f64], seed: u64) -> Result<(HsiCube, Vec<Vec<f64>>)> {
    let k = endmembers.len();
    let n = h * w;
    if k == 0 || n < k || endmembers.iter().any(|e| e.len() != wavelengths.len()) {
        return Err(Error::Input("endmembers must match the grid and fit in the image".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let abundances: Vec<Vec<f64>> = (0..n)
        .map(|p| {
            if p < k {
                (0..k).map(|j| if j == p { 1.0 } else { 0.0 }).collect()
            } else {
                let raw: Vec<f64> = (0..k).map(|_| -rng.gen_range(1e-9f64..1.0).ln()).collect();
                let s: f64 = raw.iter().sum();
                raw.iter().map(|v| v / s).collect()
            }
        })
        .collect();
    let bands = wavelengths.len();
    let mut data = vec![0f32; bands * n];
    for (p, a) in abundances.iter().enumerate() {
        for b in 0..bands {
            data[b * n + p] = a.iter().zip(endmembers).map(|(c, e)| c * e[b]).sum::<f64>() as f32;
        }
    }
    Ok((HsiCube::new(h, w, wavelengths.to_vec(), data, 1.0)?, abundances))
}

/// Spatially smooth convex mixtures of `endmembers`: each abundance map is a
/// sharpened random field, normalized to sum to one, so materials tend to
/// dominate their own regions.
pub fn smooth_simplex_cube(
    endmembers: &[Vec<f64>],
    h: usize,
    w: usize,
    wavelengths: &[f64],
    seed: u64,
) -> Result<(HsiCube, Vec<Vec<f64>>)> {
    if endmembers.is_empty() || endmembers.iter().any(|e| e.len() != wavelengths.len()) {
        return Err(Error::Input("endmembers must match the wavelength grid".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Each field is stretched to [0, 1] so it peaks somewhere.
    let fields: Vec<Vec<f64>> = endmembers
        .iter()
        .map(|_| {
            let f = smooth_field(h, w, &mut rng);
            let lo = f.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = f.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            f.iter().map(|v| (v - lo) / (hi - lo).max(1e-12)).collect()
        })
        .collect();
    let n = h * w;
    let abundances: Vec<Vec<f64>> = (0..n)
        .map(|p| {
            let raw: Vec<f64> = fields.iter().map(|f| (f[p] + 1e-3).powi(12)).collect();
            let total: f64 = raw.iter().sum();
            raw.iter().map(|v| v / total).collect()
        })
        .collect();
    let bands = wavelengths.len();
    let mut data = vec![0f32; bands * n];
    for (p, a) in abundances.iter().enumerate() {
        for b in 0..bands {
            data[b * n + p] = a.iter().zip(endmembers).map(|(c, e)| c * e[b]).sum::<f64>() as f32;
        }
    }
    Ok((HsiCube::new(h, w, wavelengths.to_vec(), data, 1.0)?, abundances))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_model_cube_is_in_range_and_low_rank() {
        let wl = visible_wavelengths();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let basis = random_spectra(3, &wl, &mut rng);
        let c = linear_model_cube(16, 16, &basis, &wl, 1).unwrap();
        assert!(c.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        let pca = crate::unmixing::fit_pca(&c).unwrap();
        let total: f64 = pca.eigenvalues.iter().sum();
        assert!(pca.eigenvalues[3..].iter().sum::<f64>() < 1e-9 * total);
    }

    #[test]
    fn smooth_simplex_sums_to_one() {
        let wl = visible_wavelengths();
        let e = random_spectra(4, &wl, &mut ChaCha8Rng::seed_from_u64(8));
        let (c, a) = smooth_simplex_cube(&e, 20, 24, &wl, 1).unwrap();
        assert_eq!((c.height(), c.width(), a.len()), (20, 24, 480));
        assert!(a.iter().all(|v| (v.iter().sum::<f64>() - 1.0).abs() < 1e-12 && v.iter().all(|&x| x >= 0.0)));
        // Sharpening leaves each material dominant somewhere.
        for j in 0..4 {
            assert!(a.iter().map(|v| v[j]).fold(0.0, f64::max) > 0.5, "endmember {j}");
        }
    }

    #[test]
    fn simplex_cube_has_pure_pixels() {
        let wl = visible_wavelengths();
        let e = random_spectra(3, &wl, &mut ChaCha8Rng::seed_from_u64(2));
        let (c, a) = simplex_cube(&e, 4, 4, &wl, 3).unwrap();
        assert_eq!(a[1], vec![0.0, 1.0, 0.0]);
        assert!((c.spectrum(2)[5] as f64 - e[2][5]).abs() < 1e-6);
        assert!(a.iter().all(|v| (v.iter().sum::<f64>() - 1.0).abs() < 1e-12));
    }
}
