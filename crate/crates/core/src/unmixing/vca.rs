use rand::Rng;
use rand_distr::StandardNormal;

use super::linalg::{symmetric_eigen, Matrix};
use super::{cube_f64, spectral_angle_deg, Endmembers};
use crate::data::HsiCube;
use crate::error::{Error, Result};
use crate::tensor::Scalar;

/// Minimum pairwise spectral angle between extracted endmembers.
const MIN_SEPARATION_DEG: f64 = 0.1;

/// Top `d` eigenvectors of `scale · X Xᵀ` as a `bands × d` matrix, plus all
/// eigenvalues.
fn top_subspace(x: &[f64], bands: usize, n: usize, d: usize) -> (Matrix, Vec<f64>) {
    let mut c = Matrix::zeros(bands, bands);
    f64::gemm(bands, n, bands, 1.0 / n as f64, x, n as isize, 1, x, 1, n as isize, 0.0, &mut c.data, bands as isize, 1);
    let (values, vectors) = symmetric_eigen(&c);
    let mut u = Matrix::zeros(bands, d);
    for b in 0..bands {
        for j in 0..d {
            u[(b, j)] = vectors[(b, j)];
        }
    }
    (u, values)
}

/// `Uᵀ X` for `U` (bands × d) and `X` (bands × n), as a `d × n` row-major
/// buffer.
fn project(u: &Matrix, x: &[f64], n: usize) -> Vec<f64> {
    let (bands, d) = (u.rows, u.cols);
    let mut out = vec![0.0; d * n];
    f64::gemm(d, bands, n, 1.0, &u.data, 1, d as isize, x, n as isize, 1, 0.0, &mut out, n as isize, 1);
    out
}

/// Vertex component analysis.
///
/// The data are reduced to a `k`-dimensional signal subspace (a projective
/// projection at high SNR, a centred projection plus a constant coordinate
/// otherwise). Then, `k` times, a random direction orthogonal to the
/// endmembers found so far is drawn and the pixel with the largest absolute
/// projection onto it becomes the next endmember. Returned spectra are the
/// selected pixels of the input, clamped to be non-negative.
pub fn vca_extract<R: Rng + ?Sized>(cube: &HsiCube, k: usize, rng: &mut R) -> Result<Endmembers> {
    let (bands, n) = (cube.bands(), cube.pixels());
    if k < 2 {
        return Err(Error::Input(format!("k = {k}: at least two endmembers are required")));
    }
    if k > bands || k > n {
        return Err(Error::Input(format!("k = {k} exceeds the {bands} bands or {n} pixels")));
    }
    let x = cube_f64(cube);

    let (u_corr, corr_values) = top_subspace(&x, bands, n, k);
    if !(corr_values[k - 1] > 1e-10 * corr_values[0]) {
        return Err(Error::Extraction(format!(
            "k = {k} exceeds the numerical rank of the data"
        )));
    }

    // Signal-to-noise estimate from the centred subspace.
    let mean: Vec<f64> = (0..bands).map(|b| x[b * n..(b + 1) * n].iter().sum::<f64>() / n as f64).collect();
    let mut centred = x.clone();
    for b in 0..bands {
        centred[b * n..(b + 1) * n].iter_mut().for_each(|v| *v -= mean[b]);
    }
    let (u_cov, _) = top_subspace(&centred, bands, n, k);
    let xc = project(&u_cov, &centred, n);
    let p_y = x.iter().map(|v| v * v).sum::<f64>() / n as f64;
    let p_x = xc.iter().map(|v| v * v).sum::<f64>() / n as f64 + mean.iter().map(|v| v * v).sum::<f64>();
    let noise = p_y - p_x;
    let snr = if noise <= 1e-12 * p_y {
        f64::INFINITY
    } else {
        10.0 * ((p_x - k as f64 / bands as f64 * p_y) / noise).log10()
    };
    let threshold = 15.0 + 10.0 * (k as f64).log10();
    log::debug!("vca snr estimate {snr:.2} dB (threshold {threshold:.2})");

    // y: k × n reduced data.
    let y = if snr.is_nan() || snr < threshold {
        let d = k - 1;
        let mut y = vec![0.0; k * n];
        y[..d * n].copy_from_slice(&xc[..d * n]);
        let c = (0..n)
            .map(|p| (0..d).map(|j| xc[j * n + p].powi(2)).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        y[d * n..].fill(c);
        y
    } else {
        let mut y = project(&u_corr, &x, n);
        let u: Vec<f64> = (0..k).map(|j| y[j * n..(j + 1) * n].iter().sum::<f64>() / n as f64).collect();
        for p in 0..n {
            let denom: f64 = (0..k).map(|j| u[j] * y[j * n + p]).sum();
            if denom.abs() > 0.0 {
                for j in 0..k {
                    y[j * n + p] /= denom;
                }
            }
        }
        y
    };

    let column = |p: usize| -> Vec<f64> { (0..k).map(|j| y[j * n + p]).collect() };
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut indices = Vec::with_capacity(k);
    for i in 0..k {
        let spanning: Vec<Vec<f64>> = if i == 0 {
            let mut e = vec![0.0; k];
            e[k - 1] = 1.0;
            vec![e]
        } else {
            indices.iter().map(|&p| column(p)).collect()
        };
        basis.clear();
        for v in spanning {
            push_orthonormal(&mut basis, v);
        }
        let mut f: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
        for q in &basis {
            let dot: f64 = q.iter().zip(&f).map(|(a, b)| a * b).sum();
            f.iter_mut().zip(q).for_each(|(fv, qv)| *fv -= dot * qv);
        }
        let norm = f.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return Err(Error::Extraction("random direction collapsed onto the endmember span".into()));
        }
        let mut best = (0usize, f64::NEG_INFINITY);
        for p in 0..n {
            let v: f64 = (0..k).map(|j| f[j] * y[j * n + p]).sum::<f64>().abs() / norm;
            if v > best.1 {
                best = (p, v);
            }
        }
        indices.push(best.0);
    }

    let columns: Vec<Vec<f64>> = indices
        .iter()
        .map(|&p| (0..bands).map(|b| x[b * n + p].max(0.0)).collect())
        .collect();
    for a in 0..k {
        for b in a + 1..k {
            let angle = spectral_angle_deg(&columns[a], &columns[b]);
            if !(angle > MIN_SEPARATION_DEG) {
                return Err(Error::Extraction(format!(
                    "endmembers {a} and {b} are {angle:.4}° apart; the data do not support k = {k}"
                )));
            }
        }
    }
    let mut e = Endmembers::new(cube.wavelengths().to_vec(), columns)?;
    e.pixel_indices = indices;
    Ok(e)
}

fn push_orthonormal(basis: &mut Vec<Vec<f64>>, mut v: Vec<f64>) {
    for q in basis.iter() {
        let dot: f64 = q.iter().zip(&v).map(|(a, b)| a * b).sum();
        v.iter_mut().zip(q).for_each(|(x, qv)| *x -= dot * qv);
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 1e-12 {
        v.iter_mut().for_each(|x| *x /= norm);
        basis.push(v);
    }
}
