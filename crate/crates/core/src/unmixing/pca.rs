use super::linalg::{symmetric_eigen, Matrix};
use super::cube_f64;
use crate::data::HsiCube;
use crate::error::{Error, Result};
use crate::tensor::Scalar;

/// Principal axes of a cube's pixel spectra.
#[derive(Clone, Debug)]
pub struct Pca {
    pub mean: Vec<f64>,
    /// Eigenvalues of the spectral covariance (normalized by the pixel
    /// count), descending.
    pub eigenvalues: Vec<f64>,
    /// Unit eigenvectors as columns, in the order of `eigenvalues`.
    pub components: Matrix,
}

/// Mean and covariance eigendecomposition of the cube's spectra.
pub fn fit_pca(cube: &HsiCube) -> Result<Pca> {
    fit_pca_spectra(&cube_f64(cube), cube.bands())
}

/// [`fit_pca`] on band-sequential 64-bit data (`x[b·n + p]`).
pub fn fit_pca_spectra(x: &[f64], bands: usize) -> Result<Pca> {
    if bands == 0 || x.is_empty() || x.len() % bands != 0 {
        return Err(Error::shape(format!("{} values do not split into {bands} bands", x.len())));
    }
    let n = x.len() / bands;
    let mut x = x.to_vec();
    let mean: Vec<f64> = (0..bands).map(|b| x[b * n..(b + 1) * n].iter().sum::<f64>() / n as f64).collect();
    for b in 0..bands {
        x[b * n..(b + 1) * n].iter_mut().for_each(|v| *v -= mean[b]);
    }
    let mut cov = Matrix::zeros(bands, bands);
    f64::gemm(
        bands,
        n,
        bands,
        1.0 / n as f64,
        &x,
        n as isize,
        1,
        &x,
        1,
        n as isize,
        0.0,
        &mut cov.data,
        bands as isize,
        1,
    );
    let (eigenvalues, components) = symmetric_eigen(&cov);
    Ok(Pca {
        mean,
        eigenvalues,
        components,
    })
}

impl Pca {
    /// Number of eigenvalues that are not negligible against the largest.
    pub fn rank(&self) -> usize {
        let top = self.eigenvalues.first().copied().unwrap_or(0.0);
        self.eigenvalues.iter().filter(|&&l| l > 1e-12 * top && l > 0.0).count()
    }

    /// Reconstructs every pixel from its first `k` principal coordinates.
    pub fn project(&self, cube: &HsiCube, k: usize) -> Result<HsiCube> {
        let recon = self.reconstruct(&cube_f64(cube), k)?;
        let mut out = HsiCube::new(
            cube.height(),
            cube.width(),
            cube.wavelengths().to_vec(),
            recon.iter().map(|&v| v as f32).collect(),
            cube.scale(),
        )?;
        out.metadata = cube.metadata.clone();
        Ok(out)
    }

    /// [`Pca::project`] on band-sequential 64-bit data.
    pub fn reconstruct(&self, x: &[f64], k: usize) -> Result<Vec<f64>> {
        let bands = self.mean.len();
        if x.len() % bands != 0 {
            return Err(Error::shape(format!("{} values do not split into {bands} bands", x.len())));
        }
        let n = x.len() / bands;
        let k = if k > self.rank() {
            log::warn!("requested {k} components but the data has rank {}; truncating", self.rank());
            self.rank()
        } else {
            k
        };
        let mut x = x.to_vec();
        for b in 0..bands {
            x[b * n..(b + 1) * n].iter_mut().for_each(|v| *v -= self.mean[b]);
        }
        // coords (k × n) = Vkᵀ (k × bands) · x (bands × n)
        let mut coords = vec![0.0; k * n];
        let v = &self.components.data;
        if k > 0 {
            f64::gemm(k, bands, n, 1.0, v, 1, bands as isize, &x, n as isize, 1, 0.0, &mut coords, n as isize, 1);
        }
        let mut recon = vec![0.0; bands * n];
        for b in 0..bands {
            recon[b * n..(b + 1) * n].fill(self.mean[b]);
        }
        if k > 0 {
            f64::gemm(bands, k, n, 1.0, v, bands as isize, 1, &coords, n as isize, 1, 1.0, &mut recon, n as isize, 1);
        }
        Ok(recon)
    }
}

/// Projects mean-centred spectra onto the top `k` covariance eigenvectors
/// and reconstructs them.
pub fn pca_project(cube: &HsiCube, k: usize) -> Result<HsiCube> {
    if k == 0 || k > cube.bands() {
        return Err(Error::Input(format!("k = {k} must lie in 1..={}", cube.bands())));
    }
    if cube.pixels() < k + 1 {
        return Err(Error::Input(format!("{} pixels are too few for {k} components", cube.pixels())));
    }
    fit_pca(cube)?.project(cube, k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::test_cube;

    fn sq_error(a: &HsiCube, b: &HsiCube) -> f64 {
        a.data().iter().zip(b.data()).map(|(&x, &y)| (x as f64 - y as f64).powi(2)).sum()
    }

    #[test]
    fn full_basis_reproduces_input() {
        let c = test_cube(6, 7, 5, 3);
        let r = pca_project(&c, 5).unwrap();
        assert!(c.data().iter().zip(r.data()).all(|(a, b)| (a - b).abs() < 1e-6));
    }

    #[test]
    fn discarded_energy_identity_and_idempotence() {
        let c = test_cube(10, 10, 6, 4);
        let pca = fit_pca(&c).unwrap();
        let r = pca.project(&c, 2).unwrap();
        let per_pixel = sq_error(&c, &r) / c.pixels() as f64;
        let discarded: f64 = pca.eigenvalues[2..].iter().sum();
        assert!((per_pixel - discarded).abs() < 1e-6);
        let twice = pca_project(&r, 2).unwrap();
        assert!(r.data().iter().zip(twice.data()).all(|(a, b)| ((a - b) as f64).abs() < 1e-6));
    }

    #[test]
    fn affine_subspace_is_exact() {
        // Spectra = m + s·u + t·v.
        let (h, w, bands) = (5, 6, 8);
        let n = h * w;
        let mut data = vec![0f32; n * bands];
        for p in 0..n {
            let (s, t) = ((p as f64 * 0.37).sin(), (p as f64 * 0.11).cos());
            for b in 0..bands {
                let bf = b as f64;
                data[b * n + p] = (1.0 + 0.1 * bf + s * (bf * 0.3).cos() + t * (0.5 - 0.05 * bf)) as f32;
            }
        }
        let c = HsiCube::new(h, w, (0..bands).map(|b| b as f64).collect(), data, 1.0).unwrap();
        let r = pca_project(&c, 3).unwrap();
        assert!(c.data().iter().zip(r.data()).all(|(a, b)| (a - b).abs() < 1e-6));
        assert_eq!(fit_pca(&c).unwrap().rank(), 2);
    }

    #[test]
    fn argument_checks() {
        let c = test_cube(2, 2, 5, 1);
        assert!(pca_project(&c, 0).is_err());
        assert!(pca_project(&c, 6).is_err());
        assert!(pca_project(&c, 4).is_err());
    }
}
