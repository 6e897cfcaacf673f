//! Linear mixing model tools: PCA projection, vertex component analysis and
//! fully constrained least-squares abundances.

mod fcls;
mod linalg;
mod pca;
mod vca;

pub use fcls::{fcls_abundances, fcls_spectrum, AbundanceMaps};
pub use linalg::{lstsq_columns, nnls, symmetric_eigen, Matrix};
pub use pca::{fit_pca, fit_pca_spectra, pca_project, Pca};
pub use vca::vca_extract;

use crate::data::HsiCube;
use crate::error::{Error, Result};

/// Endmember spectra, one column per material.
#[derive(Clone, Debug, PartialEq)]
pub struct Endmembers {
    pub wavelengths: Vec<f64>,
    /// `columns[j][b]` is band `b` of endmember `j`.
    pub columns: Vec<Vec<f64>>,
    /// Source pixel of each column when extracted from a cube.
    pub pixel_indices: Vec<usize>,
}

impl Endmembers {
    pub fn new(wavelengths: Vec<f64>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if columns.is_empty() {
            return Err(Error::Input("no endmembers".into()));
        }
        if let Some(j) = columns.iter().position(|c| c.len() != wavelengths.len()) {
            return Err(Error::shape(format!(
                "endmember {j} has {} bands, expected {}",
                columns[j].len(),
                wavelengths.len()
            )));
        }
        Ok(Self {
            wavelengths,
            columns,
            pixel_indices: Vec::new(),
        })
    }

    pub fn k(&self) -> usize {
        self.columns.len()
    }

    pub fn bands(&self) -> usize {
        self.wavelengths.len()
    }

    /// `bands × k` matrix.
    pub fn matrix(&self) -> Matrix {
        Matrix::from_columns(&self.columns)
    }

    /// `wavelength_nm,e1,...,ek` table.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["wavelength_nm".to_string()];
        header.extend((1..=self.k()).map(|j| format!("e{j}")));
        w.write_record(&header).expect("in-memory write");
        for (b, wl) in self.wavelengths.iter().enumerate() {
            let mut row = vec![wl.to_string()];
            row.extend(self.columns.iter().map(|c| c[b].to_string()));
            w.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
    }
}

/// Band-major `f64` copy of the cube: `out[b·N + p]`.
pub(crate) fn cube_f64(cube: &HsiCube) -> Vec<f64> {
    cube.data().iter().map(|&v| v as f64).collect()
}

/// Spectral angle between two vectors in degrees.
pub fn spectral_angle_deg(a: &[f64], b: &[f64]) -> f64 {
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let (mut diff, mut sum) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        diff += (x / na - y / nb).powi(2);
        sum += (x / na + y / nb).powi(2);
    }
    (2.0 * diff.sqrt().atan2(sum.sqrt())).to_degrees()
}

/// `x̂ = E·a` at every pixel.
pub fn lmm_reconstruct(e: &Endmembers, a: &AbundanceMaps, scale: f64) -> Result<HsiCube> {
    if a.k != e.k() {
        return Err(Error::shape(format!("{} abundance maps for {} endmembers", a.k, e.k())));
    }
    let n = a.height * a.width;
    let mut data = vec![0f32; e.bands() * n];
    for b in 0..e.bands() {
        for p in 0..n {
            let v: f64 = (0..a.k).map(|j| e.columns[j][b] * a.data[j * n + p]).sum();
            data[b * n + p] = v as f32;
        }
    }
    HsiCube::new(a.height, a.width, e.wavelengths.clone(), data, scale)
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_hot_abundances_copy_columns() {
        let e = Endmembers::new(vec![1.0, 2.0, 3.0], vec![vec![1.0, 2.0, 3.0], vec![0.5, 0.0, 4.0]]).unwrap();
        let a = AbundanceMaps {
            k: 2,
            height: 1,
            width: 2,
            data: vec![1.0, 0.0, 0.0, 1.0],
        };
        let c = lmm_reconstruct(&e, &a, 1.0).unwrap();
        assert_eq!(c.spectrum(0), vec![1.0, 2.0, 3.0]);
        assert_eq!(c.spectrum(1), vec![0.5, 0.0, 4.0]);
    }

    #[test]
    fn constant_abundances_give_constant_cube() {
        let e = Endmembers::new(vec![1.0, 2.0], vec![vec![1.0, 2.0], vec![3.0, 0.0], vec![2.0, 2.0]]).unwrap();
        let a = AbundanceMaps {
            k: 3,
            height: 2,
            width: 2,
            data: vec![1.0 / 3.0; 12],
        };
        let c = lmm_reconstruct(&e, &a, 1.0).unwrap();
        for p in 1..4 {
            assert_eq!(c.spectrum(p), c.spectrum(0));
        }
    }

    #[test]
    fn csv_layout() {
        let e = Endmembers::new(vec![400.0, 410.0], vec![vec![0.5, 1.0], vec![2.0, 0.25]]).unwrap();
        assert_eq!(e.to_csv(), "wavelength_nm,e1,e2\n400,0.5,2\n410,1,0.25\n");
    }

    #[test]
    fn angle_helper() {
        assert!((spectral_angle_deg(&[1.0, 1.0], &[1.0, 0.0]) - 45.0).abs() < 1e-12);
    }
}
