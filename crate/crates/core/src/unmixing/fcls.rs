use rayon::prelude::*;

use super::linalg::{lstsq_columns, nnls, Matrix};
use super::Endmembers;
use crate::data::HsiCube;
use crate::error::{Error, Result};

/// Per-pixel abundance vectors stored as `k` maps of `height × width`.
#[derive(Clone, Debug, PartialEq)]
pub struct AbundanceMaps {
    pub k: usize,
    pub height: usize,
    pub width: usize,
    /// `data[j·H·W + p]` is the abundance of endmember `j` at pixel `p`.
    pub data: Vec<f64>,
}

impl AbundanceMaps {
    pub fn pixel(&self, p: usize) -> Vec<f64> {
        let n = self.height * self.width;
        (0..self.k).map(|j| self.data[j * n + p]).collect()
    }

    /// The maps as a cube whose "bands" are endmember indices.
    pub fn to_cube(&self) -> Result<HsiCube> {
        let mut cube = HsiCube::new(
            self.height,
            self.width,
            (0..self.k).map(|j| j as f64).collect(),
            self.data.iter().map(|&v| v as f32).collect(),
            1.0,
        )?;
        cube.metadata.insert("axis".into(), "endmember".into());
        Ok(cube)
    }
}

/// Endmember matrix with the weighted sum-to-one row appended.
struct Augmented {
    e: Matrix,
    a: Matrix,
    delta: f64,
    col_norm_max: f64,
}

impl Augmented {
    fn new(e: &Matrix) -> Result<Self> {
        let (bands, k) = (e.rows, e.cols);
        let all: Vec<usize> = (0..k).collect();
        if k == 0 || lstsq_columns(e, &all, &vec![0.0; bands]).is_none() {
            return Err(Error::Input("endmember matrix is not of full column rank".into()));
        }
        let norms: Vec<f64> = (0..k)
            .map(|j| (0..bands).map(|b| e[(b, j)].powi(2)).sum::<f64>().sqrt())
            .collect();
        let mean_norm = norms.iter().sum::<f64>() / k as f64;
        let col_norm_max = norms.iter().cloned().fold(0.0, f64::max);
        let delta = 1e3 * mean_norm;
        let mut a = Matrix::zeros(bands + 1, k);
        a.data[..bands * k].copy_from_slice(&e.data);
        a.data[bands * k..].fill(delta);
        Ok(Self {
            e: e.clone(),
            a,
            delta,
            col_norm_max,
        })
    }

    fn solve(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut b = Vec::with_capacity(x.len() + 1);
        b.extend_from_slice(x);
        b.push(self.delta);
        let a = nnls(&self.a, &b)?;
        Ok(self.polish(x, a))
    }

    /// The weighted row only enforces `Σa = 1` up to `O(residual / δ²)`, and
    /// that slack can also misplace the boundary of the support. Starting
    /// from the rescaled weighted solution, an active-set loop with the
    /// equality imposed exactly moves to the true optimum.
    fn polish(&self, x: &[f64], a: Vec<f64>) -> Vec<f64> {
        let k = a.len();
        let total: f64 = a.iter().sum();
        if total <= 0.0 {
            return a;
        }
        let mut a: Vec<f64> = a.into_iter().map(|v| v / total).collect();
        let mut support: Vec<bool> = a.iter().map(|&v| v > 0.0).collect();
        let tol = 1e-12 * (1.0 + x.iter().map(|v| v * v).sum::<f64>().sqrt()) * self.col_norm_max;
        for _ in 0..10 * k * k + 10 {
            let s: Vec<usize> = (0..k).filter(|&j| support[j]).collect();
            let Some(z) = self.exact_on(&s, x) else {
                return a;
            };
            if s.iter().all(|&j| z[j] > 0.0) {
                a = z;
                // Lagrange multiplier from the support, then the most
                // violated optimality condition off it.
                let g = self.gradient(&a, x);
                let mu = -s.iter().map(|&j| g[j]).sum::<f64>() / s.len() as f64;
                let worst = (0..k)
                    .filter(|&j| !support[j])
                    .map(|j| (j, g[j] + mu))
                    .min_by(|p, q| p.1.total_cmp(&q.1));
                match worst {
                    Some((j, v)) if v < -tol => support[j] = true,
                    _ => return a,
                }
            } else {
                // Move towards z until the first support entry hits zero.
                let mut step = 1.0f64;
                for &j in &s {
                    if z[j] <= 0.0 {
                        step = step.min(a[j] / (a[j] - z[j]));
                    }
                }
                for &j in &s {
                    a[j] += step * (z[j] - a[j]);
                    if a[j] <= 1e-15 {
                        a[j] = 0.0;
                        support[j] = false;
                    }
                }
                if !support.iter().any(|&b| b) {
                    return a;
                }
            }
        }
        a
    }

    /// Minimiser of `‖E a − x‖²` with `Σa = 1` and `a` zero off `s`.
    fn exact_on(&self, s: &[usize], x: &[f64]) -> Option<Vec<f64>> {
        let (&pivot, rest) = s.split_last()?;
        let bands = self.e.rows;
        let mut out = vec![0.0; self.e.cols];
        if rest.is_empty() {
            out[pivot] = 1.0;
            return Some(out);
        }
        // Substituting a_pivot = 1 − Σ a_j leaves an unconstrained problem.
        let diffs: Vec<Vec<f64>> = rest
            .iter()
            .map(|&j| (0..bands).map(|b| self.e[(b, j)] - self.e[(b, pivot)]).collect())
            .collect();
        let rhs: Vec<f64> = (0..bands).map(|b| x[b] - self.e[(b, pivot)]).collect();
        let cols: Vec<usize> = (0..rest.len()).collect();
        let sol = lstsq_columns(&Matrix::from_columns(&diffs), &cols, &rhs)?;
        for (&j, v) in rest.iter().zip(&sol) {
            out[j] = *v;
        }
        out[pivot] = 1.0 - sol.iter().sum::<f64>();
        Some(out)
    }

    /// `Eᵀ(E a − x)`.
    fn gradient(&self, a: &[f64], x: &[f64]) -> Vec<f64> {
        let r: Vec<f64> = self.e.mul_vec(a).iter().zip(x).map(|(p, q)| p - q).collect();
        (0..self.e.cols)
            .map(|j| (0..self.e.rows).map(|b| self.e[(b, j)] * r[b]).sum())
            .collect()
    }
}

/// Fully constrained abundances (`a ≥ 0`, `Σa = 1`) of one spectrum against
/// the `bands × k` endmember matrix.
pub fn fcls_spectrum(e: &Matrix, x: &[f64]) -> Result<Vec<f64>> {
    if x.len() != e.rows {
        return Err(Error::shape(format!("{} bands against {}-band endmembers", x.len(), e.rows)));
    }
    Augmented::new(e)?.solve(x)
}

/// Solves `min ‖E a − x‖²` subject to `a ≥ 0` and `Σa = 1` at every pixel by
/// non-negative least squares on `E` stacked over the row `δ·1ᵀ = δ`, with
/// `δ` a thousand times the mean endmember norm, then refined on the
/// exact constraint set.
pub fn fcls_abundances(cube: &HsiCube, endmembers: &Endmembers) -> Result<AbundanceMaps> {
    if endmembers.bands() != cube.bands() {
        return Err(Error::shape(format!(
            "{}-band endmembers for a {}-band cube",
            endmembers.bands(),
            cube.bands()
        )));
    }
    let aug = Augmented::new(&endmembers.matrix())?;
    let (k, n) = (endmembers.k(), cube.pixels());
    let per_pixel: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|p| {
            let x: Vec<f64> = cube.spectrum(p).iter().map(|&v| v as f64).collect();
            aug.solve(&x)
        })
        .collect::<Result<_>>()?;
    let mut data = vec![0.0; k * n];
    for (p, a) in per_pixel.iter().enumerate() {
        for j in 0..k {
            data[j * n + p] = a[j];
        }
    }
    Ok(AbundanceMaps {
        k,
        height: cube.height(),
        width: cube.width(),
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::super::testdata::{simplex_cube, spectra};
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn endmember_column_gives_unit_vector() {
        let e = Matrix::from_columns(&spectra(3, 10));
        for j in 0..3 {
            let a = fcls_spectrum(&e, &e.column(j)).unwrap();
            for (i, v) in a.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((v - want).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn two_endmember_mixture() {
        let cols = spectra(2, 8);
        let e = Matrix::from_columns(&cols);
        let x: Vec<f64> = (0..8).map(|b| 0.3 * cols[0][b] + 0.7 * cols[1][b]).collect();
        let a = fcls_spectrum(&e, &x).unwrap();
        assert!((a[0] - 0.3).abs() < 1e-4 && (a[1] - 0.7).abs() < 1e-4);
    }

    #[test]
    fn feasible_mixtures_recovered() {
        let cols = spectra(5, 24);
        let (cube, truth) = simplex_cube(&cols, 6, 6, 8);
        let em = Endmembers::new(cube.wavelengths().to_vec(), cols).unwrap();
        let maps = fcls_abundances(&cube, &em).unwrap();
        for (p, t) in truth.iter().enumerate() {
            for (a, b) in maps.pixel(p).iter().zip(t) {
                assert!((a - b).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn constraints_hold_off_the_simplex() {
        let cols = spectra(4, 16);
        let e = Matrix::from_columns(&cols);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let x: Vec<f64> = (0..16).map(|_| rng.gen_range(-0.5..2.0)).collect();
            let a = fcls_spectrum(&e, &x).unwrap();
            assert!(a.iter().all(|&v| v >= -1e-9));
            assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn rank_deficient_rejected() {
        let e = Matrix::from_columns(&[vec![1.0, 2.0, 3.0], vec![2.0, 4.0, 6.0]]);
        assert!(matches!(fcls_spectrum(&e, &[1.0, 1.0, 1.0]), Err(Error::Input(_))));
    }
}
