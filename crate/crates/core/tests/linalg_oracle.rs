//! Dense routines checked against nalgebra.

use approx::assert_relative_eq;
use hypersr::unmixing::{lstsq_columns, symmetric_eigen, Matrix};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn to_na(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows, m.cols, &m.data)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn eigenvalues_match(n in 1usize..12, entries in prop::collection::vec(-2.0f64..2.0, 144)) {
        let mut a = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = entries[i * 12 + j];
                a[(i, j)] = v;
                a[(j, i)] = v;
            }
        }
        let (values, vectors) = symmetric_eigen(&a);
        let mut reference: Vec<f64> = to_na(&a).symmetric_eigen().eigenvalues.iter().cloned().collect();
        reference.sort_by(|x, y| y.partial_cmp(x).unwrap());
        for (v, r) in values.iter().zip(&reference) {
            assert_relative_eq!(*v, *r, epsilon = 1e-9, max_relative = 1e-9);
        }
        // A v = λ v for every returned pair.
        let na = to_na(&a);
        for (j, &l) in values.iter().enumerate() {
            let v = DVector::from_vec(vectors.column(j));
            let residual = (&na * &v - &v * l).norm();
            prop_assert!(residual < 1e-9, "pair {j}: residual {residual}");
        }
    }

    #[test]
    fn least_squares_matches_svd(rows in 4usize..20, entries in prop::collection::vec(-1.0f64..1.0, 80), rhs in prop::collection::vec(-1.0f64..1.0, 20)) {
        let cols = 3;
        let columns: Vec<Vec<f64>> = (0..cols).map(|j| entries[j * 20..j * 20 + rows].to_vec()).collect();
        let a = Matrix::from_columns(&columns);
        let b = &rhs[..rows];
        let na = to_na(&a);
        let svd = na.clone().svd(true, true);
        prop_assume!(svd.singular_values.min() > 1e-3);
        let reference = svd.solve(&DVector::from_column_slice(b), 1e-12).unwrap();
        let x = lstsq_columns(&a, &[0, 1, 2], b).unwrap();
        for (v, r) in x.iter().zip(reference.iter()) {
            assert_relative_eq!(*v, *r, epsilon = 1e-9, max_relative = 1e-8);
        }
    }
}
