use hypersr::data::{simulate_input, split_dataset, HsiCube, SpectralResponse, SplitMode};
use hypersr::metrics::{rmse_rel, sam_degrees};
use hypersr::network::{build_network, Mode, NetworkSpec};
use hypersr::tensor::{pixel_shuffle, pixel_unshuffle, Shape4, Tensor4};
use hypersr::unmixing::{fcls_spectrum, fit_pca_spectra, Matrix};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cube_from(h: usize, w: usize, bands: usize, seed: u64, lo: f32) -> HsiCube {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..h * w * bands).map(|_| rng.gen_range(lo..1.0)).collect();
    HsiCube::new(h, w, (0..bands).map(|b| 400.0 + 10.0 * b as f64).collect(), data, 1.0).unwrap()
}

fn combine(a: f32, x: &HsiCube, b: f32, y: &HsiCube) -> HsiCube {
    let data = x.data().iter().zip(y.data()).map(|(p, q)| a * p + b * q).collect();
    HsiCube::new(x.height(), x.width(), x.wavelengths().to_vec(), data, 1.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn simulation_is_linear(seed in any::<u64>(), a in -1.0f32..1.0, b in -1.0f32..1.0) {
        let srf = SpectralResponse::cie1964();
        let x = cube_from(5, 4, 31, seed, 0.0);
        let y = cube_from(5, 4, 31, seed ^ 0xabc, 0.0);
        let lhs = simulate_input(&combine(a, &x, b, &y), &srf).unwrap();
        let rhs = combine(a, &simulate_input(&x, &srf).unwrap(), b, &simulate_input(&y, &srf).unwrap());
        for (p, q) in lhs.data().iter().zip(rhs.data()) {
            prop_assert!((p - q).abs() < 1e-6, "{p} vs {q}");
        }
    }

    #[test]
    fn two_fold_split_partitions_ids(n in 2usize..40, seed in any::<u64>()) {
        let ids: Vec<String> = (0..n).map(|i| format!("img{i:02}")).collect();
        let folds = split_dataset(&ids, &SplitMode::TwoFold { seed }).unwrap();
        prop_assert_eq!(folds.len(), 2);
        let mut all: Vec<String> = folds[0].train.iter().chain(&folds[0].test).cloned().collect();
        all.sort();
        prop_assert_eq!(&all, &ids);
        prop_assert!(folds[0].train.iter().all(|id| !folds[0].test.contains(id)));
        prop_assert_eq!(&folds[0].train, &folds[1].test);
        prop_assert_eq!(&folds[0].test, &folds[1].train);
    }

    #[test]
    fn pixel_shuffle_round_trips(
        batch in 1usize..3, c in 1usize..4, r in 1usize..4, h in 1usize..6, w in 1usize..6, seed in any::<u64>()
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Tensor4::from_fn(Shape4::new(batch, c * r * r, h, w), |_, _, _, _| rng.gen_range(-1.0f32..1.0)).unwrap();
        prop_assert_eq!(pixel_unshuffle(&pixel_shuffle(&x, r).unwrap(), r).unwrap(), x.clone());
        let up = pixel_shuffle(&x, r).unwrap();
        prop_assert_eq!(pixel_shuffle(&pixel_unshuffle(&up, r).unwrap(), r).unwrap(), up);
    }

    #[test]
    fn sam_is_symmetric_and_scale_invariant(seed in any::<u64>(), scale in 0.01f32..100.0) {
        let p = cube_from(4, 4, 3, seed, 0.05);
        let g = cube_from(4, 4, 3, seed.wrapping_add(1), 0.05);
        let forward = sam_degrees(&p, &g).unwrap();
        prop_assert!((forward - sam_degrees(&g, &p).unwrap()).abs() < 1e-12);
        // Rescale each pixel of one argument by its own positive factor.
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 7);
        let factors: Vec<f32> = (0..16).map(|_| scale * rng.gen_range(0.5f32..2.0)).collect();
        let mut scaled = p.clone();
        let n = p.pixels();
        for (i, v) in scaled.data_mut().iter_mut().enumerate() {
            *v *= factors[i % n];
        }
        prop_assert!((sam_degrees(&scaled, &g).unwrap() - forward).abs() < 1e-4);
    }

    #[test]
    fn rmse_rel_joint_scale_invariance(seed in any::<u64>(), exp in -8i32..8) {
        let p = cube_from(4, 4, 3, seed, 0.0);
        let g = cube_from(4, 4, 3, seed.wrapping_mul(3), 0.1);
        let alpha = 2f32.powi(exp);
        let scale = |c: &HsiCube| combine(alpha, c, 0.0, c);
        let base = rmse_rel(&p, &g).unwrap();
        prop_assert!((rmse_rel(&scale(&p), &scale(&g)).unwrap() - base).abs() < 1e-12);
    }

    #[test]
    fn fcls_satisfies_constraints_and_beats_vertices(seed in any::<u64>(), k in 2usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bands = 12;
        let cols: Vec<Vec<f64>> = (0..k).map(|_| (0..bands).map(|_| rng.gen_range(0.0..1.0)).collect()).collect();
        let e = Matrix::from_columns(&cols);
        let x: Vec<f64> = (0..bands).map(|_| rng.gen_range(-0.5..1.5)).collect();
        let a = fcls_spectrum(&e, &x).unwrap();
        prop_assert!(a.iter().all(|&v| v >= -1e-9));
        prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        let objective = |a: &[f64]| -> f64 {
            e.mul_vec(a).iter().zip(&x).map(|(p, q)| (p - q).powi(2)).sum()
        };
        let best = objective(&a);
        for j in 0..k {
            let mut vertex = vec![0.0; k];
            vertex[j] = 1.0;
            prop_assert!(best <= objective(&vertex) + 1e-12);
        }
    }

    #[test]
    fn pca_projection_is_idempotent(seed in any::<u64>(), k in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (bands, n) = (8, 60);
        let x: Vec<f64> = (0..bands * n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let once = fit_pca_spectra(&x, bands).unwrap().reconstruct(&x, k).unwrap();
        let twice = fit_pca_spectra(&once, bands).unwrap().reconstruct(&once, k).unwrap();
        for (p, q) in once.iter().zip(&twice) {
            prop_assert!((p - q).abs() < 1e-8, "{p} vs {q}");
        }
    }
}

fn mini_spec() -> NetworkSpec {
    NetworkSpec {
        in_channels: 3,
        out_channels: 4,
        num_scales: 2,
        layers_per_block: 2,
        growth_filters: 4,
        stem_filters: 6,
        dropout_rate: 0.5,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    /// Shifting the input by 32 px shifts the output by 32 px away from the
    /// zero-padded borders.
    #[test]
    fn network_is_translation_equivariant(seed in any::<u64>()) {
        let (net, params) = build_network::<f64, _>(&mini_spec(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x51);
        let (h, w, shift) = (96, 160, 32);
        let wide = Tensor4::from_fn(Shape4::new(1, 3, h, w + shift), |_, _, _, _| rng.gen_range(0.0..1.0)).unwrap();
        let left = wide.crop(0, 0, h, w).unwrap();
        let right = wide.crop(0, shift, h, w).unwrap();
        let a = net.forward(&params, &left, &mut Mode::Eval).unwrap();
        let b = net.forward(&params, &right, &mut Mode::Eval).unwrap();
        // Comfortably wider than the receptive-field radius of this network.
        let margin = 48;
        let mut worst = 0.0f64;
        for c in 0..4 {
            for y in margin..h - margin {
                for x in margin + shift..w - margin {
                    worst = worst.max((a.get(0, c, y, x) - b.get(0, c, y, x - shift)).abs());
                }
            }
        }
        prop_assert!(worst < 1e-4, "max deviation {worst}");
    }
}
