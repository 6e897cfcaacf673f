//! Self-checks against independent oracles: a gradient check of the network,
//! naive-loop versions of every tensor kernel, closed-form metric cases and
//! synthetic unmixing problems with known answers.

use std::fmt::Write;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{grad_check, GradCheckConfig};
use crate::data::HsiCube;
use crate::error::{Error, Result};
use crate::metrics::{rmse_8bit, rmse_rel, sam_degrees};
use crate::network::{build_network, NetworkSpec, RegressionObjective};
use crate::synth::{random_spectra, simplex_cube, visible_wavelengths};
use crate::tensor::{
    concat_channels, conv2d_raw, conv2d_raw_backward, max_pool2x2, pixel_shuffle, pixel_unshuffle, KernelRef, Shape4,
    Tensor4,
};
use crate::unmixing::{fcls_abundances, fcls_spectrum, fit_pca, spectral_angle_deg, vca_extract, Endmembers, Matrix};

/// Outcome of one named check.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub measured: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    /// Passes when `measured < tolerance`.
    fn below(name: &'static str, measured: f64, tolerance: f64, detail: impl Into<String>) -> Self {
        Self {
            name,
            measured,
            tolerance,
            passed: measured < tolerance,
            detail: detail.into(),
        }
    }

    fn failed(name: &'static str, tolerance: f64, err: &Error) -> Self {
        Self {
            name,
            measured: f64::NAN,
            tolerance,
            passed: false,
            detail: err.to_string(),
        }
    }
}

/// Deliberate defects used to prove that the checks can fail.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fault {
    /// Flip the sign of one kernel weight before the convolution under test.
    CorruptKernel,
}

impl FromStr for Fault {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "corrupt-kernel" => Ok(Fault::CorruptKernel),
            other => Err(Error::Config(format!("unknown fault `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct VerifyOptions {
    pub seed: u64,
    pub fault: Option<Fault>,
}

type Check = (&'static str, f64, fn(&VerifyOptions) -> Result<CheckResult>);

const CHECKS: &[Check] = &[
    ("grad_check", 1e-5, check_gradients),
    ("conv_oracle", 1e-5, check_conv),
    ("pool_oracle", 0.5, check_pool),
    ("shuffle_oracle", 0.5, check_shuffle),
    ("concat_oracle", 0.5, check_concat),
    ("metric_sam", 1e-9, check_sam),
    ("metric_rmse", 1e-9, check_rmse),
    ("metric_rmse_rel_scale", 1e-12, check_rmse_rel_scale),
    ("metric_clipping", 1e-12, check_clipping),
    ("vca_recovery", 0.1, check_vca),
    ("fcls_recovery", 1e-4, check_fcls_recovery),
    ("fcls_constraints", 1e-6, check_fcls_constraints),
    ("fcls_enumeration", 1e-8, check_fcls_enumeration),
    ("pca_full_basis", 1e-6, check_pca_full),
    ("pca_energy", 1e-6, check_pca_energy),
];

/// Names of all checks, in execution order.
pub fn check_names() -> Vec<&'static str> {
    CHECKS.iter().map(|c| c.0).collect()
}

/// Runs every check; errors inside a check count as failures.
pub fn run_checks(opts: &VerifyOptions) -> Vec<CheckResult> {
    CHECKS
        .iter()
        .map(|(name, tol, f)| f(opts).unwrap_or_else(|e| CheckResult::failed(name, *tol, &e)))
        .collect()
}

/// Runs the single check called `name`.
pub fn run_check(name: &str, opts: &VerifyOptions) -> Result<CheckResult> {
    let (name, tol, f) = CHECKS
        .iter()
        .find(|c| c.0 == name)
        .ok_or_else(|| Error::Config(format!("unknown check `{name}`")))?;
    Ok(f(opts).unwrap_or_else(|e| CheckResult::failed(name, *tol, &e)))
}

/// `check,measured,tolerance,status,detail` table.
pub fn report_csv(results: &[CheckResult]) -> String {
    let mut out = String::from("check,measured,tolerance,status,detail\n");
    for r in results {
        let status = if r.passed { "PASS" } else { "FAIL" };
        let detail = r.detail.replace('"', "'");
        writeln!(out, "{},{:e},{:e},{status},\"{detail}\"", r.name, r.measured, r.tolerance).expect("string write");
    }
    out
}

fn check_gradients(opts: &VerifyOptions) -> Result<CheckResult> {
    let spec = NetworkSpec {
        in_channels: 3,
        out_channels: 5,
        num_scales: 2,
        layers_per_block: 2,
        growth_filters: 4,
        stem_filters: 6,
        dropout_rate: 0.5,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let (net, mut params) = build_network::<f64, _>(&spec, &mut rng)?;
    let mut random = |c| Tensor4::from_fn(Shape4::new(2, c, 16, 16), |_, _, _, _| rng.gen_range(-1.0..1.0));
    let objective = RegressionObjective {
        network: &net,
        input: random(3)?,
        target: random(5)?,
        l2_coeff: 1e-3,
    };
    let cfg = GradCheckConfig {
        seed: opts.seed,
        ..GradCheckConfig::default()
    };
    let report = grad_check(&objective, &mut params, &cfg)?;
    let mut result = CheckResult::below(
        "grad_check",
        report.max_rel_error,
        cfg.tolerance,
        format!("{} parameters compared, {} skipped at kinks", report.checked, report.skipped),
    );
    if report.checked < 200 {
        result.passed = false;
        result.detail.push_str("; fewer than 200 parameters compared");
    }
    Ok(result)
}

fn random_tensor(rng: &mut ChaCha8Rng, shape: Shape4) -> Result<Tensor4<f32>> {
    Tensor4::from_fn(shape, |_, _, _, _| rng.gen_range(-1.0f32..1.0))
}

/// Direct six-fold loop: output, input gradient and kernel gradient in f64.
#[allow(clippy::type_complexity)]
pub fn naive_conv(
    x: &Tensor4<f32>,
    w: &Tensor4<f32>,
    bias: &[f32],
    pad: usize,
    grad_out: &Tensor4<f32>,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let xs = x.shape();
    let ws = w.shape();
    let (oh, ow) = (xs.height + 2 * pad + 1 - ws.height, xs.width + 2 * pad + 1 - ws.width);
    let mut y = vec![0.0; xs.batch * ws.batch * oh * ow];
    let mut gx = vec![0.0; xs.len()];
    let mut gw = vec![0.0; ws.len()];
    for b in 0..xs.batch {
        for o in 0..ws.batch {
            for i in 0..oh {
                for j in 0..ow {
                    let yi = ((b * ws.batch + o) * oh + i) * ow + j;
                    let g = grad_out.data()[yi] as f64;
                    let mut acc = bias[o] as f64;
                    for c in 0..xs.channels {
                        for u in 0..ws.height {
                            for v in 0..ws.width {
                                let (r, s) = (i + u, j + v);
                                if r < pad || s < pad || r - pad >= xs.height || s - pad >= xs.width {
                                    continue;
                                }
                                let xi = x.offset(b, c, r - pad, s - pad);
                                let wi = w.offset(o, c, u, v);
                                acc += w.data()[wi] as f64 * x.data()[xi] as f64;
                                gx[xi] += w.data()[wi] as f64 * g;
                                gw[wi] += x.data()[xi] as f64 * g;
                            }
                        }
                    }
                    y[yi] = acc;
                }
            }
        }
    }
    (y, gx, gw)
}

fn scaled_error(got: &[f32], want: &[f64]) -> f64 {
    got.iter()
        .zip(want)
        .map(|(&g, &w)| (g as f64 - w).abs() / w.abs().max(1.0))
        .fold(0.0, f64::max)
}

fn check_conv(opts: &VerifyOptions) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0xc0);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let size = if rng.gen_bool(0.5) { 3 } else { 1 };
        let xs = Shape4::new(rng.gen_range(1..=2), rng.gen_range(1..=5), rng.gen_range(3..=11), rng.gen_range(3..=11));
        let out_ch = rng.gen_range(1..=5);
        let x = random_tensor(&mut rng, xs)?;
        let w = random_tensor(&mut rng, Shape4::new(out_ch, xs.channels, size, size))?;
        let bias: Vec<f32> = (0..out_ch).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let pad = size / 2;
        let g = random_tensor(&mut rng, Shape4::new(xs.batch, out_ch, xs.height, xs.width))?;
        let (ey, egx, egw) = naive_conv(&x, &w, &bias, pad, &g);

        let mut used = w.data().to_vec();
        if opts.fault == Some(Fault::CorruptKernel) {
            used[0] = -used[0] - 0.5;
        }
        let k = KernelRef {
            weight: &used,
            bias: &bias,
            out_ch,
            in_ch: xs.channels,
            kh: size,
            kw: size,
        };
        let y = conv2d_raw(&x, k, pad)?;
        let mut gw = vec![0f32; used.len()];
        let mut gb = vec![0f32; out_ch];
        let gx = conv2d_raw_backward(&x, k, pad, &g, &mut gw, &mut gb, true)?.expect("requested");
        worst = worst
            .max(scaled_error(y.data(), &ey))
            .max(scaled_error(gx.data(), &egx))
            .max(scaled_error(&gw, &egw));
    }
    Ok(CheckResult::below(
        "conv_oracle",
        worst,
        1e-5,
        "100 random shapes; forward, input and kernel gradients; error / max(1, |reference|)",
    ))
}

fn check_pool(opts: &VerifyOptions) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x90);
    let mut mismatches = 0usize;
    for _ in 0..100 {
        let s = Shape4::new(rng.gen_range(1..=2), rng.gen_range(1..=4), 2 * rng.gen_range(1..=6), 2 * rng.gen_range(1..=6));
        // Coarse values make ties common.
        let x = Tensor4::from_fn(s, |_, _, _, _| rng.gen_range(0..4) as f32)?;
        let (y, idx) = max_pool2x2(&x)?;
        for b in 0..s.batch {
            for c in 0..s.channels {
                for i in 0..s.height / 2 {
                    for j in 0..s.width / 2 {
                        let mut best = (f32::NEG_INFINITY, 0usize);
                        for (u, v) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                            let val = x.get(b, c, 2 * i + u, 2 * j + v);
                            if val > best.0 {
                                best = (val, x.offset(b, c, 2 * i + u, 2 * j + v));
                            }
                        }
                        let oi = y.offset(b, c, i, j);
                        if y.data()[oi] != best.0 || idx.winners()[oi] as usize != best.1 {
                            mismatches += 1;
                        }
                    }
                }
            }
        }
    }
    Ok(CheckResult::below("pool_oracle", mismatches as f64, 0.5, "100 random shapes; values and winner indices must match exactly"))
}

fn check_shuffle(opts: &VerifyOptions) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x5f);
    let mut mismatches = 0usize;
    for _ in 0..100 {
        let r = rng.gen_range(1..=3);
        let s = Shape4::new(rng.gen_range(1..=2), r * r * rng.gen_range(1..=3), rng.gen_range(1..=6), rng.gen_range(1..=6));
        let x = random_tensor(&mut rng, s)?;
        let y = pixel_shuffle(&x, r)?;
        let c_out = s.channels / (r * r);
        for b in 0..s.batch {
            for c in 0..c_out {
                for h in 0..s.height * r {
                    for w in 0..s.width * r {
                        let src = x.get(b, c * r * r + (h % r) * r + (w % r), h / r, w / r);
                        if y.get(b, c, h, w) != src {
                            mismatches += 1;
                        }
                    }
                }
            }
        }
        if pixel_unshuffle(&y, r)? != x {
            mismatches += 1;
        }
    }
    Ok(CheckResult::below("shuffle_oracle", mismatches as f64, 0.5, "100 random shapes; shuffle values and unshuffle round trip exact"))
}

fn check_concat(opts: &VerifyOptions) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0xcc);
    let mut mismatches = 0usize;
    for _ in 0..100 {
        let (b, h, w) = (rng.gen_range(1..=2), rng.gen_range(1..=6), rng.gen_range(1..=6));
        let parts: Vec<Tensor4<f32>> = (0..rng.gen_range(1..=4))
            .map(|_| {
                let c = rng.gen_range(1..=3);
                random_tensor(&mut rng, Shape4::new(b, c, h, w))
            })
            .collect::<Result<_>>()?;
        let refs: Vec<&Tensor4<f32>> = parts.iter().collect();
        let y = concat_channels(&refs)?;
        let mut c0 = 0;
        for p in &parts {
            let s = p.shape();
            for bi in 0..b {
                for c in 0..s.channels {
                    for i in 0..h {
                        for j in 0..w {
                            if y.get(bi, c0 + c, i, j) != p.get(bi, c, i, j) {
                                mismatches += 1;
                            }
                        }
                    }
                }
            }
            c0 += s.channels;
        }
        if y.shape().channels != c0 {
            mismatches += 1;
        }
    }
    Ok(CheckResult::below("concat_oracle", mismatches as f64, 0.5, "100 random shapes; exact"))
}

fn cube(h: usize, w: usize, bands: usize, data: Vec<f32>, scale: f64) -> Result<HsiCube> {
    HsiCube::new(h, w, (0..bands).map(|b| 400.0 + 10.0 * b as f64).collect(), data, scale)
}

fn check_sam(_: &VerifyOptions) -> Result<CheckResult> {
    let g = cube(1, 1, 2, vec![1.0, 1.0], 1.0)?;
    let p = cube(1, 1, 2, vec![1.0, 0.0], 1.0)?;
    let err = (sam_degrees(&p, &g)? - 45.0).abs();
    Ok(CheckResult::below("metric_sam", err, 1e-9, "angle between (1,1) and (1,0) is 45 degrees"))
}

fn check_rmse(_: &VerifyOptions) -> Result<CheckResult> {
    let g = cube(3, 3, 4, (0..36).map(|i| 20.0 + 5.0 * i as f32).collect(), 255.0)?;
    let p = cube(3, 3, 4, g.data().iter().map(|v| v + 3.0).collect(), 255.0)?;
    let err = (rmse_8bit(&p, &g)? - 3.0).abs();
    Ok(CheckResult::below("metric_rmse", err, 1e-9, "constant offset of 3 on the 8-bit scale"))
}

fn check_rmse_rel_scale(opts: &VerifyOptions) -> Result<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x7e);
    let g: Vec<f32> = (0..48).map(|_| rng.gen_range(0.1..1.0)).collect();
    let p: Vec<f32> = (0..48).map(|_| rng.gen_range(0.0..1.2)).collect();
    let base = rmse_rel(&cube(4, 4, 3, p.clone(), 1.0)?, &cube(4, 4, 3, g.clone(), 1.0)?)?;
    let mut worst = 0.0f64;
    for alpha in [0.25f32, 2.0, 8.0, 1024.0] {
        let scaled = rmse_rel(
            &cube(4, 4, 3, p.iter().map(|v| v * alpha).collect(), 1.0)?,
            &cube(4, 4, 3, g.iter().map(|v| v * alpha).collect(), 1.0)?,
        )?;
        worst = worst.max((scaled - base).abs());
    }
    Ok(CheckResult::below("metric_rmse_rel_scale", worst, 1e-12, "joint rescaling by powers of two"))
}

fn check_clipping(_: &VerifyOptions) -> Result<CheckResult> {
    let g = cube(1, 4, 1, vec![0.0, 0.5, 1.0, 0.25], 1.0)?;
    let wild = cube(1, 4, 1, vec![-3.0, 0.5, 9.0, 0.25], 1.0)?;
    let clipped = cube(1, 4, 1, vec![0.0, 0.5, 1.0, 0.25], 1.0)?;
    let a = rmse_8bit(&wild, &g)?;
    let b = rmse_8bit(&clipped, &g)?;
    // Out-of-range ground truth is clipped too.
    let g_wild = cube(1, 4, 1, vec![-1.0, 0.5, 2.0, 0.25], 1.0)?;
    let c = rmse_8bit(&g, &g_wild)?;
    Ok(CheckResult::below(
        "metric_clipping",
        (a - b).abs().max(c),
        1e-12,
        "values beyond [0, scale] contribute as if clipped",
    ))
}

fn simplex_problem(k: usize, seed: u64) -> Result<(HsiCube, Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let wl = visible_wavelengths();
    let e = random_spectra(k, &wl, &mut ChaCha8Rng::seed_from_u64(seed));
    let (cube, abund) = simplex_cube(&e, 16, 16, &wl, seed + 1)?;
    Ok((cube, e, abund))
}

/// Smallest achievable worst-column angle over all column matchings.
pub fn matched_max_angle(found: &[Vec<f64>], truth: &[Vec<f64>]) -> f64 {
    fn go(found: &[Vec<f64>], truth: &[Vec<f64>], used: &mut Vec<bool>, i: usize, worst: f64, best: &mut f64) {
        if i == truth.len() {
            *best = best.min(worst);
            return;
        }
        for j in 0..found.len() {
            if !used[j] {
                used[j] = true;
                let w = worst.max(spectral_angle_deg(&found[j], &truth[i]));
                if w < *best {
                    go(found, truth, used, i + 1, w, best);
                }
                used[j] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    go(found, truth, &mut vec![false; found.len()], 0, 0.0, &mut best);
    best
}

fn check_vca(opts: &VerifyOptions) -> Result<CheckResult> {
    let (cube, e, _) = simplex_problem(3, opts.seed + 10)?;
    let found = vca_extract(&cube, 3, &mut ChaCha8Rng::seed_from_u64(opts.seed))?;
    let angle = matched_max_angle(&found.columns, &e);
    Ok(CheckResult::below("vca_recovery", angle, 0.1, "worst per-column angle (degrees) after matching"))
}

fn check_fcls_recovery(opts: &VerifyOptions) -> Result<CheckResult> {
    let (cube, e, abund) = simplex_problem(3, opts.seed + 20)?;
    let em = Endmembers::new(cube.wavelengths().to_vec(), e)?;
    let maps = fcls_abundances(&cube, &em)?;
    let worst = abund
        .iter()
        .enumerate()
        .flat_map(|(p, a)| maps.pixel(p).into_iter().zip(a.clone()).map(|(x, y)| (x - y).abs()))
        .fold(0.0, f64::max);
    Ok(CheckResult::below("fcls_recovery", worst, 1e-4, "max abundance error against the generators"))
}

fn check_fcls_constraints(opts: &VerifyOptions) -> Result<CheckResult> {
    let wl = visible_wavelengths();
    let e = random_spectra(4, &wl, &mut ChaCha8Rng::seed_from_u64(opts.seed + 30));
    let m = Matrix::from_columns(&e);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed + 31);
    let (mut sum_err, mut min_a) = (0.0f64, f64::INFINITY);
    for _ in 0..10_000 {
        let raw: Vec<f64> = (0..4).map(|_| rng.gen_range(-0.3..1.0)).collect();
        let x: Vec<f64> = (0..wl.len())
            .map(|b| (0..4).map(|j| raw[j] * e[j][b]).sum::<f64>() + rng.gen_range(-0.05..0.05))
            .collect();
        let a = fcls_spectrum(&m, &x)?;
        sum_err = sum_err.max((a.iter().sum::<f64>() - 1.0).abs());
        min_a = min_a.min(a.iter().cloned().fold(f64::INFINITY, f64::min));
    }
    let mut r = CheckResult::below(
        "fcls_constraints",
        sum_err,
        1e-6,
        format!("10000 noisy pixels; max |sum - 1|, min abundance {min_a:e}"),
    );
    if min_a < -1e-9 {
        r.passed = false;
    }
    Ok(r)
}

/// Minimum of `‖E a − x‖²` over `a ≥ 0, Σa = 1` by enumerating every
/// support set, solving the equality-constrained problem on it through its
/// KKT system and keeping the best feasible solution.
pub fn enumerate_fcls(e: &[Vec<f64>], x: &[f64]) -> f64 {
    let k = e.len();
    let mut best = f64::INFINITY;
    for mask in 1u32..(1 << k) {
        let s: Vec<usize> = (0..k).filter(|j| mask & (1 << j) != 0).collect();
        let m = s.len();
        // [2 EᵀE  1; 1ᵀ 0] [a; λ] = [2 Eᵀx; 1]
        let n = m + 1;
        let mut kkt = vec![vec![0.0; n + 1]; n];
        for (r, &i) in s.iter().enumerate() {
            for (c, &j) in s.iter().enumerate() {
                kkt[r][c] = 2.0 * e[i].iter().zip(&e[j]).map(|(a, b)| a * b).sum::<f64>();
            }
            kkt[r][m] = 1.0;
            kkt[m][r] = 1.0;
            kkt[r][n] = 2.0 * e[i].iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
        }
        kkt[m][n] = 1.0;
        let Some(sol) = gauss_solve(kkt) else {
            continue;
        };
        if sol[..m].iter().any(|&v| v < -1e-12) {
            continue;
        }
        let resid: f64 = x
            .iter()
            .enumerate()
            .map(|(b, &xb)| (s.iter().zip(&sol).map(|(&j, &a)| a * e[j][b]).sum::<f64>() - xb).powi(2))
            .sum();
        best = best.min(resid);
    }
    best
}

/// Gaussian elimination with partial pivoting on an augmented matrix.
fn gauss_solve(mut a: Vec<Vec<f64>>) -> Option<Vec<f64>> {
    let n = a.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-14 {
            return None;
        }
        a.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..=n {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    Some((0..n).map(|i| a[i][n] / a[i][i]).collect())
}

fn check_fcls_enumeration(opts: &VerifyOptions) -> Result<CheckResult> {
    let wl = visible_wavelengths();
    let e = random_spectra(4, &wl, &mut ChaCha8Rng::seed_from_u64(opts.seed + 40));
    let m = Matrix::from_columns(&e);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed + 41);
    let mut worst = 0.0f64;
    for _ in 0..200 {
        let raw: Vec<f64> = (0..4).map(|_| rng.gen_range(-0.5..1.0)).collect();
        let x: Vec<f64> = (0..wl.len())
            .map(|b| (0..4).map(|j| raw[j] * e[j][b]).sum::<f64>() + rng.gen_range(-0.1..0.1))
            .collect();
        let a = fcls_spectrum(&m, &x)?;
        let obj: f64 = (0..wl.len())
            .map(|b| ((0..4).map(|j| a[j] * e[j][b]).sum::<f64>() - x[b]).powi(2))
            .sum();
        worst = worst.max((obj - enumerate_fcls(&e, &x)).abs());
    }
    Ok(CheckResult::below("fcls_enumeration", worst, 1e-8, "200 pixels, k = 4, objective against 2^k support enumeration"))
}

fn random_cube(seed: u64, h: usize, w: usize, bands: usize) -> Result<HsiCube> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    cube(h, w, bands, (0..h * w * bands).map(|_| rng.gen_range(0.0..1.0)).collect(), 1.0)
}

fn check_pca_full(opts: &VerifyOptions) -> Result<CheckResult> {
    let c = random_cube(opts.seed + 50, 12, 12, 10)?;
    let r = crate::unmixing::pca_project(&c, 10)?;
    let err = c.data().iter().zip(r.data()).map(|(a, b)| (a - b).abs() as f64).fold(0.0, f64::max);
    Ok(CheckResult::below("pca_full_basis", err, 1e-6, "k = bands reconstruction, max abs error"))
}

fn check_pca_energy(opts: &VerifyOptions) -> Result<CheckResult> {
    let c = random_cube(opts.seed + 60, 12, 12, 10)?;
    let pca = fit_pca(&c)?;
    let mut worst = 0.0f64;
    for k in [1, 3, 6] {
        let r = pca.project(&c, k)?;
        let mse: f64 = c
            .data()
            .iter()
            .zip(r.data())
            .map(|(a, b)| (*a as f64 - *b as f64).powi(2))
            .sum::<f64>()
            / c.pixels() as f64;
        worst = worst.max((mse - pca.eigenvalues[k..].iter().sum::<f64>()).abs());
    }
    Ok(CheckResult::below("pca_energy", worst, 1e-6, "per-pixel squared error against discarded eigenvalues, k = 1, 3, 6"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pristine_checks_pass() {
        for r in run_checks(&VerifyOptions::default()) {
            assert!(r.passed, "{r:?}");
        }
    }

    #[test]
    fn corrupted_kernel_is_caught() {
        let opts = VerifyOptions {
            seed: 0,
            fault: Some(Fault::CorruptKernel),
        };
        let r = run_check("conv_oracle", &opts).unwrap();
        assert!(!r.passed);
        assert!(r.measured > 1e-3);
    }

    #[test]
    fn enumeration_oracle_on_vertex() {
        let e = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        assert!(enumerate_fcls(&e, &[1.0, 0.0]) < 1e-20);
        // Off-simplex point: nearest feasible is (0.5, 0.5).
        assert!((enumerate_fcls(&e, &[1.0, 1.0]) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn report_lists_every_check() {
        let results = run_checks(&VerifyOptions::default());
        let csv = report_csv(&results);
        for name in check_names() {
            assert!(csv.contains(&format!("\n{name},")));
        }
    }
}
