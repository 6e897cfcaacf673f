//! Reconstruction error measures: RMSE on the 8-bit scale, RMSE relative to
//! the ground-truth mean, and the spectral angle.

use crate::data::{to_8bit, HsiCube};
use crate::error::{Error, Result};

/// Norm below which a spectrum has no defined direction.
pub const SAM_MIN_NORM: f64 = 1e-8;

/// All measures for one prediction/ground-truth pair.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    /// 8-bit units.
    pub rmse: f64,
    pub rmse_rel: f64,
    /// Mean spectral angle in degrees.
    pub sam_deg: f64,
    /// 8-bit RMSE of each band.
    pub per_band_rmse: Vec<f64>,
    /// Pixels that entered the spectral angle average.
    pub sam_pixels: usize,
}

fn check_pair(pred: &HsiCube, gt: &HsiCube) -> Result<()> {
    if !pred.same_geometry(gt) {
        return Err(Error::Input(format!(
            "prediction {}x{}x{} does not match ground truth {}x{}x{}",
            pred.height(),
            pred.width(),
            pred.bands(),
            gt.height(),
            gt.width(),
            gt.bands()
        )));
    }
    Ok(())
}

fn band_sq_errors_8bit(pred: &HsiCube, gt: &HsiCube) -> Vec<f64> {
    let s = gt.scale();
    (0..gt.bands())
        .map(|b| {
            pred.band(b)
                .iter()
                .zip(gt.band(b))
                .map(|(&p, &g)| {
                    let d = to_8bit(p as f64, s) - to_8bit(g as f64, s);
                    d * d
                })
                .sum()
        })
        .collect()
}

/// RMSE after mapping both cubes to the clipped 8-bit range using the
/// ground truth's scale.
pub fn rmse_8bit(pred: &HsiCube, gt: &HsiCube) -> Result<f64> {
    check_pair(pred, gt)?;
    let total: f64 = band_sq_errors_8bit(pred, gt).iter().sum();
    Ok((total / gt.data().len() as f64).sqrt())
}

/// RMSE of the raw values divided by the ground-truth mean.
pub fn rmse_rel(pred: &HsiCube, gt: &HsiCube) -> Result<f64> {
    check_pair(pred, gt)?;
    let n = gt.data().len() as f64;
    let mean = gt.data().iter().map(|&v| v as f64).sum::<f64>() / n;
    if !(mean > 0.0) {
        return Err(Error::Input(format!("ground-truth mean {mean} is not positive")));
    }
    let sq: f64 = pred
        .data()
        .iter()
        .zip(gt.data())
        .map(|(&p, &g)| (p as f64 - g as f64).powi(2))
        .sum();
    Ok((sq / n).sqrt() / mean)
}

/// Mean angle between predicted and true pixel spectra, in degrees, with
/// the pixels that entered the average. Pixels where either spectrum has a
/// norm below [`SAM_MIN_NORM`] are skipped.
pub fn sam_with_count(pred: &HsiCube, gt: &HsiCube) -> Result<(f64, usize)> {
    check_pair(pred, gt)?;
    let n = gt.pixels();
    let (mut pp, mut gg) = (vec![0f64; n], vec![0f64; n]);
    for b in 0..gt.bands() {
        for (i, (&p, &g)) in pred.band(b).iter().zip(gt.band(b)).enumerate() {
            pp[i] += (p as f64).powi(2);
            gg[i] += (g as f64).powi(2);
        }
    }
    let (np, ng): (Vec<f64>, Vec<f64>) = (pp.iter().map(|v| v.sqrt()).collect(), gg.iter().map(|v| v.sqrt()).collect());
    // The angle between unit vectors u, v is 2·atan2(|u - v|, |u + v|), which
    // equals the clamped arccos of their dot product but stays accurate for
    // nearly parallel spectra.
    let (mut diff, mut sum) = (vec![0f64; n], vec![0f64; n]);
    for b in 0..gt.bands() {
        for (i, (&p, &g)) in pred.band(b).iter().zip(gt.band(b)).enumerate() {
            if np[i] < SAM_MIN_NORM || ng[i] < SAM_MIN_NORM {
                continue;
            }
            let (u, v) = (p as f64 / np[i], g as f64 / ng[i]);
            diff[i] += (u - v).powi(2);
            sum[i] += (u + v).powi(2);
        }
    }
    let mut total = 0.0;
    let mut used = 0;
    for i in 0..n {
        if np[i] < SAM_MIN_NORM || ng[i] < SAM_MIN_NORM {
            continue;
        }
        total += 2.0 * diff[i].sqrt().atan2(sum[i].sqrt());
        used += 1;
    }
    if used == 0 {
        return Err(Error::Metric("every pixel has a degenerate spectrum".into()));
    }
    if used < n {
        log::info!("spectral angle skipped {} degenerate pixels", n - used);
    }
    Ok(((total / used as f64).to_degrees(), used))
}

pub fn sam_degrees(pred: &HsiCube, gt: &HsiCube) -> Result<f64> {
    sam_with_count(pred, gt).map(|(deg, _)| deg)
}

pub fn evaluate(pred: &HsiCube, gt: &HsiCube) -> Result<MetricReport> {
    check_pair(pred, gt)?;
    let pixels = gt.pixels() as f64;
    let per_band_rmse: Vec<f64> = band_sq_errors_8bit(pred, gt).iter().map(|s| (s / pixels).sqrt()).collect();
    let (sam_deg, sam_pixels) = sam_with_count(pred, gt)?;
    Ok(MetricReport {
        rmse: rmse_8bit(pred, gt)?,
        rmse_rel: rmse_rel(pred, gt)?,
        sam_deg,
        per_band_rmse,
        sam_pixels,
    })
}

impl MetricReport {
    /// Element-wise mean of several reports.
    pub fn mean(reports: &[MetricReport]) -> Result<MetricReport> {
        let first = reports.first().ok_or_else(|| Error::Metric("no reports to aggregate".into()))?;
        if reports.iter().any(|r| r.per_band_rmse.len() != first.per_band_rmse.len()) {
            return Err(Error::Metric("reports have different band counts".into()));
        }
        let k = reports.len() as f64;
        let avg = |f: fn(&MetricReport) -> f64| reports.iter().map(f).sum::<f64>() / k;
        Ok(MetricReport {
            rmse: avg(|r| r.rmse),
            rmse_rel: avg(|r| r.rmse_rel),
            sam_deg: avg(|r| r.sam_deg),
            per_band_rmse: (0..first.per_band_rmse.len())
                .map(|b| reports.iter().map(|r| r.per_band_rmse[b]).sum::<f64>() / k)
                .collect(),
            sam_pixels: reports.iter().map(|r| r.sam_pixels).sum(),
        })
    }
}

/// CSV table with one row per `(id, report)` and per-band columns.
pub fn reports_to_csv(rows: &[(String, MetricReport)]) -> Result<String> {
    let bands = rows.first().map_or(0, |(_, r)| r.per_band_rmse.len());
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = ["id", "rmse", "rmse_rel", "sam_deg", "sam_pixels"].map(String::from).to_vec();
    header.extend((0..bands).map(|b| format!("rmse_band{b}")));
    let csv_err = |e: csv::Error| Error::Metric(format!("csv: {e}"));
    w.write_record(&header).map_err(csv_err)?;
    for (id, r) in rows {
        if r.per_band_rmse.len() != bands {
            return Err(Error::Metric(format!("row `{id}` has {} bands, expected {bands}", r.per_band_rmse.len())));
        }
        let mut row = vec![
            id.clone(),
            r.rmse.to_string(),
            r.rmse_rel.to_string(),
            r.sam_deg.to_string(),
            r.sam_pixels.to_string(),
        ];
        row.extend(r.per_band_rmse.iter().map(f64::to_string));
        w.write_record(&row).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Metric(format!("csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn cube(h: usize, w: usize, bands: usize, data: Vec<f32>, scale: f64) -> HsiCube {
        HsiCube::new(h, w, (0..bands).map(|b| 400.0 + b as f64).collect(), data, scale).unwrap()
    }

    #[test]
    fn identical_cubes_score_zero() {
        let gt = cube(2, 2, 3, (1..=12).map(|v| v as f32).collect(), 12.0);
        let r = evaluate(&gt, &gt).unwrap();
        assert_eq!((r.rmse, r.rmse_rel, r.sam_deg), (0.0, 0.0, 0.0));
        assert_eq!(r.sam_pixels, 4);
    }

    #[test]
    fn constant_offset_in_eight_bit_units() {
        let gt = cube(2, 2, 2, vec![100.0; 8], 255.0);
        let pred = cube(2, 2, 2, vec![103.0; 8], 255.0);
        assert!((rmse_8bit(&pred, &gt).unwrap() - 3.0).abs() < 1e-9);
    }

    #[test]
    fn relative_rmse_case() {
        let gt = cube(2, 2, 1, vec![100.0; 4], 255.0);
        let pred = cube(2, 2, 1, vec![110.0; 4], 255.0);
        assert!((rmse_rel(&pred, &gt).unwrap() - 0.1).abs() < 1e-12);
        assert!(rmse_rel(&pred, &cube(2, 2, 1, vec![0.0; 4], 1.0)).is_err());
    }

    #[test]
    fn spectral_angle_cases() {
        let g = cube(1, 2, 2, vec![1.0, 1.0, 0.0, 0.0], 1.0);
        let p = cube(1, 2, 2, vec![0.0, 0.0, 1.0, 1.0], 1.0);
        assert!((sam_degrees(&p, &g).unwrap() - 90.0).abs() < 1e-12);
        let g = cube(1, 1, 2, vec![1.0, 1.0], 1.0);
        let p = cube(1, 1, 2, vec![1.0, 0.0], 1.0);
        assert!((sam_degrees(&p, &g).unwrap() - 45.0).abs() < 1e-9);
        let scaled = cube(1, 1, 2, vec![3.0, 3.0], 1.0);
        assert!(sam_degrees(&scaled, &g).unwrap() < 1e-12);
    }

    #[test]
    fn degenerate_pixels_excluded() {
        let g = cube(1, 2, 2, vec![1.0, 0.0, 0.0, 0.0], 1.0);
        let p = cube(1, 2, 2, vec![1.0, 1.0, 1.0, 1.0], 1.0);
        let (deg, used) = sam_with_count(&p, &g).unwrap();
        assert!((deg - 45.0).abs() < 1e-12);
        assert_eq!(used, 1);
        let zero = cube(1, 2, 2, vec![0.0; 4], 1.0);
        assert!(matches!(sam_degrees(&p, &zero), Err(Error::Metric(_))));
    }

    #[test]
    fn clipping_engages_outside_range() {
        let gt = cube(1, 2, 1, vec![0.0, 1.0], 1.0);
        let inside = cube(1, 2, 1, vec![0.0, 1.0], 1.0);
        let outside = cube(1, 2, 1, vec![-5.0, 7.0], 1.0);
        assert_eq!(rmse_8bit(&outside, &gt).unwrap(), rmse_8bit(&inside, &gt).unwrap());
    }

    #[test]
    fn shape_mismatch_is_input_error() {
        let a = cube(2, 2, 1, vec![1.0; 4], 1.0);
        let b = cube(2, 1, 2, vec![1.0; 4], 1.0);
        assert!(matches!(rmse_8bit(&a, &b), Err(Error::Input(_))));
    }

    /// Straightforward per-pixel loops over (y, x, band).
    fn oracle(pred: &HsiCube, gt: &HsiCube) -> (f64, f64, f64) {
        let (h, w, bands) = (gt.height(), gt.width(), gt.bands());
        let s = gt.scale();
        let clip = |v: f64| (255.0 * v / s).max(0.0).min(255.0);
        let (mut sq8, mut sq, mut sum_gt, mut ang) = (0.0, 0.0, 0.0, 0.0);
        for y in 0..h {
            for x in 0..w {
                let (mut d, mut np, mut ng) = (0.0, 0.0, 0.0);
                for b in 0..bands {
                    let p = pred.get(b, y, x) as f64;
                    let g = gt.get(b, y, x) as f64;
                    sq8 += (clip(p) - clip(g)).powi(2);
                    sq += (p - g).powi(2);
                    sum_gt += g;
                    d += p * g;
                    np += p * p;
                    ng += g * g;
                }
                ang += (d / (np.sqrt() * ng.sqrt())).max(-1.0).min(1.0).acos() * 180.0 / std::f64::consts::PI;
            }
        }
        let n = (h * w * bands) as f64;
        ((sq8 / n).sqrt(), (sq / n).sqrt() / (sum_gt / n), ang / (h * w) as f64)
    }

    #[test]
    fn agree_with_scalar_loop_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let gt = cube(4, 4, 3, (0..48).map(|_| rng.gen_range(0.05f32..1.2)).collect(), 1.0);
            let pred = cube(4, 4, 3, (0..48).map(|_| rng.gen_range(-0.2f32..1.3)).collect(), 1.0);
            let (rmse, rel, sam) = oracle(&pred, &gt);
            let r = evaluate(&pred, &gt).unwrap();
            assert!((r.rmse - rmse).abs() < 1e-10);
            assert!((r.rmse_rel - rel).abs() < 1e-10);
            assert!((r.sam_deg - sam).abs() < 1e-10);
        }
    }

    #[test]
    fn mean_and_csv() {
        let a = MetricReport {
            rmse: 1.0,
            rmse_rel: 0.1,
            sam_deg: 2.0,
            per_band_rmse: vec![1.0, 3.0],
            sam_pixels: 4,
        };
        let b = MetricReport {
            rmse: 3.0,
            rmse_rel: 0.3,
            sam_deg: 4.0,
            per_band_rmse: vec![3.0, 5.0],
            sam_pixels: 4,
        };
        let m = MetricReport::mean(&[a.clone(), b]).unwrap();
        assert_eq!((m.rmse, m.sam_deg, m.per_band_rmse.clone()), (2.0, 3.0, vec![2.0, 4.0]));
        let text = reports_to_csv(&[("x".into(), a)]).unwrap();
        assert_eq!(
            text,
            "id,rmse,rmse_rel,sam_deg,sam_pixels,rmse_band0,rmse_band1\nx,1,0.1,2,4,1,3\n"
        );
    }
}
