use std::fs;
use std::path::Path;

use super::HsiCube;
use crate::error::{Error, Result};

const CIE1964_CSV: &str = include_str!("../../data/cie1964_10deg.csv");

/// Reads a `wavelength_nm,value` table such as an illumination spectrum.
pub fn parse_spectrum_csv(text: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| Error::format("header", e.to_string()))?;
    if headers.len() != 2 || &headers[0] != "wavelength_nm" {
        return Err(Error::format("header", "expected `wavelength_nm,<value>`"));
    }
    let (mut wl, mut values) = (Vec::new(), Vec::new());
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| Error::format(format!("row {}", i + 1), e.to_string()))?;
        let num = |j: usize| {
            row[j]
                .parse::<f64>()
                .map_err(|e| Error::format(format!("row {}", i + 1), format!("`{}`: {e}", &row[j])))
        };
        wl.push(num(0)?);
        values.push(num(1)?);
    }
    super::check_wavelengths(&wl)?;
    Ok((wl, values))
}

/// Per-channel spectral sensitivities sampled on a wavelength grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralResponse {
    wavelengths: Vec<f64>,
    /// `weights[c][i]` is the sensitivity of channel `c` at `wavelengths[i]`.
    weights: Vec<Vec<f64>>,
}

impl SpectralResponse {
    pub fn new(wavelengths: Vec<f64>, weights: Vec<Vec<f64>>) -> Result<Self> {
        super::check_wavelengths(&wavelengths)?;
        if weights.is_empty() {
            return Err(Error::format("srf", "no output channels"));
        }
        for (c, row) in weights.iter().enumerate() {
            if row.len() != wavelengths.len() {
                return Err(Error::format(
                    format!("ch{c}"),
                    format!("{} samples for a {}-point grid", row.len(), wavelengths.len()),
                ));
            }
            if row.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
                return Err(Error::format(format!("ch{c}"), "weights must be finite and non-negative"));
            }
            if !row.iter().any(|&w| w > 0.0) {
                return Err(Error::format(format!("ch{c}"), "channel has no positive weight"));
            }
        }
        Ok(Self { wavelengths, weights })
    }

    /// CIE 1964 10° standard observer, 380–780 nm in 5 nm steps, channels
    /// x̄, ȳ, z̄.
    pub fn cie1964() -> Self {
        Self::parse_csv(CIE1964_CSV).expect("bundled colour matching table is valid")
    }

    /// Channel `c` responds only to `wavelengths[band]`.
    pub fn one_hot(wavelengths: &[f64], bands: &[usize]) -> Result<Self> {
        let weights = bands
            .iter()
            .map(|&b| {
                if b >= wavelengths.len() {
                    return Err(Error::Input(format!("band {b} out of range")));
                }
                let mut row = vec![0.0; wavelengths.len()];
                row[b] = 1.0;
                Ok(row)
            })
            .collect::<Result<_>>()?;
        Self::new(wavelengths.to_vec(), weights)
    }

    /// A single channel with equal weight everywhere.
    pub fn uniform(wavelengths: &[f64]) -> Result<Self> {
        Self::new(wavelengths.to_vec(), vec![vec![1.0; wavelengths.len()]])
    }

    pub fn out_channels(&self) -> usize {
        self.weights.len()
    }

    pub fn wavelengths(&self) -> &[f64] {
        &self.wavelengths
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    /// Parses `wavelength_nm,ch0,ch1,...` CSV with increasing wavelengths.
    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let headers = reader.headers().map_err(|e| Error::format("srf header", e.to_string()))?.clone();
        if headers.get(0) != Some("wavelength_nm") || headers.len() < 2 {
            return Err(Error::format("srf header", "expected `wavelength_nm,ch0,...`"));
        }
        let channels = headers.len() - 1;
        let mut wavelengths = Vec::new();
        let mut weights = vec![Vec::new(); channels];
        for (row, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::format(format!("srf row {}", row + 1), e.to_string()))?;
            let parse = |i: usize| -> Result<f64> {
                record
                    .get(i)
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::format(format!("srf row {}", row + 1), format!("column {i} is not a number")))
            };
            wavelengths.push(parse(0)?);
            for (c, w) in weights.iter_mut().enumerate() {
                w.push(parse(c + 1)?);
            }
        }
        Self::new(wavelengths, weights)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["wavelength_nm".to_string()];
        header.extend((0..self.out_channels()).map(|c| format!("ch{c}")));
        w.write_record(&header).expect("in-memory write");
        for (i, wl) in self.wavelengths.iter().enumerate() {
            let mut row = vec![wl.to_string()];
            row.extend(self.weights.iter().map(|ch| ch[i].to_string()));
            w.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
    }

    /// Weights linearly interpolated onto `target` and normalized to unit sum
    /// per channel. Targets outside the sampled grid get zero weight.
    pub fn resample(&self, target: &[f64]) -> Result<Vec<Vec<f64>>> {
        let grid = &self.wavelengths;
        self.weights
            .iter()
            .enumerate()
            .map(|(c, row)| {
                let mut out: Vec<f64> = target.iter().map(|&t| interpolate(grid, row, t)).collect();
                let total: f64 = out.iter().sum();
                if !(total > 0.0) {
                    return Err(Error::Simulation { channel: c });
                }
                out.iter_mut().for_each(|w| *w /= total);
                Ok(out)
            })
            .collect()
    }
}

fn interpolate(grid: &[f64], values: &[f64], t: f64) -> f64 {
    let (first, last) = (grid[0], grid[grid.len() - 1]);
    if t < first || t > last {
        return 0.0;
    }
    let i = grid.partition_point(|&g| g <= t);
    if i == grid.len() {
        return values[grid.len() - 1];
    }
    let (g0, g1) = (grid[i - 1], grid[i]);
    let f = (t - g0) / (g1 - g0);
    values[i - 1] + f * (values[i] - values[i - 1])
}

/// Integrates the cube against each response channel:
/// `out[c, y, x] = Σ_b w[c, b] · cube[b, y, x]` with `w` resampled to the
/// cube's wavelengths and normalized to unit sum.
pub fn simulate_input(cube: &HsiCube, srf: &SpectralResponse) -> Result<HsiCube> {
    let weights = srf.resample(cube.wavelengths())?;
    let n = cube.pixels();
    let mut data = vec![0f32; weights.len() * n];
    let mut acc = vec![0f64; n];
    for (c, row) in weights.iter().enumerate() {
        acc.fill(0.0);
        for (b, &w) in row.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (a, &v) in acc.iter_mut().zip(cube.band(b)) {
                *a += w * v as f64;
            }
        }
        for (o, &a) in data[c * n..(c + 1) * n].iter_mut().zip(&acc) {
            *o = a as f32;
        }
    }
    let channels = (0..weights.len()).map(|c| c as f64).collect();
    let mut out = HsiCube::new(cube.height(), cube.width(), channels, data, cube.scale())?;
    out.metadata = cube.metadata.clone();
    Ok(out)
}
