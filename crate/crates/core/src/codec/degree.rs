use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};

/// Tolerance on the total probability mass.
pub const MASS_TOLERANCE: f64 = 1e-9;

/// Batch degree distribution: `psi[d - 1]` is the probability of degree `d`.
#[derive(Clone, Debug, PartialEq)]
pub struct DegreeDistribution {
    psi: Vec<f64>,
    cdf: Vec<f64>,
}

impl DegreeDistribution {
    /// Validates and wraps a probability vector over degrees `1..=psi.len()`.
    pub fn new(psi: Vec<f64>) -> Result<Self> {
        if psi.is_empty() {
            return Err(Error::InvalidDistribution("empty support".into()));
        }
        if let Some((i, p)) = psi
            .iter()
            .enumerate()
            .find(|(_, p)| !p.is_finite() || **p < 0.0)
        {
            return Err(Error::InvalidDistribution(format!(
                "degree {} has probability {p}",
                i + 1
            )));
        }
        let total: f64 = psi.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidDistribution(format!(
                "probabilities sum to {total}, expected 1"
            )));
        }
        let mut acc = 0.0;
        let cdf = psi
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        let mut psi = psi;
        while psi.last() == Some(&0.0) {
            psi.pop();
        }
        Ok(Self { psi, cdf })
    }

    /// All mass on a single degree.
    pub fn point_mass(degree: usize) -> Result<Self> {
        if degree == 0 {
            return Err(Error::InvalidDistribution("degree 0".into()));
        }
        let mut psi = vec![0.0; degree];
        psi[degree - 1] = 1.0;
        Self::new(psi)
    }

    /// Uniform over the given degrees.
    pub fn uniform(degrees: &[usize]) -> Result<Self> {
        let max = degrees.iter().copied().max().unwrap_or(0);
        if max == 0 || degrees.contains(&0) {
            return Err(Error::InvalidDistribution("degrees must be >= 1".into()));
        }
        let mut psi = vec![0.0; max];
        for &d in degrees {
            psi[d - 1] += 1.0 / degrees.len() as f64;
        }
        Self::new(psi)
    }

    /// Default distribution for batch size `m`.
    ///
    /// An ideal-soliton-shaped tail `1/(j(j+1))` over degrees `2m..=4m`.
    /// A batch never has rank above `m`, so degrees below `m` waste received
    /// rank, and near `m` too many input packets end up covered by a single
    /// batch; starting at `2m` keeps the decoding overhead near zero for
    /// effective erasure rates from 0 to 0.5 at `m = 16`.
    pub fn heuristic(m: usize) -> Self {
        let m = m.max(1);
        let lo = 2 * m;
        let hi = 4 * m;
        let mut w = vec![0.0; hi];
        for d in lo..=hi {
            let j = (d - lo + 1) as f64;
            w[d - 1] = 1.0 / (j * (j + 1.0));
        }
        let total: f64 = w.iter().sum();
        w.iter_mut().for_each(|p| *p /= total);
        Self::new(w).expect("heuristic distribution is normalized")
    }

    pub fn max_degree(&self) -> usize {
        self.psi.len()
    }

    pub fn probability(&self, degree: usize) -> f64 {
        degree
            .checked_sub(1)
            .and_then(|i| self.psi.get(i))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn psi(&self) -> &[f64] {
        &self.psi
    }

    pub fn mean(&self) -> f64 {
        self.psi
            .iter()
            .enumerate()
            .map(|(i, p)| (i + 1) as f64 * p)
            .sum()
    }

    /// Inverse-CDF draw. Always lands on a degree with positive mass.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen::<f64>() * self.cdf.last().copied().unwrap_or(1.0);
        let idx = self.cdf.partition_point(|&c| c <= u);
        let mut d = idx.min(self.psi.len() - 1);
        // partition_point may land on a zero-mass entry only through rounding
        while self.psi[d] == 0.0 && d + 1 < self.psi.len() {
            d += 1;
        }
        d + 1
    }

    /// Parses the text format: one `degree probability` pair per line.
    /// Blank lines and lines starting with `#` are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut it = line.split_whitespace();
            let (Some(d), Some(p), None) = (it.next(), it.next(), it.next()) else {
                return Err(Error::InvalidDistribution(format!(
                    "line {}: expected `degree probability`",
                    lineno + 1
                )));
            };
            let d: usize = d.parse().map_err(|_| {
                Error::InvalidDistribution(format!("line {}: bad degree `{d}`", lineno + 1))
            })?;
            let p: f64 = p.parse().map_err(|_| {
                Error::InvalidDistribution(format!("line {}: bad probability `{p}`", lineno + 1))
            })?;
            if d == 0 {
                return Err(Error::InvalidDistribution(format!(
                    "line {}: degree must be >= 1",
                    lineno + 1
                )));
            }
            pairs.push((d, p));
        }
        let max = pairs.iter().map(|(d, _)| *d).max().ok_or_else(|| {
            Error::InvalidDistribution("no `degree probability` lines".into())
        })?;
        let mut psi = vec![0.0; max];
        for (d, p) in pairs {
            psi[d - 1] += p;
        }
        Self::new(psi)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::InvalidDistribution(format!("cannot read {}: {e}", path.display()))
        })?;
        Self::parse(&text)
    }

    /// Text form accepted by [`DegreeDistribution::parse`]; zero entries are omitted.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, p) in self.psi.iter().enumerate() {
            if *p > 0.0 {
                let _ = writeln!(out, "{} {:.17}", i + 1, p);
            }
        }
        out
    }
}
