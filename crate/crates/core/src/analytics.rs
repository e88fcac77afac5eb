//! Closed-form planning for the two-phase protocol.
//!
//! Everything here is deterministic: batch-count bounds, the phase-2
//! stopping time, expected redundancy, the predicted per-batch rank
//! distribution and the search for the batch count that minimizes total
//! transmissions.

use std::fmt::Write as _;

use statrs::function::erf::{erfc, erfc_inv};
use statrs::function::factorial::ln_binomial;

use crate::error::{invalid, Error, Result};

/// Channel and protocol configuration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NetworkParams {
    /// Number of users.
    pub k: usize,
    /// Correlated source-to-group loss.
    pub p0: f64,
    /// Independent per-user source loss.
    pub p1: f64,
    /// Inter-user loss.
    pub p2: f64,
    /// Batch size `M`.
    pub batch_size: usize,
    /// Input packets `F`.
    pub file_packets: usize,
    /// Coding overhead fraction.
    pub eta: f64,
    /// Outage target for the minimum batch count.
    pub epsilon: f64,
}

impl Default for NetworkParams {
    fn default() -> Self {
        Self {
            k: 3,
            p0: 0.05,
            p1: 0.5,
            p2: 0.1,
            batch_size: 16,
            file_packets: 1600,
            eta: 0.01,
            epsilon: 1e-6,
        }
    }
}

impl NetworkParams {
    /// Checks ranges. `p0` may be 0 (no correlated loss); `p1` and `p2` may be
    /// 0 as a limit case. All three must stay below 1.
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(invalid("k", "must be >= 1"));
        }
        for (field, p) in [("p0", self.p0), ("p1", self.p1), ("p2", self.p2)] {
            if !(0.0..1.0).contains(&p) {
                return Err(invalid(field, format!("{p} is outside [0, 1)")));
            }
        }
        if self.p2 > self.p1 {
            return Err(invalid(
                "p2",
                format!("{} exceeds p1 = {}; peers are assumed closer than the source", self.p2, self.p1),
            ));
        }
        if self.batch_size == 0 {
            return Err(invalid("batch_size", "must be >= 1"));
        }
        if self.file_packets == 0 {
            return Err(invalid("file_packets", "must be >= 1"));
        }
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(invalid("eta", format!("{} must be >= 0", self.eta)));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(invalid("epsilon", format!("{} is outside (0, 1)", self.epsilon)));
        }
        Ok(())
    }

    /// `(1 + eta) F`.
    pub fn target_packets(&self) -> f64 {
        (1.0 + self.eta) * self.file_packets as f64
    }

    /// Probability that one user misses a source packet, `p0 + p1 - p0 p1`.
    pub fn user_erasure(&self) -> f64 {
        self.p0 + self.p1 - self.p0 * self.p1
    }

    /// `(1 - p1^(k-1)) (p0 + p1 - p0 p1)`, the success probability of
    /// [`delta_distribution`].
    pub fn delta_probability(&self) -> f64 {
        (1.0 - self.p1.powi(self.k as i32 - 1)) * self.user_erasure()
    }

    /// `Phi^-1(0.625 / (k + 0.25))`, the expected-minimum quantile of `k` normals.
    pub fn min_quantile(&self) -> f64 {
        phi_inv(0.625 / (self.k as f64 + 0.25))
    }
}

/// Standard normal upper tail `Q(x) = 1 - Phi(x)`.
pub fn q_function(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// Standard normal cdf.
pub fn phi(x: f64) -> f64 {
    q_function(-x)
}

/// Standard normal quantile.
pub fn phi_inv(p: f64) -> f64 {
    -std::f64::consts::SQRT_2 * erfc_inv(2.0 * p)
}

/// `C(n, k) p^k (1 - p)^(n - k)`, exact at the `p = 0` and `p = 1` edges.
pub fn binomial_pmf(n: usize, k: usize, p: f64) -> f64 {
    if k > n {
        return 0.0;
    }
    if p <= 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if p >= 1.0 {
        return if k == n { 1.0 } else { 0.0 };
    }
    if n <= 60 {
        // small n: direct product keeps full precision
        let mut c = 1.0;
        for i in 0..k.min(n - k) {
            c = c * (n - i) as f64 / (i + 1) as f64;
        }
        return c * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32);
    }
    (ln_binomial(n as u64, k as u64) + k as f64 * p.ln() + (n - k) as f64 * (-p).ln_1p()).exp()
}

/// Whole pmf of `B(n, p)` over `0..=n`.
pub fn binomial_vec(n: usize, p: f64) -> Vec<f64> {
    (0..=n).map(|k| binomial_pmf(n, k, p)).collect()
}

/// Probability that no user receives a given source packet,
/// `1 - (1 - p0)(1 - p1^k)`.
pub fn effective_erasure(params: &NetworkParams) -> f64 {
    1.0 - (1.0 - params.p0) * (1.0 - params.p1.powi(params.k as i32))
}

/// Smallest batch count for which the group as a whole holds `(1+eta)F`
/// distinct packets except with probability about `epsilon`.
pub fn min_batches(params: &NetworkParams) -> usize {
    let f1 = params.target_packets();
    let pb = effective_erasure(params);
    let alpha = phi_inv(params.epsilon);
    let m = params.batch_size as f64;
    let n = (2.0 * f1 - alpha * (4.0 * pb * f1).sqrt()) / (2.0 * m * (1.0 - pb));
    n.ceil().max(1.0) as usize
}

/// Batch count at which the source alone is expected to serve the worst of
/// the `k` users.
pub fn max_batches(params: &NetworkParams) -> usize {
    let f1 = params.target_packets();
    let ph = params.user_erasure();
    let b2 = params.min_quantile().powi(2);
    let m = params.batch_size as f64;
    let n = (2.0 * f1 + ph * b2 + (4.0 * ph * b2 * f1 + ph * b2 * b2).sqrt())
        / (2.0 * m * (1.0 - ph));
    n.ceil().max(1.0) as usize
}

/// Phase-2 packets a user expects from its peers after `t` transmissions.
pub fn expected_peer_receptions(t: f64, params: &NetworkParams) -> f64 {
    let k = params.k as f64;
    (1.0 - params.p2) * (k - 1.0) * t / k
}

/// Distribution of the number of batch packets held by the group but not by
/// a given user after phase 1: `B(M, p~)`.
pub fn delta_distribution(params: &NetworkParams) -> Vec<f64> {
    binomial_vec(params.batch_size, params.delta_probability())
}

/// The same distribution built by conditioning on the user's own phase-1
/// count `Y1` and summing `Pr(Z = Y1 + d | Y1) Pr(Y1)`.
pub fn delta_by_convolution(params: &NetworkParams) -> Vec<f64> {
    let m = params.batch_size;
    let y1 = binomial_vec(m, (1.0 - params.p0) * (1.0 - params.p1));
    let mut out = vec![0.0; m + 1];
    for (i, py1) in y1.iter().enumerate() {
        let z = z_given_y1(i, params);
        for (d, o) in out.iter_mut().enumerate().take(m - i + 1) {
            *o += z[i + d] * py1;
        }
    }
    out
}

/// `Pr(Z = j | Y1 = i)` for `j` in `0..=M`: each packet the user missed
/// reaches at least one of the other `k - 1` users independently.
fn z_given_y1(i: usize, params: &NetworkParams) -> Vec<f64> {
    let m = params.batch_size;
    let reach = 1.0 - params.p1.powi(params.k as i32 - 1);
    let mut out = vec![0.0; m + 1];
    for j in i..=m {
        out[j] = binomial_pmf(m - i, j - i, reach);
    }
    out
}

/// Expected number of redundant phase-2 receptions over all `n` batches
/// after `t` transmissions (Gaussian approximation of `Y2 - Delta`).
pub fn redundancy(t: f64, n: usize, params: &NetworkParams) -> f64 {
    let nf = n as f64;
    let pt = expected_peer_receptions(t, params);
    let m = params.batch_size as f64;
    let pd = params.delta_probability();
    let mu = pt / nf - m * pd;
    let var = pt / nf * (1.0 - 1.0 / nf) + m * pd * (1.0 - pd);
    if var <= 0.0 {
        return nf * mu.max(0.0);
    }
    let sd = var.sqrt();
    nf * (var / (2.0 * std::f64::consts::PI)).sqrt() * (-mu * mu / (2.0 * var)).exp()
        + mu * nf * q_function(-mu / sd)
}

/// Left side of the stopping condition minus `(1+eta)F`: positive once the
/// worst user is expected to hold enough innovative packets.
pub fn stopping_margin(t: f64, n: usize, params: &NetworkParams) -> f64 {
    let k = params.k as f64;
    let m = params.batch_size as f64;
    let nf = n as f64;
    let keep = (1.0 - params.p0) * (1.0 - params.p1);
    let mu = keep * nf * m + expected_peer_receptions(t, params) - redundancy(t, n, params);
    let var = nf * m * keep * params.user_erasure() + t * (k - 1.0) / k * (1.0 - params.p2) * params.p2;
    mu + var.sqrt() * params.min_quantile() - params.target_packets()
}

const MAX_WIDENINGS: u32 = 40;
const MAX_BISECTIONS: u32 = 200;

/// Estimated phase-2 transmissions until every user decodes, with `n`
/// batches sent in phase 1.
///
/// Bisection on `[0, nM]` until the margin bracket is within 1, widening the
/// upper end by doubling when `nM` is not enough. The result is then walked
/// down to the smallest integer whose margin is non-negative.
pub fn stopping_time(n: usize, params: &NetworkParams) -> Result<u64> {
    params.validate()?;
    if n == 0 {
        return Err(invalid("n", "must be >= 1"));
    }
    let f = |t: f64| stopping_margin(t, n, params);
    let mut tl = 0.0;
    let mut fl = f(tl);
    if fl >= 0.0 {
        return Ok(0);
    }
    let mut tu = (n * params.batch_size) as f64;
    let mut fu = f(tu);
    let mut widen = 0;
    while fu <= 0.0 {
        widen += 1;
        if widen > MAX_WIDENINGS {
            return Err(Error::NoStoppingTime { cap: tu });
        }
        tl = tu;
        fl = fu;
        tu *= 2.0;
        fu = f(tu);
    }
    let mut iters = 0;
    while fu - fl > 1.0 && iters < MAX_BISECTIONS {
        let t = 0.5 * (tl + tu);
        let ft = f(t);
        if ft > 0.0 {
            tu = t;
            fu = ft;
        } else {
            tl = t;
            fl = ft;
        }
        iters += 1;
    }
    let mut t = tu.ceil() as u64;
    let floor = tl.floor() as u64;
    while t > floor && f((t - 1) as f64) >= 0.0 {
        t -= 1;
    }
    Ok(t)
}

/// Probability vector over ranks `0..=M`.
#[derive(Clone, Debug, PartialEq)]
pub struct RankDistribution {
    pr: Vec<f64>,
}

impl RankDistribution {
    pub fn new(pr: Vec<f64>) -> Self {
        Self { pr }
    }

    /// Normalized histogram of observed ranks.
    pub fn from_counts(counts: &[u64]) -> Self {
        let total: u64 = counts.iter().sum();
        let pr = if total == 0 {
            vec![0.0; counts.len()]
        } else {
            counts.iter().map(|&c| c as f64 / total as f64).collect()
        };
        Self { pr }
    }

    pub fn pr(&self) -> &[f64] {
        &self.pr
    }

    pub fn batch_size(&self) -> usize {
        self.pr.len().saturating_sub(1)
    }

    pub fn mean(&self) -> f64 {
        self.pr.iter().enumerate().map(|(r, p)| r as f64 * p).sum()
    }

    pub fn total(&self) -> f64 {
        self.pr.iter().sum()
    }

    /// Total-variation distance; the shorter vector is padded with zeros.
    pub fn total_variation(&self, other: &RankDistribution) -> f64 {
        let len = self.pr.len().max(other.pr.len());
        let get = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
        0.5 * (0..len)
            .map(|i| (get(&self.pr, i) - get(&other.pr, i)).abs())
            .sum::<f64>()
    }
}

/// Predicted rank of a typical batch at one user after `n` batches and `t`
/// phase-2 transmissions. The rank is `min(Z, Y1 + Y2)` with `Y2` binomial
/// over the rounded expected peer receptions, taken independent of `Z`.
pub fn rank_distribution(n: usize, t: f64, params: &NetworkParams) -> RankDistribution {
    let m = params.batch_size;
    let trials = expected_peer_receptions(t, params).round().max(0.0) as usize;
    let y2 = binomial_vec(trials, 1.0 / n.max(1) as f64);
    // y2_tail[l] = Pr(Y2 >= l)
    let mut y2_tail = vec![0.0; trials + 2];
    for l in (0..=trials).rev() {
        y2_tail[l] = y2_tail[l + 1] + y2[l];
    }
    let y1 = binomial_vec(m, (1.0 - params.p0) * (1.0 - params.p1));
    let z: Vec<Vec<f64>> = (0..=m).map(|i| z_given_y1(i, params)).collect();
    let mut pr = vec![0.0; m + 1];
    for (r, out) in pr.iter_mut().enumerate() {
        let mut acc = 0.0;
        for i in 0..=r {
            let need = r - i;
            let z_above: f64 = z[i][r + 1..].iter().sum();
            let exact = y2.get(need).copied().unwrap_or(0.0);
            let at_least = y2_tail.get(need).copied().unwrap_or(0.0);
            acc += y1[i] * (z_above * exact + z[i][r] * at_least);
        }
        *out = acc;
    }
    RankDistribution { pr }
}

/// Large-`T` approximation: the rank is the group count `Z ~ B(M, 1 - p_bar)`.
pub fn rank_distribution_approx(params: &NetworkParams) -> RankDistribution {
    RankDistribution {
        pr: binomial_vec(params.batch_size, 1.0 - effective_erasure(params)),
    }
}

/// One row of the batch-count scan.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PlanPoint {
    pub n: usize,
    pub t: u64,
    pub total: u64,
}

/// Batch-count plan: bounds, the full scan and its minimizer.
#[derive(Clone, Debug, PartialEq)]
pub struct PlanResult {
    pub n_min: usize,
    pub n_max: usize,
    pub n_opt: usize,
    pub curve: Vec<PlanPoint>,
}

impl PlanResult {
    pub fn point(&self, n: usize) -> Option<&PlanPoint> {
        self.curve.iter().find(|p| p.n == n)
    }

    pub fn optimum(&self) -> &PlanPoint {
        self.point(self.n_opt).expect("optimum lies on the scanned curve")
    }

    /// CSV with header `n,T,total`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,T,total\n");
        for p in &self.curve {
            let _ = writeln!(out, "{},{},{}", p.n, p.t, p.total);
        }
        out
    }
}

/// Scans every `n` in `[n_min, n_max]` and keeps the first minimizer of
/// `nM + T(n)`. When the lower bound exceeds the upper one the scan is the
/// single point `n_min`. Batch counts with no stopping time are left out of
/// the curve.
pub fn optimize_batches(params: &NetworkParams) -> Result<PlanResult> {
    params.validate()?;
    let n_min = min_batches(params);
    let n_max = max_batches(params);
    let hi = n_max.max(n_min);
    let mut curve = Vec::with_capacity(hi - n_min + 1);
    for n in n_min..=hi {
        let t = match stopping_time(n, params) {
            Ok(t) => t,
            // too few batches for the worst user ever to catch up
            Err(Error::NoStoppingTime { .. }) => continue,
            Err(e) => return Err(e),
        };
        curve.push(PlanPoint {
            n,
            t,
            total: (n * params.batch_size) as u64 + t,
        });
    }
    let best = curve
        .iter()
        .min_by_key(|p| (p.total, p.n))
        .ok_or(Error::NoStoppingTime {
            cap: (hi * params.batch_size) as f64,
        })?;
    Ok(PlanResult {
        n_min,
        n_max,
        n_opt: best.n,
        curve,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example2() -> NetworkParams {
        NetworkParams::default()
    }

    fn example3() -> NetworkParams {
        NetworkParams {
            k: 5,
            file_packets: 5000,
            ..NetworkParams::default()
        }
    }

    #[test]
    fn normal_helpers() {
        assert!((phi_inv(0.5)).abs() < 1e-15);
        assert!((phi_inv(0.975) - 1.959963984540054).abs() < 1e-12);
        assert!((phi_inv(1e-6) + 4.753424308822899).abs() < 1e-10);
        assert!((q_function(0.0) - 0.5).abs() < 1e-15);
        assert!((q_function(1.959963984540054) / 0.025 - 1.0).abs() < 1e-10, "{}", q_function(1.959963984540054));
    }

    #[test]
    fn binomial_matches_direct_product() {
        assert!((binomial_pmf(2, 1, 0.5) - 0.5).abs() < 1e-15);
        assert_eq!(binomial_pmf(3, 4, 0.3), 0.0);
        assert_eq!(binomial_pmf(5, 0, 0.0), 1.0);
        assert_eq!(binomial_pmf(5, 5, 1.0), 1.0);
        let big: f64 = binomial_vec(500, 0.3).iter().sum();
        assert!((big - 1.0).abs() < 1e-10);
        let d = binomial_pmf(100, 30, 0.3);
        assert!((d - 0.08678386475342).abs() < 1e-12, "{d}");
    }

    #[test]
    fn effective_erasure_examples() {
        let p = NetworkParams {
            k: 1,
            ..example2()
        };
        assert!((effective_erasure(&p) - p.user_erasure()).abs() < 1e-15);
        assert!((effective_erasure(&example2()) - 0.16875).abs() < 1e-15);
        let p = NetworkParams { p1: 0.0, p2: 0.0, ..example2() };
        assert!((effective_erasure(&p) - 0.05).abs() < 1e-15);
    }

    #[test]
    fn bounds_for_example3() {
        assert_eq!(max_batches(&example3()), 673);
        let n = min_batches(&example3());
        assert!((350..=351).contains(&n), "{n}");
    }

    #[test]
    fn mean_matching_limits() {
        let p = NetworkParams {
            epsilon: 0.5,
            ..example2()
        };
        let pb = effective_erasure(&p);
        let want = (p.target_packets() / (16.0 * (1.0 - pb))).ceil() as usize;
        assert_eq!(min_batches(&p), want);
        // k = 1 puts the quantile at Phi^-1(0.5) = 0
        let p = NetworkParams { k: 1, ..example2() };
        assert!(p.min_quantile().abs() < 1e-15);
        let want = (p.target_packets() / (16.0 * (1.0 - p.user_erasure()))).ceil() as usize;
        assert_eq!(max_batches(&p), want);
    }

    #[test]
    fn peer_receptions() {
        let p = NetworkParams { k: 5, p2: 0.1, ..example2() };
        assert_eq!(expected_peer_receptions(0.0, &p), 0.0);
        assert!((expected_peer_receptions(100.0, &p) - 72.0).abs() < 1e-12);
    }

    #[test]
    fn delta_limits() {
        let p = NetworkParams { k: 200, ..example2() };
        let want = binomial_vec(16, p.user_erasure());
        for (a, b) in delta_distribution(&p).iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
        let p = NetworkParams { p1: 1.0 - 1e-16, ..example2() };
        assert!((delta_distribution(&p)[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn redundancy_at_zero_mean_is_half_normal() {
        let p = example2();
        let n = 100;
        let pd = p.delta_probability();
        // choose t so that P(t)/n = M p~
        let t = 16.0 * pd * n as f64 * p.k as f64 / ((1.0 - p.p2) * (p.k - 1) as f64);
        let pt = expected_peer_receptions(t, &p);
        let var = pt / n as f64 * (1.0 - 1.0 / n as f64) + 16.0 * pd * (1.0 - pd);
        let want = n as f64 * var.sqrt() / (2.0 * std::f64::consts::PI).sqrt();
        assert!((redundancy(t, n, &p) - want).abs() < 1e-9);
    }

    #[test]
    fn stopping_time_is_minimal() {
        let p = example2();
        for n in [129, 140, 160] {
            let t = stopping_time(n, &p).unwrap();
            assert!(stopping_margin(t as f64, n, &p) >= 0.0);
            if t > 0 {
                assert!(stopping_margin((t - 1) as f64, n, &p) < 0.0);
            }
        }
    }

    #[test]
    fn stopping_time_zero_when_phase_one_suffices() {
        assert_eq!(stopping_time(2000, &example2()).unwrap(), 0);
    }

    #[test]
    fn stopping_time_fails_with_too_few_batches() {
        assert!(matches!(
            stopping_time(20, &example2()),
            Err(Error::NoStoppingTime { .. })
        ));
    }

    #[test]
    fn rank_distributions_are_normalized() {
        let p = example2();
        let t = stopping_time(129, &p).unwrap() as f64;
        assert!((rank_distribution(129, t, &p).total() - 1.0).abs() < 1e-9);
        assert!((rank_distribution_approx(&p).total() - 1.0).abs() < 1e-12);
        assert!((rank_distribution_approx(&p).pr()[16] - 0.83125f64.powi(16)).abs() < 1e-15);
    }

    #[test]
    fn plan_curve_covers_bounds() {
        let plan = optimize_batches(&example2()).unwrap();
        assert_eq!(plan.curve.first().unwrap().n, plan.n_min);
        assert_eq!(plan.curve.len(), plan.n_max - plan.n_min + 1);
        assert_eq!(plan.curve.last().unwrap().n, plan.n_max);
        assert!(plan.curve.iter().all(|p| p.total >= plan.optimum().total));
        assert!(plan.to_csv().starts_with("n,T,total\n"));
    }

    #[test]
    fn validate_names_fields() {
        let bad = NetworkParams { p2: 0.6, ..example2() };
        assert!(matches!(bad.validate(), Err(Error::InvalidParam { field: "p2", .. })));
        let bad = NetworkParams { p0: 1.0, ..example2() };
        assert!(matches!(bad.validate(), Err(Error::InvalidParam { field: "p0", .. })));
    }
}
