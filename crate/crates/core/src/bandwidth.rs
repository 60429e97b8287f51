//! Bandwidth selection: leave-one-out cross-validation, the one-shot and
//! pilot-sample selectors, and the AMISE-optimal reference bandwidth.

use rayon::prelude::*;

use crate::error::{check_bandwidth, GpaError, Result};
use crate::kernels::{KernelFamily, KernelSpec};
use crate::moments::{window, PointMoments, Sample};
use crate::numeric::CompensatedSum;

/// Log-spaced candidate bandwidths in `[n^-e / C_H, C_H n^-e]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CandidateSet {
    pub n_ref: usize,
    pub c_h: f64,
    pub count: usize,
    /// Rate exponent `e`: 1/5 for the basic estimator, `1/(2 nu + 3)` for
    /// order-`nu` interpolation, `1/(p + 4)` in `p` dimensions.
    pub exponent: f64,
}

impl CandidateSet {
    pub const DEFAULT_C_H: f64 = 8.0;
    pub const DEFAULT_COUNT: usize = 25;

    pub fn new(n_ref: usize) -> Self {
        Self {
            n_ref,
            c_h: Self::DEFAULT_C_H,
            count: Self::DEFAULT_COUNT,
            exponent: 0.2,
        }
    }

    pub fn with_n_ref(self, n_ref: usize) -> Self {
        Self { n_ref, ..self }
    }

    pub fn candidates(&self) -> Result<Vec<f64>> {
        if self.n_ref == 0 || self.count == 0 {
            return Err(GpaError::InvalidInput("candidate set needs n_ref >= 1 and count >= 1".into()));
        }
        if !(self.c_h > 1.0 && self.c_h.is_finite()) {
            return Err(GpaError::InvalidInput(format!("C_H must exceed 1, got {}", self.c_h)));
        }
        if !(self.exponent > 0.0 && self.exponent.is_finite()) {
            return Err(GpaError::InvalidInput(format!("rate exponent must be positive, got {}", self.exponent)));
        }
        let center = (self.n_ref as f64).powf(-self.exponent);
        if self.count == 1 {
            return Ok(vec![center]);
        }
        let (a, b) = ((center / self.c_h).ln(), (center * self.c_h).ln());
        let step = (b - a) / (self.count - 1) as f64;
        Ok((0..self.count).map(|k| (a + k as f64 * step).exp()).collect())
    }
}

/// Trimming weight: 1 on `[lo + delta r, hi - delta r]` and 0 elsewhere,
/// where `r = hi - lo`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightFn {
    pub delta: f64,
    /// Interval to trim; `None` uses the sample's own range on each axis.
    pub support: Option<(f64, f64)>,
}

impl Default for WeightFn {
    fn default() -> Self {
        Self {
            delta: 0.05,
            support: None,
        }
    }
}

impl WeightFn {
    pub fn new(delta: f64, support: Option<(f64, f64)>) -> Result<Self> {
        if !(0.0..0.5).contains(&delta) {
            return Err(GpaError::InvalidInput(format!("trim fraction must lie in [0, 0.5), got {delta}")));
        }
        if let Some((lo, hi)) = support {
            if !(hi > lo) {
                return Err(GpaError::InvalidInput(format!("weight support [{lo}, {hi}] is empty")));
            }
        }
        Ok(Self { delta, support })
    }

    /// Retained interval on one axis, given that axis' data range.
    pub fn interval(&self, data_range: (f64, f64)) -> (f64, f64) {
        let (lo, hi) = self.support.unwrap_or(data_range);
        let pad = self.delta * (hi - lo);
        (lo + pad, hi - pad)
    }

    fn keeps(bounds: &[(f64, f64)], row: &[f64]) -> bool {
        row.iter().zip(bounds).all(|(&v, &(a, b))| v >= a && v <= b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvScore {
    pub bandwidth: f64,
    pub score: f64,
    /// Retained observations whose leave-one-out estimate was undefined
    /// (they contribute zero).
    pub undefined: usize,
    /// Observations given weight zero.
    pub trimmed: usize,
    pub full_trim: bool,
    pub kernel_evaluations: u64,
}

impl CvScore {
    fn degenerate(&self, n: usize) -> bool {
        self.full_trim || self.undefined + self.trimmed >= n || !self.score.is_finite()
    }
}

/// Leave-one-out cross-validation score
/// `N^-1 sum_i (Y_i - mu_hat^(-i)(X_i))^2 w(X_i)`.
///
/// Each leave-one-out estimate comes from the full-sample moments at `X_i`
/// minus the observation's own contribution `K(0)/h` and `K(0) Y_i / h`.
pub fn cv_score(sample: &Sample, h: f64, kernel: &KernelSpec, weight: &WeightFn) -> Result<CvScore> {
    let sorted;
    let sample = if sample.dim() == 1 && !sample.is_sorted() {
        sorted = sample.sorted();
        &sorted
    } else {
        sample
    };
    cv_score_prepared(sample, h, kernel, weight)
}

fn cv_score_prepared(sample: &Sample, h: f64, kernel: &KernelSpec, weight: &WeightFn) -> Result<CvScore> {
    check_bandwidth(h)?;
    let n = sample.len();
    if n < 2 {
        return Err(GpaError::InvalidInput("cross-validation needs at least two observations".into()));
    }
    let dim = sample.dim();
    let bounds: Vec<(f64, f64)> = (0..dim).map(|s| weight.interval(sample.range(s))).collect();
    let inv_h = h.recip();
    let self_w = kernel.eval(0.0).powi(dim as i32) * inv_h.powi(dim as i32);
    let xs = sample.x();
    let ys = sample.y();

    let mut total = CompensatedSum::new();
    let mut undefined = 0;
    let mut trimmed = 0;
    let mut evaluations = 0u64;
    let mut diff = vec![0.0; dim];
    for i in 0..n {
        let xi = sample.row(i);
        if !WeightFn::keeps(&bounds, xi) {
            trimmed += 1;
            continue;
        }
        let range = if sample.is_sorted() { window(xs, xi[0], h) } else { (0, n) };
        evaluations += (range.1 - range.0) as u64;
        let (mut sw, mut swy, count) = if dim == 1 {
            let (xw, yw) = (&xs[range.0..range.1], &ys[range.0..range.1]);
            match kernel.family() {
                KernelFamily::Epanechnikov => window_sums(xw, yw, xi[0], inv_h, |u2| 0.75 * (1.0 - u2)),
                KernelFamily::FourthOrder => window_sums(xw, yw, xi[0], inv_h, |u2| {
                    45.0 / 32.0 * (1.0 - 7.0 * u2 / 3.0) * (1.0 - u2)
                }),
                KernelFamily::CustomPolynomial(_) => {
                    let mut sw = CompensatedSum::new();
                    let mut swy = CompensatedSum::new();
                    let mut count = 0u64;
                    for (&x, &y) in xw.iter().zip(yw) {
                        let u = (x - xi[0]) * inv_h;
                        if u.abs() <= 1.0 {
                            count += 1;
                            let w = kernel.eval(u) * inv_h;
                            sw.add(w);
                            swy.add(w * y);
                        }
                    }
                    (sw, swy, count)
                }
            }
        } else {
            let mut sw = CompensatedSum::new();
            let mut swy = CompensatedSum::new();
            let mut count = 0u64;
            for j in range.0..range.1 {
                let row = &xs[j * dim..(j + 1) * dim];
                let mut inside = true;
                for s in 0..dim {
                    diff[s] = row[s] - xi[s];
                    inside &= (diff[s] * inv_h).abs() <= 1.0;
                }
                if !inside {
                    continue;
                }
                count += 1;
                let w = kernel.product_unchecked(inv_h, &diff);
                sw.add(w);
                swy.add(w * ys[j]);
            }
            (sw, swy, count)
        };
        sw.add(-self_w);
        swy.add(-self_w * ys[i]);
        let loo = PointMoments {
            sum_w: sw.value(),
            sum_wy: swy.value(),
            count_in_window: count.saturating_sub(1),
        };
        match loo.estimate(h, dim, n - 1).filter(|_| loo.count_in_window > 0) {
            Some(m) => total.add((ys[i] - m) * (ys[i] - m)),
            None => undefined += 1,
        }
    }
    Ok(CvScore {
        bandwidth: h,
        score: total.value() / n as f64,
        undefined,
        trimmed,
        full_trim: trimmed == n,
        kernel_evaluations: evaluations,
    })
}

/// Compensated `sum K_h` and `sum K_h y` over a univariate window, with the
/// kernel given as a function of `u^2` on `[-1, 1]`.
#[inline(always)]
fn window_sums(
    xs: &[f64],
    ys: &[f64],
    x0: f64,
    inv_h: f64,
    k: impl Fn(f64) -> f64,
) -> (CompensatedSum, CompensatedSum, u64) {
    let mut sw = CompensatedSum::new();
    let mut swy = CompensatedSum::new();
    let mut count = 0u64;
    for (&x, &y) in xs.iter().zip(ys) {
        let u = (x - x0) * inv_h;
        if u.abs() <= 1.0 {
            count += 1;
            let w = k(u * u) * inv_h;
            sw.add(w);
            swy.add(w * y);
        }
    }
    (sw, swy, count)
}

/// Result of a candidate sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct CvChoice {
    pub bandwidth: f64,
    pub scores: Vec<CvScore>,
}

/// Candidate with the smallest CV score; ties go to the smaller bandwidth.
pub fn minimize_cv(
    sample: &Sample,
    candidates: &CandidateSet,
    kernel: &KernelSpec,
    weight: &WeightFn,
) -> Result<CvChoice> {
    let hs = candidates.candidates()?;
    let sorted = if sample.dim() == 1 { sample.sorted() } else { sample.clone() };
    let scores = hs
        .par_iter()
        .map(|&h| cv_score_prepared(&sorted, h, kernel, weight))
        .collect::<Result<Vec<_>>>()?;
    let n = sample.len();
    let bandwidth = minimize_score(&hs, |k| (!scores[k].degenerate(n)).then_some(scores[k].score))?;
    Ok(CvChoice { bandwidth, scores })
}

/// Grid argmin of an arbitrary score over increasing `candidates`.
///
/// `score(k)` returns `None` for candidates that cannot be scored. Ties go
/// to the earlier (smaller) candidate.
pub fn minimize_score(candidates: &[f64], mut score: impl FnMut(usize) -> Option<f64>) -> Result<f64> {
    if candidates.is_empty() {
        return Err(GpaError::InvalidInput("empty candidate set".into()));
    }
    let mut best: Option<(usize, f64)> = None;
    for k in 0..candidates.len() {
        if let Some(s) = score(k) {
            if best.is_none_or(|(_, b)| s < b) {
                best = Some((k, s));
            }
        }
    }
    best.map(|(k, _)| candidates[k]).ok_or(GpaError::Degenerate)
}

/// `M^-e` times the mean of the per-machine selections.
pub fn oneshot_bandwidth(local: &[f64], exponent: f64) -> Result<f64> {
    if local.is_empty() {
        return Err(GpaError::InvalidInput("no local bandwidths".into()));
    }
    if let Some(&bad) = local.iter().find(|&&h| !(h > 0.0 && h.is_finite())) {
        return Err(GpaError::InvalidBandwidth(bad));
    }
    let m = local.len() as f64;
    Ok(m.powf(-exponent) * crate::numeric::sum(local) / m)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PilotChoice {
    /// Rescaled bandwidth for the full sample.
    pub bandwidth: f64,
    /// CV choice on the pilot itself.
    pub pilot_bandwidth: f64,
    pub scores: Vec<CvScore>,
}

/// Cross-validates on the pilot (candidates centred at `n0^-e`) and
/// rescales by `(N / n0)^-e`.
pub fn pilot_bandwidth(
    pilot: &Sample,
    n_total: usize,
    kernel: &KernelSpec,
    weight: &WeightFn,
    candidates: &CandidateSet,
) -> Result<PilotChoice> {
    let n0 = pilot.len();
    if n0 < 2 {
        return Err(GpaError::InvalidInput("pilot sample needs at least two observations".into()));
    }
    if n_total < n0 {
        return Err(GpaError::InvalidInput(format!("pilot of {n0} exceeds the sample size {n_total}")));
    }
    let choice = minimize_cv(pilot, &candidates.with_n_ref(n0), kernel, weight)?;
    let factor = (n_total as f64 / n0 as f64).powf(-candidates.exponent);
    Ok(PilotChoice {
        bandwidth: factor * choice.bandwidth,
        pilot_bandwidth: choice.bandwidth,
        scores: choice.scores,
    })
}

/// AMISE minimizer `(V / (4 B))^(1/5) N^(-1/5)`.
pub fn amise_optimal(b_bar: f64, v_bar: f64, n: u64) -> Result<f64> {
    if !(b_bar > 0.0 && v_bar > 0.0 && b_bar.is_finite() && v_bar.is_finite()) || n == 0 {
        return Err(GpaError::InvalidInput(format!(
            "AMISE constants must be positive (B = {b_bar}, V = {v_bar}, N = {n})"
        )));
    }
    Ok((v_bar / (4.0 * b_bar)).powf(0.2) * (n as f64).powf(-0.2))
}
