//! Kernel moment statistics and Nadaraya-Watson estimators.
//!
//! A worker reduces its shard to two sums per query point,
//! `sum_w = sum_i K_h(X_i - x)` and `sum_wy = sum_i K_h(X_i - x) Y_i`.
//! These are additive across shards, so the coordinator recovers the
//! full-sample estimator `sum_wy / sum_w` exactly by adding them up.

use crate::error::{check_bandwidth, GpaError, Result};
use crate::kernels::KernelSpec;
use crate::numeric::CompensatedSum;

/// A kernel estimate; `None` where the kernel window holds no weight.
pub type Estimate = Option<f64>;

/// Estimates whose normalized weight `|sum_w| h^p / N` falls at or below
/// this value are reported as undefined.
pub const UNDEFINED_THRESHOLD: f64 = 1e-12;

/// Observations `(X_i, Y_i)` with `X` stored row-major, `dim` columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    x: Vec<f64>,
    y: Vec<f64>,
    dim: usize,
    sorted: bool,
}

impl Sample {
    /// A one-dimensional sample.
    pub fn univariate(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        Self::new(x, y, 1)
    }

    /// A sample whose covariates are stored row-major with `dim` columns.
    pub fn new(x: Vec<f64>, y: Vec<f64>, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(GpaError::InvalidDimension { expected: 1, got: 0 });
        }
        if y.is_empty() {
            return Err(GpaError::InvalidInput("sample must hold at least one observation".into()));
        }
        if x.len() != y.len() * dim {
            return Err(GpaError::InvalidDimension {
                expected: y.len() * dim,
                got: x.len(),
            });
        }
        if let Some(i) = x.iter().chain(y.iter()).position(|v| !v.is_finite()) {
            return Err(GpaError::InvalidInput(format!("non-finite value at flat position {i}")));
        }
        let sorted = dim == 1 && x.windows(2).all(|w| w[0] <= w[1]);
        Ok(Self { x, y, dim, sorted })
    }

    /// Builds a sample from covariate rows.
    pub fn from_rows(rows: &[Vec<f64>], y: Vec<f64>) -> Result<Self> {
        let dim = rows.first().map_or(1, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(GpaError::InvalidDimension {
                expected: dim,
                got: bad.len(),
            });
        }
        Self::new(rows.concat(), y, dim)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Covariates, row-major.
    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    /// True when the sample is univariate with nondecreasing covariates,
    /// which enables windowed evaluation.
    pub fn is_sorted(&self) -> bool {
        self.sorted
    }

    /// Copy restricted to `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut x = Vec::with_capacity(indices.len() * self.dim);
        let mut y = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(GpaError::InvalidInput(format!("index {i} out of bounds")));
            }
            x.extend_from_slice(self.row(i));
            y.push(self.y[i]);
        }
        Self::new(x, y, self.dim)
    }

    /// Stable ordering of observation indices by the first covariate.
    pub fn order_by_first_covariate(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| self.x[a * self.dim].total_cmp(&self.x[b * self.dim]));
        idx
    }

    /// Copy sorted by the first covariate (ties keep their order).
    pub fn sorted(&self) -> Self {
        if self.sorted {
            return self.clone();
        }
        let order = self.order_by_first_covariate();
        self.subset(&order).expect("indices come from this sample")
    }

    /// `(min, max)` of covariate column `axis`.
    pub fn range(&self, axis: usize) -> (f64, f64) {
        self.x
            .iter()
            .skip(axis)
            .step_by(self.dim)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

/// Moment pair (and window count) at a single query point.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PointMoments {
    pub sum_w: f64,
    pub sum_wy: f64,
    pub count_in_window: u64,
}

impl PointMoments {
    /// Ratio `sum_wy / sum_w`, or `None` when the weight is negligible.
    ///
    /// `h` and `n` normalize the weight: `|sum_w| h^dim / n` is compared
    /// with [`UNDEFINED_THRESHOLD`].
    pub fn estimate(&self, h: f64, dim: usize, n: usize) -> Estimate {
        if n == 0 {
            return None;
        }
        let scale = h.powi(dim as i32) / n as f64;
        if !(self.sum_w.abs() * scale > UNDEFINED_THRESHOLD) {
            return None;
        }
        Some(self.sum_wy / self.sum_w)
    }

    fn add(&self, other: &Self) -> Self {
        Self {
            sum_w: self.sum_w + other.sum_w,
            sum_wy: self.sum_wy + other.sum_wy,
            count_in_window: self.count_in_window + other.count_in_window,
        }
    }
}

/// Moments over an ordered list of query points, for one bandwidth.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentStats {
    bandwidth: f64,
    dim: usize,
    sample_size: usize,
    kernel_evaluations: u64,
    points: Vec<PointMoments>,
}

impl MomentStats {
    /// Identity element for [`merge`] over `len` query points.
    pub fn zero(len: usize, bandwidth: f64, dim: usize) -> Self {
        Self {
            bandwidth,
            dim,
            sample_size: 0,
            kernel_evaluations: 0,
            points: vec![PointMoments::default(); len],
        }
    }

    /// Assembles stats from raw per-point moments (e.g. received values).
    pub fn from_parts(
        bandwidth: f64,
        dim: usize,
        sample_size: usize,
        points: Vec<PointMoments>,
    ) -> Result<Self> {
        check_bandwidth(bandwidth)?;
        Ok(Self {
            bandwidth,
            dim,
            sample_size,
            kernel_evaluations: 0,
            points,
        })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of observations that contributed.
    pub fn sample_size(&self) -> usize {
        self.sample_size
    }

    /// Kernel evaluations spent producing these stats (work proxy).
    pub fn kernel_evaluations(&self) -> u64 {
        self.kernel_evaluations
    }

    pub fn points(&self) -> &[PointMoments] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn check_layout(&self, other: &Self) -> Result<()> {
        if self.points.len() != other.points.len() {
            return Err(GpaError::LayoutMismatch(format!(
                "{} vs {} query points",
                self.points.len(),
                other.points.len()
            )));
        }
        if self.bandwidth != other.bandwidth || self.dim != other.dim {
            return Err(GpaError::LayoutMismatch(format!(
                "bandwidth/dimension ({}, {}) vs ({}, {})",
                self.bandwidth, self.dim, other.bandwidth, other.dim
            )));
        }
        Ok(())
    }
}

/// Local moments of `sample` at each query point.
///
/// `points` is row-major with `sample.dim()` columns. Univariate samples
/// flagged sorted are evaluated over the window `|X_i - x| <= h` only;
/// otherwise every observation is visited. Both paths accumulate the same
/// nonzero terms in the same order.
pub fn local_moments(
    sample: &Sample,
    points: &[f64],
    kernel: &KernelSpec,
    h: f64,
) -> Result<MomentStats> {
    check_bandwidth(h)?;
    let dim = sample.dim();
    if points.is_empty() {
        return Err(GpaError::InvalidInput("no query points".into()));
    }
    if !points.len().is_multiple_of(dim) {
        return Err(GpaError::InvalidDimension {
            expected: dim,
            got: points.len() % dim,
        });
    }
    let inv_h = h.recip();
    let mut evaluations = 0u64;
    let stats: Vec<PointMoments> = points
        .chunks_exact(dim)
        .map(|q| {
            let (range_lo, range_hi) = if sample.is_sorted() {
                window(sample.x(), q[0], h)
            } else {
                (0, sample.len())
            };
            evaluations += (range_hi - range_lo) as u64;
            moments_over(sample, q, kernel, inv_h, range_lo..range_hi)
        })
        .collect();
    Ok(MomentStats {
        bandwidth: h,
        dim,
        sample_size: sample.len(),
        kernel_evaluations: evaluations,
        points: stats,
    })
}

/// Index range of sorted `xs` that can fall inside `[x - h, x + h]`,
/// padded by a relative hair so rounding in `d / h` never drops a point.
pub(crate) fn window(xs: &[f64], x: f64, h: f64) -> (usize, usize) {
    let pad = h * (1.0 + 1e-12);
    let lo = xs.partition_point(|&v| v < x - pad);
    let hi = lo + xs[lo..].partition_point(|&v| v <= x + pad);
    (lo, hi)
}

fn moments_over(
    sample: &Sample,
    q: &[f64],
    kernel: &KernelSpec,
    inv_h: f64,
    range: std::ops::Range<usize>,
) -> PointMoments {
    let dim = sample.dim();
    let xs = sample.x();
    let ys = sample.y();
    let mut sw = CompensatedSum::new();
    let mut swy = CompensatedSum::new();
    let mut count = 0u64;
    if dim == 1 {
        let x0 = q[0];
        for i in range {
            let u = (xs[i] - x0) * inv_h;
            if u.abs() > 1.0 {
                continue;
            }
            count += 1;
            let w = kernel.eval(u) * inv_h;
            if w != 0.0 {
                sw.add(w);
                swy.add(w * ys[i]);
            }
        }
        return PointMoments {
            sum_w: sw.value(),
            sum_wy: swy.value(),
            count_in_window: count,
        };
    }
    let mut diff = vec![0.0; dim];
    for i in range {
        let row = &xs[i * dim..(i + 1) * dim];
        let mut inside = true;
        for s in 0..dim {
            diff[s] = row[s] - q[s];
            inside &= (diff[s] * inv_h).abs() <= 1.0;
        }
        if !inside {
            continue;
        }
        count += 1;
        let w = kernel.product_unchecked(inv_h, &diff);
        if w != 0.0 {
            sw.add(w);
            swy.add(w * ys[i]);
        }
    }
    PointMoments {
        sum_w: sw.value(),
        sum_wy: swy.value(),
        count_in_window: count,
    }
}

/// Fieldwise sum of two stats over the same query layout.
pub fn merge(a: &MomentStats, b: &MomentStats) -> Result<MomentStats> {
    a.check_layout(b)?;
    Ok(MomentStats {
        bandwidth: a.bandwidth,
        dim: a.dim,
        sample_size: a.sample_size + b.sample_size,
        kernel_evaluations: a.kernel_evaluations + b.kernel_evaluations,
        points: a.points.iter().zip(&b.points).map(|(p, q)| p.add(q)).collect(),
    })
}

/// Merges any number of shard stats with a pairwise reduction tree.
pub fn merge_all(parts: &[MomentStats]) -> Result<MomentStats> {
    match parts {
        [] => Err(GpaError::InvalidInput("nothing to merge".into())),
        [only] => Ok(only.clone()),
        _ => {
            let mid = parts.len() / 2;
            merge(&merge_all(&parts[..mid])?, &merge_all(&parts[mid..])?)
        }
    }
}

/// Nadaraya-Watson estimate at every query point of `stats`.
pub fn nw_from_stats(stats: &MomentStats) -> Vec<Estimate> {
    stats
        .points
        .iter()
        .map(|p| p.estimate(stats.bandwidth, stats.dim, stats.sample_size))
        .collect()
}

/// Univariate Nadaraya-Watson estimate at `x`.
pub fn nw_estimate(sample: &Sample, x: f64, kernel: &KernelSpec, h: f64) -> Result<Estimate> {
    if sample.dim() != 1 {
        return Err(GpaError::InvalidDimension {
            expected: 1,
            got: sample.dim(),
        });
    }
    Ok(nw_from_stats(&local_moments(sample, &[x], kernel, h)?)[0])
}

/// Product-kernel Nadaraya-Watson estimate at the point `x`.
pub fn nw_multivariate(
    sample: &Sample,
    x: &[f64],
    kernel: &KernelSpec,
    h: f64,
) -> Result<Estimate> {
    if x.len() != sample.dim() {
        return Err(GpaError::InvalidDimension {
            expected: sample.dim(),
            got: x.len(),
        });
    }
    Ok(nw_from_stats(&local_moments(sample, x, kernel, h)?)[0])
}

/// How a one-shot average treats machines that cannot estimate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum OneShotPolicy {
    /// Any undefined local estimate makes the average undefined.
    #[default]
    Strict,
    /// Average over the machines that produced an estimate.
    DefinedOnly,
}

/// Average of per-machine estimates under the strict policy.
pub fn oneshot_combine(local: &[Estimate]) -> Result<Estimate> {
    oneshot_combine_with(local, OneShotPolicy::Strict)
}

pub fn oneshot_combine_with(local: &[Estimate], policy: OneShotPolicy) -> Result<Estimate> {
    if local.is_empty() {
        return Err(GpaError::InvalidInput("one-shot average over zero machines".into()));
    }
    let defined: Vec<f64> = local.iter().flatten().copied().collect();
    match policy {
        OneShotPolicy::Strict if defined.len() < local.len() => Ok(None),
        _ if defined.is_empty() => Ok(None),
        _ => Ok(Some(crate::numeric::sum(&defined) / defined.len() as f64)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn epa() -> KernelSpec {
        KernelSpec::epanechnikov()
    }

    #[test]
    fn single_point_moments() {
        let s = Sample::univariate(vec![0.5], vec![2.0]).unwrap();
        let st = local_moments(&s, &[0.5, 0.9], &epa(), 0.2).unwrap();
        assert!((st.points()[0].sum_w - 3.75).abs() < 1e-14);
        assert!((st.points()[0].sum_wy - 7.5).abs() < 1e-14);
        assert_eq!(st.points()[1].sum_w, 0.0);
        assert_eq!(st.points()[1].sum_wy, 0.0);
        let est = nw_from_stats(&st);
        assert_eq!(est[0], Some(2.0));
        assert_eq!(est[1], None);
    }

    #[test]
    fn dimension_errors() {
        let s = Sample::new(vec![0.1, 0.2, 0.3, 0.4], vec![1.0, 2.0], 2).unwrap();
        assert!(matches!(
            local_moments(&s, &[0.1, 0.2, 0.3], &epa(), 0.5),
            Err(GpaError::InvalidDimension { .. })
        ));
        assert!(local_moments(&s, &[], &epa(), 0.5).is_err());
        assert!(nw_estimate(&s, 0.1, &epa(), 0.5).is_err());
        assert!(nw_multivariate(&s, &[0.1], &epa(), 0.5).is_err());
        assert!(local_moments(&s, &[0.1, 0.2], &epa(), 0.0).is_err());
    }

    #[test]
    fn sample_validation() {
        assert!(Sample::univariate(vec![], vec![]).is_err());
        assert!(Sample::univariate(vec![1.0, 2.0], vec![1.0]).is_err());
        assert!(Sample::univariate(vec![f64::NAN], vec![1.0]).is_err());
        assert!(Sample::univariate(vec![1.0], vec![f64::INFINITY]).is_err());
        assert!(Sample::univariate(vec![0.1, 0.3, 0.2], vec![0.0; 3]).map(|s| !s.is_sorted()).unwrap());
        assert!(Sample::univariate(vec![0.1, 0.2, 0.2], vec![0.0; 3]).map(|s| s.is_sorted()).unwrap());
    }

    #[test]
    fn merge_examples() {
        let a = MomentStats::from_parts(
            0.1,
            1,
            3,
            vec![PointMoments { sum_w: 1.0, sum_wy: 2.0, count_in_window: 1 }],
        )
        .unwrap();
        let b = MomentStats::from_parts(
            0.1,
            1,
            2,
            vec![PointMoments { sum_w: 0.5, sum_wy: -1.0, count_in_window: 2 }],
        )
        .unwrap();
        let m = merge(&a, &b).unwrap();
        assert_eq!(m.points()[0].sum_w, 1.5);
        assert_eq!(m.points()[0].sum_wy, 1.0);
        assert_eq!(m.sample_size(), 5);
        assert_eq!(merge(&a, &MomentStats::zero(1, 0.1, 1)).unwrap().points(), a.points());
        assert!(merge(&a, &MomentStats::zero(2, 0.1, 1)).is_err());
        assert!(merge(&a, &MomentStats::zero(1, 0.2, 1)).is_err());
        assert!(merge_all(&[]).is_err());
    }

    #[test]
    fn nw_linear_symmetric_window() {
        let s = Sample::univariate(vec![0.4, 0.5, 0.6], vec![1.2, 1.5, 1.8]).unwrap();
        let est = nw_estimate(&s, 0.5, &epa(), 0.15).unwrap().unwrap();
        assert!((est - 1.5).abs() < 1e-14);
        assert_eq!(nw_estimate(&s, 5.0, &epa(), 0.15).unwrap(), None);
    }

    #[test]
    fn nw_multivariate_single_point_and_constant() {
        let s = Sample::from_rows(&[vec![0.3, 0.7]], vec![4.25]).unwrap();
        assert_eq!(nw_multivariate(&s, &[0.3, 0.7], &epa(), 0.2).unwrap(), Some(4.25));
        let rows: Vec<Vec<f64>> = (0..25).map(|i| vec![(i % 5) as f64 / 4.0, (i / 5) as f64 / 4.0]).collect();
        let s = Sample::from_rows(&rows, vec![-3.5; 25]).unwrap();
        for q in [[0.1, 0.1], [0.5, 0.9], [0.77, 0.33]] {
            let v = nw_multivariate(&s, &q, &epa(), 0.3).unwrap().unwrap();
            assert!((v + 3.5).abs() < 1e-14);
        }
    }

    #[test]
    fn oneshot_examples() {
        assert_eq!(oneshot_combine(&[Some(2.0), Some(4.0)]).unwrap(), Some(3.0));
        assert_eq!(oneshot_combine(&[Some(2.0), None]).unwrap(), None);
        assert_eq!(oneshot_combine(&[Some(7.5)]).unwrap(), Some(7.5));
        assert!(oneshot_combine(&[]).is_err());
        assert_eq!(
            oneshot_combine_with(&[Some(2.0), None], OneShotPolicy::DefinedOnly).unwrap(),
            Some(2.0)
        );
        assert_eq!(oneshot_combine_with(&[None], OneShotPolicy::DefinedOnly).unwrap(), None);
    }

    #[test]
    fn undefined_threshold_is_scale_free() {
        let p = PointMoments { sum_w: 1e-9, sum_wy: 1e-9, count_in_window: 1 };
        // 1e-9 * 0.1 / 1000 = 1e-13 -> undefined
        assert_eq!(p.estimate(0.1, 1, 1000), None);
        assert_eq!(p.estimate(0.1, 1, 10), Some(1.0));
        assert_eq!(PointMoments::default().estimate(0.1, 1, 0), None);
    }

    #[test]
    fn sorted_copy_and_range() {
        let s = Sample::univariate(vec![0.3, 0.1, 0.2, 0.1], vec![3.0, 1.0, 2.0, 1.5]).unwrap();
        let t = s.sorted();
        assert!(t.is_sorted());
        assert_eq!(t.x(), &[0.1, 0.1, 0.2, 0.3]);
        assert_eq!(t.y(), &[1.0, 1.5, 2.0, 3.0]);
        assert_eq!(s.range(0), (0.1, 0.3));
    }
}
