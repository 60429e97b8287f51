use serde::{Deserialize, Serialize};

use crate::error::{check_bandwidth, GpaError, Result};

/// Fewest segments a designed grid may have.
pub const MIN_SEGMENTS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SupportMode {
    /// Covariates live on a known bounded interval; queries outside it
    /// are clamped to the boundary.
    Compact,
    /// Covariates may be unbounded; the grid spans `[-ln N, ln N]` and
    /// queries outside it predict zero.
    Diverging,
}

/// Support specification used when designing a grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Support {
    Compact { lo: f64, hi: f64 },
    Diverging,
}

/// Equally spaced grid `lo + j (hi - lo) / J`, `0 <= j <= J`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    lo: f64,
    hi: f64,
    segments: usize,
    mode: SupportMode,
}

impl Grid {
    pub fn new(lo: f64, hi: f64, segments: usize, mode: SupportMode) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(GpaError::InvalidInput(format!("grid bounds [{lo}, {hi}] are not an interval")));
        }
        if segments == 0 {
            return Err(GpaError::InvalidInput("grid needs at least one segment".into()));
        }
        Ok(Self { lo, hi, segments, mode })
    }

    /// Compact grid on `[lo, hi]` with `segments` segments.
    pub fn compact(lo: f64, hi: f64, segments: usize) -> Result<Self> {
        Self::new(lo, hi, segments, SupportMode::Compact)
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    /// Number of segments `J`.
    pub fn segments(&self) -> usize {
        self.segments
    }

    pub fn mode(&self) -> SupportMode {
        self.mode
    }

    /// Number of grid points, `J + 1`.
    pub fn len(&self) -> usize {
        self.segments + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Spacing between adjacent points.
    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / self.segments as f64
    }

    pub fn point(&self, j: usize) -> f64 {
        if j >= self.segments {
            self.hi
        } else {
            self.lo + j as f64 * self.spacing()
        }
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len()).map(|j| self.point(j)).collect()
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    /// Segment index `j` with `x` in `[x_j, x_{j+1}]`, clamped to the grid.
    pub(crate) fn segment_of(&self, x: f64) -> usize {
        let t = ((x - self.lo) / self.spacing()).floor();
        if t <= 0.0 {
            0
        } else {
            (t as usize).min(self.segments - 1)
        }
    }

    /// Index of the grid point equal to `x` up to rounding, if any.
    pub(crate) fn node_at(&self, x: f64) -> Option<usize> {
        let t = ((x - self.lo) / self.spacing()).round();
        if t < 0.0 || t > self.segments as f64 {
            return None;
        }
        let j = t as usize;
        ((x - self.point(j)).abs() <= 1e-12 * self.spacing()).then_some(j)
    }
}

/// Grid count for bandwidth `h`: `floor(c (hi - lo) h^{-1} ln ln N)`,
/// never fewer than [`MIN_SEGMENTS`].
///
/// In diverging mode the base count is computed for a unit interval and
/// multiplied by `floor(2 ln N)`, giving the interval `[-ln N, ln N]` the
/// same spacing order as the compact case.
pub fn design_grid(n: u64, h: f64, support: Support, multiplier: f64) -> Result<Grid> {
    if n < 3 {
        return Err(GpaError::InvalidInput(format!(
            "grid design needs N >= 3 so that ln ln N > 0, got {n}"
        )));
    }
    check_bandwidth(h)?;
    if !(multiplier > 0.0 && multiplier.is_finite()) {
        return Err(GpaError::InvalidInput(format!("grid multiplier must be positive, got {multiplier}")));
    }
    let log_n = (n as f64).ln();
    let loglog = log_n.ln();
    let count = |width: f64| ((multiplier * width / h * loglog).floor() as usize).max(MIN_SEGMENTS);
    match support {
        Support::Compact { lo, hi } => Grid::new(lo, hi, count(hi - lo), SupportMode::Compact),
        Support::Diverging => {
            let blocks = ((2.0 * log_n).floor() as usize).max(1);
            Grid::new(-log_n, log_n, blocks * count(1.0), SupportMode::Diverging)
        }
    }
}

/// Lattice of `(J + 1)^p` points: one axis grid shared by every dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MultiGrid {
    axis: Grid,
    dim: usize,
}

impl MultiGrid {
    pub fn new(axis: Grid, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(GpaError::InvalidDimension { expected: 1, got: 0 });
        }
        axis.len()
            .checked_pow(dim as u32)
            .filter(|&n| n <= 50_000_000)
            .ok_or_else(|| GpaError::InvalidInput("lattice too large".into()))?;
        Ok(Self { axis, dim })
    }

    pub fn axis(&self) -> &Grid {
        &self.axis
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.axis.len().pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Flat (row-major, first axis slowest) index of a multi-index.
    pub fn flat_index(&self, multi: &[usize]) -> usize {
        let side = self.axis.len();
        multi.iter().fold(0, |acc, &j| acc * side + j)
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let side = self.axis.len();
        let mut out = vec![0; self.dim];
        for slot in out.iter_mut().rev() {
            *slot = flat % side;
            flat /= side;
        }
        out
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat).into_iter().map(|j| self.axis.point(j)).collect()
    }

    /// All lattice points, row-major with `dim` columns.
    pub fn points(&self) -> Vec<f64> {
        (0..self.len()).flat_map(|f| self.point(f)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_geometry() {
        let g = Grid::compact(0.0, 1.0, 7).unwrap();
        assert_eq!(g.len(), 8);
        assert!((g.spacing() * 7.0 - 1.0).abs() < 1e-12);
        let p = g.points();
        assert!(p.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(p[0], 0.0);
        assert_eq!(p[7], 1.0);
        assert!(Grid::compact(1.0, 1.0, 3).is_err());
        assert!(Grid::compact(0.0, 1.0, 0).is_err());
    }

    #[test]
    fn segment_location() {
        let g = Grid::compact(0.0, 1.0, 4).unwrap();
        assert_eq!(g.segment_of(-3.0), 0);
        assert_eq!(g.segment_of(0.3), 1);
        assert_eq!(g.segment_of(1.0), 3);
        assert_eq!(g.node_at(0.5), Some(2));
        assert_eq!(g.node_at(0.5 + 1e-15), Some(2));
        assert_eq!(g.node_at(0.51), None);
    }

    #[test]
    fn design_formula() {
        let n = 10_000u64;
        let h = 0.0361789;
        let g = design_grid(n, h, Support::Compact { lo: 0.0, hi: 1.0 }, 1.0).unwrap();
        let expect = ((n as f64).ln().ln() / h).floor() as usize;
        assert_eq!(g.segments(), expect);
        // clamp
        let g = design_grid(n, 50.0, Support::Compact { lo: 0.0, hi: 1.0 }, 1.0).unwrap();
        assert_eq!(g.segments(), 2);
        assert!(design_grid(2, 0.1, Support::Diverging, 1.0).is_err());
        assert!(design_grid(100, 0.1, Support::Diverging, 0.0).is_err());
        assert!(design_grid(100, 0.0, Support::Diverging, 1.0).is_err());
    }

    #[test]
    fn diverging_design() {
        let n = 10_000u64;
        let g = design_grid(n, 0.05, Support::Diverging, 1.0).unwrap();
        let ln = (n as f64).ln();
        assert_eq!(g.lo(), -ln);
        assert_eq!(g.hi(), ln);
        let base = (ln.ln() / 0.05).floor() as usize;
        assert_eq!(g.segments(), (2.0 * ln).floor() as usize * base);
        // spacing stays O(1/J_base)
        assert!(g.spacing() < 2.0 / base as f64);
        assert_eq!(g.mode(), SupportMode::Diverging);
    }

    #[test]
    fn lattice_indexing() {
        let m = MultiGrid::new(Grid::compact(0.0, 1.0, 3).unwrap(), 3).unwrap();
        assert_eq!(m.len(), 64);
        for f in [0usize, 1, 17, 63] {
            assert_eq!(m.flat_index(&m.multi_index(f)), f);
        }
        assert_eq!(m.point(1), vec![0.0, 0.0, 1.0 / 3.0]);
        assert_eq!(m.points().len(), 64 * 3);
    }
}
