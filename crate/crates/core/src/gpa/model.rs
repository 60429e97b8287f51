use crate::error::{GpaError, Result};
use crate::kernels::KernelSpec;
use crate::moments::{nw_from_stats, Estimate, MomentStats, Sample};

use super::grid::{Grid, MultiGrid, SupportMode};
use super::interp::{find_simplex, lagrange_coeffs, nearest_window};

/// Where the grid values live.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Geometry {
    Line(Grid),
    Lattice(MultiGrid),
}

impl Geometry {
    pub fn dim(&self) -> usize {
        match self {
            Geometry::Line(_) => 1,
            Geometry::Lattice(m) => m.dim(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Geometry::Line(g) => g.len(),
            Geometry::Lattice(m) => m.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// The per-axis grid.
    pub fn axis(&self) -> &Grid {
        match self {
            Geometry::Line(g) => g,
            Geometry::Lattice(m) => m.axis(),
        }
    }

    /// Grid points, row-major with `dim()` columns.
    pub fn points(&self) -> Vec<f64> {
        match self {
            Geometry::Line(g) => g.points(),
            Geometry::Lattice(m) => m.points(),
        }
    }
}

impl From<Grid> for Geometry {
    fn from(g: Grid) -> Self {
        Geometry::Line(g)
    }
}

impl From<MultiGrid> for Geometry {
    fn from(m: MultiGrid) -> Self {
        Geometry::Lattice(m)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ModelMeta {
    /// Training sample size `N`.
    pub sample_size: u64,
    /// Machines that contributed moments.
    pub machines: usize,
    pub fitted_at: Option<String>,
}

/// Interpolated prediction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub value: Estimate,
    /// The query fell outside the grid: clamped (compact support) or
    /// answered with zero (diverging support).
    pub out_of_range: bool,
}

/// Cached grid-point estimates, ready to answer queries locally.
#[derive(Debug, Clone, PartialEq)]
pub struct GpaModel {
    geometry: Geometry,
    values: Vec<Estimate>,
    bandwidth: f64,
    kernel: KernelSpec,
    order: usize,
    meta: ModelMeta,
}

impl GpaModel {
    /// Builds a model from already-computed grid values.
    pub fn from_values(
        geometry: Geometry,
        values: Vec<Estimate>,
        bandwidth: f64,
        kernel: KernelSpec,
        order: usize,
        meta: ModelMeta,
    ) -> Result<Self> {
        if values.len() != geometry.len() {
            return Err(GpaError::LayoutMismatch(format!(
                "{} values for {} grid points",
                values.len(),
                geometry.len()
            )));
        }
        if order == 0 {
            return Err(GpaError::InvalidInput("interpolation order must be >= 1".into()));
        }
        if let Geometry::Line(g) = geometry {
            if order + 1 > g.len() {
                return Err(GpaError::InvalidInput(format!(
                    "order {order} needs at least {} grid points",
                    order + 1
                )));
            }
        }
        crate::error::check_bandwidth(bandwidth)?;
        Ok(Self {
            geometry,
            values,
            bandwidth,
            kernel,
            order,
            meta,
        })
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn values(&self) -> &[Estimate] {
        &self.values
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    /// Interpolation order `nu`.
    pub fn order(&self) -> usize {
        self.order
    }

    /// Grid values combined per query: `nu + 1` on a line, `p + 1` simplex
    /// vertices on a lattice.
    pub fn stencil_size(&self) -> usize {
        match self.geometry {
            Geometry::Line(_) => self.order + 1,
            Geometry::Lattice(g) => g.dim() + 1,
        }
    }

    pub fn meta(&self) -> &ModelMeta {
        &self.meta
    }

    pub fn dim(&self) -> usize {
        self.geometry.dim()
    }

    pub fn set_meta(&mut self, meta: ModelMeta) {
        self.meta = meta;
    }

    /// Same grid values, different interpolation order.
    pub fn with_order(&self, order: usize) -> Result<Self> {
        Self::from_values(
            self.geometry,
            self.values.clone(),
            self.bandwidth,
            self.kernel.clone(),
            order,
            self.meta.clone(),
        )
    }

    /// Indices of grid points whose estimate is undefined.
    pub fn undefined_points(&self) -> Vec<usize> {
        self.values
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.is_none().then_some(i))
            .collect()
    }

    /// Linear interpolation between the two grid points bracketing `x`.
    pub fn predict_linear(&self, x: f64) -> Result<Prediction> {
        let grid = self.line()?;
        let (x, out_of_range) = match self.locate(grid, x) {
            Ok(x) => (x, false),
            Err(p) => return Ok(p),
        };
        let out = |value| Prediction { value, out_of_range };
        if let Some(j) = grid.node_at(x) {
            return Ok(out(self.values[j]));
        }
        let j = grid.segment_of(x);
        let delta = grid.spacing();
        let w_left = (grid.point(j + 1) - x) / delta;
        let w_right = (x - grid.point(j)) / delta;
        Ok(out(self.combine(&[(j, w_left), (j + 1, w_right)])))
    }

    /// Order-`nu` Lagrange interpolation through the `nu + 1` grid points
    /// nearest to `x`.
    pub fn predict_poly(&self, x: f64, order: usize) -> Result<Prediction> {
        let grid = self.line()?;
        let (x, out_of_range) = match self.locate(grid, x) {
            Ok(x) => (x, false),
            Err(p) => return Ok(p),
        };
        let out = |value| Prediction { value, out_of_range };
        if let Some(j) = grid.node_at(x) {
            return Ok(out(self.values[j]));
        }
        let start = nearest_window(grid, x, order)?;
        let nodes: Vec<f64> = (start..=start + order).map(|j| grid.point(j)).collect();
        let weights = lagrange_coeffs(x, &nodes)?;
        let terms: Vec<(usize, f64)> = weights.into_iter().enumerate().map(|(k, w)| (start + k, w)).collect();
        Ok(out(self.combine(&terms)))
    }

    /// Barycentric interpolation over the Kuhn simplex containing `x`.
    pub fn predict_multi(&self, x: &[f64]) -> Result<Prediction> {
        let lattice = match &self.geometry {
            Geometry::Lattice(m) => m,
            Geometry::Line(_) => {
                return Err(GpaError::InvalidDimension {
                    expected: 1,
                    got: x.len(),
                })
            }
        };
        let simplex = find_simplex(lattice, x)?;
        let terms: Vec<(usize, f64)> = simplex.vertices.into_iter().zip(simplex.weights).collect();
        Ok(Prediction {
            value: self.combine(&terms),
            out_of_range: false,
        })
    }

    /// Prediction at a point of `dim()` coordinates using the model's own
    /// interpolation order.
    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        if x.len() != self.dim() {
            return Err(GpaError::InvalidDimension {
                expected: self.dim(),
                got: x.len(),
            });
        }
        match self.geometry {
            Geometry::Line(_) if self.order == 1 => self.predict_linear(x[0]),
            Geometry::Line(_) => self.predict_poly(x[0], self.order),
            Geometry::Lattice(_) => self.predict_multi(x),
        }
    }

    /// Predictions at row-major `points`.
    pub fn predict_batch(&self, points: &[f64]) -> Result<Vec<Prediction>> {
        let dim = self.dim();
        if !points.len().is_multiple_of(dim) {
            return Err(GpaError::InvalidDimension {
                expected: dim,
                got: points.len() % dim,
            });
        }
        points.chunks_exact(dim).map(|q| self.predict(q)).collect()
    }

    fn line(&self) -> Result<&Grid> {
        match &self.geometry {
            Geometry::Line(g) => Ok(g),
            Geometry::Lattice(m) => Err(GpaError::InvalidDimension {
                expected: m.dim(),
                got: 1,
            }),
        }
    }

    /// Maps a query into the grid, or returns the out-of-range answer.
    fn locate(&self, grid: &Grid, x: f64) -> std::result::Result<f64, Prediction> {
        if grid.contains(x) {
            return Ok(x);
        }
        match grid.mode() {
            SupportMode::Compact => {
                let clamped = x.clamp(grid.lo(), grid.hi());
                let j = if clamped == grid.lo() { 0 } else { grid.segments() };
                Err(Prediction {
                    value: self.values[j],
                    out_of_range: true,
                })
            }
            SupportMode::Diverging => Err(Prediction {
                value: Some(0.0),
                out_of_range: true,
            }),
        }
    }

    /// Weighted sum of grid values; undefined if any value carrying a
    /// nonzero weight is undefined.
    fn combine(&self, terms: &[(usize, f64)]) -> Estimate {
        let mut acc = 0.0;
        for &(j, w) in terms {
            if w == 0.0 {
                continue;
            }
            acc += w * self.values[j]?;
        }
        Some(acc)
    }
}

/// Turns assembled grid moments into a model.
pub fn fit_grid(
    stats: &MomentStats,
    geometry: impl Into<Geometry>,
    kernel: &KernelSpec,
    order: usize,
) -> Result<GpaModel> {
    let geometry = geometry.into();
    if stats.len() != geometry.len() || stats.dim() != geometry.dim() {
        return Err(GpaError::LayoutMismatch(format!(
            "stats cover {} points in {} dims, grid has {} points in {} dims",
            stats.len(),
            stats.dim(),
            geometry.len(),
            geometry.dim()
        )));
    }
    GpaModel::from_values(
        geometry,
        nw_from_stats(stats),
        stats.bandwidth(),
        kernel.clone(),
        order,
        ModelMeta {
            sample_size: stats.sample_size() as u64,
            machines: 1,
            fitted_at: None,
        },
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderScore {
    pub order: usize,
    /// Root mean prediction error over defined predictions.
    pub rmpe: Option<f64>,
    pub undefined: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrderSelection {
    pub chosen: usize,
    pub table: Vec<OrderScore>,
}

/// Picks the interpolation order with the smallest validation RMPE.
///
/// Each model is scored at its own order; ties go to the smaller order.
pub fn select_order(models: &[GpaModel], validation: &Sample) -> Result<OrderSelection> {
    if models.is_empty() {
        return Err(GpaError::InvalidInput("no candidate models".into()));
    }
    let mut table = Vec::with_capacity(models.len());
    for model in models {
        if validation.dim() != model.dim() {
            return Err(GpaError::InvalidDimension {
                expected: model.dim(),
                got: validation.dim(),
            });
        }
        let mut sq = crate::numeric::CompensatedSum::new();
        let mut defined = 0usize;
        let mut undefined = 0usize;
        for i in 0..validation.len() {
            match model.predict(validation.row(i))?.value {
                Some(v) => {
                    let e = v - validation.y()[i];
                    sq.add(e * e);
                    defined += 1;
                }
                None => undefined += 1,
            }
        }
        table.push(OrderScore {
            order: model.order(),
            rmpe: (defined > 0).then(|| (sq.value() / defined as f64).sqrt()),
            undefined,
        });
    }
    table.sort_by_key(|s| s.order);
    let chosen = table
        .iter()
        .filter_map(|s| s.rmpe.map(|r| (s.order, r)))
        .fold(None::<(usize, f64)>, |best, (o, r)| match best {
            Some((_, b)) if b <= r => best,
            _ => Some((o, r)),
        })
        .map(|(o, _)| o)
        .ok_or_else(|| GpaError::AllUndefined("every candidate order predicted nothing".into()))?;
    Ok(OrderSelection { chosen, table })
}
