//! Interpolation weights: Lagrange windows on a line and Kuhn simplices on
//! a lattice.

use crate::error::{GpaError, Result};

use super::grid::{Grid, MultiGrid};

/// Lagrange basis weights `q_k(x) = prod_{i != k} (x - x_i) / (x_k - x_i)`.
pub fn lagrange_coeffs(x: f64, nodes: &[f64]) -> Result<Vec<f64>> {
    if nodes.is_empty() {
        return Err(GpaError::InvalidInput("no interpolation nodes".into()));
    }
    for (i, a) in nodes.iter().enumerate() {
        if nodes[i + 1..].iter().any(|b| b == a) {
            return Err(GpaError::InvalidInput(format!("duplicate interpolation node {a}")));
        }
    }
    Ok(nodes
        .iter()
        .enumerate()
        .map(|(k, &xk)| {
            nodes
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != k)
                .map(|(_, &xi)| (x - xi) / (xk - xi))
                .product()
        })
        .collect())
}

/// First index of the `order + 1` grid points nearest to `x`.
///
/// Grows outward from the segment containing `x`, taking whichever
/// neighbour is closer (the lower one on ties) and shifting inward at the
/// grid ends.
pub fn nearest_window(grid: &Grid, x: f64, order: usize) -> Result<usize> {
    let width = order + 1;
    if order == 0 || width > grid.len() {
        return Err(GpaError::InvalidInput(format!(
            "order {order} needs {width} grid points, grid has {}",
            grid.len()
        )));
    }
    let j = grid.segment_of(x);
    let (mut lo, mut hi) = (j, j + 1);
    while hi - lo + 1 < width {
        let left = lo.checked_sub(1);
        let right = (hi + 1 < grid.len()).then_some(hi + 1);
        match (left, right) {
            (Some(l), Some(r)) => {
                if (x - grid.point(l)).abs() <= (grid.point(r) - x).abs() {
                    lo = l;
                } else {
                    hi = r;
                }
            }
            (Some(l), None) => lo = l,
            (None, Some(r)) => hi = r,
            (None, None) => unreachable!("width checked against grid length"),
        }
    }
    Ok(lo)
}

/// Vertices (flat lattice indices) and barycentric weights of the simplex
/// containing a point.
#[derive(Debug, Clone, PartialEq)]
pub struct Simplex {
    pub vertices: Vec<usize>,
    pub weights: Vec<f64>,
}

/// Kuhn-triangulation simplex of the lattice cell containing `x`.
///
/// With fractional cell coordinates `f` sorted in decreasing order
/// `f_(1) >= ... >= f_(p)`, the vertices walk the staircase from the cell
/// origin, adding one unit step per axis in that order, and the weights are
/// `1 - f_(1), f_(1) - f_(2), ..., f_(p)`.
pub fn find_simplex(lattice: &MultiGrid, x: &[f64]) -> Result<Simplex> {
    let dim = lattice.dim();
    if x.len() != dim {
        return Err(GpaError::InvalidDimension {
            expected: dim,
            got: x.len(),
        });
    }
    let axis = lattice.axis();
    let mut cell = vec![0usize; dim];
    let mut frac = vec![0.0; dim];
    for s in 0..dim {
        if !axis.contains(x[s]) {
            return Err(GpaError::OutOfRange {
                value: x[s],
                lo: axis.lo(),
                hi: axis.hi(),
            });
        }
        let j = axis.segment_of(x[s]);
        cell[s] = j;
        frac[s] = ((x[s] - axis.point(j)) / axis.spacing()).clamp(0.0, 1.0);
    }
    let mut axes: Vec<usize> = (0..dim).collect();
    axes.sort_by(|&a, &b| frac[b].total_cmp(&frac[a]).then(a.cmp(&b)));

    let mut vertices = Vec::with_capacity(dim + 1);
    let mut weights = Vec::with_capacity(dim + 1);
    let mut corner = cell;
    vertices.push(lattice.flat_index(&corner));
    weights.push(1.0 - frac[axes[0]]);
    for k in 0..dim {
        corner[axes[k]] += 1;
        vertices.push(lattice.flat_index(&corner));
        let next = if k + 1 < dim { frac[axes[k + 1]] } else { 0.0 };
        weights.push(frac[axes[k]] - next);
    }
    Ok(Simplex { vertices, weights })
}
