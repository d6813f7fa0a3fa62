//! Uniform tensor-product grids over the parameter domain `D = [0,T] x D_1`.
//!
//! Axis 0 is the time-like parameter `u_0 = ct`; axes `1..=m` span `D_1`.
//! Nodes are enumerated row-major with axis 0 slowest, so node `i` has
//! multi-index `(i_0, ..., i_m)` with `i = sum_j i_j * stride_j`.

mod chart;
mod fields;
pub mod presets;
mod stencil;

pub use chart::ChartMap;
pub use fields::{BoundaryData, BoundaryValue, FieldSet};
pub use stencil::{finite_difference, finite_difference_vec, mixed_difference, DerivOrder, FieldValue};
pub(crate) use stencil::{first_stencil, second_stencil};

use crate::error::{Error, Result};

/// Description of a grid: per-axis closed intervals and node counts.
#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub extents: Vec<(f64, f64)>,
    pub counts: Vec<usize>,
}

/// Which prescribed-data family a boundary node belongs to.
///
/// `Initial` is `u_0 = 0`, `Final` is `u_0 = T`, `Lateral` is
/// `partial D_1 x (0,T)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryFace {
    Initial,
    Final,
    Lateral,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterGrid {
    extents: Vec<(f64, f64)>,
    counts: Vec<usize>,
    spacings: Vec<f64>,
    strides: Vec<usize>,
    len: usize,
}

/// Validates `config` and builds the grid.
pub fn build_grid(config: &GridConfig) -> Result<ParameterGrid> {
    ParameterGrid::new(config.extents.clone(), config.counts.clone())
}

impl ParameterGrid {
    pub fn new(extents: Vec<(f64, f64)>, counts: Vec<usize>) -> Result<Self> {
        if extents.is_empty() {
            return Err(Error::InvalidGrid("grid needs at least one axis".into()));
        }
        if extents.len() != counts.len() {
            return Err(Error::InvalidGrid(format!(
                "{} extents but {} counts",
                extents.len(),
                counts.len()
            )));
        }
        let mut spacings = Vec::with_capacity(counts.len());
        for (axis, (&(lo, hi), &count)) in extents.iter().zip(&counts).enumerate() {
            if count < 3 {
                return Err(Error::InvalidGrid(format!(
                    "axis {axis} has {count} nodes; central differences need at least 3"
                )));
            }
            if !(lo.is_finite() && hi.is_finite()) || hi - lo <= 0.0 {
                return Err(Error::InvalidGrid(format!(
                    "axis {axis} extent [{lo}, {hi}] is degenerate"
                )));
            }
            spacings.push((hi - lo) / (count - 1) as f64);
        }
        let mut strides = vec![1; counts.len()];
        for axis in (0..counts.len() - 1).rev() {
            strides[axis] = strides[axis + 1] * counts[axis + 1];
        }
        let len = counts.iter().product();
        Ok(Self {
            extents,
            counts,
            spacings,
            strides,
            len,
        })
    }

    /// Number of parameter axes, `m + 1`.
    pub fn dims(&self) -> usize {
        self.counts.len()
    }

    /// Intrinsic spatial parameter count `m`.
    pub fn m(&self) -> usize {
        self.dims() - 1
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn extents(&self) -> &[(f64, f64)] {
        &self.extents
    }

    pub fn spacings(&self) -> &[f64] {
        &self.spacings
    }

    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Index of `node` along `axis`.
    pub fn axis_index(&self, node: usize, axis: usize) -> usize {
        (node / self.strides[axis]) % self.counts[axis]
    }

    pub fn multi_index(&self, node: usize) -> Vec<usize> {
        (0..self.dims()).map(|a| self.axis_index(node, a)).collect()
    }

    pub fn node_at(&self, index: &[usize]) -> usize {
        index.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    /// Coordinate of `node` along `axis`; the last node sits exactly on the
    /// upper extent.
    pub fn coord(&self, node: usize, axis: usize) -> f64 {
        let i = self.axis_index(node, axis);
        let (lo, hi) = self.extents[axis];
        if i + 1 == self.counts[axis] {
            hi
        } else {
            lo + i as f64 * self.spacings[axis]
        }
    }

    pub fn coords(&self, node: usize) -> Vec<f64> {
        (0..self.dims()).map(|a| self.coord(node, a)).collect()
    }

    pub fn is_boundary(&self, node: usize) -> bool {
        (0..self.dims()).any(|a| {
            let i = self.axis_index(node, a);
            i == 0 || i + 1 == self.counts[a]
        })
    }

    /// Boundary family of `node`, or `None` for interior nodes. Nodes on the
    /// time faces take precedence over lateral faces.
    pub fn face(&self, node: usize) -> Option<BoundaryFace> {
        let i0 = self.axis_index(node, 0);
        if i0 == 0 {
            Some(BoundaryFace::Initial)
        } else if i0 + 1 == self.counts[0] {
            Some(BoundaryFace::Final)
        } else if self.is_boundary(node) {
            Some(BoundaryFace::Lateral)
        } else {
            None
        }
    }

    pub fn boundary_nodes(&self) -> Vec<usize> {
        (0..self.len).filter(|&n| self.is_boundary(n)).collect()
    }

    pub fn interior_nodes(&self) -> Vec<usize> {
        (0..self.len).filter(|&n| !self.is_boundary(n)).collect()
    }

    /// Nodes whose every axis index lies at least `margin` away from both
    /// ends of the axis.
    pub fn nodes_with_margin(&self, margin: usize) -> Vec<usize> {
        (0..self.len)
            .filter(|&n| {
                (0..self.dims()).all(|a| {
                    let i = self.axis_index(n, a);
                    i >= margin && i + margin < self.counts[a]
                })
            })
            .collect()
    }

    /// Node displaced by `offset` along `axis`. The caller guarantees the
    /// result stays on the grid.
    pub(crate) fn shifted(&self, node: usize, axis: usize, offset: isize) -> usize {
        (node as isize + offset * self.strides[axis] as isize) as usize
    }

    /// Volume of `D_1` (the product of the spatial extents).
    pub fn spatial_volume(&self) -> f64 {
        self.extents[1..].iter().map(|(lo, hi)| hi - lo).product()
    }

    pub fn volume(&self) -> f64 {
        self.extents.iter().map(|(lo, hi)| hi - lo).product()
    }

    /// The same domain with `2(count-1)+1` nodes per axis.
    pub fn refined(&self) -> Self {
        let counts = self.counts.iter().map(|c| 2 * (c - 1) + 1).collect();
        Self::new(self.extents.clone(), counts).expect("refining a valid grid")
    }

    /// Node containing `u` in its lower-left cell plus the cell-local
    /// fractions, for multilinear interpolation. `None` outside the domain.
    pub(crate) fn locate(&self, u: &[f64]) -> Option<(Vec<usize>, Vec<f64>)> {
        let tol = 1e-12;
        let mut base = Vec::with_capacity(self.dims());
        let mut frac = Vec::with_capacity(self.dims());
        for (axis, &x) in u.iter().enumerate() {
            let (lo, hi) = self.extents[axis];
            let span = hi - lo;
            if x < lo - tol * span || x > hi + tol * span {
                return None;
            }
            let s = ((x - lo) / self.spacings[axis]).max(0.0);
            let cell = (s.floor() as usize).min(self.counts[axis] - 2);
            base.push(cell);
            frac.push((s - cell as f64).clamp(0.0, 1.0));
        }
        Some((base, frac))
    }
}
