//! Second-order finite-difference stencils.
//!
//! Interior nodes use central differences; the two end nodes of each axis use
//! second-order one-sided stencils. Mixed second derivatives are the
//! composition of two first-derivative stencils, which commute on a
//! tensor-product grid.

use std::ops::{Add, Mul};

use num_complex::Complex64;

use super::ParameterGrid;
use crate::error::{Error, Result};

/// Values that can be differentiated node-wise.
pub trait FieldValue: Copy + Default + Add<Output = Self> + Mul<f64, Output = Self> {}

impl FieldValue for f64 {}
impl FieldValue for Complex64 {}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivOrder {
    First,
    Second,
}

/// Offsets (in nodes along one axis) and weights of a 1-D stencil.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Stencil {
    offsets: [isize; 4],
    weights: [f64; 4],
    len: usize,
}

impl Stencil {
    fn new(taps: &[(isize, f64)], scale: f64) -> Self {
        let mut offsets = [0; 4];
        let mut weights = [0.0; 4];
        for (i, &(o, w)) in taps.iter().enumerate() {
            offsets[i] = o;
            weights[i] = w * scale;
        }
        Self {
            offsets,
            weights,
            len: taps.len(),
        }
    }

    pub(crate) fn taps(&self) -> impl Iterator<Item = (isize, f64)> + '_ {
        self.offsets[..self.len]
            .iter()
            .copied()
            .zip(self.weights[..self.len].iter().copied())
    }
}

/// First-derivative stencil at index `i` of an axis with `count` nodes.
pub(crate) fn first_stencil(i: usize, count: usize, h: f64) -> Stencil {
    let s = 1.0 / h;
    if i == 0 {
        Stencil::new(&[(0, -1.5), (1, 2.0), (2, -0.5)], s)
    } else if i + 1 == count {
        Stencil::new(&[(-2, 0.5), (-1, -2.0), (0, 1.5)], s)
    } else {
        Stencil::new(&[(-1, -0.5), (1, 0.5)], s)
    }
}

/// Second-derivative stencil. Ends use the 4-point second-order formula when
/// the axis has at least 4 nodes and fall back to the 3-point formula (still
/// exact on quadratics) on 3-node axes.
pub(crate) fn second_stencil(i: usize, count: usize, h: f64) -> Stencil {
    let s = 1.0 / (h * h);
    if i == 0 {
        if count >= 4 {
            Stencil::new(&[(0, 2.0), (1, -5.0), (2, 4.0), (3, -1.0)], s)
        } else {
            Stencil::new(&[(0, 1.0), (1, -2.0), (2, 1.0)], s)
        }
    } else if i + 1 == count {
        if count >= 4 {
            Stencil::new(&[(-3, -1.0), (-2, 4.0), (-1, -5.0), (0, 2.0)], s)
        } else {
            Stencil::new(&[(-2, 1.0), (-1, -2.0), (0, 1.0)], s)
        }
    } else {
        Stencil::new(&[(-1, 1.0), (0, -2.0), (1, 1.0)], s)
    }
}

pub(crate) fn stencil_for(grid: &ParameterGrid, node: usize, axis: usize, order: DerivOrder) -> Stencil {
    let i = grid.axis_index(node, axis);
    let count = grid.counts()[axis];
    let h = grid.spacings()[axis];
    match order {
        DerivOrder::First => first_stencil(i, count, h),
        DerivOrder::Second => second_stencil(i, count, h),
    }
}

/// Applies a 1-D stencil along `axis` at `node` to component `comp` of a
/// field stored with `stride` values per node.
pub(crate) fn apply<T: FieldValue>(
    values: &[T],
    stride: usize,
    comp: usize,
    grid: &ParameterGrid,
    node: usize,
    axis: usize,
    stencil: &Stencil,
) -> T {
    let mut acc = T::default();
    for (o, w) in stencil.taps() {
        let nb = grid.shifted(node, axis, o);
        acc = acc + values[nb * stride + comp] * w;
    }
    acc
}

/// Mixed derivative `D_j D_k` at `node`, `j != k`, by composing first
/// stencils.
pub(crate) fn apply_mixed<T: FieldValue>(
    values: &[T],
    stride: usize,
    comp: usize,
    grid: &ParameterGrid,
    node: usize,
    j: usize,
    k: usize,
) -> T {
    let outer = stencil_for(grid, node, j, DerivOrder::First);
    let inner = stencil_for(grid, node, k, DerivOrder::First);
    let mut acc = T::default();
    for (a, wa) in outer.taps() {
        let row = grid.shifted(node, j, a);
        let mut part = T::default();
        for (b, wb) in inner.taps() {
            let nb = grid.shifted(row, k, b);
            part = part + values[nb * stride + comp] * wb;
        }
        acc = acc + part * wa;
    }
    acc
}

fn check_axis(grid: &ParameterGrid, axis: usize) -> Result<()> {
    if axis >= grid.dims() {
        return Err(Error::InvalidGrid(format!(
            "axis {axis} out of range for a {}-axis grid",
            grid.dims()
        )));
    }
    Ok(())
}

/// Derivative of a scalar node-indexed field along `axis`.
pub fn finite_difference<T: FieldValue>(
    values: &[T],
    grid: &ParameterGrid,
    axis: usize,
    order: DerivOrder,
) -> Result<Vec<T>> {
    finite_difference_vec(values, 1, grid, axis, order)
}

/// Derivative of a field with `comps` values per node (stored contiguously
/// per node).
pub fn finite_difference_vec<T: FieldValue>(
    values: &[T],
    comps: usize,
    grid: &ParameterGrid,
    axis: usize,
    order: DerivOrder,
) -> Result<Vec<T>> {
    check_axis(grid, axis)?;
    if values.len() != grid.len() * comps {
        return Err(Error::LengthMismatch {
            left: values.len(),
            right: grid.len() * comps,
        });
    }
    let mut out = vec![T::default(); values.len()];
    for node in 0..grid.len() {
        let st = stencil_for(grid, node, axis, order);
        for c in 0..comps {
            out[node * comps + c] = apply(values, comps, c, grid, node, axis, &st);
        }
    }
    Ok(out)
}

/// `d^2 f / du_j du_k`. Equal axes use the second-derivative stencil; distinct
/// axes compose first-derivative stencils.
pub fn mixed_difference<T: FieldValue>(
    values: &[T],
    grid: &ParameterGrid,
    j: usize,
    k: usize,
) -> Result<Vec<T>> {
    if j == k {
        return finite_difference(values, grid, j, DerivOrder::Second);
    }
    check_axis(grid, j)?;
    check_axis(grid, k)?;
    if values.len() != grid.len() {
        return Err(Error::LengthMismatch {
            left: values.len(),
            right: grid.len(),
        });
    }
    Ok((0..grid.len())
        .map(|node| apply_mixed(values, 1, 0, grid, node, j, k))
        .collect())
}
