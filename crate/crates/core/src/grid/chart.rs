use super::stencil::{finite_difference_vec, DerivOrder};
use super::ParameterGrid;
use crate::error::{Error, Result};

/// Sampled parameter map `(x, t) -> u = (u_0, ..., u_m)` over `Omega x [0,T]`.
///
/// The chart grid has time as axis 0 followed by the spatial axes of
/// `Omega`. Every sample satisfies the gauge `u_0 = c t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChartMap {
    grid: ParameterGrid,
    c: f64,
    params: usize,
    u: Vec<f64>,
}

impl ChartMap {
    pub fn from_fn(
        grid: ParameterGrid,
        c: f64,
        params: usize,
        f: impl Fn(f64, &[f64]) -> Vec<f64>,
    ) -> Result<Self> {
        if !(c > 0.0) {
            return Err(Error::Chart(format!("speed constant c = {c} must be positive")));
        }
        let mut u = Vec::with_capacity(grid.len() * params);
        for node in 0..grid.len() {
            let coords = grid.coords(node);
            let t = coords[0];
            let val = f(t, &coords[1..]);
            if val.len() != params {
                return Err(Error::LengthMismatch {
                    left: val.len(),
                    right: params,
                });
            }
            let want = c * t;
            if (val[0] - want).abs() > 1e-12 * want.abs().max(1.0) {
                return Err(Error::Chart(format!(
                    "gauge u_0 = ct violated at chart node {node}: u_0 = {}, ct = {want}",
                    val[0]
                )));
            }
            u.extend(val);
        }
        Ok(Self { grid, c, params, u })
    }

    /// The chart `u = (ct, x)` whose time axis covers the `u_0` extent of
    /// `domain` and whose spatial axes coincide with `D_1`.
    pub fn identity(domain: &ParameterGrid, c: f64) -> Result<Self> {
        let mut extents = domain.extents().to_vec();
        extents[0] = (extents[0].0 / c, extents[0].1 / c);
        let grid = ParameterGrid::new(extents, domain.counts().to_vec())?;
        Self::from_fn(grid, c, domain.dims(), |t, x| {
            let mut u = Vec::with_capacity(x.len() + 1);
            u.push(c * t);
            u.extend_from_slice(x);
            u
        })
    }

    pub fn grid(&self) -> &ParameterGrid {
        &self.grid
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    /// Number of parameters `m + 1` in each sample.
    pub fn params(&self) -> usize {
        self.params
    }

    pub fn u_at(&self, node: usize) -> &[f64] {
        &self.u[node * self.params..(node + 1) * self.params]
    }

    /// `du/dx_axis` at every chart node, `params` values per node. Axis 0 is
    /// time.
    pub fn derivative(&self, axis: usize) -> Result<Vec<f64>> {
        finite_difference_vec(&self.u, self.params, &self.grid, axis, DerivOrder::First)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_chart_keeps_gauge() {
        let d = ParameterGrid::new(vec![(0.0, 2.0), (0.0, 1.0)], vec![5, 5]).unwrap();
        let chart = ChartMap::identity(&d, 2.0).unwrap();
        assert_eq!(chart.grid().extents()[0], (0.0, 1.0));
        let last = chart.grid().len() - 1;
        assert_eq!(chart.u_at(last), &[2.0, 1.0]);
        let dt = chart.derivative(0).unwrap();
        assert!((dt[0] - 2.0).abs() < 1e-12 && dt[1].abs() < 1e-12);
    }

    #[test]
    fn gauge_violation_rejected() {
        let g = ParameterGrid::new(vec![(0.0, 1.0), (0.0, 1.0)], vec![3, 3]).unwrap();
        let err = ChartMap::from_fn(g, 1.0, 2, |t, x| vec![t + 0.1, x[0]]).unwrap_err();
        assert!(matches!(err, Error::Chart(_)));
    }
}
