use num_complex::Complex64;

use super::{BoundaryFace, ParameterGrid};
use crate::error::{Error, Result};

/// Prescribed position and amplitude at one boundary node.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryValue {
    pub face: BoundaryFace,
    pub r: Vec<f64>,
    pub phi: Complex64,
}

/// Boundary data `r_0, r_1, r_2` and `phi_0, phi_1, phi_2`, stored per node.
/// The normal field carries no boundary data.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BoundaryData {
    values: Vec<Option<BoundaryValue>>,
}

impl BoundaryData {
    pub fn empty(grid: &ParameterGrid) -> Self {
        Self {
            values: vec![None; grid.len()],
        }
    }

    /// Samples `f(face, coords)` on every boundary node.
    pub fn from_fn(
        grid: &ParameterGrid,
        mut f: impl FnMut(BoundaryFace, &[f64]) -> Option<(Vec<f64>, Complex64)>,
    ) -> Self {
        let values = (0..grid.len())
            .map(|node| {
                let face = grid.face(node)?;
                let (r, phi) = f(face, &grid.coords(node))?;
                Some(BoundaryValue { face, r, phi })
            })
            .collect();
        Self { values }
    }

    pub fn get(&self, node: usize) -> Option<&BoundaryValue> {
        self.values.get(node).and_then(Option::as_ref)
    }

    pub fn set(&mut self, node: usize, value: BoundaryValue) {
        self.values[node] = Some(value);
    }
}

/// Unknowns sampled on grid nodes: position `r` and candidate normal `n`
/// (each `ambient` reals per node, stored contiguously) and the complex
/// amplitude `phi`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSet {
    /// `N + 1`, the ambient Minkowski dimension.
    pub ambient: usize,
    pub r: Vec<f64>,
    pub phi: Vec<Complex64>,
    pub n: Vec<f64>,
    pub boundary: BoundaryData,
}

impl FieldSet {
    pub fn new(
        grid: &ParameterGrid,
        ambient: usize,
        r: Vec<f64>,
        phi: Vec<Complex64>,
        n: Vec<f64>,
        boundary: BoundaryData,
    ) -> Result<Self> {
        let nodes = grid.len();
        if ambient < grid.dims() + 1 {
            return Err(Error::Config(format!(
                "ambient dimension {ambient} leaves no normal direction for a {}-parameter sheet",
                grid.dims()
            )));
        }
        for (len, want) in [(r.len(), nodes * ambient), (n.len(), nodes * ambient), (phi.len(), nodes)] {
            if len != want {
                return Err(Error::LengthMismatch { left: len, right: want });
            }
        }
        Ok(Self {
            ambient,
            r,
            phi,
            n,
            boundary,
        })
    }

    /// Samples analytic fields on every node. Boundary data is taken from the
    /// same functions.
    pub fn from_fns(
        grid: &ParameterGrid,
        ambient: usize,
        r: impl Fn(&[f64]) -> Vec<f64>,
        phi: impl Fn(&[f64]) -> Complex64,
        n: impl Fn(&[f64]) -> Vec<f64>,
    ) -> Result<Self> {
        let mut rv = Vec::with_capacity(grid.len() * ambient);
        let mut nv = Vec::with_capacity(grid.len() * ambient);
        let mut pv = Vec::with_capacity(grid.len());
        for node in 0..grid.len() {
            let u = grid.coords(node);
            let ru = r(&u);
            let nu = n(&u);
            if ru.len() != ambient || nu.len() != ambient {
                return Err(Error::LengthMismatch {
                    left: ru.len().max(nu.len()),
                    right: ambient,
                });
            }
            rv.extend(ru);
            nv.extend(nu);
            pv.push(phi(&u));
        }
        let boundary = BoundaryData::from_fn(grid, |_, u| Some((r(u), phi(u))));
        Self::new(grid, ambient, rv, pv, nv, boundary)
    }

    pub fn r_at(&self, node: usize) -> &[f64] {
        &self.r[node * self.ambient..(node + 1) * self.ambient]
    }

    pub fn n_at(&self, node: usize) -> &[f64] {
        &self.n[node * self.ambient..(node + 1) * self.ambient]
    }

    pub fn n_at_mut(&mut self, node: usize) -> &mut [f64] {
        &mut self.n[node * self.ambient..(node + 1) * self.ambient]
    }

    pub fn r_at_mut(&mut self, node: usize) -> &mut [f64] {
        &mut self.r[node * self.ambient..(node + 1) * self.ambient]
    }

    /// Overwrites boundary nodes with their prescribed data in place.
    pub fn apply_boundary_in_place(&mut self, grid: &ParameterGrid) -> Result<()> {
        for node in grid.boundary_nodes() {
            let value = self.boundary.get(node).ok_or_else(|| Error::MissingBoundary {
                node,
                index: grid.multi_index(node),
            })?;
            if value.r.len() != self.ambient {
                return Err(Error::LengthMismatch {
                    left: value.r.len(),
                    right: self.ambient,
                });
            }
            let a = self.ambient;
            self.r[node * a..(node + 1) * a].copy_from_slice(&value.r);
            self.phi[node] = value.phi;
        }
        Ok(())
    }

    /// Returns a copy with every boundary node restored to its prescribed
    /// data; interior nodes are untouched.
    pub fn apply_boundary(&self, grid: &ParameterGrid) -> Result<Self> {
        let mut out = self.clone();
        out.apply_boundary_in_place(grid)?;
        Ok(out)
    }

    /// First node where `|phi|^2 < epsilon`, if any.
    pub fn first_below_floor(&self, epsilon: f64) -> Option<usize> {
        self.phi.iter().position(|p| p.norm_sqr() < epsilon)
    }

    /// Radially clamps `phi` so that `|phi|^2 >= epsilon` everywhere; phases
    /// are preserved. Returns the number of clamped nodes.
    pub fn clamp_phi(&mut self, epsilon: f64) -> usize {
        let floor = epsilon.sqrt();
        let mut clamped = 0;
        for p in &mut self.phi {
            let r2 = p.norm_sqr();
            if r2 < epsilon {
                *p = if r2 > 0.0 {
                    *p * (floor / r2.sqrt())
                } else {
                    Complex64::new(floor, 0.0)
                };
                clamped += 1;
            }
        }
        clamped
    }
}
