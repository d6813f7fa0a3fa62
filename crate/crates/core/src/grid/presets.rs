//! Analytic embeddings used by the scenarios and the convergence tests.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{FieldSet, ParameterGrid};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Embedding {
    /// `r(u) = (u_0, u_1, ..., u_m, 0, ..., 0)`, normal `e_{m+1}`.
    Flat,
    /// `r(u) = (u_0, rho cos(u_1/rho), rho sin(u_1/rho))` with the outward
    /// normal. Two parameters, ambient dimension 3.
    Cylinder { radius: f64 },
    /// `r(u) = (u_0, rho sin u_1 cos u_2, rho sin u_1 sin u_2, rho cos u_1)`
    /// with the outward normal. Three parameters, ambient dimension 4.
    SphereProduct { radius: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PhiProfile {
    Constant(Complex64),
    /// Constant `1/sqrt(|D_1|)`, so each time slice carries unit mass on a
    /// flat sheet.
    Normalized,
    /// `exp(i k u_1)`.
    PlaneWave { k: f64 },
}

impl Embedding {
    pub fn name(&self) -> &'static str {
        match self {
            Embedding::Flat => "flat",
            Embedding::Cylinder { .. } => "cylinder",
            Embedding::SphereProduct { .. } => "sphere_product",
        }
    }

    /// Ambient dimension `N + 1` the preset lives in for a grid with `dims`
    /// parameters.
    pub fn ambient(&self, dims: usize) -> usize {
        match self {
            Embedding::Flat => dims + 1,
            Embedding::Cylinder { .. } => 3,
            Embedding::SphereProduct { .. } => 4,
        }
    }

    fn check(&self, grid: &ParameterGrid, ambient: usize) -> Result<()> {
        let want = match self {
            Embedding::Flat => None,
            Embedding::Cylinder { .. } => Some(2),
            Embedding::SphereProduct { .. } => Some(3),
        };
        if let Some(d) = want {
            if grid.dims() != d {
                return Err(Error::Config(format!(
                    "{} preset needs {d} parameter axes, grid has {}",
                    self.name(),
                    grid.dims()
                )));
            }
            if ambient != self.ambient(d) {
                return Err(Error::Config(format!(
                    "{} preset lives in ambient dimension {}",
                    self.name(),
                    self.ambient(d)
                )));
            }
        } else if ambient <= grid.dims() {
            return Err(Error::Config("flat preset needs ambient > dims".into()));
        }
        Ok(())
    }

    pub fn position(&self, u: &[f64], ambient: usize) -> Vec<f64> {
        match *self {
            Embedding::Flat => {
                let mut r = vec![0.0; ambient];
                r[..u.len()].copy_from_slice(u);
                r
            }
            Embedding::Cylinder { radius } => {
                let th = u[1] / radius;
                vec![u[0], radius * th.cos(), radius * th.sin()]
            }
            Embedding::SphereProduct { radius } => vec![
                u[0],
                radius * u[1].sin() * u[2].cos(),
                radius * u[1].sin() * u[2].sin(),
                radius * u[1].cos(),
            ],
        }
    }

    pub fn normal(&self, u: &[f64], ambient: usize) -> Vec<f64> {
        match *self {
            Embedding::Flat => {
                let mut n = vec![0.0; ambient];
                n[u.len()] = 1.0;
                n
            }
            Embedding::Cylinder { radius } => {
                let th = u[1] / radius;
                vec![0.0, th.cos(), th.sin()]
            }
            Embedding::SphereProduct { .. } => vec![
                0.0,
                u[1].sin() * u[2].cos(),
                u[1].sin() * u[2].sin(),
                u[1].cos(),
            ],
        }
    }

    /// Samples the preset with its analytic normal and the given amplitude.
    pub fn fields(&self, grid: &ParameterGrid, ambient: usize, phi: PhiProfile) -> Result<FieldSet> {
        self.check(grid, ambient)?;
        let vol = grid.spatial_volume();
        let phi_fn = move |u: &[f64]| match phi {
            PhiProfile::Constant(z) => z,
            PhiProfile::Normalized => Complex64::new(1.0 / vol.sqrt(), 0.0),
            PhiProfile::PlaneWave { k } => Complex64::from_polar(1.0, k * u[1]),
        };
        FieldSet::from_fns(
            grid,
            ambient,
            |u| self.position(u, ambient),
            phi_fn,
            |u| self.normal(u, ambient),
        )
    }
}

/// Parameters of the perturbed flat sheet used by the penalty-continuation
/// runs.
#[derive(Debug, Clone, PartialEq)]
pub struct Perturbation {
    /// Amplitude of the static bump `prod_{i>=1} sin^2` added to the first
    /// normal coordinate of `r`. It depends on the spatial parameters only.
    pub r_bump: f64,
    /// Factor applied to the unit flat normal on every node.
    pub n_scale: f64,
    /// Amplitude of uniform random noise added to interior `phi`.
    pub phi_noise: f64,
    pub seed: u64,
}

impl Default for Perturbation {
    fn default() -> Self {
        Self {
            r_bump: 0.02,
            n_scale: 1.2,
            phi_noise: 0.05,
            seed: 7,
        }
    }
}

/// Flat sheet carrying the static bump of `p`, prescribed on the boundary as
/// sampled. `phi` is real with amplitude chosen so that every time slice of
/// the noise-free field has unit discrete mass; interior nodes get the noise.
pub fn perturbed_flat(grid: &ParameterGrid, ambient: usize, p: &Perturbation) -> Result<FieldSet> {
    let dims = grid.dims();
    let bump = |u: &[f64]| -> f64 {
        grid.extents()[1..]
            .iter()
            .zip(&u[1..])
            .map(|(&(lo, hi), &x)| (std::f64::consts::PI * (x - lo) / (hi - lo)).sin().powi(2))
            .product()
    };
    let position = |u: &[f64]| {
        let mut r = Embedding::Flat.position(u, ambient);
        r[dims] += p.r_bump * bump(u);
        r
    };
    let normal = |u: &[f64]| {
        let mut n = Embedding::Flat.normal(u, ambient);
        n.iter_mut().for_each(|x| *x *= p.n_scale);
        n
    };
    let one = Complex64::new(1.0, 0.0);
    let mut fields = FieldSet::from_fns(grid, ambient, position, |_| one, normal)?;
    // The sheet is static, so the slice at t = t_0 is representative.
    let metric = crate::geometry::metric(&fields, grid)?;
    let rule = crate::energy::QuadratureRule::trapezoid(grid);
    let mass: f64 = (0..grid.len())
        .filter(|&n| grid.axis_index(n, 0) == 0)
        .map(|n| rule.spatial_weight(grid, n) * metric.sqrt_neg_g[n])
        .sum();
    let amp = 1.0 / mass.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    for node in 0..grid.len() {
        let noise = if grid.is_boundary(node) {
            0.0
        } else {
            p.phi_noise * (2.0 * rng.gen::<f64>() - 1.0)
        };
        fields.phi[node] = Complex64::new(amp * (1.0 + noise), 0.0);
    }
    let phi_b = Complex64::new(amp, 0.0);
    fields.boundary = super::BoundaryData::from_fn(grid, |_, u| Some((position(u), phi_b)));
    Ok(fields)
}
