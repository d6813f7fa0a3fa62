//! Energy functionals by composite trapezoid quadrature.
//!
//! Every integrand over `D` is a per-node density computed by [`densities_core`]
//! from the node's geometry and the amplitude jet. Full assembly and the
//! optimizer's local re-evaluation both go through that function, so their
//! values agree bit for bit.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::{
    christoffel_at, chart_metric, mdot, metric_at, r_jet, sff_at, ChartMetric, GeometryCache,
};
use crate::grid::{first_stencil, ChartMap, FieldSet, ParameterGrid};

/// Trapezoid weights on a tensor grid.
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub axis_weights: Vec<Vec<f64>>,
    /// Composite weight per node (product of the axis weights).
    pub weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn trapezoid(grid: &ParameterGrid) -> Self {
        let axis_weights: Vec<Vec<f64>> = (0..grid.dims())
            .map(|a| {
                let n = grid.counts()[a];
                let h = grid.spacings()[a];
                (0..n).map(|i| if i == 0 || i + 1 == n { 0.5 * h } else { h }).collect()
            })
            .collect();
        let weights = (0..grid.len())
            .map(|node| (0..grid.dims()).map(|a| axis_weights[a][grid.axis_index(node, a)]).product())
            .collect();
        Self { axis_weights, weights }
    }

    /// Weight of `node` in the spatial (axes 1..) rule of its time slice.
    pub fn spatial_weight(&self, grid: &ParameterGrid, node: usize) -> f64 {
        (1..grid.dims())
            .map(|a| self.axis_weights[a][grid.axis_index(node, a)])
            .product()
    }

    pub fn apply(&self, values: &[f64]) -> Result<f64> {
        if values.len() != self.weights.len() {
            return Err(Error::LengthMismatch {
                left: values.len(),
                right: self.weights.len(),
            });
        }
        let mut acc = 0.0;
        for (node, (v, w)) in values.iter().zip(&self.weights).enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFinite { node });
            }
            acc += v * w;
        }
        Ok(acc)
    }
}

/// Composite trapezoid integral of node values over the whole grid.
pub fn quadrature(values: &[f64], grid: &ParameterGrid) -> Result<f64> {
    QuadratureRule::trapezoid(grid).apply(values)
}

/// Spatial integral of `values` over each time slice.
pub(crate) fn slice_integrals(values: &[f64], grid: &ParameterGrid, rule: &QuadratureRule) -> Vec<f64> {
    let nt = grid.counts()[0];
    let mut out = vec![0.0; nt];
    for (node, v) in values.iter().enumerate() {
        out[grid.axis_index(node, 0)] += v * rule.spatial_weight(grid, node);
    }
    out
}

/// Integrand values at one node, each already multiplied by `sqrt(-g)`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Densities {
    /// `1/2 |phi|^2 g^jk b_jl b^l_k`.
    pub j1: f64,
    /// `1/2 g^jk Re(d_j phi d_k phi*)`.
    pub dirichlet: f64,
    /// `1/2 Re(d_l phi phi*) Gamma^l_jk g^jk`.
    pub christoffel: f64,
    /// `|phi|^2`.
    pub mass: f64,
    /// `sum_j (g_j . n)^2`.
    pub orth: f64,
    /// `(n . n - 1)^2`.
    pub unit: f64,
    pub sqrt_neg_g: f64,
}

/// Per-node geometric inputs of [`densities_core`].
pub(crate) struct NodeInputs<'a> {
    pub d: usize,
    pub amb: usize,
    pub tangents: &'a [f64],
    pub g_inv: &'a [f64],
    pub sqrt_neg_g: f64,
    pub gamma: &'a [f64],
    pub b: &'a [f64],
    pub b_up: &'a [f64],
    pub n: &'a [f64],
}

pub(crate) fn densities_core(x: &NodeInputs<'_>, phi: Complex64, dphi: &[Complex64]) -> Densities {
    let d = x.d;
    let amb = x.amb;
    let w = x.sqrt_neg_g;
    let p2 = phi.norm_sqr();
    let mut bb = 0.0;
    let mut dir = 0.0;
    for j in 0..d {
        for k in 0..d {
            let gjk = x.g_inv[j * d + k];
            let mut s = 0.0;
            for l in 0..d {
                s += x.b[j * d + l] * x.b_up[k * d + l];
            }
            bb += gjk * s;
            dir += gjk * (dphi[j] * dphi[k].conj()).re;
        }
    }
    let mut chr = 0.0;
    for l in 0..d {
        let mut trace = 0.0;
        for j in 0..d {
            for k in 0..d {
                trace += x.gamma[(l * d + j) * d + k] * x.g_inv[j * d + k];
            }
        }
        chr += (dphi[l] * phi.conj()).re * trace;
    }
    let mut orth = 0.0;
    for j in 0..d {
        let v = mdot(&x.tangents[j * amb..(j + 1) * amb], x.n);
        orth += v * v;
    }
    let nn = mdot(x.n, x.n) - 1.0;
    Densities {
        j1: 0.5 * p2 * bb * w,
        dirichlet: 0.5 * dir * w,
        christoffel: 0.5 * chr * w,
        mass: p2 * w,
        orth: orth * w,
        unit: nn * nn * w,
        sqrt_neg_g: w,
    }
}

/// `d phi / du_j` at one node.
pub(crate) fn phi_grad_at(phi: &[Complex64], grid: &ParameterGrid, node: usize, out: &mut [Complex64]) {
    for (a, slot) in out.iter_mut().enumerate() {
        let st = first_stencil(grid.axis_index(node, a), grid.counts()[a], grid.spacings()[a]);
        let mut acc = Complex64::default();
        for (o, w) in st.taps() {
            acc += phi[grid.shifted(node, a, o)] * w;
        }
        *slot = acc;
    }
}

/// Densities at every node from a prebuilt cache.
pub fn node_densities(fields: &FieldSet, grid: &ParameterGrid, geom: &GeometryCache) -> Vec<Densities> {
    let d = geom.dims();
    let mut dphi = vec![Complex64::default(); d];
    (0..grid.len())
        .map(|node| {
            phi_grad_at(&fields.phi, grid, node, &mut dphi);
            let x = NodeInputs {
                d,
                amb: fields.ambient,
                tangents: geom.metric.tangents_at(node),
                g_inv: geom.metric.g_inv_at(node),
                sqrt_neg_g: geom.metric.sqrt_neg_g[node],
                gamma: geom.christoffel.at(node),
                b: geom.sff.b_at(node),
                b_up: geom.sff.b_up_at(node),
                n: fields.n_at(node),
            };
            densities_core(&x, fields.phi[node], &dphi)
        })
        .collect()
}

/// Reusable buffers for [`local_densities`].
pub(crate) struct LocalScratch {
    tangents: Vec<f64>,
    second: Vec<f64>,
    gamma: Vec<f64>,
    b: Vec<f64>,
    b_up: Vec<f64>,
    dphi: Vec<Complex64>,
}

impl LocalScratch {
    pub(crate) fn new(d: usize, amb: usize) -> Self {
        Self {
            tangents: vec![0.0; d * amb],
            second: vec![0.0; d * d * amb],
            gamma: vec![0.0; d * d * d],
            b: vec![0.0; d * d],
            b_up: vec![0.0; d * d],
            dphi: vec![Complex64::default(); d],
        }
    }
}

/// Densities at one node recomputed from the raw fields.
pub(crate) fn local_densities(
    fields: &FieldSet,
    grid: &ParameterGrid,
    node: usize,
    singular_tol: f64,
    s: &mut LocalScratch,
) -> Result<Densities> {
    let d = grid.dims();
    let amb = fields.ambient;
    r_jet(fields, grid, node, &mut s.tangents, &mut s.second);
    let (_, g_inv, det) = metric_at(&s.tangents, d, amb, node, singular_tol)?;
    christoffel_at(&s.second, &s.tangents, &g_inv, d, amb, &mut s.gamma);
    let n = fields.n_at(node);
    sff_at(&s.second, n, &g_inv, d, amb, &mut s.b, &mut s.b_up);
    phi_grad_at(&fields.phi, grid, node, &mut s.dphi);
    let x = NodeInputs {
        d,
        amb,
        tangents: &s.tangents,
        g_inv: &g_inv,
        sqrt_neg_g: (-det).sqrt(),
        gamma: &s.gamma,
        b: &s.b,
        b_up: &s.b_up,
        n,
    };
    Ok(densities_core(&x, fields.phi[node], &s.dphi))
}

fn integrate(grid: &ParameterGrid, dens: &[Densities], f: impl Fn(&Densities) -> f64) -> Result<f64> {
    let v: Vec<f64> = dens.iter().map(f).collect();
    quadrature(&v, grid)
}

/// `J_1 = 1/2 int |phi|^2 g^jk b_jl b^l_k sqrt(-g) du`.
pub fn j1_curvature_energy(fields: &FieldSet, grid: &ParameterGrid, geom: &GeometryCache) -> Result<f64> {
    integrate(grid, &node_densities(fields, grid, geom), |x| x.j1)
}

/// Returns `(dirichlet, christoffel)`; their sum is `J_2`.
pub fn j2_energy(fields: &FieldSet, grid: &ParameterGrid, geom: &GeometryCache) -> Result<(f64, f64)> {
    let dens = node_densities(fields, grid, geom);
    Ok((integrate(grid, &dens, |x| x.dirichlet)?, integrate(grid, &dens, |x| x.christoffel)?))
}

/// `J = J_1 + J_2`.
pub fn reduced_action(fields: &FieldSet, grid: &ParameterGrid, geom: &GeometryCache) -> Result<f64> {
    let dens = node_densities(fields, grid, geom);
    integrate(grid, &dens, |x| x.j1 + x.dirichlet + x.christoffel)
}

/// Constraint penalties without the `K/2` factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Penalties {
    pub norm: f64,
    pub orth: f64,
    pub unit: f64,
}

impl Penalties {
    pub fn sum(&self) -> f64 {
        self.norm + self.orth + self.unit
    }
}

pub(crate) fn penalties_from(grid: &ParameterGrid, rule: &QuadratureRule, dens: &[Densities]) -> Result<Penalties> {
    let mass: Vec<f64> = dens.iter().map(|x| x.mass).collect();
    let slices = slice_integrals(&mass, grid, rule);
    let norm = slices
        .iter()
        .zip(&rule.axis_weights[0])
        .map(|(s, w)| (s - 1.0) * (s - 1.0) * w)
        .sum();
    let orth: Vec<f64> = dens.iter().map(|x| x.orth).collect();
    let unit: Vec<f64> = dens.iter().map(|x| x.unit).collect();
    Ok(Penalties {
        norm,
        orth: rule.apply(&orth)?,
        unit: rule.apply(&unit)?,
    })
}

pub fn penalty_terms(fields: &FieldSet, grid: &ParameterGrid, geom: &GeometryCache) -> Result<Penalties> {
    let rule = QuadratureRule::trapezoid(grid);
    penalties_from(grid, &rule, &node_densities(fields, grid, geom))
}

/// Itemized energies. `kinetic` belongs to the multiplier form only and is
/// zero in breakdowns produced by [`assemble_jk`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyBreakdown {
    pub kinetic: f64,
    pub j1_curvature: f64,
    pub j2_dirichlet: f64,
    pub j2_christoffel: f64,
    pub penalty_norm: f64,
    pub penalty_orth: f64,
    pub penalty_unit: f64,
    pub total_j: f64,
    pub total_jk: f64,
    pub k: f64,
}

impl EnergyBreakdown {
    pub const CSV_HEADER: &'static str =
        "K,j1,j2_dirichlet,j2_christoffel,penalty_norm,penalty_orth,penalty_unit,total_J,total_JK";

    pub fn csv_row(&self) -> String {
        [
            self.k,
            self.j1_curvature,
            self.j2_dirichlet,
            self.j2_christoffel,
            self.penalty_norm,
            self.penalty_orth,
            self.penalty_unit,
            self.total_j,
            self.total_jk,
        ]
        .iter()
        .map(|v| format!("{v:.16e}"))
        .collect::<Vec<_>>()
        .join(",")
    }

    pub fn penalties(&self) -> Penalties {
        Penalties {
            norm: self.penalty_norm,
            orth: self.penalty_orth,
            unit: self.penalty_unit,
        }
    }
}

pub(crate) fn breakdown_from(grid: &ParameterGrid, rule: &QuadratureRule, dens: &[Densities], k: f64) -> Result<EnergyBreakdown> {
    let col = |f: fn(&Densities) -> f64| rule.apply(&dens.iter().map(f).collect::<Vec<_>>());
    let j1 = col(|x| x.j1)?;
    let dir = col(|x| x.dirichlet)?;
    let chr = col(|x| x.christoffel)?;
    let p = penalties_from(grid, rule, dens)?;
    let total_j = j1 + dir + chr;
    Ok(EnergyBreakdown {
        kinetic: 0.0,
        j1_curvature: j1,
        j2_dirichlet: dir,
        j2_christoffel: chr,
        penalty_norm: p.norm,
        penalty_orth: p.orth,
        penalty_unit: p.unit,
        total_j,
        total_jk: total_j + 0.5 * k * p.sum(),
        k,
    })
}

/// `J_K = J + K/2 (norm + orth + unit)`.
pub fn assemble_jk(fields: &FieldSet, grid: &ParameterGrid, geom: &GeometryCache, k: f64) -> Result<EnergyBreakdown> {
    if !(k >= 0.0) {
        return Err(Error::Precondition(format!("penalty weight K = {k} must be non-negative")));
    }
    let rule = QuadratureRule::trapezoid(grid);
    breakdown_from(grid, &rule, &node_densities(fields, grid, geom), k)
}

/// `S^l_ijk = d_j phi d_i phi* delta_kl + d_i phi phi* Gamma^l_jk`, layout
/// `[node][l][i][j][k]`.
#[derive(Debug, Clone)]
pub struct STensor {
    pub dims: usize,
    pub values: Vec<Complex64>,
}

impl STensor {
    pub fn get(&self, node: usize, l: usize, i: usize, j: usize, k: usize) -> Complex64 {
        let d = self.dims;
        self.values[(((node * d + l) * d + i) * d + j) * d + k]
    }
}

pub fn s_tensor(fields: &FieldSet, grid: &ParameterGrid, geom: &GeometryCache) -> STensor {
    let d = geom.dims();
    let mut values = Vec::with_capacity(grid.len() * d.pow(4));
    let mut dphi = vec![Complex64::default(); d];
    for node in 0..grid.len() {
        phi_grad_at(&fields.phi, grid, node, &mut dphi);
        let pc = fields.phi[node].conj();
        for l in 0..d {
            for i in 0..d {
                for j in 0..d {
                    for k in 0..d {
                        let mut v = dphi[i] * pc * geom.christoffel.get(node, l, j, k);
                        if k == l {
                            v += dphi[j] * dphi[i].conj();
                        }
                        values.push(v);
                    }
                }
            }
        }
    }
    STensor { dims: d, values }
}

/// `Re[g^jk S^l_jlk]` per node (the trace appearing in the tensor form of
/// `J_2`; the expanded integrand used by [`j2_energy`] differs in which
/// factor carries the conjugate).
pub fn s_contraction(s: &STensor, geom: &GeometryCache) -> Vec<f64> {
    let d = s.dims;
    (0..geom.metric.nodes())
        .map(|node| {
            let gi = geom.metric.g_inv_at(node);
            let mut acc = Complex64::default();
            for j in 0..d {
                for k in 0..d {
                    for l in 0..d {
                        acc += s.get(node, l, j, l, k) * gi[j * d + k];
                    }
                }
            }
            acc.re
        })
        .collect()
}

/// Multilinear interpolation of a field with `comps` values per node at `u`.
fn interpolate(grid: &ParameterGrid, values: &[f64], comps: usize, u: &[f64], out: &mut [f64]) -> Result<()> {
    let (base, frac) = grid
        .locate(u)
        .ok_or_else(|| Error::Chart(format!("chart point {u:?} lies outside the parameter domain")))?;
    let d = grid.dims();
    out.iter_mut().for_each(|x| *x = 0.0);
    for corner in 0..(1usize << d) {
        let mut w = 1.0;
        let mut idx = Vec::with_capacity(d);
        for a in 0..d {
            let up = (corner >> a) & 1;
            w *= if up == 1 { frac[a] } else { 1.0 - frac[a] };
            idx.push(base[a] + up);
        }
        if w == 0.0 {
            continue;
        }
        let node = grid.node_at(&idx);
        for c in 0..comps {
            out[c] += w * values[node * comps + c];
        }
    }
    Ok(())
}

/// Kinetic term `int mc |phi|^2 sqrt(-g_jk du_j/dt du_k/dt) sqrt(-g) sqrt(U) dx dt`
/// over the chart grid; `D`-grid quantities are interpolated at `u(x,t)`.
pub fn kinetic_energy(
    fields: &FieldSet,
    grid: &ParameterGrid,
    geom: &GeometryCache,
    chart: &ChartMap,
    cm: &ChartMetric,
    mass: f64,
    c: f64,
) -> Result<f64> {
    Ok(chart_integrands(fields, grid, geom, chart, cm, mass, c)?.kinetic_total)
}

struct ChartIntegrals {
    kinetic_total: f64,
    reduced_total: f64,
    /// `int_Omega |phi|^2 sqrt(-g) sqrt(U) dx` per chart time node.
    mass_slices: Vec<f64>,
    rule: QuadratureRule,
    /// `(g_j . n) sqrt(-g) sqrt(U)` per chart node and j.
    orth_lin: Vec<f64>,
    /// `(n . n - 1) sqrt(-g) sqrt(U)` per chart node.
    unit_lin: Vec<f64>,
}

fn chart_integrands(
    fields: &FieldSet,
    grid: &ParameterGrid,
    geom: &GeometryCache,
    chart: &ChartMap,
    cm: &ChartMetric,
    mass: f64,
    c: f64,
) -> Result<ChartIntegrals> {
    let d = grid.dims();
    if chart.params() != d {
        return Err(Error::Chart(format!(
            "chart has {} parameters, sheet has {d}",
            chart.params()
        )));
    }
    let dens = node_densities(fields, grid, geom);
    // Node tables interpolated at chart points.
    // cols: |phi|^2, sqrt(-g), J integrand, g_jk (d*d), (g_j.n) sqrt(-g) (d), (n.n-1) sqrt(-g).
    let cols = 3 + d * d + d + 1;
    let mut table = Vec::with_capacity(grid.len() * cols);
    for (node, x) in dens.iter().enumerate() {
        table.push(fields.phi[node].norm_sqr());
        table.push(x.sqrt_neg_g);
        table.push(x.j1 + x.dirichlet + x.christoffel);
        table.extend_from_slice(geom.metric.g_at(node));
        let n = fields.n_at(node);
        for j in 0..d {
            table.push(mdot(geom.metric.tangent(node, j), n) * x.sqrt_neg_g);
        }
        table.push((mdot(n, n) - 1.0) * x.sqrt_neg_g);
    }
    let cg = chart.grid();
    let udot = chart.derivative(0)?;
    let rule = QuadratureRule::trapezoid(cg);
    let mut kin = vec![0.0; cg.len()];
    let mut red = vec![0.0; cg.len()];
    let mut mass_n = vec![0.0; cg.len()];
    let mut orth_lin = vec![0.0; cg.len() * d];
    let mut unit_lin = vec![0.0; cg.len()];
    let mut row = vec![0.0; cols];
    for node in 0..cg.len() {
        interpolate(grid, &table, cols, chart.u_at(node), &mut row)?;
        let su = cm.sqrt_u[node];
        let ud = &udot[node * d..(node + 1) * d];
        let g = &row[3..3 + d * d];
        let mut q = 0.0;
        for j in 0..d {
            for k in 0..d {
                q += g[j * d + k] * ud[j] * ud[k];
            }
        }
        let speed = -q;
        if !(speed > 0.0) {
            return Err(Error::NonTimelikeMotion { node, value: speed });
        }
        kin[node] = mass * c * row[0] * speed.sqrt() * row[1] * su;
        red[node] = row[2] * su;
        mass_n[node] = row[0] * row[1] * su;
        for j in 0..d {
            orth_lin[node * d + j] = row[3 + d * d + j] * su;
        }
        unit_lin[node] = row[3 + d * d + d] * su;
    }
    Ok(ChartIntegrals {
        kinetic_total: rule.apply(&kin)?,
        reduced_total: rule.apply(&red)?,
        mass_slices: slice_integrals(&mass_n, cg, &rule),
        rule,
        orth_lin,
        unit_lin,
    })
}

/// Multiplier fields of the constrained functional, sampled on the chart grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Multipliers {
    /// `E(t)` per chart time node.
    pub energy: Vec<f64>,
    /// `lambda_j(x, t)`, layout `[chart node][j]`.
    pub orth: Vec<f64>,
    /// `lambda_{m+1}(x, t)` per chart node.
    pub unit: Vec<f64>,
}

impl Multipliers {
    pub fn zero(chart: &ChartMap) -> Self {
        let g = chart.grid();
        Self {
            energy: vec![0.0; g.counts()[0]],
            orth: vec![0.0; g.len() * chart.params()],
            unit: vec![0.0; g.len()],
        }
    }
}

/// Physical constants of the kinetic term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constants {
    pub mass: f64,
    pub c: f64,
}

/// Constrained functional with multiplier terms, evaluation only:
/// kinetic + `J_1` + `J_2` - `int E(t) (int |phi|^2 sqrt(-g) sqrt(U) dx - 1) dt`
/// + `sum_j int lambda_j (g_j . n) sqrt(-g) sqrt(U)` + `int lambda_{m+1} (n.n - 1) sqrt(-g) sqrt(U)`.
pub fn full_action(
    fields: &FieldSet,
    grid: &ParameterGrid,
    geom: &GeometryCache,
    chart: &ChartMap,
    multipliers: &Multipliers,
    constants: Constants,
) -> Result<f64> {
    let cm = chart_metric(chart)?;
    let d = grid.dims();
    let cg = chart.grid();
    let want = [
        (multipliers.energy.len(), cg.counts()[0]),
        (multipliers.orth.len(), cg.len() * d),
        (multipliers.unit.len(), cg.len()),
    ];
    for (len, right) in want {
        if len != right {
            return Err(Error::LengthMismatch { left: len, right });
        }
    }
    let ci = chart_integrands(fields, grid, geom, chart, &cm, constants.mass, constants.c)?;
    let e_term: f64 = ci
        .mass_slices
        .iter()
        .zip(&multipliers.energy)
        .zip(&ci.rule.axis_weights[0])
        .map(|((s, e), w)| e * (s - 1.0) * w)
        .sum();
    let orth: Vec<f64> = (0..cg.len())
        .map(|node| (0..d).map(|j| multipliers.orth[node * d + j] * ci.orth_lin[node * d + j]).sum())
        .collect();
    let unit: Vec<f64> = (0..cg.len()).map(|node| multipliers.unit[node] * ci.unit_lin[node]).collect();
    Ok(ci.kinetic_total + ci.reduced_total - e_term + ci.rule.apply(&orth)? + ci.rule.apply(&unit)?)
}
