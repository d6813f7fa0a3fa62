//! Penalty-method minimization of `J_K` over interior degrees of freedom.
//!
//! Unknowns per interior node are the spatial components `r_1..r_N` (the
//! gauge component `r_0 = u_0` stays fixed), all components of `n`, and
//! `Re phi`, `Im phi`. Boundary nodes are frozen.
//!
//! Gradients are central differences of `J_K`. Perturbing one unknown only
//! changes the densities of nodes whose stencils read it, so each probe
//! re-evaluates that neighbourhood and the affected time-slice masses
//! instead of the whole functional.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::energy::{breakdown_from, local_densities, Densities, EnergyBreakdown, LocalScratch, QuadratureRule};
use crate::error::{Error, Result};
use crate::geometry::{mdot, GeometryCache, SINGULAR_TOL};
use crate::grid::{finite_difference_vec, DerivOrder, FieldSet, ParameterGrid};

/// Steps below this length count as a stall.
pub const MIN_STEP: f64 = 1e-14;
/// Residuals at or below this value are excluded from slope fits.
pub const FIT_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct PenaltyConfig {
    pub k_schedule: Vec<f64>,
    pub step_init: f64,
    pub armijo_c: f64,
    pub backtrack: f64,
    /// Bound on the scaled gradient norm (see [`FieldGradient::scaled_norm`]).
    pub grad_tol: f64,
    pub max_iters: usize,
    pub fd_step: f64,
    /// Admissibility floor `|phi|^2 >= epsilon`.
    pub epsilon: f64,
    pub singular_tol: f64,
    /// Which field classes are free unknowns.
    pub free: FreeFields,
}

/// Field classes the descent may move. Frozen classes keep their input
/// values on every node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FreeFields {
    pub r: bool,
    pub n: bool,
    pub phi: bool,
}

impl Default for FreeFields {
    fn default() -> Self {
        Self {
            r: true,
            n: true,
            phi: true,
        }
    }
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        Self {
            k_schedule: vec![10.0, 100.0, 1000.0, 10000.0],
            step_init: 1e-2,
            armijo_c: 1e-4,
            backtrack: 0.5,
            grad_tol: 1e-6,
            max_iters: 5000,
            fd_step: 1e-6,
            epsilon: 1e-6,
            singular_tol: SINGULAR_TOL,
            free: FreeFields::default(),
        }
    }
}

impl PenaltyConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.k_schedule.is_empty() {
            return bad("K schedule is empty".into());
        }
        if self.k_schedule.iter().any(|k| !(*k > 0.0)) {
            return bad("K schedule entries must be positive".into());
        }
        if self.k_schedule.windows(2).any(|w| w[1] <= w[0]) {
            return bad("K schedule must be strictly increasing".into());
        }
        if !(self.armijo_c > 0.0 && self.armijo_c < 1.0) {
            return bad(format!("armijo_c = {} must lie in (0, 1)", self.armijo_c));
        }
        if !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return bad(format!("backtrack = {} must lie in (0, 1)", self.backtrack));
        }
        for (name, v) in [
            ("step_init", self.step_init),
            ("grad_tol", self.grad_tol),
            ("fd_step", self.fd_step),
            ("epsilon", self.epsilon),
            ("singular_tol", self.singular_tol),
        ] {
            if !(v > 0.0) {
                return bad(format!("{name} = {v} must be positive"));
            }
        }
        if !(self.free.r || self.free.n || self.free.phi) {
            return bad("no free field class".into());
        }
        if self.max_iters == 0 {
            return bad("max_iters must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DofKind {
    R(usize),
    N(usize),
    PhiRe,
    PhiIm,
}

/// Deterministic enumeration of the free unknowns in grid order. Interior
/// nodes carry `r_1..r_N`, `n_0..n_N`, `Re phi`, `Im phi`; boundary nodes carry
/// `n_0..n_N` only, since the boundary data prescribes `r` and `phi` but not
/// `n`. Frozen classes are left out.
#[derive(Debug, Clone)]
pub struct DofLayout {
    entries: Vec<(usize, DofKind)>,
    ambient: usize,
}

impl DofLayout {
    pub fn new(grid: &ParameterGrid, ambient: usize) -> Self {
        Self::with_free(grid, ambient, FreeFields::default())
    }

    pub fn with_free(grid: &ParameterGrid, ambient: usize, free: FreeFields) -> Self {
        let mut entries = Vec::new();
        for node in 0..grid.len() {
            let interior = !grid.is_boundary(node);
            if free.r && interior {
                entries.extend((1..ambient).map(|c| (node, DofKind::R(c))));
            }
            if free.n {
                entries.extend((0..ambient).map(|c| (node, DofKind::N(c))));
            }
            if free.phi && interior {
                entries.extend([(node, DofKind::PhiRe), (node, DofKind::PhiIm)]);
            }
        }
        Self { entries, ambient }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn node(&self, dof: usize) -> usize {
        self.entries[dof].0
    }

    pub fn kind(&self, dof: usize) -> DofKind {
        self.entries[dof].1
    }

    pub fn get(&self, fields: &FieldSet, dof: usize) -> f64 {
        let node = self.node(dof);
        let a = self.ambient;
        match self.kind(dof) {
            DofKind::R(c) => fields.r[node * a + c],
            DofKind::N(c) => fields.n[node * a + c],
            DofKind::PhiRe => fields.phi[node].re,
            DofKind::PhiIm => fields.phi[node].im,
        }
    }

    pub fn set(&self, fields: &mut FieldSet, dof: usize, value: f64) {
        let node = self.node(dof);
        let a = self.ambient;
        match self.kind(dof) {
            DofKind::R(c) => fields.r[node * a + c] = value,
            DofKind::N(c) => fields.n[node * a + c] = value,
            DofKind::PhiRe => fields.phi[node].re = value,
            DofKind::PhiIm => fields.phi[node].im = value,
        }
    }

    pub fn to_vec(&self, fields: &FieldSet) -> Vec<f64> {
        (0..self.len()).map(|i| self.get(fields, i)).collect()
    }

    pub fn write(&self, fields: &mut FieldSet, x: &[f64]) {
        for (i, &v) in x.iter().enumerate() {
            self.set(fields, i, v);
        }
    }

    /// Grid radius (per axis) of nodes whose densities read this unknown.
    fn reach(&self, dof: usize) -> usize {
        match self.kind(dof) {
            // Boundary second-derivative stencils span 4 nodes.
            DofKind::R(_) => 3,
            DofKind::N(_) => 0,
            DofKind::PhiRe | DofKind::PhiIm => 2,
        }
    }
}

/// `dJ_K` laid out like a [`FieldSet`]; frozen entries are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGradient {
    pub ambient: usize,
    pub r: Vec<f64>,
    pub n: Vec<f64>,
    /// `dJ/dRe phi + i dJ/dIm phi`.
    pub phi: Vec<Complex64>,
    flat: Vec<f64>,
    scaled_norm: f64,
}

impl FieldGradient {
    /// Gradient entries in [`DofLayout`] order.
    pub fn as_dofs(&self) -> &[f64] {
        &self.flat
    }

    pub fn norm(&self) -> f64 {
        self.flat.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    /// `sqrt(sum_i g_i^2 / w_i)` with `w_i` the quadrature weight of the
    /// unknown's node: the discrete L2 norm of the functional gradient,
    /// independent of the grid spacing.
    pub fn scaled_norm(&self) -> f64 {
        self.scaled_norm
    }

    /// Directional derivative along a perturbation laid out like a FieldSet.
    pub fn dot_fields(&self, d_r: &[f64], d_n: &[f64], d_phi: &[Complex64]) -> f64 {
        let a: f64 = self.r.iter().zip(d_r).map(|(x, y)| x * y).sum();
        let b: f64 = self.n.iter().zip(d_n).map(|(x, y)| x * y).sum();
        let c: f64 = self.phi.iter().zip(d_phi).map(|(x, y)| x.re * y.re + x.im * y.im).sum();
        a + b + c
    }
}

/// Cached state for repeated `J_K` evaluations on one grid.
pub struct Evaluator<'g> {
    grid: &'g ParameterGrid,
    rule: QuadratureRule,
    k: f64,
    singular_tol: f64,
    /// Spatial quadrature weight of every node.
    spatial_w: Vec<f64>,
}

/// One full evaluation: densities per node, slice masses and the breakdown.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub breakdown: EnergyBreakdown,
    pub densities: Vec<Densities>,
    pub slice_mass: Vec<f64>,
}

impl<'g> Evaluator<'g> {
    pub fn new(grid: &'g ParameterGrid, k: f64, singular_tol: f64) -> Self {
        let rule = QuadratureRule::trapezoid(grid);
        let spatial_w = (0..grid.len()).map(|n| rule.spatial_weight(grid, n)).collect();
        Self {
            grid,
            rule,
            k,
            singular_tol,
            spatial_w,
        }
    }

    pub fn evaluate(&self, fields: &FieldSet) -> Result<Evaluation> {
        let grid = self.grid;
        let d = grid.dims();
        let densities = (0..grid.len())
            .into_par_iter()
            .map_init(
                || LocalScratch::new(d, fields.ambient),
                |s, node| local_densities(fields, grid, node, self.singular_tol, s),
            )
            .collect::<Result<Vec<_>>>()?;
        let breakdown = breakdown_from(grid, &self.rule, &densities, self.k)?;
        if !breakdown.total_jk.is_finite() {
            return Err(Error::NonFinite { node: 0 });
        }
        let mut slice_mass = vec![0.0; grid.counts()[0]];
        for (node, x) in densities.iter().enumerate() {
            slice_mass[grid.axis_index(node, 0)] += x.mass * self.spatial_w[node];
        }
        Ok(Evaluation {
            breakdown,
            densities,
            slice_mass,
        })
    }

    /// `J_K(perturbed) - J_K(base)` where the two configurations differ only
    /// in unknowns read by the nodes in `affected`.
    fn local_delta(
        &self,
        base: &Evaluation,
        fields: &FieldSet,
        affected: &[usize],
        scratch: &mut LocalScratch,
        slice_delta: &mut [f64],
    ) -> Result<f64> {
        let grid = self.grid;
        let half_k = 0.5 * self.k;
        slice_delta.iter_mut().for_each(|x| *x = 0.0);
        let mut delta = 0.0;
        for &q in affected {
            let new = local_densities(fields, grid, q, self.singular_tol, scratch)?;
            let old = &base.densities[q];
            let w = self.rule.weights[q];
            let dj = (new.j1 - old.j1) + (new.dirichlet - old.dirichlet) + (new.christoffel - old.christoffel);
            let dp = (new.orth - old.orth) + (new.unit - old.unit);
            delta += w * (dj + half_k * dp);
            slice_delta[grid.axis_index(q, 0)] += self.spatial_w[q] * (new.mass - old.mass);
        }
        for (t, ds) in slice_delta.iter().enumerate() {
            if *ds != 0.0 {
                let s = base.slice_mass[t] - 1.0;
                let wt = self.rule.axis_weights[0][t];
                delta += half_k * wt * ((s + ds) * (s + ds) - s * s);
            }
        }
        Ok(delta)
    }
}

fn neighbourhood(grid: &ParameterGrid, node: usize, reach: usize) -> Vec<usize> {
    let idx = grid.multi_index(node);
    let ranges: Vec<(usize, usize)> = idx
        .iter()
        .zip(grid.counts())
        .map(|(&i, &c)| (i.saturating_sub(reach), (i + reach).min(c - 1)))
        .collect();
    let mut out = Vec::new();
    let mut cur: Vec<usize> = ranges.iter().map(|r| r.0).collect();
    loop {
        out.push(grid.node_at(&cur));
        let mut a = cur.len();
        loop {
            if a == 0 {
                return out;
            }
            a -= 1;
            if cur[a] < ranges[a].1 {
                cur[a] += 1;
                for (b, slot) in cur.iter_mut().enumerate().skip(a + 1) {
                    *slot = ranges[b].0;
                }
                break;
            }
        }
    }
}

/// Central finite-difference gradient of `J_K` over the free unknowns, step
/// `fd_step * (1 + |x|)` per unknown.
pub fn gradient_jk(fields: &FieldSet, grid: &ParameterGrid, k: f64, cfg: &PenaltyConfig) -> Result<FieldGradient> {
    let ev = Evaluator::new(grid, k, cfg.singular_tol);
    let base = ev.evaluate(fields)?;
    let layout = DofLayout::with_free(grid, fields.ambient, cfg.free);
    gradient_at(&ev, &layout, fields, &base, cfg.fd_step)
}

fn gradient_at(
    ev: &Evaluator<'_>,
    layout: &DofLayout,
    fields: &FieldSet,
    base: &Evaluation,
    fd_step: f64,
) -> Result<FieldGradient> {
    let grid = ev.grid;
    let d = grid.dims();
    let nt = grid.counts()[0];
    let flat = (0..layout.len())
        .into_par_iter()
        .map_init(
            || (fields.clone(), LocalScratch::new(d, fields.ambient), vec![0.0; nt]),
            |(work, scratch, slices), dof| -> Result<f64> {
                let node = layout.node(dof);
                let affected = neighbourhood(grid, node, layout.reach(dof));
                let x = layout.get(work, dof);
                let h = fd_step * (1.0 + x.abs());
                layout.set(work, dof, x + h);
                let plus = ev.local_delta(base, work, &affected, scratch, slices);
                layout.set(work, dof, x - h);
                let minus = ev.local_delta(base, work, &affected, scratch, slices);
                layout.set(work, dof, x);
                let g = (plus? - minus?) / (2.0 * h);
                if !g.is_finite() {
                    return Err(Error::NonFiniteProbe { dof });
                }
                Ok(g)
            },
        )
        .collect::<Result<Vec<f64>>>()?;
    let a = fields.ambient;
    let mut out = FieldGradient {
        ambient: a,
        r: vec![0.0; grid.len() * a],
        n: vec![0.0; grid.len() * a],
        phi: vec![Complex64::default(); grid.len()],
        flat: Vec::new(),
        scaled_norm: 0.0,
    };
    let mut s2 = 0.0;
    for (dof, &g) in flat.iter().enumerate() {
        let node = layout.node(dof);
        s2 += g * g / ev.rule.weights[node];
        match layout.kind(dof) {
            DofKind::R(c) => out.r[node * a + c] = g,
            DofKind::N(c) => out.n[node * a + c] = g,
            DofKind::PhiRe => out.phi[node].re = g,
            DofKind::PhiIm => out.phi[node].im = g,
        }
    }
    out.flat = flat;
    out.scaled_norm = s2.sqrt();
    Ok(out)
}

/// Un-squared constraint measures.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Residuals {
    /// `int_0^T |int_{D_1} |phi|^2 sqrt(-g) du - 1| dt`.
    pub norm: f64,
    /// `sqrt(sum_j int (g_j . n)^2 sqrt(-g))`.
    pub orth: f64,
    /// `sqrt(int (n.n - 1)^2 sqrt(-g))`.
    pub unit: f64,
}

impl Residuals {
    pub fn as_array(&self) -> [f64; 3] {
        [self.norm, self.orth, self.unit]
    }
}

fn residuals_of(ev: &Evaluator<'_>, e: &Evaluation) -> Residuals {
    let norm = e
        .slice_mass
        .iter()
        .zip(&ev.rule.axis_weights[0])
        .map(|(s, w)| (s - 1.0).abs() * w)
        .sum();
    Residuals {
        norm,
        orth: e.breakdown.penalty_orth.sqrt(),
        unit: e.breakdown.penalty_unit.sqrt(),
    }
}

/// Outcome of one fixed-`K` descent.
#[derive(Debug, Clone, PartialEq)]
pub struct KRecord {
    pub k: f64,
    pub iterations: usize,
    pub converged: bool,
    pub stalled: bool,
    pub initial: EnergyBreakdown,
    pub last: EnergyBreakdown,
    pub residuals: Residuals,
    pub grad_norm: f64,
    /// `J_K` after each accepted step, starting with the initial value.
    pub history: Vec<f64>,
    /// Constraint residuals alongside `history`.
    pub residual_history: Vec<Residuals>,
    /// Number of `phi` clamps applied by the admissibility projection.
    pub clamped: usize,
    /// Smallest time-slice mass `int |phi|^2 sqrt(-g) du` at the end.
    pub min_slice_mass: f64,
    /// Smallest `n.n` over nodes at the end.
    pub min_nn: f64,
}

impl KRecord {
    pub const CSV_HEADER: &'static str = "K,iterations,converged,stalled,total_JK,total_J,residual_norm,residual_orth,residual_unit,grad_norm,min_slice_mass,min_nn";

    pub fn csv_row(&self) -> String {
        format!(
            "{:.16e},{},{},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            self.k,
            self.iterations,
            self.converged,
            self.stalled,
            self.last.total_jk,
            self.last.total_j,
            self.residuals.norm,
            self.residuals.orth,
            self.residuals.unit,
            self.grad_norm,
            self.min_slice_mass,
            self.min_nn
        )
    }
}

fn project(fields: &mut FieldSet, eps: f64) -> usize {
    fields.clamp_phi(eps)
}

/// Projected gradient descent with Armijo backtracking at a fixed `K`.
///
/// The first trial step of each iteration is the Barzilai-Borwein length
/// `s.s / s.y` of the previous pair when that is positive, otherwise twice the
/// last accepted step; it is accepted only under the sufficient-decrease
/// condition `J_K(x+) <= J_K(x) - c grad.(x - x+)`, so `J_K` never increases.
pub fn minimize_fixed_k(
    fields: &FieldSet,
    grid: &ParameterGrid,
    k: f64,
    cfg: &PenaltyConfig,
) -> Result<(FieldSet, KRecord)> {
    cfg.validate()?;
    if let Some(node) = fields.first_below_floor(cfg.epsilon) {
        return Err(Error::Precondition(format!(
            "|phi|^2 = {} < epsilon = {} at node {node}",
            fields.phi[node].norm_sqr(),
            cfg.epsilon
        )));
    }
    let ev = Evaluator::new(grid, k, cfg.singular_tol);
    let layout = DofLayout::with_free(grid, fields.ambient, cfg.free);
    let mut cur = fields.clone();
    let mut eval = ev.evaluate(&cur)?;
    let initial = eval.breakdown;
    let mut history = vec![eval.breakdown.total_jk];
    let mut residual_history = vec![residuals_of(&ev, &eval)];
    let mut grad = gradient_at(&ev, &layout, &cur, &eval, cfg.fd_step)?;
    let mut x = layout.to_vec(&cur);
    let mut step = cfg.step_init;
    let mut bb: Option<f64> = None;
    let mut iterations = 0;
    let mut converged = false;
    let mut stalled = false;
    let mut clamped = 0;
    while iterations < cfg.max_iters {
        if grad.scaled_norm() <= cfg.grad_tol {
            converged = true;
            break;
        }
        let g = grad.as_dofs();
        let mut alpha = bb.unwrap_or(step);
        let f0 = eval.breakdown.total_jk;
        let accepted = loop {
            if alpha < MIN_STEP {
                break None;
            }
            let mut trial = cur.clone();
            let xt: Vec<f64> = x.iter().zip(g).map(|(xi, gi)| xi - alpha * gi).collect();
            layout.write(&mut trial, &xt);
            let nclamp = project(&mut trial, cfg.epsilon);
            let xt = if nclamp > 0 { layout.to_vec(&trial) } else { xt };
            if let Ok(te) = ev.evaluate(&trial) {
                let decrease: f64 = g.iter().zip(x.iter().zip(&xt)).map(|(gi, (a, b))| gi * (a - b)).sum();
                if te.breakdown.total_jk <= f0 - cfg.armijo_c * decrease && te.breakdown.total_jk <= f0 {
                    break Some((trial, xt, te, nclamp));
                }
            }
            alpha *= cfg.backtrack;
        };
        let Some((trial, xt, te, nclamp)) = accepted else {
            stalled = true;
            break;
        };
        iterations += 1;
        clamped += nclamp;
        let new_grad = gradient_at(&ev, &layout, &trial, &te, cfg.fd_step)?;
        let (mut ss, mut sy) = (0.0, 0.0);
        for i in 0..x.len() {
            let s = xt[i] - x[i];
            let y = new_grad.as_dofs()[i] - g[i];
            ss += s * s;
            sy += s * y;
        }
        bb = if sy > 0.0 && ss > 0.0 { Some(ss / sy) } else { None };
        step = 2.0 * alpha;
        cur = trial;
        x = xt;
        eval = te;
        grad = new_grad;
        history.push(eval.breakdown.total_jk);
        residual_history.push(residuals_of(&ev, &eval));
    }
    if !converged && grad.scaled_norm() <= cfg.grad_tol {
        converged = true;
    }
    let residuals = residuals_of(&ev, &eval);
    let min_slice_mass = eval.slice_mass.iter().copied().fold(f64::INFINITY, f64::min);
    let min_nn = (0..grid.len())
        .map(|n| mdot(cur.n_at(n), cur.n_at(n)))
        .fold(f64::INFINITY, f64::min);
    let record = KRecord {
        k,
        iterations,
        converged,
        stalled,
        initial,
        last: eval.breakdown,
        residuals,
        grad_norm: grad.scaled_norm(),
        history,
        residual_history,
        clamped,
        min_slice_mass,
        min_nn,
    };
    Ok((cur, record))
}

/// Least-squares slope of `ln y` against `ln x` over points with
/// `y > FIT_FLOOR`; `None` with fewer than two such points.
pub fn fit_loglog_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **y > FIT_FLOOR && **x > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Some(sxy / sxx)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SlopeFits {
    pub norm: Option<f64>,
    pub orth: Option<f64>,
    pub unit: Option<f64>,
}

impl SlopeFits {
    pub fn as_array(&self) -> [Option<f64>; 3] {
        [self.norm, self.orth, self.unit]
    }
}

#[derive(Debug, Clone)]
pub struct MinimizeReport {
    pub records: Vec<KRecord>,
    pub slopes: SlopeFits,
    pub fields: FieldSet,
    /// Set when the sheet dimension lies outside `5 <= m <= 8, m < N`, the
    /// range of the existence theorem behind the `O(1/K)` estimate.
    pub notice: Option<String>,
}

impl MinimizeReport {
    pub fn any_stall(&self) -> bool {
        self.records.iter().any(|r| r.stalled)
    }

    /// Every fitted slope lies in `[lo, hi]`.
    pub fn slopes_within(&self, lo: f64, hi: f64) -> bool {
        self.slopes.as_array().iter().flatten().all(|s| (lo..=hi).contains(s))
    }
}

/// Runs [`minimize_fixed_k`] over the schedule with warm starts and fits the
/// log-log decay of each residual.
pub fn penalty_continuation(fields: &FieldSet, grid: &ParameterGrid, cfg: &PenaltyConfig) -> Result<MinimizeReport> {
    cfg.validate()?;
    let m = grid.dims() - 1;
    let big_n = fields.ambient - 1;
    let notice = (!(5..=8).contains(&m) || m >= big_n).then(|| {
        format!("notice: m = {m}, N = {big_n} lies outside the existence theorem's range 5 <= m <= 8, m < N")
    });
    let mut cur = fields.clone();
    let mut records = Vec::with_capacity(cfg.k_schedule.len());
    for &k in &cfg.k_schedule {
        let (next, rec) = minimize_fixed_k(&cur, grid, k, cfg)?;
        cur = next;
        records.push(rec);
    }
    let ks: Vec<f64> = records.iter().map(|r| r.k).collect();
    let pick = |f: fn(&Residuals) -> f64| -> Vec<f64> { records.iter().map(|r| f(&r.residuals)).collect() };
    let slopes = SlopeFits {
        norm: fit_loglog_slope(&ks, &pick(|r| r.norm)),
        orth: fit_loglog_slope(&ks, &pick(|r| r.orth)),
        unit: fit_loglog_slope(&ks, &pick(|r| r.unit)),
    };
    Ok(MinimizeReport {
        records,
        slopes,
        fields: cur,
        notice,
    })
}

/// Per-hypothesis margins; negative margins are violations.
#[derive(Debug, Clone, PartialEq)]
pub struct CoercivityReport {
    /// `min_nodes (lambda_min(spatial block of g^jk) - c0)`.
    pub margin_metric: f64,
    pub violations_metric: Vec<usize>,
    /// `min_nodes (|phi|^2 g^jk b_jl b^l_k - c1 sum_i dn_i . dn_i)`.
    pub margin_normal: f64,
    pub violations_normal: Vec<usize>,
    /// `min_nodes (|phi|^2 g^jk b_jl b^l_k - c2 max_ij |d^2 r_ij|^2)`.
    pub margin_second: f64,
    pub violations_second: Vec<usize>,
    /// Smallest slice mass, to compare with the 1/4 lower bound.
    pub min_slice_mass: f64,
    /// Time indices whose slice mass is below 1/4.
    pub light_slices: Vec<usize>,
    /// Nodes where `n.n < 1/4`.
    pub short_normals: Vec<usize>,
}

impl CoercivityReport {
    pub fn holds(&self) -> bool {
        self.violations_metric.is_empty()
            && self.violations_normal.is_empty()
            && self.violations_second.is_empty()
            && self.light_slices.is_empty()
            && self.short_normals.is_empty()
    }
}

/// Pointwise check of the coercivity hypotheses. Never fails on violations;
/// they are reported with the offending nodes.
pub fn coercivity_check(
    fields: &FieldSet,
    grid: &ParameterGrid,
    geom: &GeometryCache,
    c0: f64,
    c1: f64,
    c2: f64,
) -> Result<CoercivityReport> {
    let d = grid.dims();
    let a = fields.ambient;
    let dn: Vec<Vec<f64>> = (0..d)
        .map(|ax| finite_difference_vec(&fields.n, a, grid, ax, DerivOrder::First))
        .collect::<Result<_>>()?;
    let rule = QuadratureRule::trapezoid(grid);
    let mut rep = CoercivityReport {
        margin_metric: f64::INFINITY,
        violations_metric: vec![],
        margin_normal: f64::INFINITY,
        violations_normal: vec![],
        margin_second: f64::INFINITY,
        violations_second: vec![],
        min_slice_mass: 0.0,
        light_slices: vec![],
        short_normals: vec![],
    };
    let mut mass = vec![0.0; grid.counts()[0]];
    for node in 0..grid.len() {
        let gi = geom.metric.g_inv_at(node);
        let s = d - 1;
        let lam = if s == 0 {
            f64::INFINITY
        } else {
            let block = DMatrix::from_fn(s, s, |i, j| gi[(i + 1) * d + j + 1]);
            SymmetricEigen::new(block).eigenvalues.min()
        };
        let m0 = lam - c0;
        rep.margin_metric = rep.margin_metric.min(m0);
        if m0 < 0.0 {
            rep.violations_metric.push(node);
        }
        let p2 = fields.phi[node].norm_sqr();
        let mut bb = 0.0;
        for j in 0..d {
            for k in 0..d {
                let s: f64 = (0..d).map(|l| geom.sff.b(node, j, l) * geom.sff.b_up(node, k, l)).sum();
                bb += gi[j * d + k] * s;
            }
        }
        let lhs = p2 * bb;
        let dndn: f64 = (0..d)
            .map(|i| {
                let v = &dn[i][node * a..(node + 1) * a];
                mdot(v, v)
            })
            .sum();
        let m1 = lhs - c1 * dndn;
        rep.margin_normal = rep.margin_normal.min(m1);
        if m1 < 0.0 {
            rep.violations_normal.push(node);
        }
        let sec = geom.metric.second_at(node);
        let max_sec = (0..d * d)
            .map(|jk| sec[jk * a..(jk + 1) * a].iter().map(|x| x * x).sum::<f64>())
            .fold(0.0, f64::max);
        let m2 = lhs - c2 * max_sec;
        rep.margin_second = rep.margin_second.min(m2);
        if m2 < 0.0 {
            rep.violations_second.push(node);
        }
        let n = fields.n_at(node);
        if mdot(n, n) < 0.25 {
            rep.short_normals.push(node);
        }
        mass[grid.axis_index(node, 0)] += p2 * geom.metric.sqrt_neg_g[node] * rule.spatial_weight(grid, node);
    }
    rep.min_slice_mass = mass.iter().copied().fold(f64::INFINITY, f64::min);
    rep.light_slices = mass.iter().enumerate().filter(|(_, m)| **m < 0.25).map(|(t, _)| t).collect();
    Ok(rep)
}
