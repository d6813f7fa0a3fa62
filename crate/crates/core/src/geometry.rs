//! Per-node differential geometry of a sampled world sheet.
//!
//! All inner products are Minkowski, `a.b = -a_0 b_0 + sum_i a_i b_i`. Tangents
//! `g_j = dr/du_j` and second derivatives `d^2 r/du_j du_k` come from the
//! grid stencils; everything else is pointwise algebra on those samples:
//!
//! * `g_jk = g_j . g_k`, its inverse `g^jk`, `det g` and `sqrt(-det g)`,
//! * `Gamma^l_jk = g^ls (d^2 r/du_j du_k) . g_s` (tangential projection),
//! * `b_jk = (d^2 r/du_j du_k) . n` and `b^l_j = b_jk g^kl`,
//! * `R^l_ijk = d_i Gamma^l_jk - d_j Gamma^l_ik + Gamma^p_jk Gamma^l_pi - Gamma^p_ik Gamma^l_pj`.
//!
//! The Gauss identity `b_jk b^l_i - b_ik b^l_j = R^l_ijk` and the Weingarten
//! expansion `dn/du_j = -b^l_j g_l + e^q_j nhat_q` are exposed as residuals.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::{finite_difference_vec, first_stencil, second_stencil, ChartMap, DerivOrder, FieldSet, ParameterGrid};

/// Default bound on `|det g|` below which the metric counts as degenerate.
pub const SINGULAR_TOL: f64 = 1e-10;
/// Default bound on `|v.v| / |v|^2` (Euclidean denominator) for a complement
/// vector during orthonormalization.
pub const NULL_TOL: f64 = 1e-8;
/// Euclidean norm below which a projected seed vector is skipped.
const SKIP_TOL: f64 = 1e-8;
/// Allowed deviation of `n.n` from 1 for the unit-normal operations.
pub const UNIT_TOL: f64 = 1e-8;

/// Minkowski product without length checks.
#[inline]
pub(crate) fn mdot(a: &[f64], b: &[f64]) -> f64 {
    let mut s = -a[0] * b[0];
    for i in 1..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// `-a_0 b_0 + sum_{i>=1} a_i b_i`.
pub fn minkowski_dot(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    Ok(mdot(a, b))
}

/// Tangents and second derivatives of `r` at one node.
///
/// `tangents[j * amb + c]`, `second[(j * d + k) * amb + c]` (symmetric in
/// `j, k`).
pub(crate) fn r_jet(fields: &FieldSet, grid: &ParameterGrid, node: usize, tangents: &mut [f64], second: &mut [f64]) {
    let d = grid.dims();
    let amb = fields.ambient;
    let r = &fields.r;
    let idx: Vec<usize> = (0..d).map(|a| grid.axis_index(node, a)).collect();
    let st1: Vec<_> = (0..d)
        .map(|a| first_stencil(idx[a], grid.counts()[a], grid.spacings()[a]))
        .collect();
    tangents.iter_mut().for_each(|x| *x = 0.0);
    second.iter_mut().for_each(|x| *x = 0.0);
    for j in 0..d {
        for (o, w) in st1[j].taps() {
            let nb = grid.shifted(node, j, o);
            for c in 0..amb {
                tangents[j * amb + c] += r[nb * amb + c] * w;
            }
        }
        let st2 = second_stencil(idx[j], grid.counts()[j], grid.spacings()[j]);
        for (o, w) in st2.taps() {
            let nb = grid.shifted(node, j, o);
            for c in 0..amb {
                second[(j * d + j) * amb + c] += r[nb * amb + c] * w;
            }
        }
    }
    let mut part = vec![0.0; amb];
    for j in 0..d {
        for k in 0..d {
            if j == k {
                continue;
            }
            // Outer stencil along j, inner along k; same order as the global
            // composed stencil.
            let base = (j * d + k) * amb;
            for (a, wa) in st1[j].taps() {
                let row = grid.shifted(node, j, a);
                part.iter_mut().for_each(|x| *x = 0.0);
                for (b, wb) in st1[k].taps() {
                    let nb = grid.shifted(row, k, b);
                    for c in 0..amb {
                        part[c] += r[nb * amb + c] * wb;
                    }
                }
                for c in 0..amb {
                    second[base + c] += part[c] * wa;
                }
            }
        }
    }
}

/// Metric, inverse and determinant at one node from its tangents.
pub(crate) fn metric_at(
    tangents: &[f64],
    d: usize,
    amb: usize,
    node: usize,
    singular_tol: f64,
) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    let tj = |j: usize| &tangents[j * amb..(j + 1) * amb];
    let mut g = vec![0.0; d * d];
    for j in 0..d {
        for k in j..d {
            let v = mdot(tj(j), tj(k));
            g[j * d + k] = v;
            g[k * d + j] = v;
        }
    }
    if g.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite { node });
    }
    let m = DMatrix::from_row_slice(d, d, &g);
    let det = m.determinant();
    if det.abs() < singular_tol {
        return Err(Error::DegenerateMetric { node, det });
    }
    if det > 0.0 {
        return Err(Error::Signature { node, det });
    }
    let inv = m
        .try_inverse()
        .ok_or(Error::DegenerateMetric { node, det })?;
    let mut g_inv = vec![0.0; d * d];
    for j in 0..d {
        for k in 0..d {
            g_inv[j * d + k] = 0.5 * (inv[(j, k)] + inv[(k, j)]);
        }
    }
    Ok((g, g_inv, det))
}

/// `Gamma^l_jk` at one node, layout `[(l * d + j) * d + k]`.
pub(crate) fn christoffel_at(second: &[f64], tangents: &[f64], g_inv: &[f64], d: usize, amb: usize, out: &mut [f64]) {
    let mut proj = vec![0.0; d];
    for j in 0..d {
        for k in j..d {
            let s2 = &second[(j * d + k) * amb..(j * d + k + 1) * amb];
            for s in 0..d {
                proj[s] = mdot(s2, &tangents[s * amb..(s + 1) * amb]);
            }
            for l in 0..d {
                let v: f64 = (0..d).map(|s| g_inv[l * d + s] * proj[s]).sum();
                out[(l * d + j) * d + k] = v;
                out[(l * d + k) * d + j] = v;
            }
        }
    }
}

/// `b_jk` and `b^l_j` (stored `[j * d + l]`) at one node.
pub(crate) fn sff_at(second: &[f64], n: &[f64], g_inv: &[f64], d: usize, amb: usize, b: &mut [f64], b_up: &mut [f64]) {
    for j in 0..d {
        for k in j..d {
            let v = mdot(&second[(j * d + k) * amb..(j * d + k + 1) * amb], n);
            b[j * d + k] = v;
            b[k * d + j] = v;
        }
    }
    for j in 0..d {
        for l in 0..d {
            b_up[j * d + l] = (0..d).map(|k| b[j * d + k] * g_inv[k * d + l]).sum();
        }
    }
}

/// Tangent vectors, metric and second derivatives on every node.
#[derive(Debug, Clone)]
pub struct MetricData {
    pub dims: usize,
    pub ambient: usize,
    /// `[node][j][c]`.
    pub tangents: Vec<f64>,
    /// `[node][j][k][c]`.
    pub second: Vec<f64>,
    /// `[node][j][k]`.
    pub g: Vec<f64>,
    pub g_inv: Vec<f64>,
    pub det_g: Vec<f64>,
    pub sqrt_neg_g: Vec<f64>,
}

impl MetricData {
    pub fn nodes(&self) -> usize {
        self.det_g.len()
    }

    pub fn tangent(&self, node: usize, j: usize) -> &[f64] {
        let a = self.ambient;
        let base = (node * self.dims + j) * a;
        &self.tangents[base..base + a]
    }

    pub fn tangents_at(&self, node: usize) -> &[f64] {
        let s = self.dims * self.ambient;
        &self.tangents[node * s..(node + 1) * s]
    }

    pub fn second_at(&self, node: usize) -> &[f64] {
        let s = self.dims * self.dims * self.ambient;
        &self.second[node * s..(node + 1) * s]
    }

    pub fn g_at(&self, node: usize) -> &[f64] {
        let s = self.dims * self.dims;
        &self.g[node * s..(node + 1) * s]
    }

    pub fn g_inv_at(&self, node: usize) -> &[f64] {
        let s = self.dims * self.dims;
        &self.g_inv[node * s..(node + 1) * s]
    }
}

pub fn metric(fields: &FieldSet, grid: &ParameterGrid) -> Result<MetricData> {
    metric_with_tol(fields, grid, SINGULAR_TOL)
}

pub fn metric_with_tol(fields: &FieldSet, grid: &ParameterGrid, singular_tol: f64) -> Result<MetricData> {
    let d = grid.dims();
    let amb = fields.ambient;
    let nodes = grid.len();
    let mut out = MetricData {
        dims: d,
        ambient: amb,
        tangents: vec![0.0; nodes * d * amb],
        second: vec![0.0; nodes * d * d * amb],
        g: Vec::with_capacity(nodes * d * d),
        g_inv: Vec::with_capacity(nodes * d * d),
        det_g: Vec::with_capacity(nodes),
        sqrt_neg_g: Vec::with_capacity(nodes),
    };
    for node in 0..nodes {
        let t = &mut out.tangents[node * d * amb..(node + 1) * d * amb];
        let s = &mut out.second[node * d * d * amb..(node + 1) * d * d * amb];
        r_jet(fields, grid, node, t, s);
        let (g, gi, det) = metric_at(t, d, amb, node, singular_tol)?;
        out.g.extend(g);
        out.g_inv.extend(gi);
        out.det_g.push(det);
        out.sqrt_neg_g.push((-det).sqrt());
    }
    Ok(out)
}

/// Auxiliary orthonormal spacelike normals `nhat_1..nhat_s` per node and the
/// projection of the stored candidate `n` onto the normal space.
#[derive(Debug, Clone)]
pub struct NormalFrame {
    pub count: usize,
    pub ambient: usize,
    /// `[node][q][c]`.
    pub vectors: Vec<f64>,
    /// `[node][c]`.
    pub projected_n: Vec<f64>,
}

impl NormalFrame {
    pub fn normal(&self, node: usize, q: usize) -> &[f64] {
        let base = (node * self.count + q) * self.ambient;
        &self.vectors[base..base + self.ambient]
    }

    pub fn projected(&self, node: usize) -> &[f64] {
        &self.projected_n[node * self.ambient..(node + 1) * self.ambient]
    }
}

fn tangential_part(v: &[f64], tangents: &[f64], g_inv: &[f64], d: usize, amb: usize) -> Vec<f64> {
    let proj: Vec<f64> = (0..d).map(|l| mdot(v, &tangents[l * amb..(l + 1) * amb])).collect();
    let mut out = vec![0.0; amb];
    for j in 0..d {
        let coef: f64 = (0..d).map(|l| g_inv[j * d + l] * proj[l]).sum();
        for c in 0..amb {
            out[c] += coef * tangents[j * amb + c];
        }
    }
    out
}

/// Gram-Schmidt in the Minkowski product over the tangent complement, seeded
/// by `e_0, ..., e_N` in order.
pub fn normal_frame(metric: &MetricData, fields: &FieldSet) -> Result<NormalFrame> {
    normal_frame_with_tol(metric, fields, NULL_TOL)
}

pub fn normal_frame_with_tol(metric: &MetricData, fields: &FieldSet, null_tol: f64) -> Result<NormalFrame> {
    let d = metric.dims;
    let amb = metric.ambient;
    let s = amb - d;
    let nodes = metric.nodes();
    let mut vectors = Vec::with_capacity(nodes * s * amb);
    let mut projected_n = Vec::with_capacity(nodes * amb);
    for node in 0..nodes {
        let t = metric.tangents_at(node);
        let gi = metric.g_inv_at(node);
        let mut found: Vec<Vec<f64>> = Vec::with_capacity(s);
        for seed in 0..amb {
            if found.len() == s {
                break;
            }
            let mut v = vec![0.0; amb];
            v[seed] = 1.0;
            // Two projection sweeps keep the result orthogonal to rounding
            // level even when the seed is nearly tangent.
            for _ in 0..2 {
                let tan = tangential_part(&v, t, gi, d, amb);
                for c in 0..amb {
                    v[c] -= tan[c];
                }
                for q in &found {
                    let p = mdot(&v, q);
                    for c in 0..amb {
                        v[c] -= p * q[c];
                    }
                }
            }
            let euclid2 = v.iter().map(|x| x * x).sum::<f64>();
            if euclid2.sqrt() < SKIP_TOL {
                continue;
            }
            // Null test relative to the Euclidean size of the residual.
            let vv = mdot(&v, &v);
            if vv < null_tol * euclid2 {
                return Err(Error::DegenerateFrame { node });
            }
            let inv = 1.0 / vv.sqrt();
            v.iter_mut().for_each(|x| *x *= inv);
            found.push(v);
        }
        if found.len() != s {
            return Err(Error::DegenerateFrame { node });
        }
        for q in &found {
            vectors.extend_from_slice(q);
        }
        let n = fields.n_at(node);
        let tan = tangential_part(n, t, gi, d, amb);
        projected_n.extend(n.iter().zip(&tan).map(|(a, b)| a - b));
    }
    Ok(NormalFrame {
        count: s,
        ambient: amb,
        vectors,
        projected_n,
    })
}

/// `Gamma^l_jk` per node, layout `[node][l][j][k]`.
#[derive(Debug, Clone)]
pub struct Christoffel {
    pub dims: usize,
    pub values: Vec<f64>,
}

impl Christoffel {
    pub fn get(&self, node: usize, l: usize, j: usize, k: usize) -> f64 {
        let d = self.dims;
        self.values[((node * d + l) * d + j) * d + k]
    }

    pub fn at(&self, node: usize) -> &[f64] {
        let s = self.dims.pow(3);
        &self.values[node * s..(node + 1) * s]
    }
}

pub fn christoffel(metric: &MetricData) -> Christoffel {
    let d = metric.dims;
    let amb = metric.ambient;
    let s = d * d * d;
    let mut values = vec![0.0; metric.nodes() * s];
    for node in 0..metric.nodes() {
        christoffel_at(
            metric.second_at(node),
            metric.tangents_at(node),
            metric.g_inv_at(node),
            d,
            amb,
            &mut values[node * s..(node + 1) * s],
        );
    }
    Christoffel { dims: d, values }
}

/// `b_jk` (`[node][j][k]`) and `b^l_j` (`[node][j][l]`).
#[derive(Debug, Clone)]
pub struct SecondFundamentalForm {
    pub dims: usize,
    pub b: Vec<f64>,
    pub b_up: Vec<f64>,
}

impl SecondFundamentalForm {
    pub fn b(&self, node: usize, j: usize, k: usize) -> f64 {
        self.b[(node * self.dims + j) * self.dims + k]
    }

    /// `b^l_j`.
    pub fn b_up(&self, node: usize, j: usize, l: usize) -> f64 {
        self.b_up[(node * self.dims + j) * self.dims + l]
    }

    pub fn b_at(&self, node: usize) -> &[f64] {
        let s = self.dims * self.dims;
        &self.b[node * s..(node + 1) * s]
    }

    pub fn b_up_at(&self, node: usize) -> &[f64] {
        let s = self.dims * self.dims;
        &self.b_up[node * s..(node + 1) * s]
    }
}

/// Second fundamental form along a unit normal field (`ambient` values per
/// node). Rejects normals with `|n.n - 1| > 1e-8`.
pub fn second_fundamental_form(metric: &MetricData, normal: &[f64]) -> Result<SecondFundamentalForm> {
    let amb = metric.ambient;
    if normal.len() != metric.nodes() * amb {
        return Err(Error::LengthMismatch {
            left: normal.len(),
            right: metric.nodes() * amb,
        });
    }
    for node in 0..metric.nodes() {
        let n = &normal[node * amb..(node + 1) * amb];
        let nn = mdot(n, n);
        if (nn - 1.0).abs() > UNIT_TOL {
            return Err(Error::NonUnitNormal { node, norm: nn });
        }
    }
    Ok(second_fundamental_form_unchecked(metric, normal))
}

/// Same projection for an arbitrary (not necessarily unit) candidate normal.
pub fn second_fundamental_form_unchecked(metric: &MetricData, normal: &[f64]) -> SecondFundamentalForm {
    let d = metric.dims;
    let amb = metric.ambient;
    let nodes = metric.nodes();
    let mut b = vec![0.0; nodes * d * d];
    let mut b_up = vec![0.0; nodes * d * d];
    for node in 0..nodes {
        sff_at(
            metric.second_at(node),
            &normal[node * amb..(node + 1) * amb],
            metric.g_inv_at(node),
            d,
            amb,
            &mut b[node * d * d..(node + 1) * d * d],
            &mut b_up[node * d * d..(node + 1) * d * d],
        );
    }
    SecondFundamentalForm { dims: d, b, b_up }
}

/// `R^l_ijk` per node, layout `[node][l][i][j][k]`.
#[derive(Debug, Clone)]
pub struct Riemann {
    pub dims: usize,
    pub values: Vec<f64>,
}

impl Riemann {
    pub fn get(&self, node: usize, l: usize, i: usize, j: usize, k: usize) -> f64 {
        let d = self.dims;
        self.values[(((node * d + l) * d + i) * d + j) * d + k]
    }

    pub fn nodes(&self) -> usize {
        self.values.len() / self.dims.pow(4)
    }
}

pub fn riemann(gamma: &Christoffel, grid: &ParameterGrid) -> Result<Riemann> {
    let d = gamma.dims;
    let d3 = d * d * d;
    if gamma.values.len() != grid.len() * d3 {
        return Err(Error::LengthMismatch {
            left: gamma.values.len(),
            right: grid.len() * d3,
        });
    }
    let d_gamma: Vec<Vec<f64>> = (0..d).map(|axis| interior_derivative(&gamma.values, d3, grid, axis)).collect();
    let nodes = grid.len();
    let mut values = vec![0.0; nodes * d3 * d];
    let gi = |node: usize, l: usize, j: usize, k: usize| gamma.values[node * d3 + (l * d + j) * d + k];
    for node in 0..nodes {
        for l in 0..d {
            for i in 0..d {
                for j in 0..d {
                    for k in 0..d {
                        let deriv = d_gamma[i][node * d3 + (l * d + j) * d + k]
                            - d_gamma[j][node * d3 + (l * d + i) * d + k];
                        let mut quad = 0.0;
                        for p in 0..d {
                            quad += gi(node, p, j, k) * gi(node, l, p, i) - gi(node, p, i, k) * gi(node, l, p, j);
                        }
                        values[(((node * d + l) * d + i) * d + j) * d + k] = deriv + quad;
                    }
                }
            }
        }
    }
    Ok(Riemann { dims: d, values })
}

/// First derivative along `axis` that never reads the samples on that axis's
/// two end nodes when the axis has at least 5 nodes.
///
/// Fields computed with one-sided stencils at the ends (like `Gamma`) carry an
/// `O(h^2)` error there that does not match the smooth interior error, and a
/// stencil reading it would lose one order. Nodes 0 and 1 use the quadratic
/// through samples 1, 2, 3; the far end mirrors this.
fn interior_derivative(values: &[f64], comps: usize, grid: &ParameterGrid, axis: usize) -> Vec<f64> {
    let count = grid.counts()[axis];
    let h = grid.spacings()[axis];
    if count < 5 {
        return finite_difference_vec(values, comps, grid, axis, DerivOrder::First)
            .expect("lengths checked by caller");
    }
    let mut out = vec![0.0; values.len()];
    for node in 0..grid.len() {
        let i = grid.axis_index(node, axis);
        let taps: [(isize, f64); 3] = if i == 0 {
            [(1, -2.5), (2, 4.0), (3, -1.5)]
        } else if i == 1 {
            [(0, -1.5), (1, 2.0), (2, -0.5)]
        } else if i + 2 == count {
            [(-2, 0.5), (-1, -2.0), (0, 1.5)]
        } else if i + 1 == count {
            [(-3, 1.5), (-2, -4.0), (-1, 2.5)]
        } else {
            [(-1, -0.5), (1, 0.5), (0, 0.0)]
        };
        for (o, w) in taps {
            if w == 0.0 {
                continue;
            }
            let nb = grid.shifted(node, axis, o);
            for c in 0..comps {
                out[node * comps + c] += values[nb * comps + c] * w / h;
            }
        }
    }
    out
}

/// `max |b_jk b^l_i - b_ik b^l_j - R^l_ijk|` over every node and index.
pub fn gauss_residual(riem: &Riemann, sff: &SecondFundamentalForm) -> f64 {
    let nodes: Vec<usize> = (0..riem.nodes()).collect();
    gauss_residual_on(riem, sff, &nodes)
}

/// Gauss residual restricted to `nodes`.
pub fn gauss_residual_on(riem: &Riemann, sff: &SecondFundamentalForm, nodes: &[usize]) -> f64 {
    let d = riem.dims;
    let mut worst: f64 = 0.0;
    for &node in nodes {
        for l in 0..d {
            for i in 0..d {
                for j in 0..d {
                    for k in 0..d {
                        let w = sff.b(node, j, k) * sff.b_up(node, i, l) - sff.b(node, i, k) * sff.b_up(node, j, l);
                        worst = worst.max((w - riem.get(node, l, i, j, k)).abs());
                    }
                }
            }
        }
    }
    worst
}

#[derive(Debug, Clone)]
pub struct WeingartenReport {
    /// Largest component of `dn/du_j + b^l_j g_l - e^q_j nhat_q`.
    pub max_residual: f64,
    /// Largest `|dn/du_j . n|`.
    pub max_tangency: f64,
    /// `e^q_j = dn/du_j . nhat_q`, layout `[node][j][q]`.
    pub e: Vec<f64>,
}

pub fn weingarten_residual(
    fields: &FieldSet,
    grid: &ParameterGrid,
    metric: &MetricData,
    sff: &SecondFundamentalForm,
    frame: &NormalFrame,
) -> Result<WeingartenReport> {
    let nodes: Vec<usize> = (0..grid.len()).collect();
    weingarten_residual_on(fields, grid, metric, sff, frame, &nodes)
}

pub fn weingarten_residual_on(
    fields: &FieldSet,
    grid: &ParameterGrid,
    metric: &MetricData,
    sff: &SecondFundamentalForm,
    frame: &NormalFrame,
    nodes: &[usize],
) -> Result<WeingartenReport> {
    let d = metric.dims;
    let amb = metric.ambient;
    let s = frame.count;
    let dn: Vec<Vec<f64>> = (0..d)
        .map(|axis| finite_difference_vec(&fields.n, amb, grid, axis, DerivOrder::First))
        .collect::<Result<_>>()?;
    let mut e = vec![0.0; grid.len() * d * s];
    let mut max_residual: f64 = 0.0;
    let mut max_tangency: f64 = 0.0;
    let mut res = vec![0.0; amb];
    for &node in nodes {
        let n = fields.n_at(node);
        for j in 0..d {
            let dnj = &dn[j][node * amb..(node + 1) * amb];
            max_tangency = max_tangency.max(mdot(dnj, n).abs());
            res.copy_from_slice(dnj);
            for l in 0..d {
                let coef = sff.b_up(node, j, l);
                let gl = metric.tangent(node, l);
                for c in 0..amb {
                    res[c] += coef * gl[c];
                }
            }
            for q in 0..s {
                let nq = frame.normal(node, q);
                let eq = mdot(dnj, nq);
                e[(node * d + j) * s + q] = eq;
                for c in 0..amb {
                    res[c] -= eq * nq[c];
                }
            }
            for &x in &res {
                max_residual = max_residual.max(x.abs());
            }
        }
    }
    Ok(WeingartenReport {
        max_residual,
        max_tangency,
        e,
    })
}

/// `U_ij = du/dx_i . du/dx_j` (Euclidean in parameter space) per chart node.
#[derive(Debug, Clone)]
pub struct ChartMetric {
    pub axes: usize,
    /// `[node][i][j]`.
    pub u_ij: Vec<f64>,
    /// `|det U_ij|`.
    pub u: Vec<f64>,
    pub sqrt_u: Vec<f64>,
}

impl ChartMetric {
    pub fn u_ij_at(&self, node: usize) -> &[f64] {
        let s = self.axes * self.axes;
        &self.u_ij[node * s..(node + 1) * s]
    }
}

pub fn chart_metric(chart: &ChartMap) -> Result<ChartMetric> {
    let grid = chart.grid();
    let axes = grid.dims();
    let p = chart.params();
    let derivs: Vec<Vec<f64>> = (0..axes).map(|a| chart.derivative(a)).collect::<Result<_>>()?;
    let mut u_ij = Vec::with_capacity(grid.len() * axes * axes);
    let mut u = Vec::with_capacity(grid.len());
    for node in 0..grid.len() {
        let mut m = DMatrix::zeros(axes, axes);
        for i in 0..axes {
            for j in 0..axes {
                let di = &derivs[i][node * p..(node + 1) * p];
                let dj = &derivs[j][node * p..(node + 1) * p];
                m[(i, j)] = di.iter().zip(dj).map(|(a, b)| a * b).sum::<f64>();
            }
        }
        u_ij.extend(m.transpose().iter().copied());
        u.push(m.determinant().abs());
    }
    let sqrt_u = u.iter().map(|x| x.sqrt()).collect();
    Ok(ChartMetric { axes, u_ij, u, sqrt_u })
}

/// Immutable bundle of the per-node tensors the energy functionals need,
/// built from the stored candidate normal.
#[derive(Debug, Clone)]
pub struct GeometryCache {
    pub metric: MetricData,
    pub christoffel: Christoffel,
    pub sff: SecondFundamentalForm,
}

impl GeometryCache {
    pub fn build(fields: &FieldSet, grid: &ParameterGrid) -> Result<Self> {
        Self::build_with_tol(fields, grid, SINGULAR_TOL)
    }

    pub fn build_with_tol(fields: &FieldSet, grid: &ParameterGrid, singular_tol: f64) -> Result<Self> {
        let metric = metric_with_tol(fields, grid, singular_tol)?;
        let christoffel = christoffel(&metric);
        let sff = second_fundamental_form_unchecked(&metric, &fields.n);
        Ok(Self {
            metric,
            christoffel,
            sff,
        })
    }

    pub fn dims(&self) -> usize {
        self.metric.dims
    }
}
