//! Hand-evaluated energies on the analytic presets.

use num_complex::Complex64;
use proptest::prelude::*;
use worldsheet::energy::*;
use worldsheet::geometry::GeometryCache;
use worldsheet::grid::presets::{perturbed_flat, Embedding, Perturbation, PhiProfile};
use worldsheet::grid::{ChartMap, FieldSet, ParameterGrid};

fn flat(extents: Vec<(f64, f64)>, counts: Vec<usize>, phi: PhiProfile) -> (ParameterGrid, FieldSet, GeometryCache) {
    let g = ParameterGrid::new(extents, counts).unwrap();
    let f = Embedding::Flat.fields(&g, g.dims() + 1, phi).unwrap();
    let geom = GeometryCache::build(&f, &g).unwrap();
    (g, f, geom)
}

#[test]
fn cylinder_curvature_energy() {
    let rho = 0.8;
    let phi = 0.6;
    let mut prev = 0.0;
    for n in [9, 17, 33] {
        let g = ParameterGrid::new(vec![(0.0, 1.0), (0.0, 2.0)], vec![n, n]).unwrap();
        let f = Embedding::Cylinder { radius: rho }
            .fields(&g, 3, PhiProfile::Constant(Complex64::new(phi, 0.0)))
            .unwrap();
        let geom = GeometryCache::build(&f, &g).unwrap();
        let want = 0.5 * phi * phi / (rho * rho) * g.volume();
        let j1 = j1_curvature_energy(&f, &g, &geom).unwrap();
        let err = (j1 - want).abs();
        assert!(err < 2.0 * g.spacings()[1].powi(2) * want, "{j1} vs {want}");
        if prev > 0.0 {
            assert!(((prev / err).log2() - 2.0).abs() < 0.3);
        }
        prev = err;
        // Constant phi: J reduces to J_1.
        assert!((reduced_action(&f, &g, &geom).unwrap() - j1).abs() < 1e-12);
        let (dir, chr) = j2_energy(&f, &g, &geom).unwrap();
        assert!(dir.abs() < 1e-12 && chr.abs() < 1e-12);
    }
}

#[test]
fn plane_wave_dirichlet_energy() {
    let k = 2.0;
    let mut prev = 0.0;
    for n in [17, 33, 65] {
        let (g, f, geom) = flat(vec![(0.0, 1.0), (0.0, 1.5)], vec![n, n], PhiProfile::PlaneWave { k });
        let (dir, chr) = j2_energy(&f, &g, &geom).unwrap();
        let want = 0.5 * k * k * g.volume();
        let err = (dir - want).abs();
        assert!(chr.abs() < 1e-12);
        assert!(err < k * k * g.spacings()[1].powi(2) * want);
        if prev > 0.0 {
            assert!(((prev / err).log2() - 2.0).abs() < 0.3, "{prev} {err}");
        }
        prev = err;
    }
}

#[test]
fn real_phi_on_flat_sheet_has_no_connection_term() {
    let (g, mut f, _) = flat(vec![(0.0, 1.0), (0.0, 1.0)], vec![7, 7], PhiProfile::Normalized);
    for node in 0..g.len() {
        f.phi[node] = Complex64::new(1.0 + g.coord(node, 1).sin(), 0.0);
    }
    let geom = GeometryCache::build(&f, &g).unwrap();
    assert!(j2_energy(&f, &g, &geom).unwrap().1.abs() < 1e-12);
}

#[test]
fn s_tensor_examples() {
    let (g, mut f, geom) = flat(vec![(0.0, 1.0), (0.0, 1.0)], vec![5, 5], PhiProfile::Normalized);
    let s = s_tensor(&f, &g, &geom);
    assert!(s.values.iter().all(|z| z.norm() == 0.0));
    for node in 0..g.len() {
        f.phi[node] = Complex64::new(g.coord(node, 1), 0.0);
    }
    let s = s_tensor(&f, &g, &geom);
    for node in 0..g.len() {
        for l in 0..2 {
            for i in 0..2 {
                for j in 0..2 {
                    for k in 0..2 {
                        let want = if i == 1 && j == 1 && k == l { 1.0 } else { 0.0 };
                        assert!((s.get(node, l, i, j, k) - want).norm() < 1e-12);
                    }
                }
            }
        }
    }
    // g^jk S^l_jlk on this sheet: only j = k = l = 1 survives.
    assert!(s_contraction(&s, &geom).iter().all(|v| (v - 1.0).abs() < 1e-12));

    let cyl = ParameterGrid::new(vec![(0.0, 1.0), (0.0, 2.0)], vec![9, 9]).unwrap();
    let fc = Embedding::Cylinder { radius: 0.7 }.fields(&cyl, 3, PhiProfile::Normalized).unwrap();
    let gc = GeometryCache::build(&fc, &cyl).unwrap();
    assert!(s_tensor(&fc, &cyl, &gc).values.iter().all(|z| z.norm() == 0.0));
}

#[test]
fn penalty_examples() {
    let (g, f, geom) = flat(vec![(0.0, 1.5), (0.0, 2.0)], vec![7, 9], PhiProfile::Normalized);
    let mut doubled = f.clone();
    doubled.n.iter_mut().for_each(|x| *x *= 2.0);
    let geom2 = GeometryCache::build(&doubled, &g).unwrap();
    let p = penalty_terms(&doubled, &g, &geom2).unwrap();
    assert!((p.unit - 9.0 * g.volume()).abs() < 1e-12);
    assert_eq!(p.orth, 0.0);

    let mut heavy = f.clone();
    heavy.phi.iter_mut().for_each(|z| *z *= 2f64.sqrt());
    let p = penalty_terms(&heavy, &g, &geom).unwrap();
    assert!((p.norm - 1.5).abs() < 1e-12, "{p:?}");
}

#[test]
fn kinetic_term_on_identity_chart() {
    let c = 2.0;
    let m = 0.5;
    let (g, f, geom) = flat(vec![(0.0, 3.0), (0.0, 1.0)], vec![7, 9], PhiProfile::Normalized);
    let chart = ChartMap::identity(&g, c).unwrap();
    let cm = worldsheet::geometry::chart_metric(&chart).unwrap();
    // Integrand m c |phi|^2 * c * 1 * c, |phi|^2 = 1 on Omega = [0,1], time span 3/c.
    let want = m * c * c * c * (3.0 / c);
    let kin = kinetic_energy(&f, &g, &geom, &chart, &cm, m, c).unwrap();
    assert!((kin - want).abs() < 1e-12, "{kin} vs {want}");
    assert!((kinetic_energy(&f, &g, &geom, &chart, &cm, 2.0 * m, c).unwrap() - 2.0 * kin).abs() < 1e-12);
    let mut empty = f.clone();
    empty.phi.iter_mut().for_each(|z| *z = Complex64::default());
    assert_eq!(kinetic_energy(&empty, &g, &geom, &chart, &cm, m, c).unwrap(), 0.0);
}

#[test]
fn spacelike_chart_motion_is_rejected() {
    let (g, f, geom) = flat(vec![(0.0, 1.0), (0.0, 1.0)], vec![5, 5], PhiProfile::Normalized);
    let cg = ParameterGrid::new(vec![(0.0, 0.5), (0.0, 0.4)], vec![3, 3]).unwrap();
    // du_1/dt = 1.2 > c: the sampled point outruns light.
    let chart = ChartMap::from_fn(cg, 1.0, 2, |t, x| vec![t, x[0] + 1.2 * t]).unwrap();
    let cm = worldsheet::geometry::chart_metric(&chart).unwrap();
    let err = kinetic_energy(&f, &g, &geom, &chart, &cm, 1.0, 1.0).unwrap_err();
    assert!(matches!(err, worldsheet::Error::NonTimelikeMotion { .. }), "{err}");
}

#[test]
fn full_action_ignores_multipliers_on_admissible_fields() {
    let c: f64 = 1.5;
    let k = 3.0;
    let (g, mut f, _) = flat(vec![(0.0, 1.5), (0.0, 1.0)], vec![9, 9], PhiProfile::PlaneWave { k });
    // sqrt(U) = c on the identity chart, so unit chart mass needs |phi|^2 = 1/c.
    f.phi.iter_mut().for_each(|z| *z /= c.sqrt());
    let geom = GeometryCache::build(&f, &g).unwrap();
    let chart = ChartMap::identity(&g, c).unwrap();
    let consts = Constants { mass: 0.7, c };
    let zero = Multipliers::zero(&chart);
    let base = full_action(&f, &g, &geom, &chart, &zero, consts).unwrap();
    let cm = worldsheet::geometry::chart_metric(&chart).unwrap();
    let kin = kinetic_energy(&f, &g, &geom, &chart, &cm, consts.mass, c).unwrap();
    // Chart Dirichlet integrand 1/2 k^2 / c * sqrt(U) over chart volume 1.5 / c equals the D integral.
    let (dir_d, _) = j2_energy(&f, &g, &geom).unwrap();
    assert!((base - kin - dir_d).abs() < 1e-9 * base.abs(), "{base} {kin} {dir_d}");
    let mut mult = zero.clone();
    mult.energy.iter_mut().enumerate().for_each(|(i, e)| *e = 3.0 - i as f64);
    mult.orth.iter_mut().enumerate().for_each(|(i, e)| *e = (i as f64).sin());
    mult.unit.iter_mut().enumerate().for_each(|(i, e)| *e = (i as f64).cos());
    let with = full_action(&f, &g, &geom, &chart, &mult, consts).unwrap();
    assert!((with - base).abs() < 1e-10, "{with} vs {base}");
}

#[test]
fn full_action_picks_up_violated_constraints() {
    let (g, f, _) = flat(vec![(0.0, 1.0), (0.0, 1.0)], vec![5, 5], PhiProfile::Normalized);
    let mut bad = f.clone();
    bad.n.iter_mut().for_each(|x| *x *= 2.0);
    let geom = GeometryCache::build(&bad, &g).unwrap();
    let chart = ChartMap::identity(&g, 1.0).unwrap();
    let mut mult = Multipliers::zero(&chart);
    let consts = Constants { mass: 1.0, c: 1.0 };
    let base = full_action(&bad, &g, &geom, &chart, &mult, consts).unwrap();
    mult.unit.iter_mut().for_each(|x| *x = 1.0);
    // lambda_{m+1} = 1 adds int (n.n - 1) = 3 over the unit chart.
    let with = full_action(&bad, &g, &geom, &chart, &mult, consts).unwrap();
    assert!((with - base - 3.0).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn breakdown_is_consistent(seed in 0u64..1000, bump in -0.1f64..0.1, scale in 0.5f64..1.5, k in 0.0f64..1e4) {
        let g = ParameterGrid::new(vec![(0.0, 1.0), (0.0, 1.0)], vec![7, 7]).unwrap();
        let p = Perturbation { r_bump: bump, n_scale: scale, phi_noise: 0.3, seed };
        let f = perturbed_flat(&g, 3, &p).unwrap();
        let geom = GeometryCache::build(&f, &g).unwrap();
        let e = assemble_jk(&f, &g, &geom, k).unwrap();
        prop_assert!(e.penalty_norm >= 0.0 && e.penalty_orth >= 0.0 && e.penalty_unit >= 0.0);
        prop_assert!((e.total_j - (e.j1_curvature + e.j2_dirichlet + e.j2_christoffel)).abs() <= 1e-12 * e.total_j.abs().max(1.0));
        let recomputed = e.total_j + 0.5 * k * (e.penalty_norm + e.penalty_orth + e.penalty_unit);
        prop_assert!((e.total_jk - recomputed).abs() <= 1e-12 * recomputed.abs().max(1.0));
        let e2 = assemble_jk(&f, &g, &geom, 2.0 * k).unwrap();
        let lhs = e2.total_jk - e2.total_j;
        let rhs = 2.0 * (e.total_jk - e.total_j);
        prop_assert!((lhs - rhs).abs() <= 1e-10 * rhs.abs().max(1.0));
        prop_assert!((reduced_action(&f, &g, &geom).unwrap() - e.total_j).abs() <= 1e-12 * e.total_j.abs().max(1.0));
    }

    #[test]
    fn static_phi_has_nonnegative_dirichlet(amp in prop::collection::vec(0.1f64..2.0, 7), phase in -3.0f64..3.0) {
        let g = ParameterGrid::new(vec![(0.0, 1.0), (0.0, 1.0)], vec![5, 7]).unwrap();
        let mut f = Embedding::Flat.fields(&g, 3, PhiProfile::Normalized).unwrap();
        for node in 0..g.len() {
            let i = g.axis_index(node, 1);
            f.phi[node] = Complex64::from_polar(amp[i], phase * i as f64);
        }
        let geom = GeometryCache::build(&f, &g).unwrap();
        prop_assert!(j2_energy(&f, &g, &geom).unwrap().0 >= 0.0);
    }
}
