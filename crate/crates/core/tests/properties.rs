use std::f64::consts::PI;

use proptest::prelude::*;
use twistqw::discretization::{build_grid_with_spacing, SparseOperator, TripletBuilder};
use twistqw::geometry::{matmul3, metric_at, map_point, twist_angle, twist_rate, TwistProfile};
use twistqw::linalg::{shift_invert_eigs, sparse_factor, ArnoldiOptions};
use twistqw::model::{
    bound_levels, level_table, potential_value, reference_transmission_1d, subband_energy, WaveguideSpec,
};
use twistqw::resonance::{fano_lineshape, fit_model, lifetime, FanoModel};
use twistqw::spectra::{unwrap_phases, SpectrumRow};
use twistqw::units::HBAR_MEV_PS;
use twistqw::Complex64;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Gaussian elimination with partial pivoting on a dense copy.
fn dense_solve(mut a: Vec<Vec<Complex64>>, mut b: Vec<Complex64>) -> Vec<Complex64> {
    let n = b.len();
    for col in 0..n {
        let p = (col..n).max_by(|&i, &j| a[i][col].norm().total_cmp(&a[j][col].norm())).unwrap();
        a.swap(col, p);
        b.swap(col, p);
        for r in col + 1..n {
            let f = a[r][col] / a[col][col];
            for k in col..n {
                let v = a[col][k];
                a[r][k] -= f * v;
            }
            let v = b[col];
            b[r] -= f * v;
        }
    }
    let mut x = vec![c(0.0, 0.0); n];
    for r in (0..n).rev() {
        let s: Complex64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

fn random_sparse(n: usize, off: &[(usize, usize, f64, f64)]) -> (SparseOperator, Vec<Vec<Complex64>>) {
    let mut dense = vec![vec![c(0.0, 0.0); n]; n];
    for &(r, col, re, im) in off {
        let (r, col) = (r % n, col % n);
        if r != col {
            dense[r][col] += c(re, im);
        }
    }
    for r in 0..n {
        let s: f64 = dense[r].iter().map(|z| z.norm()).sum();
        dense[r][r] = c(s + 1.0 + r as f64 * 0.1, 0.3);
    }
    let mut b = TripletBuilder::new(n);
    for (r, row) in dense.iter().enumerate() {
        for (col, v) in row.iter().enumerate() {
            if *v != c(0.0, 0.0) {
                b.add(r, col, *v);
            }
        }
    }
    (b.build(), dense)
}

fn spec_with(l_y: f64, l_z: f64, nu: f64) -> WaveguideSpec {
    WaveguideSpec {
        l_y,
        l_z,
        nu,
        ..WaveguideSpec::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn subbands_scale_inversely_with_area(ly in 5.0..40.0f64, lz in 3.0..20.0f64, ny in 1i64..5, nz in 1i64..5, s in 0.5..3.0f64) {
        let a = subband_energy(ny, nz, &spec_with(ly, lz, 1.0)).unwrap();
        let b = subband_energy(ny, nz, &spec_with(ly * s, lz * s, 1.0)).unwrap();
        prop_assert!((a / b - s * s).abs() < 1e-10 * s * s);
    }

    #[test]
    fn bound_levels_rise_and_stay_negative(nu in 0.05..6.0f64) {
        let mu = bound_levels(&spec_with(20.0, 10.0, nu));
        prop_assert_eq!(mu.len(), nu.ceil() as usize);
        for w in mu.windows(2) {
            prop_assert!(w[0] < w[1]);
        }
        prop_assert!(mu.iter().all(|m| *m < 0.0));
    }

    #[test]
    fn well_is_even_and_bounded(nu in 0.1..5.0f64, x in 0.0..30.0f64) {
        let spec = spec_with(20.0, 10.0, nu);
        let v = potential_value(x, &spec);
        prop_assert_eq!(v, potential_value(-x, &spec));
        prop_assert!(v <= 0.0 && v >= potential_value(0.0, &spec));
    }

    #[test]
    fn combined_levels_are_threshold_plus_bound(nu in 0.5..4.5f64, e_max in 120.0..320.0f64) {
        let spec = spec_with(20.0, 10.0, nu);
        let t = level_table(&spec, e_max).unwrap();
        for l in &t.combined {
            let e = subband_energy(l.n_y as i64, l.n_z as i64, &spec).unwrap();
            let mu = t.bound.iter().find(|b| b.j == l.j).unwrap().energy;
            prop_assert!((l.energy - (e + mu)).abs() < 1e-12);
            prop_assert!(l.energy <= e_max);
        }
    }

    #[test]
    fn metric_is_pullback_of_the_map(phi in -PI..PI, lambda in 0.5..10.0f64, x in -20.0..20.0f64, y in -10.0..10.0f64, z in -5.0..5.0f64) {
        let p = TwistProfile::new(phi, lambda);
        let h = 1e-5;
        let mut jac = [[0.0; 3]; 3];
        for a in 0..3 {
            let mut lo = [x, y, z];
            let mut hi = [x, y, z];
            lo[a] -= h;
            hi[a] += h;
            let (fl, fh) = (map_point(lo[0], lo[1], lo[2], &p), map_point(hi[0], hi[1], hi[2], &p));
            for i in 0..3 {
                jac[i][a] = (fh[i] - fl[i]) / (2.0 * h);
            }
        }
        let m = metric_at(x, y, z, &p);
        for a in 0..3 {
            for b in 0..3 {
                let g: f64 = (0..3).map(|i| jac[i][a] * jac[i][b]).sum();
                prop_assert!((g - m.g[a][b]).abs() < 1e-8 * (1.0 + g.abs()), "G[{a}][{b}] {g} vs {}", m.g[a][b]);
            }
        }
        let id = matmul3(&m.g, &m.g_inv);
        for a in 0..3 {
            for b in 0..3 {
                let want = if a == b { 1.0 } else { 0.0 };
                prop_assert!((id[a][b] - want).abs() < 1e-10 * (1.0 + m.g[0][0]));
            }
        }
        prop_assert!((m.sqrt_det - 1.0).abs() < 1e-10 * m.g[0][0]);
    }

    #[test]
    fn twist_rate_is_derivative_of_angle(phi in -PI..PI, lambda in 0.5..10.0f64, x in -25.0..25.0f64) {
        let p = TwistProfile::new(phi, lambda);
        let h = 1e-4;
        let fd = (twist_angle(x + h, &p) - twist_angle(x - h, &p)) / (2.0 * h);
        prop_assert!((fd - twist_rate(x, &p)).abs() < 1e-8);
    }

    #[test]
    fn metric_is_flat_away_from_the_twist(phi in -PI..PI, lambda in 0.5..5.0f64, s in 0.0..40.0f64, y in -10.0..10.0f64, z in -5.0..5.0f64, side in prop::bool::ANY) {
        let p = TwistProfile::new(phi, lambda);
        let x = (3.0 * lambda + s) * if side { 1.0 } else { -1.0 };
        let m = metric_at(x, y, z, &p);
        for a in 0..3 {
            for b in 0..3 {
                let want = if a == b { 1.0 } else { 0.0 };
                prop_assert!((m.g[a][b] - want).abs() < 1e-2, "x {x}: {:?}", m.g);
            }
        }
        if s > 2.0 * lambda {
            let dev = (0..3).flat_map(|a| (0..3).map(move |b| (a, b))).map(|(a, b)| (m.g[a][b] - if a == b { 1.0 } else { 0.0 }).abs()).fold(0.0, f64::max);
            prop_assert!(dev < 1e-6, "x {x}: {dev}");
        }
    }

    #[test]
    fn grid_index_round_trips(nx in 1usize..8, ny in 4usize..9, nz in 4usize..9, pick in any::<prop::sample::Index>()) {
        let spec = WaveguideSpec { l_y: ny as f64, l_z: nz as f64, x_half: nx as f64, ..WaveguideSpec::default() };
        let g = build_grid_with_spacing(&spec, 0.5, 0.4, 0.4).unwrap();
        let flat = pick.index(g.dim());
        let (i, j, k) = g.node(flat);
        prop_assert_eq!(g.index(i as isize, j as isize, k as isize), Some(flat));
        prop_assert_eq!(g.index(i as isize, 0, k as isize), None);
        prop_assert_eq!(g.index(i as isize, j as isize, g.nz as isize), None);
    }

    #[test]
    fn lu_agrees_with_dense_elimination(n in 2usize..30, off in prop::collection::vec((0usize..30, 0usize..30, -2.0..2.0f64, -2.0..2.0f64), 0..80), rhs_seed in -1.0..1.0f64) {
        let (a, dense) = random_sparse(n, &off);
        let b: Vec<Complex64> = (0..n).map(|i| c((i as f64 + rhs_seed).sin(), (0.3 * i as f64).cos())).collect();
        let lu = sparse_factor(&a).unwrap();
        let x = lu.solve(&b);
        let ax = a.matvec(&x);
        let res = ax.iter().zip(&b).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max);
        prop_assert!(res < 1e-10, "residual {res}");
        let y = dense_solve(dense, b);
        let diff = x.iter().zip(&y).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max);
        prop_assert!(diff < 1e-10, "LU vs dense {diff}");
    }

    #[test]
    fn arnoldi_pairs_are_accurate_and_sorted(n in 12usize..40, off in prop::collection::vec((0usize..40, 0usize..40, -0.5..0.5f64, -0.5..0.5f64), 0..60), sigma in 0.0..6.0f64) {
        let (a, _) = random_sparse(n, &off);
        let sigma = c(sigma, 0.1);
        let pairs = shift_invert_eigs(&a, sigma, 3, &ArnoldiOptions::default()).unwrap();
        prop_assert_eq!(pairs.len(), 3);
        for p in &pairs {
            let av = a.matvec(&p.vector);
            let r = av.iter().zip(&p.vector).map(|(u, v)| (u - p.value * v).norm_sqr()).sum::<f64>().sqrt();
            prop_assert!(r < 1e-6 * (1.0 + p.value.norm()), "residual {r}");
        }
        for w in pairs.windows(2) {
            prop_assert!((w[0].value - sigma).norm() <= (w[1].value - sigma).norm() + 1e-12);
        }
    }

    #[test]
    fn fano_fit_recovers_parameters(e_r in 90.0..100.0f64, gamma in 0.01..0.5f64, q in -4.0..4.0f64, t_bg in 0.3..1.0f64) {
        prop_assume!(q.abs() > 0.2);
        let e: Vec<f64> = (0..201).map(|i| e_r - 8.0 * gamma + 16.0 * gamma * i as f64 / 200.0).collect();
        let t: Vec<f64> = e.iter().map(|&x| fano_lineshape(x, e_r, gamma, q, t_bg)).collect();
        let fit = fit_model(&FanoModel, &e, &t).unwrap();
        let p = fit.params;
        prop_assert!((p[0] - e_r).abs() < 1e-6 * gamma, "{p:?}");
        prop_assert!((p[1] - gamma).abs() < 1e-6 * gamma, "{p:?}");
        prop_assert!((p[2] - q).abs() < 1e-6 * q.abs().max(1.0), "{p:?}");
        prop_assert!((p[3] - t_bg).abs() < 1e-6, "{p:?}");
    }

    #[test]
    fn unwrapping_removes_only_whole_turns(steps in prop::collection::vec(-3.0..3.0f64, 2..60), start in -10.0..10.0f64) {
        let mut truth = vec![start];
        for s in &steps {
            truth.push(truth.last().unwrap() + s);
        }
        let mut rows: Vec<SpectrumRow> = truth.iter().enumerate().map(|(i, &p)| SpectrumRow {
            energy: i as f64,
            transmission: vec![1.0],
            phase: vec![(p + PI).rem_euclid(2.0 * PI) - PI],
            reflection_sum: 0.0,
            defect: 0.0,
            flagged: false,
        }).collect();
        unwrap_phases(&mut rows);
        let offset = truth[0] - rows[0].phase[0];
        prop_assert!(((offset / (2.0 * PI)).round() * 2.0 * PI - offset).abs() < 1e-9);
        for (r, p) in rows.iter().zip(&truth) {
            prop_assert!((r.phase[0] + offset - p).abs() < 1e-9);
        }
    }

    #[test]
    fn lifetime_is_reciprocal_width(gamma in 1e-6..100.0f64) {
        let tau = lifetime(gamma).unwrap();
        prop_assert!((tau * gamma - HBAR_MEV_PS).abs() < 1e-12 * HBAR_MEV_PS);
        prop_assert!(lifetime(-gamma).is_err());
    }

    #[test]
    fn reference_well_is_transparent_at_high_energy(nu in 0.3..4.0f64, e in 2000.0..20000.0f64) {
        let t = reference_transmission_1d(e, &spec_with(20.0, 10.0, nu)).unwrap();
        prop_assert!(t <= 1.0 + 1e-9 && t > 1.0 - 1e-6, "T {t}");
    }
}
