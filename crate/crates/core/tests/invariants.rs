use proptest::prelude::*;

use swirl_rings::asymptotics::{fit_log_slope, gamma1, gamma2, kelvin_hicks_speed, r_star_exterior, r_star_interior};
use swirl_rings::diagnostics::monotonicity_score;
use swirl_rings::elliptic::{assemble, symmetrize_z};
use swirl_rings::geometry::{make_grid, DomainKind, DomainSpec, Grid, Rect, ScalarField};
use swirl_rings::kernel::{ring_green, sigma, KernelBackend};
use swirl_rings::variational::{energy, solve_multiplier, steiner_symmetrize, SolverParams, SupportBox};

use std::f64::consts::PI;

fn grid(n_r: usize, n_z: usize, r_max: f64, z_max: f64) -> Grid {
    let dom = DomainSpec {
        kind: DomainKind::WholeSpace,
        d: 0.0,
        truncation: Rect { r_max, z_max },
    };
    make_grid(&dom, n_r, n_z | 1).unwrap()
}

fn field(g: &Grid, vals: &[f64]) -> ScalarField {
    // cycle the sampled values over the nodes; zero on the boundary
    let mut f = ScalarField::zeros_like(g);
    for k in 0..g.len() {
        let (r, z) = g.coords(k);
        let on_edge = r == 0.0 || r == *g.r().last().unwrap() || z.abs() == *g.z().last().unwrap();
        if !on_edge {
            f[k] = vals[k % vals.len()];
        }
    }
    f
}

fn nu_dot(g: &Grid, a: &ScalarField, b: &ScalarField) -> f64 {
    (0..g.len()).map(|k| a[k] * b[k] * g.nu()[k]).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn operator_matrix_is_symmetric(n_r in 16usize..40, n_z in 16usize..40, rm in 0.5f64..4.0, zm in 0.5f64..4.0) {
        let g = grid(n_r, n_z, rm, zm);
        let op = assemble(&g).unwrap();
        prop_assert!(op.matrix().is_symmetric());
    }

    #[test]
    fn inverse_is_positive_monotone_and_self_adjoint(
        a in prop::collection::vec(0.0f64..1.0, 1..40),
        b in prop::collection::vec(0.0f64..1.0, 1..40),
    ) {
        let g = grid(17, 17, 2.0, 1.0);
        let op = assemble(&g).unwrap();
        let za = field(&g, &a);
        let zb = field(&g, &b);
        let mut zab = za.clone();
        for k in 0..g.len() {
            zab[k] += zb[k];
        }
        let pa = op.apply_k(&za).unwrap();
        let pb = op.apply_k(&zb).unwrap();
        let pab = op.apply_k(&zab).unwrap();
        let scale = pab.max().max(1e-300);
        for k in 0..g.len() {
            prop_assert!(pa[k] >= -1e-12 * scale);
            prop_assert!(pab[k] >= pa[k] - 1e-10 * scale);
        }
        let (x, y) = (nu_dot(&g, &za, &pb), nu_dot(&g, &zb, &pa));
        prop_assert!((x - y).abs() <= 1e-8 * x.abs().max(y.abs()).max(1e-300));
    }

    #[test]
    fn steiner_keeps_mass_and_symmetry(vals in prop::collection::vec(0.0f64..5.0, 3..60)) {
        let g = grid(21, 31, 2.0, 1.0);
        let sb = SupportBox { r_max: 1.8, z_max: 0.8 };
        let admissible = sb.admissible(&g);
        let mut z = field(&g, &vals);
        for k in 0..g.len() {
            if !admissible[k] {
                z[k] = 0.0;
            }
        }
        let s = steiner_symmetrize(&g, &sb, &z);
        let (m0, m1) = (g.integrate_nu(&z), g.integrate_nu(&s));
        prop_assert!((m0 - m1).abs() <= 1e-10 * m0.max(1.0));
        for k in 0..g.len() {
            prop_assert_eq!(s[k], s[g.mirror_idx(k)]);
            prop_assert!(s[k] >= 0.0);
        }
        // per row, values do not increase away from z = 0
        let jm = g.z_mid();
        for i in 0..g.n_r() {
            for j in jm..g.n_z() - 1 {
                prop_assert!(s[(i, j + 1)] <= s[(i, j)] + 1e-12);
            }
        }
    }

    #[test]
    fn steiner_does_not_decrease_self_energy(vals in prop::collection::vec(0.0f64..5.0, 3..60)) {
        let g = grid(21, 31, 2.0, 1.0);
        let sb = SupportBox { r_max: 1.8, z_max: 0.8 };
        let admissible = sb.admissible(&g);
        let mut z = field(&g, &vals);
        for k in 0..g.len() {
            if !admissible[k] {
                z[k] = 0.0;
            }
        }
        let s = steiner_symmetrize(&g, &sb, &z);
        let op = assemble(&g).unwrap();
        let e0 = nu_dot(&g, &z, &op.apply_k(&z).unwrap());
        let e1 = nu_dot(&g, &s, &op.apply_k(&s).unwrap());
        prop_assert!(e1 >= e0 * (1.0 - 1e-9), "{} < {}", e1, e0);
    }

    #[test]
    fn multiplier_closes_circulation_or_reports_slack(shift in -2.0f64..2.0, tilt in 0.1f64..3.0, beta in 0.05f64..0.3) {
        let g = grid(41, 41, 2.0, 1.0);
        let sb = SupportBox { r_max: 1.8, z_max: 0.8 };
        let p = SolverParams::new(beta, 0.1);
        let psi = g.field_from_fn(|r, z| tilt * r * r * (1.0 - z * z) + shift);
        let m = solve_multiplier(&g, &psi, &p, &sb);
        let admissible = sb.admissible(&g);
        let circ = g.integrate_nu(&m.zeta);
        prop_assert!((circ - m.circulation).abs() < 1e-12);
        if m.unconstrained {
            prop_assert!(m.mu == 0.0 && circ < 1.0);
        } else {
            prop_assert!((circ - 1.0).abs() <= p.tol_circ, "circulation {}", circ);
        }
        for (k, &ok) in admissible.iter().enumerate() {
            prop_assert!(m.zeta[k] >= 0.0 && m.zeta[k] <= p.zeta_max());
            prop_assert!(ok || m.zeta[k] == 0.0);
        }
    }

    #[test]
    fn energy_is_finite_and_symmetric_inputs_stay_symmetric(vals in prop::collection::vec(0.0f64..2.0, 3..30)) {
        let g = grid(21, 21, 2.0, 1.0);
        let mut z = field(&g, &vals);
        symmetrize_z(&g, &mut z);
        for k in 0..g.len() {
            prop_assert_eq!(z[k], z[g.mirror_idx(k)]);
        }
        let op = assemble(&g).unwrap();
        let psi = op.apply_k(&z).unwrap();
        let e = energy(&g, &SolverParams::new(0.1, 0.2), &z, &psi);
        prop_assert!(e.is_finite());
    }

    #[test]
    fn sigma_is_symmetric_and_scale_free(r in 0.05f64..3.0, z in -2.0f64..2.0, rp in 0.05f64..3.0, zp in -2.0f64..2.0, lam in 0.1f64..10.0, dz in -3.0f64..3.0) {
        let s = sigma(r, z, rp, zp).unwrap();
        prop_assert_eq!(s, sigma(rp, zp, r, z).unwrap());
        let scaled = sigma(lam * r, lam * z, lam * rp, lam * zp).unwrap();
        prop_assert!((scaled - s).abs() <= 1e-12 * s.max(1e-300));
        prop_assert!((sigma(r, z + dz, rp, zp + dz).unwrap() - s).abs() <= 1e-12 * s.max(1e-300) + 1e-15);
    }

    #[test]
    fn kernel_is_symmetric_positive_and_shift_invariant(r in 0.1f64..2.0, z in -1.0f64..1.0, rp in 0.1f64..2.0, zp in -1.0f64..1.0, dz in -1.0f64..1.0) {
        prop_assume!(sigma(r, z, rp, zp).unwrap() > 1e-3);
        let g = ring_green(r, z, rp, zp, KernelBackend::Elliptic).unwrap();
        let gt = ring_green(rp, zp, r, z, KernelBackend::Elliptic).unwrap();
        let gs = ring_green(r, z + dz, rp, zp + dz, KernelBackend::Elliptic).unwrap();
        prop_assert!(g > 0.0);
        prop_assert!((g - gt).abs() <= 1e-12 * g);
        prop_assert!((g - gs).abs() <= 1e-10 * g);
    }

    #[test]
    fn log_fit_recovers_exact_lines(slope in -5.0f64..5.0, icpt in -5.0f64..5.0, b0 in 1e-4f64..0.5, ratio in 1.5f64..10.0) {
        let pts: Vec<(f64, f64)> = (0..4)
            .map(|i| {
                let b = b0 / ratio.powi(i);
                (b, slope * (1.0 / b).ln() + icpt)
            })
            .collect();
        let f = fit_log_slope(&pts).unwrap();
        prop_assert!((f.slope - slope).abs() < 1e-9);
        prop_assert!((f.intercept - icpt).abs() < 1e-8);
        prop_assert!(f.max_residual < 1e-8);
    }

    #[test]
    fn nonincreasing_profiles_score_one(mut v in prop::collection::vec(0.0f64..1.0, 2..50)) {
        v.sort_by(|a, b| b.total_cmp(a));
        prop_assert_eq!(monotonicity_score(&v, 0.0), 1.0);
    }

    #[test]
    fn translation_speed_is_linear_in_circulation(k in 0.01f64..10.0, r in 0.1f64..5.0, eps in 1e-4f64..0.5) {
        let one = kelvin_hicks_speed(k, r, eps);
        let two = kelvin_hicks_speed(2.0 * k, r, eps);
        prop_assert!((two - 2.0 * one).abs() <= 1e-14 * one.abs().max(1e-300));
    }

    #[test]
    fn concentration_radii_maximize_the_profiles(w in 0.005f64..0.2, d in 0.5f64..3.0, t in 0.0f64..1.0) {
        let ri = r_star_interior(w, d);
        let probe = t * d;
        prop_assert!(gamma1(ri, w) >= gamma1(probe, w) - 1e-15);
        let re = r_star_exterior(w, d).unwrap();
        let probe = d + t * (1.0 / (2.0 * PI * w) - d).max(0.0);
        prop_assert!(gamma2(re, w, d) >= gamma2(probe, w, d) - 1e-14);
    }
}
