use std::f64::consts::PI;

use nhic_core::cylinder::*;
use nhic_core::flow::DriftScaling;
use nhic_core::fourier::FourierField;
use nhic_core::orbit_min::saddle_spectrum;
use nhic_core::periodic::PeriodicOrbit;
use nhic_core::system::{pendulum_and_well, KineticMatrix, MechanicalSystem, Remainder, State};

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| (lo.ln() + (hi.ln() - lo.ln()) * k as f64 / (n - 1) as f64).exp())
        .collect()
}

fn system(terms: &[FourierField]) -> MechanicalSystem {
    let v = terms
        .iter()
        .skip(1)
        .fold(terms[0].clone(), |a, b| a.plus(b).unwrap());
    MechanicalSystem::new(KineticMatrix::identity(), v).unwrap()
}

fn coupled() -> MechanicalSystem {
    let base = pendulum_and_well(0.25);
    system(&[
        base.potential().clone(),
        FourierField::constant(2, 0.1).unwrap(),
        FourierField::cosine(2, [1, 1, 0], -0.1).unwrap(),
    ])
}

fn free() -> MechanicalSystem {
    MechanicalSystem::new(KineticMatrix::identity(), FourierField::zero(2).unwrap()).unwrap()
}

/// `(1 - cos x1)(1 + 0.3 cos 2x2) + extra (1 - cos x2)`.
fn channel_pair(extra: f64) -> MechanicalSystem {
    system(&[
        FourierField::constant(2, 1.0 + extra).unwrap(),
        FourierField::cosine(2, [1, 0, 0], -1.0).unwrap(),
        FourierField::cosine(2, [0, 2, 0], 0.3).unwrap(),
        FourierField::cosine(2, [1, 2, 0], -0.15).unwrap(),
        FourierField::cosine(2, [1, -2, 0], -0.15).unwrap(),
        FourierField::cosine(2, [0, 1, 0], -extra).unwrap(),
    ])
}

/// `(1 - cos x1)(1 + 0.3 cos 2x2 + a sin x2) + (1 - cos x2)(0.05 + b sin x2)`,
/// which has no reflection symmetry in `x2` when `a, b != 0`.
fn lopsided(a: f64, b: f64) -> MechanicalSystem {
    system(&[
        channel_pair(0.05).potential().clone(),
        FourierField::sine(2, [0, 1, 0], a + b).unwrap(),
        FourierField::sine(2, [1, 1, 0], -0.5 * a).unwrap(),
        FourierField::sine(2, [-1, 1, 0], -0.5 * a).unwrap(),
        FourierField::sine(2, [0, 2, 0], -0.5 * b).unwrap(),
    ])
}

/// Pendulum rotation period through the complete elliptic integral,
/// `K(k) = pi / (2 agm(1, sqrt(1 - k^2)))`.
fn pendulum_period(e: f64) -> f64 {
    let (mut a, mut g) = (1.0f64, (2.0 * e / (2.0 * e + 4.0)).sqrt());
    for _ in 0..40 {
        (a, g) = (0.5 * (a + g), (a * g).sqrt());
    }
    4.0 / (2.0 * e + 4.0).sqrt() * PI / (2.0 * a)
}

fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

fn no_certify() -> BranchOptions {
    BranchOptions {
        certify: false,
        ..BranchOptions::default()
    }
}

#[test]
fn elliptic_oracle_frozen_values() {
    assert!((pendulum_period(1e-6) - 17.281244550).abs() < 1e-8);
    assert!((pendulum_period(1e-2) - 8.063337559).abs() < 1e-8);
    // asymptote T ~ ln(32 / E)
    assert!((pendulum_period(1e-12) - (32e12f64).ln()).abs() < 1e-9);
}

#[test]
fn period_law_against_elliptic_oracle() {
    let sys = pendulum_and_well(0.25);
    let grid = log_grid(1e-6, 1e-2, 12);
    let branch = continue_branch(&sys, [1, 0], &grid, &no_certify()).unwrap();
    assert_eq!(branch.points.len(), grid.len());
    for p in &branch.points {
        let oracle = pendulum_period(p.energy);
        assert!(
            (p.period() / oracle - 1.0).abs() < 1e-9,
            "E {} T {} oracle {oracle}",
            p.energy,
            p.period()
        );
    }
    let law = period_law_fit(&branch, 1.0, 1, 0.0..=1e-2, 0.02).unwrap();
    let x: Vec<f64> = grid.iter().map(|e| -e.ln()).collect();
    let t: Vec<f64> = grid.iter().map(|&e| pendulum_period(e)).collect();
    assert!((law.slope - slope(&x, &t)).abs() < 1e-6);
    assert!(law.pass && law.relative_error < 0.02);
    assert!(law.intercept_spread < 0.05);
    assert!((law.intercept - 32f64.ln()).abs() < 0.05);
}

#[test]
fn uncoupled_multipliers_scale_with_half_power() {
    let sys = pendulum_and_well(0.25);
    let branch = continue_branch(&sys, [1, 0], &log_grid(1e-5, 1e-2, 10), &no_certify()).unwrap();
    let fl = floquet_scaling(&branch, 0.5, 1e-5..=1e-2, 0.1, 0.1).unwrap();
    assert!(fl.pass, "{fl:?}");
    assert!((fl.ratio - 0.5).abs() < 0.01);
    assert!(fl.max_reciprocity_defect < 1e-6);
    for p in &branch.points {
        let big = p.multipliers[0];
        let small = p.multipliers[3];
        let product = (big[0] * big[0] + big[1] * big[1]).sqrt()
            * (small[0] * small[0] + small[1] * small[1]).sqrt();
        assert!(
            (product - 1.0).abs() < 1e-6,
            "E {} product {product}",
            p.energy
        );
    }
}

#[test]
fn coupled_multipliers_approach_eigenvalue_ratio() {
    let sys = coupled();
    let spec = saddle_spectrum(&sys, 1e-3).unwrap();
    let predicted = spec.fast / spec.slow;
    assert!((predicted - 1.8177).abs() < 1e-3);
    let branch = continue_branch(&sys, [1, 0], &log_grid(1e-12, 1e-2, 21), &no_certify()).unwrap();
    // Orbits enter the saddle mostly along the fast direction; the slow
    // approach dominates only far below 1e-5.
    let fl = floquet_scaling(&branch, predicted, 1e-12..=1e-9, 0.15, 0.1).unwrap();
    assert!(fl.pass, "{fl:?}");
    let law = period_law_fit(&branch, spec.slow, 1, 1e-12..=1e-9, 0.02).unwrap();
    assert!(law.pass, "{law:?}");
}

#[test]
fn pendulum_branch_is_minimal_and_flat() {
    let sys = pendulum_and_well(0.25);
    let grid = log_grid(1e-4, 1.0, 40);
    let branch = continue_branch(&sys, [1, 0], &grid, &BranchOptions::default()).unwrap();
    assert_eq!(branch.points.len(), 40);
    assert!(branch.points.windows(2).all(|w| w[0].energy < w[1].energy));
    for (p, e) in branch.points.iter().zip(&grid) {
        assert!((p.energy / e - 1.0).abs() < 1e-9);
        assert_eq!(p.orbit.class, [1, 0]);
        assert_eq!(p.minimal, Some(true), "E {}", p.energy);
        assert!(p
            .orbit
            .nodes
            .iter()
            .all(|z| z[1].abs() < 1e-10 && z[3].abs() < 1e-10));
        assert!(p.reciprocity_defect < 1e-6);
    }
}

fn hausdorff(sys: &MechanicalSystem, a: &PeriodicOrbit, b: &PeriodicOrbit) -> f64 {
    let sa = a.sample(sys, 32, 1e-12).unwrap();
    let sb = b.sample(sys, 32, 1e-12).unwrap();
    let d = |z: &State, w: &State| {
        let dx = |u: f64, v: f64| {
            let r = (u - v).rem_euclid(2.0 * PI);
            r.min(2.0 * PI - r)
        };
        (dx(z[0], w[0]).powi(2)
            + dx(z[1], w[1]).powi(2)
            + (z[2] - w[2]).powi(2)
            + (z[3] - w[3]).powi(2))
        .sqrt()
    };
    let one = |p: &[(f64, State)], q: &[(f64, State)]| {
        p.iter()
            .map(|(_, z)| q.iter().map(|(_, w)| d(z, w)).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    one(&sa, &sb).max(one(&sb, &sa))
}

#[test]
fn consecutive_orbits_move_continuously() {
    let sys = pendulum_and_well(0.25);
    let branch = continue_branch(&sys, [1, 0], &log_grid(0.05, 1.0, 9), &no_certify()).unwrap();
    let rates: Vec<f64> = branch
        .points
        .windows(2)
        .map(|w| hausdorff(&sys, &w[0].orbit, &w[1].orbit) / (w[1].energy - w[0].energy))
        .collect();
    for r in rates.windows(2) {
        assert!(r[1] <= 5.0 * r[0] && r[0] <= 5.0 * r[1], "{rates:?}");
    }
}

#[test]
fn free_motion_has_no_log_regime() {
    let sys = free();
    let grid = log_grid(1e-4, 1.0, 9);
    let branch = continue_branch(&sys, [1, 0], &grid, &no_certify()).unwrap();
    for p in &branch.points {
        let t = 2.0 * PI / (2.0 * p.energy).sqrt();
        assert!((p.period() / t - 1.0).abs() < 1e-9);
        assert!(p
            .orbit
            .nodes
            .iter()
            .all(|z| (z[2] - (2.0 * p.energy).sqrt()).abs() < 1e-9));
        assert!((p.leading - 1.0).abs() < 1e-6);
    }
    assert!(matches!(
        period_law_fit(&branch, 1.0, 1, 0.0..=1.0, 0.02),
        Err(CylinderError::NoLogRegime)
    ));
    assert!(matches!(
        floquet_scaling(&branch, 0.5, 0.0..=1.0, 0.1, 0.1),
        Err(CylinderError::NonHyperbolic { .. })
    ));
}

#[test]
fn grid_edge_cases() {
    let sys = pendulum_and_well(0.25);
    let empty = continue_branch(&sys, [1, 0], &[], &no_certify()).unwrap();
    assert!(empty.points.is_empty());
    assert!(matches!(
        continue_branch(&sys, [1, 0], &[0.5, 0.1], &no_certify()),
        Err(CylinderError::BadGrid)
    ));
    assert!(matches!(
        continue_branch(&sys, [1, 0], &[-1.0, 0.1], &no_certify()),
        Err(CylinderError::BadGrid)
    ));
    let short = continue_branch(&sys, [1, 0], &[0.1, 0.2, 0.3], &no_certify()).unwrap();
    assert!(matches!(
        period_law_fit(&short, 1.0, 1, 0.0..=1.0, 0.02),
        Err(CylinderError::InsufficientRange { .. })
    ));
}

#[test]
fn free_channel_is_half_square() {
    let branch = continue_branch(&free(), [1, 0], &log_grid(0.01, 2.0, 8), &no_certify()).unwrap();
    let ch = alpha_channel(&branch);
    for p in &ch.points {
        assert!((p.alpha - 0.5 * p.coordinate * p.coordinate).abs() < 1e-9);
        assert!(p.cohomology[1].abs() < 1e-12);
        assert!(p.duality_defect < 1e-9);
    }
    assert!(ch.alpha_increasing);
    assert!((ch.min_convexity - 1.0).abs() < 1e-6);
}

#[test]
fn pendulum_channel_is_convex_and_dual() {
    let sys = pendulum_and_well(0.25);
    let branch = continue_branch(&sys, [1, 0], &log_grid(1e-5, 1.0, 10), &no_certify()).unwrap();
    let ch = alpha_channel(&branch);
    assert_eq!(ch.points.len(), 10);
    assert!(ch.alpha_increasing);
    assert!(ch.min_convexity > -1e-8);
    assert!(ch.max_duality_defect < 1e-6);
    let law = period_law_fit(&branch, 1.0, 1, 0.0..=1e-2, 0.05).unwrap();
    for p in ch.points.iter().filter(|p| p.energy <= 1e-2) {
        let predicted = Channel::predicted_frequency(&law, p.energy);
        assert!((p.frequency / predicted - 1.0).abs() <= law.intercept_spread * predicted + 1e-9);
    }
}

#[test]
fn reflection_symmetric_families_are_degenerate() {
    let grid: Vec<f64> = (0..=10).map(|k| 0.02 + 0.098 * k as f64).collect();
    for extra in [0.0, 0.05] {
        let scan = detect_bifurcations(
            &channel_pair(extra),
            [1, 0],
            &grid,
            &BifurcationOptions::default(),
        )
        .unwrap();
        assert_eq!(scan.families.len(), 2);
        assert!(scan.crossings.is_empty());
        let deg = scan.degenerate.expect("symmetric pair");
        assert!(deg.max_action_gap < 1e-10 && deg.max_slope_gap < 1e-10);
    }
}

/// RK4 closure check and loop action `int |y|^2 dt`, independent of the
/// library integrator.
fn rk4_loop(sys: &MechanicalSystem, z0: State, period: f64, steps: usize) -> (State, f64) {
    let h = period / steps as f64;
    let mut z = z0;
    let mut w = 0.0;
    let f = |z: &State| {
        let v = sys.vector_field(0.0, z);
        (v, z[2] * z[2] + z[3] * z[3])
    };
    for _ in 0..steps {
        let add = |a: &State, k: &State, s: f64| {
            [
                a[0] + s * k[0],
                a[1] + s * k[1],
                a[2] + s * k[2],
                a[3] + s * k[3],
            ]
        };
        let (k1, w1) = f(&z);
        let (k2, w2) = f(&add(&z, &k1, 0.5 * h));
        let (k3, w3) = f(&add(&z, &k2, 0.5 * h));
        let (k4, w4) = f(&add(&z, &k3, h));
        for i in 0..4 {
            z[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        w += h / 6.0 * (w1 + 2.0 * w2 + 2.0 * w3 + w4);
    }
    (z, w)
}

#[test]
fn lopsided_families_cross_transversally() {
    let sys = lopsided(0.04, -0.03);
    let minima = sys.potential().local_minima(64).unwrap();
    assert_eq!(minima.len(), 1);
    assert!(minima[0].value.abs() < 1e-12);
    let grid: Vec<f64> = (0..=20).map(|k| 0.02 + 0.049 * k as f64).collect();
    let mut found = Vec::new();
    for seed in [0u64, 7, 42] {
        let opts = BifurcationOptions {
            seed,
            ..BifurcationOptions::default()
        };
        let scan = detect_bifurcations(&sys, [1, 0], &grid, &opts).unwrap();
        assert!(scan.degenerate.is_none());
        assert_eq!(scan.crossings.len(), 1);
        let c = &scan.crossings[0];
        assert!(c.nondegenerate() && c.slope_gap > 0.1);
        assert!(c.action_gap < 1e-7);
        found.push(c.energy);
        if seed == 0 {
            let lo = rk4_loop(&sys, c.lower.base(), c.lower.period, 40_000);
            let up = rk4_loop(&sys, c.upper.base(), c.upper.period, 40_000);
            let shift = |z: &State, o: &PeriodicOrbit| {
                let b = o.base();
                ((z[0] - b[0] - 2.0 * PI).abs())
                    .max((z[1] - b[1]).abs())
                    .max((z[2] - b[2]).abs())
            };
            assert!(shift(&lo.0, &c.lower) < 1e-7 && shift(&up.0, &c.upper) < 1e-7);
            assert!((lo.1 - up.1).abs() < 1e-7, "{} {}", lo.1, up.1);
            assert!(loop_gap(&sys, &c.lower, &c.upper) > 0.1);
        }
    }
    assert!((found[0] - 0.0428048698).abs() < 1e-6);
    for e in &found {
        assert!((e - found[0]).abs() <= 1e-6);
    }
}

fn loop_gap(sys: &MechanicalSystem, a: &PeriodicOrbit, b: &PeriodicOrbit) -> f64 {
    hausdorff(sys, a, b)
}

#[test]
fn single_family_has_no_crossing() {
    let scan = detect_bifurcations(
        &pendulum_and_well(0.25),
        [1, 0],
        &log_grid(1e-3, 1.0, 16),
        &BifurcationOptions::default(),
    )
    .unwrap();
    assert!(scan.crossings.is_empty());
    assert!(scan.degenerate.is_none());
    assert_eq!(scan.families.len(), 1);
}

fn forcing(eps: f64, sigma: f64) -> Remainder {
    // cos x1 cos theta
    let r = FourierField::cosine(3, [1, 0, 1], 0.5)
        .unwrap()
        .plus(&FourierField::cosine(3, [1, 0, -1], 0.5).unwrap())
        .unwrap();
    Remainder::new(r, eps.powf(sigma), 1.0 / eps.sqrt()).unwrap()
}

fn persistence(eps: f64, sigma: f64) -> PersistenceOptions {
    PersistenceOptions {
        scaling: DriftScaling {
            epsilon: eps,
            sigma,
            omega3: 1.0,
            y_max: 3.0,
        },
        window_exponent: None,
        top: 1.0,
        grid: 3,
        max_revolutions: 4,
        branch: no_certify(),
    }
}

#[test]
fn zero_remainder_changes_nothing() {
    let sys = pendulum_and_well(0.25);
    let spec = saddle_spectrum(&sys, 1e-3).unwrap();
    let branch = continue_branch(&sys, [1, 0], &[0.5, 1.0], &no_certify()).unwrap();
    let mut rem = forcing(1e-4, 1.0 / 7.0);
    rem.amplitude = 0.0;
    let pert = sys.clone().with_remainder(rem);
    let out =
        persist_perturbed(&branch, &sys, &pert, &spec, &persistence(1e-4, 1.0 / 7.0)).unwrap();
    assert!(out.all_converged());
    assert!(out.max_deformation() < 1e-9);
    for p in &out.points {
        assert!((p.area_ratio - 1.0).abs() < 1e-12);
        let w = aubry_window_check(p, &out, window_multiplier(0.0));
        assert!(w.pass && w.excursion < 1e-9);
    }
}

#[test]
fn forced_orbit_at_half_energy_stays_close() {
    let sigma = 1.0 / 7.0;
    let eps = 1e-4;
    let sys = pendulum_and_well(0.25);
    let branch = continue_branch(&sys, [1, 0], &log_grid(1e-6, 1.0, 13), &no_certify()).unwrap();
    let pert = sys.clone().with_remainder(forcing(eps, sigma));
    let opts = persistence(eps, sigma);
    let p = persist_point(&branch, &sys, &pert, 0.5, &opts).unwrap();
    assert!(p.converged);
    assert!((p.energy - 0.5).abs() < 0.05);
    assert!(p.deformation <= 10.0 * eps.powf(sigma), "{p:?}");
    let law = period_law_fit(&branch, 1.0, 1, 0.0..=1e-2, 0.05).unwrap();
    let n = window_multiplier(law.bounded_part);
    let holder = PerturbedBranch {
        epsilon: eps,
        sigma,
        window_exponent: 0.001,
        window: [eps.powf(0.001), 1.0],
        points: vec![p.clone()],
        surviving: Some([p.energy, p.energy]),
    };
    let w = aubry_window_check(&p, &holder, n);
    assert!(w.pass, "{w:?}");
    assert!(w.excursion <= eps.powf(sigma / 3.0));
}

#[test]
fn deformation_shrinks_with_epsilon() {
    let sigma = 1.0 / 7.0;
    let sys = pendulum_and_well(0.25);
    let spec = saddle_spectrum(&sys, 1e-3).unwrap();
    let branch = continue_branch(&sys, [1, 0], &[0.5, 1.0], &no_certify()).unwrap();
    let mut runs = Vec::new();
    for eps in [1e-3, 1e-4, 1e-5] {
        let pert = sys.clone().with_remainder(forcing(eps, sigma));
        let out = persist_perturbed(&branch, &sys, &pert, &spec, &persistence(eps, sigma)).unwrap();
        assert!(out.all_converged());
        assert_eq!(
            out.surviving.map(|s| s[1]),
            out.points.last().map(|p| p.energy)
        );
        assert!(out.window[0] > 0.9 && out.window[1] == 1.0);
        runs.push(out);
    }
    let law = deformation_exponent(&runs).unwrap();
    assert!(law.exponent >= sigma - 0.1, "{law:?}");
}

#[test]
fn persistence_rejects_bad_setups() {
    let sigma = 1.0 / 7.0;
    let sys = pendulum_and_well(0.25);
    let spec = saddle_spectrum(&sys, 1e-3).unwrap();
    let branch = continue_branch(&sys, [1, 0], &[0.5, 1.0], &no_certify()).unwrap();
    let mut opts = persistence(1e-4, sigma);
    opts.window_exponent = Some(0.5);
    let pert = sys.clone().with_remainder(forcing(1e-4, sigma));
    assert!(matches!(
        persist_perturbed(&branch, &sys, &pert, &spec, &opts),
        Err(CylinderError::BadWindow { .. })
    ));
    assert!(matches!(
        persist_perturbed(&branch, &sys, &sys, &spec, &persistence(1e-4, sigma)),
        Err(CylinderError::NoForcing)
    ));
    let bound = window_exponent_bound(&sys, &spec, sigma);
    assert!(bound > 0.0 && bound <= sigma / 4.0);
}
