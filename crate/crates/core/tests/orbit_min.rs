use std::f64::consts::PI;

use nhic_core::fourier::FourierField;
use nhic_core::orbit_min::{
    discrete_action, homoclinic_approx, lagrangian_quadrature, minimal_orbit, minimize_loop,
    saddle_spectrum, HomoclinicOptions, Lagrangian, LoopOptions, LoopPath,
};
use nhic_core::periodic::ShootingOptions;
use nhic_core::system::{pendulum_and_well, KineticMatrix, MechanicalSystem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Pendulum rotation oracle: period and action at energy `e` by Simpson.
fn pendulum_rotation(e: f64) -> (f64, f64) {
    let n = 400_000;
    let h = 2.0 * PI / n as f64;
    let mut t = 0.0;
    let mut w = 0.0;
    for k in 0..=n {
        let x = k as f64 * h;
        let c = if k == 0 || k == n {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let p = (2.0 * e + 4.0 * (x / 2.0).sin().powi(2)).sqrt();
        t += c / p;
        w += c * p;
    }
    (t * h / 3.0, w * h / 3.0 - e * t * h / 3.0)
}

fn rotation_with_period(period: f64) -> (f64, f64) {
    let (mut lo, mut hi) = (1e-12f64, 10.0f64);
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if pendulum_rotation(mid).0 > period {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let e = (lo * hi).sqrt();
    (e, pendulum_rotation(e).1)
}

fn coupled() -> MechanicalSystem {
    let extra = FourierField::constant(2, 0.1)
        .unwrap()
        .plus(&FourierField::cosine(2, [1, 1, 0], -0.1).unwrap())
        .unwrap();
    let v = pendulum_and_well(0.25).potential().plus(&extra).unwrap();
    MechanicalSystem::new(KineticMatrix::identity(), v).unwrap()
}

#[test]
fn legendre_identity_at_random_points() {
    let sys = coupled();
    let l = Lagrangian::new(&sys);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let z = [
            rng.gen_range(-PI..PI),
            rng.gen_range(-PI..PI),
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-2.0..2.0),
        ];
        assert!(l.legendre_defect(&z).abs() <= 1e-12);
    }
    let a = MechanicalSystem::new(
        KineticMatrix::new([[2.0, 0.0], [0.0, 1.0]]).unwrap(),
        FourierField::zero(2).unwrap(),
    )
    .unwrap();
    assert!((Lagrangian::new(&a).value([0.0, 0.0], [2.0, 0.0]) - 1.0).abs() < 1e-15);
}

#[test]
fn pendulum_rotation_matches_one_degree_reduction() {
    let sys = pendulum_and_well(0.25);
    let found = minimal_orbit(
        &sys,
        [1, 0],
        10.0,
        8,
        &LoopOptions::default(),
        &ShootingOptions::default(),
    )
    .unwrap();
    let (e, action) = rotation_with_period(10.0);
    let orbit = &found.orbit;
    assert!((orbit.energy - e).abs() < 1e-8, "{} vs {e}", orbit.energy);
    assert!(
        (orbit.action - action).abs() < 1e-5,
        "{} vs {action}",
        orbit.action
    );
    assert!(orbit.residual <= 1e-8);
    assert!(orbit
        .nodes
        .iter()
        .all(|z| z[1].abs() < 1e-8 && z[3].abs() < 1e-8));
    // Reported action agrees with an independent quadrature of L.
    let per = 256;
    let s = orbit.sample(&sys, per, 1e-12).unwrap();
    let states: Vec<_> = s.iter().map(|p| p.1).collect();
    let mut closing = orbit.base();
    closing[0] += 2.0 * PI;
    let q = lagrangian_quadrature(&sys, &states, &closing, orbit.period / states.len() as f64);
    assert!((q - orbit.action).abs() < 1e-6, "{q} vs {}", orbit.action);
}

#[test]
fn transverse_rotation_keeps_pendulum_at_rest() {
    let sys = pendulum_and_well(0.25);
    let found = minimal_orbit(
        &sys,
        [0, 1],
        10.0,
        8,
        &LoopOptions::default(),
        &ShootingOptions::default(),
    )
    .unwrap();
    assert!(found
        .orbit
        .nodes
        .iter()
        .all(|z| z[0].abs() < 1e-8 && z[2].abs() < 1e-8));
}

#[test]
fn discrete_action_converges_at_second_order() {
    let sys = pendulum_and_well(0.25);
    let exact = minimal_orbit(
        &sys,
        [1, 0],
        10.0,
        8,
        &LoopOptions::default(),
        &ShootingOptions::default(),
    )
    .unwrap()
    .orbit
    .action;
    let err = |n: usize| {
        let opts = LoopOptions {
            nodes: n,
            ..LoopOptions::default()
        };
        minimize_loop(&sys, [1, 0], 10.0, None, &opts)
            .unwrap()
            .action
            - exact
    };
    let (e1, e2) = (err(128), err(256));
    let ratio = e1 / e2;
    assert!((3.0..5.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn minimizer_beats_perturbed_loops() {
    let sys = coupled();
    let min = minimize_loop(&sys, [1, 0], 9.0, None, &LoopOptions::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = min.path.len();
    for _ in 0..100 {
        let mut nodes = min.path.nodes.clone();
        let amp = rng.gen_range(1e-3..0.5);
        let m = rng.gen_range(1..6);
        let phase: f64 = rng.gen_range(0.0..2.0 * PI);
        for (k, x) in nodes.iter_mut().enumerate() {
            let s = (2.0 * PI * (m * k) as f64 / n as f64 + phase).sin();
            x[0] += amp * s * rng.gen_range(0.5..1.0);
            x[1] += amp * s;
        }
        let c = LoopPath::new([1, 0], 9.0, nodes).unwrap();
        assert!(min.action <= discrete_action(&sys, &c) + 1e-9);
    }
}

#[test]
fn uncoupled_homoclinic_approaches_along_fast_direction() {
    let sys = pendulum_and_well(0.25);
    let spec = saddle_spectrum(&sys, 1e-3).unwrap();
    let h = homoclinic_approx(&sys, [1, 0], &spec, &HomoclinicOptions::default()).unwrap();
    assert!(h.energy.abs() < 1e-4);
    assert!(h.fast_angle < 1e-6 && !h.along_slow && !h.holds());
    // Tangents (dx2, dy2) = (1, 1/2) and (1, -1/2): angle acos(3/5).
    assert!(
        (h.transversality - 0.6f64.acos()).abs() < 1e-3,
        "{}",
        h.transversality
    );
}

#[test]
fn coupled_homoclinic_satisfies_direction_and_transversality() {
    let sys = coupled();
    let spec = saddle_spectrum(&sys, 1e-3).unwrap();
    assert!(spec.verdict.holds());
    let h = homoclinic_approx(&sys, [1, 0], &spec, &HomoclinicOptions::default()).unwrap();
    eprintln!(
        "slow {} fast {} transv {} E {}",
        h.slow_angle, h.fast_angle, h.transversality, h.energy
    );
    assert!(h.holds());
}
