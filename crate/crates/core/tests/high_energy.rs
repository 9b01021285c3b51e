use std::f64::consts::PI;

use nhic_core::fourier::FourierField;
use nhic_core::high_energy::*;
use nhic_core::ode::{Dop853, OdeSystem};
use nhic_core::system::{KineticMatrix, MechanicalSystem};
use num_complex::Complex64;

fn chart(omega: f64, a: [[f64; 2]; 2], v: FourierField) -> RescaledChart {
    RescaledChart::new(omega, KineticMatrix::new(a).unwrap(), v).unwrap()
}

/// `constant + sum amp cos<l, x>`.
fn cosines(terms: &[([i32; 2], f64)], constant: f64) -> FourierField {
    let mut pairs = vec![([0, 0, 0], Complex64::new(constant, 0.0))];
    pairs.extend(
        terms
            .iter()
            .map(|(l, a)| ([l[0], l[1], 0], Complex64::new(a / 2.0, 0.0))),
    );
    FourierField::from_pairs(2, pairs).unwrap()
}

fn pendulum_well() -> FourierField {
    cosines(&[([1, 0], -1.0), ([0, 1], -0.25)], 1.25)
}

fn coupled() -> FourierField {
    cosines(
        &[
            ([1, 0], -1.0),
            ([0, 1], -0.25),
            ([1, 1], 0.1),
            ([1, -1], 0.05),
        ],
        1.25,
    )
}

struct Physical<'a>(&'a MechanicalSystem);

impl OdeSystem for Physical<'_> {
    fn dim(&self) -> usize {
        4
    }
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        dy.copy_from_slice(&self.0.vector_field(t, &[y[0], y[1], y[2], y[3]]));
    }
}

/// `dx2/dtau = -dy1/dy2`, `dy2/dtau = dy1/dx2`.
struct Reduced<'a>(TimeMap<'a>);

impl OdeSystem for Reduced<'_> {
    fn dim(&self) -> usize {
        2
    }
    fn rhs(&self, tau: f64, u: &[f64], du: &mut [f64]) {
        let j = self.0.level_jet(u[0], u[1], tau).unwrap();
        du[0] = -j.dy;
        du[1] = j.dx;
    }
}

#[test]
fn rejects_fractional_drift() {
    let k = KineticMatrix::identity();
    assert!(matches!(
        RescaledChart::new(2.5, k, pendulum_well()),
        Err(HighEnergyError::BadDrift(_))
    ));
    assert!(RescaledChart::new(0.0, k, pendulum_well()).is_err());
}

#[test]
fn rescaling_is_symplectic_and_invertible() {
    let c = chart(7.0, [[1.2, 0.3], [0.3, 0.8]], coupled());
    let z = [0.3, -1.1, 2.0, 0.4];
    let back = c.unscale(&c.rescale(&z));
    for i in 0..4 {
        assert!((back[i] - z[i]).abs() < 1e-14);
    }
    let j = c.rescaling_jacobian();
    let mut s = nalgebra::Matrix4::zeros();
    s[(0, 2)] = 1.0;
    s[(1, 3)] = 1.0;
    s[(2, 0)] = -1.0;
    s[(3, 1)] = -1.0;
    assert!((j.transpose() * s * j - s).amax() < 1e-14);
    // G' is the chart Hamiltonian in the new coordinates
    let sys = c.system().unwrap();
    let g = sys.hamiltonian(0.0, &z);
    assert!((c.rescaled_hamiltonian(&c.rescale(&z)) - g).abs() < 1e-12);
}

#[test]
fn free_drift_level_matches_closed_form() {
    // V = 0, A = I: y1 = Omega^2 (sqrt(1 + 2E/Omega - y2^2/Omega^2) - 1)
    let c = chart(
        10.0,
        [[1.0, 0.0], [0.0, 1.0]],
        FourierField::zero(2).unwrap(),
    );
    let map = c.time_map(2.0);
    for &y2 in &[0.0, 0.5, -1.3] {
        let exact = 100.0 * ((1.0 + 0.4 - y2 * y2 / 100.0f64).sqrt() - 1.0);
        let y1 = map.momentum(0.2, y2, 0.1).unwrap();
        assert!((y1 - exact).abs() < 1e-12, "{y1} {exact}");
        assert!((c.rescaled_hamiltonian(&[0.1, 0.2, y1, y2]) - 20.0).abs() < 1e-12);
    }
    // a constant loop, with L1 = y1 - E Omega - offset along it
    let opts = LoopOptions::default();
    let lm = minimize_loop(&map, 0.7, 512, None, &opts).unwrap();
    assert!(lm.sup_velocity < 1e-12);
    let shifted = map.level_jet(0.7, 0.0, 0.0).unwrap().shifted;
    let expected = 2.0 * PI * (shifted - map.lagrangian_offset());
    assert!((lm.action - expected).abs() < 1e-12 && lm.f0.abs() < 1e-12);
    assert!((lm.fr - 10.0 * expected).abs() < 1e-10);
}

#[test]
fn zero_energy_free_chart_is_kinetic() {
    let c = chart(
        10.0,
        [[1.0, 0.0], [0.0, 1.0]],
        FourierField::zero(2).unwrap(),
    );
    let map = c.time_map(0.0);
    assert_eq!(map.momentum(0.3, 0.0, 0.2).unwrap(), 0.0);
    for &v in &[0.0, 0.5, -1.0] {
        let l = map.lagrangian(v, 0.3, 0.2).unwrap();
        assert!((l.value - 0.5 * v * v).abs() < 1e-12 * (1.0 + v * v).max(1.0) + 1e-2 * v.powi(4));
    }
}

#[test]
fn level_jet_matches_finite_differences() {
    let c = chart(13.0, [[1.2, 0.3], [0.3, 0.8]], coupled());
    let map = c.time_map(1.7);
    let (x, y, t) = (0.4, -0.6, 0.37);
    let j = map.level_jet(x, y, t).unwrap();
    let f = |x: f64, y: f64| map.level_jet(x, y, t).unwrap().shifted;
    let h = 1e-4;
    let dy = (f(x, y + h) - f(x, y - h)) / (2.0 * h);
    let dx = (f(x + h, y) - f(x - h, y)) / (2.0 * h);
    let dyy = (f(x, y + h) - 2.0 * f(x, y) + f(x, y - h)) / (h * h);
    let dxx = (f(x + h, y) - 2.0 * f(x, y) + f(x - h, y)) / (h * h);
    let dxy =
        (f(x + h, y + h) - f(x + h, y - h) - f(x - h, y + h) + f(x - h, y - h)) / (4.0 * h * h);
    assert!((j.dy - dy).abs() < 1e-7);
    assert!((j.dx - dx).abs() < 1e-7);
    assert!((j.dyy - dyy).abs() < 1e-5);
    assert!((j.dxx - dxx).abs() < 1e-5);
    assert!((j.dxy - dxy).abs() < 1e-5);
}

#[test]
fn level_solution_approaches_its_expansion() {
    // y1 = E Omega - A22 y2^2/2 - A12 E y2 + V - A11 E^2/2 + O(1/Omega)
    let a = [[1.2, 0.3], [0.3, 0.8]];
    let e = 1.5;
    let (x, y, t) = (0.4, 0.9, 0.21);
    let mut errors = Vec::new();
    for &w in &[100.0, 200.0, 400.0, 800.0] {
        let c = chart(w, a, coupled());
        let map = c.time_map(e);
        // keep V(Omega tau, x) fixed as Omega varies
        let tau = t / w;
        let exact = map.momentum(x, y, tau).unwrap();
        let series = map.momentum_series(x, y, tau) - 0.5 * a[0][0] * e * e;
        errors.push((exact - series).abs());
    }
    for w in errors.windows(2) {
        let ratio = w[0] / w[1];
        assert!((ratio - 2.0).abs() < 0.1, "{errors:?}");
    }
    assert!(errors[3] < 2e-2);
}

#[test]
fn legendre_transform_inverts_the_velocity() {
    let c = chart(20.0, [[1.2, 0.3], [0.3, 0.8]], coupled());
    let map = c.time_map(2.0);
    for &v in &[-1.0, 0.0, 0.3, 2.0] {
        let lj = map.lagrangian(v, 0.5, 0.11).unwrap();
        let back = map.velocity(0.5, lj.momentum, 0.11).unwrap();
        assert!((back - v).abs() < 1e-12);
        let h = 1e-4;
        let lp = map.lagrangian(v + h, 0.5, 0.11).unwrap().value;
        let lm = map.lagrangian(v - h, 0.5, 0.11).unwrap().value;
        assert!(((lp - lm) / (2.0 * h) - lj.dv).abs() < 1e-7);
        assert!(((lp - 2.0 * lj.value + lm) / (h * h) - lj.dvv).abs() < 1e-4);
        let xp = map.lagrangian(v, 0.5 + h, 0.11).unwrap();
        let xm = map.lagrangian(v, 0.5 - h, 0.11).unwrap();
        assert!(((xp.value - xm.value) / (2.0 * h) - lj.dx).abs() < 1e-7);
        assert!(((xp.dv - xm.dv) / (2.0 * h) - lj.dvx).abs() < 1e-6);
        assert!(((xp.dx - xm.dx) / (2.0 * h) - lj.dxx).abs() < 1e-6);
    }
}

#[test]
fn reduced_flow_reproduces_the_chart_flow() {
    // integrate the chart in physical time and the reduced system in tau
    let c = chart(5.0, [[1.2, 0.3], [0.3, 0.8]], coupled());
    let sys = c.system().unwrap();
    let e = 1.4;
    let map = c.time_map(e);
    let (x2, y2) = (0.3, 0.2);
    let y1 = map.momentum(x2, y2, 0.0).unwrap() / 5.0;
    let z0 = [0.0, x2, y1, y2];
    assert!((sys.hamiltonian(0.0, &z0) - e * 5.0).abs() < 1e-10);
    let full = Physical(&sys);
    let reduced = Reduced(map);
    let solver = Dop853::with_tolerance(1e-12);
    // integrate the full flow until x1 = Omega * tau_end
    let tau_end = 0.8;
    let mut t = 0.0;
    let mut z = z0.to_vec();
    for _ in 0..50 {
        let rate = sys.vector_field(0.0, &[z[0], z[1], z[2], z[3]])[0];
        let dt = (5.0 * tau_end - z[0]) / rate;
        if dt.abs() < 1e-13 {
            break;
        }
        z = solver.integrate(&full, t, &z, t + dt, |_, _| {}).unwrap();
        t += dt;
    }
    let u = solver
        .integrate(&reduced, 0.0, &[x2, y2], tau_end, |_, _| {})
        .unwrap();
    assert!((u[0] - z[1]).abs() < 1e-8, "{u:?} {z:?}");
    assert!((u[1] - z[3]).abs() < 1e-8);
}

#[test]
fn symmetric_minimizer_is_critical() {
    // V even in x2, so x2 = 0 is critical for F
    let c = chart(10.0, [[1.0, 0.0], [0.0, 1.0]], pendulum_well());
    let opts = LoopOptions::default();
    let s = action_split(&c, 0.0, 1.0, &opts).unwrap();
    assert!(s.f[1].abs() < 1e-8 && s.variational[0].abs() < 1e-10);
    assert!((s.f[2] - s.variational[1]).abs() < 1e-4 * s.f[2].abs());
    assert!((s.recombined() - s.f[0]).abs() < 1e-12);
    let crit = critical_loop(&c, 1.0, &opts).unwrap();
    assert!(crit.loop_min.x2.abs() < 1e-10);
}

#[test]
fn discrete_derivatives_match_reminimized_actions() {
    let c = chart(10.0, [[1.2, 0.3], [0.3, 0.8]], coupled());
    let opts = LoopOptions::default();
    let s = action_split(&c, 0.4, 1.5, &opts).unwrap();
    assert!((s.f[1] - s.variational[0]).abs() < 1e-6, "{s:?}");
    assert!((s.f[2] - s.variational[1]).abs() < 1e-3 * s.f[2].abs());
}

#[test]
fn action_converges_to_the_averaged_action() {
    // |F - F0| ~ 1/Omega: doubling Omega halves the gap
    let opts = LoopOptions::default();
    let mut gaps = Vec::new();
    let omegas = [20.0, 40.0, 80.0, 160.0];
    for &w in &omegas {
        let c = chart(w, [[1.2, 0.3], [0.3, 0.8]], coupled());
        let s = action_split(&c, 0.3, 1.0, &opts).unwrap();
        gaps.push((s.f[0] - s.f0[0]).abs());
    }
    let n = gaps.len() as f64;
    let xs: Vec<f64> = omegas.iter().map(|w| w.ln()).collect();
    let ys: Vec<f64> = gaps.iter().map(|g| g.ln()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let slope = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    assert!((slope + 1.0).abs() < 0.2, "{gaps:?} slope {slope}");
}

#[test]
fn oscillatory_part_is_bounded_by_the_velocity() {
    let v = coupled();
    let bound_coeff: f64 = v
        .modes()
        .filter(|(l, _)| l[0] != 0)
        .map(|(l, c)| 2.0 * PI * c.norm() * (l[1] as f64).abs() / (l[0] as f64).abs())
        .sum();
    let opts = LoopOptions::default();
    for &(w, x2) in &[(10.0, 0.4), (30.0, -0.7), (50.0, 1.0)] {
        let c = chart(w, [[1.2, 0.3], [0.3, 0.8]], v.clone());
        let map = c.time_map(1.2);
        let lm = minimize_loop(&map, x2, opts.nodes(w), None, &opts).unwrap();
        assert!(
            lm.oscillatory.abs() <= bound_coeff * lm.sup_velocity + 1e-9,
            "{} {}",
            lm.oscillatory,
            lm.sup_velocity
        );
    }
}

#[test]
fn pendulum_well_splitting_is_uniform() {
    let opts = LoopOptions::default();
    let mut points = Vec::new();
    for &w in &[10.0, 30.0, 100.0] {
        let c = chart(w, [[1.0, 0.0], [0.0, 1.0]], pendulum_well());
        for &e in &[0.5, 3.0] {
            points.push(analyze_point(&c, e, &opts).unwrap());
        }
    }
    let r = uniform_splitting(&points, 1e-2).unwrap();
    assert!(r.passed);
    // pinned loops of 1/2 v^2 + 1/2 k x^2 have action r tanh(pi r) x^2, r = sqrt k
    let limit = (PI * 0.5f64).tanh();
    let top = r.mu_by_omega.last().unwrap().1;
    assert!((top - limit).abs() < 0.02 * limit, "{r:?}");
    assert!(r.mu_spread < 0.2);
    assert!(r.largest_multiplier > 1.0);
    let limits = limit_checks(
        &points
            .iter()
            .filter(|p| p.energy == 0.5)
            .cloned()
            .collect::<Vec<_>>(),
    )
    .unwrap();
    assert!(limits.passed(), "{limits:?}");
    for p in &points {
        let prod = p.multipliers[0] * p.multipliers[1];
        assert!((prod - 1.0).abs() < 1e-6, "{:?}", p.multipliers);
    }
}

#[test]
fn degenerate_average_fails() {
    // [V] = 0.25 (1 - cos x2)^2 has a flat bottom
    let v = cosines(
        &[([1, 0], -1.0), ([0, 1], -0.5), ([0, 2], 0.125)],
        1.0 + 0.25 * 1.5,
    );
    let c = chart(30.0, [[1.0, 0.0], [0.0, 1.0]], v);
    let opts = LoopOptions::default();
    let points: Vec<PointReport> = [0.5, 1.5]
        .iter()
        .filter_map(|&e| analyze_point(&c, e, &opts).ok())
        .collect();
    assert_eq!(points.len(), 2);
    let r = uniform_splitting(&points, 1e-2).unwrap();
    assert!(!r.passed, "{r:?}");
}

#[test]
fn energy_floor_is_enforced() {
    let c = chart(10.0, [[1.0, 0.0], [0.0, 1.0]], pendulum_well());
    assert!(matches!(
        critical_loop(&c, 0.05, &LoopOptions::default()),
        Err(HighEnergyError::EnergyBelowFloor(_))
    ));
}

#[test]
fn averaged_potential_alone_has_no_oscillation() {
    let v = cosines(&[([0, 1], -0.25)], 0.25);
    let opts = LoopOptions::default();
    for &w in &[10.0, 40.0] {
        let c = chart(w, [[1.0, 0.0], [0.0, 1.0]], v.clone());
        let s = action_split(&c, 0.6, 1.0, &opts).unwrap();
        assert_eq!(s.oscillatory, 0.0);
        // the pinned minimizer beats the frozen curve
        assert!(s.f0[0] < 2.0 * PI * 0.25 * (1.0 - 0.6f64.cos()));
        assert!((s.recombined() - s.f[0]).abs() < 1e-8);
    }
}
