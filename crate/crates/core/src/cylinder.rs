//! Cylinders of minimal periodic orbits: energy continuation, the period
//! and hyperbolicity laws near the separatrix, bifurcations between
//! competing families, the alpha channel, and persistence under a fast
//! time-periodic perturbation.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::ops::RangeInclusive;
#[allow(unused_imports)]
use num_traits::Float;

use nalgebra::{Matrix2, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::flow::{flow_map, DriftScaling, FlowError};
use crate::fourier::wrap_angle;
use crate::linalg::fit_line;
use crate::orbit_min::{
    loop_to_nodes, minimal_orbit, LoopMinimum, LoopOptions, LoopPath, OrbitError, SaddleSpectrum,
};
use crate::periodic::{
    refine, segment_count, Closure, PeriodicOrbit, ShootingError, ShootingOptions,
};
use crate::system::{MechanicalSystem, State};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CylinderError {
    #[error(transparent)]
    Orbit(#[from] OrbitError),
    #[error(transparent)]
    Shooting(#[from] ShootingError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error("continuation stalled: last good energy {last_good:e}, target {target:e}")]
    Stall { last_good: f64, target: f64 },
    #[error("energies must be positive and strictly increasing")]
    BadGrid,
    #[error("fit needs {needed} points spanning two decades in [{min:e}, {max:e}]; have {have}")]
    InsufficientRange {
        needed: usize,
        have: usize,
        min: f64,
        max: f64,
    },
    #[error("periods follow a power law, not a logarithmic one")]
    NoLogRegime,
    #[error("orbit at energy {energy:e} is not hyperbolic (leading multiplier {multiplier})")]
    NonHyperbolic { energy: f64, multiplier: f64 },
    #[error("invalid window exponent {d}; admissible range (0, {max})")]
    BadWindow { d: f64, max: f64 },
    #[error("the system has no time-periodic remainder")]
    NoForcing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchOptions {
    pub loop_opts: LoopOptions,
    pub shoot: ShootingOptions,
    pub min_segments: usize,
    pub max_segment_time: f64,
    /// Compare each orbit against a fresh fixed-period minimization.
    pub certify: bool,
    pub max_halvings: usize,
}

impl Default for BranchOptions {
    fn default() -> Self {
        Self {
            loop_opts: LoopOptions::default(),
            shoot: ShootingOptions::default(),
            min_segments: 8,
            max_segment_time: 3.0,
            certify: true,
            max_halvings: 14,
        }
    }
}

/// One orbit of a branch with its Floquet data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchPoint {
    /// Energy above the saddle level.
    pub energy: f64,
    pub orbit: PeriodicOrbit,
    /// Multipliers as `[re, im]`, by decreasing modulus.
    pub multipliers: [[f64; 2]; 4],
    pub leading: f64,
    /// `|forward dominant / backward dominant - 1|`, from independent
    /// forward and backward integrations.
    pub reciprocity_defect: f64,
    /// `None` when certification was skipped or failed to run.
    pub minimal: Option<bool>,
}

impl BranchPoint {
    pub fn period(&self) -> f64 {
        self.orbit.period
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CylinderBranch {
    pub class: [i32; 2],
    /// Minimum of the potential; energies are measured from `-level`.
    pub level: f64,
    /// Ordered by increasing energy.
    pub points: Vec<BranchPoint>,
}

impl CylinderBranch {
    pub fn energies(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.energy).collect()
    }

    pub fn nearest(&self, energy: f64) -> Option<&BranchPoint> {
        self.points.iter().min_by(|a, b| {
            (a.energy - energy)
                .abs()
                .total_cmp(&(b.energy - energy).abs())
        })
    }
}

fn excess(level: f64, g: f64) -> f64 {
    g + level
}

/// Moves a periodic orbit along its family to the energy `target` (value of
/// the Hamiltonian).
///
/// Above the saddle level the family is followed in the period, with the
/// period of the target found by secant iteration in log-excess energy;
/// near the separatrix `dT/dE` blows up and fixed-energy Newton steps leave
/// the basin. Elsewhere the energy is stepped directly.
pub fn continue_orbit(
    sys: &MechanicalSystem,
    start: &PeriodicOrbit,
    level: f64,
    target: f64,
    opts: &BranchOptions,
) -> Result<PeriodicOrbit, CylinderError> {
    let above = excess(level, target) > 0.0 && excess(level, start.energy) > 0.0;
    if above {
        if let Ok(orbit) = continue_in_period(sys, start, level, target, opts) {
            return Ok(orbit);
        }
    }
    continue_in_energy(sys, start, level, target, opts)
}

fn resegment(
    sys: &MechanicalSystem,
    orbit: &PeriodicOrbit,
    period: f64,
    opts: &BranchOptions,
) -> Result<Vec<State>, CylinderError> {
    let m = segment_count(period, opts.min_segments, opts.max_segment_time);
    Ok(orbit.with_segments(sys, m, opts.shoot.tol)?.nodes)
}

fn continue_in_period(
    sys: &MechanicalSystem,
    start: &PeriodicOrbit,
    level: f64,
    target: f64,
    opts: &BranchOptions,
) -> Result<PeriodicOrbit, CylinderError> {
    let u = |g: f64| excess(level, g).ln();
    let goal = u(target);
    let fixed = |nodes: &[State], period: f64, class| {
        refine(
            sys,
            nodes,
            period,
            class,
            Closure::FixedPeriod,
            0.0,
            &opts.shoot,
        )
        .ok()
        .filter(|o| excess(level, o.energy) > 0.0)
    };
    let stall = |o: &PeriodicOrbit| CylinderError::Stall {
        last_good: excess(level, o.energy),
        target: excess(level, target),
    };
    let mut current = start.clone();
    // slope dT/du from a small probe
    let probe_t = current.period * (1.0 + 1e-4);
    let probe = fixed(
        &resegment(sys, &current, probe_t, opts)?,
        probe_t,
        current.class,
    )
    .ok_or_else(|| stall(&current))?;
    let mut previous = probe;
    let max_step = opts.max_segment_time;
    let mut frac = 1.0;
    let mut failures = 0;
    for _ in 0..400 {
        let uc = u(current.energy);
        if (uc - goal).abs() <= 1e-9 {
            let polished = refine(
                sys,
                &current.nodes,
                current.period,
                current.class,
                Closure::FixedEnergy(target),
                0.0,
                &opts.shoot,
            );
            return Ok(polished.unwrap_or(current));
        }
        let du = uc - u(previous.energy);
        let slope = (current.period - previous.period) / du;
        if !slope.is_finite() {
            return Err(stall(&current));
        }
        let step = slope * (goal - uc);
        let limit = frac * max_step.max(0.05 * current.period);
        let period = current.period + step.clamp(-limit, limit);
        let mut nodes = resegment(sys, &current, period, opts)?;
        if previous.nodes.len() == nodes.len() && current.period != previous.period {
            let r = (period - current.period) / (current.period - previous.period);
            for (z, (a, b)) in nodes
                .iter_mut()
                .zip(current.nodes.iter().zip(&previous.nodes))
            {
                for i in 0..4 {
                    z[i] = a[i] + r * (a[i] - b[i]);
                }
            }
        }
        match fixed(&nodes, period, current.class) {
            Some(orbit) => {
                previous = core::mem::replace(&mut current, orbit);
                frac = (frac * 2.0).min(1.0);
                failures = 0;
            }
            None => {
                failures += 1;
                if failures > opts.max_halvings {
                    return Err(stall(&current));
                }
                frac *= 0.5;
            }
        }
    }
    Err(stall(&current))
}

fn continue_in_energy(
    sys: &MechanicalSystem,
    start: &PeriodicOrbit,
    level: f64,
    target: f64,
    opts: &BranchOptions,
) -> Result<PeriodicOrbit, CylinderError> {
    let mut current = start.clone();
    let mut previous: Option<PeriodicOrbit> = None;
    let mut frac = 1.0;
    let mut failures = 0;
    loop {
        let gap = target - current.energy;
        if gap.abs() <= 1e-13 * target.abs().max(1.0) {
            return Ok(current);
        }
        let next = if frac >= 1.0 {
            target
        } else {
            current.energy + frac * gap
        };
        let mut period = current.period;
        let mut nodes = current.nodes.clone();
        if let Some(prev) = &previous {
            let du = current.energy - prev.energy;
            if du.abs() > 0.0 {
                let r = (next - current.energy) / du;
                let p = current.period + r * (current.period - prev.period);
                if p > 0.0 {
                    period = p;
                }
                if prev.nodes.len() == nodes.len() {
                    for (z, (a, b)) in nodes.iter_mut().zip(current.nodes.iter().zip(&prev.nodes)) {
                        for i in 0..4 {
                            z[i] = a[i] + r * (a[i] - b[i]);
                        }
                    }
                }
            }
        }
        let m = segment_count(period, opts.min_segments, opts.max_segment_time);
        if m != nodes.len() {
            nodes = current.with_segments(sys, m, opts.shoot.tol)?.nodes;
        }
        match refine(
            sys,
            &nodes,
            period,
            current.class,
            Closure::FixedEnergy(next),
            current.t0,
            &opts.shoot,
        ) {
            Ok(orbit) if orbit.period > 0.0 => {
                previous = Some(core::mem::replace(&mut current, orbit));
                frac = (frac * 2.0).min(1.0);
                failures = 0;
            }
            _ => {
                failures += 1;
                if failures > opts.max_halvings {
                    return Err(CylinderError::Stall {
                        last_good: excess(level, current.energy),
                        target: excess(level, target),
                    });
                }
                frac *= 0.5;
                previous = None;
            }
        }
    }
}

/// Rough period of a loop of class `class` at energy `e` above the saddle,
/// treating the potential as its mean.
fn period_guess(sys: &MechanicalSystem, class: [i32; 2], e: f64, level: f64) -> f64 {
    let s = nalgebra::Vector2::new(2.0 * PI * class[0] as f64, 2.0 * PI * class[1] as f64);
    let len2 = s.dot(&(sys.kinetic_inverse() * s));
    let kinetic = e + (sys.potential().mean() - level).max(0.0);
    (len2 / (2.0 * kinetic.max(1e-6))).sqrt()
}

fn floquet_point(
    sys: &MechanicalSystem,
    orbit: PeriodicOrbit,
    level: f64,
    opts: &BranchOptions,
) -> Result<BranchPoint, CylinderError> {
    let tol = opts.shoot.tol;
    let forward = orbit.monodromy(sys, tol)?;
    let backward = orbit.backward_monodromy(sys, tol)?;
    let mult = forward.multipliers();
    let f = forward.dominant_by_power_iteration();
    let b = backward.dominant_by_power_iteration();
    let minimal = if opts.certify {
        minimal_orbit(
            sys,
            orbit.class,
            orbit.period,
            opts.min_segments,
            &opts.loop_opts,
            &opts.shoot,
        )
        .ok()
        .map(|m| orbit.action <= m.orbit.action + 1e-7 * m.orbit.action.abs().max(1.0))
    } else {
        None
    };
    Ok(BranchPoint {
        energy: excess(level, orbit.energy),
        multipliers: mult.map(|c| [c.re, c.im]),
        leading: mult[0].norm(),
        reciprocity_defect: (f / b - 1.0).abs(),
        minimal,
        orbit,
    })
}

fn validate_grid(energies: &[f64]) -> Result<(), CylinderError> {
    let ok = energies.iter().all(|e| *e > 0.0 && e.is_finite())
        && energies.windows(2).all(|w| w[0] < w[1]);
    if ok {
        Ok(())
    } else {
        Err(CylinderError::BadGrid)
    }
}

/// First orbit of a branch: a fixed-period minimizer moved to `energy`.
fn seed_orbit(
    sys: &MechanicalSystem,
    class: [i32; 2],
    energy: f64,
    level: f64,
    opts: &BranchOptions,
) -> Result<PeriodicOrbit, CylinderError> {
    let t = period_guess(sys, class, energy, level);
    let start = minimal_orbit(
        sys,
        class,
        t,
        opts.min_segments,
        &opts.loop_opts,
        &opts.shoot,
    )?;
    continue_orbit(sys, &start.orbit, level, energy - level, opts)
}

/// Continues minimal periodic orbits of class `class` over the energy grid
/// (energies above the saddle level, increasing), starting from the top.
pub fn continue_branch(
    sys: &MechanicalSystem,
    class: [i32; 2],
    energies: &[f64],
    opts: &BranchOptions,
) -> Result<CylinderBranch, CylinderError> {
    validate_grid(energies)?;
    let level = sys
        .potential()
        .minimize_on_torus(64)
        .map_err(OrbitError::from)?
        .value;
    let mut points = Vec::with_capacity(energies.len());
    if let Some(&top) = energies.last() {
        let mut orbit = seed_orbit(sys, class, top, level, opts)?;
        for &e in energies.iter().rev() {
            orbit = continue_orbit(sys, &orbit, level, e - level, opts)?;
            points.push(floquet_point(sys, orbit.clone(), level, opts)?);
        }
    }
    points.reverse();
    Ok(CylinderBranch {
        class,
        level,
        points,
    })
}

/// Least-squares fit of `T_E` against `|ln E|`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodLaw {
    pub slope: f64,
    pub intercept: f64,
    /// Spread of `T_E - slope |ln E|` over the fit window.
    pub intercept_spread: f64,
    /// `sup |T_E - slope |ln E||`, the bound on the bounded part.
    pub bounded_part: f64,
    pub predicted: f64,
    pub relative_error: f64,
    pub points: usize,
    pub pass: bool,
}

fn log_window<'a>(
    branch: &'a CylinderBranch,
    window: &RangeInclusive<f64>,
) -> Result<Vec<&'a BranchPoint>, CylinderError> {
    let pts: Vec<&BranchPoint> = branch
        .points
        .iter()
        .filter(|p| window.contains(&p.energy))
        .collect();
    let decades = match (pts.first(), pts.last()) {
        (Some(a), Some(b)) => (b.energy / a.energy).log10(),
        _ => 0.0,
    };
    if pts.len() < 3 || decades < 2.0 - 1e-9 {
        return Err(CylinderError::InsufficientRange {
            needed: 3,
            have: pts.len(),
            min: *window.start(),
            max: *window.end(),
        });
    }
    Ok(pts)
}

/// Fits the logarithmic period law on branch points with energy in
/// `window`; `approach` is the eigenvalue along which orbits enter the
/// saddle and `windings` the number of passes per period.
pub fn period_law_fit(
    branch: &CylinderBranch,
    approach: f64,
    windings: u32,
    window: RangeInclusive<f64>,
    tolerance: f64,
) -> Result<PeriodLaw, CylinderError> {
    let pts = log_window(branch, &window)?;
    let x: Vec<f64> = pts.iter().map(|p| -p.energy.ln()).collect();
    let t: Vec<f64> = pts.iter().map(|p| p.period()).collect();
    let fit = fit_line(&x, &t).ok_or(CylinderError::NoLogRegime)?;
    // A power law T ~ E^{-a} fits ln T linearly in ln E; prefer it when it
    // explains the data better than the logarithmic law.
    let lt: Vec<f64> = t.iter().map(|v| v.ln()).collect();
    let power = fit_line(&x, &lt).ok_or(CylinderError::NoLogRegime)?;
    let rel_log = fit.max_residual / t.iter().copied().fold(0.0, f64::max);
    let rel_pow = power.max_residual;
    if power.slope > 0.05 && rel_pow < rel_log {
        return Err(CylinderError::NoLogRegime);
    }
    let predicted = windings as f64 / approach;
    let relative_error = (fit.slope - predicted).abs() / predicted;
    let bounded_part = x
        .iter()
        .zip(&t)
        .map(|(a, b)| (b - fit.slope * a).abs())
        .fold(0.0, f64::max);
    Ok(PeriodLaw {
        slope: fit.slope,
        intercept: fit.intercept,
        intercept_spread: fit.intercept_spread,
        bounded_part,
        predicted,
        relative_error,
        points: pts.len(),
        pass: relative_error <= tolerance,
    })
}

/// Growth of the leading Floquet multiplier as the branch approaches the
/// separatrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FloquetScaling {
    /// Slope of `ln |Lambda|` against `|ln E|`.
    pub ratio: f64,
    pub predicted: f64,
    pub relative_error: f64,
    /// Slope of `ln |dT/dE|` against `|ln E|`: growth of tangent vectors.
    pub tangent_growth: f64,
    pub tangent_bound: f64,
    pub max_reciprocity_defect: f64,
    pub pass: bool,
}

pub fn floquet_scaling(
    branch: &CylinderBranch,
    predicted: f64,
    window: RangeInclusive<f64>,
    tolerance: f64,
    tangent_slack: f64,
) -> Result<FloquetScaling, CylinderError> {
    let pts = log_window(branch, &window)?;
    if let Some(p) = pts.iter().find(|p| p.leading < 1.01) {
        return Err(CylinderError::NonHyperbolic {
            energy: p.energy,
            multiplier: p.leading,
        });
    }
    let x: Vec<f64> = pts.iter().map(|p| -p.energy.ln()).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.leading.ln()).collect();
    let fit = fit_line(&x, &y).ok_or(CylinderError::NoLogRegime)?;
    let mut tx = Vec::new();
    let mut ty = Vec::new();
    for w in pts.windows(2) {
        let d = (w[1].period() - w[0].period()) / (w[1].energy - w[0].energy);
        if d != 0.0 {
            tx.push(-(w[0].energy * w[1].energy).sqrt().ln());
            ty.push(d.abs().ln());
        }
    }
    let tangent_growth = fit_line(&tx, &ty).map_or(f64::NAN, |f| f.slope);
    let max_reciprocity_defect = pts.iter().map(|p| p.reciprocity_defect).fold(0.0, f64::max);
    let relative_error = (fit.slope - predicted).abs() / predicted.abs();
    let tangent_bound = 1.0 + tangent_slack;
    Ok(FloquetScaling {
        ratio: fit.slope,
        predicted,
        relative_error,
        tangent_growth,
        tangent_bound,
        max_reciprocity_defect,
        pass: relative_error <= tolerance && tangent_growth <= tangent_bound,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BifurcationOptions {
    pub branch: BranchOptions,
    /// Straight starts spread across the transverse direction.
    pub starts: usize,
    /// Two loops closer than this (Hausdorff, on the torus) are one family.
    pub separation: f64,
    pub energy_tol: f64,
    pub seed: u64,
}

impl Default for BifurcationOptions {
    fn default() -> Self {
        Self {
            branch: BranchOptions {
                certify: false,
                ..BranchOptions::default()
            },
            starts: 12,
            separation: 0.1,
            energy_tol: 1e-10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BifurcationPoint {
    /// Energy above the saddle level.
    pub energy: f64,
    /// Minimal just below the crossing.
    pub lower: PeriodicOrbit,
    /// Minimal just above the crossing.
    pub upper: PeriodicOrbit,
    /// Difference of the fixed-energy actions at the crossing.
    pub action_gap: f64,
    /// `dF/dE` of the orbit minimal below minus that of the orbit minimal
    /// above; positive under the nondegeneracy hypothesis.
    pub slope_gap: f64,
}

impl BifurcationPoint {
    pub fn nondegenerate(&self) -> bool {
        self.slope_gap > 0.0
    }
}

/// Two families whose actions agree over the whole scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegenerateFamilies {
    pub max_action_gap: f64,
    pub max_slope_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyTrace {
    pub energies: Vec<f64>,
    /// Fixed-energy action per grid energy; `None` where continuation failed.
    pub actions: Vec<Option<f64>>,
    pub periods: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BifurcationScan {
    pub families: Vec<FamilyTrace>,
    pub crossings: Vec<BifurcationPoint>,
    pub degenerate: Option<DegenerateFamilies>,
}

fn torus_distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = wrap_angle(a[0] - b[0]);
    let dy = wrap_angle(a[1] - b[1]);
    (dx * dx + dy * dy).sqrt()
}

/// Symmetric Hausdorff distance between two loops projected to the torus.
pub fn loop_distance(a: &LoopPath, b: &LoopPath) -> f64 {
    let directed = |p: &LoopPath, q: &LoopPath| {
        p.nodes
            .iter()
            .map(|x| {
                q.nodes
                    .iter()
                    .map(|y| torus_distance(*x, *y))
                    .fold(f64::INFINITY, f64::min)
            })
            .fold(0.0, f64::max)
    };
    directed(a, b).max(directed(b, a))
}

/// Distinct local minimizers of the fixed-period action, lowest first.
pub fn local_families(
    sys: &MechanicalSystem,
    class: [i32; 2],
    period: f64,
    opts: &BifurcationOptions,
) -> Result<Vec<LoopMinimum>, CylinderError> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let perp = [-(class[1] as f64), class[0] as f64];
    let norm = (perp[0] * perp[0] + perp[1] * perp[1]).sqrt();
    let mut found: Vec<LoopMinimum> = Vec::new();
    let single = LoopOptions {
        restarts: 0,
        ..opts.branch.loop_opts
    };
    for k in 0..opts.starts {
        let t = -PI + 2.0 * PI * k as f64 / opts.starts as f64 + rng.gen_range(-0.05..0.05);
        let base = [t * perp[0] / norm, t * perp[1] / norm];
        let mut path = LoopPath::straight(class, period, base, single.nodes)?;
        let n = path.len();
        let a = rng.gen_range(-0.05..0.05);
        for (i, x) in path.nodes.iter_mut().enumerate() {
            let s = (2.0 * PI * i as f64 / n as f64).sin();
            x[0] += a * s * perp[0] / norm;
            x[1] += a * s * perp[1] / norm;
        }
        let Ok(min) = crate::orbit_min::descend_from(sys, path, &single) else {
            continue;
        };
        if found
            .iter()
            .all(|f| loop_distance(&f.path, &min.path) > opts.separation)
        {
            found.push(min);
        }
    }
    found.sort_by(|a, b| a.action.total_cmp(&b.action));
    Ok(found)
}

fn trace_family(
    sys: &MechanicalSystem,
    start: &PeriodicOrbit,
    level: f64,
    energies: &[f64],
    opts: &BranchOptions,
) -> Vec<Option<PeriodicOrbit>> {
    let mut out = vec![None; energies.len()];
    let top = energies.len() - 1;
    let Ok(first) = continue_orbit(sys, start, level, energies[top] - level, opts) else {
        return out;
    };
    let mut current = first;
    for k in (0..=top).rev() {
        match continue_orbit(sys, &current, level, energies[k] - level, opts) {
            Ok(o) => {
                current = o.clone();
                out[k] = Some(o);
            }
            Err(_) => break,
        }
    }
    out
}

/// Scans the energy grid for crossings of the two lowest local families.
pub fn detect_bifurcations(
    sys: &MechanicalSystem,
    class: [i32; 2],
    energies: &[f64],
    opts: &BifurcationOptions,
) -> Result<BifurcationScan, CylinderError> {
    validate_grid(energies)?;
    let empty = BifurcationScan {
        families: Vec::new(),
        crossings: Vec::new(),
        degenerate: None,
    };
    let Some(&top) = energies.last() else {
        return Ok(empty);
    };
    let level = sys
        .potential()
        .minimize_on_torus(64)
        .map_err(OrbitError::from)?
        .value;
    let bopts = &opts.branch;
    let period = period_guess(sys, class, top, level);
    let families = local_families(sys, class, period, opts)?;
    let mut traces = Vec::new();
    for fam in families.iter().take(2) {
        let m = segment_count(period, bopts.min_segments, bopts.max_segment_time);
        let guess = loop_to_nodes(sys, &fam.path, m);
        let Ok(orbit) = refine(
            sys,
            &guess,
            period,
            class,
            Closure::FixedPeriod,
            0.0,
            &bopts.shoot,
        ) else {
            continue;
        };
        traces.push(trace_family(sys, &orbit, level, energies, bopts));
    }
    let as_trace = |t: &Vec<Option<PeriodicOrbit>>| FamilyTrace {
        energies: energies.to_vec(),
        actions: t
            .iter()
            .map(|o| o.as_ref().map(|o| o.reduced_action))
            .collect(),
        periods: t.iter().map(|o| o.as_ref().map(|o| o.period)).collect(),
    };
    let mut scan = BifurcationScan {
        families: traces.iter().map(as_trace).collect(),
        ..empty
    };
    if traces.len() < 2 {
        return Ok(scan);
    }
    let (a, b) = (&traces[0], &traces[1]);
    let mut max_gap = 0.0f64;
    let mut max_slope = 0.0f64;
    let mut scale = 0.0f64;
    for k in 0..energies.len() {
        if let (Some(x), Some(y)) = (&a[k], &b[k]) {
            max_gap = max_gap.max((x.reduced_action - y.reduced_action).abs());
            max_slope = max_slope.max((x.period - y.period).abs());
            scale = scale.max(x.reduced_action.abs());
        }
    }
    if max_gap <= 1e-7 * scale.max(1.0) {
        scan.degenerate = Some(DegenerateFamilies {
            max_action_gap: max_gap,
            max_slope_gap: max_slope,
        });
        return Ok(scan);
    }
    for k in 0..energies.len() - 1 {
        let (Some(a0), Some(b0), Some(a1), Some(b1)) = (&a[k], &b[k], &a[k + 1], &b[k + 1]) else {
            continue;
        };
        let f0 = a0.reduced_action - b0.reduced_action;
        let f1 = a1.reduced_action - b1.reduced_action;
        if f0 == 0.0 || f0.signum() == f1.signum() {
            continue;
        }
        if let Some(p) = refine_crossing(
            sys,
            level,
            [(energies[k], a0, b0), (energies[k + 1], a1, b1)],
            opts,
        )? {
            scan.crossings.push(p);
        }
    }
    Ok(scan)
}

type Bracket<'a> = [(f64, &'a PeriodicOrbit, &'a PeriodicOrbit); 2];

fn refine_crossing(
    sys: &MechanicalSystem,
    level: f64,
    bracket: Bracket<'_>,
    opts: &BifurcationOptions,
) -> Result<Option<BifurcationPoint>, CylinderError> {
    let bopts = &opts.branch;
    let [(mut lo, a_lo, b_lo), (mut hi, a_hi, b_hi)] = bracket;
    let gap = |a: &PeriodicOrbit, b: &PeriodicOrbit| a.reduced_action - b.reduced_action;
    let f_lo = gap(a_lo, b_lo);
    let (mut a, mut b) = (a_lo.clone(), b_lo.clone());
    let mut e = lo;
    let mut e_next = lo - f_lo * (hi - lo) / (gap(a_hi, b_hi) - f_lo);
    for _ in 0..100 {
        let Ok(na) = continue_orbit(sys, &a, level, e_next - level, bopts) else {
            return Ok(None);
        };
        let Ok(nb) = continue_orbit(sys, &b, level, e_next - level, bopts) else {
            return Ok(None);
        };
        let f = gap(&na, &nb);
        if f.signum() == f_lo.signum() {
            lo = e_next;
        } else {
            hi = e_next;
        }
        let step = e_next - e;
        a = na;
        b = nb;
        e = e_next;
        if step.abs() <= opts.energy_tol && f.abs() <= 1e-9 {
            break;
        }
        // Newton on the action gap: dF/dE is the period.
        let slope = a.period - b.period;
        let newton = e - f / slope;
        e_next = if slope != 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (hi - lo) <= opts.energy_tol {
            break;
        }
    }
    // Family `a` is minimal below the crossing when its action was lower there.
    let a_below = f_lo < 0.0;
    let (lower, upper) = if a_below { (a, b) } else { (b, a) };
    Ok(Some(BifurcationPoint {
        energy: excess(level, e),
        action_gap: (lower.reduced_action - upper.reduced_action).abs(),
        slope_gap: lower.period - upper.period,
        lower,
        upper,
    }))
}

/// One point of the channel: the cohomology class dual to the orbit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelPoint {
    pub energy: f64,
    pub period: f64,
    /// Rotation vector `class / T` (turns per unit time).
    pub rotation: [f64; 2],
    /// Frequency `1 / T`.
    pub frequency: f64,
    /// Class on the line through `class`: `<c, 2 pi class> = int y dx`.
    pub cohomology: [f64; 2],
    /// Coordinate of `cohomology` along the unit vector of `class`.
    pub coordinate: f64,
    pub alpha: f64,
    pub beta: f64,
    /// `alpha + beta - <c, 2 pi rotation>`.
    pub duality_defect: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Channel {
    pub class: [i32; 2],
    pub points: Vec<ChannelPoint>,
    pub alpha_increasing: bool,
    /// Smallest divided second difference of alpha along the channel.
    pub min_convexity: f64,
    pub max_duality_defect: f64,
}

impl Channel {
    /// Frequency predicted by the logarithmic period law with the given fit.
    pub fn predicted_frequency(law: &PeriodLaw, energy: f64) -> f64 {
        1.0 / (law.slope * (-energy.ln()) + law.intercept)
    }
}

pub fn alpha_channel(branch: &CylinderBranch) -> Channel {
    let g = [branch.class[0] as f64, branch.class[1] as f64];
    let gn = (g[0] * g[0] + g[1] * g[1]).sqrt();
    let points: Vec<ChannelPoint> = branch
        .points
        .iter()
        .map(|p| {
            let t = p.period();
            let w = p.orbit.reduced_action;
            let c_along = w / (2.0 * PI * gn);
            let c = [c_along * g[0] / gn, c_along * g[1] / gn];
            let rotation = [g[0] / t, g[1] / t];
            let pairing = 2.0 * PI * (c[0] * rotation[0] + c[1] * rotation[1]);
            let beta = p.orbit.action / t;
            ChannelPoint {
                energy: p.energy,
                period: t,
                rotation,
                frequency: 1.0 / t,
                cohomology: c,
                coordinate: c_along,
                alpha: p.orbit.energy,
                beta,
                duality_defect: (p.orbit.energy + beta - pairing).abs(),
            }
        })
        .collect();
    let alpha_increasing = points
        .windows(2)
        .all(|w| w[1].coordinate > w[0].coordinate && w[1].alpha > w[0].alpha);
    let slopes: Vec<(f64, f64)> = points
        .windows(2)
        .map(|w| {
            (
                0.5 * (w[0].coordinate + w[1].coordinate),
                (w[1].alpha - w[0].alpha) / (w[1].coordinate - w[0].coordinate),
            )
        })
        .collect();
    let min_convexity = slopes
        .windows(2)
        .map(|s| (s[1].1 - s[0].1) / (s[1].0 - s[0].0))
        .fold(f64::INFINITY, f64::min);
    let max_duality_defect = points.iter().map(|p| p.duality_defect).fold(0.0, f64::max);
    Channel {
        class: branch.class,
        points,
        alpha_increasing,
        min_convexity,
        max_duality_defect,
    }
}

/// Upper end of the admissible window exponent:
/// `min(slow sigma / (12 max sqrt(|A|^2 + |D^2 V|^2)), sigma / 4)`.
pub fn window_exponent_bound(sys: &MechanicalSystem, spectrum: &SaddleSpectrum, sigma: f64) -> f64 {
    let a = sys.kinetic().matrix().norm();
    let grid = 64;
    let mut worst = 0.0f64;
    for i in 0..grid {
        for j in 0..grid {
            let x = [
                2.0 * PI * i as f64 / grid as f64,
                2.0 * PI * j as f64 / grid as f64,
            ];
            let h = sys.potential().jet2(&x).hess;
            let hm = Matrix2::new(h[0][0], h[0][1], h[1][0], h[1][1]);
            let s = hm.symmetric_eigen().eigenvalues.amax();
            worst = worst.max((a * a + s * s).sqrt());
        }
    }
    let op_a = sys.kinetic().matrix().symmetric_eigen().eigenvalues.amax();
    let worst = worst.max(op_a);
    (spectrum.slow * sigma / (12.0 * worst)).min(sigma / 4.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PersistenceOptions {
    pub scaling: DriftScaling,
    /// Window exponent; `None` uses half of the admissible bound.
    pub window_exponent: Option<f64>,
    pub top: f64,
    pub grid: usize,
    pub max_revolutions: u32,
    pub branch: BranchOptions,
}

/// Continued periodic point of the stroboscopic map at one energy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbedPoint {
    /// Energy of the unperturbed seed above the saddle.
    pub energy: f64,
    pub forcing_periods: u32,
    pub revolutions: u32,
    pub converged: bool,
    /// Sup distance from the perturbed orbit to the unperturbed one.
    pub deformation: f64,
    /// Range of the unperturbed energy along the perturbed orbit.
    pub energy_min: f64,
    pub energy_max: f64,
    pub energy_mean: f64,
    /// Enclosed action ratio perturbed / unperturbed.
    pub area_ratio: f64,
    /// Smallest mollifier weight seen along the orbit (1 when unused).
    pub mollifier_min: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbedBranch {
    pub epsilon: f64,
    pub sigma: f64,
    pub window_exponent: f64,
    pub window: [f64; 2],
    pub points: Vec<PerturbedPoint>,
    /// Largest contiguous run of converged grid energies containing the top.
    pub surviving: Option<[f64; 2]>,
}

impl PerturbedBranch {
    pub fn all_converged(&self) -> bool {
        !self.points.is_empty() && self.points.iter().all(|p| p.converged)
    }

    pub fn max_deformation(&self) -> f64 {
        self.points
            .iter()
            .map(|p| p.deformation)
            .fold(0.0, f64::max)
    }
}

/// Picks `(m, n)` with `m` forcing periods close to `n` orbit periods.
fn resonant_period(period: f64, forcing: f64, max_rev: u32) -> (u32, u32) {
    let mut best = (1u32, 1u32, f64::INFINITY);
    for n in 1..=max_rev.max(1) {
        let m = (n as f64 * period / forcing).round().max(1.0);
        let err = (m * forcing / n as f64 - period).abs();
        if err < best.2 - 1e-12 {
            best = (m as u32, n, err);
        }
    }
    (best.0, best.1)
}

fn repeat_orbit(orbit: &PeriodicOrbit, n: u32) -> (Vec<State>, [i32; 2]) {
    let s = orbit.shift();
    let mut nodes = Vec::with_capacity(orbit.nodes.len() * n as usize);
    for r in 0..n {
        for z in &orbit.nodes {
            nodes.push([z[0] + r as f64 * s[0], z[1] + r as f64 * s[1], z[2], z[3]]);
        }
    }
    (
        nodes,
        [orbit.class[0] * n as i32, orbit.class[1] * n as i32],
    )
}

/// Distance from `p` to the orbit of `sys` through the sample `q`, by a
/// few Newton steps on the flow time.
fn distance_to_orbit(
    sys: &MechanicalSystem,
    q: &State,
    p: &State,
    tol: f64,
) -> Result<f64, FlowError> {
    let v = |s: State| Vector4::new(s[0], s[1], s[2], s[3]);
    let mut s = 0.0;
    let mut point = *q;
    for _ in 0..3 {
        let f = v(sys.vector_field(0.0, &point));
        let d = v(*p) - v(point);
        let ds = d.dot(&f) / f.norm_squared().max(1e-300);
        if ds.abs() < 1e-14 {
            break;
        }
        s += ds;
        point = flow_map(sys, q, 0.0, s, tol)?;
    }
    Ok((v(*p) - v(point)).norm())
}

fn deformation(
    unperturbed: &MechanicalSystem,
    base: &PeriodicOrbit,
    moved: &PeriodicOrbit,
    tol: f64,
) -> Result<f64, FlowError> {
    let a = base.sample(unperturbed, 32, tol)?;
    let b = moved.sample(unperturbed, 8, tol)?;
    let mut worst = 0.0f64;
    for (_, p) in &b {
        let q = a
            .iter()
            .map(|(_, q)| q)
            .min_by(|x, y| lifted_distance(x, p).total_cmp(&lifted_distance(y, p)))
            .copied()
            .unwrap_or(*p);
        worst = worst.max(distance_to_orbit(unperturbed, &q, p, tol)?);
    }
    Ok(worst)
}

fn lifted_distance(a: &State, b: &State) -> f64 {
    (0..4).map(|i| (a[i] - b[i]).powi(2)).sum::<f64>().sqrt()
}

/// Continues the branch orbit nearest to `energy` as a periodic point of
/// the stroboscopic map of `perturbed`: the orbit is repeated `n` times,
/// retuned to `m` forcing periods and refined as a forced orbit.
pub fn persist_point(
    branch: &CylinderBranch,
    unperturbed: &MechanicalSystem,
    perturbed: &MechanicalSystem,
    energy: f64,
    opts: &PersistenceOptions,
) -> Result<PerturbedPoint, CylinderError> {
    let remainder = perturbed.remainder().ok_or(CylinderError::NoForcing)?;
    let forcing = remainder.period();
    if !forcing.is_finite() {
        return Err(CylinderError::NoForcing);
    }
    let bopts = &opts.branch;
    let tol = bopts.shoot.tol;
    let level = branch.level;
    let seed = branch.nearest(energy).ok_or(CylinderError::BadGrid)?;
    let orbit = continue_orbit(unperturbed, &seed.orbit, level, energy - level, bopts)?;
    let (m, n) = resonant_period(orbit.period, forcing, opts.max_revolutions);
    let total = m as f64 * forcing;
    let (nodes, class) = repeat_orbit(&orbit, n);
    let segs = segment_count(total, bopts.min_segments, bopts.max_segment_time);
    let stacked = PeriodicOrbit {
        class,
        period: orbit.period * n as f64,
        nodes,
        ..orbit.clone()
    };
    let stacked = stacked.with_segments(unperturbed, segs, tol)?;
    let base = refine(
        unperturbed,
        &stacked.nodes,
        total,
        class,
        Closure::FixedPeriod,
        0.0,
        &bopts.shoot,
    )?;
    let moved = refine(
        perturbed,
        &base.nodes,
        total,
        class,
        Closure::Forced,
        0.0,
        &bopts.shoot,
    );
    let point = match moved {
        Ok(moved) => {
            let samples = moved.sample(perturbed, 16, tol)?;
            let energies: Vec<f64> = samples
                .iter()
                .map(|(_, z)| excess(level, unperturbed.hamiltonian(0.0, z)))
                .collect();
            let mollifier_min = match &remainder.mollifier {
                Some(mo) => samples
                    .iter()
                    .map(|(_, z)| mo.weight((z[2] * z[2] + z[3] * z[3]).sqrt()).0)
                    .fold(1.0, f64::min),
                None => 1.0,
            };
            PerturbedPoint {
                energy: excess(level, base.energy),
                forcing_periods: m,
                revolutions: n,
                converged: true,
                deformation: deformation(unperturbed, &base, &moved, tol)?,
                energy_min: energies.iter().copied().fold(f64::INFINITY, f64::min),
                energy_max: energies.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                energy_mean: energies.iter().sum::<f64>() / energies.len() as f64,
                area_ratio: moved.reduced_action / base.reduced_action,
                mollifier_min,
                residual: moved.residual,
            }
        }
        Err(ShootingError::Stalled(r)) => PerturbedPoint {
            energy: excess(level, base.energy),
            forcing_periods: m,
            revolutions: n,
            converged: false,
            deformation: f64::NAN,
            energy_min: f64::NAN,
            energy_max: f64::NAN,
            energy_mean: f64::NAN,
            area_ratio: f64::NAN,
            mollifier_min: f64::NAN,
            residual: r,
        },
        Err(other) => return Err(other.into()),
    };
    Ok(point)
}

/// Continues branch orbits as periodic points of the stroboscopic map of
/// `perturbed` over a uniform grid of the window `[eps^d, top]`.
pub fn persist_perturbed(
    branch: &CylinderBranch,
    unperturbed: &MechanicalSystem,
    perturbed: &MechanicalSystem,
    spectrum: &SaddleSpectrum,
    opts: &PersistenceOptions,
) -> Result<PerturbedBranch, CylinderError> {
    let eps = opts.scaling.epsilon;
    let sigma = opts.scaling.sigma;
    let bound = window_exponent_bound(unperturbed, spectrum, sigma);
    let d = opts.window_exponent.unwrap_or(0.5 * bound);
    if !(d > 0.0 && d < bound) {
        return Err(CylinderError::BadWindow { d, max: bound });
    }
    let lo = eps.powf(d);
    let window = [lo, opts.top];
    let grid: Vec<f64> = if opts.grid <= 1 {
        vec![opts.top]
    } else {
        (0..opts.grid)
            .map(|k| lo + (opts.top - lo) * k as f64 / (opts.grid - 1) as f64)
            .collect()
    };
    let mut points = Vec::with_capacity(grid.len());
    for &e in &grid {
        points.push(persist_point(branch, unperturbed, perturbed, e, opts)?);
    }
    let mut surviving: Option<[f64; 2]> = None;
    for p in points.iter().rev() {
        if !p.converged {
            break;
        }
        surviving = Some(match surviving {
            None => [p.energy, p.energy],
            Some([_, hi]) => [p.energy, hi],
        });
    }
    Ok(PerturbedBranch {
        epsilon: eps,
        sigma,
        window_exponent: d,
        window,
        points,
        surviving,
    })
}

/// Fitted `deformation <= C eps^(sigma - 2 mu)` across perturbation sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeformationLaw {
    pub exponent: f64,
    pub constant: f64,
    pub mu: f64,
    /// Largest log-residual of the fit.
    pub max_residual: f64,
}

/// Fits `ln(max deformation)` against `ln eps`; `None` with fewer than two
/// branches or a non-finite deformation.
pub fn deformation_exponent(branches: &[PerturbedBranch]) -> Option<DeformationLaw> {
    let x: Vec<f64> = branches.iter().map(|b| b.epsilon.ln()).collect();
    let y: Vec<f64> = branches.iter().map(|b| b.max_deformation().ln()).collect();
    if branches.len() < 2 || !y.iter().all(|v| v.is_finite()) {
        return None;
    }
    let sigma = branches[0].sigma;
    fit_line(&x, &y).map(|f| DeformationLaw {
        exponent: f.slope,
        constant: f.intercept.exp(),
        mu: 0.5 * (sigma - f.slope),
        max_residual: f.max_residual,
    })
}

/// `N` with `ln(N - 1) = 3 max(sup |tau|, 1)`.
pub fn window_multiplier(bounded_part: f64) -> f64 {
    1.0 + (3.0 * bounded_part.abs().max(1.0)).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AubryWindow {
    pub alpha: f64,
    pub band: f64,
    pub excursion: f64,
    pub floor: f64,
    pub multiplier: f64,
    pub above_floor: bool,
    pub pass: bool,
}

/// Checks that the perturbed orbit stays in the energy band around
/// `alpha = mean energy`, and above `eps^d` when alpha is large enough.
pub fn aubry_window_check(
    point: &PerturbedPoint,
    branch: &PerturbedBranch,
    multiplier: f64,
) -> AubryWindow {
    let alpha = point.energy_mean;
    let band = branch.epsilon.powf(branch.sigma / 3.0);
    let excursion = (point.energy_max - alpha)
        .abs()
        .max((alpha - point.energy_min).abs());
    let floor = branch.epsilon.powf(branch.window_exponent);
    let above_floor = alpha < multiplier * floor || point.energy_min >= floor;
    AubryWindow {
        alpha,
        band,
        excursion,
        floor,
        multiplier,
        above_floor,
        pass: point.converged && excursion <= band && above_floor,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resonant_period_prefers_small_error() {
        let (m, n) = resonant_period(3.3, 0.2, 4);
        assert!((m as f64 * 0.2 / n as f64 - 3.3).abs() <= 0.1 / n as f64 + 1e-12);
        assert_eq!(resonant_period(1.0, 0.25, 1), (4, 1));
    }

    #[test]
    fn multiplier_rule() {
        assert!((window_multiplier(0.2) - (1.0 + 3f64.exp())).abs() < 1e-12);
        assert!((window_multiplier(2.0) - (1.0 + 6f64.exp())).abs() < 1e-9);
    }
}
