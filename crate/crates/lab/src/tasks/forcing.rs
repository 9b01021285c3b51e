//! Tasks with the fast time-periodic forcing switched on.

use nhic_core::cylinder::{
    continue_branch, deformation_exponent, persist_perturbed, BranchOptions, PersistenceOptions,
    PerturbedBranch,
};
use nhic_core::flow::{
    energy_drift, flow_map, gronwall_check, orbit_cloud, DriftReport, DriftScaling, GronwallReport,
};
use nhic_core::fourier::FourierField;
use nhic_core::orbit_min::saddle_spectrum;
use nhic_core::system::{MechanicalSystem, Remainder, State};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::fit_line;
use crate::config::{
    required, ChartSpec, Count, ExperimentConfig, Fraction, IndexBound, Positive, Window,
};
use crate::plot::{Figure, Series};
use crate::table::Table;
use crate::{row, Check, LabError, PlotKind, TaskOutput};

const TOL: f64 = 1e-12;

struct Forcing {
    base: MechanicalSystem,
    field: FourierField,
    omega3: f64,
    y_max: f64,
    sigma: f64,
}

impl Forcing {
    fn new(cfg: &ExperimentConfig, chart: &ChartSpec) -> Result<Self, LabError> {
        Ok(Self {
            base: chart.system()?,
            field: chart.forcing_field()?,
            omega3: cfg.numeric.omega3.map_or(1.0, Positive::get),
            y_max: cfg.numeric.y_max.map_or(3.0, Positive::get),
            sigma: cfg.numeric.sigma(),
        })
    }

    /// The chart with `eps^sigma R(x, omega3 t / sqrt(eps))` added.
    fn at(&self, eps: f64) -> Result<MechanicalSystem, LabError> {
        let r = Remainder::new(
            self.field.clone(),
            eps.powf(self.sigma),
            self.omega3 / eps.sqrt(),
        )?;
        Ok(self.base.clone().with_remainder(r))
    }

    fn scaling(&self, eps: f64) -> DriftScaling {
        DriftScaling {
            epsilon: eps,
            sigma: self.sigma,
            omega3: self.omega3,
            y_max: self.y_max,
        }
    }
}

pub fn persist(cfg: &ExperimentConfig) -> Result<TaskOutput, LabError> {
    let n = &cfg.numeric;
    let forcing = Forcing::new(cfg, cfg.chart()?)?;
    let sys = &forcing.base;
    let spec = saddle_spectrum(sys, 1e-3)?;
    let branch_opts = BranchOptions {
        certify: n.certify.unwrap_or(false),
        ..BranchOptions::default()
    };
    let energies = required(n.energies, "energies")?.values();
    let branch = continue_branch(sys, n.class(), &energies, &branch_opts)?;
    let defaults = PersistenceOptions {
        scaling: forcing.scaling(0.0),
        window_exponent: n.window_exponent.map(Fraction::get),
        top: n.top.map_or(1.0, Positive::get),
        grid: n.grid.map_or(3, Count::get) as usize,
        max_revolutions: n.revolutions.map_or(4, Count::get),
        branch: branch_opts,
    };
    let runs: Vec<PerturbedBranch> = n
        .epsilons()
        .par_iter()
        .map(|&eps| {
            let opts = PersistenceOptions {
                scaling: forcing.scaling(eps),
                ..defaults
            };
            Ok(persist_perturbed(
                &branch,
                sys,
                &forcing.at(eps)?,
                &spec,
                &opts,
            )?)
        })
        .collect::<Result<_, LabError>>()?;

    let mut out = TaskOutput::default();
    let mut t = Table::new(
        "deformation",
        &[
            "epsilon",
            "window_lo",
            "window_hi",
            "energy",
            "converged",
            "deformation",
            "energy_min",
            "energy_max",
            "forcing_periods",
            "revolutions",
            "area_ratio",
            "residual",
        ],
    );
    for r in &runs {
        for p in &r.points {
            t.push(row![
                r.epsilon,
                r.window[0],
                r.window[1],
                p.energy,
                p.converged,
                p.deformation,
                p.energy_min,
                p.energy_max,
                p.forcing_periods,
                p.revolutions,
                p.area_ratio,
                p.residual
            ]);
        }
    }
    let converged = runs
        .iter()
        .all(|r| !r.points.is_empty() && r.all_converged());
    out.checks.push(Check::new(
        "converged",
        converged,
        format!(
            "points per epsilon {:?}",
            runs.iter().map(|r| r.points.len()).collect::<Vec<_>>()
        ),
    ));
    let sigma = forcing.sigma;
    if let Some(law) = deformation_exponent(&runs) {
        out.checks.push(Check::new(
            "deformation-exponent",
            law.exponent >= sigma - 0.1,
            format!(
                "fitted exponent {:.4} against sigma - 0.1 = {:.4}",
                law.exponent,
                sigma - 0.1
            ),
        ));
        let pts: Vec<(f64, f64)> = runs
            .iter()
            .map(|r| (r.epsilon.log10(), r.max_deformation().log10()))
            .collect();
        let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let (lo, hi) = xs
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| {
                (a.min(x), b.max(x))
            });
        let c = law.constant.log10();
        out.figures.push((
            PlotKind::Deformation,
            Figure::new(
                "Deformation of the persisted branch",
                "log10 epsilon",
                "log10 deformation",
            )
            .with(Series::markers("largest deformation", pts))
            .with(Series::line(
                &format!("fit, exponent {:.3}", law.exponent),
                vec![(lo, law.exponent * lo + c), (hi, law.exponent * hi + c)],
            )),
        ));
        out.note("law", law);
    }
    out.note("window_exponent", runs.first().map(|r| r.window_exponent));
    out.tables.push(t);
    Ok(out)
}

fn drift_run(
    forcing: &Forcing,
    eps: f64,
    z0: State,
    length: f64,
    windows: u32,
) -> Result<Vec<DriftReport>, LabError> {
    let sys = forcing.at(eps)?;
    let mut z = z0;
    let mut s = 0.0;
    let mut reports = Vec::with_capacity(windows as usize);
    for _ in 0..windows {
        reports.push(energy_drift(
            &sys,
            &z,
            s,
            s + length,
            forcing.scaling(eps),
            TOL,
        )?);
        z = flow_map(&sys, &z, s, s + length, TOL)?;
        s += length;
    }
    Ok(reports)
}

/// One flow-distance trial: the chart against the chart plus a random
/// potential whose first two derivatives are bounded by `size`.
fn gronwall_trial(
    base: &MechanicalSystem,
    seed: u64,
    trial: u64,
    times: Window,
    bound: f64,
    modes: usize,
    max_index: i32,
) -> Result<GronwallReport, LabError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    let delta = FourierField::random(2, modes, max_index, 1.0, &mut rng)?;
    let size = bound * rng.gen_range(0.1..=1.0);
    let scale = delta
        .derivative_majorant(1)
        .max(delta.derivative_majorant(2));
    let potential = base.potential().plus(&delta.scaled(size / scale))?;
    let perturbed = MechanicalSystem::new(*base.kinetic(), potential)?.with_drift(base.drift);
    let t = rng.gen_range(times.lo..=times.hi);
    let z0: State = [
        rng.gen_range(0.0..std::f64::consts::TAU),
        rng.gen_range(0.0..std::f64::consts::TAU),
        rng.gen_range(-0.5..0.5),
        rng.gen_range(-0.5..0.5),
    ];
    let cloud = orbit_cloud(base, &z0, t, 0.1, 8, &mut rng, TOL)?;
    Ok(gronwall_check(base, &perturbed, &cloud, t, TOL)?)
}

pub fn drift(cfg: &ExperimentConfig) -> Result<TaskOutput, LabError> {
    let n = &cfg.numeric;
    let forcing = Forcing::new(cfg, cfg.chart()?)?;
    let z0: State = n
        .initial
        .map_or([0.0, 0.0, 0.5, 0.25], |v| v.map(|c| c.get()));
    let length = n.window_length.map_or(10.0, Positive::get);
    let windows = n.windows.map_or(1, Count::get);
    let epsilons = n.epsilons();
    let runs: Vec<Vec<DriftReport>> = epsilons
        .par_iter()
        .map(|&eps| drift_run(&forcing, eps, z0, length, windows))
        .collect::<Result<_, _>>()?;

    let mut out = TaskOutput::default();
    let mut t = Table::new(
        "drift",
        &[
            "epsilon",
            "window",
            "s0",
            "s1",
            "measured",
            "constant",
            "bound",
            "reached_y",
        ],
    );
    for (eps, reports) in epsilons.iter().zip(&runs) {
        for (k, r) in reports.iter().enumerate() {
            let s0 = k as f64 * length;
            t.push(row![
                *eps,
                k,
                s0,
                s0 + length,
                r.measured,
                r.constant,
                r.bound,
                r.reached_y
            ]);
        }
    }
    let all = runs.iter().flatten().all(|r| r.passed);
    let ratio = runs
        .iter()
        .flatten()
        .map(|r| r.measured / r.bound)
        .fold(0.0, f64::max);
    out.checks.push(Check::new(
        "drift-bound",
        all,
        format!("largest measured/bound ratio {ratio:.3e}"),
    ));
    if epsilons.len() >= 2 {
        let x: Vec<f64> = epsilons.iter().map(|e| e.ln()).collect();
        let y: Vec<f64> = runs
            .iter()
            .map(|rs| rs.iter().map(|r| r.measured).fold(0.0, f64::max).ln())
            .collect();
        let slope = fit_line(&x, &y).map_or(f64::NAN, |f| f.0);
        let sigma = forcing.sigma;
        out.checks.push(Check::new(
            "drift-exponent",
            slope >= sigma - 0.03,
            format!(
                "fitted exponent {slope:.4} against sigma - 0.03 = {:.4}",
                sigma - 0.03
            ),
        ));
        out.note("drift_exponent", slope);
    }
    out.tables.push(t);

    if let Some(trials) = n.trials {
        let times = n.times.unwrap_or(Window { lo: 0.1, hi: 2.0 });
        let bound = n.perturbation_bound.map_or(1e-3, Positive::get);
        let modes = n.modes.map_or(4, Count::get) as usize;
        let max_index = n.max_index.map_or(3, IndexBound::get);
        let reports: Vec<GronwallReport> = (0..u64::from(trials.get()))
            .into_par_iter()
            .map(|k| gronwall_trial(&forcing.base, cfg.seed, k, times, bound, modes, max_index))
            .collect::<Result<_, _>>()?;
        let mut g = Table::new(
            "gronwall",
            &[
                "trial",
                "t",
                "a",
                "b",
                "bound",
                "measured",
                "value_distance",
                "jacobian_distance",
            ],
        );
        for (k, r) in reports.iter().enumerate() {
            g.push(row![
                k,
                r.t,
                r.a,
                r.b,
                r.bound,
                r.measured,
                r.value_distance,
                r.jacobian_distance
            ]);
        }
        let held = reports.iter().filter(|r| r.passed).count();
        out.checks.push(Check::new(
            "gronwall",
            held == reports.len(),
            format!("bound held in {held} of {} trials", reports.len()),
        ));
        out.tables.push(g);
    }
    Ok(out)
}
