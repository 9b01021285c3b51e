//! Tasks on a branch of minimal periodic orbits of one class.

use std::ops::RangeInclusive;

use nhic_core::cylinder::{
    alpha_channel, continue_branch, detect_bifurcations, floquet_scaling, period_law_fit,
    BifurcationOptions, BifurcationScan, BranchOptions, CylinderBranch,
};
use nhic_core::orbit_min::saddle_spectrum;
use nhic_core::system::MechanicalSystem;
use rayon::prelude::*;

use super::{fit_line, Approach};
use crate::config::{required, ExperimentConfig, Positive};
use crate::plot::{Figure, Series};
use crate::table::Table;
use crate::{row, Check, LabError, PlotKind, TaskOutput};

/// Spectral gap below which the saddle counts as degenerate.
const GAP_MIN: f64 = 1e-3;
const TANGENT_SLACK: f64 = 0.1;

fn build_branch(
    cfg: &ExperimentConfig,
    sys: &MechanicalSystem,
    certify: bool,
) -> Result<CylinderBranch, LabError> {
    let energies = required(cfg.numeric.energies, "energies")?.values();
    let opts = BranchOptions {
        certify: cfg.numeric.certify.unwrap_or(certify),
        ..BranchOptions::default()
    };
    Ok(continue_branch(sys, cfg.numeric.class(), &energies, &opts)?)
}

fn fit_window(cfg: &ExperimentConfig, branch: &CylinderBranch) -> RangeInclusive<f64> {
    match cfg.numeric.fit_window {
        Some(w) => w.lo..=w.hi,
        None => {
            let e = branch.energies();
            e[0]..=e[e.len() - 1]
        }
    }
}

fn branch_table(branch: &CylinderBranch) -> Table {
    let mut t = Table::new(
        "branch",
        &[
            "energy",
            "abs_log_energy",
            "period",
            "action",
            "leading",
            "log_leading",
            "reciprocity_defect",
            "minimal",
        ],
    );
    for p in &branch.points {
        t.push(row![
            p.energy,
            p.energy.ln().abs(),
            p.period(),
            p.orbit.action,
            p.leading,
            p.leading.ln(),
            p.reciprocity_defect,
            p.minimal
        ]);
    }
    t
}

fn line_over(xs: &[f64], slope: f64, intercept: f64) -> Vec<(f64, f64)> {
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    vec![(lo, slope * lo + intercept), (hi, slope * hi + intercept)]
}

fn period_figure(branch: &CylinderBranch, fit: Option<(f64, f64)>) -> Figure {
    let pts: Vec<(f64, f64)> = branch
        .points
        .iter()
        .map(|p| (p.energy.ln().abs(), p.period()))
        .collect();
    let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
    let mut fig = Figure::new("Period against |ln E|", "|ln E|", "period")
        .with(Series::markers("orbits", pts));
    if let Some((s, c)) = fit {
        fig = fig.with(Series::line(
            &format!("fit, slope {s:.4}"),
            line_over(&xs, s, c),
        ));
    }
    fig
}

fn multiplier_figure(branch: &CylinderBranch, window: &RangeInclusive<f64>) -> Figure {
    let pts: Vec<(f64, f64)> = branch
        .points
        .iter()
        .map(|p| (p.energy.ln().abs(), p.leading.ln()))
        .collect();
    let inside: Vec<(f64, f64)> = branch
        .points
        .iter()
        .filter(|p| window.contains(&p.energy))
        .map(|p| (p.energy.ln().abs(), p.leading.ln()))
        .collect();
    let xs: Vec<f64> = inside.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = inside.iter().map(|p| p.1).collect();
    let mut fig = Figure::new("Leading Floquet multiplier", "|ln E|", "ln multiplier")
        .with(Series::markers("orbits", pts));
    if let Some((s, c)) = fit_line(&xs, &ys) {
        fig = fig.with(Series::line(
            &format!("fit, slope {s:.4}"),
            line_over(&xs, s, c),
        ));
    }
    fig
}

pub fn cylinder(cfg: &ExperimentConfig) -> Result<TaskOutput, LabError> {
    let sys = cfg.chart()?.system()?;
    let branch = build_branch(cfg, &sys, true)?;
    let channel = alpha_channel(&branch);
    let mut out = TaskOutput::default();

    let refuted = branch
        .points
        .iter()
        .filter(|p| p.minimal == Some(false))
        .count();
    out.checks.push(Check::new(
        "minimal",
        refuted == 0,
        format!(
            "{refuted} of {} orbits beaten by a fresh minimization",
            branch.points.len()
        ),
    ));
    out.checks.push(Check::new(
        "alpha-increasing",
        channel.alpha_increasing,
        "alpha grows along the channel",
    ));
    out.checks.push(Check::new(
        "alpha-convex",
        channel.min_convexity > -1e-8,
        format!("smallest second difference {:e}", channel.min_convexity),
    ));
    out.checks.push(Check::new(
        "duality",
        channel.max_duality_defect < 1e-6,
        format!("largest Fenchel defect {:e}", channel.max_duality_defect),
    ));

    let mut ct = Table::new(
        "channel",
        &[
            "energy",
            "period",
            "frequency",
            "coordinate",
            "alpha",
            "beta",
            "duality_defect",
        ],
    );
    for p in &channel.points {
        ct.push(row![
            p.energy,
            p.period,
            p.frequency,
            p.coordinate,
            p.alpha,
            p.beta,
            p.duality_defect
        ]);
    }
    let alpha_pts: Vec<(f64, f64)> = channel
        .points
        .iter()
        .map(|p| (p.coordinate, p.alpha))
        .collect();
    out.figures.push((
        PlotKind::Alpha,
        Figure::new("Alpha along the channel", "c1", "alpha")
            .with(Series::line("alpha", alpha_pts.clone()))
            .with(Series::markers("orbits", alpha_pts)),
    ));

    let window = fit_window(cfg, &branch);
    let approach = saddle_spectrum(&sys, GAP_MIN)
        .ok()
        .map(|s| Approach::of(&s, branch.class));
    let law = approach.and_then(|a| period_law_fit(&branch, a.entry, 1, window.clone(), 0.05).ok());
    out.figures.push((
        PlotKind::Period,
        period_figure(&branch, law.map(|l| (l.slope, l.intercept))),
    ));
    out.figures
        .push((PlotKind::Multiplier, multiplier_figure(&branch, &window)));
    out.note("level", branch.level);
    out.note("period_law", law);
    out.tables.push(branch_table(&branch));
    out.tables.push(ct);
    Ok(out)
}

pub fn period_law(cfg: &ExperimentConfig) -> Result<TaskOutput, LabError> {
    let sys = cfg.chart()?.system()?;
    let spec = saddle_spectrum(&sys, GAP_MIN)?;
    let branch = build_branch(cfg, &sys, false)?;
    let approach = Approach::of(&spec, branch.class);
    let window = fit_window(cfg, &branch);
    let law = period_law_fit(
        &branch,
        approach.entry,
        1,
        window.clone(),
        cfg.numeric.tolerance(0.02),
    )?;

    let mut out = TaskOutput::default();
    out.checks.push(Check::new(
        "period-law",
        law.pass,
        format!(
            "slope {:.6} against {:.6} (relative error {:.3e}), intercept spread {:.3e}",
            law.slope, law.predicted, law.relative_error, law.intercept_spread
        ),
    ));
    let mut t = Table::new(
        "period",
        &["energy", "abs_log_energy", "period", "fitted", "in_window"],
    );
    for p in &branch.points {
        let x = p.energy.ln().abs();
        t.push(row![
            p.energy,
            x,
            p.period(),
            law.slope * x + law.intercept,
            window.contains(&p.energy)
        ]);
    }
    out.figures.push((
        PlotKind::Period,
        period_figure(&branch, Some((law.slope, law.intercept))),
    ));
    out.note("law", law);
    out.note("approach_eigenvalue", approach.entry);
    out.tables.push(t);
    Ok(out)
}

pub fn floquet(cfg: &ExperimentConfig) -> Result<TaskOutput, LabError> {
    let sys = cfg.chart()?.system()?;
    let spec = saddle_spectrum(&sys, GAP_MIN)?;
    let branch = build_branch(cfg, &sys, false)?;
    let approach = Approach::of(&spec, branch.class);
    let predicted = cfg
        .numeric
        .predicted
        .map_or(approach.ratio(), Positive::get);
    let window = fit_window(cfg, &branch);
    let fl = floquet_scaling(
        &branch,
        predicted,
        window.clone(),
        cfg.numeric.tolerance(0.1),
        TANGENT_SLACK,
    )?;

    let mut out = TaskOutput::default();
    out.checks.push(Check::new(
        "floquet-ratio",
        fl.pass,
        format!(
            "ratio {:.6} against {:.6} (relative error {:.3e}), tangent growth {:.3} <= {:.3}",
            fl.ratio, fl.predicted, fl.relative_error, fl.tangent_growth, fl.tangent_bound
        ),
    ));
    let mut t = Table::new(
        "multipliers",
        &[
            "energy",
            "abs_log_energy",
            "log_leading",
            "reciprocity_defect",
            "in_window",
        ],
    );
    for p in &branch.points {
        t.push(row![
            p.energy,
            p.energy.ln().abs(),
            p.leading.ln(),
            p.reciprocity_defect,
            window.contains(&p.energy)
        ]);
    }
    out.figures
        .push((PlotKind::Multiplier, multiplier_figure(&branch, &window)));
    out.note("scaling", fl);
    out.note("saddle", [spec.slow, spec.fast]);
    out.tables.push(t);
    Ok(out)
}

pub fn bifurcations(cfg: &ExperimentConfig) -> Result<TaskOutput, LabError> {
    let sys = cfg.chart()?.system()?;
    let energies = required(cfg.numeric.energies, "energies")?.values();
    let seeds = cfg.numeric.seeds.clone().unwrap_or_default();
    let class = cfg.numeric.class();
    let scans: Vec<BifurcationScan> = seeds
        .par_iter()
        .map(|&seed| {
            let opts = BifurcationOptions {
                seed,
                ..BifurcationOptions::default()
            };
            detect_bifurcations(&sys, class, &energies, &opts)
        })
        .collect::<Result<_, _>>()?;

    let mut out = TaskOutput::default();
    let mut t = Table::new(
        "crossings",
        &[
            "seed",
            "families",
            "energy",
            "action_gap",
            "slope_gap",
            "nondegenerate",
        ],
    );
    for (seed, scan) in seeds.iter().zip(&scans) {
        for c in &scan.crossings {
            t.push(row![
                *seed,
                scan.families.len(),
                c.energy,
                c.action_gap,
                c.slope_gap,
                c.nondegenerate()
            ]);
        }
    }
    let found = scans
        .iter()
        .all(|s| !s.crossings.is_empty() && s.degenerate.is_none());
    out.checks.push(Check::new(
        "crossings-found",
        found,
        format!(
            "crossing counts per seed {:?}",
            scans.iter().map(|s| s.crossings.len()).collect::<Vec<_>>()
        ),
    ));
    let firsts: Vec<f64> = scans
        .iter()
        .filter_map(|s| s.crossings.first().map(|c| c.energy))
        .collect();
    let spread = firsts.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        - firsts.iter().copied().fold(f64::INFINITY, f64::min);
    let same_count = scans
        .windows(2)
        .all(|w| w[0].crossings.len() == w[1].crossings.len());
    out.checks.push(Check::new(
        "reproducible",
        found && same_count && spread <= 1e-6,
        format!(
            "first crossing energy spread {spread:e} across {} seeds",
            seeds.len()
        ),
    ));
    let crossings = || scans.iter().flat_map(|s| s.crossings.iter());
    let action_gap = crossings().map(|c| c.action_gap).fold(0.0, f64::max);
    out.checks.push(Check::new(
        "equal-actions",
        found && action_gap <= 1e-7,
        format!("largest action gap {action_gap:e}"),
    ));
    let slope_gap = crossings()
        .map(|c| c.slope_gap.abs())
        .fold(f64::INFINITY, f64::min);
    out.checks.push(Check::new(
        "slope-gap",
        found && crossings().all(|c| c.nondegenerate()),
        format!("smallest slope gap {slope_gap:e}"),
    ));
    if let Some(d) = scans.iter().find_map(|s| s.degenerate.as_ref()) {
        out.note("degenerate", d);
    }
    out.note("crossing_energies", firsts);
    out.tables.push(t);
    Ok(out)
}
