use nhic_core::high_energy::{
    analyze_point, limit_checks, uniform_splitting, LoopOptions, PointReport, RescaledChart,
};
use rayon::prelude::*;

use crate::config::{required, Drift, ExperimentConfig, Positive};
use crate::plot::{Figure, Series};
use crate::table::Table;
use crate::{row, Check, LabError, PlotKind, TaskOutput};

pub fn run(cfg: &ExperimentConfig) -> Result<TaskOutput, LabError> {
    let chart = cfg.chart()?;
    let n = &cfg.numeric;
    let omegas: Vec<f64> = n
        .omegas
        .iter()
        .flatten()
        .map(|w| f64::from(Drift::get(*w)))
        .collect();
    let energies = required(n.energies, "energies")?.values();
    let mu_min = n.mu_min.map_or(1e-2, Positive::get);
    let potential = chart.potential_field()?;
    let grid: Vec<(f64, f64)> = omegas
        .iter()
        .flat_map(|&w| energies.iter().map(move |&e| (w, e)))
        .collect();
    let opts = LoopOptions::default();
    let points: Vec<PointReport> = grid
        .par_iter()
        .map(|&(w, e)| {
            let c = RescaledChart::new(w, chart.kinetic.0, potential.clone())?;
            Ok(analyze_point(&c, e, &opts)?)
        })
        .collect::<Result<_, LabError>>()?;

    let mut t = Table::new(
        "splitting",
        &[
            "omega",
            "energy",
            "x2_min",
            "f",
            "f0",
            "fr_c2",
            "oscillatory",
            "mu",
            "sup_deviation",
            "sup_velocity",
            "multiplier",
            "period",
            "tangent_growth",
        ],
    );
    for p in &points {
        t.push(row![
            p.omega,
            p.energy,
            p.x2_min,
            p.split.f[0],
            p.split.f0[0],
            p.fr_c2(),
            p.split.oscillatory,
            p.mu(),
            p.sup_deviation,
            p.sup_velocity,
            p.multipliers[0],
            p.period,
            p.tangent_growth
        ]);
    }

    let splitting = uniform_splitting(&points, mu_min)?;
    let mut out = TaskOutput::default();
    out.checks.push(Check::new(
        "mu-positive",
        splitting.passed,
        format!(
            "smallest curvature {:.6} against floor {mu_min:e}",
            splitting.mu_hat
        ),
    ));
    out.checks.push(Check::new(
        "mu-stable",
        splitting.mu_spread <= 0.2,
        format!(
            "relative spread of the curvature over drifts {:.4}",
            splitting.mu_spread
        ),
    ));
    let mut bounded = true;
    let mut decreasing = true;
    let mut growth: f64 = 0.0;
    let mut limits = Vec::new();
    for &e in &energies {
        let at: Vec<PointReport> = points.iter().filter(|p| p.energy == e).cloned().collect();
        let l = limit_checks(&at)?;
        bounded &= l.bounded;
        decreasing &= l.deviation_decreasing;
        growth = growth.max(l.c2_growth);
        limits.push((e, l));
    }
    out.checks.push(Check::new(
        "remainder-bounded",
        bounded,
        format!("largest C2 growth of the remainder action {growth:.4}"),
    ));
    out.checks.push(Check::new(
        "deviation-decreasing",
        decreasing,
        "sup distance of the critical loop to the averaged minimizer",
    ));

    let mu_pts: Vec<(f64, f64)> = splitting
        .mu_by_omega
        .iter()
        .map(|&(w, m)| (w.log10(), m))
        .collect();
    out.figures.push((
        PlotKind::Splitting,
        Figure::new(
            "Curvature of the action minimum",
            "log10 drift",
            "curvature",
        )
        .with(Series::line("min over energies", mu_pts.clone()))
        .with(Series::markers("grid drifts", mu_pts)),
    ));
    out.note("splitting", &splitting);
    out.note("limits", &limits);
    out.tables.push(t);
    Ok(out)
}
