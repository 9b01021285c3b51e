//! Task implementations. Each returns checks, tables and figures; writing
//! them out is left to the caller.

mod branch;
mod classify;
mod forcing;
mod high_energy;
mod normal_form;
mod orbit;

use nhic_core::orbit_min::SaddleSpectrum;

use crate::config::ExperimentConfig;
use crate::{LabError, TaskKind, TaskOutput};

pub fn execute(cfg: &ExperimentConfig) -> Result<TaskOutput, LabError> {
    match cfg.task {
        TaskKind::Bifurcations => branch::bifurcations(cfg),
        TaskKind::Classify => classify::run(cfg),
        TaskKind::Cylinder => branch::cylinder(cfg),
        TaskKind::Drift => forcing::drift(cfg),
        TaskKind::Floquet => branch::floquet(cfg),
        TaskKind::HighEnergy => high_energy::run(cfg),
        TaskKind::NormalForm => normal_form::run(cfg),
        TaskKind::Orbit => orbit::run(cfg),
        TaskKind::PeriodLaw => branch::period_law(cfg),
        TaskKind::Persist => forcing::persist(cfg),
    }
}

/// Least-squares line `y = slope x + intercept`.
pub(crate) fn fit_line(x: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

/// Eigenvalues of the saddle along which orbits of `class` enter it and
/// across which they are stretched.
///
/// A homoclinic generically arrives along the slow stable direction. When
/// the fast eigenvector lies on the class line itself, that line can be an
/// invariant channel (as for separable potentials) and orbits arrive along
/// the fast direction instead.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Approach {
    pub entry: f64,
    pub transverse: f64,
}

impl Approach {
    pub fn of(spec: &SaddleSpectrum, class: [i32; 2]) -> Self {
        let p = spec.fast_position();
        let g = [class[0] as f64, class[1] as f64];
        let sine = (p[0] * g[1] - p[1] * g[0]).abs() / (p[0].hypot(p[1]) * g[0].hypot(g[1]));
        if sine < 1e-9 {
            Self {
                entry: spec.fast,
                transverse: spec.slow,
            }
        } else {
            Self {
                entry: spec.slow,
                transverse: spec.fast,
            }
        }
    }

    pub fn ratio(&self) -> f64 {
        self.transverse / self.entry
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_fit_recovers_exact_line() {
        let x = [1.0, 2.0, 4.0];
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v - 1.0).collect();
        let (s, c) = fit_line(&x, &y).unwrap();
        assert!((s - 3.0).abs() < 1e-14 && (c + 1.0).abs() < 1e-14);
        assert!(fit_line(&[1.0, 1.0], &[0.0, 1.0]).is_none());
    }
}
