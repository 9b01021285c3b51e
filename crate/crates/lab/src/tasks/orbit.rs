use nhic_core::orbit_min::{minimal_orbit, saddle_spectrum, LoopOptions};
use nhic_core::periodic::ShootingOptions;

use crate::config::{required, ExperimentConfig};
use crate::table::Table;
use crate::{row, Check, LabError, TaskOutput};

const SAMPLES_PER_SEGMENT: usize = 16;
const TOL: f64 = 1e-12;

pub fn run(cfg: &ExperimentConfig) -> Result<TaskOutput, LabError> {
    let sys = cfg.chart()?.system()?;
    let period = required(cfg.numeric.period, "period")?.get();
    let class = cfg.numeric.class();
    let min = minimal_orbit(
        &sys,
        class,
        period,
        8,
        &LoopOptions::default(),
        &ShootingOptions::default(),
    )?;
    let orbit = &min.orbit;

    let mut traj = Table::new("trajectory", &["t", "x1", "x2", "y1", "y2", "energy"]);
    for (t, z) in orbit.sample(&sys, SAMPLES_PER_SEGMENT, TOL)? {
        traj.push(row![t, z[0], z[1], z[2], z[3], sys.hamiltonian(t, &z)]);
    }
    let spread = orbit.energy_spread(&sys, TOL)?;

    let mut out = TaskOutput::default();
    out.checks.push(Check::new(
        "closed",
        orbit.residual <= 1e-9,
        format!("shooting residual {:e}", orbit.residual),
    ));
    out.checks.push(Check::new(
        "energy-conserved",
        spread <= 1e-8,
        format!("energy spread {spread:e}"),
    ));
    out.note("class", class);
    out.note("period", orbit.period);
    out.note("energy", orbit.energy);
    out.note("action", orbit.action);
    out.note("discrete_action", min.discrete.action);
    if let Ok(spec) = saddle_spectrum(&sys, 1e-3) {
        out.note("saddle", spec.eigenvalues());
    }
    out.tables.push(traj);
    Ok(out)
}
