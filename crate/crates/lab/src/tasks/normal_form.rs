use nhic_core::fourier::FourierField;
use nhic_core::normal_form::{content, cross, is_irreducible, Lattice, ResonanceFrame};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{required, Count, ExperimentConfig, IndexBound, Positive};
use crate::table::Table;
use crate::{row, Check, LabError, TaskOutput};

const RESIDUAL_TOL: f64 = 1e-14;
/// Random frequencies keep every divisor of the drawn modes above this.
const MIN_DIVISOR: f64 = 1e-3;
const LATTICE_BOUND: i32 = 9;

fn random_frequency(p: &FourierField, rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let w = [
            rng.gen_range(-1.0..1.0),
            rng.gen_range(-1.0..1.0),
            rng.gen_range(0.5..1.5),
        ];
        if smallest_divisor(p, w) > MIN_DIVISOR {
            return w;
        }
    }
}

fn smallest_divisor(p: &FourierField, w: [f64; 3]) -> f64 {
    p.modes()
        .filter(|(l, _)| l[2] != 0)
        .map(|(l, _)| (0..3).map(|j| l[j] as f64 * w[j]).sum::<f64>().abs())
        .fold(f64::INFINITY, f64::min)
}

fn max_coefficient(f: &FourierField) -> f64 {
    f.modes().map(|(_, c)| c.norm()).fold(0.0, f64::max)
}

pub fn run(cfg: &ExperimentConfig) -> Result<TaskOutput, LabError> {
    let n = &cfg.numeric;
    let mut out = TaskOutput::default();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let trials = required(n.trials, "trials")?.get();
    let modes = n.modes.map_or(10, Count::get) as usize;
    let max_index = n.max_index.map_or(3, IndexBound::get);
    let amplitude = n.amplitude.map_or(1.0, Positive::get);
    let fixed = n.frequency.map(|w| w.map(|v| v.get()));

    let mut residuals = Table::new(
        "homological",
        &[
            "trial",
            "modes",
            "omega1",
            "omega2",
            "omega3",
            "smallest_divisor",
            "residual",
        ],
    );
    let mut worst: f64 = 0.0;
    for t in 0..trials {
        let p = FourierField::random(3, modes, max_index, amplitude, &mut rng)?;
        let w = fixed.unwrap_or_else(|| random_frequency(&p, &mut rng));
        let f = p.solve_homological(w)?;
        let r = max_coefficient(&FourierField::homological_residual(&p, &f, w)?);
        worst = worst.max(r);
        residuals.push(row![
            t,
            p.mode_count(),
            w[0],
            w[1],
            w[2],
            smallest_divisor(&p, w),
            r
        ]);
    }
    out.checks.push(Check::new(
        "homological-residual",
        worst <= RESIDUAL_TOL,
        format!("largest residual coefficient {worst:e} over {trials} trials"),
    ));
    out.note("max_residual", worst);
    out.tables.push(residuals);

    if let Some(count) = n.completions {
        let bound = n.kmax.map_or(LATTICE_BOUND, IndexBound::get);
        let mut table = Table::new(
            "completion",
            &[
                "kp1", "kp2", "kp3", "kpp1", "kpp2", "kpp3", "k3_1", "k3_2", "k3_3", "det",
            ],
        );
        let mut skipped = 0usize;
        let mut all_unimodular = true;
        while table.len() < count.get() as usize {
            let mut draw = || -> Lattice { [0; 3].map(|_| rng.gen_range(-bound..=bound)) };
            let (kp, kpp) = (draw(), draw());
            let wide = |k: Lattice| k.map(i64::from);
            let normal = cross(wide(kpp), wide(kp));
            // pairs spanning a sublattice of index > 1 have no completion
            if !is_irreducible(kp)
                || !is_irreducible(kpp)
                || normal == [0; 3]
                || content(&normal) != 1
            {
                skipped += 1;
                continue;
            }
            let frame = ResonanceFrame::complete(kp, kpp)?;
            let det = frame.determinant();
            all_unimodular &= det == 1;
            let k3 = frame.k3;
            table.push(row![
                kp[0], kp[1], kp[2], kpp[0], kpp[1], kpp[2], k3[0], k3[1], k3[2], det
            ]);
        }
        out.checks.push(Check::new(
            "unimodular",
            all_unimodular,
            format!("{} completions, {skipped} draws skipped", table.len()),
        ));
        out.note("completion_skipped", skipped);
        out.tables.push(table);
    }

    if let (Some(model), Some(w)) = (&cfg.system.model, fixed) {
        let p = model.perturbation_field()?;
        let f = p.solve_homological(w)?;
        let mut table = Table::new("generating", &["l1", "l2", "l3", "re", "im"]);
        for (l, c) in f.modes() {
            table.push(row![l[0], l[1], l[2], c.re, c.im]);
        }
        let r = max_coefficient(&FourierField::homological_residual(&p, &f, w)?);
        out.checks.push(Check::new(
            "model-residual",
            r <= RESIDUAL_TOL * max_coefficient(&p).max(1.0),
            format!("residual {r:e} for the configured perturbation"),
        ));
        out.tables.push(table);
    }
    Ok(out)
}
