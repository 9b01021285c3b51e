use nhic_core::normal_form::Lattice;
use nhic_core::resonance::{
    candidates, enumerate_double_resonances, Classifier, ResonanceReport, ResonantPath,
    SingleResonance, Verdict,
};

use crate::config::{required, ExperimentConfig, IndexBound, Order};
use crate::table::Table;
use crate::{row, Check, LabError, TaskOutput};

/// Points closer than this are the same double resonance.
const SAME_POINT: f64 = 1e-9;

type StrongSet = Vec<(Lattice, [f64; 3])>;

fn same_set(a: &StrongSet, b: &StrongSet) -> bool {
    a.len() == b.len()
        && a.iter().all(|(k, p)| {
            b.iter()
                .any(|(l, q)| k == l && (0..3).all(|i| (p[i] - q[i]).abs() <= SAME_POINT))
        })
}

fn sup_norm(k: Lattice) -> i32 {
    k.iter().map(|v| v.abs()).max().unwrap_or(0)
}

pub fn run(cfg: &ExperimentConfig) -> Result<TaskOutput, LabError> {
    let model = cfg.model()?;
    let n = &cfg.numeric;
    let kprime = required(n.kprime, "kprime")?;
    let energy = required(n.energy, "energy")?.get();
    let kmax = required(n.kmax, "kmax")?.get();
    let kmin = n.kmin.map_or(kmax, IndexBound::get);
    let classifier = Classifier {
        order: n.order.map_or(6, Order::get),
        ..Classifier::default()
    };
    let field = model.perturbation_field()?;
    let p_norm = field.cr_norm_bound(classifier.order);
    let single = SingleResonance::new(&model.perturbation()?, kprime)?;
    let path = ResonantPath::new(model.hamiltonian()?, kprime, energy)?;

    let mut sweep = Table::new("sweep", &["kmax", "points", "strong", "unsolved"]);
    let mut sets: Vec<StrongSet> = Vec::new();
    let mut last: Vec<ResonanceReport> = Vec::new();
    for k in kmin..=kmax {
        let mut en = enumerate_double_resonances(&path, k)?;
        for r in &mut en.points {
            let lambda = single.nondegeneracy(r.momentum);
            classifier.classify(kprime, r, p_norm, lambda)?;
        }
        let strong: StrongSet = en
            .points
            .iter()
            .filter(|r| r.verdict == Some(Verdict::Strong))
            .map(|r| (r.kdoubleprime, r.momentum))
            .collect();
        sweep.push(row![k, en.points.len(), strong.len(), en.unsolved.len()]);
        sets.push(strong);
        last = en.points;
    }

    let mut out = TaskOutput::default();
    // Every k'' outside the box is weak once the threshold radius fits inside.
    let mut radius: f64 = 0.0;
    for r in &last {
        let t = classifier.threshold(kprime, p_norm, r.lambda.unwrap_or(f64::NAN))?;
        radius = radius.max(t.powf(1.0 / f64::from(classifier.order - 2)));
    }
    let strong = sets.last().cloned().unwrap_or_default();
    out.checks.push(Check::new(
        "strong-finite",
        radius <= kmax as f64,
        format!(
            "{} strong points; every |k''| >= {radius:.3} is weak and the box reaches {kmax}",
            strong.len()
        ),
    ));
    let stable = sets.windows(2).all(|w| same_set(&w[0], &w[1]));
    out.checks.push(Check::new(
        "strong-stable",
        stable,
        format!("strong set compared over kmax {kmin}..={kmax}"),
    ));

    // Exhaustive monotonicity: at each point's lambda, walking the candidate
    // set by increasing norm never goes from weak back to strong.
    let mut pool = candidates(kprime, kmax);
    pool.sort_by_key(|k| sup_norm(*k));
    let mut monotone = true;
    let mut compared = 0usize;
    for r in &last {
        let lambda = r.lambda.unwrap_or(f64::NAN);
        let mut seen_weak = false;
        for k in &pool {
            let v = classifier.verdict(kprime, f64::from(sup_norm(*k)), p_norm, lambda)?;
            seen_weak |= v == Verdict::Weak;
            monotone &= !(seen_weak && v == Verdict::Strong);
            compared += 1;
        }
    }
    out.checks.push(Check::new(
        "monotone",
        monotone,
        format!("{compared} verdicts over {} candidates", pool.len()),
    ));

    let mut t = Table::new(
        "classification",
        &[
            "kpp1", "kpp2", "kpp3", "p1", "p2", "p3", "theta", "lambda", "margin", "verdict",
            "period",
        ],
    );
    for r in &last {
        let k = r.kdoubleprime;
        let p = r.momentum;
        let verdict = match r.verdict {
            Some(Verdict::Strong) => "strong",
            Some(Verdict::Weak) => "weak",
            None => "",
        };
        t.push(row![
            k[0], k[1], k[2], p[0], p[1], p[2], r.theta, r.lambda, r.margin, verdict, r.period
        ]);
    }
    out.note("perturbation_norm", p_norm);
    out.note("order", classifier.order);
    out.note("threshold_radius", radius);
    out.note("strong", strong.iter().map(|s| s.0).collect::<Vec<_>>());
    out.tables.push(t);
    out.tables.push(sweep);
    Ok(out)
}
