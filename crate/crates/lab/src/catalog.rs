//! Task and plot names, with the catalog printed by `tasks`.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TaskKind {
    Bifurcations,
    Classify,
    Cylinder,
    Drift,
    Floquet,
    HighEnergy,
    NormalForm,
    Orbit,
    PeriodLaw,
    Persist,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlotKind {
    /// Period against `|ln E|`, with the fitted line.
    Period,
    /// Log of the leading Floquet multiplier against `|ln E|`.
    Multiplier,
    /// Alpha function along the channel coordinate.
    Alpha,
    /// Curvature of the action minimum against the chart drift.
    Splitting,
    /// Deformation of the persisted branch against epsilon.
    Deformation,
}

impl PlotKind {
    pub fn file_stem(self) -> &'static str {
        match self {
            Self::Period => "period",
            Self::Multiplier => "multiplier",
            Self::Alpha => "alpha",
            Self::Splitting => "splitting",
            Self::Deformation => "deformation",
        }
    }
}

impl fmt::Display for PlotKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.file_stem())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CatalogEntry {
    pub task: TaskKind,
    pub description: &'static str,
    pub required: &'static [&'static str],
    pub plots: &'static [PlotKind],
}

impl TaskKind {
    pub const ALL: [TaskKind; 10] = [
        Self::Bifurcations,
        Self::Classify,
        Self::Cylinder,
        Self::Drift,
        Self::Floquet,
        Self::HighEnergy,
        Self::NormalForm,
        Self::Orbit,
        Self::PeriodLaw,
        Self::Persist,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Bifurcations => "bifurcations",
            Self::Classify => "classify",
            Self::Cylinder => "cylinder",
            Self::Drift => "drift",
            Self::Floquet => "floquet",
            Self::HighEnergy => "high-energy",
            Self::NormalForm => "normal-form",
            Self::Orbit => "orbit",
            Self::PeriodLaw => "period-law",
            Self::Persist => "persist",
        }
    }

    pub fn entry(self) -> CatalogEntry {
        use PlotKind::*;
        let (description, required, plots): (_, &[&str], &[PlotKind]) = match self {
            Self::Bifurcations => (
                "Energies where two minimal orbit families exchange minimality, repeated over seeds",
                &["system.chart", "numeric.energies", "numeric.seeds"],
                &[],
            ),
            Self::Classify => (
                "Double resonances along a single-resonance path, classified strong or weak",
                &["system.model", "numeric.kprime", "numeric.energy", "numeric.kmax"],
                &[],
            ),
            Self::Cylinder => (
                "Branch of minimal periodic orbits with Floquet data and the alpha function",
                &["system.chart", "numeric.energies"],
                &[Period, Multiplier, Alpha],
            ),
            Self::Drift => (
                "Energy drift under fast forcing, plus optional flow-distance trials",
                &["system.chart", "system.chart.forcing", "numeric.epsilons"],
                &[],
            ),
            Self::Floquet => (
                "Scaling of the leading Floquet multiplier near the saddle",
                &["system.chart", "numeric.energies"],
                &[Multiplier],
            ),
            Self::HighEnergy => (
                "Action splitting of rescaled charts over a grid of drifts and energies",
                &["system.chart", "numeric.omegas", "numeric.energies"],
                &[Splitting],
            ),
            Self::NormalForm => (
                "Homological equation residuals and unimodular lattice completions",
                &["numeric.trials"],
                &[],
            ),
            Self::Orbit => (
                "Minimal periodic orbit of a fixed period, sampled as a trajectory",
                &["system.chart", "numeric.period"],
                &[],
            ),
            Self::PeriodLaw => (
                "Logarithmic growth of the period as the energy approaches the saddle",
                &["system.chart", "numeric.energies"],
                &[Period],
            ),
            Self::Persist => (
                "Continuation of the branch under fast forcing and its deformation law",
                &["system.chart", "system.chart.forcing", "numeric.epsilons", "numeric.energies"],
                &[Deformation],
            ),
        };
        CatalogEntry {
            task: self,
            description,
            required,
            plots,
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Catalog in alphabetical order.
pub fn list_tasks() -> Vec<CatalogEntry> {
    let mut v: Vec<CatalogEntry> = TaskKind::ALL.iter().map(|t| t.entry()).collect();
    v.sort_by_key(|e| e.task.name());
    v
}

/// One line per task: name, description and required keys.
pub fn render_catalog(entries: &[CatalogEntry]) -> String {
    let width = entries
        .iter()
        .map(|e| e.task.name().len())
        .max()
        .unwrap_or(0);
    let mut out = String::new();
    for e in entries {
        out.push_str(&format!(
            "{:width$}  {} [requires: {}]\n",
            e.task.name(),
            e.description,
            e.required.join(", ")
        ));
    }
    out
}
