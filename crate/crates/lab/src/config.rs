//! Experiment configuration.
//!
//! Configs are TOML. Every numeric field is a range-checked newtype, so an
//! out-of-range value fails during parsing and the error carries the line
//! and column of the offending value.

use std::fmt;
use std::path::Path;

use nhic_core::fourier::FourierField;
use nhic_core::normal_form::{AffinePerturbation, MomentumHamiltonian};
use nhic_core::system::{KineticMatrix, MechanicalSystem};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize};

use crate::catalog::{PlotKind, TaskKind};
use crate::LabError;

macro_rules! bounded_real {
    ($(#[$m:meta])* $name:ident, $what:literal, $range:literal, |$v:ident| $ok:expr) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
        #[serde(transparent)]
        pub struct $name(f64);

        impl $name {
            pub const RANGE: &'static str = $range;

            pub fn new($v: f64) -> Option<Self> {
                ($v.is_finite() && $ok).then_some(Self($v))
            }

            pub fn get(self) -> f64 {
                self.0
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let v = f64::deserialize(d)?;
                Self::new(v).ok_or_else(|| D::Error::custom(OutOfRange::new($what, v, $range)))
            }
        }
    };
}

macro_rules! bounded_count {
    ($(#[$m:meta])* $name:ident, $ty:ty, $lo:expr, $hi:expr) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
        #[serde(transparent)]
        pub struct $name($ty);

        impl $name {
            pub const MIN: $ty = $lo;
            pub const MAX: $ty = $hi;

            pub fn new(v: $ty) -> Option<Self> {
                (Self::MIN..=Self::MAX).contains(&v).then_some(Self(v))
            }

            pub fn get(self) -> $ty {
                self.0
            }
        }

        impl<'de> Deserialize<'de> for $name {
            fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
                let v = i64::deserialize(d)?;
                <$ty>::try_from(v)
                    .ok()
                    .and_then(Self::new)
                    .ok_or_else(|| {
                        D::Error::custom(OutOfRange::new("value", v as f64, &format!("[{}, {}]", Self::MIN, Self::MAX)))
                    })
            }
        }
    };
}

/// Message body for a value outside its documented range; the parser adds
/// the line and column.
struct OutOfRange {
    what: &'static str,
    value: f64,
    range: String,
}

impl OutOfRange {
    fn new(what: &'static str, value: f64, range: &str) -> Self {
        Self {
            what,
            value,
            range: range.to_owned(),
        }
    }
}

impl fmt::Display for OutOfRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} = {} is outside the valid range {}",
            self.what, self.value, self.range
        )
    }
}

bounded_real!(
    /// Perturbation size, in `(0, 1)`.
    Epsilon, "epsilon", "(0, 1)", |v| v > 0.0 && v < 1.0
);
bounded_real!(
    /// Remainder exponent, in `(0, 1/2)`.
    Sigma, "sigma", "(0, 1/2)", |v| v > 0.0 && v < 0.5
);
bounded_real!(
    /// Exponent or relative tolerance, in `(0, 1)`.
    Fraction, "value", "(0, 1)", |v| v > 0.0 && v < 1.0
);
bounded_real!(
    /// Strictly positive finite number.
    Positive, "value", "(0, inf)", |v| v > 0.0
);
bounded_real!(
    /// Any finite number.
    Real, "value", "(-inf, inf)", |v| true
);

bounded_count!(
    /// Repetition or sample count.
    Count, u32, 1, 100_000
);
bounded_count!(
    /// Bound on Fourier or lattice indices.
    IndexBound, i32, 1, 64
);
bounded_count!(
    /// Integer drift of a high-energy chart.
    Drift, u32, 1, 1_000_000
);
bounded_count!(
    /// Regularity order of the perturbation norm.
    Order, u32, 4, 16
);

const SIGMA_DEFAULT: f64 = 1.0 / 7.0;

/// Grid spacing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Spacing {
    #[default]
    Log,
    Linear,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    min: Positive,
    max: Positive,
    count: Count,
    #[serde(default)]
    spacing: Spacing,
}

/// Increasing grid of positive values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGrid")]
pub struct Grid {
    pub min: f64,
    pub max: f64,
    pub count: u32,
    pub spacing: Spacing,
}

impl TryFrom<RawGrid> for Grid {
    type Error = String;

    fn try_from(r: RawGrid) -> Result<Self, String> {
        let (min, max, count) = (r.min.get(), r.max.get(), r.count.get());
        if count == 1 && min != max {
            return Err(format!(
                "a single-point grid needs min = max, got [{min}, {max}]"
            ));
        }
        if count > 1 && min >= max {
            return Err(format!("grid needs min < max, got [{min}, {max}]"));
        }
        Ok(Self {
            min,
            max,
            count,
            spacing: r.spacing,
        })
    }
}

impl Grid {
    pub fn values(&self) -> Vec<f64> {
        let n = self.count as usize;
        if n == 1 {
            return vec![self.min];
        }
        let last = (n - 1) as f64;
        let mut v: Vec<f64> = (0..n)
            .map(|k| {
                let s = k as f64 / last;
                match self.spacing {
                    Spacing::Log => (self.min.ln() + (self.max.ln() - self.min.ln()) * s).exp(),
                    Spacing::Linear => self.min + (self.max - self.min) * s,
                }
            })
            .collect();
        // pin the ends so windows given as the grid bounds include them
        v[0] = self.min;
        v[n - 1] = self.max;
        v
    }
}

/// Closed interval `[lo, hi]` with `0 <= lo < hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct Window {
    pub lo: f64,
    pub hi: f64,
}

impl TryFrom<[f64; 2]> for Window {
    type Error = String;

    fn try_from([lo, hi]: [f64; 2]) -> Result<Self, String> {
        if lo.is_finite() && hi.is_finite() && lo >= 0.0 && lo < hi {
            Ok(Self { lo, hi })
        } else {
            Err(format!("window [{lo}, {hi}] must satisfy 0 <= lo < hi"))
        }
    }
}

impl From<Window> for [f64; 2] {
    fn from(w: Window) -> Self {
        [w.lo, w.hi]
    }
}

/// Nonzero homology class of a loop on the 2-torus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "[i32; 2]", into = "[i32; 2]")]
pub struct LoopClass(pub [i32; 2]);

impl TryFrom<[i32; 2]> for LoopClass {
    type Error = String;

    fn try_from(g: [i32; 2]) -> Result<Self, String> {
        if g == [0, 0] {
            Err("class must be nonzero".into())
        } else {
            Ok(Self(g))
        }
    }
}

impl From<LoopClass> for [i32; 2] {
    fn from(c: LoopClass) -> Self {
        c.0
    }
}

/// Symmetric positive definite kinetic matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[[f64; 2]; 2]", into = "[[f64; 2]; 2]")]
pub struct Kinetic(pub KineticMatrix);

impl TryFrom<[[f64; 2]; 2]> for Kinetic {
    type Error = String;

    fn try_from(rows: [[f64; 2]; 2]) -> Result<Self, String> {
        KineticMatrix::new(rows)
            .map(Self)
            .map_err(|e| e.to_string())
    }
}

impl From<Kinetic> for [[f64; 2]; 2] {
    fn from(k: Kinetic) -> Self {
        k.0.rows()
    }
}

impl Default for Kinetic {
    fn default() -> Self {
        Self(KineticMatrix::identity())
    }
}

/// `cos * cos(<index, x>) + sin * sin(<index, x>)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mode<I> {
    pub index: I,
    #[serde(default)]
    pub cos: f64,
    #[serde(default)]
    pub sin: f64,
}

fn field_from<const N: usize>(
    dim: usize,
    constant: f64,
    modes: &[Mode<[i32; N]>],
) -> Result<FourierField, LabError> {
    let mut f = FourierField::constant(dim, constant)?;
    for m in modes {
        let mut l = [0i32; 3];
        l[..N].copy_from_slice(&m.index);
        if l == [0; 3] {
            return Err(LabError::Invalid(format!(
                "mode index {:?} is the constant mode; use `constant`",
                m.index
            )));
        }
        if m.cos != 0.0 {
            f = f.plus(&FourierField::cosine(dim, l, m.cos)?)?;
        }
        if m.sin != 0.0 {
            f = f.plus(&FourierField::sine(dim, l, m.sin)?)?;
        }
    }
    Ok(f)
}

/// Mechanical chart `1/2 <A y, y> - V(x)` with optional drift and fast forcing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartSpec {
    #[serde(default)]
    pub kinetic: Kinetic,
    #[serde(default)]
    pub constant: f64,
    #[serde(default)]
    pub potential: Vec<Mode<[i32; 2]>>,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub drift: f64,
    /// Forcing `R(x1, x2, theta)`; scaled by `eps^sigma` at rate `omega3 / sqrt(eps)`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub forcing: Vec<Mode<[i32; 3]>>,
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

impl ChartSpec {
    pub fn potential_field(&self) -> Result<FourierField, LabError> {
        field_from(2, self.constant, &self.potential)
    }

    pub fn forcing_field(&self) -> Result<FourierField, LabError> {
        field_from(3, 0.0, &self.forcing)
    }

    pub fn system(&self) -> Result<MechanicalSystem, LabError> {
        Ok(MechanicalSystem::new(self.kinetic.0, self.potential_field()?)?.with_drift(self.drift))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Monomial {
    pub coeff: f64,
    pub powers: [u32; 3],
}

/// Momentum model `h(p)` and perturbation `P(q)` on the 3-torus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub quadratic: [[f64; 3]; 3],
    #[serde(default)]
    pub linear: [f64; 3],
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub monomials: Vec<Monomial>,
    #[serde(default)]
    pub constant: f64,
    #[serde(default)]
    pub perturbation: Vec<Mode<[i32; 3]>>,
}

impl ModelSpec {
    pub fn hamiltonian(&self) -> Result<MomentumHamiltonian, LabError> {
        let mut h = MomentumHamiltonian::quadratic(self.quadratic).with_linear(self.linear);
        for m in &self.monomials {
            h = h.with_monomial(m.coeff, m.powers)?;
        }
        Ok(h)
    }

    pub fn perturbation_field(&self) -> Result<FourierField, LabError> {
        field_from(3, self.constant, &self.perturbation)
    }

    pub fn perturbation(&self) -> Result<AffinePerturbation, LabError> {
        Ok(AffinePerturbation::new(self.perturbation_field()?)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct SystemBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chart: Option<ChartSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSpec>,
}

/// Numeric parameters. Each task reads the keys listed in its catalog entry
/// and ignores the rest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct NumericBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilons: Option<Vec<Epsilon>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Sigma>,
    /// Exponent `d` of the energy window `[eps^d, top]`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_exponent: Option<Fraction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energies: Option<Grid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub energy: Option<Positive>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_window: Option<Window>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<Fraction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class: Option<LoopClass>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<Positive>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub certify: Option<bool>,
    /// Expected Floquet ratio; derived from the saddle spectrum when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predicted: Option<Positive>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omegas: Option<Vec<Drift>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu_min: Option<Positive>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seeds: Option<Vec<u64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<Count>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completions: Option<Count>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modes: Option<Count>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_index: Option<IndexBound>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<Positive>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frequency: Option<[Real; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kprime: Option<[i32; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kmin: Option<IndexBound>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kmax: Option<IndexBound>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<Order>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega3: Option<Positive>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_max: Option<Positive>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<[Real; 4]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_length: Option<Positive>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub windows: Option<Count>,
    /// Range of flow times for the flow-distance trials.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<Window>,
    /// Largest size of the random perturbations in the flow-distance trials.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation_bound: Option<Positive>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top: Option<Positive>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Count>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub revolutions: Option<Count>,
}

impl NumericBlock {
    pub fn sigma(&self) -> f64 {
        self.sigma.map_or(SIGMA_DEFAULT, Sigma::get)
    }

    pub fn class(&self) -> [i32; 2] {
        self.class.map_or([1, 0], |c| c.0)
    }

    pub fn tolerance(&self, default: f64) -> f64 {
        self.tolerance.map_or(default, Fraction::get)
    }

    pub fn epsilons(&self) -> Vec<f64> {
        self.epsilons.iter().flatten().map(|e| e.get()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: TaskKind,
    #[serde(default)]
    pub seed: u64,
    /// Plots to emit; all plots the task supports when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plots: Option<Vec<PlotKind>>,
    #[serde(default)]
    pub system: SystemBlock,
    #[serde(default)]
    pub numeric: NumericBlock,
}

impl ExperimentConfig {
    /// Parses and validates; `origin` names the source in error messages.
    pub fn parse(text: &str, origin: &str) -> Result<Self, LabError> {
        let cfg: Self = toml::from_str(text).map_err(|e| LabError::Config {
            origin: origin.to_owned(),
            message: e.to_string().trim_end().to_owned(),
        })?;
        cfg.validate().map_err(|message| LabError::Config {
            origin: origin.to_owned(),
            message,
        })?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, LabError> {
        let text = std::fs::read_to_string(path).map_err(|source| LabError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Cross-field checks the parser cannot express.
    fn validate(&self) -> Result<(), String> {
        let entry = self.task.entry();
        for key in entry.required {
            if !self.has_key(key) {
                return Err(format!("task `{}` requires `{key}`", self.task));
            }
        }
        if let Some(plots) = &self.plots {
            for p in plots {
                if !entry.plots.contains(p) {
                    return Err(format!("task `{}` cannot draw plot `{p}`", self.task));
                }
            }
        }
        let n = &self.numeric;
        if let (Some(lo), Some(hi)) = (n.kmin, n.kmax) {
            if lo > hi {
                return Err(format!(
                    "numeric.kmin = {} exceeds numeric.kmax = {}",
                    lo.get(),
                    hi.get()
                ));
            }
        }
        if n.epsilons.as_ref().is_some_and(Vec::is_empty) {
            return Err("numeric.epsilons must not be empty".into());
        }
        if n.omegas.as_ref().is_some_and(Vec::is_empty) {
            return Err("numeric.omegas must not be empty".into());
        }
        if n.seeds.as_ref().is_some_and(Vec::is_empty) {
            return Err("numeric.seeds must not be empty".into());
        }
        Ok(())
    }

    fn has_key(&self, key: &str) -> bool {
        let n = &self.numeric;
        let chart = self.system.chart.as_ref();
        match key {
            "system.chart" => chart.is_some(),
            "system.chart.forcing" => chart.is_some_and(|c| !c.forcing.is_empty()),
            "system.model" => self.system.model.is_some(),
            "numeric.energies" => n.energies.is_some(),
            "numeric.energy" => n.energy.is_some(),
            "numeric.epsilons" => n.epsilons.is_some(),
            "numeric.period" => n.period.is_some(),
            "numeric.omegas" => n.omegas.is_some(),
            "numeric.seeds" => n.seeds.is_some(),
            "numeric.trials" => n.trials.is_some(),
            "numeric.kprime" => n.kprime.is_some(),
            "numeric.kmax" => n.kmax.is_some(),
            _ => unreachable!("catalog names unknown key {key}"),
        }
    }

    /// The config with defaults made explicit; it re-validates to itself.
    pub fn normalized(&self) -> Self {
        let mut c = self.clone();
        let mut plots = c
            .plots
            .take()
            .unwrap_or_else(|| c.task.entry().plots.to_vec());
        plots.sort();
        plots.dedup();
        c.plots = Some(plots);
        if c.numeric.sigma.is_none() {
            c.numeric.sigma = Sigma::new(SIGMA_DEFAULT);
        }
        if c.numeric.class.is_none() {
            c.numeric.class = Some(LoopClass([1, 0]));
        }
        c
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs serialize to TOML")
    }

    pub fn chart(&self) -> Result<&ChartSpec, LabError> {
        self.system
            .chart
            .as_ref()
            .ok_or_else(|| LabError::Invalid("system.chart is missing".into()))
    }

    pub fn model(&self) -> Result<&ModelSpec, LabError> {
        self.system
            .model
            .as_ref()
            .ok_or_else(|| LabError::Invalid("system.model is missing".into()))
    }

    pub fn plots(&self) -> Vec<PlotKind> {
        self.plots
            .clone()
            .unwrap_or_else(|| self.task.entry().plots.to_vec())
    }
}

/// Fetches a required numeric key that validation has already checked.
pub(crate) fn required<T: Copy>(v: Option<T>, key: &str) -> Result<T, LabError> {
    v.ok_or_else(|| LabError::Invalid(format!("numeric.{key} is missing")))
}
