use serde::{Deserialize, Serialize};

use crate::ensembles::{EnsembleSpec, EntryLaw};
use crate::error::{Error, Result};
use crate::observables::{Basis, IndexSet, Profile, RegularizationParams};

/// Entry law as written in a config: a bare name or a full table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LawSpec {
    Name(String),
    Full(EntryLaw),
}

impl LawSpec {
    pub fn resolve(&self) -> Result<EntryLaw> {
        match self {
            LawSpec::Full(l) => Ok(l.clone()),
            LawSpec::Name(s) => match s.as_str() {
                "gaussian" => Ok(EntryLaw::Gaussian),
                "rademacher" => Ok(EntryLaw::Rademacher),
                "uniform" => Ok(EntryLaw::Uniform),
                other => Err(Error::Config(format!(
                    "ensemble.law: unknown law `{other}` (expected gaussian, rademacher, uniform or a custom table)"
                ))),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    pub n: usize,
    #[serde(default = "default_beta")]
    pub beta: u8,
    #[serde(default = "default_law")]
    pub law: LawSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diag_variance_factor: Option<f64>,
}

fn default_beta() -> u8 {
    1
}

fn default_law() -> LawSpec {
    LawSpec::Name("gaussian".into())
}

impl EnsembleConfig {
    pub fn spec(&self) -> Result<EnsembleSpec> {
        self.spec_with_n(self.n)
    }

    pub fn spec_with_n(&self, n: usize) -> Result<EnsembleSpec> {
        let spec = EnsembleSpec { n, beta: self.beta, law: self.law.resolve()?, diag_variance_factor: self.diag_variance_factor };
        spec.validate().map_err(|e| Error::Config(format!("ensemble: {e}")))?;
        Ok(spec)
    }
}

/// Eigenvalue index: 1-based position, or `"bottom"` / `"top"`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum EllSpec {
    Index(usize),
    Named(String),
}

impl EllSpec {
    pub fn resolve(&self, n: usize) -> Result<usize> {
        let l = match self {
            EllSpec::Index(i) => *i,
            EllSpec::Named(s) if s == "bottom" => 1,
            EllSpec::Named(s) if s == "top" => n,
            EllSpec::Named(s) => return Err(Error::Config(format!("experiment.ell: expected an index, `bottom` or `top`, got `{s}`"))),
        };
        if l == 0 || l > n {
            return Err(Error::Config(format!("experiment.ell: {l} is outside 1..={n}")));
        }
        Ok(l)
    }
}

/// `|I|` as a count or as a fraction of `N`; `I` is the leading block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum IndexSetSpec {
    Count(usize),
    Fraction(f64),
}

impl IndexSetSpec {
    pub fn size(&self, n: usize) -> Result<usize> {
        match *self {
            IndexSetSpec::Count(c) if c <= n => Ok(c),
            IndexSetSpec::Count(c) => Err(Error::Config(format!("experiment.index_set: {c} exceeds N = {n}"))),
            IndexSetSpec::Fraction(f) if (0.0..=1.0).contains(&f) => Ok((f * n as f64).round() as usize),
            IndexSetSpec::Fraction(f) => Err(Error::Config(format!("experiment.index_set: fraction {f} outside [0, 1]"))),
        }
    }

    pub fn resolve(&self, n: usize) -> Result<IndexSet> {
        IndexSet::leading(n, self.size(n)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BasisSpec {
    Standard,
    Haar,
}

impl BasisSpec {
    pub fn resolve(&self, n: usize, seed: u64) -> Result<Basis> {
        match self {
            BasisSpec::Standard => Ok(Basis::Standard),
            BasisSpec::Haar => Basis::haar(n, seed),
        }
    }
}

/// Pass/fail thresholds; defaults are the desk-scale acceptance values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    /// Multiples of the batch-means SE allowed for moment deviations.
    pub se_multiplier: f64,
    pub second_moment_floor: f64,
    pub fourth_moment_floor: f64,
    pub ks_distance: f64,
    /// Bound `N^x` on 95th percentiles.
    pub que_exponent: f64,
    pub rigidity_exponent: f64,
    pub local_law_exponent: f64,
    pub min_correlation: f64,
    pub max_second_moment_gap: f64,
    pub stein_residual: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            se_multiplier: 3.0,
            second_moment_floor: 0.1,
            fourth_moment_floor: 0.4,
            ks_distance: 0.05,
            que_exponent: 0.2,
            rigidity_exponent: 0.15,
            local_law_exponent: 0.15,
            min_correlation: 0.9,
            max_second_moment_gap: 0.15,
            stein_residual: 1e-10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    #[serde(default = "default_trials")]
    pub trials: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_ell")]
    pub ell: EllSpec,
    #[serde(default = "default_index_set")]
    pub index_set: IndexSetSpec,
    #[serde(default = "default_basis")]
    pub basis: BasisSpec,
    /// Worker threads; `None` uses every available core.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    /// Extra matrix sizes for trend checks (QUE, local law).
    #[serde(default)]
    pub n_sweep: Vec<usize>,
    /// `(E, eta)` pairs; empty means the built-in 12-point grid.
    #[serde(default)]
    pub z_grid: Vec<[f64; 2]>,
    #[serde(default = "default_edge_points")]
    pub edge_points: usize,
    #[serde(default = "default_epsilons")]
    pub repulsion_epsilons: Vec<f64>,
    #[serde(default)]
    pub thresholds: Thresholds,
}

fn default_trials() -> u64 {
    100
}

fn default_ell() -> EllSpec {
    EllSpec::Index(1)
}

fn default_index_set() -> IndexSetSpec {
    IndexSetSpec::Fraction(0.5)
}

fn default_basis() -> BasisSpec {
    BasisSpec::Standard
}

fn default_edge_points() -> usize {
    5
}

fn default_epsilons() -> Vec<f64> {
    vec![0.05, 0.1, 0.2]
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            trials: default_trials(),
            seed: 0,
            ell: default_ell(),
            index_set: default_index_set(),
            basis: default_basis(),
            workers: None,
            n_sweep: Vec::new(),
            z_grid: Vec::new(),
            edge_points: default_edge_points(),
            repulsion_epsilons: default_epsilons(),
            thresholds: Thresholds::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileName {
    Practical,
    Paper,
    Custom,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegularizationSection {
    pub profile: ProfileName,
    pub tau: f64,
    pub eps0: f64,
    pub c0: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<[f64; 5]>,
}

impl Default for RegularizationSection {
    fn default() -> Self {
        RegularizationSection { profile: ProfileName::Practical, tau: 0.2, eps0: 0.1, c0: 1.0, delta: None }
    }
}

impl RegularizationSection {
    pub fn profile(&self) -> Result<Profile> {
        Ok(match self.profile {
            ProfileName::Practical => Profile::Practical,
            ProfileName::Paper => Profile::Paper { eps0: self.eps0, c0: self.c0 },
            ProfileName::Custom => Profile::Custom {
                delta: self.delta.ok_or_else(|| Error::Config("regularization.delta is required for the custom profile".into()))?,
            },
        })
    }

    pub fn params(&self, ell: usize, n: usize) -> Result<RegularizationParams> {
        RegularizationParams::new(ell, n, self.tau, self.profile()?).map_err(|e| Error::Config(format!("regularization: {e}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: "quelab-out".into() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub ensemble: EnsembleConfig,
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub regularization: RegularizationSection,
    #[serde(default)]
    pub output: OutputSection,
}

impl ExperimentConfig {
    pub fn new(ensemble: EnsembleConfig) -> Self {
        ExperimentConfig {
            ensemble,
            experiment: ExperimentSection::default(),
            regularization: RegularizationSection::default(),
            output: OutputSection::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let spec = self.ensemble.spec()?;
        if self.experiment.trials == 0 {
            return Err(Error::Config("experiment.trials must be at least 1".into()));
        }
        if self.experiment.workers == Some(0) {
            return Err(Error::Config("experiment.workers must be at least 1".into()));
        }
        let l = self.experiment.ell.resolve(spec.n)?;
        self.experiment.index_set.size(spec.n)?;
        for &n in &self.experiment.n_sweep {
            self.ensemble.spec_with_n(n)?;
        }
        self.regularization.params(l, spec.n)?;
        Ok(())
    }

    pub fn workers(&self) -> usize {
        self.experiment.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
    }
}
