//! TOML experiment configuration.
//!
//! ```toml
//! [model]
//! builder = "gompertz"      # gompertz | single | triples
//! a = 1.0
//! n = 20.0
//! k = 60
//! tail_policy = "kill"      # kill | reflect
//!
//! [beta]
//! family = "power"          # constant | power | table
//! kappa = 0.05
//! r = 1.0                   # x_cap defaults to n for gompertz models
//!
//! [run]
//! horizon = 10.0
//! snapshots = [5.0, 10.0]
//! replicas = 100
//! seed = 1
//!
//! [numerics]
//! tol = 1e-10
//! k_list = [25, 50, 100]
//! ```
//!
//! Unknown keys are rejected at every level.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::branching::{Beta, BranchingModel};
use crate::chain::{build_gompertz_bd, build_sparse_rates, parse_triples, triples_size, AbsorbedRates, TailPolicy};
use crate::error::{Error, Result};
use crate::simulator::{RunConfig, DEFAULT_POPULATION_CAP};
use crate::spectral::MatrixKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "builder", rename_all = "lowercase", deny_unknown_fields)]
pub enum ModelSpec {
    /// Birth rate `a x ln(n+1)`, death rate `a x ln(x+1)` on `1..=k`.
    Gompertz {
        a: f64,
        n: f64,
        k: usize,
        #[serde(default)]
        tail_policy: TailPolicy,
    },
    /// One type absorbed at rate `death`.
    Single { death: f64 },
    /// Rates from an `x y rate` file; `k` defaults to the largest label.
    Triples {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        k: Option<usize>,
        #[serde(default)]
        tail_policy: TailPolicy,
    },
}

impl ModelSpec {
    pub fn truncation(&self) -> Option<usize> {
        match self {
            ModelSpec::Gompertz { k, .. } => Some(*k),
            ModelSpec::Single { .. } => Some(1),
            ModelSpec::Triples { k, .. } => *k,
        }
    }

    /// Same model at truncation `k`; a single-state model ignores it.
    pub fn with_truncation(&self, new_k: usize) -> Self {
        match self {
            ModelSpec::Gompertz { a, n, tail_policy, .. } => ModelSpec::Gompertz {
                a: *a,
                n: *n,
                k: new_k,
                tail_policy: *tail_policy,
            },
            ModelSpec::Single { .. } => self.clone(),
            ModelSpec::Triples { path, tail_policy, .. } => ModelSpec::Triples {
                path: path.clone(),
                k: Some(new_k),
                tail_policy: *tail_policy,
            },
        }
    }

    /// Relative triple paths resolve against `base`.
    pub fn build_rates(&self, base: &Path) -> Result<AbsorbedRates> {
        match self {
            ModelSpec::Gompertz { a, n, k, tail_policy } => build_gompertz_bd(*a, *n, *k, *tail_policy),
            ModelSpec::Single { death } => build_sparse_rates(&[(1, 0, *death)], 1, TailPolicy::Kill),
            ModelSpec::Triples { path, k, tail_policy } => {
                let full = if path.is_absolute() {
                    path.clone()
                } else {
                    base.join(path)
                };
                let text = std::fs::read_to_string(&full)
                    .map_err(|e| Error::Config(format!("cannot read {}: {e}", full.display())))?;
                let entries = parse_triples(&text)?;
                let k = k.unwrap_or_else(|| triples_size(&entries));
                build_sparse_rates(&entries, k, *tail_policy)
            }
        }
    }

    fn default_x_cap(&self) -> Option<f64> {
        match self {
            ModelSpec::Gompertz { n, .. } => Some(*n),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    /// Defaults to `[horizon]`.
    #[serde(default)]
    pub snapshots: Vec<f64>,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_population_cap")]
    pub population_cap: u64,
    #[serde(default = "default_initial_type")]
    pub initial_type: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            horizon: default_horizon(),
            snapshots: Vec::new(),
            replicas: default_replicas(),
            seed: 0,
            population_cap: default_population_cap(),
            initial_type: default_initial_type(),
        }
    }
}

/// Lyapunov function presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LyapunovPreset {
    /// `V(x) = x`.
    #[default]
    Linear,
    /// `V(x) = ln(1 + x)`.
    Log,
}

impl LyapunovPreset {
    pub fn values(self, k: usize) -> Vec<f64> {
        (1..=k)
            .map(|x| match self {
                LyapunovPreset::Linear => x as f64,
                LyapunovPreset::Log => (1.0 + x as f64).ln(),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericsSection {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Truncations for `spectrum` sweeps; defaults to `[k]`.
    #[serde(default)]
    pub k_list: Vec<usize>,
    #[serde(default)]
    pub matrix: MatrixKind,
    /// Also bisect for the `κ` that makes `κ₀ = 1`.
    #[serde(default)]
    pub kappa_star: bool,
    #[serde(default = "default_yaglom_dt")]
    pub yaglom_dt: f64,
    #[serde(default)]
    pub lyapunov: LyapunovPreset,
    /// Target `ρ` of the Lyapunov check.
    #[serde(default = "default_rho")]
    pub rho: f64,
}

impl Default for NumericsSection {
    fn default() -> Self {
        Self {
            tol: default_tol(),
            max_iter: default_max_iter(),
            k_list: Vec::new(),
            matrix: MatrixKind::default(),
            kappa_star: false,
            yaglom_dt: default_yaglom_dt(),
            lyapunov: LyapunovPreset::default(),
            rho: default_rho(),
        }
    }
}

fn default_horizon() -> f64 {
    10.0
}
fn default_replicas() -> usize {
    100
}
fn default_population_cap() -> u64 {
    DEFAULT_POPULATION_CAP
}
fn default_initial_type() -> usize {
    1
}
fn default_tol() -> f64 {
    1e-10
}
fn default_max_iter() -> usize {
    1_000_000
}
fn default_yaglom_dt() -> f64 {
    1.0
}
fn default_rho() -> f64 {
    (-1.0f64).exp()
}

/// Documented defaults, shown by `--help`.
pub const DEFAULTS_HELP: &str = "\
config defaults:
  model.tail_policy   = kill
  beta.x_cap          = model.n for gompertz, none otherwise
  run.horizon         = 10
  run.snapshots       = [run.horizon]
  run.replicas        = 100
  run.seed            = 0
  run.population_cap  = 10000000
  run.initial_type    = 1
  numerics.tol        = 1e-10
  numerics.max_iter   = 1000000
  numerics.k_list     = [model.k]
  numerics.matrix     = a   (q | a | a_shift | skeleton)
  numerics.kappa_star = false
  numerics.yaglom_dt  = 1
  numerics.lyapunov   = linear   (linear | log)
  numerics.rho        = exp(-1)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSpec,
    pub beta: Beta,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub numerics: NumericsSection,
    /// Directory used to resolve relative paths; not serialized.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.resolve_defaults();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    /// Fills defaults that depend on other sections.
    fn resolve_defaults(&mut self) {
        if let Beta::Power {
            x_cap: x_cap @ None, ..
        } = &mut self.beta
        {
            *x_cap = self.model.default_x_cap();
        }
        if self.run.snapshots.is_empty() {
            self.run.snapshots = vec![self.run.horizon];
        }
        if self.numerics.k_list.is_empty() {
            if let Some(k) = self.model.truncation() {
                self.numerics.k_list = vec![k];
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        match &self.model {
            ModelSpec::Gompertz { a, n, k, .. } => {
                if !(*a > 0.0) || !(*n > 0.0) || *k == 0 {
                    return bad("gompertz model needs a > 0, n > 0, k >= 1".into());
                }
            }
            ModelSpec::Single { death } => {
                if !(*death > 0.0) {
                    return bad("single model needs death > 0".into());
                }
            }
            ModelSpec::Triples { k, .. } => {
                if *k == Some(0) {
                    return bad("triples model needs k >= 1".into());
                }
            }
        }
        let kappa_ok = match &self.beta {
            Beta::Constant { kappa } | Beta::Power { kappa, .. } => *kappa >= 0.0 && kappa.is_finite(),
            Beta::Table { values } => !values.is_empty() && values.iter().all(|v| *v >= 0.0 && v.is_finite()),
        };
        if !kappa_ok {
            return bad("beta values must be finite and >= 0".into());
        }
        let r = &self.run;
        if !(r.horizon >= 0.0) || !r.horizon.is_finite() {
            return bad("run.horizon must be >= 0".into());
        }
        if r.replicas == 0 {
            return bad("run.replicas must be >= 1".into());
        }
        if r.snapshots.iter().any(|&t| !(t >= 0.0 && t <= r.horizon)) || r.snapshots.windows(2).any(|w| w[1] < w[0]) {
            return bad("run.snapshots must be sorted and lie in [0, horizon]".into());
        }
        if r.initial_type == 0 {
            return bad("run.initial_type must be >= 1".into());
        }
        let n = &self.numerics;
        if !(n.tol > 0.0) || n.max_iter == 0 {
            return bad("numerics.tol and numerics.max_iter must be positive".into());
        }
        if n.k_list.contains(&0) || n.k_list.windows(2).any(|w| w[1] < w[0]) {
            return bad("numerics.k_list must be nondecreasing and positive".into());
        }
        if !(n.yaglom_dt > 0.0) {
            return bad("numerics.yaglom_dt must be > 0".into());
        }
        if !(n.rho > 0.0 && n.rho < 1.0) {
            return bad("numerics.rho must lie in (0, 1)".into());
        }
        Ok(())
    }

    /// Fully resolved config as TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Resolved config as `# `-prefixed lines for CSV and text headers.
    pub fn echo(&self) -> String {
        self.to_toml().lines().map(|l| format!("# {l}\n")).collect()
    }

    pub fn build_rates(&self) -> Result<AbsorbedRates> {
        self.model.build_rates(&self.base_dir)
    }

    pub fn build_model(&self) -> Result<BranchingModel> {
        BranchingModel::with_beta(self.build_rates()?, self.beta.clone())
    }

    pub fn build_model_at(&self, k: usize) -> Result<BranchingModel> {
        let rates = self.model.with_truncation(k).build_rates(&self.base_dir)?;
        BranchingModel::with_beta(rates, self.beta.clone())
    }

    pub fn build_model_with_kappa(&self, kappa: f64) -> Result<BranchingModel> {
        BranchingModel::with_beta(self.build_rates()?, self.beta.with_kappa(kappa))
    }

    pub fn run_config(&self, k: usize) -> Result<RunConfig> {
        if self.run.initial_type > k {
            return Err(Error::Config(format!(
                "run.initial_type {} exceeds k = {k}",
                self.run.initial_type
            )));
        }
        let mut rc = RunConfig::new(
            k,
            self.run.horizon,
            self.run.snapshots.clone(),
            self.run.replicas,
            self.run.seed,
        );
        rc.initial = vec![0; k];
        rc.initial[self.run.initial_type - 1] = 1;
        rc.population_cap = self.run.population_cap;
        Ok(rc)
    }

    pub fn apply_overrides(&mut self, o: &Overrides) -> Result<()> {
        if let Some(s) = o.seed {
            self.run.seed = s;
        }
        if let Some(r) = o.replicas {
            self.run.replicas = r;
        }
        if let Some(h) = o.horizon {
            let rescale = self.run.snapshots == [self.run.horizon];
            self.run.horizon = h;
            if rescale {
                self.run.snapshots = vec![h];
            } else {
                self.run.snapshots.retain(|&t| t <= h);
                if self.run.snapshots.is_empty() {
                    self.run.snapshots = vec![h];
                }
            }
        }
        if let Some(k) = o.truncation {
            if matches!(self.model, ModelSpec::Single { .. }) && k != 1 {
                return Err(Error::Config("single model has k = 1".into()));
            }
            self.model = self.model.with_truncation(k);
            self.numerics.k_list = vec![k];
        }
        self.validate()
    }
}

/// Command-line overrides of config values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub replicas: Option<usize>,
    pub horizon: Option<f64>,
    pub truncation: Option<usize>,
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOMPERTZ: &str = r#"
[model]
builder = "gompertz"
a = 1.0
n = 20.0
k = 30

[beta]
family = "power"
kappa = 0.1
r = 1.0
"#;

    #[test]
    fn defaults_resolve() {
        let c = ExperimentConfig::from_toml(GOMPERTZ).unwrap();
        assert_eq!(
            c.beta,
            Beta::Power {
                kappa: 0.1,
                r: 1.0,
                x_cap: Some(20.0)
            }
        );
        assert_eq!(c.run.snapshots, vec![10.0]);
        assert_eq!(c.numerics.k_list, vec![30]);
        assert_eq!(c.build_model().unwrap().size(), 30);
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = GOMPERTZ.replace("k = 30", "k = 30\nfoo = 1");
        assert!(matches!(ExperimentConfig::from_toml(&bad), Err(Error::Config(_))));
        let bad = format!("{GOMPERTZ}\n[run]\nhorizonn = 3.0\n");
        assert!(ExperimentConfig::from_toml(&bad).is_err());
        let bad = GOMPERTZ.replace("r = 1.0", "r = 1.0\nextra = 2");
        assert!(ExperimentConfig::from_toml(&bad).is_err());
        let bad = format!("{GOMPERTZ}\n[other]\nx = 1\n");
        assert!(ExperimentConfig::from_toml(&bad).is_err());
    }

    #[test]
    fn round_trip_is_lossless() {
        let c = ExperimentConfig::from_toml(GOMPERTZ).unwrap();
        let again = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn overrides_apply() {
        let mut c = ExperimentConfig::from_toml(GOMPERTZ).unwrap();
        c.apply_overrides(&Overrides {
            seed: Some(7),
            replicas: Some(3),
            horizon: Some(2.0),
            truncation: Some(40),
        })
        .unwrap();
        assert_eq!(c.run.seed, 7);
        assert_eq!(c.run.snapshots, vec![2.0]);
        assert_eq!(c.model.truncation(), Some(40));
        assert_eq!(c.numerics.k_list, vec![40]);
    }

    #[test]
    fn invalid_values_rejected() {
        let bad = GOMPERTZ.replace("a = 1.0", "a = -1.0");
        assert!(ExperimentConfig::from_toml(&bad).is_err());
        let bad = format!("{GOMPERTZ}\n[run]\nhorizon = 1.0\nsnapshots = [2.0]\n");
        assert!(ExperimentConfig::from_toml(&bad).is_err());
    }
}
