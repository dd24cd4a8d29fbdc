//! Experiment configuration.
//!
//! A configuration is a TOML document. It may name a `preset`; the preset's
//! document is loaded first and every key in the user document replaces the
//! preset's value (tables merge key by key). Unknown keys are rejected.

use std::path::PathBuf;

use adaoais_core::oracle::fixture_name;
use adaoais_core::proposals::{BetaProposalParams, GaussianProposalParams};
use adaoais_core::targets::{experiment_target, ExperimentTarget};
use adaoais_core::{
    GaussianSpec, MixtureSpec, OaisProblem, OptimizerSpec, ParamVector, ProposalFamily,
    ProposalParams, Schedule, Target, TestFunction,
};
use serde::Deserialize;
use toml::Table;

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSection {
    /// `gaussian`, `mixture` or `logitnormal` experiment target.
    pub preset: Option<String>,
    /// Inline target kind: `gaussian`, `mixture` or `logitnormal`.
    pub kind: Option<String>,
    pub mean: Option<Vec<f64>>,
    pub covariance: Option<Vec<f64>>,
    pub weights: Option<Vec<f64>>,
    pub means: Option<Vec<Vec<f64>>>,
    pub covariances: Option<Vec<Vec<f64>>>,
    pub loc: Option<f64>,
    pub scale: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProposalSection {
    /// `gaussian`, `gaussian_mean` or `beta`.
    pub family: String,
    pub mean: Option<Vec<f64>>,
    pub covariance: Option<Vec<f64>>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhiSection {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    /// `sgd`, `adam` or `adagrad`.
    pub name: String,
    pub rate: f64,
    /// `constant` or `inv_sqrt`.
    #[serde(default = "default_schedule")]
    pub schedule: String,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
}

fn default_schedule() -> String {
    "constant".into()
}
fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-8
}
fn default_one() -> usize {
    1
}
fn default_samples() -> usize {
    100_000
}

/// A parsed, validated experiment configuration.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Used in output file names.
    pub name: String,
    /// Preset the document was layered on, if any.
    pub preset: Option<String>,
    pub target: TargetSection,
    pub proposal: ProposalSection,
    pub phi: Option<PhiSection>,
    pub optimizer: Option<OptimizerSection>,
    pub n_particles: Option<usize>,
    pub iterations: Option<usize>,
    #[serde(default = "default_one")]
    pub runs: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_one")]
    pub thin: usize,
    pub output: Option<PathBuf>,
    /// Fixture key holding the ground truth for `mse`.
    pub truth: Option<String>,
    /// Sample count for `gradcheck`.
    #[serde(default = "default_samples")]
    pub samples: usize,
}

const EXP1_INIT: &str = r#"
[proposal]
family = "gaussian"
mean = [10.0, -10.0]
covariance = [40.0, 0.0, 0.0, 40.0]
"#;

const ADAM: &str = r#"
[optimizer]
name = "adam"
rate = 0.01
beta1 = 0.9
beta2 = 0.999
"#;

const ADAGRAD: &str = r#"
[optimizer]
name = "adagrad"
rate = 0.1
"#;

const SGD: &str = r#"
[optimizer]
name = "sgd"
rate = 1e-4
schedule = "inv_sqrt"
"#;

/// Names accepted by `--preset`.
pub const PRESETS: [&str; 18] = [
    "exp1-sgd",
    "exp1-adam",
    "exp1-adagrad",
    "exp2-adam",
    "exp2-adagrad",
    "exp3-adam",
    "exp3-adagrad",
    "exp1-sgd-fast",
    "exp1-adam-fast",
    "exp1-adagrad-fast",
    "exp2-adam-fast",
    "exp2-adagrad-fast",
    "exp3-adam-fast",
    "exp3-adagrad-fast",
    "gradcheck-optimum",
    "gradcheck-mean1d",
    "smoke-gaussian",
    "smoke-beta",
];

/// The TOML document behind a preset name.
pub fn preset_document(name: &str) -> Result<String, CliError> {
    let (base, fast) = match name.strip_suffix("-fast") {
        Some(b) => (b, true),
        None => (name, false),
    };
    let doc = match base {
        "exp1-sgd" | "exp1-adam" | "exp1-adagrad" => {
            let opt = match base {
                "exp1-sgd" => SGD,
                "exp1-adam" => ADAM,
                _ => ADAGRAD,
            };
            let t = if base == "exp1-sgd" || fast { 10_000 } else { 30_000 };
            format!(
                "n_particles = 1000\niterations = {t}\nruns = 10\n[target]\npreset = \"gaussian\"\n{EXP1_INIT}{opt}"
            )
        }
        "exp2-adam" | "exp2-adagrad" => {
            let opt = if base == "exp2-adam" { ADAM } else { ADAGRAD };
            let (n, t, runs) = if fast { (500, 3000, 50) } else { (1000, 30_000, 200) };
            format!(
                "n_particles = {n}\niterations = {t}\nruns = {runs}\n[target]\npreset = \"mixture\"\n{EXP1_INIT}{opt}"
            )
        }
        "exp3-adam" | "exp3-adagrad" => {
            let opt = if base == "exp3-adam" { ADAM } else { ADAGRAD };
            let (t, runs) = if fast { (2000, 20) } else { (10_000, 100) };
            format!(
                "n_particles = 1000\niterations = {t}\nruns = {runs}\n[target]\npreset = \"logitnormal\"\n\
                 [proposal]\nfamily = \"beta\"\nalpha = 1.0\nbeta = 1.0\n{opt}"
            )
        }
        "gradcheck-optimum" if !fast => "samples = 100000\n[target]\npreset = \"gaussian\"\n\
             [proposal]\nfamily = \"gaussian\"\nmean = [1.0, -1.0]\ncovariance = [2.0, -0.5, -0.5, 2.0]\n"
            .to_string(),
        "gradcheck-mean1d" if !fast => "samples = 100000\n[target]\nkind = \"gaussian\"\nmean = [0.0]\ncovariance = [1.0]\n\
             [proposal]\nfamily = \"gaussian_mean\"\nmean = [0.5]\ncovariance = [1.0]\n"
            .to_string(),
        "smoke-gaussian" if !fast => format!(
            "n_particles = 200\niterations = 50\nruns = 3\n[target]\npreset = \"gaussian\"\n{EXP1_INIT}{ADAM}"
        ),
        "smoke-beta" if !fast => format!(
            "n_particles = 200\niterations = 50\nruns = 3\n[target]\npreset = \"logitnormal\"\n\
             [proposal]\nfamily = \"beta\"\nalpha = 1.0\nbeta = 1.0\n{ADAM}"
        ),
        _ => {
            return Err(CliError::Config(format!(
                "unknown preset {name:?}; available: {}",
                PRESETS.join(", ")
            )))
        }
    };
    Ok(format!("name = \"{name}\"\n{doc}"))
}

fn merge(base: &mut Table, over: Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn parse_table(text: &str, what: &str) -> Result<Table, CliError> {
    text.parse::<Table>()
        .map_err(|e| CliError::Config(format!("{what}: {}", e.message())))
}

/// Parses a configuration document, layering it over `preset` (or over the
/// document's own `preset` key) and validating the result.
pub fn parse_config(text: &str, preset: Option<&str>) -> Result<ExperimentConfig, CliError> {
    let user = parse_table(text, "config")?;
    let preset = match user.get("preset") {
        Some(toml::Value::String(p)) => Some(p.clone()),
        Some(_) => return Err(CliError::Config("key `preset` must be a string".into())),
        None => preset.map(str::to_string),
    };
    let mut table = match &preset {
        Some(p) => parse_table(&preset_document(p)?, "preset")?,
        None => Table::new(),
    };
    merge(&mut table, user);
    if let Some(p) = &preset {
        table.insert("preset".into(), toml::Value::String(p.clone()));
    }
    if !table.contains_key("name") {
        table.insert("name".into(), toml::Value::String("experiment".into()));
    }
    let config: ExperimentConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Config(e.message().to_string()))?;
    config.validate()?;
    Ok(config)
}

/// Loads a preset with no overrides.
pub fn preset_config(name: &str) -> Result<ExperimentConfig, CliError> {
    parse_config("", Some(name))
}

fn need<T: Clone>(value: &Option<T>, key: &str) -> Result<T, CliError> {
    value
        .clone()
        .ok_or_else(|| CliError::Config(format!("missing key `{key}`")))
}

fn cfg_err(key: &str, e: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("`{key}`: {e}"))
}

impl ExperimentConfig {
    /// Checks every invariant without sampling.
    pub fn validate(&self) -> Result<(), CliError> {
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return Err(CliError::Config(format!(
                "`name` {:?} is not a valid file stem",
                self.name
            )));
        }
        if self.n_particles == Some(0) {
            return Err(CliError::Config("`n_particles` must be at least 1".into()));
        }
        if self.runs == 0 {
            return Err(CliError::Config("`runs` must be at least 1".into()));
        }
        if self.thin == 0 {
            return Err(CliError::Config("`thin` must be at least 1".into()));
        }
        if self.samples == 0 {
            return Err(CliError::Config("`samples` must be at least 1".into()));
        }
        let target = self.build_target()?;
        let family = self.build_family()?;
        self.build_theta0(&family)?;
        if target.dim() != family.dim() {
            return Err(CliError::Config(format!(
                "target dimension {} differs from proposal dimension {}",
                target.dim(),
                family.dim()
            )));
        }
        if let Some(opt) = self.build_optimizer()? {
            opt.validate().map_err(|e| cfg_err("optimizer", e))?;
        }
        if self.phi.is_some() || self.experiment_target().is_some() {
            let phi = self.build_phi()?;
            if let Some((lo, _)) = phi.rect() {
                if lo.len() != target.dim() {
                    return Err(CliError::Config(format!(
                        "`phi` has dimension {}, target has {}",
                        lo.len(),
                        target.dim()
                    )));
                }
            }
        }
        Ok(())
    }

    /// The experiment target named by `target.preset`, if any.
    pub fn experiment_target(&self) -> Option<ExperimentTarget> {
        self.target.preset.as_deref().and_then(|p| p.parse().ok())
    }

    pub fn build_target(&self) -> Result<Target, CliError> {
        let t = &self.target;
        if let Some(p) = &t.preset {
            if t.kind.is_some() {
                return Err(CliError::Config(
                    "`target.preset` and `target.kind` are exclusive".into(),
                ));
            }
            let which: ExperimentTarget = p.parse().map_err(|e| cfg_err("target.preset", e))?;
            return Ok(experiment_target(which));
        }
        let kind = need(&t.kind, "target.kind")?;
        match kind.as_str() {
            "gaussian" => {
                let spec = GaussianSpec::new(
                    need(&t.mean, "target.mean")?,
                    need(&t.covariance, "target.covariance")?,
                )
                .map_err(|e| cfg_err("target.covariance", e))?;
                Ok(Target::gaussian(spec))
            }
            "mixture" => {
                let w = need(&t.weights, "target.weights")?;
                let means = need(&t.means, "target.means")?;
                let covs = need(&t.covariances, "target.covariances")?;
                if w.len() != means.len() || w.len() != covs.len() {
                    return Err(CliError::Config(
                        "`target.weights`, `target.means` and `target.covariances` differ in length".into(),
                    ));
                }
                let comps = w
                    .into_iter()
                    .zip(means.into_iter().zip(covs))
                    .map(|(w, (m, c))| {
                        Ok((
                            w,
                            GaussianSpec::new(m, c)
                                .map_err(|e| cfg_err("target.covariances", e))?,
                        ))
                    })
                    .collect::<Result<Vec<_>, CliError>>()?;
                Ok(Target::mixture(
                    MixtureSpec::new(comps).map_err(|e| cfg_err("target.weights", e))?,
                ))
            }
            "logitnormal" => Target::logit_normal(t.loc.unwrap_or(0.0), t.scale.unwrap_or(1.0))
                .map_err(|e| cfg_err("target.scale", e)),
            other => Err(CliError::Config(format!(
                "`target.kind` {other:?} is not one of gaussian, mixture, logitnormal"
            ))),
        }
    }

    pub fn build_family(&self) -> Result<ProposalFamily, CliError> {
        let p = &self.proposal;
        match p.family.as_str() {
            "gaussian" => Ok(ProposalFamily::gaussian(
                need(&p.mean, "proposal.mean")?.len(),
            )),
            "gaussian_mean" => {
                ProposalFamily::gaussian_mean(&need(&p.covariance, "proposal.covariance")?)
                    .map_err(|e| cfg_err("proposal.covariance", e))
            }
            "beta" => Ok(ProposalFamily::Beta),
            other => Err(CliError::Config(format!(
                "`proposal.family` {other:?} is not one of gaussian, gaussian_mean, beta"
            ))),
        }
    }

    pub fn build_theta0(&self, family: &ProposalFamily) -> Result<ParamVector, CliError> {
        let p = &self.proposal;
        let params = match family {
            ProposalFamily::Beta => ProposalParams::Beta(
                BetaProposalParams::from_shape(
                    need(&p.alpha, "proposal.alpha")?,
                    need(&p.beta, "proposal.beta")?,
                )
                .map_err(|e| cfg_err("proposal.alpha", e))?,
            ),
            _ => ProposalParams::Gaussian(
                GaussianProposalParams::from_covariance(
                    need(&p.mean, "proposal.mean")?,
                    &need(&p.covariance, "proposal.covariance")?,
                )
                .map_err(|e| cfg_err("proposal.covariance", e))?,
            ),
        };
        family.pack(&params).map_err(|e| cfg_err("proposal", e))
    }

    pub fn build_optimizer(&self) -> Result<Option<OptimizerSpec>, CliError> {
        let Some(o) = &self.optimizer else {
            return Ok(None);
        };
        let schedule = match o.schedule.as_str() {
            "constant" => Schedule::Constant(o.rate),
            "inv_sqrt" => Schedule::InvSqrt(o.rate),
            other => {
                return Err(CliError::Config(format!(
                    "`optimizer.schedule` {other:?} is not one of constant, inv_sqrt"
                )))
            }
        };
        let spec = match o.name.as_str() {
            "sgd" => OptimizerSpec::Sgd { schedule },
            "adam" => OptimizerSpec::Adam {
                schedule,
                beta1: o.beta1,
                beta2: o.beta2,
                eps: o.eps,
            },
            "adagrad" => OptimizerSpec::AdaGrad {
                schedule,
                eps: o.eps,
            },
            other => {
                return Err(CliError::Config(format!(
                    "`optimizer.name` {other:?} is not one of sgd, adam, adagrad"
                )))
            }
        };
        spec.validate().map_err(|e| cfg_err("optimizer", e))?;
        Ok(Some(spec))
    }

    pub fn build_phi(&self) -> Result<TestFunction, CliError> {
        let (lo, hi) = match (&self.phi, self.experiment_target()) {
            (Some(p), _) => (p.lower.clone(), p.upper.clone()),
            (None, Some(which)) => which.region(),
            (None, None) => return Err(CliError::Config("missing section `phi`".into())),
        };
        TestFunction::indicator(lo, hi).map_err(|e| cfg_err("phi", e))
    }

    /// The full problem for `run` and `mse`.
    pub fn to_problem(&self) -> Result<OaisProblem, CliError> {
        let family = self.build_family()?;
        let problem = OaisProblem {
            target: self.build_target()?,
            theta0: self.build_theta0(&family)?,
            family,
            phi: self.build_phi()?,
            optimizer: self
                .build_optimizer()?
                .ok_or_else(|| CliError::Config("missing section `optimizer`".into()))?,
            n_particles: need(&self.n_particles, "n_particles")?,
            iterations: need(&self.iterations, "iterations")?,
        };
        problem
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        Ok(problem)
    }

    /// Fixture key holding the truth for this experiment.
    pub fn truth_key(&self) -> Result<String, CliError> {
        match (&self.truth, self.experiment_target()) {
            (Some(k), _) => Ok(k.clone()),
            (None, Some(which)) => Ok(fixture_name(which)),
            (None, None) => Err(CliError::Config(
                "missing key `truth` (fixture name) for a custom target".into(),
            )),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_preset_parses() {
        for p in PRESETS {
            let c = preset_config(p).unwrap_or_else(|e| panic!("{p}: {e}"));
            assert_eq!(c.name, p);
        }
    }

    #[test]
    fn exp1_adam_preset() {
        let c = preset_config("exp1-adam").unwrap();
        assert_eq!(c.n_particles, Some(1000));
        assert_eq!(c.iterations, Some(30_000));
        let o = c.optimizer.as_ref().unwrap();
        assert_eq!((o.rate, o.beta1, o.beta2, o.eps), (0.01, 0.9, 0.999, 1e-8));
        assert_eq!(c.proposal.mean, Some(vec![10.0, -10.0]));
        assert_eq!(c.proposal.covariance, Some(vec![40.0, 0.0, 0.0, 40.0]));
        assert_eq!(c.truth_key().unwrap(), "exp1");
    }

    #[test]
    fn exp3_adagrad_preset() {
        let c = preset_config("exp3-adagrad").unwrap();
        assert_eq!(c.iterations, Some(10_000));
        assert_eq!(c.runs, 100);
        assert_eq!(c.optimizer.as_ref().unwrap().rate, 0.1);
        assert_eq!((c.proposal.alpha, c.proposal.beta), (Some(1.0), Some(1.0)));
        assert_eq!(c.build_family().unwrap(), ProposalFamily::Beta);
    }

    #[test]
    fn overrides_layer_over_preset() {
        let c = parse_config(
            "preset = \"exp2-adam\"\nruns = 7\n[optimizer]\nrate = 0.02\n",
            None,
        )
        .unwrap();
        assert_eq!(c.runs, 7);
        let o = c.optimizer.unwrap();
        assert_eq!((o.name.as_str(), o.rate), ("adam", 0.02));
        assert_eq!(c.iterations, Some(30_000));
    }

    #[test]
    fn rejects_bad_documents() {
        let bad = [
            "preset = \"exp1-adam\"\nn_particles = 0\n",
            "preset = \"exp1-adam\"\nsurprise = 1\n",
            "preset = \"exp1-adam\"\n[optimizer]\nbeta1 = 1.5\n",
            "preset = \"exp1-adam\"\n[proposal]\ncovariance = [1.0, 2.0, 2.0, 1.0]\n",
            "preset = \"exp1-adam\"\nthin = 0\n",
            "preset = \"nope\"\n",
            "[target]\npreset = \"gaussian\"\n",
            "n_particles = \"many\"\n",
        ];
        for doc in bad {
            assert!(parse_config(doc, None).is_err(), "accepted:\n{doc}");
        }
        let e = parse_config("preset = \"exp1-adam\"\nsurprise = 1\n", None).unwrap_err();
        assert!(e.to_string().contains("surprise"), "{e}");
    }

    #[test]
    fn inline_mixture_target() {
        let doc = r#"
name = "custom"
n_particles = 10
iterations = 2
truth = "exp2"
[target]
kind = "mixture"
weights = [0.5, 0.5]
means = [[3.0, 0.0], [-3.0, 0.0]]
covariances = [[1.0, 0.0, 0.0, 1.0], [1.0, 0.0, 0.0, 1.0]]
[proposal]
family = "gaussian"
mean = [0.0, 0.0]
covariance = [4.0, 0.0, 0.0, 4.0]
[phi]
lower = [-1.0, -1.0]
upper = [1.0, 1.0]
[optimizer]
name = "adagrad"
rate = 0.1
"#;
        let c = parse_config(doc, None).unwrap();
        let p = c.to_problem().unwrap();
        assert_eq!(p.family.param_len(), 5);
        assert_eq!(c.truth_key().unwrap(), "exp2");
    }
}
