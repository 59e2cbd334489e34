//! Run configuration file (TOML). Top-level keys mirror the engine's control
//! names: `funEvals`, `types`, `noise`, `seedFun`, `seedSPOT`, `replicates`,
//! `duplicate`, `OCBA`, `OCBAbudget`, `design`, `designControl`, `model`,
//! `modelControl`, `optimizer`, `optimizerControl`, plus `objective`,
//! `lower`, `upper` and an optional `scenario` block for the SANN target.

use crate::error::{CliError, CliResult};
use serde::{Deserialize, Serialize};
use spot_core::design::{DesignControl, DesignKind};
use spot_core::objectives::{NamedObjective, SannScenario};
use spot_core::optim::{LhdSearchControl, LocalSearchControl, OptimizerKind};
use spot_core::rsm::RsmControl;
use spot_core::spot::{DuplicatePolicy, SpotConfig};
use spot_core::surrogates::{ForestControl, KrigingControl, ModelKind, StackControl, StackMember, ThetaSearch};
use spot_core::VarType;
use std::path::Path;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub objective: Option<String>,
    #[serde(default)]
    pub lower: Vec<f64>,
    #[serde(default)]
    pub upper: Vec<f64>,
    #[serde(rename = "funEvals")]
    pub fun_evals: Option<usize>,
    pub types: Option<Vec<String>>,
    pub noise: Option<bool>,
    #[serde(rename = "seedFun")]
    pub seed_fun: Option<u64>,
    #[serde(rename = "seedSPOT")]
    pub seed_spot: Option<u64>,
    pub replicates: Option<usize>,
    pub duplicate: Option<String>,
    #[serde(rename = "OCBA")]
    pub ocba: Option<bool>,
    #[serde(rename = "OCBAbudget")]
    pub ocba_budget: Option<usize>,
    pub plots: Option<bool>,
    pub design: Option<String>,
    pub model: Option<String>,
    pub optimizer: Option<String>,
    #[serde(rename = "designControl")]
    pub design_control: Option<DesignControlConfig>,
    #[serde(rename = "modelControl")]
    pub model_control: Option<ModelControlConfig>,
    #[serde(rename = "optimizerControl")]
    pub optimizer_control: Option<OptimizerControlConfig>,
    pub scenario: Option<ScenarioConfig>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignControlConfig {
    pub size: Option<usize>,
    pub retries: Option<usize>,
    pub replicates: Option<usize>,
}

/// Union of the per-model keys. Keys of a family other than the selected
/// model are rejected; a stack accepts the keys of its members.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelControlConfig {
    #[serde(rename = "algTheta")]
    pub alg_theta: Option<String>,
    #[serde(rename = "useLambda")]
    pub use_lambda: Option<bool>,
    pub reinterpolate: Option<bool>,
    pub budget: Option<usize>,
    #[serde(rename = "log10Theta")]
    pub log10_theta: Option<[f64; 2]>,
    #[serde(rename = "log10Lambda")]
    pub log10_lambda: Option<[f64; 2]>,
    pub ntree: Option<usize>,
    pub mtry: Option<usize>,
    pub nodesize: Option<usize>,
    pub bootstrap: Option<bool>,
    #[serde(rename = "mainEffectsOnly")]
    pub main_effects_only: Option<bool>,
    pub canonical: Option<bool>,
    pub members: Option<Vec<String>>,
    pub folds: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerControlConfig {
    #[serde(rename = "funEvals")]
    pub fun_evals: Option<usize>,
    pub retries: Option<usize>,
    #[serde(rename = "fdStep")]
    pub fd_step: Option<f64>,
    pub gtol: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub x0: Option<Vec<f64>>,
    pub maxit: Option<usize>,
    pub seed: Option<u64>,
}

/// A config with every name resolved to engine types.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub objective: NamedObjective,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub types: Vec<VarType>,
    pub spot: SpotConfig,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Family {
    Kriging,
    Forest,
    Rsm,
    Stack,
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl RunConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| config_err(e.to_string()))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn resolve(&self, default_objective: &str) -> CliResult<Resolved> {
        let scenario = self.scenario();
        let objective = NamedObjective::from_name(self.objective.as_deref().unwrap_or(default_objective), scenario)?;
        if self.lower.is_empty() || self.lower.len() != self.upper.len() {
            return Err(config_err(format!(
                "lower and upper must be non-empty and of equal length (got {} and {})",
                self.lower.len(),
                self.upper.len()
            )));
        }
        let d = self.lower.len();
        let types = match &self.types {
            None => vec![VarType::Numeric; d],
            Some(t) if t.len() != d => {
                return Err(config_err(format!("types has {} entries for {d} dimensions", t.len())));
            }
            Some(t) => t.iter().map(|s| s.parse::<VarType>()).collect::<Result<_, _>>()?,
        };

        let defaults = SpotConfig::default();
        let dc = self.design_control.clone().unwrap_or_default();
        let design_control = DesignControl {
            size: dc.size.unwrap_or(defaults.design_control.size),
            retries: dc.retries.unwrap_or(defaults.design_control.retries),
            replicates: dc.replicates.unwrap_or(defaults.design_control.replicates),
            ..defaults.design_control.clone()
        };
        let spot = SpotConfig {
            fun_evals: self.fun_evals.unwrap_or(defaults.fun_evals),
            types: Some(types.clone()),
            design: parse_design(self.design.as_deref())?,
            design_control,
            model: self.model_kind()?,
            optimizer: self.optimizer_kind()?,
            noise: self.noise.unwrap_or(defaults.noise),
            ocba: self.ocba.unwrap_or(defaults.ocba),
            ocba_budget: self.ocba_budget.unwrap_or(defaults.ocba_budget),
            replicates: self.replicates.unwrap_or(defaults.replicates),
            seed_fun: self.seed_fun.or(defaults.seed_fun),
            seed_spot: self.seed_spot.unwrap_or(defaults.seed_spot),
            duplicate: parse_duplicate(self.duplicate.as_deref())?,
            plots: self.plots.unwrap_or(defaults.plots),
        };
        Ok(Resolved {
            objective,
            lower: self.lower.clone(),
            upper: self.upper.clone(),
            types,
            spot,
        })
    }

    pub fn scenario(&self) -> SannScenario {
        let d = SannScenario::default();
        match &self.scenario {
            None => d,
            Some(s) => SannScenario {
                x0: s.x0.clone().unwrap_or(d.x0),
                maxit: s.maxit.unwrap_or(d.maxit),
                seed: s.seed.unwrap_or(d.seed),
            },
        }
    }

    pub fn model_kind(&self) -> CliResult<ModelKind> {
        let family = match self.model.as_deref().unwrap_or("kriging") {
            "kriging" | "buildKriging" => Family::Kriging,
            "forest" | "randomForest" | "buildRandomForest" => Family::Forest,
            "rsm" | "buildRSM" => Family::Rsm,
            "stack" | "ensembleStack" | "buildEnsembleStack" => Family::Stack,
            other => {
                return Err(config_err(format!(
                    "unknown model {other:?}; expected kriging, forest, rsm or stack"
                )))
            }
        };
        let mc = self.model_control.clone().unwrap_or_default();
        check_model_keys(&mc, family)?;
        Ok(match family {
            Family::Kriging => ModelKind::Kriging(kriging_control(&mc)?),
            Family::Forest => ModelKind::Forest(forest_control(&mc)),
            Family::Rsm => ModelKind::Rsm(rsm_control(&mc)),
            Family::Stack => {
                let defaults = StackControl::default();
                let members = match &mc.members {
                    None => vec![
                        StackMember::Kriging(kriging_control(&mc)?),
                        StackMember::Forest(forest_control(&mc)),
                        StackMember::Rsm(rsm_control(&mc)),
                    ],
                    Some(names) => names
                        .iter()
                        .map(|n| match n.as_str() {
                            "kriging" | "buildKriging" => Ok(StackMember::Kriging(kriging_control(&mc)?)),
                            "forest" | "randomForest" | "buildRandomForest" => Ok(StackMember::Forest(forest_control(&mc))),
                            "rsm" | "buildRSM" => Ok(StackMember::Rsm(rsm_control(&mc))),
                            other => Err(config_err(format!("unknown stack member {other:?}"))),
                        })
                        .collect::<CliResult<_>>()?,
                };
                ModelKind::Stack(StackControl {
                    members,
                    folds: mc.folds.unwrap_or(defaults.folds),
                    ..defaults
                })
            }
        })
    }

    pub fn optimizer_kind(&self) -> CliResult<OptimizerKind> {
        let oc = self.optimizer_control.clone().unwrap_or_default();
        match self.optimizer.as_deref().unwrap_or("lhd") {
            "lhd" | "optimLHD" => {
                if oc.fd_step.is_some() || oc.gtol.is_some() {
                    return Err(config_err("fdStep and gtol apply to the local optimizer only"));
                }
                let d = LhdSearchControl::default();
                Ok(OptimizerKind::Lhd(LhdSearchControl {
                    fun_evals: oc.fun_evals.unwrap_or(d.fun_evals),
                    retries: oc.retries.unwrap_or(d.retries),
                    ..d
                }))
            }
            "lbfgsb" | "local" | "optimLBFGSB" => {
                if oc.retries.is_some() {
                    return Err(config_err("retries applies to the LHD optimizer only"));
                }
                let d = LocalSearchControl::default();
                Ok(OptimizerKind::LocalBounded(LocalSearchControl {
                    fun_evals: oc.fun_evals.unwrap_or(d.fun_evals),
                    fd_step: oc.fd_step.unwrap_or(d.fd_step),
                    gtol: oc.gtol.unwrap_or(d.gtol),
                }))
            }
            other => Err(config_err(format!("unknown optimizer {other:?}; expected lhd or lbfgsb"))),
        }
    }
}

fn parse_design(name: Option<&str>) -> CliResult<DesignKind> {
    match name.unwrap_or("lhd") {
        "lhd" | "designLHD" => Ok(DesignKind::Lhd),
        "uniform" | "designUniformRandom" => Ok(DesignKind::UniformRandom),
        other => Err(config_err(format!("unknown design {other:?}; expected lhd or uniform"))),
    }
}

fn parse_duplicate(name: Option<&str>) -> CliResult<DuplicatePolicy> {
    match name.unwrap_or("EXPLORE") {
        "EXPLORE" | "explore" => Ok(DuplicatePolicy::Explore),
        "STOP" | "stop" => Ok(DuplicatePolicy::Stop),
        other => Err(config_err(format!("unknown duplicate policy {other:?}; expected EXPLORE or STOP"))),
    }
}

fn theta_search(name: &str) -> CliResult<ThetaSearch> {
    match name {
        "lhd" | "optimLHD" => Ok(ThetaSearch::Lhd),
        "lbfgsb" | "local" | "optimLBFGSB" => Ok(ThetaSearch::LocalBounded),
        "lhdThenLocal" => Ok(ThetaSearch::LhdThenLocal),
        other => Err(config_err(format!("unknown algTheta {other:?}; expected lhd, lbfgsb or lhdThenLocal"))),
    }
}

fn check_model_keys(mc: &ModelControlConfig, family: Family) -> CliResult<()> {
    let keys: [(&str, bool, Family); 13] = [
        ("algTheta", mc.alg_theta.is_some(), Family::Kriging),
        ("useLambda", mc.use_lambda.is_some(), Family::Kriging),
        ("reinterpolate", mc.reinterpolate.is_some(), Family::Kriging),
        ("budget", mc.budget.is_some(), Family::Kriging),
        ("log10Theta", mc.log10_theta.is_some(), Family::Kriging),
        ("log10Lambda", mc.log10_lambda.is_some(), Family::Kriging),
        ("ntree", mc.ntree.is_some(), Family::Forest),
        ("mtry", mc.mtry.is_some(), Family::Forest),
        ("nodesize", mc.nodesize.is_some(), Family::Forest),
        ("bootstrap", mc.bootstrap.is_some(), Family::Forest),
        ("mainEffectsOnly", mc.main_effects_only.is_some(), Family::Rsm),
        ("members", mc.members.is_some(), Family::Stack),
        ("folds", mc.folds.is_some(), Family::Stack),
    ];
    for (name, set, owner) in keys {
        if set && owner != family && family != Family::Stack {
            return Err(config_err(format!("modelControl key {name} does not apply to the selected model")));
        }
    }
    if mc.canonical.is_some() && !matches!(family, Family::Rsm | Family::Stack) {
        return Err(config_err("modelControl key canonical does not apply to the selected model"));
    }
    Ok(())
}

fn kriging_control(mc: &ModelControlConfig) -> CliResult<KrigingControl> {
    let d = KrigingControl::default();
    Ok(KrigingControl {
        alg_theta: mc.alg_theta.as_deref().map(theta_search).transpose()?.unwrap_or(d.alg_theta),
        budget: mc.budget.or(d.budget),
        log10_theta_bounds: mc.log10_theta.map_or(d.log10_theta_bounds, |[a, b]| (a, b)),
        log10_lambda_bounds: mc.log10_lambda.map_or(d.log10_lambda_bounds, |[a, b]| (a, b)),
        use_lambda: mc.use_lambda.unwrap_or(d.use_lambda),
        reinterpolate: mc.reinterpolate.unwrap_or(d.reinterpolate),
        ..d
    })
}

fn forest_control(mc: &ModelControlConfig) -> ForestControl {
    let d = ForestControl::default();
    ForestControl {
        ntree: mc.ntree.unwrap_or(d.ntree),
        mtry: mc.mtry.or(d.mtry),
        min_node_size: mc.nodesize.unwrap_or(d.min_node_size),
        bootstrap: mc.bootstrap.unwrap_or(d.bootstrap),
        ..d
    }
}

fn rsm_control(mc: &ModelControlConfig) -> RsmControl {
    let d = RsmControl::default();
    RsmControl {
        main_effects_only: mc.main_effects_only.unwrap_or(d.main_effects_only),
        canonical: mc.canonical.unwrap_or(d.canonical),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TUNING: &str = r#"
objective = "sannSphere"
lower = [1, 1]
upper = [100, 100]
types = ["integer", "integer"]
funEvals = 50
noise = true
seedFun = 1
replicates = 2
seedSPOT = 1
design = "designLHD"
model = "buildRandomForest"
optimizer = "optimLHD"

[optimizerControl]
funEvals = 100
"#;

    #[test]
    fn tuning_config_resolves() {
        let c = RunConfig::from_toml(TUNING).unwrap();
        let r = c.resolve("sphere").unwrap();
        assert_eq!(r.objective.name(), "sannSphere");
        assert_eq!(r.spot.fun_evals, 50);
        assert_eq!(r.spot.replicates, 2);
        assert_eq!(r.spot.seed_fun, Some(1));
        assert_eq!(r.types, vec![VarType::Integer; 2]);
        assert!(matches!(r.spot.model, ModelKind::Forest(_)));
        assert_eq!(r.spot.optimizer.fun_evals(), 100);
    }

    #[test]
    fn round_trips_through_toml() {
        let c = RunConfig::from_toml(TUNING).unwrap();
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn defaults_follow_the_engine() {
        let c = RunConfig::from_toml("lower = [-1]\nupper = [1]").unwrap();
        let r = c.resolve("sphere").unwrap();
        assert_eq!(r.spot, SpotConfig { types: Some(vec![VarType::Numeric]), ..SpotConfig::default() });
    }

    #[test]
    fn rejects_bad_input() {
        assert!(RunConfig::from_toml("funEval = 3").is_err());
        let bad = [
            "lower = [0]\nupper = [1]\nmodel = \"svm\"",
            "lower = [0]\nupper = [1]\nobjective = \"rosenbrock\"",
            "lower = [0]\nupper = [1, 2]",
            "lower = [0]\nupper = [1]\ntypes = [\"real\"]",
            "lower = [0]\nupper = [1]\nmodel = \"forest\"\n[modelControl]\nalgTheta = \"lhd\"",
            "lower = [0]\nupper = [1]\n[optimizerControl]\ngtol = 1e-3",
        ];
        for text in bad {
            let err = RunConfig::from_toml(text).and_then(|c| c.resolve("sphere")).unwrap_err();
            assert_eq!(err.exit_code(), 2, "{text}: {err}");
        }
    }

    #[test]
    fn stack_members_take_member_keys() {
        let c = RunConfig::from_toml(
            "lower = [0]\nupper = [1]\nmodel = \"stack\"\n[modelControl]\nmembers = [\"rsm\", \"forest\"]\nntree = 50",
        )
        .unwrap();
        match c.model_kind().unwrap() {
            ModelKind::Stack(s) => {
                assert_eq!(s.members.len(), 2);
                assert!(matches!(&s.members[1], StackMember::Forest(f) if f.ntree == 50));
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
