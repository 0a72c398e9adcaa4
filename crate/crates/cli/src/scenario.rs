//! Scenario files: TOML documents whose polynomials use the expression grammar.

use std::collections::HashMap;
use std::path::Path;

use hocbf_core::certify::VerifyOptions;
use hocbf_core::poly::{Poly, PolyMat, PolyVec, VarSpace};
use hocbf_core::runtime::{Goal, SimOptions, DEFAULT_SLACK_WEIGHT};
use hocbf_core::synth::{StageAInput, SynthesisOptions};
use hocbf_core::system::{
    ClassKSlot, ClassKTemplate, Clif, ControlAffineSystem, EtaFormula, HocbfCandidate, RuntimeClassK,
    SemialgebraicSet,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::parser::{parse_poly_with, ParseError};

pub const UNICYCLE7: &str = include_str!("../scenarios/unicycle7.toml");
pub const DOUBLE_INTEGRATOR: &str = include_str!("../scenarios/double_integrator.toml");

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Toml(String),
    #[error("{field}: {source}")]
    Expr { field: String, source: ParseError },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    pub system: SystemConfig,
    pub sets: SetsConfig,
    #[serde(rename = "candidate")]
    pub candidates: Vec<CandidateConfig>,
    #[serde(rename = "clif", default)]
    pub clifs: Vec<ClifConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub goal: Option<GoalConfig>,
    #[serde(default)]
    pub synthesis: SynthesisConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
    #[serde(default)]
    pub runtime: RuntimeConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_conditions: Option<InitialConditions>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Definition {
    pub name: String,
    pub expr: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub states: Vec<String>,
    pub inputs: Vec<String>,
    /// Named subexpressions, usable in every later polynomial.
    #[serde(default, rename = "definition")]
    pub definitions: Vec<Definition>,
    pub f: Vec<String>,
    /// Row-major `n x m`.
    pub g: Vec<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetsConfig {
    pub state_box: Vec<[f64; 2]>,
    #[serde(default)]
    pub state_extra: Vec<String>,
    pub input_box: Vec<[f64; 2]>,
    /// Extra input generators, affine in the inputs.
    #[serde(default)]
    pub input_extra: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateConfig {
    pub name: String,
    pub b: String,
    pub r: usize,
    /// Known class-K coefficients per slot, used by `verify`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alphas: Option<Vec<Vec<f64>>>,
    /// `sqrt` or `poly` per slot at runtime.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runtime: Option<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClifConfig {
    pub name: String,
    pub v: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoalConfig {
    pub vars: Vec<String>,
    pub target: Vec<f64>,
    #[serde(default = "default_goal_tol")]
    pub tol: f64,
}

fn default_goal_tol() -> f64 {
    0.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthesisConfig {
    pub template_terms: usize,
    pub deg_u: u32,
    /// `decision` or `drift`.
    pub stage_a_input: String,
    pub coeff_cap: f64,
    /// `standard` or `widened`.
    pub eta_formula: String,
    pub clif_weights: Vec<f64>,
    pub gate_each_candidate: bool,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        let d = SynthesisOptions::default();
        SynthesisConfig {
            template_terms: d.template_terms,
            deg_u: d.deg_u,
            stage_a_input: "decision".into(),
            coeff_cap: d.coeff_cap,
            eta_formula: "standard".into(),
            clif_weights: Vec::new(),
            gate_each_candidate: d.gate_each_candidate,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    pub deg_u: u32,
    pub audit_samples: usize,
    pub certificate_audit_points: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        let d = VerifyOptions::default();
        VerifyConfig {
            deg_u: d.deg_u,
            audit_samples: d.audit_samples,
            certificate_audit_points: d.certificate_audit_points,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RuntimeConfig {
    pub dt: f64,
    pub horizon: f64,
    pub u_tol: f64,
    pub v_tol: f64,
    pub deadlock_window: usize,
    /// States whose norm is the speed in the deadlock test.
    pub speed_vars: Vec<String>,
    /// Slack weights; empty means the default for every CLIF.
    pub weights: Vec<f64>,
    /// Nominal input polynomials; empty means zero.
    pub nominal: Vec<String>,
}

impl Default for RuntimeConfig {
    fn default() -> Self {
        let d = SimOptions::default();
        RuntimeConfig {
            dt: d.dt,
            horizon: d.horizon,
            u_tol: d.u_tol,
            v_tol: d.v_tol,
            deadlock_window: d.deadlock_window,
            speed_vars: Vec::new(),
            weights: Vec::new(),
            nominal: Vec::new(),
        }
    }
}

/// Grid over some states, seeded uniform draws for the rest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConditions {
    pub grid_vars: Vec<String>,
    /// `[lo, hi, points]` per grid variable.
    pub grid: Vec<[f64; 3]>,
    #[serde(default)]
    pub random_vars: Vec<String>,
    #[serde(default)]
    pub random_ranges: Vec<[f64; 2]>,
    /// Draws per grid point before it is skipped.
    #[serde(default = "default_draws")]
    pub max_draws: usize,
}

fn default_draws() -> usize {
    200
}

/// Validated scenario with every polynomial lowered.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub system: ControlAffineSystem,
    pub state_box: Vec<(f64, f64)>,
    pub input_box: Vec<(f64, f64)>,
    pub x_set: SemialgebraicSet,
    pub u_set: SemialgebraicSet,
    pub candidates: Vec<HocbfCandidate>,
    pub runtime_modes: Vec<Vec<RuntimeClassK>>,
    pub clifs: Vec<Clif>,
    pub nominal: Option<Vec<Poly>>,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<ScenarioConfig, ScenarioError> {
        toml::from_str(text).map_err(|e| ScenarioError::Toml(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }
}

/// Built-in name or path to a TOML file.
pub fn load_scenario(name_or_path: &str) -> Result<Scenario, ScenarioError> {
    let text = match builtin(name_or_path) {
        Some(t) => t.to_string(),
        None => std::fs::read_to_string(Path::new(name_or_path)).map_err(|source| ScenarioError::Io {
            path: name_or_path.to_string(),
            source,
        })?,
    };
    let config = ScenarioConfig::from_toml(&text).map_err(|e| match e {
        ScenarioError::Toml(msg) => ScenarioError::Toml(format!("{name_or_path}: {msg}")),
        other => other,
    })?;
    Scenario::build(config)
}

pub fn builtin(name: &str) -> Option<&'static str> {
    match name {
        "unicycle7" => Some(UNICYCLE7),
        "double_integrator" => Some(DOUBLE_INTEGRATOR),
        _ => None,
    }
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid(msg.into())
}

fn boxes(field: &str, b: &[[f64; 2]], expected: usize) -> Result<Vec<(f64, f64)>, ScenarioError> {
    if b.len() != expected {
        return Err(invalid(format!("{field}: expected {expected} intervals, got {}", b.len())));
    }
    b.iter()
        .enumerate()
        .map(|(i, [lo, hi])| {
            if lo.is_finite() && hi.is_finite() && lo < hi {
                Ok((*lo, *hi))
            } else {
                Err(invalid(format!("{field}[{i}]: need finite lo < hi")))
            }
        })
        .collect()
}

fn parse_mode(s: &str) -> Option<RuntimeClassK> {
    match s {
        "sqrt" => Some(RuntimeClassK::Sqrt),
        "poly" => Some(RuntimeClassK::Poly),
        _ => None,
    }
}

impl Scenario {
    pub fn build(config: ScenarioConfig) -> Result<Scenario, ScenarioError> {
        let sc = &config.system;
        let space = VarSpace::new(&sc.states, &sc.inputs).map_err(|e| invalid(format!("system: {e}")))?;
        let n = sc.states.len();
        let m = sc.inputs.len();
        let mut defs: HashMap<String, Poly> = HashMap::new();
        let poly = |field: String, text: &str, defs: &HashMap<String, Poly>| {
            parse_poly_with(text, &space, defs).map_err(|source| ScenarioError::Expr { field, source })
        };
        for (i, d) in sc.definitions.iter().enumerate() {
            if space.index(&d.name).is_ok() || defs.contains_key(&d.name) {
                return Err(invalid(format!("system.definition[{i}]: `{}` is already defined", d.name)));
            }
            let p = poly(format!("system.definition[{i}] ({})", d.name), &d.expr, &defs)?;
            defs.insert(d.name.clone(), p);
        }
        let state_only = |field: String, p: Poly| {
            if p.depends_on_inputs() {
                Err(invalid(format!("{field}: must not depend on inputs")))
            } else {
                Ok(p)
            }
        };
        if sc.f.len() != n {
            return Err(invalid(format!("system.f: expected {n} entries, got {}", sc.f.len())));
        }
        let f = sc
            .f
            .iter()
            .enumerate()
            .map(|(i, t)| state_only(format!("system.f[{i}]"), poly(format!("system.f[{i}]"), t, &defs)?))
            .collect::<Result<Vec<_>, _>>()?;
        if sc.g.len() != n || sc.g.iter().any(|r| r.len() != m) {
            return Err(invalid(format!("system.g: expected {n} rows of {m} entries")));
        }
        let mut g = Vec::with_capacity(n * m);
        for (i, row) in sc.g.iter().enumerate() {
            for (j, t) in row.iter().enumerate() {
                let field = format!("system.g[{i}][{j}]");
                g.push(state_only(field.clone(), poly(field, t, &defs)?)?);
            }
        }
        let system = ControlAffineSystem::new(
            PolyVec::new(f),
            PolyMat::new(n, m, g).map_err(|e| invalid(format!("system.g: {e}")))?,
        )
        .map_err(|e| invalid(format!("system: {e}")))?;

        let state_box = boxes("sets.state_box", &config.sets.state_box, n)?;
        let input_box = boxes("sets.input_box", &config.sets.input_box, m)?;
        let mut h = Vec::new();
        for (i, t) in config.sets.state_extra.iter().enumerate() {
            let field = format!("sets.state_extra[{i}]");
            h.push(state_only(field.clone(), poly(field, t, &defs)?)?);
        }
        let x_set = SemialgebraicSet::from_box(&space, &state_box).with_generators(&h);
        let mut c = Vec::new();
        for (i, t) in config.sets.input_extra.iter().enumerate() {
            c.push(poly(format!("sets.input_extra[{i}]"), t, &defs)?);
        }
        let u_set = SemialgebraicSet::input_box(&space, &input_box).with_generators(&c);

        if config.candidates.is_empty() {
            return Err(invalid("at least one [[candidate]] is required"));
        }
        let mut candidates = Vec::new();
        let mut runtime_modes = Vec::new();
        for (j, cc) in config.candidates.iter().enumerate() {
            let field = format!("candidate[{j}] ({})", cc.name);
            if cc.r == 0 {
                return Err(invalid(format!("{field}: r must be at least 1")));
            }
            let b = state_only(format!("{field}.b"), poly(format!("{field}.b"), &cc.b, &defs)?)?;
            let mut cand = HocbfCandidate::new(cc.name.clone(), b, cc.r);
            if let Some(alphas) = &cc.alphas {
                if alphas.len() != cc.r {
                    return Err(invalid(format!("{field}.alphas: expected {} slots", cc.r)));
                }
                let slots = alphas
                    .iter()
                    .map(|a| ClassKTemplate::new(a.clone()).map(ClassKSlot::Poly))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|e| invalid(format!("{field}.alphas: {e}")))?;
                cand = cand.with_slots(slots);
            }
            let modes = match &cc.runtime {
                None => vec![RuntimeClassK::default(); cc.r],
                Some(v) if v.len() == cc.r => v
                    .iter()
                    .map(|s| parse_mode(s).ok_or_else(|| invalid(format!("{field}.runtime: unknown mode `{s}`"))))
                    .collect::<Result<Vec<_>, _>>()?,
                Some(_) => return Err(invalid(format!("{field}.runtime: expected {} entries", cc.r))),
            };
            candidates.push(cand);
            runtime_modes.push(modes);
        }
        let mut clifs = Vec::new();
        for (k, cc) in config.clifs.iter().enumerate() {
            let field = format!("clif[{k}] ({})", cc.name);
            clifs.push(Clif {
                name: cc.name.clone(),
                v: state_only(field.clone(), poly(field, &cc.v, &defs)?)?,
            });
        }
        if let Some(goal) = &config.goal {
            if goal.vars.len() != goal.target.len() {
                return Err(invalid("goal: vars and target differ in length"));
            }
            for v in &goal.vars {
                state_index(&config, v).ok_or_else(|| invalid(format!("goal: unknown state `{v}`")))?;
            }
        }
        for v in &config.runtime.speed_vars {
            state_index(&config, v).ok_or_else(|| invalid(format!("runtime.speed_vars: unknown state `{v}`")))?;
        }
        if !config.runtime.weights.is_empty() && config.runtime.weights.len() != clifs.len() {
            return Err(invalid("runtime.weights: one weight per CLIF"));
        }
        let nominal = if config.runtime.nominal.is_empty() {
            None
        } else {
            if config.runtime.nominal.len() != m {
                return Err(invalid(format!("runtime.nominal: expected {m} entries")));
            }
            let mut ps = Vec::new();
            for (i, t) in config.runtime.nominal.iter().enumerate() {
                let field = format!("runtime.nominal[{i}]");
                ps.push(state_only(field.clone(), poly(field, t, &defs)?)?);
            }
            Some(ps)
        };
        if let Some(ic) = &config.initial_conditions {
            if ic.grid_vars.len() != ic.grid.len() || ic.random_vars.len() != ic.random_ranges.len() {
                return Err(invalid("initial_conditions: variable and range lists differ in length"));
            }
            for v in ic.grid_vars.iter().chain(&ic.random_vars) {
                state_index(&config, v)
                    .ok_or_else(|| invalid(format!("initial_conditions: unknown state `{v}`")))?;
            }
        }
        synthesis_options_of(&config.synthesis)?;
        Ok(Scenario {
            system,
            state_box,
            input_box,
            x_set,
            u_set,
            candidates,
            runtime_modes,
            clifs,
            nominal,
            config,
        })
    }

    pub fn space(&self) -> &VarSpace {
        self.system.space()
    }

    pub fn verify_options(&self) -> VerifyOptions {
        VerifyOptions {
            deg_u: self.config.verify.deg_u,
            audit_samples: self.config.verify.audit_samples,
            certificate_audit_points: self.config.verify.certificate_audit_points,
            seed: self.config.seed,
            ..VerifyOptions::default()
        }
    }

    pub fn synthesis_options(&self) -> SynthesisOptions {
        let mut o = synthesis_options_of(&self.config.synthesis).expect("validated at build");
        o.verify = self.verify_options();
        o
    }

    pub fn sim_options(&self) -> SimOptions {
        let rc = &self.config.runtime;
        SimOptions {
            dt: rc.dt,
            horizon: rc.horizon,
            goal: self.config.goal.as_ref().map(|g| Goal {
                vars: g.vars.iter().map(|v| state_index(&self.config, v).unwrap()).collect(),
                target: g.target.clone(),
            }),
            goal_tol: self.config.goal.as_ref().map_or(default_goal_tol(), |g| g.tol),
            u_tol: rc.u_tol,
            v_tol: rc.v_tol,
            deadlock_window: rc.deadlock_window,
            speed_vars: rc.speed_vars.iter().map(|v| state_index(&self.config, v).unwrap()).collect(),
        }
    }

    pub fn slack_weights(&self) -> Vec<f64> {
        if self.config.runtime.weights.is_empty() {
            vec![DEFAULT_SLACK_WEIGHT; self.clifs.len()]
        } else {
            self.config.runtime.weights.clone()
        }
    }
}

pub fn state_index(config: &ScenarioConfig, name: &str) -> Option<usize> {
    config.system.states.iter().position(|s| s == name)
}

fn synthesis_options_of(sc: &SynthesisConfig) -> Result<SynthesisOptions, ScenarioError> {
    let stage_a_input = match sc.stage_a_input.as_str() {
        "decision" => StageAInput::DecisionInput,
        "drift" => StageAInput::DriftOnly,
        s => return Err(invalid(format!("synthesis.stage_a_input: unknown `{s}`"))),
    };
    let eta_formula = match sc.eta_formula.as_str() {
        "standard" => EtaFormula::Standard,
        "widened" => EtaFormula::Widened,
        s => return Err(invalid(format!("synthesis.eta_formula: unknown `{s}`"))),
    };
    if sc.template_terms == 0 {
        return Err(invalid("synthesis.template_terms must be positive"));
    }
    Ok(SynthesisOptions {
        template_terms: sc.template_terms,
        deg_u: sc.deg_u,
        stage_a_input,
        coeff_cap: sc.coeff_cap,
        eta_formula,
        clif_weights: sc.clif_weights.clone(),
        gate_each_candidate: sc.gate_each_candidate,
        ..SynthesisOptions::default()
    })
}
