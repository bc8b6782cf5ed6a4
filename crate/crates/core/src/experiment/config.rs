use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factor_models::{FactorFamily, FamilySpec, TailSpec};
use crate::sieve::Engine;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Theorem1,
    Theorem2,
    Theorem3a,
    Theorem3b1,
    Theorem3b2,
    Theorem3c1,
    Theorem3c2,
    LemmaRed,
    Depoisson,
    OracleEquiv,
    LimitCalibration,
}

impl Scenario {
    pub const ALL: [Scenario; 11] = [
        Scenario::Theorem1,
        Scenario::Theorem2,
        Scenario::Theorem3a,
        Scenario::Theorem3b1,
        Scenario::Theorem3b2,
        Scenario::Theorem3c1,
        Scenario::Theorem3c2,
        Scenario::LemmaRed,
        Scenario::Depoisson,
        Scenario::OracleEquiv,
        Scenario::LimitCalibration,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::Theorem1 => "theorem1",
            Scenario::Theorem2 => "theorem2",
            Scenario::Theorem3a => "theorem3a",
            Scenario::Theorem3b1 => "theorem3b1",
            Scenario::Theorem3b2 => "theorem3b2",
            Scenario::Theorem3c1 => "theorem3c1",
            Scenario::Theorem3c2 => "theorem3c2",
            Scenario::LemmaRed => "lemma_red",
            Scenario::Depoisson => "depoisson",
            Scenario::OracleEquiv => "oracle_equiv",
            Scenario::LimitCalibration => "limit_calibration",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Scenario::Theorem1 => "L_n against the geometric straddle count R(u), marginals and pairs",
            Scenario::Theorem2 => "ratio-normalized L_n against the inverse-subordinator integral",
            Scenario::Theorem3a => "centered L_n against the Gaussian process V, finite variance",
            Scenario::Theorem3b1 => "centered L_n against V, log-divergent variance",
            Scenario::Theorem3b2 => "centered L_n against the Brownian integral, beta = 0",
            Scenario::Theorem3c1 => "centered L_n against V, stable walk with light right tail",
            Scenario::Theorem3c2 => "centered L_n against the stable Levy integral",
            Scenario::LemmaRed => "Poissonized L against the renewal functional rho",
            Scenario::Depoisson => "Poissonized L against fixed-n L on one ball stream",
            Scenario::OracleEquiv => "fast allocation against the naive interval oracle",
            Scenario::LimitCalibration => "limit samplers against their closed-form laws",
        }
    }

    fn default_family(self) -> FamilySpec {
        let pareto = |alpha| TailSpec::Pareto { alpha };
        match self {
            Scenario::Theorem1 | Scenario::LemmaRed | Scenario::Depoisson | Scenario::OracleEquiv | Scenario::LimitCalibration => {
                FamilySpec::new(0.3, 0.3, pareto(0.5), pareto(0.5))
            }
            Scenario::Theorem2 => FamilySpec::new(0.05, 0.95, pareto(0.6), pareto(0.3)),
            Scenario::Theorem3a => FamilySpec::new(0.0, 0.3, TailSpec::PointMass { value: 1.0 }, pareto(0.4)),
            Scenario::Theorem3b1 => FamilySpec::new(0.3, 0.3, TailSpec::Pareto2Logvariance, pareto(0.4)),
            Scenario::Theorem3b2 => FamilySpec::new(0.3, 0.3, TailSpec::Pareto2Logvariance, TailSpec::SlowLoglogtail),
            Scenario::Theorem3c1 => FamilySpec::new(0.3, 0.3, pareto(1.5), pareto(0.6)),
            Scenario::Theorem3c2 => FamilySpec::new(0.3, 0.3, pareto(1.5), pareto(0.2)),
        }
    }

    fn default_t_grid(self) -> Vec<f64> {
        match self {
            Scenario::OracleEquiv | Scenario::LimitCalibration => Vec::new(),
            _ => vec![6.0, 9.0, 12.0],
        }
    }

    fn default_u_grid(self) -> Vec<f64> {
        match self {
            Scenario::Theorem1 | Scenario::Theorem3a => vec![1.0, 2.0],
            Scenario::LemmaRed | Scenario::Depoisson | Scenario::OracleEquiv => Vec::new(),
            _ => vec![1.0],
        }
    }

    fn default_replicates(self) -> usize {
        match self {
            Scenario::OracleEquiv => 1000,
            Scenario::LemmaRed | Scenario::Depoisson => 10_000,
            Scenario::LimitCalibration => 0,
            _ => 20_000,
        }
    }

    fn default_limit_samples(self) -> usize {
        match self {
            Scenario::Theorem1 => 50_000,
            Scenario::Theorem2 | Scenario::LimitCalibration => 100_000,
            Scenario::Theorem3b2 | Scenario::Theorem3c2 => 20_000,
            Scenario::Theorem3a | Scenario::Theorem3b1 | Scenario::Theorem3c1 => 10_000,
            _ => 0,
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A fully resolved, validated scenario description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: Scenario,
    pub family: FamilySpec,
    /// log-scale horizons; the ball count is `[e^(u t)]`
    pub t_grid: Vec<f64>,
    pub u_grid: Vec<f64>,
    pub replicates: usize,
    pub limit_samples: usize,
    pub master_seed: u64,
    pub output: Option<PathBuf>,
    pub workers: Option<usize>,
    pub engine: Engine,
    /// pairs with `u t` above this are skipped
    pub max_log_n: f64,
    /// truncation `delta` of the point measure, relative to `u`
    pub delta_factor: f64,
    /// subordinator grid step, relative to the expected crossing time
    pub step_factor: f64,
    /// Levy integral grid steps per unit of `u`
    pub levy_steps: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    scenario: Scenario,
    family: Option<FamilySpec>,
    t_grid: Option<Vec<f64>>,
    u_grid: Option<Vec<f64>>,
    replicates: Option<usize>,
    limit_samples: Option<usize>,
    master_seed: Option<u64>,
    output: Option<PathBuf>,
    workers: Option<usize>,
    engine: Option<Engine>,
    max_log_n: Option<f64>,
    delta_factor: Option<f64>,
    step_factor: Option<f64>,
    levy_steps: Option<f64>,
}

pub const DEFAULT_MASTER_SEED: u64 = 20_240_601;

impl ScenarioConfig {
    /// The scenario with every field at its default.
    pub fn defaults(scenario: Scenario) -> Self {
        ScenarioConfig {
            scenario,
            family: scenario.default_family(),
            t_grid: scenario.default_t_grid(),
            u_grid: scenario.default_u_grid(),
            replicates: scenario.default_replicates(),
            limit_samples: scenario.default_limit_samples(),
            master_seed: DEFAULT_MASTER_SEED,
            output: None,
            workers: None,
            engine: Engine::default(),
            max_log_n: 13.0,
            delta_factor: crate::limits::prm::DEFAULT_DELTA_FACTOR,
            step_factor: crate::limits::subordinator::DEFAULT_STEP_FACTOR,
            levy_steps: crate::limits::levy::DEFAULT_STEPS,
        }
    }

    /// `(t, u)` pairs that are simulated, in grid order.
    pub fn grid_points(&self) -> Vec<(f64, f64)> {
        self.t_grid
            .iter()
            .flat_map(|&t| self.u_grid.iter().map(move |&u| (t, u)))
            .filter(|&(t, u)| u * t <= self.max_log_n + 1e-12)
            .collect()
    }

    pub fn factor_family(&self) -> Result<FactorFamily> {
        FactorFamily::new(self.family)
    }

    pub fn validate(&self) -> Result<()> {
        check_grid("t_grid", &self.t_grid)?;
        check_grid("u_grid", &self.u_grid)?;
        let needs_replicates = !matches!(self.scenario, Scenario::LimitCalibration);
        if needs_replicates && self.replicates == 0 {
            return Err(Error::validation("replicates", "must be at least 1"));
        }
        if self.workers == Some(0) {
            return Err(Error::validation("workers", "must be at least 1"));
        }
        for (path, v) in [
            ("max_log_n", self.max_log_n),
            ("delta_factor", self.delta_factor),
            ("step_factor", self.step_factor),
            ("levy_steps", self.levy_steps),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::validation(path, format!("must be positive and finite, got {v}")));
            }
        }
        if self.max_log_n > (crate::sieve::DEFAULT_MAX_BALLS as f64).ln() {
            return Err(Error::validation("max_log_n", "ball counts would exceed the engine capacity"));
        }
        let family = FactorFamily::new(self.family).map_err(|e| Error::validation("family", e.to_string()))?;
        self.check_hypotheses(&family)?;
        if matches!(self.scenario, Scenario::Theorem3b2 | Scenario::Theorem3c2) {
            for &t in &self.t_grid {
                family
                    .norming_c(t)
                    .map_err(|e| Error::validation("t_grid", format!("no norming constant at t = {t}: {e}")))?;
            }
        }
        Ok(())
    }

    fn check_hypotheses(&self, family: &FactorFamily) -> Result<()> {
        let spec = self.family;
        let index = |t: &TailSpec| t.index();
        let need = |cond: bool, path: &str, msg: &str| {
            if cond {
                Ok(())
            } else {
                Err(Error::validation(path, msg))
            }
        };
        let left_alpha = || match spec.left {
            TailSpec::Pareto { alpha } => Ok(alpha),
            _ => Err(Error::validation("family.left.kind", "must be pareto")),
        };
        match self.scenario {
            Scenario::Theorem1 => {
                let a = left_alpha()?;
                need(a > 0.0 && a < 1.0, "family.left.alpha", "alpha must be in (0,1)")?;
                need(spec.right == spec.left, "family.right", "right tail must equal the left tail")?;
                need(spec.p > 0.0, "family.p", "must be positive")?;
                need(spec.q > 0.0, "family.q", "must be positive")
            }
            Scenario::Theorem2 => {
                let a = left_alpha()?;
                need(a > 0.0 && a < 1.0, "family.left.alpha", "alpha must be in (0,1)")?;
                let b = match spec.right {
                    TailSpec::Pareto { alpha } => alpha,
                    _ => return Err(Error::validation("family.right.kind", "must be pareto")),
                };
                need(b < a, "family.right.alpha", "beta must be below alpha (the alpha = beta subcase is not simulated)")?;
                need(spec.p > 0.0, "family.p", "must be positive")?;
                need(spec.q > 0.0, "family.q", "must be positive")
            }
            Scenario::Theorem3a => {
                need(family.variance_log_factor().is_finite(), "family.left", "Var(log W) must be finite")?;
                need(spec.q > 0.0, "family.q", "must be positive")?;
                need(index(&spec.right) < 1.0, "family.right", "right tail index must be in [0, 1)")
            }
            Scenario::Theorem3b1 | Scenario::Theorem3b2 => {
                need(spec.left == TailSpec::Pareto2Logvariance, "family.left.kind", "must be pareto2_logvariance")?;
                need(spec.p > 0.0, "family.p", "must be positive")?;
                need(spec.q > 0.0, "family.q", "must be positive")?;
                if self.scenario == Scenario::Theorem3b1 {
                    let b = index(&spec.right);
                    need(b > 0.0 && b < 1.0, "family.right", "right tail index must be in (0, 1)")
                } else {
                    need(spec.right == TailSpec::SlowLoglogtail, "family.right.kind", "must be slow_loglogtail")
                }
            }
            Scenario::Theorem3c1 | Scenario::Theorem3c2 => {
                let a = left_alpha()?;
                need(a > 1.0 && a < 2.0, "family.left.alpha", "alpha must be in (1,2)")?;
                need(spec.p > 0.0, "family.p", "must be positive")?;
                need(spec.q > 0.0, "family.q", "must be positive")?;
                let b = index(&spec.right);
                let edge = 2.0 / a - 1.0;
                if self.scenario == Scenario::Theorem3c1 {
                    need(b > edge && b < 1.0, "family.right", "right tail index must be in (2/alpha - 1, 1)")
                } else {
                    // a pure power tail at the edge gives a finite nonzero limit, which neither case covers
                    need(b < edge, "family.right", "right tail index must be below 2/alpha - 1")
                }
            }
            Scenario::LemmaRed | Scenario::Depoisson => {
                need(!self.t_grid.is_empty(), "t_grid", "must not be empty")?;
                need(
                    self.t_grid.iter().all(|&t| t <= self.max_log_n),
                    "t_grid",
                    "Poisson intensity e^t exceeds e^max_log_n",
                )
            }
            Scenario::OracleEquiv | Scenario::LimitCalibration => Ok(()),
        }
    }
}

fn check_grid(path: &str, grid: &[f64]) -> Result<()> {
    if grid.iter().any(|&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::validation(path, "entries must be positive and finite"));
    }
    if grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::validation(path, "must be strictly ascending"));
    }
    Ok(())
}

/// Parse a JSON config, fill scenario defaults, and validate.
pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let raw: RawConfig = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let d = ScenarioConfig::defaults(raw.scenario);
    let config = ScenarioConfig {
        scenario: raw.scenario,
        family: raw.family.unwrap_or(d.family),
        t_grid: raw.t_grid.unwrap_or(d.t_grid),
        u_grid: raw.u_grid.unwrap_or(d.u_grid),
        replicates: raw.replicates.unwrap_or(d.replicates),
        limit_samples: raw.limit_samples.unwrap_or(d.limit_samples),
        master_seed: raw.master_seed.unwrap_or(d.master_seed),
        output: raw.output,
        workers: raw.workers,
        engine: raw.engine.unwrap_or(d.engine),
        max_log_n: raw.max_log_n.unwrap_or(d.max_log_n),
        delta_factor: raw.delta_factor.unwrap_or(d.delta_factor),
        step_factor: raw.step_factor.unwrap_or(d.step_factor),
        levy_steps: raw.levy_steps.unwrap_or(d.levy_steps),
    };
    config.validate()?;
    Ok(config)
}
