use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::grouping::Strategy;
use crate::random_field::{AHat, FieldSpec, TensorForm};

/// Test problem driven by the adaptive loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Problem {
    AnalyticG1,
    AnalyticG2,
    PdeTest1,
    PdeTest2,
    PdeIsotropicBaseline,
}

impl Problem {
    pub fn is_pde(self) -> bool {
        matches!(
            self,
            Problem::PdeTest1 | Problem::PdeTest2 | Problem::PdeIsotropicBaseline
        )
    }

    pub fn default_tau(self) -> f64 {
        if self.is_pde() {
            1e-3
        } else {
            5e-4
        }
    }

    pub fn default_initial_level(self) -> u32 {
        if self.is_pde() {
            1
        } else {
            2
        }
    }

    /// Box the sample coordinates live in.
    pub fn domain(self, dims: usize) -> Vec<[f64; 2]> {
        match self {
            Problem::AnalyticG1 => vec![[-2.0, 2.0]; dims],
            Problem::AnalyticG2 => vec![[0.0, 1.0]; dims],
            _ => vec![[-1.0, 1.0]; dims],
        }
    }
}

/// Parameters of the analytic QoIs and the synthetic iteration count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyticParams {
    pub a1: f64,
    pub a2: f64,
    pub u1: f64,
    pub u2: f64,
    pub r1: f64,
    pub r2: f64,
}

impl Default for AnalyticParams {
    fn default() -> Self {
        AnalyticParams {
            a1: 2.0,
            a2: 2.0,
            u1: 0.0,
            u2: 0.0,
            r1: 0.25,
            r2: 0.65,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub tol: f64,
    pub maxit: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-7,
            maxit: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quadrature {
    #[default]
    Gauss2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshConfig {
    pub mesh_cells: usize,
    pub quadrature: Quadrature,
}

impl Default for MeshConfig {
    fn default() -> Self {
        MeshConfig {
            mesh_cells: 16,
            quadrature: Quadrature::Gauss2,
        }
    }
}

/// Accepts `4` or `[4, 8]`.
fn one_or_many<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<usize>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        One(usize),
        Many(Vec<usize>),
    }
    Ok(match OneOrMany::deserialize(d)? {
        OneOrMany::One(s) => vec![s],
        OneOrMany::Many(v) => v,
    })
}

/// One adaptive run. Optional fields take problem-dependent defaults in
/// [`RunConfig::resolve`]; reports always echo the resolved form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: Problem,
    #[serde(rename = "N")]
    pub dims: usize,
    /// Ensemble sizes to account for; the first one is executed.
    #[serde(rename = "S", deserialize_with = "one_or_many")]
    pub ensemble_sizes: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    pub n_max: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_level: Option<u32>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub strategies: Vec<Strategy>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<FieldSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mesh: Option<MeshConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analytic: Option<AnalyticParams>,
    /// Write per-ensemble residual histories next to the reports.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub residual_history: bool,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Minimal config with every optional block defaulted.
    pub fn new(problem: Problem, dims: usize, ensemble_sizes: Vec<usize>, n_max: usize) -> Self {
        RunConfig {
            problem,
            dims,
            ensemble_sizes,
            tau: None,
            n_max,
            initial_level: None,
            strategies: Vec::new(),
            solver: SolverConfig::default(),
            field: None,
            mesh: None,
            analytic: None,
            residual_history: false,
        }
    }

    pub fn tau(&self) -> f64 {
        self.tau.unwrap_or_else(|| self.problem.default_tau())
    }

    pub fn initial_level(&self) -> u32 {
        self.initial_level
            .unwrap_or_else(|| self.problem.default_initial_level())
    }

    pub fn tensor_form(&self) -> TensorForm {
        match self.problem {
            Problem::PdeIsotropicBaseline => TensorForm::IsotropicHomogeneous,
            _ => TensorForm::Anisotropic,
        }
    }

    /// Fill defaults and validate.
    pub fn resolve(mut self) -> Result<Self> {
        let p = self.problem;
        if self.dims == 0 {
            return Err(Error::Config("N must be at least 1".into()));
        }
        if self.ensemble_sizes.is_empty() || self.ensemble_sizes.contains(&0) {
            return Err(Error::Config(
                "S must list at least one positive ensemble size".into(),
            ));
        }
        let mut seen = self.ensemble_sizes.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.ensemble_sizes.len() {
            return Err(Error::Config("S lists an ensemble size twice".into()));
        }
        self.tau = Some(self.tau());
        if !(self.tau() > 0.0) {
            return Err(Error::Config(format!(
                "tau must be positive, got {}",
                self.tau()
            )));
        }
        self.initial_level = Some(self.initial_level());
        if !(self.solver.tol > 0.0 && self.solver.tol < 1.0) || self.solver.maxit == 0 {
            return Err(Error::Config(
                "solver needs 0 < tol < 1 and maxit >= 1".into(),
            ));
        }
        if self.strategies.is_empty() {
            self.strategies = if p.is_pde() {
                Strategy::ALL.to_vec()
            } else {
                vec![Strategy::Nat, Strategy::Sur, Strategy::Its]
            };
        }
        let mut uniq = self.strategies.clone();
        uniq.sort_unstable();
        uniq.dedup();
        if uniq.len() != self.strategies.len() {
            return Err(Error::Config("strategies list a tag twice".into()));
        }

        if p.is_pde() {
            let mut field = self.field.take().unwrap_or_default();
            match (p, field.a_hat) {
                (Problem::PdeTest2, Some(AHat::Constant { .. })) => {
                    return Err(Error::Config("pde_test2 needs a_hat mode \"test2\"".into()));
                }
                (Problem::PdeTest2, _) => field.a_hat = Some(AHat::Test2),
                (_, None) => field.a_hat = Some(AHat::Constant { value: 1.0 }),
                (_, Some(AHat::Test2)) => {
                    return Err(Error::Config(format!(
                        "a_hat mode \"test2\" is only valid for pde_test2, not {p:?}"
                    )));
                }
                _ => {}
            }
            match field.n_modes {
                Some(n) if n != self.dims => {
                    return Err(Error::Config(format!(
                        "field N = {n} differs from run N = {}",
                        self.dims
                    )));
                }
                _ => field.n_modes = Some(self.dims),
            }
            self.field = Some(field);
            let mesh = self.mesh.take().unwrap_or_default();
            if mesh.mesh_cells < 2 {
                return Err(Error::Config("mesh_cells must be at least 2".into()));
            }
            self.mesh = Some(mesh);
            if self.analytic.is_some() {
                return Err(Error::Config("PDE problems take no analytic block".into()));
            }
        } else {
            if self.dims != 2 {
                return Err(Error::Config(format!(
                    "analytic problems are 2-dimensional, got N = {}",
                    self.dims
                )));
            }
            if self.field.is_some() || self.mesh.is_some() {
                return Err(Error::Config(
                    "analytic problems take no field or mesh block".into(),
                ));
            }
            if self.strategies.contains(&Strategy::Par) {
                return Err(Error::Config("strategy \"par\" needs a PDE problem".into()));
            }
            if self.residual_history {
                return Err(Error::Config(
                    "analytic problems have no solver residuals".into(),
                ));
            }
            self.analytic = Some(self.analytic.take().unwrap_or_default());
        }
        Ok(self)
    }
}
