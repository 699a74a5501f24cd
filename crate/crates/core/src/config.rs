//! TOML scenario files and their normalization into [`Scenario`].
//!
//! ```toml
//! [scenario]
//! name = "bump"
//! n = 3
//! t_end = 1.0
//! [scenario.profile]
//! kind = "bump"
//! amplitude = 0.05
//! width = 1.0
//! center = 0.0
//!
//! [grid]
//! r_inner = 0.0
//! r_outer = 50.0
//! nodes = 200
//! spacing = "geometric"
//! ratio = 1.02
//!
//! [solver]
//! dt = 0.01
//! ```
//!
//! `[solver.boundary]` defaults to the initial data at both ends,
//! `[monitors]` and `[output]` are optional.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::{Boundary, Form, Scheme, Snapshot, SolverConfig};
use crate::grid::RadialGrid;
use crate::maxprinciple::{
    verify_nonpositivity, volume_growth_check, Coefficient, CoefficientBounds, MaxPrincipleReport,
    ParabolicCoefficients, VolumeGrowthReport,
};
use crate::scenario::{GridSpec, MonitorSpec, OutputSpec, Scenario, ScenarioKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSection {
    pub name: String,
    pub n: usize,
    pub t_end: f64,
    pub profile: ScenarioKind,
}

/// `[solver]` as written; absent entries take the solver defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub form: Option<Form>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<Scheme>,
    pub dt: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cfl_safety: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub newton_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub newton_max_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boundary: Option<Boundary>,
}

/// The file form of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scenario: ScenarioSection,
    pub grid: GridSpec,
    pub solver: SolverSection,
    #[serde(default)]
    pub monitors: MonitorSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(vec![e.to_string().trim_end().to_string()]))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(vec![format!("cannot serialize configuration: {e}")]))
    }

    /// Validates everything and fills in defaults. All problems are reported
    /// together.
    pub fn normalize(self) -> Result<Scenario> {
        let mut solver = SolverConfig::new(self.solver.dt, placeholder_boundary());
        if let Some(f) = self.solver.form {
            solver.form = f;
        }
        if let Some(s) = self.solver.scheme {
            solver.scheme = s;
        }
        if let Some(x) = self.solver.cfl_safety {
            solver.cfl_safety = x;
        }
        if let Some(x) = self.solver.newton_tol {
            solver.newton_tol = x;
        }
        if let Some(x) = self.solver.newton_max_iter {
            solver.newton_max_iter = x;
        }
        let mut scenario = Scenario {
            name: self.scenario.name,
            n: self.scenario.n,
            kind: self.scenario.profile,
            t_end: self.scenario.t_end,
            grid: self.grid,
            solver,
            monitors: self.monitors,
            output: self.output,
        };
        match self.solver.boundary {
            Some(b) => scenario.solver.boundary = b,
            None => {
                // derive from the sampled v0 if the rest is sound enough;
                // positivity is reported by validation
                use crate::flow::{InnerBoundary, OuterBoundary};
                let sampled = scenario
                    .grid
                    .build(scenario.n)
                    .and_then(|g| Ok((scenario.kind.initial_values(&g)?, g.has_origin())));
                if let Ok((v, origin)) = sampled {
                    scenario.solver.boundary = Boundary {
                        inner: if origin {
                            InnerBoundary::OriginRegular
                        } else {
                            InnerBoundary::Dirichlet(v[0])
                        },
                        outer: OuterBoundary::Dirichlet(v[v.len() - 1]),
                    };
                }
            }
        }
        scenario.validate()?;
        Ok(scenario)
    }
}

fn placeholder_boundary() -> Boundary {
    use crate::flow::{InnerBoundary, OuterBoundary};
    Boundary {
        inner: InnerBoundary::OriginRegular,
        outer: OuterBoundary::Dirichlet(1.0),
    }
}

impl From<&Scenario> for ScenarioConfig {
    /// Fully explicit file form; parsing it back gives the same scenario.
    fn from(s: &Scenario) -> Self {
        ScenarioConfig {
            scenario: ScenarioSection {
                name: s.name.clone(),
                n: s.n,
                t_end: s.t_end,
                profile: s.kind.clone(),
            },
            grid: s.grid.clone(),
            solver: SolverSection {
                form: Some(s.solver.form),
                scheme: Some(s.solver.scheme),
                dt: s.solver.dt,
                cfl_safety: Some(s.solver.cfl_safety),
                newton_tol: Some(s.solver.newton_tol),
                newton_max_iter: Some(s.solver.newton_max_iter),
                boundary: Some(s.solver.boundary),
            },
            monitors: s.monitors.clone(),
            output: s.output.clone(),
        }
    }
}

pub fn parse_scenario(text: &str) -> Result<Scenario> {
    ScenarioConfig::from_toml(text)?.normalize()
}

/// Reads, parses and validates a scenario file.
pub fn parse_config(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)?;
    parse_scenario(&text).map_err(|e| match e {
        Error::Config(list) => Error::Config(list.into_iter().map(|m| format!("{}: {m}", path.display())).collect()),
        e => e,
    })
}

/// Canonical TOML of a normalized scenario.
pub fn scenario_to_toml(s: &Scenario) -> Result<String> {
    ScenarioConfig::from(s).to_toml()
}

/// A coefficient of the verifier: a constant or
/// `mean + amplitude sin(wavenumber r + frequency t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CoefficientSpec {
    Constant(f64),
    Oscillating {
        mean: f64,
        amplitude: f64,
        #[serde(default)]
        wavenumber: f64,
        #[serde(default)]
        frequency: f64,
    },
}

impl CoefficientSpec {
    pub fn build(self) -> Coefficient {
        match self {
            CoefficientSpec::Constant(c) => Coefficient::constant(c),
            CoefficientSpec::Oscillating {
                mean,
                amplitude,
                wavenumber,
                frequency,
            } => Coefficient::new(move |r, t| mean + amplitude * (wavenumber * r + frequency * t).sin()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientSection {
    pub m: CoefficientSpec,
    pub a: CoefficientSpec,
    pub b: CoefficientSpec,
    pub c: CoefficientSpec,
}

/// Nonpositive initial data for the verifier, with `s = (r - r_inner)/(r_outer - r_inner)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    /// `-amplitude sin(pi s)`.
    Sine { amplitude: f64 },
    /// `-amplitude cos(pi s / 2)`, flat at the origin.
    HalfCosine { amplitude: f64 },
    /// Piecewise-linear table.
    Table { r: Vec<f64>, v: Vec<f64> },
}

impl InitialSpec {
    pub fn sample(&self, grid: &RadialGrid) -> Result<Vec<f64>> {
        use std::f64::consts::PI;
        let (lo, hi) = (grid.r_inner(), grid.r_outer());
        let s = |r: f64| (r - lo) / (hi - lo);
        match self {
            InitialSpec::Sine { amplitude } => Ok(grid.sample(|r| -amplitude * (PI * s(r)).sin())),
            InitialSpec::HalfCosine { amplitude } => Ok(grid.sample(|r| -amplitude * (0.5 * PI * s(r)).cos())),
            InitialSpec::Table { r, v } => {
                if r.len() != v.len() || r.len() < 2 || r.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::Config(vec![
                        "initial table needs matching, strictly increasing r and v columns".into(),
                    ]));
                }
                if lo < r[0] || hi > r[r.len() - 1] {
                    return Err(Error::Config(vec![format!(
                        "initial table covers [{}, {}] but the grid spans [{lo}, {hi}]",
                        r[0],
                        r[r.len() - 1]
                    )]));
                }
                Ok(grid.sample(|x| {
                    let k = r.partition_point(|&t| t <= x).clamp(1, r.len() - 1);
                    let w = (x - r[k - 1]) / (r[k] - r[k - 1]);
                    v[k - 1] + w * (v[k] - v[k - 1])
                }))
            }
        }
    }
}

/// `maxprinciple verify` input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaxPrincipleConfig {
    pub n: usize,
    #[serde(rename = "T")]
    pub t_end: f64,
    pub dt: f64,
    pub grid: GridSpec,
    pub coefficients: CoefficientSection,
    pub bounds: CoefficientBounds,
    pub initial: InitialSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxPrincipleOutcome {
    pub report: MaxPrincipleReport,
    /// Growth check of the flat background the verifier runs on.
    pub volume_growth: VolumeGrowthReport,
}

impl MaxPrincipleConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(vec![e.to_string().trim_end().to_string()]))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn coefficients(&self) -> ParabolicCoefficients {
        ParabolicCoefficients {
            m: self.coefficients.m.build(),
            a: self.coefficients.a.build(),
            b: self.coefficients.b.build(),
            c: self.coefficients.c.build(),
            bounds: self.bounds,
        }
    }

    pub fn run(&self) -> Result<MaxPrincipleOutcome> {
        let p = self.grid.problems();
        if !p.is_empty() {
            return Err(Error::Config(p));
        }
        let grid = self.grid.build(self.n)?;
        let v0 = self.initial.sample(&grid)?;
        let report = verify_nonpositivity(&self.coefficients(), &v0, self.t_end, &grid, self.dt)?;
        let flat = Snapshot {
            t: 0.0,
            values: vec![1.0; grid.len()],
        };
        let volume_growth = volume_growth_check(&grid, &[flat], self.bounds.k)?;
        Ok(MaxPrincipleOutcome { report, volume_growth })
    }
}
