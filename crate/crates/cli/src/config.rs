//! Run configuration: a JSON document mirrored by `schema/run_config.schema.json`.

use homog_core::coeffs::{CoefficientField, FamilyTag, FineScaleProblem, LayerVariable, Profile};
use homog_core::finescale::{FineScaleOptions, TimeWindow};
use homog_core::mesh::BoxDomain;
use homog_core::regime::ScaleExponents;
use homog_core::tensor::Tensor;
use homog_core::verify::{CellFactor, MacroFactor, OscillatingTest};
use homog_core::NumericsConfig;
use num_rational::Rational64;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

use crate::failure::Failure;

fn invalid(message: impl Into<String>) -> Failure {
    Failure::validation("invalid_config", message)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Spatial dimension; must agree with the coefficient.
    pub dimension: usize,
    pub coefficient: CoefficientConfig,
    pub exponents: ExponentConfig,
    #[serde(default)]
    pub numerics: NumericsConfig,
    #[serde(default)]
    pub problem: ProblemConfig,
    #[serde(default, rename = "macro")]
    pub macro_mesh: MacroConfig,
    #[serde(default)]
    pub fine: FineConfig,
    #[serde(default)]
    pub diagnostics: DiagnosticsConfig,
    /// Used when `--out` is not given.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum CoefficientConfig {
    Constant {
        tensor: Tensor,
    },
    SeparableProduct {
        base: Tensor,
        #[serde(default = "one")]
        y1: Profile,
        #[serde(default = "one")]
        y2: Profile,
        #[serde(default = "one")]
        s1: Profile,
        #[serde(default = "one")]
        s2: Profile,
    },
    Trigonometric {
        offset: f64,
        amplitudes: [f64; 4],
    },
    Layered {
        variable: LayerVariable,
        #[serde(default)]
        axis: usize,
        breaks: Vec<f64>,
        values: Vec<f64>,
    },
    CustomExpression {
        entries: Vec<Vec<String>>,
        coercivity: f64,
        entry_bound: f64,
    },
}

fn one() -> Profile {
    Profile::One
}

/// An exponent as a decimal number or an exact rational string like "7/2".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Exponent {
    Number(f64),
    Exact(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExponentConfig {
    pub p: Exponent,
    pub q: Exponent,
    pub r: Exponent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    /// Expression over x[i] and t.
    pub source: String,
    /// Expression over x[i].
    pub initial: String,
    pub domain: Option<BoxDomain>,
    pub horizon: f64,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        ProblemConfig { source: "1".into(), initial: "0".into(), domain: None, horizon: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MacroConfig {
    /// Nodes per axis including the boundary.
    pub nodes: usize,
    /// Number of uniform time samples on [0, T] for `macro`.
    pub time_samples: usize,
    pub tol: f64,
}

impl Default for MacroConfig {
    fn default() -> Self {
        MacroConfig { nodes: 129, time_samples: 11, tol: 1e-12 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FineConfig {
    pub epsilons: Vec<f64>,
    pub options: FineScaleOptions,
    /// Error window; the last 90% of (0,T) when absent.
    pub window: Option<TimeWindow>,
    /// Write every k-th time slice to the solution CSV (the last is always written).
    pub csv_stride: usize,
}

impl Default for FineConfig {
    fn default() -> Self {
        FineConfig { epsilons: vec![0.5, 1.0 / 3.0, 0.25, 0.2], options: FineScaleOptions::default(), window: None, csv_stride: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionConfig {
    pub v: MacroFactor,
    pub c1: MacroFactor,
    pub c2: CellFactor,
    pub c3: CellFactor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsConfig {
    pub pairing_tests: Vec<OscillatingTest>,
    pub condition_tests: Vec<ConditionConfig>,
    /// Very weak probes; v₂ must have zero mean and v₃ must be one.
    pub probes: Vec<OscillatingTest>,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        let bubble = MacroFactor::Bubble { power: 2 };
        let trig = [CellFactor::Sin { k: 1, axis: 0 }, CellFactor::Cos { k: 1, axis: 0 }];
        let condition_tests =
            trig.iter().flat_map(|&c2| trig.iter().map(move |&c3| ConditionConfig { v: bubble, c1: bubble, c2, c3 })).collect();
        DiagnosticsConfig { pairing_tests: vec![OscillatingTest::macro_only(bubble, bubble)], condition_tests, probes: vec![] }
    }
}

fn parse_exponent(name: &str, e: &Exponent) -> Result<(f64, Option<Rational64>), Failure> {
    match e {
        Exponent::Number(v) => {
            // integers are exact
            if v.fract() == 0.0 && v.abs() < 1e15 {
                Ok((*v, Some(Rational64::from_integer(*v as i64))))
            } else {
                Ok((*v, None))
            }
        }
        Exponent::Exact(s) => {
            let r: Rational64 = s
                .trim()
                .parse()
                .map_err(|_| Failure::validation("invalid_exponents", format!("exponent {name}: cannot parse {s:?} as a rational")))?;
            Ok((*r.numer() as f64 / *r.denom() as f64, Some(r)))
        }
    }
}

impl ExponentConfig {
    pub fn to_exponents(&self) -> Result<ScaleExponents, Failure> {
        let (p, ep) = parse_exponent("p", &self.p)?;
        let (q, eq) = parse_exponent("q", &self.q)?;
        let (r, er) = parse_exponent("r", &self.r)?;
        let e = match (ep, eq, er) {
            (Some(a), Some(b), Some(c)) => ScaleExponents::exact(a, b, c)?,
            _ => ScaleExponents::new(p, q, r)?,
        };
        Ok(e)
    }
}

impl CoefficientConfig {
    pub fn build(&self, dim: usize) -> Result<CoefficientField, Failure> {
        let f = match self {
            CoefficientConfig::Constant { tensor } => CoefficientField::constant(*tensor)?,
            CoefficientConfig::SeparableProduct { base, y1, y2, s1, s2 } => {
                CoefficientField::separable(*base, y1.clone(), y2.clone(), s1.clone(), s2.clone())?.with_family(FamilyTag::SeparableProduct)
            }
            CoefficientConfig::Trigonometric { offset, amplitudes } => CoefficientField::trigonometric(dim, *offset, *amplitudes)?,
            CoefficientConfig::Layered { variable, axis, breaks, values } => {
                CoefficientField::layered(dim, *variable, *axis, breaks.clone(), values.clone())?
            }
            CoefficientConfig::CustomExpression { entries, coercivity, entry_bound } => {
                CoefficientField::from_expressions(entries, *coercivity, *entry_bound)?
            }
        };
        Ok(f)
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, Failure> {
        serde_json::from_str(text).map_err(|e| invalid(e.to_string()))
    }

    /// Checks everything that does not require a numerical solve.
    pub fn validate(&self) -> Result<(), Failure> {
        if !(1..=2).contains(&self.dimension) {
            return Err(invalid("dimension must be 1 or 2"));
        }
        if let Some(d) = &self.problem.domain {
            if d.dim() != self.dimension || !d.is_valid() {
                return Err(invalid("problem.domain must be a valid box of the configured dimension"));
            }
        }
        if !(self.problem.horizon > 0.0 && self.problem.horizon.is_finite()) {
            return Err(invalid("problem.horizon must be positive"));
        }
        let tols = [
            ("numerics.cell.linear_tol", self.numerics.cell.linear_tol),
            ("numerics.cell.periodic_tol", self.numerics.cell.periodic_tol),
            ("macro.tol", self.macro_mesh.tol),
            ("fine.options.tol", self.fine.options.tol),
        ];
        for (name, t) in tols {
            if !(t > 0.0 && t.is_finite()) {
                return Err(invalid(format!("{name} must be positive")));
            }
        }
        if self.numerics.boundary_tolerance < 0.0 {
            return Err(invalid("numerics.boundary_tolerance must be non-negative"));
        }
        let eps = &self.fine.epsilons;
        if eps.iter().any(|&e| !(e > 0.0 && e < 1.0)) || eps.windows(2).any(|w| w[1] >= w[0]) {
            return Err(invalid("fine.epsilons must lie in (0,1) and strictly decrease"));
        }
        if self.macro_mesh.nodes < 3 || self.macro_mesh.time_samples == 0 {
            return Err(invalid("macro.nodes must be at least 3 and macro.time_samples positive"));
        }
        Ok(())
    }

    pub fn field(&self) -> Result<CoefficientField, Failure> {
        let f = self.coefficient.build(self.dimension)?;
        if f.dim() != self.dimension {
            return Err(invalid(format!("coefficient has dimension {} but dimension {} is configured", f.dim(), self.dimension)));
        }
        Ok(f)
    }

    pub fn domain(&self) -> BoxDomain {
        self.problem.domain.clone().unwrap_or_else(|| BoxDomain::unit(self.dimension))
    }

    pub fn fine_problem(&self) -> Result<FineScaleProblem, Failure> {
        let field = self.field()?;
        let exps = self.exponents.to_exponents()?;
        let source = homog_core::coeffs::source_from_expr(&self.problem.source, self.dimension)
            .map_err(homog_core::CoeffError::from)?;
        let initial = homog_core::coeffs::initial_from_expr(&self.problem.initial, self.dimension)
            .map_err(homog_core::CoeffError::from)?;
        FineScaleProblem::new(field, exps, source, initial, self.domain(), self.problem.horizon).map_err(|e| invalid(e.to_string()))
    }
}
