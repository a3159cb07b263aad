//! Oscillating coefficient fields a(y₁, y₂, s₁, s₂), periodic in every
//! argument, and the fine-scale problem data.

use crate::expr::{Bindings, Expr, ExprError, VarContext};
use crate::mesh::BoxDomain;
use crate::regime::ScaleExponents;
use crate::tensor::{Tensor, MAX_DIM};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CoeffError {
    #[error("non-finite argument {name} = {value}")]
    NonFiniteArgument { name: &'static str, value: f64 },
    #[error("coefficient evaluation produced a non-finite value at y1={y1:?}, y2={y2:?}, s1={s1}, s2={s2}")]
    NonFiniteValue { y1: Vec<f64>, y2: Vec<f64>, s1: f64, s2: f64 },
    #[error("invalid coefficient definition: {0}")]
    Invalid(String),
    #[error(transparent)]
    Expression(#[from] ExprError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyTag {
    Constant,
    SeparableProduct,
    Trigonometric,
    Layered,
    CustomExpression,
}

/// Fractional part in [0, 1); exact integers map to 0.
#[inline]
pub fn wrap_unit(v: f64) -> f64 {
    let w = v - v.floor();
    if w >= 1.0 {
        0.0
    } else {
        w
    }
}

/// A scalar 1-periodic factor of one argument group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    One,
    /// offset + amplitude·sin(2π v[axis])
    Sine { offset: f64, amplitude: f64, #[serde(default)] axis: usize },
    /// offset + amplitude·cos(2π v[axis])
    Cosine { offset: f64, amplitude: f64, #[serde(default)] axis: usize },
    /// values[k] on [breaks[k-1], breaks[k]) of v[axis]
    Layered { breaks: Vec<f64>, values: Vec<f64>, #[serde(default)] axis: usize },
}

impl Profile {
    pub fn sine(offset: f64, amplitude: f64) -> Self {
        Profile::Sine { offset, amplitude, axis: 0 }
    }

    fn axis(&self) -> usize {
        match self {
            Profile::One => 0,
            Profile::Sine { axis, .. } | Profile::Cosine { axis, .. } | Profile::Layered { axis, .. } => *axis,
        }
    }

    /// Evaluates at already-wrapped coordinates.
    #[inline]
    pub fn eval(&self, v: &[f64]) -> f64 {
        match self {
            Profile::One => 1.0,
            Profile::Sine { offset, amplitude, axis } => offset + amplitude * (2.0 * PI * v[*axis]).sin(),
            Profile::Cosine { offset, amplitude, axis } => offset + amplitude * (2.0 * PI * v[*axis]).cos(),
            Profile::Layered { breaks, values, axis } => {
                let x = wrap_unit(v[*axis]);
                let k = breaks.partition_point(|&b| b <= x);
                values[k]
            }
        }
    }

    pub fn min(&self) -> f64 {
        match self {
            Profile::One => 1.0,
            Profile::Sine { offset, amplitude, .. } | Profile::Cosine { offset, amplitude, .. } => offset - amplitude.abs(),
            Profile::Layered { values, .. } => values.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }

    pub fn max_abs(&self) -> f64 {
        match self {
            Profile::One => 1.0,
            Profile::Sine { offset, amplitude, .. } | Profile::Cosine { offset, amplitude, .. } => offset.abs() + amplitude.abs(),
            Profile::Layered { values, .. } => values.iter().fold(0.0f64, |a, v| a.max(v.abs())),
        }
    }

    pub fn is_constant(&self) -> bool {
        match self {
            Profile::One => true,
            Profile::Sine { amplitude, .. } | Profile::Cosine { amplitude, .. } => *amplitude == 0.0,
            Profile::Layered { values, .. } => values.windows(2).all(|w| w[0] == w[1]),
        }
    }

    /// Discontinuity locations along the profile's axis.
    pub fn breaks(&self) -> Option<(usize, &[f64])> {
        match self {
            Profile::Layered { breaks, axis, .. } if !breaks.is_empty() => Some((*axis, breaks)),
            _ => None,
        }
    }

    fn validate(&self, arity: usize, name: &str) -> Result<(), CoeffError> {
        if self.axis() >= arity {
            return Err(CoeffError::Invalid(format!("{name}: axis {} out of range", self.axis())));
        }
        match self {
            Profile::Layered { breaks, values, .. } => {
                if values.len() != breaks.len() + 1 {
                    return Err(CoeffError::Invalid(format!("{name}: layered profile needs breaks.len()+1 values")));
                }
                if breaks.iter().any(|b| !(*b > 0.0 && *b < 1.0)) || breaks.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(CoeffError::Invalid(format!("{name}: breaks must be strictly increasing in (0,1)")));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

type FieldFn = dyn Fn(&[f64], &[f64], f64, f64) -> Tensor + Send + Sync;

/// How fast time arguments are averaged out of a field before a cell stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreAverage {
    None,
    OverS2,
    OverS1AndS2,
}

#[derive(Clone)]
enum Evaluator {
    Separable { base: Tensor, y1: Profile, y2: Profile, s1: Profile, s2: Profile },
    Expression(Vec<Vec<Expr>>),
    Function(Arc<FieldFn>),
    TimeAveraged { inner: Arc<CoefficientField>, mode: PreAverage, points: usize },
}

/// Periodic matrix field a(y₁, y₂, s₁, s₂) on Y×Y×S×S. Immutable once built.
#[derive(Clone)]
pub struct CoefficientField {
    dim: usize,
    family: FamilyTag,
    evaluator: Evaluator,
    coercivity: f64,
    entry_bound: f64,
}

impl fmt::Debug for CoefficientField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientField")
            .field("dim", &self.dim)
            .field("family", &self.family)
            .field("coercivity", &self.coercivity)
            .field("entry_bound", &self.entry_bound)
            .finish_non_exhaustive()
    }
}

impl CoefficientField {
    pub fn constant(a0: Tensor) -> Result<Self, CoeffError> {
        let mut f = Self::separable(a0, Profile::One, Profile::One, Profile::One, Profile::One)?;
        f.family = FamilyTag::Constant;
        Ok(f)
    }

    /// base · f₁(y₁) f₂(y₂) g₁(s₁) g₂(s₂); C₀ and the entry bound are derived.
    pub fn separable(base: Tensor, y1: Profile, y2: Profile, s1: Profile, s2: Profile) -> Result<Self, CoeffError> {
        let dim = base.dim();
        y1.validate(dim, "y1")?;
        y2.validate(dim, "y2")?;
        s1.validate(1, "s1")?;
        s2.validate(1, "s2")?;
        if !base.is_finite() {
            return Err(CoeffError::Invalid("base matrix must be finite".into()));
        }
        let mins = [y1.min(), y2.min(), s1.min(), s2.min()];
        if mins.iter().any(|&m| m <= 0.0) {
            return Err(CoeffError::Invalid("every profile must be strictly positive".into()));
        }
        let lam = base.sym_min_eigenvalue();
        if lam <= 0.0 {
            return Err(CoeffError::Invalid(format!("base matrix is not coercive (min eigenvalue {lam})")));
        }
        let coercivity = lam * mins.iter().product::<f64>();
        let entry_bound = base.max_abs() * [&y1, &y2, &s1, &s2].iter().map(|p| p.max_abs()).product::<f64>();
        let uses_sine = [&y1, &y2, &s1, &s2].iter().any(|p| matches!(p, Profile::Sine { .. } | Profile::Cosine { .. }));
        let family = if [&y1, &y2, &s1, &s2].iter().any(|p| matches!(p, Profile::Layered { .. })) {
            FamilyTag::Layered
        } else if uses_sine {
            FamilyTag::Trigonometric
        } else {
            FamilyTag::SeparableProduct
        };
        Ok(CoefficientField {
            dim,
            family,
            evaluator: Evaluator::Separable { base, y1, y2, s1, s2 },
            coercivity,
            entry_bound,
        })
    }

    /// Scalar trigonometric field Π (offset + amp_k sin 2π·) · I, all factors on axis 0.
    pub fn trigonometric(dim: usize, offset: f64, amplitudes: [f64; 4]) -> Result<Self, CoeffError> {
        let p = |a: f64| if a == 0.0 { Profile::One } else { Profile::sine(offset, a) };
        Self::separable(Tensor::identity(dim), p(amplitudes[0]), p(amplitudes[1]), p(amplitudes[2]), p(amplitudes[3]))
    }

    /// Piecewise-constant laminate in one argument group.
    pub fn layered(dim: usize, variable: LayerVariable, axis: usize, breaks: Vec<f64>, values: Vec<f64>) -> Result<Self, CoeffError> {
        let prof = Profile::Layered { breaks, values, axis };
        let (mut y1, mut y2, mut s1, mut s2) = (Profile::One, Profile::One, Profile::One, Profile::One);
        match variable {
            LayerVariable::Y1 => y1 = prof,
            LayerVariable::Y2 => y2 = prof,
            LayerVariable::S1 => s1 = prof,
            LayerVariable::S2 => s2 = prof,
        }
        Self::separable(Tensor::identity(dim), y1, y2, s1, s2)
    }

    /// Sets the family tag (for fields built through `separable` that
    /// should be reported under a different family).
    pub fn with_family(mut self, family: FamilyTag) -> Self {
        self.family = family;
        self
    }

    /// Matrix of expression strings over y1[i], y2[i], s1, s2.
    pub fn from_expressions<S: AsRef<str>>(entries: &[Vec<S>], coercivity: f64, entry_bound: f64) -> Result<Self, CoeffError> {
        let dim = entries.len();
        if !(1..=MAX_DIM).contains(&dim) || entries.iter().any(|r| r.len() != dim) {
            return Err(CoeffError::Invalid("expression matrix must be 1x1 or 2x2".into()));
        }
        let ctx = VarContext::Coefficient { dim };
        let exprs = entries
            .iter()
            .map(|row| row.iter().map(|s| Expr::parse(s.as_ref(), ctx)).collect::<Result<Vec<_>, _>>())
            .collect::<Result<Vec<_>, _>>()?;
        Self::checked(dim, FamilyTag::CustomExpression, Evaluator::Expression(exprs), coercivity, entry_bound)
    }

    /// Arbitrary pure evaluator; arguments arrive already wrapped to [0,1).
    pub fn from_fn<F>(dim: usize, f: F, coercivity: f64, entry_bound: f64) -> Result<Self, CoeffError>
    where
        F: Fn(&[f64], &[f64], f64, f64) -> Tensor + Send + Sync + 'static,
    {
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(CoeffError::Invalid(format!("unsupported dimension {dim}")));
        }
        Self::checked(dim, FamilyTag::CustomExpression, Evaluator::Function(Arc::new(f)), coercivity, entry_bound)
    }

    fn checked(dim: usize, family: FamilyTag, evaluator: Evaluator, coercivity: f64, entry_bound: f64) -> Result<Self, CoeffError> {
        if !(coercivity > 0.0 && coercivity.is_finite()) {
            return Err(CoeffError::Invalid("coercivity constant must be positive".into()));
        }
        if !(entry_bound >= coercivity && entry_bound.is_finite()) {
            return Err(CoeffError::Invalid("entry bound must be finite and at least C0".into()));
        }
        Ok(CoefficientField { dim, family, evaluator, coercivity, entry_bound })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn family(&self) -> FamilyTag {
        self.family
    }

    pub fn coercivity(&self) -> f64 {
        self.coercivity
    }

    pub fn entry_bound(&self) -> f64 {
        self.entry_bound
    }

    /// Whether the field can vary in (s₁, s₂). Conservative for opaque evaluators.
    pub fn time_dependence(&self) -> (bool, bool) {
        match &self.evaluator {
            Evaluator::Separable { s1, s2, .. } => (!s1.is_constant(), !s2.is_constant()),
            Evaluator::Expression(exprs) => exprs.iter().flatten().fold((false, false), |acc, e| {
                let u = e.uses_time();
                (acc.0 || u.0, acc.1 || u.1)
            }),
            Evaluator::Function(_) => (true, true),
            Evaluator::TimeAveraged { inner, mode, .. } => {
                let (a, b) = inner.time_dependence();
                match mode {
                    PreAverage::None => (a, b),
                    PreAverage::OverS2 => (a, false),
                    PreAverage::OverS1AndS2 => (false, false),
                }
            }
        }
    }

    /// Discontinuity planes of layered factors: (argument group, axis, breaks).
    pub fn discontinuities(&self) -> Vec<(LayerVariable, usize, Vec<f64>)> {
        match &self.evaluator {
            Evaluator::Separable { y1, y2, s1, s2, .. } => {
                let groups = [(LayerVariable::Y1, y1), (LayerVariable::Y2, y2), (LayerVariable::S1, s1), (LayerVariable::S2, s2)];
                groups
                    .iter()
                    .filter_map(|(g, p)| p.breaks().map(|(axis, b)| (*g, axis, b.to_vec())))
                    .collect()
            }
            Evaluator::TimeAveraged { inner, .. } => inner.discontinuities(),
            _ => Vec::new(),
        }
    }

    /// Evaluates with periodic wrapping and finiteness checks.
    pub fn eval(&self, y1: &[f64], y2: &[f64], s1: f64, s2: f64) -> Result<Tensor, CoeffError> {
        let mut w1 = [0.0; MAX_DIM];
        let mut w2 = [0.0; MAX_DIM];
        for d in 0..self.dim {
            if !y1[d].is_finite() {
                return Err(CoeffError::NonFiniteArgument { name: "y1", value: y1[d] });
            }
            if !y2[d].is_finite() {
                return Err(CoeffError::NonFiniteArgument { name: "y2", value: y2[d] });
            }
            w1[d] = wrap_unit(y1[d]);
            w2[d] = wrap_unit(y2[d]);
        }
        if !s1.is_finite() {
            return Err(CoeffError::NonFiniteArgument { name: "s1", value: s1 });
        }
        if !s2.is_finite() {
            return Err(CoeffError::NonFiniteArgument { name: "s2", value: s2 });
        }
        let (ws1, ws2) = (wrap_unit(s1), wrap_unit(s2));
        let t = self.eval_raw(&w1[..self.dim], &w2[..self.dim], ws1, ws2);
        if !t.is_finite() {
            return Err(CoeffError::NonFiniteValue { y1: y1.to_vec(), y2: y2.to_vec(), s1, s2 });
        }
        Ok(t)
    }

    /// Evaluates without wrapping (built-in profiles wrap internally).
    pub fn eval_raw(&self, y1: &[f64], y2: &[f64], s1: f64, s2: f64) -> Tensor {
        match &self.evaluator {
            Evaluator::Separable { base, y1: p1, y2: p2, s1: q1, s2: q2 } => {
                *base * (p1.eval(y1) * p2.eval(y2) * q1.eval(&[s1]) * q2.eval(&[s2]))
            }
            Evaluator::Expression(exprs) => {
                let b = Bindings { y1, y2, s1, s2, ..Default::default() };
                let mut t = Tensor::zeros(self.dim);
                for (i, row) in exprs.iter().enumerate() {
                    for (j, e) in row.iter().enumerate() {
                        t.set(i, j, e.eval(&b));
                    }
                }
                t
            }
            Evaluator::Function(f) => f(y1, y2, s1, s2),
            Evaluator::TimeAveraged { inner, mode, points } => {
                let n = *points;
                let mid = |k: usize| (k as f64 + 0.5) / n as f64;
                match mode {
                    PreAverage::None => inner.eval_raw(y1, y2, s1, s2),
                    PreAverage::OverS2 => {
                        let mut acc = Tensor::zeros(self.dim);
                        for k in 0..n {
                            acc = acc + inner.eval_raw(y1, y2, s1, mid(k));
                        }
                        acc * (1.0 / n as f64)
                    }
                    PreAverage::OverS1AndS2 => {
                        let mut acc = Tensor::zeros(self.dim);
                        for k in 0..n {
                            for l in 0..n {
                                acc = acc + inner.eval_raw(y1, y2, mid(k), mid(l));
                            }
                        }
                        acc * (1.0 / (n * n) as f64)
                    }
                }
            }
        }
    }
}

/// Argument group of a layered factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerVariable {
    Y1,
    Y2,
    S1,
    S2,
}

/// Free-function form of [`CoefficientField::eval`].
pub fn eval_coefficient(field: &CoefficientField, y1: &[f64], y2: &[f64], s1: f64, s2: f64) -> Result<Tensor, CoeffError> {
    field.eval(y1, y2, s1, s2)
}

/// Midpoint-quadrature average of `field` over the named time axes. The
/// returned field ignores the averaged arguments.
pub fn pre_average_field(field: &CoefficientField, mode: PreAverage, quad_points: usize) -> Result<CoefficientField, CoeffError> {
    if mode == PreAverage::None {
        return Ok(field.clone());
    }
    if quad_points < 2 {
        return Err(CoeffError::Invalid("pre-averaging needs at least 2 quadrature points".into()));
    }
    Ok(CoefficientField {
        dim: field.dim,
        family: field.family,
        evaluator: Evaluator::TimeAveraged { inner: Arc::new(field.clone()), mode, points: quad_points },
        coercivity: field.coercivity,
        entry_bound: field.entry_bound,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePoint {
    pub y1: Vec<f64>,
    pub y2: Vec<f64>,
    pub s1: f64,
    pub s2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldReport {
    pub passed: bool,
    /// min over samples and probe directions of (aξ·ξ)/|ξ|²
    pub worst_ratio: f64,
    pub worst_point: SamplePoint,
    pub declared_coercivity: f64,
    /// max |a(z + e_k) − a(z)| over samples and unit shifts e_k
    pub periodicity_defect: f64,
    pub max_entry: f64,
    pub entry_bound: f64,
    pub failures: Vec<String>,
}

/// Dense-sampling surrogate for continuity, periodicity and coercivity.
pub fn validate_field(field: &CoefficientField, samples_per_axis: usize, probe_directions: usize) -> Result<FieldReport, CoeffError> {
    if samples_per_axis < 2 {
        return Err(CoeffError::Invalid("samples_per_axis must be at least 2".into()));
    }
    let dim = field.dim;
    let probes: Vec<[f64; MAX_DIM]> = if dim == 1 {
        vec![[1.0, 0.0]]
    } else {
        let k = probe_directions.max(1);
        (0..k)
            .map(|i| {
                let th = PI * i as f64 / k as f64;
                [th.cos(), th.sin()]
            })
            .collect()
    };
    let nvars = 2 * dim + 2;
    let n = samples_per_axis;
    let total = n.pow(nvars as u32);
    let mut worst = f64::INFINITY;
    let mut worst_point = None;
    let mut defect = 0.0f64;
    let mut max_entry = 0.0f64;
    let mut z = vec![0.0; nvars];
    for idx in 0..total {
        let mut k = idx;
        for zi in z.iter_mut() {
            *zi = (k % n) as f64 / n as f64;
            k /= n;
        }
        let (y1, rest) = z.split_at(dim);
        let (y2, s) = rest.split_at(dim);
        let a = field.eval(y1, y2, s[0], s[1])?;
        max_entry = max_entry.max(a.max_abs());
        for xi in &probes {
            let ratio = a.quadratic(xi);
            if ratio < worst {
                worst = ratio;
                worst_point = Some(SamplePoint { y1: y1.to_vec(), y2: y2.to_vec(), s1: s[0], s2: s[1] });
            }
        }
        let base = field.eval_raw(y1, y2, s[0], s[1]);
        for v in 0..nvars {
            let mut zs = z.clone();
            zs[v] += 1.0;
            let (u1, r) = zs.split_at(dim);
            let (u2, ss) = r.split_at(dim);
            let shifted = field.eval_raw(u1, u2, ss[0], ss[1]);
            defect = defect.max((shifted - base).max_abs());
        }
    }
    let c0 = field.coercivity;
    let mut failures = Vec::new();
    let wp = worst_point.expect("at least one sample");
    if worst < c0 * (1.0 - 1e-9) {
        failures.push(format!(
            "coercivity violated: ratio {worst} < C0 = {c0} at y1={:?} y2={:?} s1={} s2={}",
            wp.y1, wp.y2, wp.s1, wp.s2
        ));
    }
    if defect > 1e-12 * max_entry.max(1.0) {
        failures.push(format!("periodicity defect {defect:.3e} exceeds 1e-12"));
    }
    if max_entry > field.entry_bound * (1.0 + 1e-12) {
        failures.push(format!("entry {max_entry} exceeds declared bound {}", field.entry_bound));
    }
    Ok(FieldReport {
        passed: failures.is_empty(),
        worst_ratio: worst,
        worst_point: wp,
        declared_coercivity: c0,
        periodicity_defect: defect,
        max_entry,
        entry_bound: field.entry_bound,
        failures,
    })
}

pub type SourceFn = Arc<dyn Fn(&[f64], f64) -> f64 + Send + Sync>;
pub type InitialFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProblemError {
    #[error("time horizon must be positive, got {0}")]
    Horizon(f64),
    #[error("domain box is degenerate or has the wrong dimension")]
    Domain,
}

/// ε^p ∂_t u − ∇·(a(x/ε, x/ε², t/ε^q, t/ε^r)∇u) = f on Ω×(0,T), u=0 on ∂Ω, u(·,0)=u₀.
#[derive(Clone)]
pub struct FineScaleProblem {
    pub coefficient: CoefficientField,
    pub exponents: ScaleExponents,
    pub source: SourceFn,
    pub initial: InitialFn,
    pub domain: BoxDomain,
    pub horizon: f64,
}

impl fmt::Debug for FineScaleProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FineScaleProblem")
            .field("coefficient", &self.coefficient)
            .field("exponents", &self.exponents)
            .field("domain", &self.domain)
            .field("horizon", &self.horizon)
            .finish_non_exhaustive()
    }
}

impl FineScaleProblem {
    pub fn new(
        coefficient: CoefficientField,
        exponents: ScaleExponents,
        source: SourceFn,
        initial: InitialFn,
        domain: BoxDomain,
        horizon: f64,
    ) -> Result<Self, ProblemError> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(ProblemError::Horizon(horizon));
        }
        if !domain.is_valid() || domain.dim() != coefficient.dim() {
            return Err(ProblemError::Domain);
        }
        Ok(FineScaleProblem { coefficient, exponents, source, initial, domain, horizon })
    }
}

/// Parses a space-time expression over x[i], t into a source function.
pub fn source_from_expr(src: &str, dim: usize) -> Result<SourceFn, ExprError> {
    let e = Expr::parse(src, VarContext::SpaceTime { dim })?;
    Ok(Arc::new(move |x: &[f64], t: f64| e.eval(&Bindings { x, t, ..Default::default() })))
}

/// Parses an expression over x[i] into an initial-value function.
pub fn initial_from_expr(src: &str, dim: usize) -> Result<InitialFn, ExprError> {
    let e = Expr::parse(src, VarContext::SpaceTime { dim })?;
    Ok(Arc::new(move |x: &[f64]| e.eval(&Bindings { x, t: 0.0, ..Default::default() })))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sin_y2(offset: f64) -> CoefficientField {
        CoefficientField::separable(Tensor::identity(1), Profile::One, Profile::sine(offset, 1.0), Profile::One, Profile::One).unwrap()
    }

    #[test]
    fn constant_field_evaluates_everywhere() {
        let f = CoefficientField::constant(Tensor::scaled_identity(2, 2.0)).unwrap();
        let a = f.eval(&[0.3, -4.2], &[17.0, 0.5], 3.3, -0.1).unwrap();
        assert_eq!(a, Tensor::scaled_identity(2, 2.0));
        assert_eq!(f.family(), FamilyTag::Constant);
    }

    #[test]
    fn trig_peak_and_wrap() {
        let f = sin_y2(2.0);
        let a = f.eval(&[0.0], &[0.25], 0.0, 0.0).unwrap();
        assert!((a.get(0, 0) - 3.0).abs() < 1e-15);
        let b = f.eval(&[0.0], &[1.25], 0.0, 0.0).unwrap();
        assert_eq!(a, b);
        assert_eq!(wrap_unit(3.0), 0.0);
        assert_eq!(wrap_unit(-2.0), 0.0);
        assert!(wrap_unit(-1e-18) < 1.0);
    }

    #[test]
    fn rejects_non_finite() {
        let f = sin_y2(2.0);
        assert!(matches!(f.eval(&[f64::NAN], &[0.0], 0.0, 0.0), Err(CoeffError::NonFiniteArgument { name: "y1", .. })));
        let g = CoefficientField::from_expressions(&[vec!["1/(y2[0]-0.5)"]], 0.1, 10.0).unwrap();
        assert!(matches!(g.eval(&[0.0], &[0.5], 0.0, 0.0), Err(CoeffError::NonFiniteValue { .. })));
    }

    #[test]
    fn validation_examples() {
        let c = CoefficientField::constant(Tensor::scaled_identity(1, 2.0)).unwrap();
        let r = validate_field(&c, 4, 4).unwrap();
        assert!(r.passed);
        assert_eq!(r.worst_ratio, 2.0);

        let t = sin_y2(2.0);
        assert_eq!(t.coercivity(), 1.0);
        let r = validate_field(&t, 8, 4).unwrap();
        assert!(r.passed, "{:?}", r.failures);
        assert!((r.worst_ratio - 1.0).abs() < 1e-15);
        assert_eq!(r.worst_point.y2, vec![0.75]);

        let bad = CoefficientField::from_expressions(&[vec!["sin(2*pi*y2[0])"]], 0.1, 1.0).unwrap();
        let r = validate_field(&bad, 8, 4).unwrap();
        assert!(!r.passed);
        assert!(r.worst_ratio < 0.0);
        assert_eq!(r.worst_point.y2, vec![0.75]);
    }

    #[test]
    fn validation_detects_non_periodic_expression() {
        let f = CoefficientField::from_expressions(&[vec!["2 + y1[0]"]], 2.0, 3.0).unwrap();
        let r = validate_field(&f, 4, 1).unwrap();
        assert!(!r.passed);
        assert!(r.periodicity_defect >= 1.0 - 1e-12);
    }

    #[test]
    fn pre_average_examples() {
        let f = CoefficientField::separable(Tensor::identity(1), Profile::One, Profile::One, Profile::One, Profile::sine(2.0, 1.0)).unwrap();
        let none = pre_average_field(&f, PreAverage::None, 64).unwrap();
        assert_eq!(none.eval(&[0.1], &[0.2], 0.3, 0.4).unwrap(), f.eval(&[0.1], &[0.2], 0.3, 0.4).unwrap());
        let avg = pre_average_field(&f, PreAverage::OverS2, 64).unwrap();
        for s2 in [0.0, 0.3, 0.77] {
            assert!((avg.eval(&[0.0], &[0.0], 0.0, s2).unwrap().get(0, 0) - 2.0).abs() < 1e-10);
        }
        assert!(pre_average_field(&f, PreAverage::OverS2, 1).is_err());
    }

    #[test]
    fn layered_profile_values() {
        let f = CoefficientField::layered(1, LayerVariable::Y1, 0, vec![0.5], vec![1.0, 4.0]).unwrap();
        assert_eq!(f.eval(&[0.25], &[0.0], 0.0, 0.0).unwrap().get(0, 0), 1.0);
        assert_eq!(f.eval(&[0.5], &[0.0], 0.0, 0.0).unwrap().get(0, 0), 4.0);
        assert_eq!(f.eval(&[1.75], &[0.0], 0.0, 0.0).unwrap().get(0, 0), 4.0);
        assert_eq!(f.coercivity(), 1.0);
        assert_eq!(f.discontinuities(), vec![(LayerVariable::Y1, 0, vec![0.5])]);
        assert!(CoefficientField::layered(1, LayerVariable::Y1, 0, vec![0.7, 0.2], vec![1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn eval_is_deterministic() {
        let f = CoefficientField::trigonometric(2, 2.0, [1.0, 0.5, 0.3, 0.2]).unwrap();
        let a = f.eval(&[0.1, 0.7], &[0.33, 0.9], 0.4, 0.8).unwrap();
        for _ in 0..10 {
            let b = f.eval(&[0.1, 0.7], &[0.33, 0.9], 0.4, 0.8).unwrap();
            assert_eq!(a.entries().map(f64::to_bits).collect::<Vec<_>>(), b.entries().map(f64::to_bits).collect::<Vec<_>>());
        }
    }
}
