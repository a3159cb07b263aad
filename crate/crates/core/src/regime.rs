//! Classification of the scale exponents (p, q, r) into the 13 homogenization
//! regimes and the structural recipe each regime prescribes for the
//! effective-tensor pipeline.
//!
//! Spatial scales are ε and ε², temporal scales ε^q and ε^r. A cell problem
//! keeps a time derivative exactly when a temporal scale divided by ε^p is
//! the square of a spatial scale, i.e. on the four lines r = 2+p, q = 2+p,
//! r = 4+p, q = 4+p. Classification therefore depends only on (q−p, r−p).

use crate::coeffs::PreAverage;
use num_rational::Rational64;
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use thiserror::Error;

pub const DEFAULT_BOUNDARY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RegimeError {
    #[error("exponents must satisfy 0 < p < q < r, got p={p}, q={q}, r={r}")]
    Ordering { p: f64, q: f64, r: f64 },
    #[error("exponents must be finite")]
    NonFinite,
    #[error("boundary tolerance must be non-negative and finite")]
    Tolerance,
    #[error("case index {0} is outside 1..=13")]
    CaseIndex(u8),
}

/// (p, q, r) with 0 < p < q < r; optionally carried as exact rationals so
/// that resonance boundaries are hit exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleExponents {
    pub p: f64,
    pub q: f64,
    pub r: f64,
    #[serde(skip)]
    exact: Option<[Rational64; 3]>,
}

impl ScaleExponents {
    pub fn new(p: f64, q: f64, r: f64) -> Result<Self, RegimeError> {
        if !(p.is_finite() && q.is_finite() && r.is_finite()) {
            return Err(RegimeError::NonFinite);
        }
        if !(0.0 < p && p < q && q < r) {
            return Err(RegimeError::Ordering { p, q, r });
        }
        Ok(ScaleExponents { p, q, r, exact: None })
    }

    pub fn exact(p: Rational64, q: Rational64, r: Rational64) -> Result<Self, RegimeError> {
        let f = |x: Rational64| *x.numer() as f64 / *x.denom() as f64;
        let zero = Rational64::from_integer(0);
        if !(zero < p && p < q && q < r) {
            return Err(RegimeError::Ordering { p: f(p), q: f(q), r: f(r) });
        }
        Ok(ScaleExponents { p: f(p), q: f(q), r: f(r), exact: Some([p, q, r]) })
    }

    pub fn is_exact(&self) -> bool {
        self.exact.is_some()
    }

    /// Spatial scales (ε, ε²) and temporal scales (ε^q, ε^r).
    pub fn scales(&self, epsilon: f64) -> [f64; 4] {
        [epsilon, epsilon * epsilon, epsilon.powf(self.q), epsilon.powf(self.r)]
    }
}

/// A subset of the fast time variables {s₁, s₂}.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeAxes {
    pub s1: bool,
    pub s2: bool,
}

impl TimeAxes {
    pub const NONE: TimeAxes = TimeAxes { s1: false, s2: false };
    pub const S1: TimeAxes = TimeAxes { s1: true, s2: false };
    pub const S2: TimeAxes = TimeAxes { s1: false, s2: true };
    pub const BOTH: TimeAxes = TimeAxes { s1: true, s2: true };

    pub fn union(self, o: TimeAxes) -> TimeAxes {
        TimeAxes { s1: self.s1 || o.s1, s2: self.s2 || o.s2 }
    }

    pub fn minus(self, o: TimeAxes) -> TimeAxes {
        TimeAxes { s1: self.s1 && !o.s1, s2: self.s2 && !o.s2 }
    }

    pub fn contains(self, o: TimeAxes) -> bool {
        (!o.s1 || self.s1) && (!o.s2 || self.s2)
    }

    pub fn is_empty(self) -> bool {
        !self.s1 && !self.s2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellType {
    Elliptic,
    ParabolicInS1,
    ParabolicInS2,
}

impl CellType {
    /// The time axis the cell problem carries a derivative in.
    pub fn time_axis(self) -> TimeAxes {
        match self {
            CellType::Elliptic => TimeAxes::NONE,
            CellType::ParabolicInS1 => TimeAxes::S1,
            CellType::ParabolicInS2 => TimeAxes::S2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegimeDescriptor {
    pub case_index: u8,
    pub pre_average: PreAverage,
    /// Cell problem in y₂ (fast space scale).
    pub inner_type: CellType,
    /// Averaging of the intermediate tensor before the y₁ problem.
    pub mid_average: TimeAxes,
    /// Cell problem in y₁.
    pub outer_type: CellType,
    pub u1_depends_on: TimeAxes,
    pub u2_depends_on: TimeAxes,
    /// Averaging of the outer flux producing the constant tensor b.
    pub final_average: TimeAxes,
}

use CellType::{Elliptic as E, ParabolicInS1 as P1, ParabolicInS2 as P2};
use PreAverage::{None as PreNone, OverS1AndS2 as PreBoth, OverS2 as PreS2};

const fn row(
    case_index: u8,
    pre_average: PreAverage,
    inner_type: CellType,
    mid_average: TimeAxes,
    outer_type: CellType,
    final_average: TimeAxes,
    u1_depends_on: TimeAxes,
    u2_depends_on: TimeAxes,
) -> RegimeDescriptor {
    RegimeDescriptor { case_index, pre_average, inner_type, mid_average, outer_type, u1_depends_on, u2_depends_on, final_average }
}

/// Recipe per case. Each row lists, in order: pre-averaging of a, y₂
/// problem type, averaging of ã, y₁ problem type, final averaging, and the
/// time variables u₁ and u₂ keep.
pub static RECIPES: [RegimeDescriptor; 13] = [
    // 1: r < 2+p. Both cell problems elliptic and pointwise in (s₁, s₂);
    //    b is the (s₁, s₂)-mean of the y₁-flux.
    row(1, PreNone, E, TimeAxes::NONE, E, TimeAxes::BOTH, TimeAxes::BOTH, TimeAxes::BOTH),
    // 2: r = 2+p. The y₁ problem gains ∂_{s₂}u₁; it is solved per s₁ and
    //    its flux averaged over s₂ (period) and s₁.
    row(2, PreNone, E, TimeAxes::NONE, P2, TimeAxes::BOTH, TimeAxes::BOTH, TimeAxes::BOTH),
    // 3: 2+p < r < 4+p, q < 2+p. u₁ loses s₂, so the y₁ problem sees the
    //    s₂-mean of ã; b averages the remaining s₁.
    row(3, PreNone, E, TimeAxes::S2, E, TimeAxes::S1, TimeAxes::S1, TimeAxes::BOTH),
    // 4: r < 4+p, q = 2+p. As 3 with ∂_{s₁}u₁ in the y₁ problem.
    row(4, PreNone, E, TimeAxes::S2, P1, TimeAxes::S1, TimeAxes::S1, TimeAxes::BOTH),
    // 5: r < 4+p, q > 2+p. u₁ loses s₁ and s₂: ã averaged over both.
    row(5, PreNone, E, TimeAxes::BOTH, E, TimeAxes::NONE, TimeAxes::NONE, TimeAxes::BOTH),
    // 6: r = 4+p, q < 2+p. The y₂ problem gains ∂_{s₂}u₂ (solved over an
    //    s₂ period per (y₁, s₁)); its period-mean flux feeds an elliptic
    //    y₁ problem per s₁.
    row(6, PreNone, P2, TimeAxes::S2, E, TimeAxes::S1, TimeAxes::S1, TimeAxes::BOTH),
    // 7: r = 4+p, q = 2+p. Parabolic in s₂ inside, parabolic in s₁ outside.
    row(7, PreNone, P2, TimeAxes::S2, P1, TimeAxes::S1, TimeAxes::S1, TimeAxes::BOTH),
    // 8: r = 4+p, q > 2+p. Parabolic y₂ problem; ã averaged over s₁ too.
    row(8, PreNone, P2, TimeAxes::BOTH, E, TimeAxes::NONE, TimeAxes::NONE, TimeAxes::BOTH),
    // 9: r > 4+p, q < 2+p. u₂ loses s₂, so a is replaced by its s₂-mean;
    //    elliptic problems per s₁, then s₁-mean.
    row(9, PreS2, E, TimeAxes::NONE, E, TimeAxes::S1, TimeAxes::S1, TimeAxes::S1),
    // 10: r > 4+p, q = 2+p. As 9 with ∂_{s₁}u₁ in the y₁ problem.
    row(10, PreS2, E, TimeAxes::NONE, P1, TimeAxes::S1, TimeAxes::S1, TimeAxes::S1),
    // 11: r > 4+p, 2+p < q < 4+p. s₂-mean of a; ã averaged over s₁.
    row(11, PreS2, E, TimeAxes::S1, E, TimeAxes::NONE, TimeAxes::NONE, TimeAxes::S1),
    // 12: q = 4+p. s₂-mean of a; y₂ problem gains ∂_{s₁}u₂, period-mean flux.
    row(12, PreS2, P1, TimeAxes::S1, E, TimeAxes::NONE, TimeAxes::NONE, TimeAxes::S1),
    // 13: q > 4+p. a replaced by its (s₁, s₂)-mean; purely elliptic.
    row(13, PreBoth, E, TimeAxes::NONE, E, TimeAxes::NONE, TimeAxes::NONE, TimeAxes::NONE),
];

impl RegimeDescriptor {
    pub fn for_case(case_index: u8) -> Result<Self, RegimeError> {
        if !(1..=13).contains(&case_index) {
            return Err(RegimeError::CaseIndex(case_index));
        }
        Ok(RECIPES[case_index as usize - 1])
    }

    /// Time axes averaged out of a before the y₂ problem.
    pub fn pre_averaged_axes(&self) -> TimeAxes {
        match self.pre_average {
            PreAverage::None => TimeAxes::NONE,
            PreAverage::OverS2 => TimeAxes::S2,
            PreAverage::OverS1AndS2 => TimeAxes::BOTH,
        }
    }

    /// Time axes the intermediate tensor ã carries after the inner stage.
    pub fn intermediate_axes(&self) -> TimeAxes {
        TimeAxes::BOTH.minus(self.pre_averaged_axes()).minus(self.inner_type.time_axis())
    }

    /// Time axes left after mid-averaging; these index the y₁ problems (or
    /// are the parabolic time of the y₁ problem).
    pub fn outer_axes(&self) -> TimeAxes {
        self.intermediate_axes().minus(self.mid_average)
    }

    pub fn has_parabolic_cell(&self) -> bool {
        self.inner_type != CellType::Elliptic || self.outer_type != CellType::Elliptic
    }

    /// Every time axis is removed by some stage, so b is constant.
    pub fn is_consistent(&self) -> bool {
        let consumed = self
            .pre_averaged_axes()
            .union(self.inner_type.time_axis())
            .union(self.mid_average)
            .union(self.final_average);
        consumed == TimeAxes::BOTH
            && self.final_average.contains(self.outer_axes())
            && self.outer_axes().contains(self.outer_type.time_axis())
    }
}

fn cmp_tol(a: f64, b: f64, tol: f64) -> Ordering {
    let d = a - b;
    if d.abs() <= tol {
        Ordering::Equal
    } else if d < 0.0 {
        Ordering::Less
    } else {
        Ordering::Greater
    }
}

fn case_from(r2: Ordering, r4: Ordering, q2: Ordering, q4: Ordering) -> u8 {
    use Ordering::*;
    match (r2, q4) {
        (Less, _) => 1,
        (Equal, _) => 2,
        (_, Greater) => 13,
        (_, Equal) => 12,
        _ => match (r4, q2) {
            (Less, Less) => 3,
            (Less, Equal) => 4,
            (Less, Greater) => 5,
            (Equal, Less) => 6,
            (Equal, Equal) => 7,
            (Equal, Greater) => 8,
            (Greater, Less) => 9,
            (Greater, Equal) => 10,
            (Greater, Greater) => 11,
        },
    }
}

/// Returns the unique regime whose conditions hold. Offsets from the
/// resonance lines within `boundary_tolerance` count as equality; exact
/// rational exponents are compared exactly.
pub fn classify_regime(exponents: &ScaleExponents, boundary_tolerance: f64) -> Result<RegimeDescriptor, RegimeError> {
    if !(boundary_tolerance >= 0.0 && boundary_tolerance.is_finite()) {
        return Err(RegimeError::Tolerance);
    }
    let ScaleExponents { p, q, r, exact } = *exponents;
    if !(p.is_finite() && q.is_finite() && r.is_finite()) {
        return Err(RegimeError::NonFinite);
    }
    if !(0.0 < p && p < q && q < r) {
        return Err(RegimeError::Ordering { p, q, r });
    }
    let case = if let Some([pe, qe, re]) = exact {
        let two = Rational64::from_integer(2);
        let four = Rational64::from_integer(4);
        let (dq, dr) = (qe - pe, re - pe);
        case_from(dr.cmp(&two), dr.cmp(&four), dq.cmp(&two), dq.cmp(&four))
    } else {
        let (dq, dr) = (q - p, r - p);
        let t = boundary_tolerance;
        case_from(cmp_tol(dr, 2.0, t), cmp_tol(dr, 4.0, t), cmp_tol(dq, 2.0, t), cmp_tol(dq, 4.0, t))
    };
    RegimeDescriptor::for_case(case)
}

/// One exponent triple inside each case, with p = 1.
pub fn representative_exponents(case_index: u8) -> Result<ScaleExponents, RegimeError> {
    let (q, r) = match case_index {
        1 => (2.0, 2.5),
        2 => (2.0, 3.0),
        3 => (2.0, 3.5),
        4 => (3.0, 4.0),
        5 => (3.5, 4.5),
        6 => (2.0, 5.0),
        7 => (3.0, 5.0),
        8 => (3.5, 5.0),
        9 => (2.0, 6.0),
        10 => (3.0, 6.0),
        11 => (4.0, 6.0),
        12 => (5.0, 6.0),
        13 => (5.5, 6.0),
        other => return Err(RegimeError::CaseIndex(other)),
    };
    ScaleExponents::new(1.0, q, r)
}
