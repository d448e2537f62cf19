//! Interpolation schedules f(s) on [0, 1] and their dual constructions.
//!
//! A schedule is piecewise analytic: affine pieces, the closed-form local
//! adiabatic schedule, and polynomial pieces (stored around a segment
//! center for conditioning).  Duals are built by replacing part of a base
//! schedule with a polynomial continuation whose boundary derivatives
//! oppose the base schedule's:
//!
//! * [`partial_antisym_dual`]: one quartic tail on [1-delta, 1] with
//!   f_B'(1) = -f_A'(1); the path overshoots 1 before coming back.
//! * [`complete_antisym_dual`]: quartics on [0, delta/2] and
//!   [1-delta/2, 1] with opposing slopes at both endpoints.
//! * [`bc_dual`]: the order-m generalization; derivatives through m are
//!   zero at the endpoints, the (m+1)-st flips sign, and everything
//!   through m+2 is matched at the joins.
//!
//! Schedules are not required to be monotone or stay inside [0, 1].

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Residual bound enforced on every constructed dual's conditions.
pub const JOIN_RESIDUAL_TOL: f64 = 1e-9;

const CONDITION_NUMBER_LIMIT: f64 = 1e12;

/// One analytic piece of a schedule.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum SegmentKind {
    /// c0 + c1 s
    Affine { c0: f64, c1: f64 },
    /// Closed-form local adiabatic schedule for an N-dimensional search.
    Lae { n: u32 },
    /// sum_k coeffs[k] (s - center)^k
    Poly { center: f64, coeffs: Vec<f64> },
}

impl SegmentKind {
    fn value(&self, s: f64) -> f64 {
        self.deriv(s, 0)
    }

    fn deriv(&self, s: f64, order: usize) -> f64 {
        match self {
            SegmentKind::Affine { c0, c1 } => match order {
                0 => c0 + c1 * s,
                1 => *c1,
                _ => 0.0,
            },
            SegmentKind::Lae { n } => lae_deriv(*n, s, order),
            SegmentKind::Poly { center, coeffs } => poly_deriv(*center, coeffs, s, order),
        }
    }

    fn reversed(&self) -> SegmentKind {
        match self {
            SegmentKind::Affine { c0, c1 } => SegmentKind::Affine {
                c0: 1.0 - c0 - c1,
                c1: *c1,
            },
            // The closed-form schedule is odd about (1/2, 1/2), so it is its
            // own time reverse.
            SegmentKind::Lae { n } => SegmentKind::Lae { n: *n },
            SegmentKind::Poly { center, coeffs } => {
                let mut q: Vec<f64> = coeffs
                    .iter()
                    .enumerate()
                    .map(|(j, c)| if j % 2 == 0 { -c } else { *c })
                    .collect();
                if let Some(c0) = q.first_mut() {
                    *c0 += 1.0;
                }
                SegmentKind::Poly {
                    center: 1.0 - center,
                    coeffs: q,
                }
            }
        }
    }
}

fn poly_deriv(center: f64, coeffs: &[f64], s: f64, order: usize) -> f64 {
    let x = s - center;
    let mut acc = 0.0;
    // Horner on the differentiated coefficients, highest power first.
    for q in (order..coeffs.len()).rev() {
        let mut fall = 1.0;
        for i in 0..order {
            fall *= (q - i) as f64;
        }
        acc = acc * x + coeffs[q] * fall;
    }
    acc
}

/// k-th derivative of tan expressed as a polynomial in t = tan(u):
/// p_1 = 1 + t^2, p_{k+1} = p_k' (1 + t^2).
fn tan_deriv_poly(order: usize) -> Vec<f64> {
    assert!(order >= 1);
    let mut p = vec![1.0, 0.0, 1.0];
    for _ in 1..order {
        // differentiate
        let dp: Vec<f64> = (1..p.len()).map(|j| p[j] * j as f64).collect();
        // multiply by (1 + t^2)
        let mut next = vec![0.0; dp.len() + 2];
        for (j, c) in dp.iter().enumerate() {
            next[j] += c;
            next[j + 2] += c;
        }
        p = next;
    }
    p
}

fn lae_deriv(n: u32, s: f64, order: usize) -> f64 {
    let r = ((n as f64) - 1.0).sqrt();
    let beta = r.atan();
    let u = beta * (1.0 - 2.0 * s);
    let t = u.tan();
    if order == 0 {
        return (r - t) / (2.0 * r);
    }
    let p = tan_deriv_poly(order);
    let mut pt = 0.0;
    for c in p.iter().rev() {
        pt = pt * t + c;
    }
    -(-2.0 * beta).powi(order as i32) * pt / (2.0 * r)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Segment {
    pub lo: f64,
    pub hi: f64,
    pub kind: SegmentKind,
}

/// Piecewise-analytic schedule on [0, 1].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SchedulePath {
    label: String,
    segments: Vec<Segment>,
}

impl SchedulePath {
    /// Build from raw segments.  Segments must be sorted, contiguous, and
    /// cover [0, 1].  Smoothness is not checked here; [`validate`] reports
    /// join defects.
    pub fn from_segments(label: impl Into<String>, segments: Vec<Segment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::InvalidPath("no segments".into()));
        }
        if (segments[0].lo - 0.0).abs() > 1e-12 {
            return Err(Error::InvalidPath(format!(
                "first segment starts at {}, expected 0",
                segments[0].lo
            )));
        }
        if (segments.last().unwrap().hi - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidPath(format!(
                "last segment ends at {}, expected 1",
                segments.last().unwrap().hi
            )));
        }
        for w in segments.windows(2) {
            if (w[0].hi - w[1].lo).abs() > 1e-12 {
                return Err(Error::InvalidPath(format!(
                    "gap between segments at {} vs {}",
                    w[0].hi, w[1].lo
                )));
            }
        }
        for seg in &segments {
            if seg.hi <= seg.lo {
                return Err(Error::InvalidPath(format!(
                    "empty segment [{}, {}]",
                    seg.lo, seg.hi
                )));
            }
        }
        Ok(Self {
            label: label.into(),
            segments,
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Interior joins, sorted ascending.
    pub fn breakpoints(&self) -> Vec<f64> {
        self.segments[..self.segments.len() - 1]
            .iter()
            .map(|s| s.hi)
            .collect()
    }

    fn segment_index_at(&self, s: f64) -> usize {
        // interior breakpoints belong to the right segment
        let mut idx = self.segments.len() - 1;
        for (i, seg) in self.segments.iter().enumerate() {
            if s < seg.hi {
                idx = i;
                break;
            }
        }
        idx
    }

    pub fn value(&self, s: f64) -> f64 {
        self.segments[self.segment_index_at(s)].kind.value(s)
    }

    /// order-th derivative (order 0 is the value itself).
    pub fn deriv(&self, s: f64, order: usize) -> f64 {
        self.segments[self.segment_index_at(s)].kind.deriv(s, order)
    }

    pub fn rate(&self, s: f64) -> f64 {
        self.deriv(s, 1)
    }

    /// Restriction of the underlying piecewise formulas to [lo, hi].
    fn restricted_segments(&self, lo: f64, hi: f64) -> Vec<Segment> {
        let mut out = Vec::new();
        for seg in &self.segments {
            let a = seg.lo.max(lo);
            let b = seg.hi.min(hi);
            if b - a > 1e-12 {
                out.push(Segment {
                    lo: a,
                    hi: b,
                    kind: seg.kind.clone(),
                });
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schedule paths always serialize")
    }
}

/// f(s) = s.
pub fn linear_path() -> SchedulePath {
    SchedulePath::from_segments(
        "linear",
        vec![Segment {
            lo: 0.0,
            hi: 1.0,
            kind: SegmentKind::Affine { c0: 0.0, c1: 1.0 },
        }],
    )
    .unwrap()
}

/// f(s) = s^2 (3 - 2s); slope vanishes at both endpoints.
pub fn smoothstep_path() -> SchedulePath {
    SchedulePath::from_segments(
        "smoothstep",
        vec![Segment {
            lo: 0.0,
            hi: 1.0,
            kind: SegmentKind::Poly {
                center: 0.0,
                coeffs: vec![0.0, 0.0, 3.0, -2.0],
            },
        }],
    )
    .unwrap()
}

/// f(s) = s^3 (10 - 15s + 6s^2); slope and curvature vanish at both ends.
pub fn smootherstep_path() -> SchedulePath {
    SchedulePath::from_segments(
        "smootherstep",
        vec![Segment {
            lo: 0.0,
            hi: 1.0,
            kind: SegmentKind::Poly {
                center: 0.0,
                coeffs: vec![0.0, 0.0, 0.0, 10.0, -15.0, 6.0],
            },
        }],
    )
    .unwrap()
}

/// Local adiabatic schedule for an N-dimensional search space:
/// f(s) = [sqrt(N-1) - tan(arctan(sqrt(N-1)) (1 - 2s))] / (2 sqrt(N-1)).
pub fn lae_path(n: u32) -> Result<SchedulePath> {
    if n < 2 {
        return Err(Error::InvalidPath(format!("lae needs N >= 2, got {n}")));
    }
    SchedulePath::from_segments(
        format!("lae({n})"),
        vec![Segment {
            lo: 0.0,
            hi: 1.0,
            kind: SegmentKind::Lae { n },
        }],
    )
}

/// Time-reversed schedule g(s) = 1 - f(1 - s).
pub fn time_reversed(f: &SchedulePath) -> SchedulePath {
    let mut segments: Vec<Segment> = f
        .segments
        .iter()
        .rev()
        .map(|seg| Segment {
            lo: 1.0 - seg.hi,
            hi: 1.0 - seg.lo,
            kind: seg.kind.reversed(),
        })
        .collect();
    // pin the cover exactly to [0, 1] against roundoff in 1 - x
    if let Some(first) = segments.first_mut() {
        first.lo = 0.0;
    }
    if let Some(last) = segments.last_mut() {
        last.hi = 1.0;
    }
    SchedulePath::from_segments(format!("reversed({})", f.label), segments)
        .expect("reversal preserves segment cover")
}

/// One interpolation condition: derivative `order` at `node` equals `rhs`.
struct Condition {
    node: f64,
    order: usize,
    rhs: f64,
}

/// Solve for polynomial coefficients (around `center`, degree = count - 1)
/// satisfying the given conditions.
fn solve_poly(center: f64, conditions: &[Condition]) -> Result<Vec<f64>> {
    let n = conditions.len();
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut b = nalgebra::DVector::<f64>::zeros(n);
    for (row, cond) in conditions.iter().enumerate() {
        let x = cond.node - center;
        for q in cond.order..n {
            let mut fall = 1.0;
            for i in 0..cond.order {
                fall *= (q - i) as f64;
            }
            a[(row, q)] = fall * x.powi((q - cond.order) as i32);
        }
        b[row] = cond.rhs;
    }
    let svd = a.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let cond_number = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if cond_number > CONDITION_NUMBER_LIMIT {
        return Err(Error::InterpolationError { cond: cond_number });
    }
    let lu = a.clone().lu();
    let coeffs = lu
        .solve(&b)
        .ok_or(Error::InterpolationError { cond: cond_number })?;
    // verify the conditions directly
    let cv: Vec<f64> = coeffs.iter().cloned().collect();
    for cond in conditions {
        let got = poly_deriv(center, &cv, cond.node, cond.order);
        if (got - cond.rhs).abs() > JOIN_RESIDUAL_TOL {
            return Err(Error::InterpolationError { cond: cond_number });
        }
    }
    Ok(cv)
}

/// Dual with f_B = f_A on [0, 1-delta] and a quartic tail whose slope at
/// s = 1 opposes f_A's.
pub fn partial_antisym_dual(f_a: &SchedulePath, delta: f64) -> Result<SchedulePath> {
    if !(0.0 < delta && delta < 1.0) {
        return Err(Error::InvalidPath(format!("delta = {delta} outside (0, 1)")));
    }
    let x0 = 1.0 - delta;
    let center = (x0 + 1.0) / 2.0;
    let coeffs = solve_poly(
        center,
        &[
            Condition { node: x0, order: 0, rhs: f_a.value(x0) },
            Condition { node: x0, order: 1, rhs: f_a.deriv(x0, 1) },
            Condition { node: x0, order: 2, rhs: f_a.deriv(x0, 2) },
            Condition { node: 1.0, order: 0, rhs: 1.0 },
            Condition { node: 1.0, order: 1, rhs: -f_a.deriv(1.0, 1) },
        ],
    )?;
    let mut segments = f_a.restricted_segments(0.0, x0);
    segments.push(Segment {
        lo: x0,
        hi: 1.0,
        kind: SegmentKind::Poly { center, coeffs },
    });
    SchedulePath::from_segments(
        format!("partial_dual({}, {delta})", f_a.label),
        segments,
    )
}

/// Dual whose slopes oppose f_A's at both endpoints, using quartics on
/// [0, delta/2] and [1-delta/2, 1].
pub fn complete_antisym_dual(f_a: &SchedulePath, delta: f64) -> Result<SchedulePath> {
    if !(0.0 < delta && delta < 1.0) {
        return Err(Error::InvalidPath(format!("delta = {delta} outside (0, 1)")));
    }
    let a = delta / 2.0;
    let b = 1.0 - delta / 2.0;
    let head_center = a / 2.0;
    let head = solve_poly(
        head_center,
        &[
            Condition { node: 0.0, order: 0, rhs: 0.0 },
            Condition { node: 0.0, order: 1, rhs: -f_a.deriv(0.0, 1) },
            Condition { node: a, order: 0, rhs: f_a.value(a) },
            Condition { node: a, order: 1, rhs: f_a.deriv(a, 1) },
            Condition { node: a, order: 2, rhs: f_a.deriv(a, 2) },
        ],
    )?;
    let tail_center = (b + 1.0) / 2.0;
    let tail = solve_poly(
        tail_center,
        &[
            Condition { node: b, order: 0, rhs: f_a.value(b) },
            Condition { node: b, order: 1, rhs: f_a.deriv(b, 1) },
            Condition { node: b, order: 2, rhs: f_a.deriv(b, 2) },
            Condition { node: 1.0, order: 0, rhs: 1.0 },
            Condition { node: 1.0, order: 1, rhs: -f_a.deriv(1.0, 1) },
        ],
    )?;
    let mut segments = vec![Segment {
        lo: 0.0,
        hi: a,
        kind: SegmentKind::Poly { center: head_center, coeffs: head },
    }];
    segments.extend(f_a.restricted_segments(a, b));
    segments.push(Segment {
        lo: b,
        hi: 1.0,
        kind: SegmentKind::Poly { center: tail_center, coeffs: tail },
    });
    SchedulePath::from_segments(
        format!("complete_dual({}, {delta})", f_a.label),
        segments,
    )
}

/// Order-m dual for schedules whose first m derivatives vanish at the
/// boundary.  Polynomial pieces live on [0, delta] and [1-delta, 1] with
/// degree 2m+4 (the minimum satisfying the condition count):
///
/// * derivatives 1..m are zero at the outer endpoint,
/// * derivative m+1 at the outer endpoint opposes f_A's,
/// * derivatives 0..m+2 match f_A at the join.
pub fn bc_dual(f_a: &SchedulePath, m: usize, delta: f64) -> Result<SchedulePath> {
    if m < 1 {
        return Err(Error::InvalidPath("bc_dual needs m >= 1; use complete_antisym_dual for m = 0".into()));
    }
    bc_dual_any_order(f_a, m, delta)
}

/// Like [`bc_dual`] but also accepts m = 0, where the conditions reduce to
/// the completely anti-symmetric quartic set with joins at delta.
pub fn bc_dual_any_order(f_a: &SchedulePath, m: usize, delta: f64) -> Result<SchedulePath> {
    if !(0.0 < delta && delta < 0.5) {
        return Err(Error::InvalidPath(format!("delta = {delta} outside (0, 0.5)")));
    }
    let left_join = delta;
    let right_join = 1.0 - delta;

    let mut left_conditions = vec![Condition { node: 0.0, order: 0, rhs: 0.0 }];
    for j in 1..=m {
        left_conditions.push(Condition { node: 0.0, order: j, rhs: 0.0 });
    }
    left_conditions.push(Condition {
        node: 0.0,
        order: m + 1,
        rhs: -f_a.deriv(0.0, m + 1),
    });
    for j in 0..=m + 2 {
        left_conditions.push(Condition {
            node: left_join,
            order: j,
            rhs: f_a.deriv(left_join, j),
        });
    }

    let mut right_conditions = vec![Condition { node: 1.0, order: 0, rhs: 1.0 }];
    for j in 1..=m {
        right_conditions.push(Condition { node: 1.0, order: j, rhs: 0.0 });
    }
    right_conditions.push(Condition {
        node: 1.0,
        order: m + 1,
        rhs: -f_a.deriv(1.0, m + 1),
    });
    for j in 0..=m + 2 {
        right_conditions.push(Condition {
            node: right_join,
            order: j,
            rhs: f_a.deriv(right_join, j),
        });
    }

    let left_center = left_join / 2.0;
    let right_center = (right_join + 1.0) / 2.0;
    let head = solve_poly(left_center, &left_conditions)?;
    let tail = solve_poly(right_center, &right_conditions)?;

    let mut segments = vec![Segment {
        lo: 0.0,
        hi: left_join,
        kind: SegmentKind::Poly { center: left_center, coeffs: head },
    }];
    segments.extend(f_a.restricted_segments(left_join, right_join));
    segments.push(Segment {
        lo: right_join,
        hi: 1.0,
        kind: SegmentKind::Poly { center: right_center, coeffs: tail },
    });
    SchedulePath::from_segments(
        format!("bc_dual({}, m={m}, {delta})", f_a.label),
        segments,
    )
}

/// Continuity defects at one interior join.
#[derive(Debug, Clone, Serialize)]
pub struct JoinDefect {
    pub s: f64,
    pub value: f64,
    pub slope: f64,
    pub curvature: f64,
}

/// Report produced by [`validate`]; carries failures instead of erroring.
#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub start_value: f64,
    pub end_value: f64,
    pub join_defects: Vec<JoinDefect>,
    pub f_min: f64,
    pub f_max: f64,
    pub monotone: bool,
}

impl ValidationReport {
    pub fn endpoints_ok(&self, tol: f64) -> bool {
        self.start_value.abs() <= tol && (self.end_value - 1.0).abs() <= tol
    }

    pub fn max_join_defect(&self) -> f64 {
        self.join_defects
            .iter()
            .flat_map(|d| [d.value.abs(), d.slope.abs(), d.curvature.abs()])
            .fold(0.0, f64::max)
    }
}

/// Sample-based report of endpoint values, join continuity, range and
/// monotonicity.
pub fn validate(path: &SchedulePath) -> ValidationReport {
    let samples = 10_000;
    let mut f_min = f64::INFINITY;
    let mut f_max = f64::NEG_INFINITY;
    let mut monotone = true;
    let mut prev = path.value(0.0);
    for k in 0..=samples {
        let s = k as f64 / samples as f64;
        let v = path.value(s);
        f_min = f_min.min(v);
        f_max = f_max.max(v);
        if v < prev - 1e-12 {
            monotone = false;
        }
        prev = v;
    }
    let join_defects = path
        .breakpoints()
        .iter()
        .map(|&b| {
            let left = &path.segments[path.segment_index_at(b) - 1].kind;
            let right = &path.segments[path.segment_index_at(b)].kind;
            JoinDefect {
                s: b,
                value: right.value(b) - left.value(b),
                slope: right.deriv(b, 1) - left.deriv(b, 1),
                curvature: right.deriv(b, 2) - left.deriv(b, 2),
            }
        })
        .collect();
    ValidationReport {
        start_value: path.value(0.0),
        end_value: path.value(1.0),
        join_defects,
        f_min,
        f_max,
        monotone,
    }
}

/// Residuals of the five tail conditions defining a partial dual.
pub fn partial_dual_residuals(f_a: &SchedulePath, f_b: &SchedulePath, delta: f64) -> [f64; 5] {
    let x0 = 1.0 - delta;
    [
        f_b.value(x0) - f_a.value(x0),
        f_b.deriv(x0, 1) - f_a.deriv(x0, 1),
        f_b.deriv(x0, 2) - f_a.deriv(x0, 2),
        f_b.value(1.0) - 1.0,
        f_b.deriv(1.0, 1) + f_a.deriv(1.0, 1),
    ]
}

/// Residuals of the ten conditions defining a complete dual.
pub fn complete_dual_residuals(f_a: &SchedulePath, f_b: &SchedulePath, delta: f64) -> [f64; 10] {
    let a = delta / 2.0;
    let b = 1.0 - delta / 2.0;
    [
        f_b.value(0.0),
        f_b.deriv(0.0, 1) + f_a.deriv(0.0, 1),
        f_b.value(a) - f_a.value(a),
        f_b.deriv(a, 1) - f_a.deriv(a, 1),
        f_b.deriv(a, 2) - f_a.deriv(a, 2),
        f_b.value(b) - f_a.value(b),
        f_b.deriv(b, 1) - f_a.deriv(b, 1),
        f_b.deriv(b, 2) - f_a.deriv(b, 2),
        f_b.value(1.0) - 1.0,
        f_b.deriv(1.0, 1) + f_a.deriv(1.0, 1),
    ]
}

/// Residuals of all order-m dual conditions (both sides).
pub fn bc_dual_residuals(
    f_a: &SchedulePath,
    f_b: &SchedulePath,
    m: usize,
    delta: f64,
) -> Vec<f64> {
    let mut r = Vec::new();
    r.push(f_b.value(0.0));
    r.push(f_b.value(1.0) - 1.0);
    for j in 1..=m {
        r.push(f_b.deriv(0.0, j));
        r.push(f_b.deriv(1.0, j));
    }
    r.push(f_b.deriv(0.0, m + 1) + f_a.deriv(0.0, m + 1));
    r.push(f_b.deriv(1.0, m + 1) + f_a.deriv(1.0, m + 1));
    for j in 0..=m + 2 {
        r.push(f_b.deriv(delta, j) - f_a.deriv(delta, j));
        r.push(f_b.deriv(1.0 - delta, j) - f_a.deriv(1.0 - delta, j));
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn central_diff(path: &SchedulePath, s: f64, order: usize, h: f64) -> f64 {
        match order {
            1 => (path.value(s + h) - path.value(s - h)) / (2.0 * h),
            2 => (path.value(s + h) - 2.0 * path.value(s) + path.value(s - h)) / (h * h),
            _ => unreachable!(),
        }
    }

    #[test]
    fn lae_endpoints_and_midpoint() {
        let p = lae_path(5).unwrap();
        assert!(p.value(0.0).abs() < 1e-12);
        assert!((p.value(1.0) - 1.0).abs() < 1e-12);
        assert_abs_diff_eq!(p.value(0.5), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn lae_slope_at_midpoint() {
        let p = lae_path(5).unwrap();
        let expect = 2.0_f64.atan() / 2.0;
        assert_abs_diff_eq!(p.deriv(0.5, 1), expect, epsilon = 1e-12);
        // finite-difference oracle
        let fd = central_diff(&p, 0.5, 1, 1e-6);
        assert_abs_diff_eq!(p.deriv(0.5, 1), fd, epsilon = 1e-9);
        assert_abs_diff_eq!(expect, 0.55357, epsilon = 5e-6);
    }

    #[test]
    fn lae_higher_derivatives_match_finite_differences() {
        let p = lae_path(7).unwrap();
        for s in [0.13, 0.5, 0.82] {
            let fd1 = central_diff(&p, s, 1, 1e-6);
            let fd2 = central_diff(&p, s, 2, 1e-5);
            assert_abs_diff_eq!(p.deriv(s, 1), fd1, epsilon = 1e-8);
            assert_abs_diff_eq!(p.deriv(s, 2), fd2, epsilon = 1e-5);
        }
        // order-3 against a nested stencil of analytic second derivatives
        let h = 1e-6;
        let fd3 = (p.deriv(0.3 + h, 2) - p.deriv(0.3 - h, 2)) / (2.0 * h);
        assert_abs_diff_eq!(p.deriv(0.3, 3), fd3, epsilon = 1e-5);
    }

    /// Independent oracle: solve the partial-dual conditions in the raw
    /// monomial basis and compare sampled values.
    fn partial_dual_oracle(f_a: &SchedulePath, delta: f64) -> impl Fn(f64) -> f64 {
        let x0 = 1.0 - delta;
        let mut a = DMatrix::<f64>::zeros(5, 5);
        let mut b = nalgebra::DVector::<f64>::zeros(5);
        let rows: [(f64, usize, f64); 5] = [
            (x0, 0, f_a.value(x0)),
            (x0, 1, f_a.deriv(x0, 1)),
            (x0, 2, f_a.deriv(x0, 2)),
            (1.0, 0, 1.0),
            (1.0, 1, -f_a.deriv(1.0, 1)),
        ];
        for (row, (node, order, rhs)) in rows.iter().enumerate() {
            for q in *order..5 {
                let mut fall = 1.0;
                for i in 0..*order {
                    fall *= (q - i) as f64;
                }
                a[(row, q)] = fall * node.powi((q - *order) as i32);
            }
            b[row] = *rhs;
        }
        let c = a.lu().solve(&b).unwrap();
        move |s: f64| (0..5).map(|q| c[q] * s.powi(q as i32)).sum()
    }

    #[test]
    fn partial_dual_of_linear_matches_oracle_and_overshoots() {
        let f_a = linear_path();
        let f_b = partial_antisym_dual(&f_a, 0.2).unwrap();
        let res = partial_dual_residuals(&f_a, &f_b, 0.2);
        for r in res {
            assert!(r.abs() < 1e-9, "residual {r:e}");
        }
        let oracle = partial_dual_oracle(&f_a, 0.2);
        let mut max_f = f64::NEG_INFINITY;
        for k in 0..=400 {
            let s = 0.8 + 0.2 * k as f64 / 400.0;
            assert_abs_diff_eq!(f_b.value(s), oracle(s), epsilon = 1e-9);
            max_f = max_f.max(f_b.value(s));
        }
        assert!(max_f > 1.0, "dual should overshoot, max = {max_f}");
    }

    #[test]
    fn partial_dual_of_lae_residuals() {
        let f_a = lae_path(5).unwrap();
        let f_b = partial_antisym_dual(&f_a, 0.2).unwrap();
        for r in partial_dual_residuals(&f_a, &f_b, 0.2) {
            assert!(r.abs() < 1e-9, "residual {r:e}");
        }
        let report = validate(&f_b);
        assert!(report.endpoints_ok(1e-12));
        assert!(report.max_join_defect() < 1e-9);
        assert!(report.f_max > 1.0);
        assert!(!report.monotone);
    }

    #[test]
    fn partial_dual_untouched_before_join() {
        let f_a = lae_path(5).unwrap();
        let f_b = partial_antisym_dual(&f_a, 0.2).unwrap();
        for k in 0..=100 {
            let s = 0.8 * k as f64 / 100.0;
            assert_eq!(f_a.value(s), f_b.value(s));
        }
    }

    #[test]
    fn complete_dual_of_linear() {
        let f_a = linear_path();
        let f_b = complete_antisym_dual(&f_a, 0.2).unwrap();
        assert_abs_diff_eq!(f_b.deriv(0.0, 1), -1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(f_b.deriv(1.0, 1), -1.0, epsilon = 1e-10);
        for r in complete_dual_residuals(&f_a, &f_b, 0.2) {
            assert!(r.abs() < 1e-9, "residual {r:e}");
        }
        let report = validate(&f_b);
        assert!(report.f_min < 0.0, "head should undershoot");
        assert!(report.f_max > 1.0, "tail should overshoot");
    }

    #[test]
    fn complete_dual_mirror_symmetry_for_odd_base() {
        // if f_A(1-s) = 1 - f_A(s), the two quartics are mirror images
        for f_a in [linear_path(), lae_path(5).unwrap()] {
            let f_b = complete_antisym_dual(&f_a, 0.2).unwrap();
            for k in 0..=200 {
                let s = k as f64 / 200.0;
                assert_abs_diff_eq!(f_b.value(s) + f_b.value(1.0 - s), 1.0, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn antisymmetric_slope_signs() {
        let f_a = lae_path(5).unwrap();
        let f_b = complete_antisym_dual(&f_a, 0.3).unwrap();
        assert!(f_a.deriv(0.0, 1) > 0.0);
        assert!(f_b.deriv(0.0, 1) < 0.0);
        assert!(f_b.deriv(1.0, 1) < 0.0);
    }

    #[test]
    fn time_reversal_fixes_linear_and_involutes() {
        let lin = linear_path();
        let rev = time_reversed(&lin);
        for k in 0..=100 {
            let s = k as f64 / 100.0;
            assert_abs_diff_eq!(rev.value(s), s, epsilon = 1e-15);
        }
        let f_b = partial_antisym_dual(&lae_path(5).unwrap(), 0.2).unwrap();
        let back = time_reversed(&time_reversed(&f_b));
        for k in 0..=1000 {
            let s = k as f64 / 1000.0;
            assert_abs_diff_eq!(back.value(s), f_b.value(s), epsilon = 1e-12);
        }
    }

    #[test]
    fn time_reversed_partial_dual_has_head_segment() {
        let f_b = partial_antisym_dual(&linear_path(), 0.2).unwrap();
        let f_a = time_reversed(&f_b);
        // polynomial piece now sits on [0, 0.2] and the slope at 0 flips
        assert_abs_diff_eq!(f_a.breakpoints()[0], 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(f_a.deriv(0.0, 1), -1.0, epsilon = 1e-10);
        assert!(matches!(f_a.segments()[0].kind, SegmentKind::Poly { .. }));
    }

    #[test]
    fn bc_dual_conditions_for_smoothstep() {
        let f_a = smoothstep_path();
        let f_b = bc_dual(&f_a, 1, 0.2).unwrap();
        for r in bc_dual_residuals(&f_a, &f_b, 1, 0.2) {
            assert!(r.abs() < 1e-8, "residual {r:e}");
        }
        // flat boundaries persist and the second derivative flips
        assert!(f_b.deriv(0.0, 1).abs() < 1e-10);
        assert!(f_b.deriv(1.0, 1).abs() < 1e-10);
        assert_abs_diff_eq!(f_b.deriv(0.0, 2), -f_a.deriv(0.0, 2), epsilon = 1e-8);
        assert_abs_diff_eq!(f_b.deriv(1.0, 2), -f_a.deriv(1.0, 2), epsilon = 1e-8);
    }

    #[test]
    fn bc_dual_m0_recovers_complete_conditions() {
        // with m = 0 the condition set degenerates to the quartic
        // anti-symmetric one, with joins at delta instead of delta/2
        let f_a = lae_path(5).unwrap();
        let d = 0.15;
        let via_bc = bc_dual_any_order(&f_a, 0, d).unwrap();
        let via_complete = complete_antisym_dual(&f_a, 2.0 * d).unwrap();
        for k in 0..=500 {
            let s = k as f64 / 500.0;
            assert_abs_diff_eq!(via_bc.value(s), via_complete.value(s), epsilon = 1e-10);
        }
    }

    #[test]
    fn bc_dual_m2_conditions_for_smootherstep() {
        let f_a = smootherstep_path();
        let f_b = bc_dual(&f_a, 2, 0.3).unwrap();
        for r in bc_dual_residuals(&f_a, &f_b, 2, 0.3) {
            assert!(r.abs() < 1e-8, "residual {r:e}");
        }
    }

    #[test]
    fn validate_linear_is_clean() {
        let report = validate(&linear_path());
        assert!(report.endpoints_ok(0.0));
        assert_eq!(report.join_defects.len(), 0);
        assert_eq!(report.f_min, 0.0);
        assert_eq!(report.f_max, 1.0);
        assert!(report.monotone);
    }

    #[test]
    fn validate_reports_broken_join() {
        let f_b = partial_antisym_dual(&linear_path(), 0.2).unwrap();
        let mut segments = f_b.segments().to_vec();
        if let SegmentKind::Poly { coeffs, .. } = &mut segments.last_mut().unwrap().kind {
            coeffs[1] += 1e-3;
        }
        let broken = SchedulePath::from_segments("broken", segments).unwrap();
        let report = validate(&broken);
        let defect = &report.join_defects[0];
        assert!(defect.slope.abs() > 1e-4, "slope defect {:?}", defect);
    }

    #[test]
    fn derivatives_match_finite_differences_away_from_joins() {
        let paths = vec![
            partial_antisym_dual(&lae_path(5).unwrap(), 0.2).unwrap(),
            complete_antisym_dual(&linear_path(), 0.3).unwrap(),
            bc_dual(&smoothstep_path(), 1, 0.25).unwrap(),
        ];
        for p in &paths {
            for k in 0..50 {
                let s = 0.01 + 0.98 * k as f64 / 49.0;
                if p.breakpoints().iter().any(|b| (s - b).abs() < 2e-2) {
                    continue;
                }
                let fd = central_diff(p, s, 1, 1e-6);
                assert_abs_diff_eq!(p.deriv(s, 1), fd, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn serialization_roundtrip() {
        let p = partial_antisym_dual(&lae_path(5).unwrap(), 0.2).unwrap();
        let json = p.to_json();
        let back: SchedulePath = serde_json::from_str(&json).unwrap();
        for k in 0..=100 {
            let s = k as f64 / 100.0;
            assert_eq!(p.value(s), back.value(s));
        }
    }
}
