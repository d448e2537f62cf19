//! Composite Simpson quadrature with grid-doubling refinement, shared by
//! the spectral integrals and the propagator's phase accumulation.

use crate::error::{Error, Result};

/// Composite Simpson rule on [a, b] with n (even) intervals.
pub(crate) fn simpson_segment(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    debug_assert!(n >= 2 && n % 2 == 0);
    let h = (b - a) / n as f64;
    let mut acc = f(a) + f(b);
    for j in 1..n {
        let w = if j % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + j as f64 * h);
    }
    acc * h / 3.0
}

/// Integrate over a union of segments, doubling every segment's interval
/// count until the total changes by less than `target`.
pub(crate) fn simpson_refine(
    f: &mut impl FnMut(f64) -> f64,
    segments: &[(f64, f64)],
    base_intervals: usize,
    target: f64,
    max_refinements: usize,
) -> Result<f64> {
    let mut n = base_intervals.max(2);
    if n % 2 == 1 {
        n += 1;
    }
    let mut prev = segments
        .iter()
        .map(|&(a, b)| simpson_segment(f, a, b, n))
        .sum::<f64>();
    let mut last_change = f64::INFINITY;
    for _ in 0..max_refinements {
        n *= 2;
        let cur = segments
            .iter()
            .map(|&(a, b)| simpson_segment(f, a, b, n))
            .sum::<f64>();
        last_change = (cur - prev).abs();
        if last_change < target {
            return Ok(cur);
        }
        prev = cur;
    }
    Err(Error::QuadratureError {
        target,
        refinements: max_refinements,
        last_change,
    })
}
