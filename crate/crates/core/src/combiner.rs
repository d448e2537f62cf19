//! Weighted averaging of counter-rotated evolutions and its error algebra.
//!
//! The measurement gadget applies sum_j w_j U_j to the start state when the
//! ancilla outcome is 0 (for two branches, w = cos^2 theta, sin^2 theta),
//! with success probability |sum_j w_j U_j psi|^2.  Branches enter through
//! their counter-rotated states, i.e. each evolution is multiplied by
//! e^{+i T int E_g} so the ground components interfere constructively and
//! the residual diabatic amplitudes are what cancel.
//!
//! [`predict_first_order`] evaluates the leading boundary-term expression
//! for the amplitude left on an excited level after one evolution;
//! [`predict_first_order_bc`] is its order-m generalization for schedules
//! whose first m derivatives vanish at the boundary.  Both are exact to
//! O(1/T^2) (resp. O(1/T^{m+2})) in the track's gauge, so combined
//! predictions can be compared directly against projected amplitudes from
//! the integrator.

use crate::error::{Error, Result};
use crate::hamiltonians::C64;
use crate::propagation::{CVector, EvolutionResult};
use crate::spectral::{level_map, SpectralFrame, SpectralTrack};

/// How flat the boundary derivatives must be for the order-m predictor.
pub const BOUNDARY_FLATNESS_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct Branch {
    pub path_label: String,
    pub time: f64,
    pub weight: f64,
}

/// Weights and times of a linear combination of evolutions.
#[derive(Debug, Clone)]
pub struct CombinationPlan {
    pub branches: Vec<Branch>,
    /// Mixing angle for the two-branch gadget; weights are cos^2, sin^2.
    pub theta: Option<f64>,
}

impl CombinationPlan {
    pub fn two_branch(theta: f64, label_a: &str, t_a: f64, label_b: &str, t_b: f64) -> Self {
        let (c, s) = (theta.cos(), theta.sin());
        Self {
            branches: vec![
                Branch {
                    path_label: label_a.to_string(),
                    time: t_a,
                    weight: c * c,
                },
                Branch {
                    path_label: label_b.to_string(),
                    time: t_b,
                    weight: s * s,
                },
            ],
            theta: Some(theta),
        }
    }

    pub fn single(label: &str, t: f64) -> Self {
        Self {
            branches: vec![Branch {
                path_label: label.to_string(),
                time: t,
                weight: 1.0,
            }],
            theta: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.branches.is_empty() {
            return Err(Error::InvalidPlan("no branches".into()));
        }
        let mut sum = 0.0;
        for b in &self.branches {
            if b.weight < 0.0 {
                return Err(Error::InvalidPlan(format!(
                    "negative weight {} on {}",
                    b.weight, b.path_label
                )));
            }
            if b.time <= 0.0 {
                return Err(Error::InvalidPlan(format!(
                    "non-positive time {} on {}",
                    b.time, b.path_label
                )));
            }
            sum += b.weight;
        }
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidPlan(format!("weights sum to {sum}, not 1")));
        }
        if let Some(theta) = self.theta {
            if self.branches.len() != 2 {
                return Err(Error::InvalidPlan(
                    "theta is only meaningful for two branches".into(),
                ));
            }
            let c2 = theta.cos().powi(2);
            if (self.branches[0].weight - c2).abs() > 1e-12 {
                return Err(Error::InvalidPlan(
                    "weights are inconsistent with theta".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Post-selected output of the averaging gadget.
#[derive(Debug, Clone)]
pub struct GadgetOutcome {
    /// sum_j w_j (counter-rotated state_j), before normalization.
    pub raw_combination: CVector,
    /// raw_combination / ||raw_combination||.
    pub success_state: CVector,
    /// ||raw_combination||^2.
    pub p_success: f64,
    /// Component of the success state orthogonal to the final ground level.
    pub diabatic_error: f64,
}

/// Combine counter-rotated branch evolutions per the plan's weights.
/// `final_frame` supplies the |g(1)> used for the reported diabatic error.
pub fn combine(
    results: &[EvolutionResult],
    plan: &CombinationPlan,
    final_frame: &SpectralFrame,
) -> Result<GadgetOutcome> {
    plan.validate()?;
    if results.len() != plan.branches.len() {
        return Err(Error::InvalidPlan(format!(
            "{} results for {} branches",
            results.len(),
            plan.branches.len()
        )));
    }
    let dim = results[0].dim();
    for r in results {
        if r.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: r.dim(),
            });
        }
    }
    let mut raw = CVector::zeros(dim);
    for (r, b) in results.iter().zip(&plan.branches) {
        raw += &r.counter_rotated_state * C64::new(b.weight, 0.0);
    }
    let norm = raw.norm();
    if norm < 1e-12 {
        return Err(Error::DegenerateCombination { norm });
    }
    let success_state = &raw / C64::new(norm, 0.0);
    let g = final_frame.ground();
    let overlap = (g.adjoint() * &success_state)[(0, 0)];
    let diabatic_error = (&success_state - g * overlap).norm();
    Ok(GadgetOutcome {
        raw_combination: raw,
        success_state,
        p_success: norm * norm,
        diabatic_error,
    })
}

/// ||(U_A - U_B) |psi>|| for two counter-rotated branches; the gadget's
/// success probability obeys p >= 1 - this^2.
pub fn branch_difference_norm(a: &EvolutionResult, b: &EvolutionResult) -> f64 {
    (&a.counter_rotated_state - &b.counter_rotated_state).norm()
}

/// Leading-order amplitude left on tracked level `n` (n != ground) after
/// evolving for time T along the track's schedule, including the
/// e^{-i T int E_n} prefactor:
///
///   e^{-i T int E_n} [ <ndot|g> e^{i T int_0^s gamma} / (i gamma(s) T) ]_0^1,
///   gamma = E_n - E_g.
pub fn predict_first_order(track: &SpectralTrack, total_time: f64, n: usize) -> Result<C64> {
    let g = track.ground_index();
    if n == g {
        return Err(Error::InvalidPlan("level must differ from the ground label".into()));
    }
    let gap_int = track.gap_integral(n, g)?;
    let energy_int = track.energy_integral(n)?;
    let bracket = |s: f64, phase: f64| -> Result<C64> {
        let frame = track.frame_at(s);
        let gamma = frame.energies[n] - frame.energies[g];
        let coupling = track.coupling(s, n, g)?;
        let osc = C64::new(0.0, total_time * phase).exp();
        Ok(coupling * osc / (C64::i() * C64::new(gamma * total_time, 0.0)))
    };
    let b1 = bracket(1.0, gap_int)?;
    let b0 = bracket(0.0, 0.0)?;
    let prefactor = C64::new(0.0, -total_time * energy_int).exp();
    Ok(prefactor * (b1 - b0))
}

/// Order-m boundary-cancellation analogue of [`predict_first_order`]:
/// schedules with f^(1..m) = 0 at both endpoints leave
///
///   e^{-i T int E_n} (-1)^m [ <n|d^{m+1}H/ds^{m+1}|g> e^{i T int gamma}
///                             / ((iT)^{m+1} gamma^{m+2}) ]_0^1.
///
/// m = 0 reduces exactly to the first-order expression.
pub fn predict_first_order_bc(
    track: &SpectralTrack,
    total_time: f64,
    n: usize,
    m: usize,
) -> Result<C64> {
    let g = track.ground_index();
    if n == g {
        return Err(Error::InvalidPlan("level must differ from the ground label".into()));
    }
    let path = track.path();
    for &s in &[0.0, 1.0] {
        for j in 1..=m {
            let v = path.deriv(s, j);
            if v.abs() > BOUNDARY_FLATNESS_TOL {
                return Err(Error::BoundaryNotFlat {
                    order: j,
                    s,
                    value: v.abs(),
                    limit: BOUNDARY_FLATNESS_TOL,
                });
            }
        }
    }
    let gap_int = track.gap_integral(n, g)?;
    let energy_int = track.energy_integral(n)?;
    let bracket = |s: f64, phase: f64| -> Result<C64> {
        let frame = track.frame_at(s);
        let gamma = frame.energies[n] - frame.energies[g];
        if gamma.abs() < crate::spectral::GAP_COLLAPSE_TOL {
            return Err(Error::GapCollapse {
                s,
                upper: n,
                lower: g,
                gap: gamma,
            });
        }
        // with flat boundaries only dH/df * f^(m+1) survives in d^{m+1}H/ds^{m+1}
        let hd = track.family().deriv_f(path.value(s));
        let elem = (frame.level(n).adjoint() * hd.matrix() * frame.level(g))[(0, 0)]
            * C64::new(path.deriv(s, m + 1), 0.0);
        let osc = C64::new(0.0, total_time * phase).exp();
        let denom = (C64::i() * C64::new(total_time, 0.0)).powu(m as u32 + 1)
            * C64::new(gamma.powi(m as i32 + 2), 0.0);
        Ok(elem * osc / denom)
    };
    let b1 = bracket(1.0, gap_int)?;
    let b0 = bracket(0.0, 0.0)?;
    let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
    let prefactor = C64::new(0.0, -total_time * energy_int).exp();
    Ok(prefactor * C64::new(sign, 0.0) * (b1 - b0))
}

/// One branch of a combined prediction.
pub struct PredictBranch<'a> {
    pub track: &'a SpectralTrack,
    pub time: f64,
    pub weight: f64,
}

/// Predicted amplitude of the counter-rotated, weighted combination on
/// reference level `n`.  Branch levels are translated through the endpoint
/// correspondence of [`level_map`], and each branch prediction is rotated
/// into the reference endpoint gauge.  `bc_order` selects the order-m
/// predictor (None = plain first order).
pub fn predict_combined(
    reference: &SpectralTrack,
    branches: &[PredictBranch],
    n: usize,
    bc_order: Option<usize>,
) -> Result<C64> {
    let mut total = C64::new(0.0, 0.0);
    for b in branches {
        let (lvl, endpoint_overlap) = if std::ptr::eq(b.track, reference) {
            (n, C64::new(1.0, 0.0))
        } else {
            let map = level_map(reference, b.track)?;
            map[n]
        };
        let amp = match bc_order {
            Some(m) => predict_first_order_bc(b.track, b.time, lvl, m)?,
            None => predict_first_order(b.track, b.time, lvl)?,
        };
        let counter = C64::new(
            0.0,
            b.time * b.track.energy_integral(b.track.ground_index())?,
        )
        .exp();
        total += endpoint_overlap * counter * amp * C64::new(b.weight, 0.0);
    }
    Ok(total)
}

/// Cost metric of a combination: max_j of (integral of ||H_j(s)|| ds) T_j,
/// divided by the gadget's success probability.
pub fn cost(branches: &[(&SpectralTrack, f64)], p_success: f64) -> Result<f64> {
    if p_success <= 0.0 {
        return Err(Error::NonPositiveSuccess(p_success));
    }
    let mut worst = 0.0_f64;
    for (track, t) in branches {
        if *t <= 0.0 {
            return Err(Error::InvalidPlan(format!("non-positive branch time {t}")));
        }
        worst = worst.max(track.op_norm_integral() * t);
    }
    Ok(worst / p_success)
}
