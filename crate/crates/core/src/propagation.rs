//! Numerically exact time-ordered evolution under H(f(s)).
//!
//! The state is advanced with midpoint exponentials exp(-i H(s_mid) T h):
//! each step is exactly unitary (small dimensions use an eigendecomposition,
//! large ones scaling-and-squaring).  The order-4 scheme composes three
//! midpoint steps with the standard triple-jump coefficients.  Integration
//! always splits at schedule breakpoints (the interpolations are only
//! piecewise smooth there) and doubles the step count until two successive
//! results agree to the requested tolerance.
//!
//! [`reference_evolve`] is the brute-force ordered product of r midpoint
//! exponentials at fixed r; it is the oracle the adaptive integrator is
//! verified against and deliberately shares no stepping logic with it.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::hamiltonians::{C64, CMatrix, HamiltonianFamily};
use crate::paths::SchedulePath;
use crate::spectral::SpectralTrack;

pub type CVector = DVector<C64>;

/// Eigendecomposition is cheaper and exactly unitary below this dimension.
const EXPM_EIGEN_DIM_LIMIT: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepOrder {
    Two,
    Four,
}

#[derive(Debug, Clone, Copy)]
pub struct IntegratorOptions {
    /// Step count of the first attempt; doubled until converged.
    pub base_steps: usize,
    pub order: StepOrder,
    /// Split the integration interval at schedule breakpoints.
    pub split_breakpoints: bool,
    /// Two-norm agreement required between successive step doublings.
    pub tolerance: f64,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            base_steps: 4096,
            order: StepOrder::Four,
            split_breakpoints: true,
            tolerance: 1e-9,
        }
    }
}

impl IntegratorOptions {
    pub fn validate(&self) -> Result<()> {
        if self.base_steps < 16 {
            return Err(Error::Config(format!(
                "base step count must be >= 16, got {}",
                self.base_steps
            )));
        }
        if self.tolerance <= 0.0 {
            return Err(Error::Config("integrator tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// Final state of one evolution together with its accumulated ground phase.
#[derive(Debug, Clone)]
pub struct EvolutionResult {
    pub final_state: CVector,
    /// Integral of the tracked ground energy over s, times T.
    pub dynamical_phase: f64,
    /// exp(+i dynamical_phase) * final_state.
    pub counter_rotated_state: CVector,
    pub total_time: f64,
    pub path_label: String,
    pub steps_used: usize,
}

impl EvolutionResult {
    pub fn new(
        final_state: CVector,
        dynamical_phase: f64,
        total_time: f64,
        path_label: impl Into<String>,
        steps_used: usize,
    ) -> Self {
        let rot = C64::new(0.0, dynamical_phase).exp();
        let counter_rotated_state = &final_state * rot;
        Self {
            final_state,
            dynamical_phase,
            counter_rotated_state,
            total_time,
            path_label: path_label.into(),
            steps_used,
        }
    }

    pub fn dim(&self) -> usize {
        self.final_state.len()
    }
}

/// Apply exp(-i tau H) to `state` exactly (unitary to machine precision).
pub fn apply_expm(h: &CMatrix, tau: f64, state: &CVector) -> CVector {
    if h.nrows() <= EXPM_EIGEN_DIM_LIMIT {
        let se = h.clone().symmetric_eigen();
        let mut y = se.eigenvectors.adjoint() * state;
        for (i, amp) in y.iter_mut().enumerate() {
            *amp *= C64::new(0.0, -tau * se.eigenvalues[i]).exp();
        }
        &se.eigenvectors * y
    } else {
        let gen = h.map(|z| z * C64::new(0.0, -tau));
        gen.exp() * state
    }
}

fn segment_bounds(path: &SchedulePath, split: bool) -> Vec<(f64, f64)> {
    if !split {
        return vec![(0.0, 1.0)];
    }
    let mut bounds = vec![0.0];
    bounds.extend(path.breakpoints());
    bounds.push(1.0);
    bounds.windows(2).map(|w| (w[0], w[1])).collect()
}

fn steps_for(total: usize, len: f64) -> usize {
    ((total as f64) * len).round().max(1.0) as usize
}

/// One pass of the composed midpoint scheme with ~`total_steps` steps.
fn propagate_once(
    family: &HamiltonianFamily,
    path: &SchedulePath,
    total_time: f64,
    start: &CVector,
    total_steps: usize,
    order: StepOrder,
    segments: &[(f64, f64)],
) -> CVector {
    // triple-jump composition of the symmetric midpoint step
    let gamma1 = 1.0 / (2.0 - 2.0_f64.powf(1.0 / 3.0));
    let gamma2 = 1.0 - 2.0 * gamma1;
    let substeps: &[f64] = match order {
        StepOrder::Two => &[1.0],
        StepOrder::Four => &[gamma1, gamma2, gamma1],
    };
    let mut state = start.clone();
    for &(a, b) in segments {
        let n = steps_for(total_steps, b - a);
        let h = (b - a) / n as f64;
        for j in 0..n {
            let t0 = a + j as f64 * h;
            let mut walked = 0.0;
            for &c in substeps {
                let s_mid = t0 + (walked + 0.5 * c) * h;
                let ham = family.value_at(path.value(s_mid));
                state = apply_expm(ham.matrix(), total_time * c * h, &state);
                walked += c;
            }
        }
    }
    state
}

/// Time-ordered evolution with a precomputed ground-energy integral
/// (callers sweeping many T over one schedule reuse the integral).
pub fn evolve_with_phase(
    family: &HamiltonianFamily,
    path: &SchedulePath,
    total_time: f64,
    start: &CVector,
    opts: &IntegratorOptions,
    ground_energy_integral: f64,
) -> Result<EvolutionResult> {
    opts.validate()?;
    if total_time <= 0.0 {
        return Err(Error::Config(format!("total time must be positive, got {total_time}")));
    }
    if (start.norm() - 1.0).abs() > 1e-8 {
        return Err(Error::Config(format!(
            "start state norm {} is not 1",
            start.norm()
        )));
    }
    let segments = segment_bounds(path, opts.split_breakpoints);
    let mut steps = opts.base_steps;
    let mut prev = propagate_once(family, path, total_time, start, steps, opts.order, &segments);
    let mut last_diff = f64::INFINITY;
    for _ in 0..20 {
        steps *= 2;
        let cur = propagate_once(family, path, total_time, start, steps, opts.order, &segments);
        last_diff = (&cur - &prev).norm();
        if last_diff < opts.tolerance {
            return Ok(EvolutionResult::new(
                cur,
                ground_energy_integral * total_time,
                total_time,
                path.label(),
                steps,
            ));
        }
        prev = cur;
    }
    Err(Error::IntegratorError {
        tolerance: opts.tolerance,
        doublings: 20,
        last_diff,
    })
}

/// Time-ordered evolution U(1, 0) applied to `start`, converged by step
/// doubling; the dynamical phase comes from a spectral track built here.
pub fn evolve(
    family: &HamiltonianFamily,
    path: &SchedulePath,
    total_time: f64,
    start: &CVector,
    opts: &IntegratorOptions,
) -> Result<EvolutionResult> {
    let track = SpectralTrack::new(family.clone(), path.clone(), 128)?;
    let ground = track.energy_integral(track.ground_index())?;
    evolve_with_phase(family, path, total_time, start, opts, ground)
}

/// Brute-force ordered product of r midpoint exponentials (split at
/// breakpoints, steps distributed proportionally).  This is the oracle for
/// [`evolve`]; it uses its own plain loop on purpose.
pub fn reference_evolve(
    family: &HamiltonianFamily,
    path: &SchedulePath,
    total_time: f64,
    start: &CVector,
    r: usize,
) -> CVector {
    assert!(r >= 1, "reference product needs at least one factor");
    let mut state = start.clone();
    let mut bounds = vec![0.0];
    bounds.extend(path.breakpoints());
    bounds.push(1.0);
    for w in bounds.windows(2) {
        let (a, b) = (w[0], w[1]);
        let n = ((r as f64) * (b - a)).round().max(1.0) as usize;
        let h = (b - a) / n as f64;
        for j in 0..n {
            let s_mid = a + (j as f64 + 0.5) * h;
            let ham = family.value_at(path.value(s_mid));
            state = apply_expm(ham.matrix(), total_time * h, &state);
        }
    }
    state
}

/// Norm of the component of `state` orthogonal to the tracked ground level
/// at s = 1; the plotted diabatic error.
pub fn ground_overlap_error(state: &CVector, track: &SpectralTrack) -> f64 {
    let g = track.end_frame().ground();
    let overlap = (g.adjoint() * state)[(0, 0)];
    (state - g * overlap).norm()
}

/// Amplitude <n(1)|state> in the track's endpoint gauge.
pub fn level_amplitude(state: &CVector, track: &SpectralTrack, level: usize) -> C64 {
    (track.end_frame().level(level).adjoint() * state)[(0, 0)]
}
