//! Solvers that pick times, mixing angles and weights so that combined
//! evolutions cancel diabatic transitions.
//!
//! * [`solve_partial`]: dual with an opposing slope at s = 1 only; the
//!   endpoint terms cancel when T_B G_B = T_A G_A + (2n+1) pi and
//!   tan^2 theta = T_B / T_A.
//! * [`solve_complete`]: dual with opposing slopes at both ends; the time
//!   relation becomes T_B G_B = T_A G_A + 2n pi, so T_B can sit right next
//!   to T_A.
//! * [`solve_bc_hybrid`]: order-m boundary-cancellation version (flat
//!   schedules, opposing (m+1)-st derivatives); weights generalize to
//!   tan^2 theta = (T_B/T_A)^{m+1}.
//! * [`symmetric_all`]: for families whose spectrum is mirror symmetric in
//!   f, a dual plus its time reverse at theta = pi/4 and equal times
//!   suppresses every transition at once.
//! * [`solve_three_level`] / [`three_level_times`]: discrete times
//!   cancelling two transitions simultaneously from the 2x2 gap-integral
//!   system.
//! * [`four_unitary_scheme`]: four branches cancelling two transitions at
//!   tunable times, with the phase-matching time found by scan.

use nalgebra::Matrix2;
use serde::Serialize;

use crate::combiner::{predict_combined, predict_first_order, predict_first_order_bc,
                      CombinationPlan, PredictBranch};
use crate::error::{Error, Result};
use crate::hamiltonians::HamiltonianFamily;
use crate::paths::{partial_antisym_dual, time_reversed, SchedulePath};
use crate::spectral::{level_map, spectrum_mirror_defect, SpectralTrack};

use std::f64::consts::PI;

/// Tolerance on the boundary-derivative relations a dual must satisfy
/// before a solver will combine it with the primary.
const DUAL_RELATION_TOL: f64 = 1e-7;

/// Mirror-symmetry defect allowed by the all-transition scheme.
pub const MIRROR_SYMMETRY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Serialize)]
pub struct LevelDiagnostic {
    pub level: usize,
    /// Gap integral per branch (in that branch's own labels).
    pub gap_integrals: Vec<f64>,
    /// |combined predicted amplitude| at the solved plan.
    pub predicted_combined: f64,
    /// max over branches of |single-branch predicted amplitude|.
    pub max_single_predicted: f64,
}

#[derive(Debug, Clone, Serialize, Default)]
pub struct SchemeDiagnostics {
    pub levels: Vec<LevelDiagnostic>,
    pub notes: Vec<String>,
}

/// A solved combination: plan, the schedules behind each branch, and the
/// integers/diagnostics that produced it.
#[derive(Debug, Clone)]
pub struct SchemeSolution {
    pub plan: CombinationPlan,
    pub paths: Vec<SchedulePath>,
    pub target_levels: Vec<usize>,
    pub phase_integers: Vec<i64>,
    pub diagnostics: SchemeDiagnostics,
}

impl SchemeSolution {
    pub fn theta(&self) -> Option<f64> {
        self.plan.theta
    }

    pub fn branch_time(&self, idx: usize) -> f64 {
        self.plan.branches[idx].time
    }
}

fn ensure_same_family(a: &SpectralTrack, b: &SpectralTrack) -> Result<()> {
    if a.dim() != b.dim() || a.family().label() != b.family().label() {
        return Err(Error::InvalidPlan(format!(
            "branches use different families: {} vs {}",
            a.family().label(),
            b.family().label()
        )));
    }
    Ok(())
}

fn check_partial_relations(f_a: &SchedulePath, f_b: &SchedulePath) -> Result<()> {
    let scale = 1.0 + f_a.deriv(0.0, 1).abs() + f_a.deriv(1.0, 1).abs();
    let d0 = (f_b.deriv(0.0, 1) - f_a.deriv(0.0, 1)).abs();
    let d1 = (f_b.deriv(1.0, 1) + f_a.deriv(1.0, 1)).abs();
    if d0 > DUAL_RELATION_TOL * scale || d1 > DUAL_RELATION_TOL * scale {
        return Err(Error::InvalidPath(format!(
            "dual is not partially anti-symmetric against the primary \
             (defects {d0:e} at s=0, {d1:e} at s=1)"
        )));
    }
    Ok(())
}

fn check_complete_relations(f_a: &SchedulePath, f_b: &SchedulePath) -> Result<()> {
    let scale = 1.0 + f_a.deriv(0.0, 1).abs() + f_a.deriv(1.0, 1).abs();
    let d0 = (f_b.deriv(0.0, 1) + f_a.deriv(0.0, 1)).abs();
    let d1 = (f_b.deriv(1.0, 1) + f_a.deriv(1.0, 1)).abs();
    if d0 > DUAL_RELATION_TOL * scale || d1 > DUAL_RELATION_TOL * scale {
        return Err(Error::InvalidPath(format!(
            "dual is not completely anti-symmetric against the primary \
             (defects {d0:e} at s=0, {d1:e} at s=1)"
        )));
    }
    Ok(())
}

fn paths_coincide(f_a: &SchedulePath, f_b: &SchedulePath) -> bool {
    (0..=100).all(|k| {
        let s = k as f64 / 100.0;
        (f_a.value(s) - f_b.value(s)).abs() < 1e-12
    })
}

/// Gap integrals of `level` (reference labels) on both tracks, translated
/// through the endpoint correspondence.
fn branch_gap_integrals(
    track_a: &SpectralTrack,
    track_b: &SpectralTrack,
    level: usize,
) -> Result<(f64, f64, usize)> {
    let map = level_map(track_a, track_b)?;
    let g_b_label = map[track_a.ground_index()].0;
    let level_b = map[level].0;
    let g_a = track_a.gap_integral(level, track_a.ground_index())?;
    let g_b = track_b.gap_integral(level_b, g_b_label)?;
    Ok((g_a, g_b, level_b))
}

fn two_branch_diagnostics(
    track_a: &SpectralTrack,
    track_b: &SpectralTrack,
    t_a: f64,
    t_b: f64,
    theta: f64,
    levels: &[usize],
    bc_order: Option<usize>,
) -> Result<SchemeDiagnostics> {
    let w_a = theta.cos().powi(2);
    let w_b = theta.sin().powi(2);
    let map = level_map(track_a, track_b)?;
    let mut out = SchemeDiagnostics::default();
    for &level in levels {
        let branches = [
            PredictBranch { track: track_a, time: t_a, weight: w_a },
            PredictBranch { track: track_b, time: t_b, weight: w_b },
        ];
        let combined = predict_combined(track_a, &branches, level, bc_order)?.norm();
        let single = |track: &SpectralTrack, t: f64, lvl: usize| -> Result<f64> {
            Ok(match bc_order {
                Some(m) => predict_first_order_bc(track, t, lvl, m)?.norm(),
                None => predict_first_order(track, t, lvl)?.norm(),
            })
        };
        let sa = single(track_a, t_a, level)?;
        let sb = single(track_b, t_b, map[level].0)?;
        let (g_a, g_b, _) = branch_gap_integrals(track_a, track_b, level)?;
        out.levels.push(LevelDiagnostic {
            level,
            gap_integrals: vec![g_a, g_b],
            predicted_combined: combined,
            max_single_predicted: sa.max(sb),
        });
    }
    Ok(out)
}

/// Partially anti-symmetric combination: for any primary time T_A, set
///
///   T_B = (G_A T_A + (2n+1) pi) / G_B,   theta = arctan sqrt(T_B / T_A).
pub fn solve_partial(
    track_a: &SpectralTrack,
    track_b: &SpectralTrack,
    t_a: f64,
    level: usize,
    phase_index: u32,
) -> Result<SchemeSolution> {
    ensure_same_family(track_a, track_b)?;
    check_partial_relations(track_a.path(), track_b.path())?;
    let (g_a, g_b, _) = branch_gap_integrals(track_a, track_b, level)?;
    if g_b.abs() < 1e-12 {
        return Err(Error::GapCollapse { s: f64::NAN, upper: level, lower: 0, gap: g_b });
    }
    let t_b = (g_a * t_a + (2.0 * phase_index as f64 + 1.0) * PI) / g_b;
    let theta = (t_b / t_a).sqrt().atan();
    let plan = CombinationPlan::two_branch(
        theta,
        track_a.path().label(),
        t_a,
        track_b.path().label(),
        t_b,
    );
    let diagnostics =
        two_branch_diagnostics(track_a, track_b, t_a, t_b, theta, &[level], None)?;
    Ok(SchemeSolution {
        plan,
        paths: vec![track_a.path().clone(), track_b.path().clone()],
        target_levels: vec![level],
        phase_integers: vec![phase_index as i64],
        diagnostics,
    })
}

/// Completely anti-symmetric combination: T_B G_B = T_A G_A modulo 2 pi.
/// `phase_index` of None picks the integer minimizing |T_B - T_A|.
pub fn solve_complete(
    track_a: &SpectralTrack,
    track_b: &SpectralTrack,
    t_a: f64,
    level: usize,
    phase_index: Option<i64>,
) -> Result<SchemeSolution> {
    ensure_same_family(track_a, track_b)?;
    if paths_coincide(track_a.path(), track_b.path()) {
        return Err(Error::InvalidPlan(
            "dual path coincides with the primary; no cancellation condition to solve".into(),
        ));
    }
    check_complete_relations(track_a.path(), track_b.path())?;
    let (g_a, g_b, _) = branch_gap_integrals(track_a, track_b, level)?;
    let mut n = match phase_index {
        Some(n) => n,
        None => (((g_b - g_a) * t_a) / (2.0 * PI)).round() as i64,
    };
    let mut t_b = (g_a * t_a + 2.0 * n as f64 * PI) / g_b;
    // keep the time positive when an explicit integer was not requested
    while phase_index.is_none() && t_b <= 0.0 {
        n += 1;
        t_b = (g_a * t_a + 2.0 * n as f64 * PI) / g_b;
    }
    if t_b <= 0.0 {
        return Err(Error::InvalidPlan(format!(
            "phase index {n} gives non-positive dual time {t_b}"
        )));
    }
    let theta = (t_b / t_a).sqrt().atan();
    let plan = CombinationPlan::two_branch(
        theta,
        track_a.path().label(),
        t_a,
        track_b.path().label(),
        t_b,
    );
    let diagnostics =
        two_branch_diagnostics(track_a, track_b, t_a, t_b, theta, &[level], None)?;
    Ok(SchemeSolution {
        plan,
        paths: vec![track_a.path().clone(), track_b.path().clone()],
        target_levels: vec![level],
        phase_integers: vec![n],
        diagnostics,
    })
}

/// Boundary-cancellation hybrid of order m: both schedules are flat to
/// order m at the ends, the dual's (m+1)-st derivatives oppose the
/// primary's, and the weights satisfy tan^2 theta = (T_B/T_A)^{m+1} with
/// the complete-combination time relation.
pub fn solve_bc_hybrid(
    track_a: &SpectralTrack,
    track_b: &SpectralTrack,
    t_a: f64,
    level: usize,
    m: usize,
    phase_index: Option<i64>,
) -> Result<SchemeSolution> {
    ensure_same_family(track_a, track_b)?;
    let (f_a, f_b) = (track_a.path(), track_b.path());
    for &s in &[0.0, 1.0] {
        for j in 1..=m {
            for (label, f) in [("primary", f_a), ("dual", f_b)] {
                let v = f.deriv(s, j);
                if v.abs() > crate::combiner::BOUNDARY_FLATNESS_TOL {
                    return Err(Error::BoundaryNotFlat {
                        order: j,
                        s,
                        value: v.abs(),
                        limit: crate::combiner::BOUNDARY_FLATNESS_TOL,
                    });
                }
                let _ = label;
            }
        }
        let anti = (f_b.deriv(s, m + 1) + f_a.deriv(s, m + 1)).abs();
        let scale = 1.0 + f_a.deriv(s, m + 1).abs();
        if anti > DUAL_RELATION_TOL * scale {
            return Err(Error::InvalidPath(format!(
                "dual's order-{} derivative does not oppose the primary's at s = {s} (defect {anti:e})",
                m + 1
            )));
        }
    }
    let (g_a, g_b, _) = branch_gap_integrals(track_a, track_b, level)?;
    let mut n = match phase_index {
        Some(n) => n,
        None => (((g_b - g_a) * t_a) / (2.0 * PI)).round() as i64,
    };
    let mut t_b = (g_a * t_a + 2.0 * n as f64 * PI) / g_b;
    while phase_index.is_none() && t_b <= 0.0 {
        n += 1;
        t_b = (g_a * t_a + 2.0 * n as f64 * PI) / g_b;
    }
    let theta = (t_b / t_a).powf((m as f64 + 1.0) / 2.0).atan();
    let plan = CombinationPlan::two_branch(
        theta,
        f_a.label(),
        t_a,
        f_b.label(),
        t_b,
    );
    let diagnostics =
        two_branch_diagnostics(track_a, track_b, t_a, t_b, theta, &[level], Some(m))?;
    Ok(SchemeSolution {
        plan,
        paths: vec![f_a.clone(), f_b.clone()],
        target_levels: vec![level],
        phase_integers: vec![n],
        diagnostics,
    })
}

/// All-transition suppression for mirror-symmetric spectra: the dual is a
/// partially anti-symmetric continuation of the base schedule and the
/// primary is its time reverse, combined at theta = pi/4 with equal times.
///
/// Returns the solution plus the tracks for both branches (callers keep
/// sweeping T over the same tracks).
pub fn symmetric_all(
    family: &HamiltonianFamily,
    f_base: &SchedulePath,
    delta: f64,
    t: f64,
    grid_points: usize,
) -> Result<(SchemeSolution, SpectralTrack, SpectralTrack)> {
    let defect = spectrum_mirror_defect(family, f_base, 256);
    if defect > MIRROR_SYMMETRY_TOL {
        return Err(Error::SpectrumNotSymmetric {
            defect,
            limit: MIRROR_SYMMETRY_TOL,
        });
    }
    let rate_defect = (f_base.deriv(0.0, 1) - f_base.deriv(1.0, 1)).abs();
    if rate_defect > 1e-8 * (1.0 + f_base.deriv(0.0, 1).abs()) {
        return Err(Error::AsymmetricBoundaryRates { defect: rate_defect });
    }
    let f_b = partial_antisym_dual(f_base, delta)?;
    let f_a = time_reversed(&f_b);
    let track_a = SpectralTrack::new(family.clone(), f_a.clone(), grid_points)?;
    let track_b = SpectralTrack::new(family.clone(), f_b.clone(), grid_points)?;
    let theta = std::f64::consts::FRAC_PI_4;
    let plan = CombinationPlan::two_branch(theta, f_a.label(), t, f_b.label(), t);
    let levels: Vec<usize> = (0..track_a.dim())
        .filter(|&n| n != track_a.ground_index())
        .collect();
    let mut diagnostics =
        two_branch_diagnostics(&track_a, &track_b, t, t, theta, &levels, None)?;
    for d in &diagnostics.levels {
        let (ga, gb) = (d.gap_integrals[0], d.gap_integrals[1]);
        if (ga - gb).abs() > MIRROR_SYMMETRY_TOL * (1.0 + ga.abs()) {
            return Err(Error::SpectrumNotSymmetric {
                defect: (ga - gb).abs(),
                limit: MIRROR_SYMMETRY_TOL,
            });
        }
    }
    diagnostics
        .notes
        .push(format!("spectrum mirror defect {defect:e}"));
    let solution = SchemeSolution {
        plan,
        paths: vec![f_a, f_b],
        target_levels: levels,
        phase_integers: vec![],
        diagnostics,
    };
    Ok((solution, track_a, track_b))
}

/// Solve the 2x2 gap-integral system
///
///   [G_A(e1)  G_B(e1); G_A(e2)  G_B(e2)] (T_A, T_B)^T
///       = ((2n+1) pi, (2m+1) pi)^T
///
/// for positive times.  With `integers` of None, scans n, m <= 64 for the
/// smallest pair (by n + m, then n) giving positive times.
pub fn three_level_times(
    g: &Matrix2<f64>,
    integers: Option<(u32, u32)>,
) -> Result<(f64, f64, (u32, u32))> {
    let det = g[(0, 0)] * g[(1, 1)] - g[(0, 1)] * g[(1, 0)];
    let scale = g.iter().fold(0.0_f64, |m, x| m.max(x.abs())).powi(2);
    if det.abs() <= 1e-10 * scale.max(1e-30) {
        return Err(Error::SingularSystem { det });
    }
    let solve = |n: u32, m: u32| -> (f64, f64) {
        let rhs = ((2.0 * n as f64 + 1.0) * PI, (2.0 * m as f64 + 1.0) * PI);
        let t_a = (rhs.0 * g[(1, 1)] - rhs.1 * g[(0, 1)]) / det;
        let t_b = (rhs.1 * g[(0, 0)] - rhs.0 * g[(1, 0)]) / det;
        (t_a, t_b)
    };
    if let Some((n, m)) = integers {
        let (t_a, t_b) = solve(n, m);
        if t_a <= 0.0 || t_b <= 0.0 {
            return Err(Error::NoPositiveTimes { scanned: 0 });
        }
        return Ok((t_a, t_b, (n, m)));
    }
    const SCAN: u32 = 64;
    for total in 0..=(2 * SCAN) {
        for n in 0..=total.min(SCAN) {
            let m = total - n;
            if m > SCAN {
                continue;
            }
            let (t_a, t_b) = solve(n, m);
            if t_a > 0.0 && t_b > 0.0 {
                return Ok((t_a, t_b, (n, m)));
            }
        }
    }
    Err(Error::NoPositiveTimes { scanned: SCAN })
}

/// Discrete-time cancellation of two transitions with two branches: times
/// from [`three_level_times`] over the branch gap integrals, mixing angle
/// from the usual weight relation.
pub fn solve_three_level(
    track_a: &SpectralTrack,
    track_b: &SpectralTrack,
    e1: usize,
    e2: usize,
    integers: Option<(u32, u32)>,
) -> Result<SchemeSolution> {
    ensure_same_family(track_a, track_b)?;
    check_partial_relations(track_a.path(), track_b.path())?;
    let (ga1, gb1, _) = branch_gap_integrals(track_a, track_b, e1)?;
    let (ga2, gb2, _) = branch_gap_integrals(track_a, track_b, e2)?;
    let g = Matrix2::new(ga1, gb1, ga2, gb2);
    let (t_a, t_b, (n, m)) = three_level_times(&g, integers)?;
    let theta = (t_b / t_a).sqrt().atan();
    let plan = CombinationPlan::two_branch(
        theta,
        track_a.path().label(),
        t_a,
        track_b.path().label(),
        t_b,
    );
    let diagnostics =
        two_branch_diagnostics(track_a, track_b, t_a, t_b, theta, &[e1, e2], None)?;
    Ok(SchemeSolution {
        plan,
        paths: vec![track_a.path().clone(), track_b.path().clone()],
        target_levels: vec![e1, e2],
        phase_integers: vec![n as i64, m as i64],
        diagnostics,
    })
}

/// How the scan time of [`four_unitary_scheme`] is chosen.
#[derive(Debug, Clone, Copy)]
pub enum TcChoice {
    /// Use exactly this time (fails with `DuplicateBranches` if it
    /// collapses onto T_A, or `PhaseMatchingImpossible` if infeasible).
    Exact(f64),
    /// Scan upward from this time for the first feasible root.
    ScanFrom(f64),
}

/// Four-branch scheme cancelling transitions to both e1 and e2 at tunable
/// times: branches A, C run the primary schedule at times T_A, T_C and
/// branches B, D run the dual at the matched times; the remaining freedom
/// (T_C and the weight ratio) is fixed by matching the residual phases of
/// the second transition.
pub fn four_unitary_scheme(
    track_a: &SpectralTrack,
    track_b: &SpectralTrack,
    t_a: f64,
    e1: usize,
    e2: usize,
    n: u32,
    m: u32,
    t_c: TcChoice,
) -> Result<SchemeSolution> {
    ensure_same_family(track_a, track_b)?;
    check_partial_relations(track_a.path(), track_b.path())?;
    let (ga1, gb1, _) = branch_gap_integrals(track_a, track_b, e1)?;
    let (ga2, gb2, _) = branch_gap_integrals(track_a, track_b, e2)?;
    let rho = gb2 / gb1;
    // the stated obstruction: the phase coefficient must not vanish mod 2 pi
    let kappa = (ga2 + rho * ga1).rem_euclid(2.0 * PI);
    if kappa.min(2.0 * PI - kappa) < 1e-9 {
        return Err(Error::PhaseMatchingImpossible(format!(
            "G_A(e2) + (G_B(e2)/G_B(e1)) G_A(e1) = {:.6} is 0 mod 2 pi",
            ga2 + rho * ga1
        )));
    }
    let odd = |k: u32| (2.0 * k as f64 + 1.0) * PI;
    // residual phase difference between the T_A and T_C brackets
    let phi = |t: f64, k: u32| 0.5 * (ga2 * t + rho * (ga1 * t + odd(k)));
    let chi = |t: f64, k: u32| 0.5 * (ga2 * t - rho * (ga1 * t + odd(k)));
    let dphi = |tc: f64| phi(t_a, n) - phi(tc, m);

    let feasible_c = |tc: f64| -> Option<f64> {
        let d = dphi(tc);
        let sigma = d.cos().signum();
        if d.sin().abs() > 1e-8 {
            return None;
        }
        let (ca, cc) = (chi(t_a, n).cos(), chi(tc, m).cos());
        if cc.abs() < 1e-12 {
            return None;
        }
        let c = -sigma * (tc / t_a) * ca / cc;
        (c > 1e-12).then_some(c)
    };

    let (t_c_solved, c_ratio) = match t_c {
        TcChoice::Exact(tc) => {
            if (tc - t_a).abs() < 1e-9 {
                return Err(Error::DuplicateBranches {
                    diff: (tc - t_a).abs(),
                });
            }
            let c = feasible_c(tc).ok_or_else(|| {
                Error::PhaseMatchingImpossible(format!(
                    "requested T_C = {tc} does not match phases (sin dphi = {:e})",
                    dphi(tc).sin()
                ))
            })?;
            (tc, c)
        }
        TcChoice::ScanFrom(start) => {
            let g_min = [ga1, gb1, ga2, gb2]
                .into_iter()
                .fold(f64::INFINITY, f64::min);
            let span = 4.0 * PI / g_min;
            let grid = 10_000;
            let mut found = None;
            let mut prev_t = start;
            let mut prev_sin = dphi(prev_t).sin();
            for k in 1..=grid {
                let t = start + span * k as f64 / grid as f64;
                let cur_sin = dphi(t).sin();
                if prev_sin == 0.0 || prev_sin.signum() != cur_sin.signum() {
                    // bisection refinement of the root
                    let (mut lo, mut hi) = (prev_t, t);
                    for _ in 0..64 {
                        let mid = 0.5 * (lo + hi);
                        if (hi - lo) < 1e-8 {
                            break;
                        }
                        if dphi(lo).sin().signum() == dphi(mid).sin().signum() {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    let root = 0.5 * (lo + hi);
                    if (root - t_a).abs() > 1e-6 {
                        if let Some(c) = feasible_c(root) {
                            found = Some((root, c));
                            break;
                        }
                    }
                }
                prev_t = t;
                prev_sin = cur_sin;
            }
            found.ok_or_else(|| {
                Error::PhaseMatchingImpossible(format!(
                    "no sign-feasible phase-matching time in [{start}, {}]",
                    start + span
                ))
            })?
        }
    };

    let t_b = (ga1 * t_a + odd(n)) / gb1;
    let t_d = (ga1 * t_c_solved + odd(m)) / gb1;
    let a_raw = 1.0;
    let b_raw = a_raw * t_b / t_a;
    let c_raw = c_ratio * a_raw;
    let d_raw = c_raw * t_d / t_c_solved;
    let sum = a_raw + b_raw + c_raw + d_raw;
    let weights = [a_raw / sum, b_raw / sum, c_raw / sum, d_raw / sum];
    let times = [t_a, t_b, t_c_solved, t_d];
    let branch_paths = [
        track_a.path(),
        track_b.path(),
        track_a.path(),
        track_b.path(),
    ];

    let plan = CombinationPlan {
        branches: branch_paths
            .iter()
            .zip(times)
            .zip(weights)
            .map(|((p, time), weight)| crate::combiner::Branch {
                path_label: p.label().to_string(),
                time,
                weight,
            })
            .collect(),
        theta: None,
    };
    plan.validate()?;

    let tracks = [track_a, track_b, track_a, track_b];
    let mut diagnostics = SchemeDiagnostics::default();
    for &level in &[e1, e2] {
        let branches: Vec<PredictBranch> = tracks
            .iter()
            .zip(times)
            .zip(weights)
            .map(|((track, time), weight)| PredictBranch {
                track,
                time,
                weight,
            })
            .collect();
        let combined = predict_combined(track_a, &branches, level, None)?.norm();
        let map = level_map(track_a, track_b)?;
        let mut single_max = 0.0_f64;
        for (track, time) in tracks.iter().zip(times) {
            let lvl = if std::ptr::eq(*track, track_a) {
                level
            } else {
                map[level].0
            };
            single_max = single_max.max(predict_first_order(track, time, lvl)?.norm());
        }
        let (g_a, g_b, _) = branch_gap_integrals(track_a, track_b, level)?;
        diagnostics.levels.push(LevelDiagnostic {
            level,
            gap_integrals: vec![g_a, g_b, g_a, g_b],
            predicted_combined: combined,
            max_single_predicted: single_max,
        });
    }
    diagnostics
        .notes
        .push(format!("phase-matching residual sin = {:e}", dphi(t_c_solved).sin()));

    Ok(SchemeSolution {
        plan,
        paths: branch_paths.into_iter().cloned().collect(),
        target_levels: vec![e1, e2],
        phase_integers: vec![n as i64, m as i64],
        diagnostics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonians::{C64, HermitianMatrix};
    use crate::paths;
    use crate::spectral::track;
    use approx::assert_abs_diff_eq;
    use nalgebra::{DMatrix, DVector};

    fn search5() -> HamiltonianFamily {
        HamiltonianFamily::search(5).unwrap()
    }

    fn constant_gap_family() -> HamiltonianFamily {
        let h0 = HermitianMatrix::new(
            DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 1.0])).map(|x| C64::new(x, 0.0)),
        )
        .unwrap();
        let h1 = HermitianMatrix::new(
            DMatrix::from_diagonal(&DVector::from_vec(vec![0.3, 1.3])).map(|x| C64::new(x, 0.0)),
        )
        .unwrap();
        HamiltonianFamily::linear_interp(h0, h1).unwrap()
    }

    #[test]
    fn weight_identity_from_theta() {
        let (t_a, t_b) = (100.0_f64, 104.0_f64);
        let theta = (t_b / t_a).sqrt().atan();
        assert_abs_diff_eq!(theta.tan().powi(2), 1.04, epsilon = 1e-14);
        let lhs = theta.cos().powi(2) / t_a - theta.sin().powi(2) / t_b;
        assert!(lhs.abs() < 1e-15);
    }

    #[test]
    fn equal_gap_integrals_shift_time_by_pi() {
        let fam = constant_gap_family();
        let f_a = paths::linear_path();
        let f_b = paths::partial_antisym_dual(&f_a, 0.2).unwrap();
        let ta = track(&fam, &f_a, 64).unwrap();
        let tb = track(&fam, &f_b, 64).unwrap();
        let sol = solve_partial(&ta, &tb, 40.0, 1, 0).unwrap();
        assert_abs_diff_eq!(sol.branch_time(1), 40.0 + std::f64::consts::PI, epsilon = 1e-7);
        // Eq-20-style identity holds for every solution
        let theta = sol.theta().unwrap();
        let id = theta.cos().powi(2) / sol.branch_time(0) - theta.sin().powi(2) / sol.branch_time(1);
        assert!(id.abs() < 1e-15);
    }

    #[test]
    fn partial_solution_on_search_is_pinned_and_cancels() {
        let fam = search5();
        let f_a = paths::lae_path(5).unwrap();
        let f_b = paths::partial_antisym_dual(&f_a, 0.2).unwrap();
        let ta = track(&fam, &f_a, 128).unwrap();
        let tb = track(&fam, &f_b, 128).unwrap();
        let sol = solve_partial(&ta, &tb, 80.0, 1, 0).unwrap();
        // frozen regression values
        assert_abs_diff_eq!(sol.branch_time(1), 87.542_825_859_0, epsilon = 1e-6);
        assert_abs_diff_eq!(sol.theta().unwrap(), 0.808_269_280_3, epsilon = 1e-8);
        let d = &sol.diagnostics.levels[0];
        assert!(
            d.predicted_combined < 1e-3 * d.max_single_predicted,
            "combined {:e} vs single {:e}",
            d.predicted_combined,
            d.max_single_predicted
        );
    }

    #[test]
    fn partial_rejects_wrong_dual() {
        let fam = search5();
        let f_a = paths::lae_path(5).unwrap();
        let ta = track(&fam, &f_a, 64).unwrap();
        let tl = track(&fam, &paths::linear_path(), 64).unwrap();
        assert!(solve_partial(&ta, &tl, 50.0, 1, 0).is_err());
    }

    #[test]
    fn complete_solution_keeps_times_close() {
        let fam = search5();
        let f_a = paths::lae_path(5).unwrap();
        let f_b = paths::complete_antisym_dual(&f_a, 0.2).unwrap();
        let ta = track(&fam, &f_a, 128).unwrap();
        let tb = track(&fam, &f_b, 128).unwrap();
        let sol = solve_complete(&ta, &tb, 80.0, 1, None).unwrap();
        let g_b = sol.diagnostics.levels[0].gap_integrals[1];
        assert!(
            (sol.branch_time(1) - 80.0).abs() <= PI / g_b + 1e-9,
            "nearest-integer choice bounds |T_B - T_A| by pi/G_B"
        );
        // frozen regression
        assert_abs_diff_eq!(sol.branch_time(1), 80.257_427_85, epsilon = 1e-5);
        let d = &sol.diagnostics.levels[0];
        assert!(d.predicted_combined < 1e-2 * d.max_single_predicted);
    }

    #[test]
    fn complete_refuses_identical_paths() {
        let fam = search5();
        let f_a = paths::lae_path(5).unwrap();
        let ta = track(&fam, &f_a, 64).unwrap();
        let tb = track(&fam, &f_a, 96).unwrap();
        assert!(matches!(
            solve_complete(&ta, &tb, 50.0, 1, None),
            Err(Error::InvalidPlan(_))
        ));
    }

    #[test]
    fn symmetric_all_on_sin_bridge() {
        let fam = HamiltonianFamily::sin_bridge();
        let (sol, ta, tb) =
            symmetric_all(&fam, &paths::linear_path(), 0.1, 60.0, 128).unwrap();
        assert_eq!(sol.plan.branches.len(), 2);
        assert_abs_diff_eq!(sol.theta().unwrap(), std::f64::consts::FRAC_PI_4, epsilon = 0.0);
        for d in &sol.diagnostics.levels {
            assert_abs_diff_eq!(d.gap_integrals[0], d.gap_integrals[1], epsilon = 1e-8);
            assert!(
                d.predicted_combined < 0.05 * d.max_single_predicted.max(1e-30),
                "level {}: combined {:e} vs single {:e}",
                d.level,
                d.predicted_combined,
                d.max_single_predicted
            );
        }
        let _ = (ta, tb);
    }

    #[test]
    fn symmetric_all_on_search_is_ok() {
        let fam = search5();
        let (sol, _, _) =
            symmetric_all(&fam, &paths::lae_path(5).unwrap(), 0.2, 50.0, 128).unwrap();
        let d = sol
            .diagnostics
            .levels
            .iter()
            .find(|d| d.max_single_predicted > 1e-10)
            .expect("the coupled level has nonzero single-branch error");
        assert!(d.predicted_combined < 0.05 * d.max_single_predicted);
    }

    #[test]
    fn symmetric_all_rejects_asymmetric_spectrum() {
        let h0 = HermitianMatrix::new(
            DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 1.0])).map(|x| C64::new(x, 0.0)),
        )
        .unwrap();
        let h1 = HermitianMatrix::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 0.4, 0.4, 2.0]).map(|x| C64::new(x, 0.0)),
        )
        .unwrap();
        let fam = HamiltonianFamily::linear_interp(h0, h1).unwrap();
        assert!(matches!(
            symmetric_all(&fam, &paths::linear_path(), 0.1, 40.0, 64),
            Err(Error::SpectrumNotSymmetric { .. })
        ));
    }

    #[test]
    fn symmetric_all_rejects_unequal_boundary_rates() {
        let fam = search5();
        let skew = paths::SchedulePath::from_segments(
            "skew",
            vec![paths::Segment {
                lo: 0.0,
                hi: 1.0,
                kind: paths::SegmentKind::Poly {
                    center: 0.0,
                    coeffs: vec![0.0, 0.0, 2.0, -1.0],
                },
            }],
        )
        .unwrap();
        assert!(matches!(
            symmetric_all(&fam, &skew, 0.1, 40.0, 64),
            Err(Error::AsymmetricBoundaryRates { .. })
        ));
    }

    #[test]
    fn three_level_identity_system() {
        let g = Matrix2::identity();
        let (t_a, t_b, (n, m)) = three_level_times(&g, Some((0, 0))).unwrap();
        assert_abs_diff_eq!(t_a, PI, epsilon = 1e-12);
        assert_abs_diff_eq!(t_b, PI, epsilon = 1e-12);
        assert_eq!((n, m), (0, 0));
    }

    #[test]
    fn three_level_singular_system() {
        let g = Matrix2::new(1.0, 1.0, 1.0, 1.0);
        assert!(matches!(
            three_level_times(&g, None),
            Err(Error::SingularSystem { .. })
        ));
    }

    #[test]
    fn three_level_times_match_cramer_oracle() {
        // deterministic LCG over well-conditioned 2x2 systems
        let mut x: u64 = 0x9E3779B97F4A7C15;
        let mut rand = move || {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            0.5 + 1.5 * ((x >> 11) as f64 / (1u64 << 53) as f64)
        };
        let mut checked = 0;
        while checked < 25 {
            let g = Matrix2::new(rand(), rand(), rand(), rand());
            let det = g[(0, 0)] * g[(1, 1)] - g[(0, 1)] * g[(1, 0)];
            if det.abs() < 0.05 {
                continue;
            }
            if let Ok((t_a, t_b, (n, m))) = three_level_times(&g, None) {
                let rhs0 = (2.0 * n as f64 + 1.0) * PI;
                let rhs1 = (2.0 * m as f64 + 1.0) * PI;
                let r0 = g[(0, 0)] * t_a + g[(0, 1)] * t_b - rhs0;
                let r1 = g[(1, 0)] * t_a + g[(1, 1)] * t_b - rhs1;
                let scale = rhs0.abs().max(rhs1.abs());
                assert!(r0.abs() / scale < 1e-10 && r1.abs() / scale < 1e-10);
                assert!(t_a > 0.0 && t_b > 0.0);
                checked += 1;
            }
        }
    }

    #[test]
    fn bc_hybrid_weights_generalize() {
        let fam = search5();
        let f_a = paths::smoothstep_path();
        let f_b = paths::bc_dual(&f_a, 1, 0.2).unwrap();
        let ta = track(&fam, &f_a, 128).unwrap();
        let tb = track(&fam, &f_b, 128).unwrap();
        let sol = solve_bc_hybrid(&ta, &tb, 120.0, 1, 1, None).unwrap();
        let theta = sol.theta().unwrap();
        let (t_a, t_b) = (sol.branch_time(0), sol.branch_time(1));
        // cos^2 theta / T_A^{m+1} = sin^2 theta / T_B^{m+1}
        let id = theta.cos().powi(2) / t_a.powi(2) - theta.sin().powi(2) / t_b.powi(2);
        assert!(id.abs() < 1e-15);
        let d = &sol.diagnostics.levels[0];
        assert!(
            d.predicted_combined < 0.05 * d.max_single_predicted,
            "combined {:e} vs single {:e}",
            d.predicted_combined,
            d.max_single_predicted
        );
    }

    #[test]
    fn bc_hybrid_rejects_sloped_paths() {
        let fam = search5();
        let f_a = paths::lae_path(5).unwrap();
        let f_b = paths::partial_antisym_dual(&f_a, 0.2).unwrap();
        let ta = track(&fam, &f_a, 64).unwrap();
        let tb = track(&fam, &f_b, 64).unwrap();
        assert!(matches!(
            solve_bc_hybrid(&ta, &tb, 50.0, 1, 1, None),
            Err(Error::BoundaryNotFlat { .. })
        ));
    }
}
