//! Instantaneous eigensystem tracking along a schedule.
//!
//! A [`SpectralTrack`] carries gauge-fixed frames (E_n(s), |n(s)>) on a
//! grid that includes every schedule breakpoint.  Levels are labeled by
//! continuity: each frame is matched to its predecessor by maximal
//! eigenvector overlap and then phase-rotated so successive overlaps are
//! real and nonnegative (the discrete counterpart of <d n/ds | n> = 0).
//! Degenerate clusters are aligned as whole subspaces via the polar
//! decomposition of their overlap block, which keeps labels meaningful
//! when levels split from or rejoin an exactly degenerate set.
//!
//! Gaps are measured from the tracked ground label; anything that divides
//! by a gap fails loudly with `GapCollapse` when |gap| < 1e-9.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::hamiltonians::{C64, CMatrix, HamiltonianFamily};
use crate::paths::SchedulePath;
use crate::quad;

/// Gap magnitude below which tracking and couplings refuse to proceed.
pub const GAP_COLLAPSE_TOL: f64 = 1e-9;

/// Energies closer than this (relative to the spectral scale) are treated
/// as one degenerate cluster during gauge alignment.
const CLUSTER_TOL: f64 = 1e-8;

/// Absolute target for gap and energy integrals.
pub const INTEGRAL_TOL: f64 = 1e-8;

/// Gauge-fixed eigensystem at one grid point.
#[derive(Debug, Clone)]
pub struct SpectralFrame {
    pub s: f64,
    /// Energies in tracked-label order (not sorted beyond the first frame).
    pub energies: Vec<f64>,
    /// Column n is the tracked eigenvector |n(s)>.
    pub vectors: CMatrix,
    pub ground_index: usize,
}

impl SpectralFrame {
    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    pub fn level(&self, n: usize) -> DVector<C64> {
        self.vectors.column(n).into_owned()
    }

    pub fn ground(&self) -> DVector<C64> {
        self.level(self.ground_index)
    }
}

/// Eigendecomposition sorted by ascending eigenvalue.
fn eigh_sorted(h: &CMatrix) -> (Vec<f64>, CMatrix) {
    let se = h.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..se.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| se.eigenvalues[a].partial_cmp(&se.eigenvalues[b]).unwrap());
    let energies: Vec<f64> = order.iter().map(|&i| se.eigenvalues[i]).collect();
    let mut vectors = CMatrix::zeros(h.nrows(), h.ncols());
    for (col, &i) in order.iter().enumerate() {
        vectors.set_column(col, &se.eigenvectors.column(i));
    }
    (energies, vectors)
}

/// Deterministic starting gauge: rotate each column so its largest-modulus
/// component is real and positive.
fn canonical_gauge(vectors: &mut CMatrix) {
    for mut col in vectors.column_iter_mut() {
        let mut best = 0;
        let mut best_norm = 0.0;
        for (i, c) in col.iter().enumerate() {
            if c.norm() > best_norm {
                best_norm = c.norm();
                best = i;
            }
        }
        let pivot = col[best];
        if pivot.norm() > 0.0 {
            let phase = pivot / C64::new(pivot.norm(), 0.0);
            for c in col.iter_mut() {
                *c /= phase;
            }
        }
    }
}

/// Match eigenvector columns of `current` to the labels of `prev` by
/// greedily assigning the largest |overlap| pairs.
fn match_labels(prev: &CMatrix, current: &CMatrix) -> Vec<usize> {
    let d = prev.ncols();
    let overlap = prev.adjoint() * current;
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in 0..d {
            pairs.push((overlap[(i, j)].norm(), i, j));
        }
    }
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let mut perm = vec![usize::MAX; d];
    let mut used_prev = vec![false; d];
    let mut used_cur = vec![false; d];
    for (_, i, j) in pairs {
        if !used_prev[i] && !used_cur[j] {
            perm[i] = j;
            used_prev[i] = true;
            used_cur[j] = true;
        }
    }
    perm
}

/// Group label indices whose energies lie within a degeneracy tolerance.
fn energy_clusters(energies: &[f64]) -> Vec<Vec<usize>> {
    let scale = energies.iter().fold(1.0_f64, |m, e| m.max(e.abs()));
    let tol = CLUSTER_TOL * scale;
    let mut order: Vec<usize> = (0..energies.len()).collect();
    order.sort_by(|&a, &b| energies[a].partial_cmp(&energies[b]).unwrap());
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for &idx in &order {
        match clusters.last_mut() {
            Some(cluster)
                if (energies[idx] - energies[*cluster.last().unwrap()]).abs() < tol =>
            {
                cluster.push(idx)
            }
            _ => clusters.push(vec![idx]),
        }
    }
    clusters
}

/// Rotate the columns `labels` of `current` by the unitary closest to
/// mapping them onto the same columns of `target` (polar alignment).
/// A single column reduces to the real-positive-overlap phase fix.
fn align_cluster(target: &CMatrix, current: &mut CMatrix, labels: &[usize]) {
    let d = target.nrows();
    let k = labels.len();
    let mut c = CMatrix::zeros(d, k);
    let mut p = CMatrix::zeros(d, k);
    for (col, &l) in labels.iter().enumerate() {
        c.set_column(col, &current.column(l));
        p.set_column(col, &target.column(l));
    }
    let m = c.adjoint() * &p;
    let svd = m.svd(true, true);
    let (Some(u), Some(v_t)) = (svd.u, svd.v_t) else {
        return;
    };
    let w = u * v_t;
    let aligned = c * w;
    for (col, &l) in labels.iter().enumerate() {
        current.set_column(l, &aligned.column(col));
    }
}

/// Build a gauge-fixed frame at `s_val` from a reference frame.
fn build_frame(
    family: &HamiltonianFamily,
    path: &SchedulePath,
    s_val: f64,
    reference: &SpectralFrame,
) -> SpectralFrame {
    let h = family.value_at(path.value(s_val));
    let (energies_sorted, vectors_sorted) = eigh_sorted(h.matrix());
    let perm = match_labels(&reference.vectors, &vectors_sorted);
    let d = energies_sorted.len();
    let mut energies = vec![0.0; d];
    let mut vectors = CMatrix::zeros(d, d);
    for label in 0..d {
        energies[label] = energies_sorted[perm[label]];
        vectors.set_column(label, &vectors_sorted.column(perm[label]));
    }
    for cluster in energy_clusters(&energies) {
        align_cluster(&reference.vectors, &mut vectors, &cluster);
    }
    SpectralFrame {
        s: s_val,
        energies,
        vectors,
        ground_index: reference.ground_index,
    }
}

/// Tracked eigensystem along one (family, path) pair.
#[derive(Debug, Clone)]
pub struct SpectralTrack {
    family: HamiltonianFamily,
    path: SchedulePath,
    grid: Vec<f64>,
    /// Start index in `grid` of each smooth stretch (between breakpoints),
    /// plus the final index.
    seg_bounds: Vec<usize>,
    frames: Vec<SpectralFrame>,
}

/// Build a track with roughly `grid_points` intervals distributed over the
/// smooth stretches of the schedule (each stretch gets an even count, so
/// Simpson rules apply per stretch).
pub fn track(
    family: &HamiltonianFamily,
    path: &SchedulePath,
    grid_points: usize,
) -> Result<SpectralTrack> {
    SpectralTrack::new(family.clone(), path.clone(), grid_points)
}

impl SpectralTrack {
    pub fn new(
        family: HamiltonianFamily,
        path: SchedulePath,
        grid_points: usize,
    ) -> Result<Self> {
        if grid_points < 64 {
            return Err(Error::Config(format!(
                "track needs at least 64 grid points, got {grid_points}"
            )));
        }
        let mut bounds = vec![0.0];
        bounds.extend(path.breakpoints());
        bounds.push(1.0);

        let mut grid = Vec::new();
        let mut seg_bounds = vec![0usize];
        for w in bounds.windows(2) {
            let (a, b) = (w[0], w[1]);
            let mut n = ((grid_points as f64) * (b - a)).round() as usize;
            n = n.max(8);
            if n % 2 == 1 {
                n += 1;
            }
            let start = if grid.is_empty() { 0 } else { 1 };
            for j in start..=n {
                grid.push(a + (b - a) * j as f64 / n as f64);
            }
            seg_bounds.push(grid.len() - 1);
        }

        // first frame: ascending energy order, deterministic gauge
        let h0 = family.value_at(path.value(grid[0]));
        let (energies, mut vectors) = eigh_sorted(h0.matrix());
        canonical_gauge(&mut vectors);
        let mut frames = vec![SpectralFrame {
            s: grid[0],
            energies,
            vectors,
            ground_index: 0,
        }];

        for &s_val in &grid[1..] {
            let frame = build_frame(&family, &path, s_val, frames.last().unwrap());
            frames.push(frame);
        }

        // a degenerate cluster at s = 0 has no intrinsic basis until the
        // levels split; align it backwards against the second frame
        if frames.len() > 1 {
            let second = frames[1].vectors.clone();
            let first = &mut frames[0];
            for cluster in energy_clusters(&first.energies) {
                if cluster.len() > 1 {
                    align_cluster(&second, &mut first.vectors, &cluster);
                }
            }
        }

        let track = Self {
            family,
            path,
            grid,
            seg_bounds,
            frames,
        };
        track.check_ground_gaps()?;
        Ok(track)
    }

    fn check_ground_gaps(&self) -> Result<()> {
        let g = self.ground_index();
        for frame in &self.frames {
            for n in 0..frame.dim() {
                if n == g {
                    continue;
                }
                let gap = frame.energies[n] - frame.energies[g];
                if gap.abs() < GAP_COLLAPSE_TOL {
                    return Err(Error::GapCollapse {
                        s: frame.s,
                        upper: n,
                        lower: g,
                        gap,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn family(&self) -> &HamiltonianFamily {
        &self.family
    }

    pub fn path(&self) -> &SchedulePath {
        &self.path
    }

    pub fn dim(&self) -> usize {
        self.frames[0].dim()
    }

    pub fn ground_index(&self) -> usize {
        self.frames[0].ground_index
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn frames(&self) -> &[SpectralFrame] {
        &self.frames
    }

    pub fn start_frame(&self) -> &SpectralFrame {
        self.frames.first().unwrap()
    }

    pub fn end_frame(&self) -> &SpectralFrame {
        self.frames.last().unwrap()
    }

    fn nearest_frame(&self, s: f64) -> &SpectralFrame {
        let idx = match self
            .grid
            .binary_search_by(|g| g.partial_cmp(&s).unwrap())
        {
            Ok(i) => i,
            Err(i) => {
                if i == 0 {
                    0
                } else if i >= self.grid.len() {
                    self.grid.len() - 1
                } else if (self.grid[i] - s).abs() < (s - self.grid[i - 1]).abs() {
                    i
                } else {
                    i - 1
                }
            }
        };
        &self.frames[idx]
    }

    /// Gauge-fixed frame at arbitrary s, aligned against the nearest grid
    /// frame.  Exact grid points return the stored frame.
    pub fn frame_at(&self, s: f64) -> SpectralFrame {
        let near = self.nearest_frame(s);
        if (near.s - s).abs() < 1e-14 {
            return near.clone();
        }
        build_frame(&self.family, &self.path, s, near)
    }

    /// Energies at arbitrary s in tracked-label order.
    pub fn energies_at(&self, s: f64) -> Vec<f64> {
        let near = self.nearest_frame(s);
        if (near.s - s).abs() < 1e-14 {
            return near.energies.clone();
        }
        let h = self.family.value_at(self.path.value(s));
        let (energies_sorted, vectors_sorted) = eigh_sorted(h.matrix());
        let perm = match_labels(&near.vectors, &vectors_sorted);
        (0..energies_sorted.len())
            .map(|label| energies_sorted[perm[label]])
            .collect()
    }

    fn smooth_segments(&self) -> Vec<(f64, f64)> {
        self.seg_bounds
            .windows(2)
            .map(|w| (self.grid[w[0]], self.grid[w[1]]))
            .collect()
    }

    /// Integral over [0, 1] of E_upper(s) - E_lower(s), via composite
    /// Simpson split at breakpoints, refined until the change is below
    /// [`INTEGRAL_TOL`].
    pub fn gap_integral(&self, upper: usize, lower: usize) -> Result<f64> {
        let mut f = |s: f64| {
            let e = self.energies_at(s);
            e[upper] - e[lower]
        };
        quad::simpson_refine(&mut f, &self.smooth_segments(), 32, INTEGRAL_TOL, 16)
    }

    /// Integral over [0, 1] of E_level(s).
    pub fn energy_integral(&self, level: usize) -> Result<f64> {
        let mut f = |s: f64| self.energies_at(s)[level];
        quad::simpson_refine(&mut f, &self.smooth_segments(), 32, INTEGRAL_TOL, 16)
    }

    /// Diabatic coupling <d n/ds | g> = <n| dH/ds |g> / (E_n - E_g) in the
    /// track's gauge.
    pub fn coupling(&self, s: f64, n: usize, g: usize) -> Result<C64> {
        let frame = self.frame_at(s);
        let gap = frame.energies[n] - frame.energies[g];
        if gap.abs() < GAP_COLLAPSE_TOL {
            return Err(Error::GapCollapse {
                s,
                upper: n,
                lower: g,
                gap,
            });
        }
        let rate = self.path.deriv(s, 1);
        let hdot = self.family.deriv_f(self.path.value(s));
        let vn = frame.level(n);
        let vg = frame.level(g);
        let elem = vn.adjoint() * hdot.matrix() * vg;
        Ok(elem[(0, 0)] * C64::new(rate / gap, 0.0))
    }

    /// Minimum |E_n - E_g| over the grid for tracked level n.
    pub fn min_ground_gap(&self, n: usize) -> (f64, f64) {
        let g = self.ground_index();
        let mut best = (f64::INFINITY, 0.0);
        for frame in &self.frames {
            let gap = (frame.energies[n] - frame.energies[g]).abs();
            if gap < best.0 {
                best = (gap, frame.s);
            }
        }
        best
    }

    /// Simpson integral of the spectral norm ||H(f(s))|| over the stored
    /// grid (each smooth stretch has an even interval count).
    pub fn op_norm_integral(&self) -> f64 {
        let norm_at = |idx: usize| -> f64 {
            self.frames[idx]
                .energies
                .iter()
                .fold(0.0_f64, |m, e| m.max(e.abs()))
        };
        let mut total = 0.0;
        for w in self.seg_bounds.windows(2) {
            let (lo, hi) = (w[0], w[1]);
            let n = hi - lo;
            let h = (self.grid[hi] - self.grid[lo]) / n as f64;
            let mut acc = norm_at(lo) + norm_at(hi);
            for j in 1..n {
                let wgt = if j % 2 == 1 { 4.0 } else { 2.0 };
                acc += wgt * norm_at(lo + j);
            }
            total += acc * h / 3.0;
        }
        total
    }

    /// CSV dump: `s, E_0..E_{d-1}, gap_g_n...` for the requested levels.
    pub fn csv_dump(&self, gap_levels: &[usize]) -> String {
        let g = self.ground_index();
        let mut out = String::from("s");
        for n in 0..self.dim() {
            out.push_str(&format!(",E_{n}"));
        }
        for n in gap_levels {
            out.push_str(&format!(",gap_{g}_{n}"));
        }
        out.push('\n');
        for frame in &self.frames {
            out.push_str(&format!("{:.12e}", frame.s));
            for e in &frame.energies {
                out.push_str(&format!(",{e:.12e}"));
            }
            for &n in gap_levels {
                out.push_str(&format!(",{:.12e}", frame.energies[n] - frame.energies[g]));
            }
            out.push('\n');
        }
        out
    }
}

/// Cross-track level correspondence, fixed at the shared endpoint s = 1.
///
/// Two tracks over the same family can attach their integer labels to
/// different physical branches (a degenerate cluster at s = 0 splits in
/// opposite directions when one schedule starts by moving backwards), so
/// combining branches requires matching levels where the amplitudes are
/// actually compared.  Entry n holds the `other` label whose endpoint
/// eigenvector best overlaps reference level n, together with the complex
/// overlap <n_ref(1) | n_other(1)> (a pure phase up to grid error).
pub fn level_map(reference: &SpectralTrack, other: &SpectralTrack) -> Result<Vec<(usize, C64)>> {
    if reference.dim() != other.dim() {
        return Err(Error::DimensionMismatch {
            expected: reference.dim(),
            got: other.dim(),
        });
    }
    let fa = reference.end_frame();
    let fb = other.end_frame();
    let perm = match_labels(&fa.vectors, &fb.vectors);
    Ok(perm
        .iter()
        .enumerate()
        .map(|(n, &m)| {
            let ov = (fa.level(n).adjoint() * fb.level(m))[(0, 0)];
            (m, ov)
        })
        .collect())
}

/// Max deviation of the sorted spectrum of H(f(s)) from that of
/// H(1 - f(s)) over a uniform sample; the all-transition suppression
/// scheme requires this to vanish.
pub fn spectrum_mirror_defect(
    family: &HamiltonianFamily,
    path: &SchedulePath,
    samples: usize,
) -> f64 {
    let mut worst = 0.0_f64;
    for k in 0..=samples {
        let s = k as f64 / samples as f64;
        let f = path.value(s);
        let a = family.value_at(f).eigenvalues();
        let b = family.value_at(1.0 - f).eigenvalues();
        for (x, y) in a.iter().zip(&b) {
            worst = worst.max((x - y).abs());
        }
    }
    worst
}
