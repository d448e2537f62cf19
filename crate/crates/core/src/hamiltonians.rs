//! Hamiltonian families H(f) used throughout the crate.
//!
//! A family maps a real interpolation parameter `f` to a dense Hermitian
//! matrix together with its analytic derivative dH/df.  Built-in kinds:
//!
//! * `LinearInterp`: H(f) = (1-f) H0 + f H1.
//! * `Search`: the N-dimensional search Hamiltonian
//!   H(f) = (1-f)(1 - |u><u|) + f (1 - |0><0|), |u> uniform over N states.
//! * `SinBridge`: the two-qubit bridge
//!   H(f) = sz (x) 1 + 1 (x) sz + sin(pi f) Hd (x) Hd, Hd the Hadamard.
//! * `CustomTable`: H0, H1 loaded from plain-text matrices, interpolated
//!   linearly.
//!
//! Families are defined for every real `f` (schedules may overshoot
//! [0, 1]) and are immutable after construction.

use nalgebra::{Complex, DMatrix};
use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;
pub type CMatrix = DMatrix<C64>;

/// Absolute tolerance for the Hermiticity check.
pub const HERMITICITY_TOL: f64 = 1e-12;

/// A validated dense Hermitian matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix {
    entries: CMatrix,
}

impl HermitianMatrix {
    /// Wrap a square matrix, verifying H = H^dag to within [`HERMITICITY_TOL`].
    pub fn new(entries: CMatrix) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::DimensionMismatch {
                expected: entries.nrows(),
                got: entries.ncols(),
            });
        }
        let mut worst = (0.0_f64, 0, 0);
        for i in 0..entries.nrows() {
            for j in i..entries.ncols() {
                let defect = (entries[(i, j)] - entries[(j, i)].conj()).norm();
                if defect > worst.0 {
                    worst = (defect, i, j);
                }
            }
        }
        if worst.0 > HERMITICITY_TOL {
            return Err(Error::NotHermitian {
                defect: worst.0,
                row: worst.1,
                col: worst.2,
            });
        }
        Ok(Self { entries })
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.entries
    }

    pub fn into_matrix(self) -> CMatrix {
        self.entries
    }

    /// Spectral norm (largest |eigenvalue|).
    pub fn op_norm(&self) -> f64 {
        self.entries
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .fold(0.0, |m, e| m.max(e.abs()))
    }

    /// Real eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut e: Vec<f64> = self
            .entries
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .cloned()
            .collect();
        e.sort_by(|a, b| a.partial_cmp(b).unwrap());
        e
    }
}

#[derive(Debug, Clone)]
enum Kind {
    LinearInterp { h0: CMatrix, h1: CMatrix },
    Search { n: usize },
    SinBridge,
    CustomTable { h0: CMatrix, h1: CMatrix },
}

/// A one-parameter family f -> H(f) of dense Hermitian matrices.
#[derive(Clone)]
pub struct HamiltonianFamily {
    kind: Kind,
    dim: usize,
}

impl fmt::Debug for HamiltonianFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "HamiltonianFamily({}, dim={})", self.label(), self.dim)
    }
}

fn real_mat(m: &DMatrix<f64>) -> CMatrix {
    m.map(|x| C64::new(x, 0.0))
}

impl HamiltonianFamily {
    /// H(f) = (1-f) H0 + f H1 from explicit endpoint Hamiltonians.
    pub fn linear_interp(h0: HermitianMatrix, h1: HermitianMatrix) -> Result<Self> {
        if h0.dim() != h1.dim() {
            return Err(Error::DimensionMismatch {
                expected: h0.dim(),
                got: h1.dim(),
            });
        }
        let dim = h0.dim();
        Ok(Self {
            kind: Kind::LinearInterp {
                h0: h0.into_matrix(),
                h1: h1.into_matrix(),
            },
            dim,
        })
    }

    /// The N-dimensional search family.  The Hilbert space has dimension N
    /// directly; N need not be a power of two.
    pub fn search(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Config(format!("search dimension must be >= 2, got {n}")));
        }
        Ok(Self {
            kind: Kind::Search { n },
            dim: n,
        })
    }

    /// The fixed 4x4 two-qubit family with a sin(pi f) bridge coupling.
    pub fn sin_bridge() -> Self {
        Self {
            kind: Kind::SinBridge,
            dim: 4,
        }
    }

    /// Linear interpolation between two user-supplied matrices.
    pub fn custom_table(h0: HermitianMatrix, h1: HermitianMatrix) -> Result<Self> {
        if h0.dim() != h1.dim() {
            return Err(Error::DimensionMismatch {
                expected: h0.dim(),
                got: h1.dim(),
            });
        }
        let dim = h0.dim();
        Ok(Self {
            kind: Kind::CustomTable {
                h0: h0.into_matrix(),
                h1: h1.into_matrix(),
            },
            dim,
        })
    }

    /// Load a custom table from the plain-text matrix format (see
    /// [`read_matrix_text`]).
    pub fn custom_table_from_files(h0: &Path, h1: &Path) -> Result<Self> {
        let h0 = HermitianMatrix::new(read_matrix_text(h0)?)?;
        let h1 = HermitianMatrix::new(read_matrix_text(h1)?)?;
        Self::custom_table(h0, h1)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn label(&self) -> String {
        match &self.kind {
            Kind::LinearInterp { .. } => format!("linear_interp(d={})", self.dim),
            Kind::Search { n } => format!("search({n})"),
            Kind::SinBridge => "sin_bridge".to_string(),
            Kind::CustomTable { .. } => format!("custom(d={})", self.dim),
        }
    }

    /// Evaluate H(f).  Defined for every real `f`.
    pub fn value_at(&self, f: f64) -> HermitianMatrix {
        let m = match &self.kind {
            Kind::LinearInterp { h0, h1 } | Kind::CustomTable { h0, h1 } => {
                h0 * C64::new(1.0 - f, 0.0) + h1 * C64::new(f, 0.0)
            }
            Kind::Search { n } => search_matrix(*n, f),
            Kind::SinBridge => {
                let (d, v) = sin_bridge_parts();
                real_mat(&d) + real_mat(&v) * C64::new((std::f64::consts::PI * f).sin(), 0.0)
            }
        };
        HermitianMatrix::new(m).expect("built-in families are Hermitian by construction")
    }

    /// Evaluate dH/df.  Exact for every built-in kind (all are analytic in f).
    pub fn deriv_f(&self, f: f64) -> HermitianMatrix {
        let m = match &self.kind {
            Kind::LinearInterp { h0, h1 } | Kind::CustomTable { h0, h1 } => h1 - h0,
            Kind::Search { n } => {
                // d/df [(1-f)(1-P_u) + f(1-P_0)] = P_u - P_0
                let n = *n;
                let mut m = DMatrix::<f64>::from_element(n, n, 1.0 / n as f64);
                m[(0, 0)] -= 1.0;
                real_mat(&m)
            }
            Kind::SinBridge => {
                let (_, v) = sin_bridge_parts();
                let pi = std::f64::consts::PI;
                real_mat(&v) * C64::new(pi * (pi * f).cos(), 0.0)
            }
        };
        let _ = f;
        HermitianMatrix::new(m).expect("derivatives of built-in families are Hermitian")
    }
}

fn search_matrix(n: usize, f: f64) -> CMatrix {
    // (1-f)(1 - P_u) + f(1 - P_0), P_u the projector onto the uniform state.
    let nf = n as f64;
    let mut m = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            m[(i, j)] = -(1.0 - f) / nf;
        }
        m[(i, i)] += 1.0;
    }
    m[(0, 0)] -= f;
    real_mat(&m)
}

/// Two-level gap of the search family between the adiabatically connected
/// ground and excited levels.
pub fn search_gap(n: usize, f: f64) -> f64 {
    (1.0 - 4.0 * f * (1.0 - f) * (1.0 - 1.0 / n as f64)).sqrt()
}

fn sin_bridge_parts() -> (DMatrix<f64>, DMatrix<f64>) {
    let d = DMatrix::<f64>::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 0.0, 0.0, -2.0]));
    // Hadamard (x) Hadamard
    let h = 0.5_f64.sqrt();
    let had = DMatrix::<f64>::from_row_slice(2, 2, &[h, h, h, -h]);
    let v = had.kronecker(&had);
    (d, v)
}

/// Read the plain-text complex matrix format: first token is the dimension
/// `d`, followed by d*d whitespace-separated entries `re,im` in row-major
/// order.
pub fn read_matrix_text(path: &Path) -> Result<CMatrix> {
    let text = std::fs::read_to_string(path)?;
    parse_matrix_text(&text)
}

pub fn parse_matrix_text(text: &str) -> Result<CMatrix> {
    let mut tokens = text.split_whitespace();
    let d: usize = tokens
        .next()
        .ok_or_else(|| Error::MatrixFormat("empty file".into()))?
        .parse()
        .map_err(|e| Error::MatrixFormat(format!("bad dimension: {e}")))?;
    if d == 0 {
        return Err(Error::MatrixFormat("dimension must be positive".into()));
    }
    let mut entries = Vec::with_capacity(d * d);
    for tok in tokens.by_ref().take(d * d) {
        let (re, im) = tok
            .split_once(',')
            .ok_or_else(|| Error::MatrixFormat(format!("entry `{tok}` is not `re,im`")))?;
        let re: f64 = re
            .parse()
            .map_err(|e| Error::MatrixFormat(format!("bad real part `{re}`: {e}")))?;
        let im: f64 = im
            .parse()
            .map_err(|e| Error::MatrixFormat(format!("bad imaginary part `{im}`: {e}")))?;
        entries.push(C64::new(re, im));
    }
    if entries.len() != d * d {
        return Err(Error::MatrixFormat(format!(
            "expected {} entries, found {}",
            d * d,
            entries.len()
        )));
    }
    if tokens.next().is_some() {
        return Err(Error::MatrixFormat("trailing tokens after matrix entries".into()));
    }
    Ok(CMatrix::from_row_slice(d, d, &entries))
}

/// Write a matrix in the same plain-text format.
pub fn write_matrix_text(m: &CMatrix) -> String {
    let mut out = format!("{}\n", m.nrows());
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols())
            .map(|j| format!("{:.17e},{:.17e}", m[(i, j)].re, m[(i, j)].im))
            .collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}
