//! Dense complex linear algebra over labeled tensor factorizations.
//!
//! Everything here is plain dense arithmetic: Kronecker products, partial
//! traces, Hermitian eigendecomposition (LAPACK zheevd), matrix square roots,
//! Uhlmann fidelity, von Neumann entropy and classical mutual information.
//! All logarithms are base 2.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Dense complex matrix; the carrier for every operator in the crate.
pub type CMatrix = DMatrix<Complex64>;

/// Entrywise Hermiticity / trace tolerance for density operators.
pub const HERMITICITY_TOL: f64 = 1e-10;
/// Eigenvalues in [-PSD_TOL, 0] are clamped to zero; anything lower is an error.
pub const PSD_TOL: f64 = 1e-9;
/// Probability-normalization tolerance.
pub const PROB_TOL: f64 = 1e-12;

extern "C" {
    fn LAPACKE_zheevd(
        layout: i32,
        jobz: u8,
        uplo: u8,
        n: i32,
        a: *mut Complex64,
        lda: i32,
        w: *mut f64,
    ) -> i32;
}

const LAPACK_COL_MAJOR: i32 = 102;

/// Eigendecomposition of a Hermitian matrix.
///
/// Returns ascending real eigenvalues and the matrix whose columns are the
/// corresponding orthonormal eigenvectors.
pub fn hermitian_eigen(m: &CMatrix) -> Result<(Vec<f64>, CMatrix)> {
    let n = m.nrows();
    if n != m.ncols() {
        return Err(Error::InvalidArgument(format!(
            "hermitian_eigen: matrix is {}x{}, not square",
            n,
            m.ncols()
        )));
    }
    let mut a: Vec<Complex64> = m.as_slice().to_vec();
    let mut w = vec![0.0f64; n];
    let info = unsafe {
        LAPACKE_zheevd(
            LAPACK_COL_MAJOR,
            b'V',
            b'L',
            n as i32,
            a.as_mut_ptr(),
            n as i32,
            w.as_mut_ptr(),
        )
    };
    if info != 0 {
        return Err(Error::Eigensolver(info));
    }
    Ok((w, CMatrix::from_column_slice(n, n, &a)))
}

/// Eigenvalues only (ascending) of a Hermitian matrix.
pub fn hermitian_eigenvalues(m: &CMatrix) -> Result<Vec<f64>> {
    let n = m.nrows();
    let mut a: Vec<Complex64> = m.as_slice().to_vec();
    let mut w = vec![0.0f64; n];
    let info = unsafe {
        LAPACKE_zheevd(
            LAPACK_COL_MAJOR,
            b'N',
            b'L',
            n as i32,
            a.as_mut_ptr(),
            n as i32,
            w.as_mut_ptr(),
        )
    };
    if info != 0 {
        return Err(Error::Eigensolver(info));
    }
    Ok(w)
}

/// Kronecker product; the first factor is the most significant index.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

/// Entrywise equality within an absolute tolerance.
pub fn approx_eq(a: &CMatrix, b: &CMatrix, tol: f64) -> bool {
    a.shape() == b.shape()
        && a.iter()
            .zip(b.iter())
            .all(|(x, y)| (x - y).norm() <= tol)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn trace(m: &CMatrix) -> Complex64 {
    m.diagonal().sum()
}

pub fn frobenius_norm(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn is_hermitian(m: &CMatrix, tol: f64) -> bool {
    let n = m.nrows();
    if n != m.ncols() {
        return false;
    }
    for i in 0..n {
        for j in i..n {
            if (m[(i, j)] - m[(j, i)].conj()).norm() > tol {
                return false;
            }
        }
    }
    true
}

/// A density operator over an ordered list of subsystem dimensions.
///
/// Subsystem ordering is the declaration order in `dims`; partial traces and
/// Kronecker assembly both reference that order, with the first factor most
/// significant.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator {
    dims: Vec<usize>,
    matrix: CMatrix,
}

impl DensityOperator {
    /// Builds a density operator, checking Hermiticity and unit trace.
    ///
    /// Positivity is not eigensolved here (that would dominate the cost of
    /// every construction); operations that take eigenvalues clamp the
    /// [-PSD_TOL, 0] band and reject anything below it.
    pub fn new(dims: Vec<usize>, matrix: CMatrix) -> Result<Self> {
        let total: usize = dims.iter().product();
        if dims.is_empty() || dims.iter().any(|&d| d < 2) {
            return Err(Error::InvalidArgument(format!(
                "density operator dims must all be >= 2, got {dims:?}"
            )));
        }
        if matrix.nrows() != total || matrix.ncols() != total {
            return Err(Error::InvalidArgument(format!(
                "matrix is {}x{} but dims {:?} give side {}",
                matrix.nrows(),
                matrix.ncols(),
                dims,
                total
            )));
        }
        if !is_hermitian(&matrix, HERMITICITY_TOL) {
            return Err(Error::InvalidState("matrix is not Hermitian".into()));
        }
        let tr = trace(&matrix);
        if (tr - Complex64::new(1.0, 0.0)).norm() > HERMITICITY_TOL {
            return Err(Error::InvalidState(format!("trace is {tr}, not 1")));
        }
        Ok(Self { dims, matrix })
    }

    /// Wraps without validation; for internal hot paths where the invariants
    /// hold by construction.
    pub(crate) fn new_unchecked(dims: Vec<usize>, matrix: CMatrix) -> Self {
        Self { dims, matrix }
    }

    /// Pure state |psi><psi| on a single factor.
    pub fn from_pure(dims: Vec<usize>, psi: &[Complex64]) -> Result<Self> {
        let total: usize = dims.iter().product();
        if psi.len() != total {
            return Err(Error::InvalidArgument(format!(
                "state vector length {} does not match dims {:?}",
                psi.len(),
                dims
            )));
        }
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidState(format!(
                "state vector norm^2 is {norm}, not 1"
            )));
        }
        let mut m = CMatrix::zeros(total, total);
        for i in 0..total {
            for j in 0..total {
                m[(i, j)] = psi[i] * psi[j].conj();
            }
        }
        Ok(Self { dims, matrix: m })
    }

    /// Maximally mixed qubit state.
    pub fn maximally_mixed_qubit() -> Self {
        Self::new_unchecked(vec![2], identity(2).scale(0.5))
    }

    /// Qubit state from a Bloch vector (norm <= 1).
    pub fn from_bloch(r: [f64; 3]) -> Result<Self> {
        let n = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
        if n > 1.0 + 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "Bloch vector has norm {n} > 1"
            )));
        }
        let m = CMatrix::from_row_slice(
            2,
            2,
            &[
                Complex64::new(0.5 * (1.0 + r[2]), 0.0),
                Complex64::new(0.5 * r[0], -0.5 * r[1]),
                Complex64::new(0.5 * r[0], 0.5 * r[1]),
                Complex64::new(0.5 * (1.0 - r[2]), 0.0),
            ],
        );
        Ok(Self::new_unchecked(vec![2], m))
    }

    /// Bloch vector of a qubit state.
    pub fn bloch(&self) -> Result<[f64; 3]> {
        if self.dim() != 2 {
            return Err(Error::InvalidArgument(
                "bloch() requires a 2x2 operator".into(),
            ));
        }
        let m = &self.matrix;
        Ok([
            2.0 * m[(0, 1)].re,
            -2.0 * m[(0, 1)].im,
            (m[(0, 0)] - m[(1, 1)]).re,
        ])
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Total Hilbert dimension.
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub(crate) fn matrix_mut(&mut self) -> &mut CMatrix {
        &mut self.matrix
    }

    /// Tensor product, concatenating the factor lists.
    pub fn tensor(&self, other: &Self) -> Self {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        Self::new_unchecked(dims, kron(&self.matrix, &other.matrix))
    }

    /// Eigenvalues, clamped into [0, inf); errors if any lies below -PSD_TOL.
    pub fn eigenvalues_clamped(&self) -> Result<Vec<f64>> {
        let w = hermitian_eigenvalues(&self.matrix)?;
        clamp_spectrum(w)
    }
}

fn clamp_spectrum(mut w: Vec<f64>) -> Result<Vec<f64>> {
    for v in &mut w {
        if *v < -PSD_TOL {
            return Err(Error::InvalidState(format!(
                "eigenvalue {v} below PSD tolerance -{PSD_TOL}"
            )));
        }
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    Ok(w)
}

/// Strides for a row-major (first factor most significant) multi-index.
fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * dims[i + 1];
    }
    s
}

/// Partial trace onto the kept factors (declaration order preserved).
pub fn partial_trace(rho: &DensityOperator, keep: &[usize]) -> Result<DensityOperator> {
    let dims = rho.dims();
    if keep.is_empty() {
        return Err(Error::InvalidArgument("keep set is empty".into()));
    }
    let mut keep: Vec<usize> = keep.to_vec();
    keep.sort_unstable();
    keep.dedup();
    if keep.iter().any(|&k| k >= dims.len()) {
        return Err(Error::InvalidArgument(format!(
            "keep {:?} out of range for {} factors",
            keep,
            dims.len()
        )));
    }
    let traced: Vec<usize> = (0..dims.len()).filter(|i| !keep.contains(i)).collect();
    let full_strides = strides(dims);

    let keep_dims: Vec<usize> = keep.iter().map(|&k| dims[k]).collect();
    let dk: usize = keep_dims.iter().product();
    let dt: usize = traced.iter().map(|&t| dims[t]).product();

    // Offset of each kept (resp. traced) multi-index inside the full index.
    let keep_offsets: Vec<usize> = (0..dk)
        .map(|mut ki| {
            let mut off = 0;
            for f in keep.iter().rev() {
                off += (ki % dims[*f]) * full_strides[*f];
                ki /= dims[*f];
            }
            off
        })
        .collect();
    let traced_offsets: Vec<usize> = (0..dt)
        .map(|mut ti| {
            let mut off = 0;
            for f in traced.iter().rev() {
                off += (ti % dims[*f]) * full_strides[*f];
                ti /= dims[*f];
            }
            off
        })
        .collect();

    let m = rho.matrix();
    let mut out = CMatrix::zeros(dk, dk);
    for (a, &ra) in keep_offsets.iter().enumerate() {
        for (b, &rb) in keep_offsets.iter().enumerate() {
            let mut acc = Complex64::default();
            for &t in &traced_offsets {
                acc += m[(ra + t, rb + t)];
            }
            out[(a, b)] = acc;
        }
    }
    Ok(DensityOperator::new_unchecked(keep_dims, out))
}

/// Hermitian PSD square root: (sqrt M)^2 = M.
pub fn matrix_sqrt_psd(m: &CMatrix) -> Result<CMatrix> {
    if !is_hermitian(m, PSD_TOL) {
        return Err(Error::InvalidState(
            "matrix_sqrt_psd: matrix is not Hermitian".into(),
        ));
    }
    let (w, v) = hermitian_eigen(m)?;
    let w = clamp_spectrum(w)?;
    let n = m.nrows();
    let mut out = CMatrix::zeros(n, n);
    for (k, &lam) in w.iter().enumerate() {
        let s = lam.sqrt();
        if s == 0.0 {
            continue;
        }
        let col = v.column(k);
        for i in 0..n {
            let vi = col[i] * s;
            for j in 0..n {
                out[(i, j)] += vi * col[j].conj();
            }
        }
    }
    Ok(out)
}

/// Uhlmann fidelity F(rho, sigma) = Tr sqrt(rho^{1/2} sigma rho^{1/2}).
pub fn fidelity(rho: &DensityOperator, sigma: &DensityOperator) -> Result<f64> {
    if rho.dims() != sigma.dims() {
        return Err(Error::InvalidArgument(format!(
            "fidelity: dims {:?} vs {:?}",
            rho.dims(),
            sigma.dims()
        )));
    }
    let sr = matrix_sqrt_psd(rho.matrix())?;
    let inner = &sr * sigma.matrix() * &sr;
    let w = hermitian_eigenvalues(&inner)?;
    let w = clamp_spectrum(w)?;
    Ok(w.iter().map(|x| x.sqrt()).sum())
}

/// Von Neumann entropy in bits: -sum lambda log2 lambda.
pub fn von_neumann_entropy(rho: &DensityOperator) -> Result<f64> {
    let w = rho.eigenvalues_clamped()?;
    let mut s = 0.0;
    for lam in w {
        if lam > 0.0 {
            s -= lam * lam.log2();
        }
    }
    Ok(s.max(0.0))
}

/// Binary Shannon entropy h(p) in bits.
pub fn binary_entropy(p: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!(
            "binary_entropy: p = {p} outside [0, 1]"
        )));
    }
    let term = |x: f64| if x > 0.0 { -x * x.log2() } else { 0.0 };
    Ok(term(p) + term(1.0 - p))
}

/// A joint distribution over pairs of symbols.
///
/// Keys are symbol pairs (bits are the common case, but Bob's bookkeeping in
/// the localized protocols adds a third "absent" symbol).
#[derive(Debug, Clone, PartialEq)]
pub struct JointDistribution {
    table: BTreeMap<(String, String), f64>,
}

impl JointDistribution {
    pub fn new(table: BTreeMap<(String, String), f64>) -> Result<Self> {
        let mut sum = 0.0;
        for ((a, b), &p) in &table {
            if p < -PROB_TOL {
                return Err(Error::InvalidState(format!(
                    "negative probability {p} for ({a}, {b})"
                )));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > PROB_TOL {
            return Err(Error::InvalidState(format!(
                "probabilities sum to {sum}, not 1"
            )));
        }
        Ok(Self { table })
    }

    pub fn table(&self) -> &BTreeMap<(String, String), f64> {
        &self.table
    }

    pub fn prob(&self, a: &str, b: &str) -> f64 {
        self.table
            .get(&(a.to_string(), b.to_string()))
            .copied()
            .unwrap_or(0.0)
    }

    /// Marginal over the first symbol.
    pub fn marginal_a(&self) -> BTreeMap<String, f64> {
        let mut m = BTreeMap::new();
        for ((a, _), &p) in &self.table {
            *m.entry(a.clone()).or_insert(0.0) += p;
        }
        m
    }

    /// Marginal over the second symbol.
    pub fn marginal_b(&self) -> BTreeMap<String, f64> {
        let mut m = BTreeMap::new();
        for ((_, b), &p) in &self.table {
            *m.entry(b.clone()).or_insert(0.0) += p;
        }
        m
    }
}

/// Classical mutual information I(A:B) in bits; zero-probability cells
/// contribute nothing.
pub fn mutual_information_cc(p: &JointDistribution) -> f64 {
    let pa = p.marginal_a();
    let pb = p.marginal_b();
    let mut i = 0.0;
    for ((a, b), &pab) in p.table() {
        if pab <= 0.0 {
            continue;
        }
        i += pab * (pab / (pa[a] * pb[b])).log2();
    }
    i.max(0.0)
}
