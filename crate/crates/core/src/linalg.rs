//! Dense complex linear algebra used by every stage of the solver.
//!
//! Matrices are stored column-major. Every kernel takes an explicit
//! [`Workers`] count so that a caller running many boxes concurrently can
//! bound the number of threads each kernel may fan out to. Multi-worker calls
//! run on whatever rayon pool the caller is installed in.

use std::fmt;
use std::num::NonZeroUsize;
use std::ops::{Index, IndexMut};
use std::sync::atomic::{AtomicU64, Ordering};

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::lu::partial_pivoting::{factor, inverse, solve};
use faer::{Accum, MatMut, MatRef, Par};
use num_complex::Complex64;
use thiserror::Error;

/// Complex double-precision scalar.
pub type C64 = Complex64;

/// Dense complex vector.
pub type CVector = Vec<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("{op}: dimension mismatch ({lhs_rows}x{lhs_cols} vs {rhs_rows}x{rhs_cols})")]
    DimensionMismatch {
        op: &'static str,
        lhs_rows: usize,
        lhs_cols: usize,
        rhs_rows: usize,
        rhs_cols: usize,
    },
    #[error("{op}: matrix is not square ({rows}x{cols})")]
    NotSquare { op: &'static str, rows: usize, cols: usize },
    #[error("singular matrix: pivot {pivot} has magnitude {magnitude:e} (scale {scale:e})")]
    Singular { pivot: usize, magnitude: f64, scale: f64 },
    #[error("{op}: non-finite value in output")]
    NonFinite { op: &'static str },
}

/// Number of cooperating workers a single kernel call may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Workers(NonZeroUsize);

impl Workers {
    pub const ONE: Workers = Workers(NonZeroUsize::MIN);

    /// Zero is clamped to one.
    pub fn new(n: usize) -> Self {
        Workers(NonZeroUsize::new(n.max(1)).unwrap())
    }

    pub fn get(self) -> usize {
        self.0.get()
    }

    fn par(self) -> Par {
        if self.0.get() == 1 {
            Par::Seq
        } else {
            Par::Rayon(self.0)
        }
    }
}

impl Default for Workers {
    fn default() -> Self {
        Workers::ONE
    }
}

static FACTORIZATIONS: AtomicU64 = AtomicU64::new(0);
static GEMMS: AtomicU64 = AtomicU64::new(0);
static MATVECS: AtomicU64 = AtomicU64::new(0);

/// Process-wide kernel call counters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OpCounts {
    pub factorizations: u64,
    pub gemms: u64,
    pub matvecs: u64,
}

impl OpCounts {
    pub fn since(self, earlier: OpCounts) -> OpCounts {
        OpCounts {
            factorizations: self.factorizations - earlier.factorizations,
            gemms: self.gemms - earlier.gemms,
            matvecs: self.matvecs - earlier.matvecs,
        }
    }
}

pub fn op_counts() -> OpCounts {
    OpCounts {
        factorizations: FACTORIZATIONS.load(Ordering::Relaxed),
        gemms: GEMMS.load(Ordering::Relaxed),
        matvecs: MATVECS.load(Ordering::Relaxed),
    }
}

/// Dense complex matrix in column-major order.
#[derive(Clone, PartialEq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CMatrix({}x{})", self.rows, self.cols)
    }
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMatrix {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for j in 0..cols {
            for i in 0..rows {
                data.push(f(i, j));
            }
        }
        CMatrix { rows, cols, data }
    }

    /// Wraps column-major data. Panics if the length is wrong.
    pub fn from_col_major(rows: usize, cols: usize, data: Vec<C64>) -> Self {
        assert_eq!(data.len(), rows * cols, "column-major buffer length");
        CMatrix { rows, cols, data }
    }

    pub fn from_diag(d: &[C64]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
    }

    /// Column vector view of a slice.
    pub fn column(x: &[C64]) -> Self {
        CMatrix {
            rows: x.len(),
            cols: 1,
            data: x.to_vec(),
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<C64> {
        self.data
    }

    pub fn col(&self, j: usize) -> &[C64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn col_mut(&mut self, j: usize) -> &mut [C64] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    /// Size in bytes of the entry buffer.
    pub fn byte_size(&self) -> usize {
        self.data.len() * std::mem::size_of::<C64>()
    }

    /// Gathers `self[rows, cols]` into a new matrix.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> CMatrix {
        let mut out = CMatrix::zeros(rows.len(), cols.len());
        for (jo, &j) in cols.iter().enumerate() {
            let src = self.col(j);
            let dst = out.col_mut(jo);
            for (io, &i) in rows.iter().enumerate() {
                dst[io] = src[i];
            }
        }
        out
    }

    /// Contiguous column block `[start, end)`.
    pub fn col_block(&self, start: usize, end: usize) -> CMatrix {
        CMatrix {
            rows: self.rows,
            cols: end - start,
            data: self.data[start * self.rows..end * self.rows].to_vec(),
        }
    }

    /// Stacks `top` over `bottom`.
    pub fn vstack(top: &CMatrix, bottom: &CMatrix) -> CMatrix {
        assert_eq!(top.cols, bottom.cols, "vstack column count");
        let rows = top.rows + bottom.rows;
        let mut out = CMatrix::zeros(rows, top.cols);
        for j in 0..top.cols {
            let dst = out.col_mut(j);
            dst[..top.rows].copy_from_slice(top.col(j));
            dst[top.rows..].copy_from_slice(bottom.col(j));
        }
        out
    }

    /// Places `left` beside `right`.
    pub fn hstack(left: &CMatrix, right: &CMatrix) -> CMatrix {
        assert_eq!(left.rows, right.rows, "hstack row count");
        let mut data = Vec::with_capacity(left.data.len() + right.data.len());
        data.extend_from_slice(&left.data);
        data.extend_from_slice(&right.data);
        CMatrix {
            rows: left.rows,
            cols: left.cols + right.cols,
            data,
        }
    }

    pub fn scale(&mut self, alpha: C64) {
        for v in &mut self.data {
            *v *= alpha;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.norm()))
    }

    /// Max-norm of `self - other`.
    pub fn max_abs_diff(&self, other: &CMatrix) -> f64 {
        assert_eq!(self.shape(), other.shape(), "max_abs_diff shapes");
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).norm()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    pub(crate) fn view(&self) -> MatRef<'_, C64> {
        MatRef::from_column_major_slice(&self.data, self.rows, self.cols)
    }

    pub(crate) fn view_mut(&mut self) -> MatMut<'_, C64> {
        MatMut::from_column_major_slice_mut(&mut self.data, self.rows, self.cols)
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;

    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &self.data[j * self.rows + i]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        debug_assert!(i < self.rows && j < self.cols);
        &mut self.data[j * self.rows + i]
    }
}

fn finite_slice(x: &[C64]) -> bool {
    x.iter().all(|v| v.re.is_finite() && v.im.is_finite())
}

/// `A * B`.
pub fn gemm(a: &CMatrix, b: &CMatrix, workers: Workers) -> Result<CMatrix, LinalgError> {
    let mut c = CMatrix::zeros(a.rows, b.cols);
    gemm_acc(&mut c, ONE, a, b, workers, false)?;
    Ok(c)
}

/// `C = alpha * A * B + (C if accumulate)`.
pub fn gemm_acc(
    c: &mut CMatrix,
    alpha: C64,
    a: &CMatrix,
    b: &CMatrix,
    workers: Workers,
    accumulate: bool,
) -> Result<(), LinalgError> {
    if a.cols != b.rows || c.rows != a.rows || c.cols != b.cols {
        return Err(LinalgError::DimensionMismatch {
            op: "gemm",
            lhs_rows: a.rows,
            lhs_cols: a.cols,
            rhs_rows: b.rows,
            rhs_cols: b.cols,
        });
    }
    GEMMS.fetch_add(1, Ordering::Relaxed);
    let accum = if accumulate { Accum::Add } else { Accum::Replace };
    if a.cols == 0 {
        if !accumulate {
            c.data.fill(ZERO);
        }
        return Ok(());
    }
    faer::linalg::matmul::matmul(c.view_mut(), accum, a.view(), b.view(), alpha, workers.par());
    if !c.is_finite() {
        return Err(LinalgError::NonFinite { op: "gemm" });
    }
    Ok(())
}

/// `A * x`.
pub fn matvec(a: &CMatrix, x: &[C64], workers: Workers) -> Result<CVector, LinalgError> {
    let mut y = vec![ZERO; a.rows];
    matvec_acc(&mut y, a, x, workers, false)?;
    Ok(y)
}

/// `y = A * x + (y if accumulate)`.
pub fn matvec_acc(
    y: &mut [C64],
    a: &CMatrix,
    x: &[C64],
    workers: Workers,
    accumulate: bool,
) -> Result<(), LinalgError> {
    if a.cols != x.len() || a.rows != y.len() {
        return Err(LinalgError::DimensionMismatch {
            op: "matvec",
            lhs_rows: a.rows,
            lhs_cols: a.cols,
            rhs_rows: x.len(),
            rhs_cols: 1,
        });
    }
    MATVECS.fetch_add(1, Ordering::Relaxed);
    if a.cols == 0 {
        if !accumulate {
            y.fill(ZERO);
        }
        return Ok(());
    }
    let accum = if accumulate { Accum::Add } else { Accum::Replace };
    let xv = MatRef::from_column_major_slice(x, x.len(), 1);
    let yv = MatMut::from_column_major_slice_mut(y, a.rows, 1);
    faer::linalg::matmul::matmul(yv, accum, a.view(), xv, ONE, workers.par());
    if !finite_slice(y) {
        return Err(LinalgError::NonFinite { op: "matvec" });
    }
    Ok(())
}

/// In-place partial-pivot LU of a square matrix.
struct LuFactors {
    lu: CMatrix,
    perm: Vec<usize>,
    perm_inv: Vec<usize>,
}

/// Relative pivot threshold below which a matrix is reported singular.
const PIVOT_TOL: f64 = 1e-14;

fn check_square_finite(a: &CMatrix, op: &'static str) -> Result<(), LinalgError> {
    if a.rows != a.cols {
        return Err(LinalgError::NotSquare {
            op,
            rows: a.rows,
            cols: a.cols,
        });
    }
    if !a.is_finite() {
        return Err(LinalgError::NonFinite { op });
    }
    Ok(())
}

fn factorize(a: &CMatrix, workers: Workers, op: &'static str) -> Result<LuFactors, LinalgError> {
    check_square_finite(a, op)?;
    FACTORIZATIONS.fetch_add(1, Ordering::Relaxed);
    let n = a.rows;
    let par = workers.par();
    let mut lu = a.clone();
    let mut perm = vec![0usize; n];
    let mut perm_inv = vec![0usize; n];
    let mut buf = MemBuffer::new(factor::lu_in_place_scratch::<usize, C64>(n, n, par, Default::default()));
    factor::lu_in_place(
        lu.view_mut(),
        &mut perm,
        &mut perm_inv,
        par,
        MemStack::new(&mut buf),
        Default::default(),
    );
    let scale = a.max_abs().max(f64::MIN_POSITIVE);
    for k in 0..n {
        let magnitude = lu[(k, k)].norm();
        if magnitude.is_nan() || magnitude <= PIVOT_TOL * scale {
            return Err(LinalgError::Singular {
                pivot: k,
                magnitude,
                scale,
            });
        }
    }
    Ok(LuFactors { lu, perm, perm_inv })
}

/// Explicit inverse via partial-pivot LU factorization.
pub fn lu_invert(a: &CMatrix, workers: Workers) -> Result<CMatrix, LinalgError> {
    let f = factorize(a, workers, "lu_invert")?;
    let n = a.rows;
    let par = workers.par();
    let mut out = CMatrix::zeros(n, n);
    let mut buf = MemBuffer::new(inverse::inverse_scratch::<usize, C64>(n, par));
    // SAFETY: perm / perm_inv come from a successful factorization of size n.
    let perm = unsafe { faer::perm::PermRef::new_unchecked(&f.perm, &f.perm_inv, n) };
    inverse::inverse(
        out.view_mut(),
        f.lu.view(),
        f.lu.view(),
        perm,
        par,
        MemStack::new(&mut buf),
    );
    if !out.is_finite() {
        return Err(LinalgError::NonFinite { op: "lu_invert" });
    }
    Ok(out)
}

/// Solves `A X = B` by partial-pivot LU.
pub fn lu_solve(a: &CMatrix, b: &CMatrix, workers: Workers) -> Result<CMatrix, LinalgError> {
    if b.rows != a.rows {
        return Err(LinalgError::DimensionMismatch {
            op: "lu_solve",
            lhs_rows: a.rows,
            lhs_cols: a.cols,
            rhs_rows: b.rows,
            rhs_cols: b.cols,
        });
    }
    let f = factorize(a, workers, "lu_solve")?;
    let n = a.rows;
    let par = workers.par();
    let mut x = b.clone();
    let mut buf = MemBuffer::new(solve::solve_in_place_scratch::<usize, C64>(n, b.cols, par));
    // SAFETY: as in `lu_invert`.
    let perm = unsafe { faer::perm::PermRef::new_unchecked(&f.perm, &f.perm_inv, n) };
    solve::solve_in_place(
        f.lu.view(),
        f.lu.view(),
        perm,
        x.view_mut(),
        par,
        MemStack::new(&mut buf),
    );
    if !x.is_finite() {
        return Err(LinalgError::NonFinite { op: "lu_solve" });
    }
    Ok(x)
}
