//! Dense complex matrices and density-matrix primitives.
//!
//! Tensor ordering: in `tensor(a, b)` the factor `a` is the most significant
//! index, so for qubits `|q0 q1 ... >` has index `q0·2^(n-1) + ... + q_{n-1}`.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

pub use num_complex::Complex64 as C64;
use rand::Rng;

use crate::{Error, Result};

pub const DIM_CAP: usize = 4096;
pub const TOL_HERM: f64 = 1e-10;
pub const TOL_TRACE: f64 = 1e-10;
pub const TOL_PSD: f64 = 1e-10;
/// Eigenvalues in `[-PSD_CLIP, 0)` are treated as zero by matrix roots.
pub const PSD_CLIP: f64 = 1e-8;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };
pub const I: C64 = C64 { re: 0.0, im: 1.0 };

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[derive(Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl fmt::Debug for ComplexMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "ComplexMatrix {}x{}", self.rows, self.cols)?;
        for r in 0..self.rows {
            let row: Vec<String> = (0..self.cols)
                .map(|k| {
                    let z = self[(r, k)];
                    format!("{:+.4}{:+.4}i", z.re, z.im)
                })
                .collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        Ok(())
    }
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        ComplexMatrix { rows, cols, data: vec![ZERO; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for k in 0..n {
            m.data[k * n + k] = ONE;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for k in 0..cols {
                data.push(f(r, k));
            }
        }
        ComplexMatrix { rows, cols, data }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(ComplexMatrix { rows, cols, data })
    }

    /// Row-major real entries.
    pub fn from_real(rows: usize, cols: usize, re: &[f64]) -> Result<Self> {
        Self::from_vec(rows, cols, re.iter().map(|&x| c(x, 0.0)).collect())
    }

    pub fn diag(d: &[C64]) -> Self {
        let n = d.len();
        let mut m = Self::zeros(n, n);
        for (k, &z) in d.iter().enumerate() {
            m.data[k * n + k] = z;
        }
        m
    }

    pub fn diag_real(d: &[f64]) -> Self {
        Self::diag(&d.iter().map(|&x| c(x, 0.0)).collect::<Vec<_>>())
    }

    /// `|v><w|`
    pub fn outer(v: &[C64], w: &[C64]) -> Self {
        Self::from_fn(v.len(), w.len(), |r, k| v[r] * w[k].conj())
    }

    pub fn projector(v: &[C64]) -> Self {
        Self::outer(v, v)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [C64] {
        &mut self.data
    }

    pub fn column(&self, k: usize) -> Vec<C64> {
        (0..self.rows).map(|r| self[(r, k)]).collect()
    }

    pub fn set_column(&mut self, k: usize, v: &[C64]) {
        for (r, &z) in v.iter().enumerate() {
            self[(r, k)] = z;
        }
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, k| self[(k, r)].conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, k| self[(k, r)])
    }

    pub fn conj(&self) -> Self {
        self.map(|z| z.conj())
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Self {
        ComplexMatrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|&z| f(z)).collect() }
    }

    pub fn scale(&self, s: C64) -> Self {
        self.map(|z| z * s)
    }

    pub fn scale_re(&self, s: f64) -> Self {
        self.map(|z| z * s)
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|k| self[(k, k)]).sum()
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Max entrywise deviation from Hermiticity.
    pub fn hermitian_deviation(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let mut dev: f64 = 0.0;
        for r in 0..self.rows {
            for k in r..self.cols {
                dev = dev.max((self[(r, k)] - self[(k, r)].conj()).norm());
            }
        }
        dev
    }

    pub fn hermitian_part(&self) -> Self {
        (self + &self.adjoint()).scale_re(0.5)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::Dimension(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(self.mul_unchecked(other))
    }

    fn mul_unchecked(&self, other: &Self) -> Self {
        let (n, m, p) = (self.rows, self.cols, other.cols);
        let mut out = vec![ZERO; n * p];
        for r in 0..n {
            let orow = &mut out[r * p..(r + 1) * p];
            for k in 0..m {
                let a = self.data[r * m + k];
                if a == ZERO {
                    continue;
                }
                let brow = &other.data[k * p..(k + 1) * p];
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o += a * b;
                }
            }
        }
        ComplexMatrix { rows: n, cols: p, data: out }
    }

    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(self.cols, v.len(), "matrix-vector dimension mismatch");
        (0..self.rows)
            .map(|r| self.data[r * self.cols..(r + 1) * self.cols].iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn commutator(&self, other: &Self) -> Self {
        &(self * other) - &(other * self)
    }

    pub fn anticommutator(&self, other: &Self) -> Self {
        &(self * other) + &(other * self)
    }

    /// Hilbert-Schmidt inner product `Tr(self† other)`.
    pub fn hs_inner(&self, other: &Self) -> C64 {
        self.data.iter().zip(&other.data).map(|(a, b)| a.conj() * b).sum()
    }

    /// `Tr(self · other)` without forming the product.
    pub fn trace_product(&self, other: &Self) -> C64 {
        assert_eq!(self.cols, other.rows);
        assert_eq!(self.rows, other.cols);
        let mut s = ZERO;
        for r in 0..self.rows {
            for k in 0..self.cols {
                s += self[(r, k)] * other[(k, r)];
            }
        }
        s
    }

    pub fn block(&self, r0: usize, c0: usize, rows: usize, cols: usize) -> Self {
        Self::from_fn(rows, cols, |r, k| self[(r0 + r, c0 + k)])
    }

    pub fn set_block(&mut self, r0: usize, c0: usize, b: &Self) {
        for r in 0..b.rows {
            for k in 0..b.cols {
                self[(r0 + r, c0 + k)] = b[(r, k)];
            }
        }
    }

    /// Block-diagonal direct sum.
    pub fn direct_sum(&self, other: &Self) -> Self {
        let mut m = Self::zeros(self.rows + other.rows, self.cols + other.cols);
        m.set_block(0, 0, self);
        m.set_block(self.rows, self.cols, other);
        m
    }

    pub fn powi(&self, k: u32) -> Self {
        let mut out = Self::identity(self.rows);
        for _ in 0..k {
            out = &out * self;
        }
        out
    }
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;
    fn index(&self, (r, k): (usize, usize)) -> &C64 {
        debug_assert!(r < self.rows && k < self.cols);
        &self.data[r * self.cols + k]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (r, k): (usize, usize)) -> &mut C64 {
        debug_assert!(r < self.rows && k < self.cols);
        &mut self.data[r * self.cols + k]
    }
}

impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    /// Panics on shape mismatch; use [`ComplexMatrix::matmul`] for a checked product.
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!(self.cols, rhs.rows, "matrix product dimension mismatch");
        self.mul_unchecked(rhs)
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a + b).collect(),
        }
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        assert_eq!((self.rows, self.cols), (rhs.rows, rhs.cols));
        ComplexMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&rhs.data).map(|(a, b)| a - b).collect(),
        }
    }
}

impl Neg for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn neg(self) -> ComplexMatrix {
        self.map(|z| -z)
    }
}

// ---------------------------------------------------------------------------
// Vectors

pub fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn normalized(v: &[C64]) -> Vec<C64> {
    let n = norm(v);
    v.iter().map(|z| z / n).collect()
}

pub fn basis(d: usize, k: usize) -> Vec<C64> {
    let mut v = vec![ZERO; d];
    v[k] = ONE;
    v
}

/// Computational basis ket for a bit string, qubit 0 first.
pub fn ket(bits: &[u8]) -> Vec<C64> {
    let idx = bits.iter().fold(0usize, |acc, &b| (acc << 1) | (b as usize & 1));
    basis(1 << bits.len(), idx)
}

pub fn kron_vec(a: &[C64], b: &[C64]) -> Vec<C64> {
    a.iter().flat_map(|x| b.iter().map(move |y| x * y)).collect()
}

// ---------------------------------------------------------------------------
// Paulis and embeddings

pub fn pauli_x() -> ComplexMatrix {
    ComplexMatrix::from_vec(2, 2, vec![ZERO, ONE, ONE, ZERO]).unwrap()
}

pub fn pauli_y() -> ComplexMatrix {
    ComplexMatrix::from_vec(2, 2, vec![ZERO, -I, I, ZERO]).unwrap()
}

pub fn pauli_z() -> ComplexMatrix {
    ComplexMatrix::diag_real(&[1.0, -1.0])
}

pub fn hadamard() -> ComplexMatrix {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    ComplexMatrix::from_real(2, 2, &[h, h, h, -h]).unwrap()
}

/// Kronecker product with the default dimension cap.
pub fn tensor(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    tensor_capped(a, b, DIM_CAP)
}

pub fn tensor_capped(a: &ComplexMatrix, b: &ComplexMatrix, cap: usize) -> Result<ComplexMatrix> {
    let rows = a.rows.checked_mul(b.rows);
    let cols = a.cols.checked_mul(b.cols);
    match (rows, cols) {
        (Some(r), Some(k)) if r <= cap && k <= cap => {}
        _ => {
            return Err(Error::Dimension(format!(
                "tensor product {}x{} ⊗ {}x{} exceeds cap {cap}",
                a.rows, a.cols, b.rows, b.cols
            )))
        }
    }
    let (br, bc) = (b.rows, b.cols);
    let mut m = ComplexMatrix::zeros(a.rows * br, a.cols * bc);
    for ar in 0..a.rows {
        for ac in 0..a.cols {
            let s = a[(ar, ac)];
            if s == ZERO {
                continue;
            }
            for r in 0..br {
                for k in 0..bc {
                    m[(ar * br + r, ac * bc + k)] = s * b[(r, k)];
                }
            }
        }
    }
    Ok(m)
}

/// Left-to-right Kronecker product of a list.
pub fn tensor_all(ops: &[&ComplexMatrix]) -> Result<ComplexMatrix> {
    let mut out = ComplexMatrix::identity(1);
    for op in ops {
        out = tensor(&out, op)?;
    }
    Ok(out)
}

/// `op` acting on qubit `q` of `n`, identity elsewhere.
pub fn on_qubit(op: &ComplexMatrix, q: usize, n: usize) -> ComplexMatrix {
    let left = ComplexMatrix::identity(1 << q);
    let right = ComplexMatrix::identity(1 << (n - q - 1));
    tensor(&tensor(&left, op).unwrap(), &right).unwrap()
}

// ---------------------------------------------------------------------------
// Partial trace

/// Partial trace of an arbitrary square operator over the factors not in `keep`.
pub fn partial_trace_mat(m: &ComplexMatrix, dims: &[usize], keep: &[usize]) -> Result<ComplexMatrix> {
    let d: usize = dims.iter().product();
    if !m.is_square() || m.rows() != d {
        return Err(Error::Dimension(format!("factor dims {dims:?} do not match a {}x{} operator", m.rows, m.cols)));
    }
    if keep.is_empty() {
        return Err(Error::Dimension("keep set is empty".into()));
    }
    let mut kept: Vec<usize> = keep.to_vec();
    kept.sort_unstable();
    kept.dedup();
    if kept.iter().any(|&k| k >= dims.len()) {
        return Err(Error::Dimension(format!("keep {keep:?} out of range for {} factors", dims.len())));
    }
    let traced: Vec<usize> = (0..dims.len()).filter(|k| !kept.contains(k)).collect();
    let dk: usize = kept.iter().map(|&k| dims[k]).product();
    let dt: usize = traced.iter().map(|&k| dims[k]).product();

    // stride of each factor in the full index
    let mut stride = vec![1usize; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        stride[k] = stride[k + 1] * dims[k + 1];
    }
    let offsets = |factors: &[usize], total: usize| -> Vec<usize> {
        (0..total)
            .map(|mut idx| {
                let mut off = 0;
                for &f in factors.iter().rev() {
                    off += (idx % dims[f]) * stride[f];
                    idx /= dims[f];
                }
                off
            })
            .collect()
    };
    let ko = offsets(&kept, dk);
    let to = offsets(&traced, dt);

    let mut out = ComplexMatrix::zeros(dk, dk);
    for r in 0..dk {
        for k in 0..dk {
            let mut s = ZERO;
            for &e in &to {
                s += m[(ko[r] + e, ko[k] + e)];
            }
            out[(r, k)] = s;
        }
    }
    Ok(out)
}

pub fn partial_trace(rho: &DensityMatrix, dims: &[usize], keep: &[usize]) -> Result<DensityMatrix> {
    Ok(DensityMatrix::new_unchecked(partial_trace_mat(rho.mat(), dims, keep)?))
}

// ---------------------------------------------------------------------------
// Eigensolvers

fn check_hermitian(m: &ComplexMatrix) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Dimension(format!("{}x{} matrix is not square", m.rows, m.cols)));
    }
    let dev = m.hermitian_deviation();
    let tol = TOL_HERM * m.max_abs().max(1.0);
    if dev > tol || !dev.is_finite() {
        return Err(Error::NotHermitian(dev));
    }
    Ok(())
}

/// Hermitian eigendecomposition by cyclic complex Jacobi rotations.
///
/// Returns ascending eigenvalues and a unitary whose columns are the eigenvectors.
pub fn eigh(m: &ComplexMatrix) -> Result<(Vec<f64>, ComplexMatrix)> {
    check_hermitian(m)?;
    eigh_unchecked(&m.hermitian_part())
}

fn eigh_unchecked(m: &ComplexMatrix) -> Result<(Vec<f64>, ComplexMatrix)> {
    let n = m.rows;
    let mut a = m.clone();
    let mut v = ComplexMatrix::identity(n);
    let scale = a.frobenius().max(f64::MIN_POSITIVE);
    const MAX_SWEEPS: usize = 100;

    let mut converged = n <= 1;
    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|r| (0..n).filter(move |&k| k != r).map(move |k| (r, k)))
            .map(|(r, k)| a[(r, k)].norm_sqr())
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let b = a[(p, q)];
                let babs = b.norm();
                if babs <= 1e-300 || babs < 1e-18 * scale {
                    continue;
                }
                let phase = b / babs;
                let (app, aqq) = (a[(p, p)].re, a[(q, q)].re);
                let theta = (aqq - app) / (2.0 * babs);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = t * cs;
                let ph = phase.conj();
                let (upp, upq, uqp, uqq) = (c(cs, 0.0), c(sn, 0.0), ph * (-sn), ph * cs);

                for r in 0..n {
                    let (x, y) = (a[(r, p)], a[(r, q)]);
                    a[(r, p)] = x * upp + y * uqp;
                    a[(r, q)] = x * upq + y * uqq;
                }
                for k in 0..n {
                    let (x, y) = (a[(p, k)], a[(q, k)]);
                    a[(p, k)] = upp.conj() * x + uqp.conj() * y;
                    a[(q, k)] = upq.conj() * x + uqq.conj() * y;
                }
                a[(p, q)] = ZERO;
                a[(q, p)] = ZERO;
                a[(p, p)] = c(a[(p, p)].re, 0.0);
                a[(q, q)] = c(a[(q, q)].re, 0.0);
                for r in 0..n {
                    let (x, y) = (v[(r, p)], v[(r, q)]);
                    v[(r, p)] = x * upp + y * uqp;
                    v[(r, q)] = x * upq + y * uqq;
                }
            }
        }
    }
    if !converged {
        return Err(Error::NoConvergence { what: "Jacobi eigensolver", iters: MAX_SWEEPS });
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| a[(x, x)].re.total_cmp(&a[(y, y)].re));
    let vals = order.iter().map(|&k| a[(k, k)].re).collect();
    let vecs = ComplexMatrix::from_fn(n, n, |r, k| v[(r, order[k])]);
    Ok((vals, vecs))
}

/// `V diag(f(λ)) V†` for Hermitian input.
pub fn hermitian_fn(m: &ComplexMatrix, f: impl Fn(f64) -> C64) -> Result<ComplexMatrix> {
    let (vals, v) = eigh(m)?;
    Ok(spectral(&vals, &v, f))
}

fn spectral(vals: &[f64], v: &ComplexMatrix, f: impl Fn(f64) -> C64) -> ComplexMatrix {
    let n = vals.len();
    let fv: Vec<C64> = vals.iter().map(|&x| f(x)).collect();
    ComplexMatrix::from_fn(n, n, |r, k| (0..n).map(|j| v[(r, j)] * fv[j] * v[(k, j)].conj()).sum())
}

/// Eigenvalues of a general square matrix: Householder reduction to
/// Hessenberg form, then shifted complex QR with deflation.
pub fn eig_general(m: &ComplexMatrix) -> Result<Vec<C64>> {
    if !m.is_square() {
        return Err(Error::Dimension(format!("{}x{} matrix is not square", m.rows, m.cols)));
    }
    if !m.is_finite() {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    let n = m.rows;
    let mut h = hessenberg(m);
    let mut vals = vec![ZERO; n];
    let anorm = h.frobenius().max(f64::MIN_POSITIVE);
    let max_iters = 100 * n.max(1);

    let mut hi = n as isize - 1;
    let mut iters_here = 0usize;
    let mut total = 0usize;
    while hi >= 0 {
        let hiu = hi as usize;
        // find the start of the unreduced block ending at hi
        let mut lo = hiu;
        while lo > 0 {
            let s = h[(lo - 1, lo - 1)].norm() + h[(lo, lo)].norm();
            let s = if s == 0.0 { anorm } else { s };
            if h[(lo, lo - 1)].norm() <= f64::EPSILON * s {
                h[(lo, lo - 1)] = ZERO;
                break;
            }
            lo -= 1;
        }
        if lo == hiu {
            vals[hiu] = h[(hiu, hiu)];
            hi -= 1;
            iters_here = 0;
            continue;
        }
        total += 1;
        iters_here += 1;
        if total > max_iters {
            return Err(Error::NoConvergence { what: "Hessenberg QR", iters: total });
        }

        let mu = if iters_here % 10 == 0 {
            let sub2 = if hiu >= 2 { h[(hiu - 1, hiu - 2)].norm() } else { 0.0 };
            h[(hiu, hiu)] + c(h[(hiu, hiu - 1)].norm() + sub2, 0.0)
        } else {
            wilkinson_shift(h[(hiu - 1, hiu - 1)], h[(hiu - 1, hiu)], h[(hiu, hiu - 1)], h[(hiu, hiu)])
        };

        for k in lo..=hiu {
            h[(k, k)] -= mu;
        }
        let mut rots = Vec::with_capacity(hiu - lo);
        for k in lo..hiu {
            let (cs, sn) = givens(h[(k, k)], h[(k + 1, k)]);
            for j in k..=hiu {
                let (x, y) = (h[(k, j)], h[(k + 1, j)]);
                h[(k, j)] = x * cs + sn * y;
                h[(k + 1, j)] = -sn.conj() * x + y * cs;
            }
            rots.push((cs, sn));
        }
        for (off, &(cs, sn)) in rots.iter().enumerate() {
            let k = lo + off;
            for r in lo..=(k + 1).min(hiu) {
                let (x, y) = (h[(r, k)], h[(r, k + 1)]);
                h[(r, k)] = x * cs + y * sn.conj();
                h[(r, k + 1)] = -x * sn + y * cs;
            }
        }
        for k in lo..=hiu {
            h[(k, k)] += mu;
        }
    }
    Ok(vals)
}

fn wilkinson_shift(a: C64, b: C64, cc: C64, d: C64) -> C64 {
    let half_tr = (a + d) * 0.5;
    let disc = ((a - d) * 0.5).powi(2) + b * cc;
    let r = disc.sqrt();
    let (l1, l2) = (half_tr + r, half_tr - r);
    if (l1 - d).norm() <= (l2 - d).norm() {
        l1
    } else {
        l2
    }
}

/// Rotation `[[c, s], [-s̄, c]]` with real `c` mapping `(x, y)` to `(r·x/|x|, 0)`.
fn givens(x: C64, y: C64) -> (C64, C64) {
    let (ax, ay) = (x.norm(), y.norm());
    if ay == 0.0 {
        return (ONE, ZERO);
    }
    if ax == 0.0 {
        return (ZERO, y.conj() / ay);
    }
    let r = ax.hypot(ay);
    (c(ax / r, 0.0), (x / ax) * y.conj() / r)
}

fn hessenberg(m: &ComplexMatrix) -> ComplexMatrix {
    let n = m.rows;
    let mut a = m.clone();
    for k in 0..n.saturating_sub(2) {
        let x: Vec<C64> = (k + 1..n).map(|r| a[(r, k)]).collect();
        let xn = norm(&x);
        if xn == 0.0 {
            continue;
        }
        let phase = if x[0].norm() == 0.0 { ONE } else { x[0] / x[0].norm() };
        let mut v = x.clone();
        v[0] += phase * xn;
        let vn = norm(&v);
        if vn == 0.0 {
            continue;
        }
        for z in v.iter_mut() {
            *z /= vn;
        }
        // A ← (I - 2vv†) A on rows k+1..n
        for j in 0..n {
            let s: C64 = v.iter().enumerate().map(|(i, vi)| vi.conj() * a[(k + 1 + i, j)]).sum();
            for (i, vi) in v.iter().enumerate() {
                a[(k + 1 + i, j)] -= vi * s * 2.0;
            }
        }
        // A ← A (I - 2vv†) on columns k+1..n
        for r in 0..n {
            let s: C64 = v.iter().enumerate().map(|(i, vi)| a[(r, k + 1 + i)] * vi).sum();
            for (i, vi) in v.iter().enumerate() {
                a[(r, k + 1 + i)] -= s * vi.conj() * 2.0;
            }
        }
        for r in k + 2..n {
            a[(r, k)] = ZERO;
        }
    }
    a
}

// ---------------------------------------------------------------------------
// Matrix functions

/// Positive square root of a Hermitian PSD matrix.
pub fn sqrtm_psd(m: &ComplexMatrix) -> Result<ComplexMatrix> {
    let (vals, v) = eigh(m)?;
    let scale = vals.iter().fold(1.0f64, |a, x| a.max(x.abs()));
    if let Some(&bad) = vals.iter().find(|&&x| x < -PSD_CLIP * scale) {
        return Err(Error::NotPsd(bad));
    }
    Ok(spectral(&vals, &v, |x| c(x.max(0.0).sqrt(), 0.0)))
}

/// Inverse square root on the support; eigenvalues below `floor` are dropped.
pub fn inv_sqrtm_psd(m: &ComplexMatrix, floor: f64) -> Result<ComplexMatrix> {
    let (vals, v) = eigh(m)?;
    if let Some(&bad) = vals.iter().find(|&&x| x < -PSD_CLIP) {
        return Err(Error::NotPsd(bad));
    }
    Ok(spectral(&vals, &v, |x| if x > floor { c(1.0 / x.sqrt(), 0.0) } else { ZERO }))
}

/// `exp(-i h t)` for Hermitian `h`.
pub fn expm_skew(h: &ComplexMatrix, t: f64) -> Result<ComplexMatrix> {
    let (vals, v) = eigh(h)?;
    Ok(spectral(&vals, &v, |x| C64::from_polar(1.0, -x * t)))
}

/// Uhlmann fidelity `Tr sqrt(sqrt(τ) υ sqrt(τ))` for PSD operators of any trace.
pub fn fidelity_mat(tau: &ComplexMatrix, ups: &ComplexMatrix) -> Result<f64> {
    if tau.rows != ups.rows || !tau.is_square() || !ups.is_square() {
        return Err(Error::Dimension(format!(
            "fidelity of {}x{} and {}x{} operators",
            tau.rows, tau.cols, ups.rows, ups.cols
        )));
    }
    let s = sqrtm_psd(tau)?;
    let inner = (&(&s * ups) * &s).hermitian_part();
    let (vals, _) = eigh_unchecked(&inner)?;
    Ok(vals.iter().map(|&x| x.max(0.0).sqrt()).sum())
}

pub fn fidelity(tau: &DensityMatrix, ups: &DensityMatrix) -> Result<f64> {
    Ok(fidelity_mat(tau.mat(), ups.mat())?.clamp(0.0, 1.0))
}

/// Trace distance `½‖a − b‖₁` of Hermitian operators.
pub fn trace_distance(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<f64> {
    let (vals, _) = eigh(&(a - b))?;
    Ok(0.5 * vals.iter().map(|x| x.abs()).sum::<f64>())
}

// ---------------------------------------------------------------------------
// Density matrices

#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix(ComplexMatrix);

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and positivity.
    pub fn new(m: ComplexMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::Dimension(format!("{}x{} density matrix", m.rows, m.cols)));
        }
        if !m.is_finite() {
            return Err(Error::InvalidState("non-finite entries".into()));
        }
        let dev = m.hermitian_deviation();
        if dev > TOL_HERM {
            return Err(Error::NotHermitian(dev));
        }
        let tr = m.trace();
        if (tr - ONE).norm() > TOL_TRACE {
            return Err(Error::InvalidState(format!("trace {tr}")));
        }
        let (vals, _) = eigh_unchecked(&m.hermitian_part())?;
        if vals[0] < -TOL_PSD {
            return Err(Error::NotPsd(vals[0]));
        }
        Ok(DensityMatrix(m))
    }

    /// Wraps without validation; for operators known to be states by construction.
    pub fn new_unchecked(m: ComplexMatrix) -> Self {
        DensityMatrix(m)
    }

    /// Rescales a nonzero PSD operator to unit trace.
    pub fn normalize(m: ComplexMatrix) -> Result<Self> {
        let tr = m.trace().re;
        if tr <= 0.0 || !tr.is_finite() {
            return Err(Error::InvalidState(format!("cannot normalize operator with trace {tr}")));
        }
        Self::new(m.hermitian_part().scale_re(1.0 / tr))
    }

    pub fn pure(psi: &[C64]) -> Self {
        DensityMatrix(ComplexMatrix::projector(&normalized(psi)))
    }

    pub fn maximally_mixed(d: usize) -> Self {
        DensityMatrix(ComplexMatrix::identity(d).scale_re(1.0 / d as f64))
    }

    pub fn mat(&self) -> &ComplexMatrix {
        &self.0
    }

    pub fn into_inner(self) -> ComplexMatrix {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.rows
    }

    pub fn purity(&self) -> f64 {
        self.0.trace_product(&self.0).re
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        eigh_unchecked(&self.0.hermitian_part()).map(|(v, _)| v).unwrap_or_default()
    }

    pub fn expect(&self, op: &ComplexMatrix) -> C64 {
        self.0.trace_product(op)
    }

    pub fn tensor(&self, other: &DensityMatrix) -> Result<DensityMatrix> {
        Ok(DensityMatrix(tensor(&self.0, &other.0)?))
    }
}

// ---------------------------------------------------------------------------
// Subsystem decomposition H = (H^A ⊗ H^B) ⊕ K

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Decomposition {
    pub d_a: usize,
    pub d_b: usize,
    pub d_k: usize,
}

impl Decomposition {
    pub fn new(d_a: usize, d_b: usize, d_k: usize) -> Result<Self> {
        if d_a == 0 || d_b == 0 {
            return Err(Error::Dimension(format!("d_A = {d_a}, d_B = {d_b} must be positive")));
        }
        let d = d_a * d_b + d_k;
        if d > DIM_CAP {
            return Err(Error::Dimension(format!("total dimension {d} exceeds cap")));
        }
        Ok(Decomposition { d_a, d_b, d_k })
    }

    pub fn d_ab(&self) -> usize {
        self.d_a * self.d_b
    }

    pub fn dim(&self) -> usize {
        self.d_ab() + self.d_k
    }

    /// Projector onto H^A ⊗ H^B.
    pub fn p_ab(&self) -> ComplexMatrix {
        let d = self.dim();
        ComplexMatrix::from_fn(d, d, |r, k| if r == k && r < self.d_ab() { ONE } else { ZERO })
    }

    pub fn p_k(&self) -> ComplexMatrix {
        let d = self.dim();
        ComplexMatrix::from_fn(d, d, |r, k| if r == k && r >= self.d_ab() { ONE } else { ZERO })
    }

    /// Places an operator on H^A ⊗ H^B into the full space, zero on K.
    pub fn embed_ab(&self, m: &ComplexMatrix) -> ComplexMatrix {
        let mut out = ComplexMatrix::zeros(self.dim(), self.dim());
        out.set_block(0, 0, m);
        out
    }

    /// Upper-left block on H^A ⊗ H^B.
    pub fn ab_block(&self, m: &ComplexMatrix) -> ComplexMatrix {
        m.block(0, 0, self.d_ab(), self.d_ab())
    }

    pub fn k_block(&self, m: &ComplexMatrix) -> ComplexMatrix {
        m.block(self.d_ab(), self.d_ab(), self.d_k, self.d_k)
    }
}

// ---------------------------------------------------------------------------
// Channels in Kraus form

/// `Σ K m K†`.
pub fn apply_kraus(ops: &[ComplexMatrix], m: &ComplexMatrix) -> ComplexMatrix {
    let d = ops.first().map_or(m.rows(), |k| k.rows());
    let mut out = ComplexMatrix::zeros(d, d);
    for k in ops {
        out = &out + &(&(k * m) * &k.adjoint());
    }
    out
}

/// `max |Σ K†K − I|`; zero for a trace-preserving channel.
pub fn completeness_deviation(ops: &[ComplexMatrix]) -> f64 {
    let d = ops.first().map_or(0, |k| k.cols());
    let mut s = ComplexMatrix::zeros(d, d);
    for k in ops {
        s = &s + &(&k.adjoint() * k);
    }
    (&s - &ComplexMatrix::identity(d)).max_abs()
}

/// Choi matrix `Σ_ij |i⟩⟨j| ⊗ E(|i⟩⟨j|)` of an arbitrary linear map on `d×d` matrices.
pub fn choi_matrix(d: usize, map: impl Fn(&ComplexMatrix) -> ComplexMatrix) -> ComplexMatrix {
    let mut out: Option<ComplexMatrix> = None;
    for i in 0..d {
        for j in 0..d {
            let e = ComplexMatrix::from_fn(d, d, |r, k| if r == i && k == j { ONE } else { ZERO });
            let img = map(&e);
            let m = out.get_or_insert_with(|| ComplexMatrix::zeros(d * img.rows(), d * img.cols()));
            m.set_block(i * img.rows(), j * img.cols(), &img);
        }
    }
    out.unwrap_or_else(|| ComplexMatrix::zeros(0, 0))
}

// ---------------------------------------------------------------------------
// Random instances

pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(rand_distr::StandardNormal);
    let im: f64 = rng.sample(rand_distr::StandardNormal);
    c(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Haar-random unit vector.
pub fn random_pure<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<C64> {
    let v: Vec<C64> = (0..d).map(|_| complex_gaussian(rng)).collect();
    normalized(&v)
}

pub fn ginibre<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| complex_gaussian(rng))
}

/// Haar-random unitary via Gram-Schmidt on a Ginibre matrix.
pub fn random_unitary<R: Rng + ?Sized>(d: usize, rng: &mut R) -> ComplexMatrix {
    let g = ginibre(d, d, rng);
    let mut q = ComplexMatrix::zeros(d, d);
    for k in 0..d {
        let mut v = g.column(k);
        for j in 0..k {
            let u = q.column(j);
            let p = inner(&u, &v);
            for (x, y) in v.iter_mut().zip(&u) {
                *x -= p * y;
            }
        }
        q.set_column(k, &normalized(&v));
    }
    q
}

/// Full-rank random state `G G† / Tr` (Hilbert-Schmidt measure).
pub fn random_density<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DensityMatrix {
    let g = ginibre(d, d, rng);
    let m = &g * &g.adjoint();
    let tr = m.trace().re;
    DensityMatrix::new_unchecked(m.hermitian_part().scale_re(1.0 / tr))
}

pub fn random_hermitian<R: Rng + ?Sized>(d: usize, rng: &mut R) -> ComplexMatrix {
    ginibre(d, d, rng).hermitian_part()
}
