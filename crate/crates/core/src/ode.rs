//! Fixed-step RK4 for real affine systems `x' = A x + b` with constant
//! coefficients, refined by step halving until two successive passes agree.

use crate::{Error, Result};

const MAX_HALVINGS: usize = 16;

/// Dense row-major `n×n` system with optional inhomogeneous term.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearSystem {
    pub n: usize,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl LinearSystem {
    pub fn new(n: usize, a: Vec<f64>, b: Option<Vec<f64>>) -> Result<Self> {
        if a.len() != n * n {
            return Err(Error::Dimension(format!("{} entries for a {n}x{n} system", a.len())));
        }
        let b = b.unwrap_or_else(|| vec![0.0; n]);
        if b.len() != n {
            return Err(Error::Dimension(format!("inhomogeneous term has length {}, expected {n}", b.len())));
        }
        Ok(LinearSystem { n, a, b })
    }

    pub fn from_rows(rows: &[Vec<f64>], b: Option<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Dimension("generator rows must have equal length n".into()));
        }
        Self::new(n, rows.concat(), b)
    }

    pub fn rhs(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.a[i * self.n..(i + 1) * self.n];
            *o = self.b[i] + row.iter().zip(x).map(|(a, x)| a * x).sum::<f64>();
        }
    }

    /// Largest Gershgorin row sum; bounds every eigenvalue modulus.
    pub fn gershgorin(&self) -> f64 {
        (0..self.n).map(|i| self.a[i * self.n..(i + 1) * self.n].iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
    }

    fn pass(&self, x0: &[f64], grid: &[f64], sub: usize) -> Vec<Vec<f64>> {
        let n = self.n;
        let mut x = x0.to_vec();
        let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        let mut out = Vec::with_capacity(grid.len());
        out.push(x.clone());
        for w in grid.windows(2) {
            let h = (w[1] - w[0]) / sub as f64;
            for _ in 0..sub {
                self.rhs(&x, &mut k1);
                for i in 0..n {
                    tmp[i] = x[i] + 0.5 * h * k1[i];
                }
                self.rhs(&tmp, &mut k2);
                for i in 0..n {
                    tmp[i] = x[i] + 0.5 * h * k2[i];
                }
                self.rhs(&tmp, &mut k3);
                for i in 0..n {
                    tmp[i] = x[i] + h * k3[i];
                }
                self.rhs(&tmp, &mut k4);
                for i in 0..n {
                    x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
            }
            out.push(x.clone());
        }
        out
    }

    /// States at every grid time (grid increasing, first entry is the start).
    /// Accepts when halving the step changes no component by more than `tol`.
    pub fn integrate(&self, x0: &[f64], grid: &[f64], tol: f64) -> Result<Vec<Vec<f64>>> {
        if x0.len() != self.n {
            return Err(Error::Dimension(format!("initial state has length {}, expected {}", x0.len(), self.n)));
        }
        if grid.is_empty() {
            return Err(Error::InvalidInput("empty time grid".into()));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput("time grid must be strictly increasing".into()));
        }
        let max_dt = grid.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
        // Start at |λ|h ≤ 1.5, inside the RK4 stability region (real-axis limit 2.78).
        let mut sub = ((max_dt * self.gershgorin() / 1.5).ceil() as usize).max(1);
        let mut prev = self.pass(x0, grid, sub);
        for _ in 0..MAX_HALVINGS {
            sub *= 2;
            let next = self.pass(x0, grid, sub);
            let change = prev
                .iter()
                .zip(&next)
                .flat_map(|(p, q)| p.iter().zip(q).map(|(a, b)| (a - b).abs()))
                .fold(0.0, f64::max);
            if change.is_finite() && change < tol {
                return Ok(next);
            }
            prev = next;
        }
        Err(Error::NoConvergence { what: "RK4 step refinement", iters: MAX_HALVINGS })
    }
}
