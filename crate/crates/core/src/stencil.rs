//! Small linear-algebra and finite-difference helpers shared by the solvers.

use crate::error::{Error, Result};

/// Tridiagonal matrix stored by diagonals. Row `i` reads
/// `lower[i] * x[i-1] + diag[i] * x[i] + upper[i] * x[i+1]`;
/// `lower[0]` and `upper[n-1]` are ignored.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Tridiagonal {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tridiagonal {
    pub fn zeros(n: usize) -> Self {
        Self {
            lower: vec![0.0; n],
            diag: vec![0.0; n],
            upper: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        assert_eq!(x.len(), n);
        (0..n)
            .map(|i| {
                let mut s = self.diag[i] * x[i];
                if i > 0 {
                    s += self.lower[i] * x[i - 1];
                }
                if i + 1 < n {
                    s += self.upper[i] * x[i + 1];
                }
                s
            })
            .collect()
    }

    /// Replaces row `i` by the identity row.
    pub fn pin_row(&mut self, i: usize) {
        self.lower[i] = 0.0;
        self.upper[i] = 0.0;
        self.diag[i] = 1.0;
    }

    /// Thomas algorithm. Stable without pivoting for the diagonally dominant
    /// M-matrices the steppers assemble.
    pub fn solve(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let n = self.len();
        if rhs.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: rhs.len(),
            });
        }
        if n == 0 {
            return Ok(Vec::new());
        }
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        let mut denom = self.diag[0];
        if denom == 0.0 || !denom.is_finite() {
            return Err(Error::Domain("singular tridiagonal system".into()));
        }
        c[0] = if n > 1 { self.upper[0] / denom } else { 0.0 };
        d[0] = rhs[0] / denom;
        for i in 1..n {
            denom = self.diag[i] - self.lower[i] * c[i - 1];
            if denom == 0.0 || !denom.is_finite() {
                return Err(Error::Domain("singular tridiagonal system".into()));
            }
            c[i] = if i + 1 < n { self.upper[i] / denom } else { 0.0 };
            d[i] = (rhs[i] - self.lower[i] * d[i - 1]) / denom;
        }
        let mut x = d;
        for i in (0..n - 1).rev() {
            x[i] -= c[i] * x[i + 1];
        }
        Ok(x)
    }

    /// True when every off-diagonal entry is nonpositive and every diagonal
    /// entry positive (the sign pattern of a Z-matrix with positive diagonal).
    pub fn has_m_matrix_signs(&self) -> bool {
        let n = self.len();
        (0..n).all(|i| {
            self.diag[i] > 0.0
                && (i == 0 || self.lower[i] <= 0.0)
                && (i + 1 == n || self.upper[i] <= 0.0)
        })
    }
}

/// Fornberg's algorithm: weights for the derivatives of order `0..=m` at
/// `x0` from samples at `xs`. Returns `w[k][j]` for derivative `k`, node `j`.
pub fn fornberg_weights(x0: f64, xs: &[f64], m: usize) -> Vec<Vec<f64>> {
    let n = xs.len();
    let mut c = vec![vec![0.0; n]; m + 1];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = xs[0] - x0;
    for i in 1..n {
        let mn = i.min(m);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = xs[i] - x0;
        for j in 0..i {
            let c3 = xs[i] - xs[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// Composite quadrature on nonuniform nodes: Simpson panels over consecutive
/// node pairs, with a single quadratic correction for an odd interval count.
pub fn integrate(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    if n == 2 {
        return 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]);
    }
    let panel = |i: usize| -> f64 {
        // quadratic through (i, i+1, i+2), integrated over [x_i, x_{i+2}]
        let h0 = xs[i + 1] - xs[i];
        let h1 = xs[i + 2] - xs[i + 1];
        let s = h0 + h1;
        s / 6.0
            * (ys[i] * (2.0 - h1 / h0)
                + ys[i + 1] * s * s / (h0 * h1)
                + ys[i + 2] * (2.0 - h0 / h1))
    };
    let intervals = n - 1;
    let mut total = 0.0;
    let mut i = 0;
    while i + 2 < n {
        total += panel(i);
        i += 2;
    }
    if intervals % 2 == 1 {
        // last interval [x_{n-2}, x_{n-1}] from the quadratic through the last three nodes
        let (x0, x1, x2) = (xs[n - 3], xs[n - 2], xs[n - 1]);
        let h0 = x1 - x0;
        let h1 = x2 - x1;
        let w0 = -h1 * h1 * h1 / (6.0 * h0 * (h0 + h1));
        let w1 = h1 * (h1 + 3.0 * h0) / (6.0 * h0);
        let w2 = h1 * (2.0 * h1 + 3.0 * h0) / (6.0 * (h0 + h1));
        total += w0 * ys[n - 3] + w1 * ys[n - 2] + w2 * ys[n - 1];
    }
    total
}

/// Cumulative version of [`integrate`] with the trapezoid rule, used where
/// a running integral is needed (geodesic distance, enclosed volume).
pub fn cumulative_trapezoid(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(xs.len());
    let mut acc = 0.0;
    out.push(0.0);
    for i in 1..xs.len() {
        acc += 0.5 * (xs[i] - xs[i - 1]) * (ys[i] + ys[i - 1]);
        out.push(acc);
    }
    out
}

/// Neville extrapolation of samples `(x_k, y_k)` to `x = 0`.
pub fn extrapolate_to_zero(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len();
    let mut p = ys.to_vec();
    for level in 1..n {
        for i in 0..n - level {
            let (xa, xb) = (xs[i], xs[i + level]);
            p[i] = (xa * p[i + 1] - xb * p[i]) / (xa - xb);
        }
    }
    p[0]
}
