//! Radial grids and the discrete operators attached to them.
//!
//! The flat radial Laplacian `f_rr + (n-1)/r f_r` is discretized in
//! conservative form `r^{1-n} (r^{n-1} f_r)_r`. Face coefficients are chosen
//! so that the two-point flux of `r^{2-n}` is exact, which puts every radial
//! harmonic `c1 + c2 r^{2-n}` in the kernel of the discrete operator. Cell
//! measures are fixed by requiring `Delta r^2 = 2n` exactly; they approximate
//! the shell volumes `(r_+^n - r_-^n)/n` to second order, and the operator
//! telescopes: `sum_i V_i (Lf)_i` equals the boundary fluxes. Off-diagonal
//! entries are positive on every grid, which is what the comparison and
//! sign-preservation properties of the steppers rest on.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stencil::{fornberg_weights, Tridiagonal};

/// Dimension-dependent constants `p = (n+2)/(n-2)` and `a = (n-2)/(4(n-1))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Constants {
    n: usize,
}

impl Constants {
    pub fn new(n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::Domain(format!("dimension n = {n}; need n >= 3")));
        }
        Ok(Self { n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nf(&self) -> f64 {
        self.n as f64
    }

    /// Critical Sobolev exponent `(n+2)/(n-2)`.
    pub fn p(&self) -> f64 {
        (self.nf() + 2.0) / (self.nf() - 2.0)
    }

    /// Conformal Laplacian coupling `(n-2)/(4(n-1))`.
    pub fn a(&self) -> f64 {
        (self.nf() - 2.0) / (4.0 * (self.nf() - 1.0))
    }

    /// Exponent `4/(n-2)` taking the conformal factor to the metric factor.
    pub fn metric_exponent(&self) -> f64 {
        4.0 / (self.nf() - 2.0)
    }

    /// Area of the unit sphere in R^n.
    pub fn omega(&self) -> f64 {
        unit_sphere_area(self.n)
    }
}

/// `|S^{n-1}| = 2 pi^{n/2} / Gamma(n/2)`, by the recursion `|S^{n+1}| = 2pi/n |S^{n-1}|`.
pub fn unit_sphere_area(n: usize) -> f64 {
    use std::f64::consts::PI;
    let (mut area, mut k) = if n % 2 == 0 { (2.0 * PI, 2) } else { (2.0, 1) };
    while k < n {
        area *= 2.0 * PI / k as f64;
        k += 2;
    }
    area
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stretch {
    Uniform,
    /// Spacing grows by `ratio` from one cell to the next.
    Geometric { ratio: f64 },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "GridRecord", into = "GridRecord")]
pub struct RadialGrid {
    n: usize,
    nodes: Vec<f64>,
    stretch: Stretch,
    #[serde(skip)]
    ops: Operators,
}

#[derive(Clone, Default)]
struct Operators {
    /// Face coefficients `kappa_{i+1/2} / h_i`, one per cell.
    conductance: Vec<f64>,
    /// Dual-cell measure of each node (without the sphere area).
    volume: Vec<f64>,
    laplacian: Tridiagonal,
    /// Three-point first-derivative weights at every node (zero row at the origin).
    gradient: Tridiagonal,
}

impl std::fmt::Debug for Operators {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("Operators { .. }")
    }
}

#[derive(Serialize, Deserialize)]
struct GridRecord {
    n: usize,
    stretch: Stretch,
    nodes: Vec<f64>,
}

impl TryFrom<GridRecord> for RadialGrid {
    type Error = Error;
    fn try_from(rec: GridRecord) -> Result<Self> {
        RadialGrid::from_nodes(rec.n, rec.nodes, rec.stretch)
    }
}

impl From<RadialGrid> for GridRecord {
    fn from(g: RadialGrid) -> Self {
        GridRecord {
            n: g.n,
            stretch: g.stretch,
            nodes: g.nodes,
        }
    }
}

impl PartialEq for RadialGrid {
    fn eq(&self, other: &Self) -> bool {
        self.n == other.n && self.nodes == other.nodes && self.stretch == other.stretch
    }
}

impl RadialGrid {
    pub fn uniform(n: usize, r_inner: f64, r_outer: f64, count: usize) -> Result<Self> {
        check_interval(r_inner, r_outer, count)?;
        let h = (r_outer - r_inner) / (count - 1) as f64;
        let mut nodes: Vec<f64> = (0..count).map(|i| r_inner + i as f64 * h).collect();
        nodes[count - 1] = r_outer;
        Self::from_nodes(n, nodes, Stretch::Uniform)
    }

    /// Cells grow geometrically by `ratio` from `r_inner` outwards.
    pub fn geometric(n: usize, r_inner: f64, r_outer: f64, count: usize, ratio: f64) -> Result<Self> {
        check_interval(r_inner, r_outer, count)?;
        if !(ratio.is_finite() && ratio > 0.0) {
            return Err(Error::InvalidGrid(format!("geometric ratio {ratio} must be positive")));
        }
        if (ratio - 1.0).abs() < 1e-14 {
            let mut g = Self::uniform(n, r_inner, r_outer, count)?;
            g.stretch = Stretch::Geometric { ratio };
            return Ok(g);
        }
        let cells = (count - 1) as f64;
        let h0 = (r_outer - r_inner) * (ratio - 1.0) / (ratio.powf(cells) - 1.0);
        let mut nodes: Vec<f64> = (0..count)
            .map(|i| r_inner + h0 * (ratio.powi(i as i32) - 1.0) / (ratio - 1.0))
            .collect();
        nodes[count - 1] = r_outer;
        Self::from_nodes(n, nodes, Stretch::Geometric { ratio })
    }

    /// Logarithmically uniform nodes `r_i = r_inner (r_outer/r_inner)^{i/(N-1)}`.
    pub fn log_uniform(n: usize, r_inner: f64, r_outer: f64, count: usize) -> Result<Self> {
        if r_inner <= 0.0 {
            return Err(Error::InvalidGrid("log-uniform grid needs r_inner > 0".into()));
        }
        check_interval(r_inner, r_outer, count)?;
        let ratio = (r_outer / r_inner).powf(1.0 / (count - 1) as f64);
        let mut nodes: Vec<f64> = (0..count).map(|i| r_inner * ratio.powi(i as i32)).collect();
        nodes[count - 1] = r_outer;
        Self::from_nodes(n, nodes, Stretch::Geometric { ratio })
    }

    pub fn from_nodes(n: usize, nodes: Vec<f64>, stretch: Stretch) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidGrid(format!("dimension n = {n}; need n >= 3")));
        }
        if nodes.len() < 3 {
            return Err(Error::InvalidGrid(format!(
                "{} nodes; at least 3 are required",
                nodes.len()
            )));
        }
        if nodes[0] < 0.0 || !nodes.iter().all(|r| r.is_finite()) {
            return Err(Error::InvalidGrid("radii must be finite and nonnegative".into()));
        }
        if let Some(i) = nodes.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid(format!(
                "nodes not strictly increasing at index {}",
                i + 1
            )));
        }
        let ops = Operators::build(n, &nodes);
        Ok(Self {
            n,
            nodes,
            stretch,
            ops,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn constants(&self) -> Constants {
        Constants { n: self.n }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn r_inner(&self) -> f64 {
        self.nodes[0]
    }

    pub fn r_outer(&self) -> f64 {
        *self.nodes.last().unwrap()
    }

    pub fn stretch(&self) -> Stretch {
        self.stretch
    }

    /// Whether the inner end is the coordinate origin (regularity condition
    /// instead of a Dirichlet condition).
    pub fn has_origin(&self) -> bool {
        self.nodes[0] == 0.0
    }

    pub fn spacing(&self, i: usize) -> f64 {
        self.nodes[i + 1] - self.nodes[i]
    }

    pub fn min_spacing(&self) -> f64 {
        self.nodes
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_spacing(&self) -> f64 {
        self.nodes.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
    }

    /// Conservative Laplacian as a tridiagonal matrix. Rows of endpoints with
    /// `r > 0` are zero (they carry boundary conditions).
    pub fn laplacian_matrix(&self) -> &Tridiagonal {
        &self.ops.laplacian
    }

    /// Centered first-derivative weights; the origin row is zero (`f_r(0) = 0`),
    /// outer/inner Dirichlet rows are zero.
    pub fn gradient_matrix(&self) -> &Tridiagonal {
        &self.ops.gradient
    }

    /// Dual-cell measures (without the sphere area).
    pub fn cell_volumes(&self) -> &[f64] {
        &self.ops.volume
    }

    /// `kappa_{i+1/2}/h_i` for each cell; `kappa` reduces to `r^{n-1}` as h -> 0.
    pub fn face_conductance(&self) -> &[f64] {
        &self.ops.conductance
    }

    /// Index of the first node with `r >= r_min` (clamped to the last node).
    pub fn first_index_at_or_above(&self, r_min: f64) -> usize {
        self.nodes
            .iter()
            .position(|&r| r >= r_min)
            .unwrap_or(self.len() - 1)
    }

    /// Same spacing law continued until the last node reaches `r_max`.
    pub fn extended_to(&self, r_max: f64) -> Result<Self> {
        if r_max <= self.r_outer() {
            return Ok(self.clone());
        }
        let mut nodes = self.nodes.clone();
        match self.stretch {
            Stretch::Uniform => {
                let h = self.spacing(0);
                let r0 = self.r_inner();
                let mut i = nodes.len();
                while *nodes.last().unwrap() < r_max * (1.0 - 1e-12) {
                    nodes.push(r0 + i as f64 * h);
                    i += 1;
                }
            }
            Stretch::Geometric { ratio } => {
                let mut h = self.spacing(self.len() - 2);
                while *nodes.last().unwrap() < r_max * (1.0 - 1e-12) {
                    h *= ratio;
                    let next = nodes.last().unwrap() + h;
                    nodes.push(next);
                }
            }
        }
        Self::from_nodes(self.n, nodes, self.stretch)
    }

    /// Leading nodes up to and including the first node with `r >= r_max`.
    pub fn prefix_through(&self, r_max: f64) -> Result<Self> {
        let last = self.first_index_at_or_above(r_max * (1.0 - 1e-12));
        Self::from_nodes(self.n, self.nodes[..=last].to_vec(), self.stretch)
    }

    /// Nested refinement with `2N - 1` nodes: every old node is kept and each
    /// cell is split so the spacing law is preserved (ratio -> sqrt(ratio)).
    pub fn refined(&self) -> Result<Self> {
        let mut nodes = Vec::with_capacity(2 * self.len() - 1);
        let stretch = match self.stretch {
            Stretch::Uniform => Stretch::Uniform,
            Stretch::Geometric { ratio } => Stretch::Geometric { ratio: ratio.sqrt() },
        };
        let split = match stretch {
            Stretch::Uniform => 0.5,
            Stretch::Geometric { ratio } => 1.0 / (1.0 + ratio),
        };
        for w in self.nodes.windows(2) {
            nodes.push(w[0]);
            nodes.push(w[0] + split * (w[1] - w[0]));
        }
        nodes.push(self.r_outer());
        Self::from_nodes(self.n, nodes, stretch)
    }

    /// Evaluates a closed-form profile at every node.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.nodes.iter().map(|&r| f(r)).collect()
    }

    /// First and second derivative weights at node `i`: centered three-point
    /// in the interior, one-sided four-point at the ends.
    pub(crate) fn derivative_stencil(&self, i: usize) -> (usize, Vec<Vec<f64>>) {
        let len = self.len();
        let (start, width) = if i == 0 {
            (0, 4.min(len))
        } else if i == len - 1 {
            (len - 4.min(len), 4.min(len))
        } else {
            (i - 1, 3)
        };
        let xs = &self.nodes[start..start + width];
        (start, fornberg_weights(self.nodes[i], xs, 2))
    }
}

fn check_interval(r_inner: f64, r_outer: f64, count: usize) -> Result<()> {
    if !(r_inner >= 0.0 && r_outer > r_inner && r_outer.is_finite()) {
        return Err(Error::InvalidGrid(format!(
            "need 0 <= r_inner < r_outer, got [{r_inner}, {r_outer}]"
        )));
    }
    if count < 3 {
        return Err(Error::InvalidGrid(format!("{count} nodes; at least 3 are required")));
    }
    Ok(())
}

impl Operators {
    fn build(n: usize, r: &[f64]) -> Self {
        let nf = n as f64;
        let len = r.len();
        let conductance: Vec<f64> = r
            .windows(2)
            .map(|w| {
                let (ra, rb) = (w[0], w[1]);
                let h = rb - ra;
                if ra == 0.0 {
                    (0.5 * h).powi(n as i32 - 1) / h
                } else {
                    // (n-2) / (ra^{2-n} - rb^{2-n}), written to avoid cancellation
                    let drop = -((nf - 2.0) * (ra / rb).ln()).exp_m1();
                    (nf - 2.0) * ra.powf(nf - 2.0) / drop
                }
            })
            .collect();

        // Cell measures: the geometric shell for the end nodes; for rows of
        // the operator, the measure that makes `r^2` exact, i.e. the discrete
        // flux balance of `r^2` divided by `Delta r^2 = 2n`. At the origin
        // both agree.
        let volume: Vec<f64> = (0..len)
            .map(|i| {
                if i == 0 && r[0] == 0.0 {
                    conductance[0] * r[1] * r[1] / (2.0 * nf)
                } else if i == 0 || i == len - 1 {
                    let lo = if i == 0 { r[0] } else { 0.5 * (r[i - 1] + r[i]) };
                    let hi = if i == len - 1 { r[i] } else { 0.5 * (r[i] + r[i + 1]) };
                    (hi.powi(n as i32) - lo.powi(n as i32)) / nf
                } else {
                    let out = conductance[i] * (r[i + 1] - r[i]) * (r[i + 1] + r[i]);
                    let inn = conductance[i - 1] * (r[i] - r[i - 1]) * (r[i] + r[i - 1]);
                    (out - inn) / (2.0 * nf)
                }
            })
            .collect();

        let mut laplacian = Tridiagonal::zeros(len);
        for i in 1..len - 1 {
            let cl = conductance[i - 1] / volume[i];
            let cr = conductance[i] / volume[i];
            laplacian.lower[i] = cl;
            laplacian.upper[i] = cr;
            laplacian.diag[i] = -(cl + cr);
        }
        if r[0] == 0.0 {
            let c = conductance[0] / volume[0];
            laplacian.upper[0] = c;
            laplacian.diag[0] = -c;
        }

        let mut gradient = Tridiagonal::zeros(len);
        for i in 1..len - 1 {
            let w = fornberg_weights(r[i], &r[i - 1..=i + 1], 1);
            gradient.lower[i] = w[1][0];
            gradient.diag[i] = w[1][1];
            gradient.upper[i] = w[1][2];
        }

        Self {
            conductance,
            volume,
            laplacian,
            gradient,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_follow_dimension() {
        let c = Constants::new(3).unwrap();
        assert_eq!(c.p(), 5.0);
        assert_eq!(c.a(), 0.125);
        let c6 = Constants::new(6).unwrap();
        assert_eq!(c6.p(), 2.0);
        assert!(Constants::new(2).is_err());
        for n in 3..12 {
            let c = Constants::new(n).unwrap();
            assert!(c.p() > 1.0 && c.a() > 0.0 && c.a() < 0.25);
        }
    }

    #[test]
    fn sphere_areas() {
        use std::f64::consts::PI;
        assert!((unit_sphere_area(3) - 4.0 * PI).abs() < 1e-12);
        assert!((unit_sphere_area(4) - 2.0 * PI * PI).abs() < 1e-12);
        assert!((unit_sphere_area(5) - 8.0 * PI * PI / 3.0).abs() < 1e-12);
    }

    #[test]
    fn grids_hit_both_endpoints() {
        let g = RadialGrid::geometric(3, 0.0, 50.0, 101, 1.03).unwrap();
        assert_eq!(g.r_inner(), 0.0);
        assert_eq!(g.r_outer(), 50.0);
        assert!((g.spacing(1) / g.spacing(0) - 1.03).abs() < 1e-10);
        let l = RadialGrid::log_uniform(3, 1.0, 100.0, 400).unwrap();
        assert_eq!(l.r_outer(), 100.0);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(RadialGrid::uniform(3, 0.0, 1.0, 2).is_err());
        assert!(RadialGrid::uniform(3, 1.0, 1.0, 10).is_err());
        assert!(RadialGrid::from_nodes(3, vec![0.0, 1.0, 1.0], Stretch::Uniform).is_err());
        assert!(RadialGrid::uniform(2, 0.0, 1.0, 10).is_err());
    }

    #[test]
    fn refinement_is_nested() {
        let g = RadialGrid::geometric(4, 0.0, 40.0, 41, 1.05).unwrap();
        let f = g.refined().unwrap();
        assert_eq!(f.len(), 81);
        for (i, r) in g.nodes().iter().enumerate() {
            assert_eq!(f.nodes()[2 * i], *r);
        }
        // geometric law survives the split
        let q = f.spacing(11) / f.spacing(10);
        assert!((q - 1.05f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn extension_and_prefix_keep_nodes() {
        let g = RadialGrid::geometric(3, 0.0, 50.0, 80, 1.04).unwrap();
        let big = g.extended_to(400.0).unwrap();
        assert!(big.r_outer() >= 400.0 * (1.0 - 1e-12));
        assert_eq!(&big.nodes()[..g.len()], g.nodes());
        let back = big.prefix_through(50.0).unwrap();
        assert_eq!(back.nodes(), g.nodes());
    }

    #[test]
    fn laplacian_has_m_matrix_off_diagonals() {
        for n in 3..8 {
            let g = RadialGrid::geometric(n, 0.0, 10.0, 30, 1.1).unwrap();
            let l = g.laplacian_matrix();
            for i in 1..g.len() - 1 {
                assert!(l.lower[i] > 0.0 && l.upper[i] > 0.0);
                assert!((l.lower[i] + l.diag[i] + l.upper[i]).abs() < 1e-9 * l.diag[i].abs());
            }
        }
    }

    #[test]
    fn discrete_divergence_theorem() {
        // sum_i V_i (L f)_i over active nodes equals the flux through the last face
        let g = RadialGrid::geometric(3, 0.0, 5.0, 60, 1.02).unwrap();
        let f = g.sample(|r| (-r * r).exp());
        let lf = g.laplacian_matrix().apply(&f);
        let total: f64 = (0..g.len() - 1).map(|i| g.cell_volumes()[i] * lf[i]).sum();
        let k = g.len() - 2;
        let flux = g.face_conductance()[k] * (f[k + 1] - f[k]);
        assert!((total - flux).abs() < 1e-13);
    }

    #[test]
    fn serde_round_trip() {
        let g = RadialGrid::geometric(5, 0.5, 20.0, 33, 1.07).unwrap();
        let s = serde_json::to_string(&g).unwrap();
        let back: RadialGrid = serde_json::from_str(&s).unwrap();
        assert_eq!(g, back);
        assert_eq!(g.laplacian_matrix(), back.laplacian_matrix());
    }
}
