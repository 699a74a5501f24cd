//! The generalized parabolic maximum principle: the constants used in its
//! proof and a discrete check that non-positivity is preserved by
//! `m(x) v_t = div(a grad v) + b . grad v + c v`.
//!
//! The proof renames the unknown from `v` to `f` partway through; here it
//! is `v` throughout.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::Snapshot;
use crate::grid::RadialGrid;
use crate::stencil::{cumulative_trapezoid, Tridiagonal};

/// Safety factor turning the proof's strict bound on `eta` into a value.
pub const ETA_SAFETY: f64 = 0.99;

/// Default pass tolerance of [`verify_nonpositivity`].
pub const VIOLATION_TOL: f64 = 1e-10;

fn positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} = {x} must be positive")))
    }
}

fn nonnegative(name: &str, x: f64) -> Result<()> {
    if x >= 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} = {x} must be nonnegative")))
    }
}

/// `theta = 1 / (4 alpha1)`.
pub fn theta_constant(alpha1: f64) -> Result<f64> {
    positive("alpha1", alpha1)?;
    Ok(1.0 / (4.0 * alpha1))
}

/// `0.99 min(T, 1/(64 K0), 1/(32 alpha4), 1/(4 alpha5))`; `alpha5 = 0` drops
/// its term.
///
/// `K0` is only said to be large in the proof and `alpha4` has no recipe;
/// both are caller inputs.
pub fn admissible_eta(t: f64, k0: f64, alpha4: f64, alpha5: f64) -> Result<f64> {
    positive("T", t)?;
    positive("K0", k0)?;
    positive("alpha4", alpha4)?;
    nonnegative("alpha5", alpha5)?;
    let mut m = t.min(1.0 / (64.0 * k0)).min(1.0 / (32.0 * alpha4));
    if alpha5 > 0.0 {
        m = m.min(1.0 / (4.0 * alpha5));
    }
    Ok(ETA_SAFETY * m)
}

/// `(2 n alpha5 + 4 alpha3 + 4 alpha2^2 / alpha1') / m0`.
pub fn beta_lower_bound(n: usize, m0: f64, alpha5: f64, alpha3: f64, alpha2: f64, alpha1_prime: f64) -> Result<f64> {
    positive("m0", m0)?;
    positive("alpha1_prime", alpha1_prime)?;
    nonnegative("alpha5", alpha5)?;
    nonnegative("alpha3", alpha3)?;
    nonnegative("alpha2", alpha2)?;
    Ok((2.0 * n as f64 * alpha5 + 4.0 * alpha3 + 4.0 * alpha2 * alpha2 / alpha1_prime) / m0)
}

/// `h = -theta d^2 / (4 (2 eta - t))` for `0 <= t < 2 eta`.
pub fn h_weight(d: f64, t: f64, theta: f64, eta: f64) -> Result<f64> {
    positive("eta", eta)?;
    nonnegative("theta", theta)?;
    if !(t >= 0.0 && t < 2.0 * eta) {
        return Err(Error::Domain(format!("t = {t} must lie in [0, 2 eta) = [0, {})", 2.0 * eta)));
    }
    Ok(-theta * d * d / (4.0 * (2.0 * eta - t)))
}

/// Number of `eta`-stages covering `[0, T]`, `ceil(T / eta)`; zero for `T = 0`.
pub fn induction_cover(t: f64, eta: f64) -> Result<u64> {
    nonnegative("T", t)?;
    positive("eta", eta)?;
    Ok((t / eta).ceil() as u64)
}

/// A coefficient sampled at `(r, t)`.
#[derive(Clone)]
pub struct Coefficient(Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>);

impl Coefficient {
    pub fn new(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Coefficient(Arc::new(f))
    }

    pub fn constant(c: f64) -> Self {
        Self::new(move |_, _| c)
    }

    pub fn at(&self, r: f64, t: f64) -> f64 {
        (self.0)(r, t)
    }
}

impl fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Coefficient(..)")
    }
}

/// Declared bound constants of the coefficients and the geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientBounds {
    pub m0: f64,
    pub m1: f64,
    pub alpha1_prime: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub alpha3: f64,
    pub alpha4: f64,
    pub alpha5: f64,
    /// Volume growth constant.
    pub k: f64,
    #[serde(rename = "K0")]
    pub k0: f64,
}

impl CoefficientBounds {
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut need = |ok: bool, msg: String| {
            if !ok {
                out.push(msg);
            }
        };
        need(self.m0 > 0.0, format!("m0 = {} must be positive", self.m0));
        need(self.m1 >= self.m0, format!("m1 = {} must be at least m0 = {}", self.m1, self.m0));
        need(self.alpha1_prime > 0.0, format!("alpha1_prime = {} must be positive", self.alpha1_prime));
        need(
            self.alpha1 >= self.alpha1_prime,
            format!("alpha1 = {} must be at least alpha1_prime = {}", self.alpha1, self.alpha1_prime),
        );
        need(self.alpha2 >= 0.0, format!("alpha2 = {} must be nonnegative", self.alpha2));
        need(self.alpha3 >= 0.0, format!("alpha3 = {} must be nonnegative", self.alpha3));
        need(self.alpha4 > 0.0, format!("alpha4 = {} must be positive", self.alpha4));
        need(self.alpha5 >= 0.0, format!("alpha5 = {} must be nonnegative", self.alpha5));
        need(self.k > 0.0, format!("k = {} must be positive", self.k));
        need(self.k0 > 0.0, format!("K0 = {} must be positive", self.k0));
        out
    }
}

/// `m(r)` (time-independent), `a`, radial `b` and `c` with their bounds.
#[derive(Debug, Clone)]
pub struct ParabolicCoefficients {
    pub m: Coefficient,
    pub a: Coefficient,
    pub b: Coefficient,
    pub c: Coefficient,
    pub bounds: CoefficientBounds,
}

impl ParabolicCoefficients {
    /// Scans every node, face midpoint and time level against the declared
    /// bounds, naming the first violated one.
    pub fn scan(&self, grid: &RadialGrid, times: &[f64]) -> Result<()> {
        let b = &self.bounds;
        let p = b.problems();
        if !p.is_empty() {
            return Err(Error::Precondition(p.join("; ")));
        }
        let r = grid.nodes();
        let fail = |what: &str, value: f64, x: f64, t: Option<f64>| {
            let when = t.map(|t| format!(", t = {t}")).unwrap_or_default();
            Err(Error::Precondition(format!("{what} violated: value {value} at r = {x}{when}")))
        };
        for &x in r {
            let m = self.m.at(x, 0.0);
            if !(m >= b.m0 && m <= b.m1) {
                return fail("m0 <= m <= m1", m, x, None);
            }
        }
        let faces: Vec<f64> = r.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
        for &t in times {
            for &x in &faces {
                let a = self.a.at(x, t);
                if !(a >= b.alpha1_prime && a <= b.alpha1) {
                    return fail("alpha1_prime <= a <= alpha1", a, x, Some(t));
                }
            }
            for &x in r {
                let bv = self.b.at(x, t);
                if !(bv.abs() <= b.alpha2) {
                    return fail("|b| <= alpha2", bv, x, Some(t));
                }
                let c = self.c.at(x, t);
                if !(c.abs() <= b.alpha3) {
                    return fail("|c| <= alpha3", c, x, Some(t));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaxPrincipleReport {
    /// `max v` over nodes and time levels (0 when only boundary values reach it).
    pub max_violation: f64,
    /// `(r, t)` of the maximum when it exceeds the tolerance.
    pub violating_node_time: Option<(f64, f64)>,
    /// Proof bookkeeping: the admissible `eta` and the number of stages.
    pub eta_used: f64,
    pub steps_used: u64,
    pub time_steps: usize,
    /// Outer truncation radius of the discrete problem.
    pub truncation_radius: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Implicit Euler for the equality case with `v = 0` at the domain ends (the
/// origin, when on the grid, is a regular point). Diffusion is conservative,
/// drift is upwinded, so each step solves an M-matrix system as long as
/// `dt max(c, 0) < m`.
pub fn verify_nonpositivity(
    coeffs: &ParabolicCoefficients,
    v0: &[f64],
    t_end: f64,
    grid: &RadialGrid,
    dt: f64,
) -> Result<MaxPrincipleReport> {
    if v0.len() != grid.len() {
        return Err(Error::DimensionMismatch {
            expected: grid.len(),
            found: v0.len(),
        });
    }
    positive("T", t_end)?;
    positive("dt", dt)?;
    if let Some(i) = v0.iter().position(|x| !(*x <= 0.0)) {
        return Err(Error::Precondition(format!(
            "initial data must be <= 0, found {} at r = {}",
            v0[i],
            grid.nodes()[i]
        )));
    }
    let steps = (t_end / dt - 1e-9).ceil().max(1.0) as usize;
    let times: Vec<f64> = (0..=steps).map(|k| (k as f64 * dt).min(t_end)).collect();
    coeffs.scan(grid, &times)?;
    let bnd = &coeffs.bounds;
    let eta = admissible_eta(t_end, bnd.k0, bnd.alpha4, bnd.alpha5)?;
    let cover = induction_cover(t_end, eta)?;

    let r = grid.nodes();
    let len = grid.len();
    let vol = grid.cell_volumes();
    let cond = grid.face_conductance();
    let mass: Vec<f64> = r.iter().map(|&x| coeffs.m.at(x, 0.0)).collect();
    let first = if grid.has_origin() { 0 } else { 1 };

    let mut v = v0.to_vec();
    v[len - 1] = 0.0;
    if first == 1 {
        v[0] = 0.0;
    }
    let mut worst = (v.iter().copied().fold(f64::NEG_INFINITY, f64::max), 0usize, 0.0);
    for k in 1..times.len() {
        let t = times[k];
        let h = t - times[k - 1];
        let mut a = Tridiagonal::zeros(len);
        let mut rhs = vec![0.0; len];
        for i in first..len - 1 {
            let w = 1.0 / vol[i];
            let up = coeffs.a.at(0.5 * (r[i] + r[i + 1]), t) * cond[i] * w;
            let down = if i > 0 {
                coeffs.a.at(0.5 * (r[i - 1] + r[i]), t) * cond[i - 1] * w
            } else {
                0.0
            };
            let bv = coeffs.b.at(r[i], t);
            let (drift_up, drift_down) = if bv > 0.0 {
                (bv / (r[i + 1] - r[i]), 0.0)
            } else if i > 0 {
                (0.0, -bv / (r[i] - r[i - 1]))
            } else {
                (0.0, 0.0)
            };
            let c = coeffs.c.at(r[i], t);
            let diag = mass[i] / h + up + down + drift_up + drift_down - c;
            if !(mass[i] / h - c > 0.0) {
                return Err(Error::Precondition(format!(
                    "time step {h} too large for the zeroth-order term: need dt * c < m at r = {}",
                    r[i]
                )));
            }
            a.upper[i] = -(up + drift_up);
            a.lower[i] = -(down + drift_down);
            a.diag[i] = diag;
            rhs[i] = mass[i] / h * v[i];
        }
        a.pin_row(len - 1);
        if first == 1 {
            a.pin_row(0);
        }
        v = a.solve(&rhs)?;
        for (i, &x) in v.iter().enumerate() {
            if x > worst.0 {
                worst = (x, i, t);
            }
        }
    }
    let passed = worst.0 <= VIOLATION_TOL;
    Ok(MaxPrincipleReport {
        max_violation: worst.0,
        violating_node_time: (!passed).then(|| (r[worst.1], worst.2)),
        eta_used: eta,
        steps_used: cover,
        time_steps: steps,
        truncation_radius: grid.r_outer(),
        tolerance: VIOLATION_TOL,
        passed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeGrowthReport {
    /// `min over (d, t)` of `k (1 + d^2) - ln vol(B(d))`.
    pub tightest_margin: f64,
    /// Geodesic radius and time where the margin is smallest.
    pub radius: f64,
    pub time: f64,
    pub passed: bool,
}

/// Volumes of geodesic balls about the origin for `g = v^{4/(n-2)} delta`,
/// checked against `exp(k (1 + d^2))` at every node and snapshot.
///
/// For grids with `r_inner > 0` the hole is filled with the flat metric
/// scaled by `v(r_inner)`.
pub fn volume_growth_check(grid: &RadialGrid, snapshots: &[Snapshot], k: f64) -> Result<VolumeGrowthReport> {
    positive("k", k)?;
    let consts = grid.constants();
    let nf = consts.nf();
    let omega = consts.omega();
    let r = grid.nodes();
    let s: Vec<f64> = r.iter().map(|x| x.powf(nf) / nf).collect();
    let mut best = VolumeGrowthReport {
        tightest_margin: f64::INFINITY,
        radius: 0.0,
        time: 0.0,
        passed: true,
    };
    for snap in snapshots {
        if snap.values.len() != grid.len() {
            return Err(Error::DimensionMismatch {
                expected: grid.len(),
                found: snap.values.len(),
            });
        }
        let line: Vec<f64> = snap.values.iter().map(|v| v.powf(2.0 / (nf - 2.0))).collect();
        let dens: Vec<f64> = snap.values.iter().map(|v| v.powf(2.0 * nf / (nf - 2.0))).collect();
        let d0 = r[0] * line[0];
        let vol0 = omega * s[0] * dens[0];
        let dist = cumulative_trapezoid(r, &line);
        let vol = cumulative_trapezoid(&s, &dens);
        for i in 0..r.len() {
            let d = d0 + dist[i];
            let v = vol0 + omega * vol[i];
            if v <= 0.0 {
                continue;
            }
            let margin = k * (1.0 + d * d) - v.ln();
            if margin < best.tightest_margin {
                best.tightest_margin = margin;
                best.radius = d;
                best.time = snap.t;
            }
        }
    }
    best.passed = best.tightest_margin >= 0.0;
    Ok(best)
}
