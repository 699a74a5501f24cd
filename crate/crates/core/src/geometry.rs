//! Conformal geometry of `g = v^{4/(n-2)} delta` on radial grids: Laplacians,
//! scalar curvature, weighted norms, ADM mass and decay fits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ConformalField;
use crate::grid::{Constants, RadialGrid};
use crate::stencil::{extrapolate_to_zero, integrate};

fn check_len(grid: &RadialGrid, f: &[f64]) -> Result<()> {
    if f.len() != grid.len() {
        return Err(Error::DimensionMismatch {
            expected: grid.len(),
            found: f.len(),
        });
    }
    Ok(())
}

fn check_consts(grid: &RadialGrid, consts: &Constants) -> Result<()> {
    if grid.n() != consts.n() {
        return Err(Error::Domain(format!(
            "constants for n = {} used on a grid of dimension {}",
            consts.n(),
            grid.n()
        )));
    }
    Ok(())
}

/// First and second derivative at node `i`, applied to `f - f_i` so that
/// constants differentiate to exactly zero.
fn stencil_derivatives(grid: &RadialGrid, f: &[f64], i: usize) -> [f64; 2] {
    let (start, w) = grid.derivative_stencil(i);
    let mut d = [0.0; 2];
    for (k, dk) in d.iter_mut().enumerate() {
        *dk = w[k + 1]
            .iter()
            .enumerate()
            .map(|(j, c)| c * (f[start + j] - f[i]))
            .sum();
    }
    d
}

/// Flat radial Laplacian `f_rr + (n-1)/r f_r` at every node.
///
/// Interior nodes and the origin use the conservative operator of the grid
/// (`n f_rr(0)` at `r = 0`). Endpoints with `r > 0` carry boundary data; their
/// values come from one-sided four-point stencils and depend on the boundary.
pub fn radial_laplacian(grid: &RadialGrid, f: &[f64]) -> Result<Vec<f64>> {
    check_len(grid, f)?;
    // difference form of the operator rows: constants map to exactly zero
    let l = grid.laplacian_matrix();
    let mut out: Vec<f64> = (0..f.len())
        .map(|i| {
            let mut s = 0.0;
            if i > 0 {
                s += l.lower[i] * (f[i - 1] - f[i]);
            }
            if i + 1 < f.len() {
                s += l.upper[i] * (f[i + 1] - f[i]);
            }
            s
        })
        .collect();
    let n1 = grid.n() as f64 - 1.0;
    let last = grid.len() - 1;
    let mut ends = vec![last];
    if !grid.has_origin() {
        ends.push(0);
    }
    for i in ends {
        let [d1, d2] = stencil_derivatives(grid, f, i);
        out[i] = d2 + n1 / grid.nodes()[i] * d1;
    }
    Ok(out)
}

/// Radial derivative `f_r` at every node: zero at the origin, centered in the
/// interior, one-sided at endpoints with `r > 0`.
pub fn radial_gradient(grid: &RadialGrid, f: &[f64]) -> Result<Vec<f64>> {
    check_len(grid, f)?;
    let [_, d1, _] = derivatives(grid, f);
    Ok(d1)
}

/// `L f = Delta f - a R0 f` with the flat Laplacian.
pub fn conformal_laplacian(grid: &RadialGrid, f: &[f64], r0: &[f64], consts: &Constants) -> Result<Vec<f64>> {
    check_len(grid, r0)?;
    check_consts(grid, consts)?;
    let lap = radial_laplacian(grid, f)?;
    let a = consts.a();
    Ok(lap.iter().zip(f).zip(r0).map(|((l, fi), ri)| l - a * ri * fi).collect())
}

/// Scalar curvature `R = -(1/a) v^{-p} Delta v` of `v^{4/(n-2)} delta`.
pub fn scalar_curvature(v: &ConformalField, consts: &Constants) -> Result<Vec<f64>> {
    scalar_curvature_values(v.grid(), v.values(), consts)
}

/// Same as [`scalar_curvature`] on raw samples; rejects nonpositive values.
pub fn scalar_curvature_values(grid: &RadialGrid, v: &[f64], consts: &Constants) -> Result<Vec<f64>> {
    check_len(grid, v)?;
    check_consts(grid, consts)?;
    crate::field::check_positive(grid.nodes(), v)?;
    let lap = radial_laplacian(grid, v)?;
    let (a, p) = (consts.a(), consts.p());
    Ok(lap.iter().zip(v).map(|(l, vi)| -l / (a * vi.powf(p))).collect())
}

/// Indices whose values come from the interior/origin operator rather than
/// a boundary stencil.
pub fn active_nodes(grid: &RadialGrid) -> std::ops::Range<usize> {
    let start = if grid.has_origin() { 0 } else { 1 };
    start..grid.len() - 1
}

/// A discrete norm evaluated on a truncated region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightedNorm {
    pub value: f64,
    /// Sampled region `[r_min, r_max]` the norm was evaluated on.
    pub r_min: f64,
    pub r_max: f64,
}

fn asymptotic_start(grid: &RadialGrid, r_asym: Option<f64>) -> usize {
    let r = r_asym.unwrap_or_else(|| grid.r_inner().max(1.0));
    grid.first_index_at_or_above(r)
}

/// Radial derivatives of order 0..=2 at every node.
fn derivatives(grid: &RadialGrid, f: &[f64]) -> [Vec<f64>; 3] {
    let len = grid.len();
    let mut d1 = vec![0.0; len];
    let mut d2 = vec![0.0; len];
    for i in 0..len {
        if i == 0 && grid.has_origin() {
            // even extension: f_r(0) = 0, f_rr(0) = 2 (f_1 - f_0) / h^2
            let h = grid.spacing(0);
            d2[0] = 2.0 * (f[1] - f[0]) / (h * h);
            continue;
        }
        [d1[i], d2[i]] = stencil_derivatives(grid, f, i);
    }
    [f.to_vec(), d1, d2]
}

/// Discrete `C^k_beta` norm: `sum_{j<=k} sup r^{-beta+j} |D^j f|` over `r >= r_asym`
/// (default `max(1, r_inner)`).
///
/// For a radial function the Cartesian derivative bounds are `D^1 f = |f_r|`
/// and `D^2 f = max(|f_rr|, |f_r / r|)` (the largest Hessian entry over all
/// directions). Holder seminorms are not approximated.
pub fn weighted_sup_norm(
    grid: &RadialGrid,
    f: &[f64],
    beta: f64,
    order: usize,
    r_asym: Option<f64>,
) -> Result<WeightedNorm> {
    check_len(grid, f)?;
    if order > 2 {
        return Err(Error::UnsupportedOrder(order));
    }
    let start = asymptotic_start(grid, r_asym);
    let d = derivatives(grid, f);
    let r = grid.nodes();
    let mut value = 0.0;
    for j in 0..=order {
        let sup = (start..grid.len())
            .map(|i| {
                let dj = match j {
                    0 => d[0][i].abs(),
                    1 => d[1][i].abs(),
                    _ if r[i] > 0.0 => d[2][i].abs().max((d[1][i] / r[i]).abs()),
                    _ => d[2][i].abs(),
                };
                if dj == 0.0 {
                    0.0
                } else {
                    r[i].powf(-beta + j as f64) * dj
                }
            })
            .fold(0.0, f64::max);
        value += sup;
    }
    Ok(WeightedNorm {
        value,
        r_min: r[start],
        r_max: grid.r_outer(),
    })
}

/// Discrete `L^q_beta` norm `(int |f|^q r^{-beta q - n} dx)^{1/q}` over the
/// region `r >= r_asym`, integrated against `omega r^{n-1} dr` with
/// composite Simpson panels.
pub fn weighted_lq_norm(grid: &RadialGrid, f: &[f64], beta: f64, q: f64, r_asym: Option<f64>) -> Result<WeightedNorm> {
    check_len(grid, f)?;
    if !(q >= 1.0 && q.is_finite()) {
        return Err(Error::InvalidExponent(q));
    }
    let start = asymptotic_start(grid, r_asym);
    let nf = grid.n() as f64;
    let omega = grid.constants().omega();
    let r = &grid.nodes()[start..];
    let integrand: Vec<f64> = r
        .iter()
        .zip(&f[start..])
        .map(|(&ri, fi)| {
            if *fi == 0.0 {
                0.0
            } else {
                omega * fi.abs().powf(q) * ri.powf(-beta * q - nf + nf - 1.0)
            }
        })
        .collect();
    let total = if r.len() >= 2 { integrate(r, &integrand) } else { 0.0 };
    Ok(WeightedNorm {
        value: total.max(0.0).powf(1.0 / q),
        r_min: r[0],
        r_max: grid.r_outer(),
    })
}

/// Per-radius and extrapolated ADM mass of `v^{4/(n-2)} delta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassEstimate {
    /// Radii in increasing order.
    pub radii: Vec<f64>,
    pub values: Vec<f64>,
    /// Limit `r -> infinity` by polynomial extrapolation in `1/r` (odd `n`)
    /// or `1/r^2` (even `n`).
    pub extrapolated: f64,
    /// Difference between the extrapolations with and without the innermost radius.
    pub error_estimate: f64,
    /// False when successive per-radius increments fail to shrink.
    pub converged: bool,
    pub warning: Option<String>,
}

/// ADM mass of the conformally flat metric `g = v^{4/(n-2)} delta`.
///
/// With `g_ij = psi delta_ij`, `psi = v^{4/(n-2)}`, the flux integrand is
/// `(1-n) psi_r` and the sphere integral gives
/// `m(r) = -(n-1)/(n-2) v^{(6-n)/(n-2)} r^{n-1} v_r`.
/// `r^{n-1} v_r` and `v(r)` come from a local fit that is exact on radial
/// harmonic tails.
pub fn adm_mass(v: &ConformalField, consts: &Constants, radii: &[f64]) -> Result<MassEstimate> {
    let grid = v.grid();
    check_consts(grid, consts)?;
    if radii.is_empty() {
        return Err(Error::Domain("no radii requested".into()));
    }
    let mut radii = radii.to_vec();
    radii.sort_by(|a, b| a.total_cmp(b));
    let values = radii
        .iter()
        .map(|&r| mass_at_radius(grid, v.values(), r))
        .collect::<Result<Vec<_>>>()?;

    // corrections come in powers of r^{2-n} (harmonic part) and r^{-2}
    // (everything else); both are polynomial in x
    let step = if grid.n() % 2 == 1 { 1 } else { 2 };
    let xs: Vec<f64> = radii.iter().map(|r| r.powi(-step)).collect();
    let extrapolated = extrapolate_to_zero(&xs, &values);
    let error_estimate = if values.len() > 1 {
        (extrapolated - extrapolate_to_zero(&xs[1..], &values[1..])).abs()
    } else {
        f64::INFINITY
    };

    let scale = values.iter().fold(1e-300_f64, |m, x| m.max(x.abs()));
    let tol = 1e-10 * scale.max(1.0);
    let diffs: Vec<f64> = values.windows(2).map(|w| w[1] - w[0]).collect();
    let shrinking = diffs.windows(2).all(|d| d[1].abs() <= d[0].abs() + tol);
    let monotone = diffs.iter().all(|d| *d >= -tol) || diffs.iter().all(|d| *d <= tol);
    let converged = shrinking && monotone;
    let warning = if !monotone {
        Some("per-radius mass sequence is not monotone; extrapolated value is unreliable".into())
    } else if !shrinking {
        Some("per-radius mass increments do not shrink with radius; the mass may not be finite".into())
    } else {
        None
    };
    Ok(MassEstimate {
        radii,
        values,
        extrapolated,
        error_estimate,
        converged,
        warning,
    })
}

/// Mass flux through the sphere of radius `r`.
///
/// `v` is fitted by `c1 + c2 r^{2-n} + c3 r^{-n}` through the nodes
/// bracketing `[r / SPAN, r * SPAN]` and the node closest to `r` (two-term
/// fit when there is no node in between). Adjacent-node differences of `v` near 1 lose most
/// of their digits at large radii; the wide pair keeps the fit well
/// conditioned and is still exact on harmonic tails.
pub(crate) fn mass_at_radius(grid: &RadialGrid, v: &[f64], r: f64) -> Result<f64> {
    const SPAN: f64 = 1.2;
    let nodes = grid.nodes();
    if !(r > grid.r_inner() && r < grid.r_outer()) {
        return Err(Error::Range {
            r,
            lo: grid.r_inner(),
            hi: grid.r_outer(),
        });
    }
    let lowest = usize::from(grid.has_origin());
    let ia = nodes
        .partition_point(|&x| x <= r / SPAN)
        .saturating_sub(1)
        .max(lowest)
        .min(grid.len() - 2);
    let ib = nodes.partition_point(|&x| x < r * SPAN).min(grid.len() - 1).max(ia + 1);
    let nf = grid.n() as f64;
    let (ra, rb) = (nodes[ia], nodes[ib]);
    let im = (ia + 1..ib)
        .min_by(|&i, &j| (nodes[i] - r).abs().total_cmp(&(nodes[j] - r).abs()));
    let (v_r, flux) = if ra == 0.0 {
        let slope = (v[ib] - v[ia]) / (rb - ra);
        (v[ia] + slope * r, slope * r.powf(nf - 1.0))
    } else if let Some(im) = im {
        // v = c1 + c2 s + c3 q with s = r^{2-n}, q = r^{-n}; the q term
        // absorbs the leading non-harmonic correction
        let s = |x: f64| x.powf(2.0 - nf);
        let q = |x: f64| x.powf(-nf);
        let rm = nodes[im];
        let (ds_m, dq_m, dv_m) = (s(rm) - s(ra), q(rm) - q(ra), v[im] - v[ia]);
        let (ds_b, dq_b, dv_b) = (s(rb) - s(ra), q(rb) - q(ra), v[ib] - v[ia]);
        let det = ds_m * dq_b - ds_b * dq_m;
        let c2 = (dv_m * dq_b - dv_b * dq_m) / det;
        let c3 = (ds_m * dv_b - ds_b * dv_m) / det;
        (
            v[ia] + c2 * (s(r) - s(ra)) + c3 * (q(r) - q(ra)),
            (2.0 - nf) * c2 - nf * c3 / (r * r),
        )
    } else {
        // v = c1 + c2 s with s = r^{2-n}; r^{n-1} v_r = (2-n) c2
        let s = |x: f64| x.powf(2.0 - nf);
        let c2 = (v[ib] - v[ia]) / (s(rb) - s(ra));
        (v[ia] + c2 * (s(r) - s(ra)), (2.0 - nf) * c2)
    };
    Ok(-(nf - 1.0) / (nf - 2.0) * v_r.powf((6.0 - nf) / (nf - 2.0)) * flux)
}

/// Power-law fit `|f| ~ amplitude * r^{-tau_hat}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    /// `+inf` when `f` vanishes on the fit region.
    pub tau_hat: f64,
    pub amplitude: f64,
    /// RMS residual of the log-log fit.
    pub residual: f64,
}

/// Least-squares fit of `log|f|` against `log r` on `[r_fit_min, r_outer]`.
pub fn decay_order_fit(grid: &RadialGrid, f: &[f64], r_fit_min: f64) -> Result<DecayFit> {
    check_len(grid, f)?;
    let start = grid.first_index_at_or_above(r_fit_min);
    let count = grid.len() - start;
    if count < 8 || grid.nodes()[start] < r_fit_min {
        return Err(Error::Domain(format!(
            "fit region [{r_fit_min}, {}] holds {count} nodes; need at least 8",
            grid.r_outer()
        )));
    }
    let pts: Vec<(f64, f64)> = (start..grid.len())
        .filter(|&i| f[i] != 0.0)
        .map(|i| (grid.nodes()[i].ln(), f[i].abs().ln()))
        .collect();
    if pts.is_empty() {
        return Ok(DecayFit {
            tau_hat: f64::INFINITY,
            amplitude: 0.0,
            residual: 0.0,
        });
    }
    if pts.len() < 2 {
        return Err(Error::Domain("fewer than two nonzero samples in the fit region".into()));
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum::<f64>()
        / m)
        .sqrt();
    Ok(DecayFit {
        tau_hat: -slope,
        amplitude: intercept.exp(),
        residual,
    })
}
