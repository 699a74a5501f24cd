use serde::{Deserialize, Serialize};

use super::FlowTrajectory;
use crate::geometry::{active_nodes, radial_gradient, scalar_curvature_values};

/// Bounds a trajectory has to respect to be certified. The defaults only
/// demand positivity and finiteness.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertificateThresholds {
    /// Required `inf u > min_u`.
    pub min_u: f64,
    pub max_u: f64,
    pub max_gradient: f64,
    pub max_curvature: f64,
}

impl Default for CertificateThresholds {
    fn default() -> Self {
        CertificateThresholds {
            min_u: 0.0,
            max_u: f64::INFINITY,
            max_gradient: f64::INFINITY,
            max_curvature: f64::INFINITY,
        }
    }
}

/// Uniform bounds on `u = v / v0` over a trajectory. The curvature bound is
/// on the scalar curvature only, standing in for a full curvature-tensor
/// bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FineSolutionCertificate {
    pub inf_u: f64,
    pub sup_u: f64,
    /// `sup |grad u|_{g0} = sup v0^{-2/(n-2)} |u_r|`.
    pub sup_gradient: f64,
    pub sup_curvature: f64,
    pub certified: bool,
    /// First snapshot time at which a requirement fails.
    pub failing_time: Option<f64>,
    pub reason: Option<String>,
}

pub fn fine_solution_certificate(traj: &FlowTrajectory) -> FineSolutionCertificate {
    fine_solution_certificate_with(traj, &CertificateThresholds::default())
}

pub fn fine_solution_certificate_with(traj: &FlowTrajectory, limits: &CertificateThresholds) -> FineSolutionCertificate {
    let mut cert = FineSolutionCertificate {
        inf_u: f64::INFINITY,
        sup_u: f64::NEG_INFINITY,
        sup_gradient: 0.0,
        sup_curvature: 0.0,
        certified: true,
        failing_time: None,
        reason: None,
    };
    let fail = |cert: &mut FineSolutionCertificate, t: f64, why: String| {
        if cert.certified {
            cert.certified = false;
            cert.failing_time = Some(t);
            cert.reason = Some(why);
        }
    };
    let Some(first) = traj.snapshots.first() else {
        cert.certified = false;
        cert.reason = Some("empty trajectory".into());
        return cert;
    };
    let grid = &traj.grid;
    let consts = grid.constants();
    let v0 = &first.values;
    let g0_factor: Vec<f64> = v0.iter().map(|v| v.powf(-2.0 / (consts.nf() - 2.0))).collect();

    for snap in &traj.snapshots {
        let t = snap.t;
        if let Some(i) = snap.values.iter().position(|v| !(*v > 0.0 && v.is_finite())) {
            fail(
                &mut cert,
                t,
                format!("v = {} at r = {} is not positive", snap.values[i], grid.nodes()[i]),
            );
            continue;
        }
        let u: Vec<f64> = snap.values.iter().zip(v0).map(|(a, b)| a / b).collect();
        let lo = u.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        cert.inf_u = cert.inf_u.min(lo);
        cert.sup_u = cert.sup_u.max(hi);
        let grad = radial_gradient(grid, &u).unwrap_or_default();
        let g = active_nodes(grid)
            .map(|i| (g0_factor[i] * grad[i]).abs())
            .fold(0.0, f64::max);
        cert.sup_gradient = cert.sup_gradient.max(g);
        let r = scalar_curvature_values(grid, &snap.values, &consts).unwrap_or_default();
        let rmax = active_nodes(grid).map(|i| r[i].abs()).fold(0.0, f64::max);
        cert.sup_curvature = cert.sup_curvature.max(rmax);

        if !(lo > limits.min_u) {
            fail(&mut cert, t, format!("inf u = {lo} not above {}", limits.min_u));
        } else if !(hi <= limits.max_u) {
            fail(&mut cert, t, format!("sup u = {hi} exceeds {}", limits.max_u));
        } else if !(g <= limits.max_gradient) {
            fail(&mut cert, t, format!("sup |grad u| = {g} exceeds {}", limits.max_gradient));
        } else if !(rmax <= limits.max_curvature) {
            fail(&mut cert, t, format!("sup |R| = {rmax} exceeds {}", limits.max_curvature));
        }
    }
    cert
}
