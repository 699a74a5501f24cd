use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ConformalField;
use crate::geometry::{active_nodes, scalar_curvature};
use crate::grid::Constants;

/// Constant `c` with `s = c t` between rescaled (u-form) time `s` and
/// geometric time `t`.
///
/// With `g = v^{4/(n-2)} delta`, `d/dt g = -R g` reads
/// `(4/(n-2)) v_t / v = (1/a) v^{-p} Delta v`, i.e.
/// `d/dt v^p = ((n+2)/(n-2)) (n-2)/(4a) Delta v = (n-1) p Delta v`.
/// The u-form `d/ds v^p = Delta v` is therefore the same flow run at
/// `s = (n-1) p t`.
pub fn time_rescale_factor(consts: &Constants) -> f64 {
    (consts.nf() - 1.0) * consts.p()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    pub lower: f64,
    pub upper: f64,
    /// False once `1 - c_n S t <= 0`; the lower bound is then reported as 0.
    pub valid: bool,
}

/// Two-sided bound `(1 -+ c_n S t)^{(n-2)/4}` on `u = v/v0` at u-form time
/// `t`, with `c_n = (n-2)/((n-1)(n+2))` and `S = sup |R0|`.
pub fn maximum_principle_bracket(t: f64, sup_r0: f64, consts: &Constants) -> Result<Bracket> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("bracket time {t} must be nonnegative")));
    }
    if !(sup_r0 >= 0.0) {
        return Err(Error::Domain(format!("sup |R0| = {sup_r0} must be nonnegative")));
    }
    let nf = consts.nf();
    let cn = (nf - 2.0) / ((nf - 1.0) * (nf + 2.0));
    let e = (nf - 2.0) / 4.0;
    let x = cn * sup_r0 * t;
    let upper = (1.0 + x).powf(e);
    let (lower, valid) = if x < 1.0 { ((1.0 - x).powf(e), true) } else { (0.0, false) };
    Ok(Bracket { lower, upper, valid })
}

/// `T = (n-1)(n+2) / (2 (n-2) S)`, the u-form time at which the lower bracket
/// reaches `(1/2)^{(n-2)/4}`; `+inf` for `S = 0`.
pub fn guaranteed_existence_time(sup_r0: f64, consts: &Constants) -> Result<f64> {
    if !(sup_r0 >= 0.0) {
        return Err(Error::Domain(format!("sup |R0| = {sup_r0} must be nonnegative")));
    }
    if sup_r0 == 0.0 {
        return Ok(f64::INFINITY);
    }
    let nf = consts.nf();
    Ok((nf - 1.0) * (nf + 2.0) / (2.0 * (nf - 2.0) * sup_r0))
}

/// `sup |R(g0)|` over the nodes where the discrete curvature is defined by
/// the interior operator.
pub fn sup_abs_curvature(v0: &ConformalField) -> Result<f64> {
    let consts = v0.grid().constants();
    let r = scalar_curvature(v0, &consts)?;
    Ok(active_nodes(v0.grid()).map(|i| r[i].abs()).fold(0.0, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BracketReport {
    /// u-form time.
    pub t: f64,
    pub lower: f64,
    pub upper: f64,
    pub min_u: f64,
    pub max_u: f64,
    pub satisfied: bool,
}

/// Checks `lower - tol <= min u` and `max u <= upper + tol`.
pub fn bracket_report(t: f64, u: &[f64], sup_r0: f64, consts: &Constants, tol: f64) -> Result<BracketReport> {
    let b = maximum_principle_bracket(t, sup_r0, consts)?;
    let min_u = u.iter().copied().fold(f64::INFINITY, f64::min);
    let max_u = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(BracketReport {
        t,
        lower: b.lower,
        upper: b.upper,
        min_u,
        max_u,
        satisfied: b.lower - tol <= min_u && max_u <= b.upper + tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bracket_examples() {
        let c = Constants::new(3).unwrap();
        let b = maximum_principle_bracket(1.0, 1.0, &c).unwrap();
        assert!((b.lower - 0.9f64.powf(0.25)).abs() < 1e-15);
        assert!((b.upper - 1.1f64.powf(0.25)).abs() < 1e-15);
        assert!((b.lower - 0.97400).abs() < 1e-5 && (b.upper - 1.02411).abs() < 1e-5);
        for t in [0.0, 3.0, 1e6] {
            let b = maximum_principle_bracket(t, 0.0, &c).unwrap();
            assert_eq!((b.lower, b.upper), (1.0, 1.0));
        }
        let b = maximum_principle_bracket(0.0, 7.0, &c).unwrap();
        assert_eq!((b.lower, b.upper), (1.0, 1.0));
        let b = maximum_principle_bracket(20.0, 1.0, &c).unwrap();
        assert!(!b.valid && b.lower == 0.0);
        assert!(maximum_principle_bracket(-1.0, 1.0, &c).is_err());
    }

    #[test]
    fn existence_time_examples() {
        let c3 = Constants::new(3).unwrap();
        assert_eq!(guaranteed_existence_time(1.0, &c3).unwrap(), 5.0);
        let c4 = Constants::new(4).unwrap();
        assert_eq!(guaranteed_existence_time(2.0, &c4).unwrap(), 9.0 / 4.0);
        assert_eq!(guaranteed_existence_time(0.0, &c3).unwrap(), f64::INFINITY);
        for n in 3..9 {
            let c = Constants::new(n).unwrap();
            let s = 0.37;
            let t = guaranteed_existence_time(s, &c).unwrap();
            let b = maximum_principle_bracket(t, s, &c).unwrap();
            assert!((b.lower - 0.5f64.powf((n as f64 - 2.0) / 4.0)).abs() < 1e-14);
        }
    }

    #[test]
    fn rescale_factor_examples() {
        assert!((time_rescale_factor(&Constants::new(3).unwrap()) - 10.0).abs() < 1e-14);
        assert!((time_rescale_factor(&Constants::new(6).unwrap()) - 10.0).abs() < 1e-14);
        assert!((time_rescale_factor(&Constants::new(4).unwrap()) - 9.0).abs() < 1e-14);
    }

    #[test]
    fn report_tolerance() {
        let c = Constants::new(3).unwrap();
        let r = bracket_report(1.0, &[0.974, 1.0], 1.0, &c, 1e-8).unwrap();
        assert!(!r.satisfied);
        let r = bracket_report(1.0, &[0.975, 1.0], 1.0, &c, 1e-8).unwrap();
        assert!(r.satisfied && r.lower <= r.upper);
    }
}
