//! The explicit one-parameter family of flat solid cylinders in Minkowski
//! space with identical conformal-mean-curvature boundary data and initial
//! slice, distinguished only by the corner angle: the exact, grid-free
//! non-uniqueness witness.
//!
//! The boundary radius r(t) with r(0) = 1, r'(0) = alpha satisfies
//! `r''/r + (r'/r)^2 = 2(sqrt(V) - 1)` with `V = r^2 + r'^2` (constant mean
//! curvature H = 2), i.e. `r'' = 2 r (sqrt(r^2 + r'^2) - 1) - r'^2 / r`.

use crate::error::{numerical, validation, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum TerminalStatus {
    Completed,
    Collapsed,
    Expanded,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct CylinderTrajectory {
    pub alpha: f64,
    pub times: Vec<f64>,
    pub r: Vec<f64>,
    pub rdot: Vec<f64>,
    pub status: TerminalStatus,
    /// Collapse time when `status == Collapsed` (bisection-refined).
    pub collapse_time: Option<f64>,
    /// Mean curvature recomputed per sample from (r, r', r''-from-ODE).
    pub h_samples: Vec<f64>,
    /// Conformal identity residual `|-V + r'^2 + r^2|` per sample.
    pub conformal_residual: Vec<f64>,
    /// The corner angle `g_alpha(nu_S, nu_C) = -alpha` at t = 0.
    pub corner_angle: f64,
}

#[derive(Debug, Clone)]
pub struct IntegrateOptions {
    pub r_min: f64,
    pub r_bound: f64,
    /// Base step; steps adapt down near collapse.
    pub h_ode: f64,
    pub t_max: f64,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        IntegrateOptions { r_min: 1e-6, r_bound: 1e3, h_ode: 1e-3, t_max: 5.0 }
    }
}

pub(crate) fn rhs(r: f64, rd: f64) -> (f64, f64) {
    let v = r * r + rd * rd;
    (rd, 2.0 * r * (v.sqrt() - 1.0) - rd * rd / r)
}

fn rk4_step(r: f64, rd: f64, h: f64) -> (f64, f64) {
    let (k1r, k1v) = rhs(r, rd);
    let (k2r, k2v) = rhs(r + 0.5 * h * k1r, rd + 0.5 * h * k1v);
    let (k3r, k3v) = rhs(r + 0.5 * h * k2r, rd + 0.5 * h * k2v);
    let (k4r, k4v) = rhs(r + h * k3r, rd + h * k3v);
    (
        r + h / 6.0 * (k1r + 2.0 * k2r + 2.0 * k3r + k4r),
        rd + h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v),
    )
}

/// Integrate the radius ODE with event detection on collapse and expansion.
/// Classical RK4; the step shrinks near collapse where the equation
/// stiffens (the local timescale is r^2 / |r'|).
pub fn integrate_cylinder(alpha: f64, opts: &IntegrateOptions) -> Result<CylinderTrajectory> {
    if alpha.abs() > 1.0 {
        return validation(format!("|alpha| = {} must be <= 1", alpha.abs()));
    }
    if !(opts.h_ode > 0.0) {
        return validation("h_ode must be positive".to_string());
    }
    let mut t = 0.0;
    let mut r = 1.0;
    let mut rd = alpha;
    let mut times = vec![0.0];
    let mut rs = vec![r];
    let mut rds = vec![rd];
    let mut status = TerminalStatus::Completed;
    let mut collapse_time = None;

    while t < opts.t_max {
        // local step: resolve the collapse timescale r/|r'| ~ (T - t)
        let scale = (r / rd.abs().max(1e-12)).min(1.0);
        let h = opts.h_ode.min(0.05 * scale).max(1e-16);
        if h < 1e-15 {
            return numerical(format!(
                "step underflow near collapse at t = {} (r = {}, r' = {})",
                t, r, rd
            ));
        }
        let (rn, rdn) = rk4_step(r, rd, h);
        if !rn.is_finite() || !rdn.is_finite() {
            return numerical(format!("non-finite state at t = {}", t));
        }
        if rn <= opts.r_min {
            // bisection-refine the crossing time within [t, t+h]
            let mut lo = 0.0;
            let mut hi = h;
            for _ in 0..100 {
                let mid = 0.5 * (lo + hi);
                let (rm, _) = rk4_step(r, rd, mid);
                if rm <= opts.r_min {
                    hi = mid;
                } else {
                    lo = mid;
                }
                if hi - lo < 1e-15 * (1.0 + t) {
                    break;
                }
            }
            let tc = t + 0.5 * (lo + hi);
            let (rm, rdm) = rk4_step(r, rd, 0.5 * (lo + hi));
            times.push(tc);
            rs.push(rm.max(opts.r_min));
            rds.push(rdm);
            status = TerminalStatus::Collapsed;
            collapse_time = Some(tc);
            break;
        }
        if rn >= opts.r_bound {
            times.push(t + h);
            rs.push(rn);
            rds.push(rdn);
            status = TerminalStatus::Expanded;
            break;
        }
        t += h;
        r = rn;
        rd = rdn;
        times.push(t);
        rs.push(r);
        rds.push(rd);
    }

    let mut h_samples = Vec::with_capacity(rs.len());
    let mut conformal_residual = Vec::with_capacity(rs.len());
    for i in 0..rs.len() {
        let (ri, rdi) = (rs[i], rds[i]);
        let v = ri * ri + rdi * rdi;
        let (_, rdd) = rhs(ri, rdi);
        h_samples.push((rdd / ri + (rdi / ri) * (rdi / ri) + 2.0) / v.sqrt());
        conformal_residual.push((-v + rdi * rdi + ri * ri).abs());
    }

    Ok(CylinderTrajectory {
        alpha,
        times,
        r: rs,
        rdot: rds,
        status,
        collapse_time,
        h_samples,
        conformal_residual,
        corner_angle: -alpha,
    })
}

/// Diagnostics of an integrated trajectory.
#[derive(Debug, Clone, serde::Serialize)]
pub struct TrajectoryDiagnostics {
    pub max_h_deviation: f64,
    /// Max conformal-identity residual relative to the sample scale 1 + V.
    pub max_conformal_residual: f64,
    pub corner_angle: f64,
    pub monotone: bool,
}

pub fn trajectory_diagnostics(traj: &CylinderTrajectory) -> TrajectoryDiagnostics {
    // restrict the H check to well-conditioned samples: the displayed
    // formula subtracts (r'/r)^2 terms that reach 1e16 near collapse, where
    // float cancellation (not integration error) dominates
    let max_h = traj
        .h_samples
        .iter()
        .zip(traj.r.iter().zip(traj.rdot.iter()))
        .filter(|(_, (r, rd))| (rd.abs() / f64::max(**r, 1e-300)) <= 1e3)
        .fold(0.0f64, |m, (h, _)| m.max((h - 2.0).abs()));
    // relative to 1 + V per sample ("to rounding" at the sample's scale)
    let max_c = traj
        .conformal_residual
        .iter()
        .zip(traj.r.iter().zip(traj.rdot.iter()))
        .fold(0.0f64, |m, (c, (r, rd))| m.max(c / (1.0 + r * r + rd * rd)));
    let sgn = traj.alpha.signum();
    let monotone = if traj.alpha == 0.0 {
        traj.rdot.iter().all(|v| v.abs() < 1e-12)
    } else {
        traj.rdot.iter().all(|v| v * sgn >= -1e-12)
    };
    TrajectoryDiagnostics {
        max_h_deviation: max_h,
        max_conformal_residual: max_c,
        corner_angle: traj.corner_angle,
        monotone,
    }
}

/// Collapse time refined by step halving until successive estimates agree
/// to `tol`.
pub fn collapse_time(alpha: f64, tol: f64) -> Result<f64> {
    if alpha >= 0.0 {
        return validation(format!("alpha = {} does not collapse", alpha));
    }
    let mut h = 2e-3;
    let mut prev: Option<f64> = None;
    for _ in 0..12 {
        let opts = IntegrateOptions { h_ode: h, t_max: 100.0, ..Default::default() };
        let traj = integrate_cylinder(alpha, &opts)?;
        let tc = match traj.collapse_time {
            Some(t) => t,
            None => return validation(format!("no collapse detected for alpha = {}", alpha)),
        };
        if let Some(p) = prev {
            if (tc - p).abs() <= tol {
                return Ok(tc);
            }
        }
        prev = Some(tc);
        h /= 2.0;
    }
    numerical("collapse time did not converge within the halving budget".to_string())
}

/// One row of the family scan.
#[derive(Debug, Clone, serde::Serialize)]
pub struct FamilyRow {
    pub alpha: f64,
    pub status: TerminalStatus,
    /// Collapse time for collapsing members, final radius otherwise.
    pub t_or_final_r: f64,
    pub max_h_deviation: f64,
    pub max_conformal_residual: f64,
    pub corner_angle: f64,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct FamilyScan {
    pub rows: Vec<FamilyRow>,
    /// Pairwise sup-distance of the radius curves on the common interval.
    pub pairwise_separation: Vec<((usize, usize), f64)>,
}

/// Integrate a list of angles and tabulate the witness: identical boundary
/// data (H = 2, boundary metric pointwise conformal to the standard
/// cylinder) and initial slice, distinct trajectories.
pub fn family_scan(alphas: &[f64], opts: &IntegrateOptions) -> Result<FamilyScan> {
    if alphas.is_empty() {
        return validation("empty alpha list".to_string());
    }
    let mut trajs = Vec::new();
    for &a in alphas {
        trajs.push(integrate_cylinder(a, opts)?);
    }
    let rows = trajs
        .iter()
        .map(|t| {
            let d = trajectory_diagnostics(t);
            FamilyRow {
                alpha: t.alpha,
                status: t.status,
                t_or_final_r: match t.status {
                    TerminalStatus::Collapsed => t.collapse_time.unwrap_or(f64::NAN),
                    _ => *t.r.last().unwrap(),
                },
                max_h_deviation: d.max_h_deviation,
                max_conformal_residual: d.max_conformal_residual,
                corner_angle: d.corner_angle,
            }
        })
        .collect();
    // pairwise separation by sampling the common existence interval
    let mut pairwise = Vec::new();
    for i in 0..trajs.len() {
        for j in i + 1..trajs.len() {
            let t_end = trajs[i]
                .times
                .last()
                .unwrap()
                .min(*trajs[j].times.last().unwrap());
            let mut sep = 0.0f64;
            let samples = 200;
            for s in 0..=samples {
                let t = t_end * s as f64 / samples as f64;
                let ri = sample_r(&trajs[i], t);
                let rj = sample_r(&trajs[j], t);
                sep = sep.max((ri - rj).abs());
            }
            pairwise.push(((i, j), sep));
        }
    }
    Ok(FamilyScan { rows, pairwise_separation: pairwise })
}

fn sample_r(traj: &CylinderTrajectory, t: f64) -> f64 {
    // linear interpolation in the sample list
    match traj.times.binary_search_by(|v| v.partial_cmp(&t).unwrap()) {
        Ok(i) => traj.r[i],
        Err(i) => {
            if i == 0 {
                traj.r[0]
            } else if i >= traj.times.len() {
                *traj.r.last().unwrap()
            } else {
                let t0 = traj.times[i - 1];
                let t1 = traj.times[i];
                let w = (t - t0) / (t1 - t0);
                traj.r[i - 1] * (1.0 - w) + traj.r[i] * w
            }
        }
    }
}

/// CSV of a family scan (full double precision).
pub fn family_scan_csv(scan: &FamilyScan) -> String {
    let mut s = String::from("alpha,status,T_or_final_r,maxHdev,conf_residual,corner_angle\n");
    for row in &scan.rows {
        s.push_str(&format!(
            "{:.16e},{:?},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            row.alpha,
            row.status,
            row.t_or_final_r,
            row.max_h_deviation,
            row.max_conformal_residual,
            row.corner_angle
        ));
    }
    s
}

/// CSV of a trajectory.
pub fn trajectory_csv(traj: &CylinderTrajectory) -> String {
    let mut s = String::from("t,r,rdot,H,conf_residual\n");
    for i in 0..traj.times.len() {
        s.push_str(&format!(
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}\n",
            traj.times[i], traj.r[i], traj.rdot[i], traj.h_samples[i], traj.conformal_residual[i]
        ));
    }
    s
}
