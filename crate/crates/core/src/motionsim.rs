//! Control-point random-walk motion trajectories.
//!
//! Each of the six rigid parameters follows its own random walk over a small
//! set of control points, smoothed by a GCV-selected cubic smoothing spline,
//! demeaned over the slice sampling window, and shifted by a uniform random
//! offset that sets the trajectory mean. Draws that violate the motion
//! bounds are rejected and redrawn.

use crate::error::{Error, Result};
use crate::geometry::RigidTransform;
use crate::rng::CounterRng;
use crate::spline::fit_smoothing_spline_gcv;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryConfig {
    /// Control points per parameter curve.
    pub n_control: usize,
    /// Half-width of the uniform increment draw for angles (radians).
    pub delta_rot_bound: f64,
    /// Half-width of the uniform increment draw for translations (mm).
    pub delta_trans_bound: f64,
    /// Bound on the per-axis mean angle (radians).
    pub mean_rot_bound: f64,
    /// Bound on the per-axis mean displacement (mm).
    pub mean_trans_bound: f64,
    /// Hard bound on every displacement sample (mm, open interval).
    pub trans_bound: f64,
    /// Per-axis mean angular speed cap (degrees per second).
    pub max_mean_angular_speed_deg_s: f64,
    /// Per-axis instantaneous angular speed cap (degrees per second).
    pub max_instantaneous_speed_deg_s: f64,
    /// Time between consecutive slice acquisitions (seconds).
    pub slice_interval_s: f64,
    pub seed: u64,
    /// Rejection-resampling budget before the config is declared infeasible.
    pub max_attempts: usize,
}

impl Default for TrajectoryConfig {
    fn default() -> Self {
        TrajectoryConfig {
            n_control: 5,
            delta_rot_bound: 10f64.to_radians(),
            delta_trans_bound: 3.0,
            mean_rot_bound: std::f64::consts::FRAC_PI_4,
            mean_trans_bound: 2.0,
            trans_bound: 10.0,
            max_mean_angular_speed_deg_s: 5.0,
            max_instantaneous_speed_deg_s: 15.0,
            slice_interval_s: 0.8,
            seed: 0,
            max_attempts: 200,
        }
    }
}

impl TrajectoryConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_control < 2 {
            return Err(Error::invalid("n_control must be >= 2"));
        }
        for (name, v) in [
            ("delta_rot_bound", self.delta_rot_bound),
            ("delta_trans_bound", self.delta_trans_bound),
            ("mean_rot_bound", self.mean_rot_bound),
            ("mean_trans_bound", self.mean_trans_bound),
        ] {
            if !(v >= 0.0) {
                return Err(Error::invalid(format!("{name} must be >= 0")));
            }
        }
        for (name, v) in [
            ("trans_bound", self.trans_bound),
            ("max_mean_angular_speed_deg_s", self.max_mean_angular_speed_deg_s),
            ("max_instantaneous_speed_deg_s", self.max_instantaneous_speed_deg_s),
            ("slice_interval_s", self.slice_interval_s),
        ] {
            if !(v > 0.0) {
                return Err(Error::invalid(format!("{name} must be > 0")));
            }
        }
        Ok(())
    }
}

/// Per-slice motion samples drawn from six continuous parameter curves.
#[derive(Debug, Clone)]
pub struct MotionTrajectory {
    /// Sample times (seconds), one per slice in acquisition order.
    pub times_s: Vec<f64>,
    /// Parameter samples: `[theta_x, theta_y, theta_z, d_x, d_y, d_z]` rows,
    /// one per sample time (radians / mm).
    pub params: Vec<[f64; 6]>,
    /// The random offsets added after demeaning (the curve means).
    pub offsets: [f64; 6],
}

impl MotionTrajectory {
    pub fn len(&self) -> usize {
        self.times_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times_s.is_empty()
    }

    /// Per-slice rigid transform about the given rotation center.
    pub fn transform(&self, i: usize, center: Vector3<f64>) -> RigidTransform {
        let p = self.params[i];
        RigidTransform::new(
            Vector3::new(p[0], p[1], p[2]),
            Vector3::new(p[3], p[4], p[5]),
            center,
        )
    }

    pub fn transforms(&self, center: Vector3<f64>) -> Vec<RigidTransform> {
        (0..self.len()).map(|i| self.transform(i, center)).collect()
    }

    /// A trajectory of identity motion (used by zero-motion simulations).
    pub fn identity(n_slices: usize, slice_interval_s: f64) -> Self {
        MotionTrajectory {
            times_s: (0..n_slices).map(|i| i as f64 * slice_interval_s).collect(),
            params: vec![[0.0; 6]; n_slices],
            offsets: [0.0; 6],
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundViolation {
    pub constraint: String,
    pub axis: usize,
    pub value: f64,
    pub bound: f64,
}


/// Checks every trajectory invariant; an empty report means compliance.
pub fn validate_bounds(traj: &MotionTrajectory, cfg: &TrajectoryConfig) -> Vec<BoundViolation> {
    let mut report = Vec::new();
    let n = traj.len();
    if n == 0 {
        return report;
    }
    let tol = 1e-12;
    for axis in 0..3 {
        let mean = traj.params.iter().map(|p| p[axis]).sum::<f64>() / n as f64;
        if mean.abs() > cfg.mean_rot_bound + tol {
            report.push(BoundViolation {
                constraint: "mean_rot_bound".into(),
                axis,
                value: mean,
                bound: cfg.mean_rot_bound,
            });
        }
    }
    for axis in 0..3 {
        let mean = traj.params.iter().map(|p| p[3 + axis]).sum::<f64>() / n as f64;
        if mean.abs() > cfg.mean_trans_bound + tol {
            report.push(BoundViolation {
                constraint: "mean_trans_bound".into(),
                axis,
                value: mean,
                bound: cfg.mean_trans_bound,
            });
        }
        for p in &traj.params {
            if p[3 + axis].abs() >= cfg.trans_bound {
                report.push(BoundViolation {
                    constraint: "trans_bound".into(),
                    axis,
                    value: p[3 + axis],
                    bound: cfg.trans_bound,
                });
                break;
            }
        }
    }
    if n >= 2 {
        for axis in 0..3 {
            let mut sum_speed = 0.0;
            let mut max_speed = 0.0f64;
            for i in 1..n {
                let dt = traj.times_s[i] - traj.times_s[i - 1];
                let speed = ((traj.params[i][axis] - traj.params[i - 1][axis]) / dt)
                    .abs()
                    .to_degrees();
                sum_speed += speed;
                max_speed = max_speed.max(speed);
            }
            let mean_speed = sum_speed / (n - 1) as f64;
            if mean_speed > cfg.max_mean_angular_speed_deg_s + tol {
                report.push(BoundViolation {
                    constraint: "max_mean_angular_speed_deg_s".into(),
                    axis,
                    value: mean_speed,
                    bound: cfg.max_mean_angular_speed_deg_s,
                });
            }
            if max_speed > cfg.max_instantaneous_speed_deg_s + tol {
                report.push(BoundViolation {
                    constraint: "max_instantaneous_speed_deg_s".into(),
                    axis,
                    value: max_speed,
                    bound: cfg.max_instantaneous_speed_deg_s,
                });
            }
        }
    }
    report
}

/// One demeaned spline curve sampled at the slice times.
fn sample_curve(
    rng: &mut CounterRng,
    delta_bound: f64,
    times: &[f64],
    control_times: &[f64],
) -> Result<Vec<f64>> {
    let mut control = Vec::with_capacity(control_times.len());
    let mut value = rng.range(-delta_bound, delta_bound);
    control.push(value);
    for _ in 1..control_times.len() {
        value += rng.range(-delta_bound, delta_bound);
        control.push(value);
    }
    let (spline, _) = fit_smoothing_spline_gcv(control_times, &control)?;
    let mut samples: Vec<f64> = times.iter().map(|&t| spline.eval(t)).collect();
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    for s in &mut samples {
        *s -= mean;
    }
    Ok(samples)
}

/// Draws a trajectory satisfying all bounds, rejecting and redrawing until
/// the invariants hold or the attempt budget is exhausted.
pub fn simulate_trajectory(cfg: &TrajectoryConfig, n_slices: usize) -> Result<MotionTrajectory> {
    cfg.validate()?;
    if n_slices < 1 {
        return Err(Error::invalid("n_slices must be >= 1"));
    }
    let times: Vec<f64> = (0..n_slices)
        .map(|i| i as f64 * cfg.slice_interval_s)
        .collect();
    let span = cfg.slice_interval_s * (n_slices.max(2) - 1) as f64;
    let control_times: Vec<f64> = (0..cfg.n_control)
        .map(|k| span * k as f64 / (cfg.n_control - 1) as f64)
        .collect();

    let mut rng = CounterRng::new(cfg.seed, "trajectory");
    for _attempt in 0..cfg.max_attempts {
        let mut curves = Vec::with_capacity(6);
        let mut offsets = [0.0; 6];
        for p in 0..6 {
            let (delta, mean_bound) = if p < 3 {
                (cfg.delta_rot_bound, cfg.mean_rot_bound)
            } else {
                (cfg.delta_trans_bound, cfg.mean_trans_bound)
            };
            let mut samples = sample_curve(&mut rng, delta, &times, &control_times)?;
            let offset = rng.range(-mean_bound, mean_bound);
            for s in &mut samples {
                *s += offset;
            }
            offsets[p] = offset;
            curves.push(samples);
        }
        let params: Vec<[f64; 6]> = (0..n_slices)
            .map(|i| {
                [
                    curves[0][i], curves[1][i], curves[2][i], curves[3][i], curves[4][i],
                    curves[5][i],
                ]
            })
            .collect();
        let traj = MotionTrajectory {
            times_s: times.clone(),
            params,
            offsets,
        };
        if validate_bounds(&traj, cfg).is_empty() {
            return Ok(traj);
        }
    }
    Err(Error::numerical(format!(
        "trajectory rejection budget exhausted after {} attempts (infeasible bounds?)",
        cfg.max_attempts
    )))
}

/// CSV export: `time_s,theta_x_deg,theta_y_deg,theta_z_deg,d_x_mm,d_y_mm,d_z_mm`.
pub fn write_trajectory_csv(traj: &MotionTrajectory, path: &Path) -> Result<()> {
    let mut out = String::from("time_s,theta_x_deg,theta_y_deg,theta_z_deg,d_x_mm,d_y_mm,d_z_mm\n");
    for (t, p) in traj.times_s.iter().zip(traj.params.iter()) {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            t,
            p[0].to_degrees(),
            p[1].to_degrees(),
            p[2].to_degrees(),
            p[3],
            p[4],
            p[5]
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// One-sample Kolmogorov-Smirnov p-value against U(lo, hi), using the
/// asymptotic Kolmogorov distribution with the small-sample correction
/// `(sqrt(n) + 0.12 + 0.11/sqrt(n)) * D`.
pub fn ks_uniform_p(samples: &[f64], lo: f64, hi: f64) -> f64 {
    let n = samples.len();
    assert!(n > 0 && hi > lo);
    let mut sorted: Vec<f64> = samples.iter().map(|&x| (x - lo) / (hi - lo)).collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut d = 0.0f64;
    for (i, &u) in sorted.iter().enumerate() {
        let cdf = u.clamp(0.0, 1.0);
        d = d.max((cdf - i as f64 / n as f64).abs());
        d = d.max(((i as f64 + 1.0) / n as f64 - cdf).abs());
    }
    let sqrt_n = (n as f64).sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    let mut p = 0.0;
    for k in 1..101 {
        let kf = k as f64;
        p += 2.0 * (-1.0f64).powi(k + 1) * (-2.0 * kf * kf * lambda * lambda).exp();
    }
    p.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_bounds_give_identity_trajectory() {
        let cfg = TrajectoryConfig {
            delta_rot_bound: 0.0,
            delta_trans_bound: 0.0,
            mean_rot_bound: 0.0,
            mean_trans_bound: 0.0,
            seed: 1,
            ..TrajectoryConfig::default()
        };
        let traj = simulate_trajectory(&cfg, 12).unwrap();
        for p in &traj.params {
            for v in p {
                assert!(v.abs() < 1e-12, "param {v}");
            }
        }
    }

    #[test]
    fn fixed_seed_reproduces() {
        let cfg = TrajectoryConfig {
            seed: 99,
            ..TrajectoryConfig::default()
        };
        let a = simulate_trajectory(&cfg, 24).unwrap();
        let b = simulate_trajectory(&cfg, 24).unwrap();
        assert_eq!(a.params, b.params);
        assert_eq!(a.times_s, b.times_s);
    }

    #[test]
    fn defaults_satisfy_bounds() {
        for seed in 0..50 {
            let cfg = TrajectoryConfig {
                seed,
                ..TrajectoryConfig::default()
            };
            let traj = simulate_trajectory(&cfg, 24).unwrap();
            assert!(validate_bounds(&traj, &cfg).is_empty());
        }
    }

    #[test]
    fn demeaned_curves_have_zero_mean_before_offset() {
        let cfg = TrajectoryConfig {
            seed: 5,
            ..TrajectoryConfig::default()
        };
        let traj = simulate_trajectory(&cfg, 24).unwrap();
        for p in 0..6 {
            let mean = traj.params.iter().map(|row| row[p]).sum::<f64>() / traj.len() as f64;
            assert!(
                (mean - traj.offsets[p]).abs() < 1e-9,
                "param {p}: mean {mean} offset {}",
                traj.offsets[p]
            );
        }
    }

    #[test]
    fn violation_report_names_offending_bound() {
        let cfg = TrajectoryConfig::default();
        let mut traj = MotionTrajectory::identity(4, cfg.slice_interval_s);
        traj.params[2][3] = 11.0; // d_x sample out of (-10, 10)
        let report = validate_bounds(&traj, &cfg);
        assert!(report.iter().any(|v| v.constraint == "trans_bound" && v.axis == 0));
        // mean bound also trips: mean d_x = 2.75 > 2
        assert!(report.iter().any(|v| v.constraint == "mean_trans_bound"));
    }

    #[test]
    fn velocity_violation_detected() {
        let cfg = TrajectoryConfig::default();
        let mut traj = MotionTrajectory::identity(10, cfg.slice_interval_s);
        // 6 deg/s zig-zag about zero mean on theta_y
        let step = (6.0f64).to_radians() * cfg.slice_interval_s;
        for (i, p) in traj.params.iter_mut().enumerate() {
            p[1] = if i % 2 == 0 { 0.0 } else { step };
        }
        let report = validate_bounds(&traj, &cfg);
        assert!(report
            .iter()
            .any(|v| v.constraint == "max_mean_angular_speed_deg_s" && v.axis == 1));
    }

    #[test]
    fn compliant_trajectory_has_empty_report() {
        let cfg = TrajectoryConfig {
            seed: 11,
            ..TrajectoryConfig::default()
        };
        let traj = simulate_trajectory(&cfg, 24).unwrap();
        assert!(validate_bounds(&traj, &cfg).is_empty());
    }

    #[test]
    fn mean_offsets_are_uniform() {
        let mut means = Vec::new();
        for seed in 0..300 {
            let cfg = TrajectoryConfig {
                seed: 1000 + seed,
                ..TrajectoryConfig::default()
            };
            let traj = simulate_trajectory(&cfg, 24).unwrap();
            let mean = traj.params.iter().map(|p| p[0]).sum::<f64>() / traj.len() as f64;
            means.push(mean);
        }
        let p = ks_uniform_p(
            &means,
            -std::f64::consts::FRAC_PI_4,
            std::f64::consts::FRAC_PI_4,
        );
        assert!(p > 0.01, "KS p-value {p}");
    }

    #[test]
    fn ks_detects_non_uniform() {
        let clumped: Vec<f64> = (0..200).map(|i| 0.5 + 1e-3 * (i as f64 / 200.0)).collect();
        assert!(ks_uniform_p(&clumped, 0.0, 1.0) < 1e-6);
    }

    #[test]
    fn csv_export_has_header_and_rows() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = TrajectoryConfig {
            seed: 3,
            ..TrajectoryConfig::default()
        };
        let traj = simulate_trajectory(&cfg, 8).unwrap();
        let path = dir.path().join("traj.csv");
        write_trajectory_csv(&traj, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 9);
        assert!(lines[0].starts_with("time_s,theta_x_deg"));
    }
}
