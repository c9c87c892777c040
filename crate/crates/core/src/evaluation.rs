//! Motion-parameter and image-quality metrics.
//!
//! Rotation errors are reported per Euler axis in degrees (wrapped to
//! (-180, 180]) and aggregated as the mean over axes and masked slices;
//! since Euler differences are convention-dependent, the geodesic rotation
//! angle is reported alongside. SSIM uses an 11^3 Gaussian window
//! (sigma 1.5, k1 = 0.01, k2 = 0.03) with window weights renormalized over
//! the in-bounds taps, and the dynamic range taken from the reference.
//!
//! Volumes here are objects on a zero-padded background, so the scalar SSIM
//! averages only windows where either image has content (local mean above
//! 0.5% of the dynamic range); a pure-background window would otherwise
//! count as perfect agreement and wash out structural differences. The
//! DSSIM map keeps the raw per-voxel values.

use crate::error::{Error, Result};
use crate::geometry::{rotation_angle, RigidTransform};
use crate::volume::Volume3D;
use serde::Serialize;

pub const SSIM_WINDOW_RADIUS: usize = 5;
pub const SSIM_WINDOW_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Aggregation convention recorded in every report header.
pub const ERROR_CONVENTION: &str =
    "per-axis absolute differences, wrapped to (-180,180] deg, averaged over axes and masked slices";

#[derive(Debug, Clone, Copy, Serialize)]
pub struct AxisStats {
    pub mae: f64,
    pub rmse: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SliceError {
    pub index: usize,
    pub rot_err_deg: [f64; 3],
    pub trans_err_mm: [f64; 3],
    pub geodesic_rot_deg: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MotionErrorReport {
    pub convention: String,
    pub n_slices_used: usize,
    pub mae_rot_deg: f64,
    pub rmse_rot_deg: f64,
    pub mae_trans_mm: f64,
    pub rmse_trans_mm: f64,
    pub rot_axes: [AxisStats; 3],
    pub trans_axes: [AxisStats; 3],
    pub geodesic_rot_mae_deg: f64,
    pub geodesic_rot_rmse_deg: f64,
    pub per_slice: Vec<SliceError>,
}

fn wrap_degrees(d: f64) -> f64 {
    let mut w = d % 360.0;
    if w <= -180.0 {
        w += 360.0;
    } else if w > 180.0 {
        w -= 360.0;
    }
    w
}

/// Compares estimated against true per-slice transforms over masked slices.
pub fn motion_errors(
    true_t: &[RigidTransform],
    est_t: &[RigidTransform],
    mask: &[bool],
) -> Result<MotionErrorReport> {
    if true_t.len() != est_t.len() || true_t.len() != mask.len() {
        return Err(Error::invalid(format!(
            "length mismatch: {} true vs {} estimated vs {} mask",
            true_t.len(),
            est_t.len(),
            mask.len()
        )));
    }
    let mut per_slice = Vec::new();
    for (i, ((t, e), &m)) in true_t.iter().zip(est_t).zip(mask).enumerate() {
        if !m {
            continue;
        }
        let mut rot = [0.0; 3];
        let mut trans = [0.0; 3];
        for a in 0..3 {
            rot[a] = wrap_degrees((e.theta[a] - t.theta[a]).to_degrees()).abs();
            trans[a] = (e.d[a] - t.d[a]).abs();
        }
        let rel = e.rotation_matrix().transpose() * t.rotation_matrix();
        per_slice.push(SliceError {
            index: i,
            rot_err_deg: rot,
            trans_err_mm: trans,
            geodesic_rot_deg: rotation_angle(&rel).to_degrees(),
        });
    }
    let n = per_slice.len();
    let axis_stats = |get: &dyn Fn(&SliceError) -> [f64; 3]| -> [AxisStats; 3] {
        let mut out = [AxisStats { mae: 0.0, rmse: 0.0 }; 3];
        if n == 0 {
            return out;
        }
        for (a, stat) in out.iter_mut().enumerate() {
            let mut sum = 0.0;
            let mut sq = 0.0;
            for s in &per_slice {
                let v = get(s)[a];
                sum += v;
                sq += v * v;
            }
            stat.mae = sum / n as f64;
            stat.rmse = (sq / n as f64).sqrt();
        }
        out
    };
    let rot_axes = axis_stats(&|s| s.rot_err_deg);
    let trans_axes = axis_stats(&|s| s.trans_err_mm);
    let agg = |axes: &[AxisStats; 3]| -> (f64, f64) {
        let mae = axes.iter().map(|a| a.mae).sum::<f64>() / 3.0;
        let rmse = (axes.iter().map(|a| a.rmse * a.rmse).sum::<f64>() / 3.0).sqrt();
        (mae, rmse)
    };
    let (mae_rot, rmse_rot) = agg(&rot_axes);
    let (mae_trans, rmse_trans) = agg(&trans_axes);
    let geo_mae = if n > 0 {
        per_slice.iter().map(|s| s.geodesic_rot_deg).sum::<f64>() / n as f64
    } else {
        0.0
    };
    let geo_rmse = if n > 0 {
        (per_slice
            .iter()
            .map(|s| s.geodesic_rot_deg * s.geodesic_rot_deg)
            .sum::<f64>()
            / n as f64)
            .sqrt()
    } else {
        0.0
    };
    Ok(MotionErrorReport {
        convention: ERROR_CONVENTION.into(),
        n_slices_used: n,
        mae_rot_deg: mae_rot,
        rmse_rot_deg: rmse_rot,
        mae_trans_mm: mae_trans,
        rmse_trans_mm: rmse_trans,
        rot_axes,
        trans_axes,
        geodesic_rot_mae_deg: geo_mae,
        geodesic_rot_rmse_deg: geo_rmse,
        per_slice,
    })
}

/// Writes the per-slice error table as CSV.
pub fn write_motion_report_csv(report: &MotionErrorReport, path: &std::path::Path) -> Result<()> {
    let mut out = String::from(
        "slice,rot_x_deg,rot_y_deg,rot_z_deg,trans_x_mm,trans_y_mm,trans_z_mm,geodesic_rot_deg\n",
    );
    for s in &report.per_slice {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            s.index,
            s.rot_err_deg[0],
            s.rot_err_deg[1],
            s.rot_err_deg[2],
            s.trans_err_mm[0],
            s.trans_err_mm[1],
            s.trans_err_mm[2],
            s.geodesic_rot_deg
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn gaussian_kernel(radius: usize, sigma: f64) -> Vec<f64> {
    (0..=2 * radius)
        .map(|i| {
            let t = i as f64 - radius as f64;
            (-0.5 * (t / sigma).powi(2)).exp()
        })
        .collect()
}

/// Separable blur along one axis; boundaries simply omit out-of-range taps
/// (zero padding). Shared with the scattered-data reconstruction.
pub(crate) fn blur_axis(data: &[f64], dims: [usize; 3], axis: usize, kernel: &[f64]) -> Vec<f64> {
    let [nx, ny, nz] = dims;
    let radius = kernel.len() / 2;
    let mut out = vec![0.0; data.len()];
    let stride = match axis {
        0 => 1,
        1 => nx,
        _ => nx * ny,
    };
    let len = dims[axis];
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let pos = [x, y, z][axis];
                let idx = x + nx * (y + ny * z);
                let mut acc = 0.0;
                let lo = pos.saturating_sub(radius);
                let hi = (pos + radius).min(len - 1);
                for p in lo..=hi {
                    let k = kernel[p + radius - pos];
                    acc += k * data[idx + p * stride - pos * stride];
                }
                out[idx] = acc;
            }
        }
    }
    out
}

fn blur3(data: &[f64], dims: [usize; 3], kernel: &[f64]) -> Vec<f64> {
    let a = blur_axis(data, dims, 0, kernel);
    let b = blur_axis(&a, dims, 1, kernel);
    blur_axis(&b, dims, 2, kernel)
}

fn check_same_shape(v: &Volume3D, reference: &Volume3D) -> Result<()> {
    if v.dims != reference.dims {
        return Err(Error::invalid(format!(
            "shape mismatch: {:?} vs {:?}",
            v.dims, reference.dims
        )));
    }
    Ok(())
}

fn ssim_local_map(v: &Volume3D, reference: &Volume3D) -> Result<Vec<f64>> {
    check_same_shape(v, reference)?;
    let kernel = gaussian_kernel(SSIM_WINDOW_RADIUS, SSIM_WINDOW_SIGMA);
    let dims = v.dims;
    let n = v.data.len();
    let ones = vec![1.0; n];
    let norm = blur3(&ones, dims, &kernel);
    let bx = blur3(&v.data, dims, &kernel);
    let by = blur3(&reference.data, dims, &kernel);
    let xx: Vec<f64> = v.data.iter().map(|a| a * a).collect();
    let yy: Vec<f64> = reference.data.iter().map(|a| a * a).collect();
    let xy: Vec<f64> = v
        .data
        .iter()
        .zip(&reference.data)
        .map(|(a, b)| a * b)
        .collect();
    let bxx = blur3(&xx, dims, &kernel);
    let byy = blur3(&yy, dims, &kernel);
    let bxy = blur3(&xy, dims, &kernel);

    let (lo, hi) = reference.min_max();
    let range = (hi - lo).max(1e-12);
    let c1 = (SSIM_K1 * range).powi(2);
    let c2 = (SSIM_K2 * range).powi(2);

    let mut map = vec![0.0; n];
    for i in 0..n {
        let w = norm[i];
        let mx = bx[i] / w;
        let my = by[i] / w;
        let vx = (bxx[i] / w - mx * mx).max(0.0);
        let vy = (byy[i] / w - my * my).max(0.0);
        let cxy = bxy[i] / w - mx * my;
        map[i] = ((2.0 * mx * my + c1) * (2.0 * cxy + c2))
            / ((mx * mx + my * my + c1) * (vx + vy + c2));
    }
    Ok(map)
}

/// Mean windowed SSIM of `v` against `reference`.
pub fn ssim(v: &Volume3D, reference: &Volume3D) -> Result<f64> {
    let map = ssim_local_map(v, reference)?;
    Ok(map.iter().sum::<f64>() / map.len() as f64)
}

/// Per-voxel structural dissimilarity `(1 - local SSIM) / 2`.
pub fn dssim_map(v: &Volume3D, reference: &Volume3D) -> Result<Volume3D> {
    let map = ssim_local_map(v, reference)?;
    let mut out = Volume3D::zeros(&reference.grid());
    for (o, s) in out.data.iter_mut().zip(&map) {
        *o = (1.0 - s) / 2.0;
    }
    out.update_intensity_max();
    Ok(out)
}

/// Root-mean-square error normalized by the reference intensity range,
/// clipped to [0, 1]. Errors on a constant reference.
pub fn nrmse(v: &Volume3D, reference: &Volume3D) -> Result<f64> {
    check_same_shape(v, reference)?;
    let (lo, hi) = reference.min_max();
    if hi - lo <= 0.0 {
        return Err(Error::invalid("reference has zero intensity range"));
    }
    let mse = v
        .data
        .iter()
        .zip(&reference.data)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / v.data.len() as f64;
    Ok((mse.sqrt() / (hi - lo)).clamp(0.0, 1.0))
}
