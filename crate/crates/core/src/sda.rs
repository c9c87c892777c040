//! Scattered data approximation: fast volumetric reconstruction from
//! transformed slices.
//!
//! Every slice pixel is mapped through its motion estimate into the
//! canonical volume frame and deposited at the nearest grid voxel; the
//! intensity and hit-count accumulators are then blurred with an isotropic
//! Gaussian and divided (normalized convolution), so overlap density does
//! not bias intensities. The blur width follows a schedule that decreases
//! linearly from `sigma_first_mm` on the first iteration to `sigma_last_mm`
//! on the last.

use crate::error::{Error, Result};
use crate::evaluation::blur_axis;
use crate::geometry::{apply_to_point, invert, RigidTransform};
use crate::stack::SliceStack;
use crate::volume::{GridSpec, Volume3D};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SdaConfig {
    pub sigma_first_mm: f64,
    pub sigma_last_mm: f64,
    pub n_iterations: usize,
    pub target_grid: GridSpec,
    /// Divide the blurred intensity by the blurred hit count. Disabling
    /// reverts to a plain blurred deposit, which is biased by sample density.
    pub density_normalized: bool,
    /// Counts at or below this level produce zero output voxels.
    pub count_epsilon: f64,
}

impl SdaConfig {
    pub fn with_grid(target_grid: GridSpec) -> Self {
        SdaConfig {
            sigma_first_mm: 0.8,
            sigma_last_mm: 0.52,
            n_iterations: 4,
            target_grid,
            density_normalized: true,
            count_epsilon: 1e-6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_last_mm > 0.0) || self.sigma_first_mm < self.sigma_last_mm {
            return Err(Error::invalid(
                "need sigma_first_mm >= sigma_last_mm > 0",
            ));
        }
        if self.n_iterations < 1 {
            return Err(Error::invalid("n_iterations must be >= 1"));
        }
        self.target_grid.validate()
    }
}

/// Blur width for a 1-based iteration index: linear from `sigma_first_mm`
/// down to `sigma_last_mm`. A single-iteration schedule uses the first
/// width.
pub fn sigma_schedule(iteration: usize, cfg: &SdaConfig) -> Result<f64> {
    if iteration < 1 || iteration > cfg.n_iterations {
        return Err(Error::invalid(format!(
            "iteration {iteration} out of range 1..={}",
            cfg.n_iterations
        )));
    }
    if cfg.n_iterations == 1 {
        return Ok(cfg.sigma_first_mm);
    }
    let f = (iteration - 1) as f64 / (cfg.n_iterations - 1) as f64;
    Ok(cfg.sigma_first_mm + (cfg.sigma_last_mm - cfg.sigma_first_mm) * f)
}

fn gaussian_kernel_vox(sigma_vox: f64) -> Vec<f64> {
    let radius = (3.0 * sigma_vox).ceil().max(1.0) as usize;
    let mut k: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let t = i as f64 - radius as f64;
            (-0.5 * (t / sigma_vox).powi(2)).exp()
        })
        .collect();
    let sum: f64 = k.iter().sum();
    for w in &mut k {
        *w /= sum;
    }
    k
}

fn blur3_anisotropic(data: &[f64], dims: [usize; 3], sigma_mm: f64, spacing: [f64; 3]) -> Vec<f64> {
    let mut out = data.to_vec();
    for axis in 0..3 {
        let kernel = gaussian_kernel_vox(sigma_mm / spacing[axis]);
        out = blur_axis(&out, dims, axis, &kernel);
    }
    out
}

/// Reconstructs a volume from slices and their per-slice transforms at a
/// fixed blur width.
pub fn sda_reconstruct(
    stacks: &[&SliceStack],
    transforms: &[Vec<RigidTransform>],
    sigma_mm: f64,
    cfg: &SdaConfig,
) -> Result<Volume3D> {
    cfg.validate()?;
    if !(sigma_mm > 0.0) {
        return Err(Error::invalid("sigma_mm must be > 0"));
    }
    if stacks.is_empty() || stacks.iter().all(|s| s.n_slices() == 0) {
        return Err(Error::invalid("no slices to reconstruct from"));
    }
    if stacks.len() != transforms.len() {
        return Err(Error::invalid("one transform list per stack required"));
    }
    let mut out = Volume3D::zeros(&cfg.target_grid);
    let [nx, ny, nz] = out.dims;
    let origin = out.origin;
    let spacing = out.spacing;
    let mut intensity = vec![0.0f64; out.len()];
    let mut count = vec![0.0f64; out.len()];

    for (stack, stack_transforms) in stacks.iter().zip(transforms) {
        if stack_transforms.len() != stack.n_slices() {
            return Err(Error::invalid("transform count != slice count"));
        }
        let [w, h] = stack.in_plane_px();
        for (k, slice) in stack.slices.iter().enumerate() {
            let tinv = invert(&stack_transforms[k]);
            for j in 0..h {
                for i in 0..w {
                    let p = stack.pixel_world(i, j, k);
                    let q = apply_to_point(&tinv, p);
                    let gx = ((q.x - origin.x) / spacing.x).round();
                    let gy = ((q.y - origin.y) / spacing.y).round();
                    let gz = ((q.z - origin.z) / spacing.z).round();
                    if gx < 0.0
                        || gy < 0.0
                        || gz < 0.0
                        || gx >= nx as f64
                        || gy >= ny as f64
                        || gz >= nz as f64
                    {
                        continue;
                    }
                    let idx = gx as usize + nx * (gy as usize + ny * gz as usize);
                    intensity[idx] += slice.at(i, j);
                    count[idx] += 1.0;
                }
            }
        }
    }

    let spacing_arr = [spacing.x, spacing.y, spacing.z];
    let blurred_intensity = blur3_anisotropic(&intensity, out.dims, sigma_mm, spacing_arr);
    if cfg.density_normalized {
        let blurred_count = blur3_anisotropic(&count, out.dims, sigma_mm, spacing_arr);
        for i in 0..out.data.len() {
            out.data[i] = if blurred_count[i] > cfg.count_epsilon {
                blurred_intensity[i] / blurred_count[i]
            } else {
                0.0
            };
        }
    } else {
        out.data = blurred_intensity;
    }
    out.update_intensity_max();
    Ok(out)
}

/// Convenience wrapper using the stacks' current transform estimates.
pub fn sda_from_estimates(
    stacks: &[&SliceStack],
    sigma_mm: f64,
    cfg: &SdaConfig,
) -> Result<Volume3D> {
    let transforms: Vec<Vec<RigidTransform>> =
        stacks.iter().map(|s| s.est_transforms.clone()).collect();
    sda_reconstruct(stacks, &transforms, sigma_mm, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::acquisition::{acquire_stack, AcquisitionConfig};
    use crate::motionsim::MotionTrajectory;
    use crate::phantom::{make_phantom, PhantomSpec, SEMI_AXIS_RATIOS};
    use crate::stack::{Orientation, Slice2D};
    use crate::volume::GridSpec;
    use approx::assert_abs_diff_eq;
    use nalgebra::Vector3;

    fn desk_grid() -> GridSpec {
        GridSpec::isotropic(48, 1.25)
    }

    #[test]
    fn schedule_endpoints_and_interior() {
        let cfg = SdaConfig::with_grid(desk_grid());
        assert_eq!(sigma_schedule(1, &cfg).unwrap(), 0.8);
        assert_eq!(sigma_schedule(4, &cfg).unwrap(), 0.52);
        assert_abs_diff_eq!(
            sigma_schedule(2, &cfg).unwrap(),
            0.8 + (0.52 - 0.8) / 3.0,
            epsilon = 1e-12
        );
        let mut prev = f64::INFINITY;
        for k in 1..=4 {
            let s = sigma_schedule(k, &cfg).unwrap();
            assert!(s <= prev);
            prev = s;
        }
        assert!(sigma_schedule(0, &cfg).is_err());
        assert!(sigma_schedule(5, &cfg).is_err());
    }

    fn single_pixel_stack(value: f64) -> SliceStack {
        SliceStack {
            orientation: Orientation::Axial,
            slices: vec![Slice2D {
                data: vec![value],
                dims: [1, 1],
            }],
            in_plane_spacing_mm: [1.25, 1.25],
            slice_thickness_mm: 1.25,
            slice_positions_mm: vec![0.8], // lands near a known voxel
            center_mm: Vector3::zeros(),
            times_s: vec![0.0],
            acquisition_order: vec![0],
            true_transforms: None,
            est_transforms: vec![crate::geometry::RigidTransform::identity()],
            brain_mask: vec![true],
        }
    }

    #[test]
    fn single_deposit_normalizes_back_to_its_intensity() {
        let stack = single_pixel_stack(0.73);
        let cfg = SdaConfig::with_grid(desk_grid());
        let transforms = vec![vec![crate::geometry::RigidTransform::identity()]];
        let v = sda_reconstruct(&[&stack], &transforms, 0.8, &cfg).unwrap();
        // count-normalization cancels the kernel wherever the count clears
        // the epsilon, and leaves exact zeros elsewhere
        let mut support = 0;
        for &x in &v.data {
            if x != 0.0 {
                assert_abs_diff_eq!(x, 0.73, epsilon = 1e-12);
                support += 1;
            }
        }
        assert!(support > 0);
    }

    #[test]
    fn non_normalized_path_is_a_blurred_deposit() {
        let stack = single_pixel_stack(1.0);
        let mut cfg = SdaConfig::with_grid(desk_grid());
        cfg.density_normalized = false;
        let transforms = vec![vec![crate::geometry::RigidTransform::identity()]];
        let v = sda_reconstruct(&[&stack], &transforms, 0.8, &cfg).unwrap();
        // kernel is normalized, so the total deposit mass is preserved
        let total: f64 = v.data.iter().sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-9);
        let peak = v.data.iter().cloned().fold(0.0f64, f64::max);
        assert!(peak < 1.0, "blurred peak {peak} should spread mass");
    }

    fn three_orthogonal_stacks(
        v: &crate::volume::Volume3D,
        cfg: &AcquisitionConfig,
    ) -> Vec<SliceStack> {
        let traj = MotionTrajectory::identity(cfg.n_slices, 0.8);
        Orientation::ALL
            .iter()
            .map(|&o| acquire_stack(v, &traj, o, cfg).unwrap())
            .collect()
    }

    #[test]
    fn uniform_ball_interior_within_two_percent() {
        let spec = PhantomSpec {
            n_shells: 1,
            texture_amplitude: 0.0,
            ..PhantomSpec::desk()
        };
        let ball = make_phantom(&spec);
        let acq = AcquisitionConfig::desk();
        let stacks = three_orthogonal_stacks(&ball, &acq);
        let refs: Vec<&SliceStack> = stacks.iter().collect();
        let transforms: Vec<Vec<crate::geometry::RigidTransform>> = stacks
            .iter()
            .map(|s| s.true_transforms.clone().unwrap())
            .collect();
        let cfg = SdaConfig::with_grid(desk_grid());
        let recon = sda_reconstruct(&refs, &transforms, 0.52, &cfg).unwrap();
        let center = ball.world_center();
        let semi = [
            SEMI_AXIS_RATIOS[0] * spec.size_mm,
            SEMI_AXIS_RATIOS[1] * spec.size_mm,
            SEMI_AXIS_RATIOS[2] * spec.size_mm,
        ];
        let mut checked = 0;
        for z in 0..48 {
            for y in 0..48 {
                for x in 0..48 {
                    let p = ball.voxel_to_world(x, y, z) - center;
                    let rho2 = (p.x / semi[0]).powi(2)
                        + (p.y / semi[1]).powi(2)
                        + (p.z / semi[2]).powi(2);
                    if rho2 < 0.49 {
                        let err = (recon.at(x, y, z) - 1.0).abs();
                        assert!(err < 0.02, "voxel ({x},{y},{z}) err {err}");
                        checked += 1;
                    }
                }
            }
        }
        assert!(checked > 500);
    }

    #[test]
    fn slice_order_invariance() {
        let phantom = make_phantom(&PhantomSpec::desk());
        let acq = AcquisitionConfig::desk();
        let stacks = three_orthogonal_stacks(&phantom, &acq);
        let cfg = SdaConfig::with_grid(desk_grid());
        let transforms: Vec<Vec<crate::geometry::RigidTransform>> = stacks
            .iter()
            .map(|s| s.true_transforms.clone().unwrap())
            .collect();
        let refs: Vec<&SliceStack> = stacks.iter().collect();
        let a = sda_reconstruct(&refs, &transforms, 0.6, &cfg).unwrap();

        // permute stack order
        let refs_perm: Vec<&SliceStack> = vec![&stacks[2], &stacks[0], &stacks[1]];
        let transforms_perm = vec![
            transforms[2].clone(),
            transforms[0].clone(),
            transforms[1].clone(),
        ];
        let b = sda_reconstruct(&refs_perm, &transforms_perm, 0.6, &cfg).unwrap();
        for (x, y) in a.data.iter().zip(&b.data) {
            assert_abs_diff_eq!(x, y, epsilon = 1e-12);
        }
    }

    #[test]
    fn linear_in_slice_intensities() {
        let stack_a = single_pixel_stack(0.3);
        let stack_b = single_pixel_stack(0.5);
        let stack_sum = single_pixel_stack(0.3 * 2.0 + 0.5 * 3.0);
        let mut cfg = SdaConfig::with_grid(desk_grid());
        cfg.density_normalized = false; // the normalized path is a ratio, not linear
        let t = vec![vec![crate::geometry::RigidTransform::identity()]];
        let va = sda_reconstruct(&[&stack_a], &t, 0.8, &cfg).unwrap();
        let vb = sda_reconstruct(&[&stack_b], &t, 0.8, &cfg).unwrap();
        let vs = sda_reconstruct(&[&stack_sum], &t, 0.8, &cfg).unwrap();
        for i in 0..vs.data.len() {
            assert_abs_diff_eq!(
                vs.data[i],
                2.0 * va.data[i] + 3.0 * vb.data[i],
                epsilon = 1e-10
            );
        }
    }

    #[test]
    fn refinement_decreases_error_on_smooth_volume() {
        // smooth test function on the desk grid
        let grid = desk_grid();
        let mut smooth = crate::volume::Volume3D::zeros(&grid);
        let c = smooth.world_center();
        for z in 0..48 {
            for y in 0..48 {
                for x in 0..48 {
                    let p = smooth.voxel_to_world(x, y, z) - c;
                    let r2 = p.norm_squared() / (18.0f64 * 18.0);
                    let i = smooth.idx(x, y, z);
                    smooth.data[i] = (-r2).exp();
                }
            }
        }
        smooth.update_intensity_max();

        let mut errors = Vec::new();
        for level in 0..3 {
            let factor = 1 << level; // 1, 2, 4
            let mut acq = AcquisitionConfig::desk();
            acq.thickness_mm = 1.25;
            acq.psf_sigma_mm = Some(1e-6);
            acq.n_slices = 48;
            acq.in_plane_px = [48 * factor, 48 * factor];
            acq.in_plane_spacing_mm = [1.25 / factor as f64, 1.25 / factor as f64];
            let stacks = three_orthogonal_stacks(&smooth, &acq);
            let refs: Vec<&SliceStack> = stacks.iter().collect();
            let transforms: Vec<Vec<crate::geometry::RigidTransform>> = stacks
                .iter()
                .map(|s| s.true_transforms.clone().unwrap())
                .collect();
            let cfg = SdaConfig::with_grid(grid.clone());
            let sigma = 0.8 / factor as f64;
            let recon = sda_reconstruct(&refs, &transforms, sigma, &cfg).unwrap();
            let err = crate::evaluation::nrmse(&recon, &smooth).unwrap();
            errors.push(err);
        }
        assert!(
            errors[1] < errors[0] && errors[2] < errors[1],
            "errors not monotone: {errors:?}"
        );
    }

    #[test]
    fn empty_input_is_error() {
        let cfg = SdaConfig::with_grid(desk_grid());
        assert!(sda_reconstruct(&[], &[], 0.8, &cfg).is_err());
    }
}
