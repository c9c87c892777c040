//! Forward acquisition model: motion-corrupted multi-slice stacks from a
//! volume and a motion trajectory.
//!
//! Each in-plane pixel integrates the moved volume along the slice normal
//! with a Gaussian through-plane profile (FWHM = slice thickness unless
//! overridden), evaluated by a normalized fixed-point quadrature over
//! +-2.5 sigma. In-plane blur is not modeled: multi-slice acquisition
//! freezes in-plane motion and resolution.

use crate::error::{Error, Result};
use crate::geometry::{apply_to_point, invert, RigidTransform};
use crate::motionsim::MotionTrajectory;
use crate::rng::CounterRng;
use crate::stack::{Orientation, Slice2D, SliceStack};
use crate::volume::{trilinear_sample, Volume3D};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// FWHM-to-sigma conversion for a Gaussian profile.
pub const FWHM_TO_SIGMA: f64 = 2.354_820_045_030_949_3;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AcquisitionConfig {
    pub n_slices: usize,
    pub thickness_mm: f64,
    /// Through-plane Gaussian std; `None` derives FWHM = thickness.
    pub psf_sigma_mm: Option<f64>,
    pub interleaved: bool,
    /// Additive Gaussian noise std (intensity units); 0 disables noise.
    pub noise_sigma: f64,
    pub noise_seed: u64,
    pub in_plane_px: [usize; 2],
    pub in_plane_spacing_mm: [f64; 2],
    /// Points of the through-plane quadrature rule (odd).
    pub quadrature_points: usize,
    /// Half-width of the quadrature support in sigmas.
    pub quadrature_halfwidth_sigmas: f64,
    /// A slice is marked as containing the object when at least this pixel
    /// fraction exceeds `object_intensity_fraction` of the volume maximum.
    pub object_pixel_fraction: f64,
    pub object_intensity_fraction: f64,
}

impl Default for AcquisitionConfig {
    fn default() -> Self {
        AcquisitionConfig {
            n_slices: 24,
            thickness_mm: 4.0,
            psf_sigma_mm: None,
            interleaved: false,
            noise_sigma: 0.0,
            noise_seed: 0,
            in_plane_px: [48, 48],
            in_plane_spacing_mm: [2.0, 2.0],
            quadrature_points: 7,
            quadrature_halfwidth_sigmas: 2.5,
            object_pixel_fraction: 0.01,
            object_intensity_fraction: 0.05,
        }
    }
}

impl AcquisitionConfig {
    /// Acceptance-scale protocol matched to the 48^3 @ 1.25 mm desk world.
    pub fn desk() -> Self {
        AcquisitionConfig {
            thickness_mm: 2.5,
            in_plane_spacing_mm: [1.25, 1.25],
            ..AcquisitionConfig::default()
        }
    }

    pub fn psf_sigma(&self) -> f64 {
        self.psf_sigma_mm
            .unwrap_or(self.thickness_mm / FWHM_TO_SIGMA)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_slices < 1 {
            return Err(Error::invalid("n_slices must be >= 1"));
        }
        if !(self.thickness_mm > 0.0) {
            return Err(Error::invalid("thickness_mm must be > 0"));
        }
        if !(self.psf_sigma() > 0.0) {
            return Err(Error::invalid("psf_sigma_mm must be > 0"));
        }
        if self.quadrature_points == 0 || self.quadrature_points % 2 == 0 {
            return Err(Error::invalid("quadrature_points must be odd and > 0"));
        }
        if self.in_plane_px.iter().any(|&p| p == 0)
            || self.in_plane_spacing_mm.iter().any(|&s| !(s > 0.0))
        {
            return Err(Error::invalid("in-plane geometry must be positive"));
        }
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::invalid("noise_sigma must be >= 0"));
        }
        Ok(())
    }
}

/// Normalized quadrature offsets and weights along the slice normal.
pub fn psf_quadrature(sigma: f64, points: usize, halfwidth_sigmas: f64) -> Vec<(f64, f64)> {
    if points == 1 {
        return vec![(0.0, 1.0)];
    }
    let half = halfwidth_sigmas * sigma;
    let mut quad: Vec<(f64, f64)> = (0..points)
        .map(|j| {
            let t = -half + 2.0 * half * j as f64 / (points - 1) as f64;
            (t, (-0.5 * (t / sigma).powi(2)).exp())
        })
        .collect();
    let total: f64 = quad.iter().map(|(_, w)| w).sum();
    for (_, w) in &mut quad {
        *w /= total;
    }
    quad
}

/// Rest-position geometry of a stack (no data yet).
fn stack_shell(v: &Volume3D, orientation: Orientation, cfg: &AcquisitionConfig) -> SliceStack {
    let n = cfg.n_slices;
    let center = v.world_center();
    SliceStack {
        orientation,
        slices: vec![Slice2D::zeros(cfg.in_plane_px); n],
        in_plane_spacing_mm: cfg.in_plane_spacing_mm,
        slice_thickness_mm: cfg.thickness_mm,
        slice_positions_mm: (0..n)
            .map(|k| (k as f64 - 0.5 * (n as f64 - 1.0)) * cfg.thickness_mm)
            .collect(),
        center_mm: center,
        times_s: vec![0.0; n],
        acquisition_order: (0..n).collect(),
        true_transforms: None,
        est_transforms: vec![RigidTransform::identity_about(center); n],
        brain_mask: vec![false; n],
    }
}

/// Acquires one slice of the volume moved by `t_s`.
pub fn acquire_slice(
    v: &Volume3D,
    t_s: &RigidTransform,
    stack: &SliceStack,
    slice_index: usize,
    cfg: &AcquisitionConfig,
) -> Result<Slice2D> {
    if slice_index >= stack.n_slices() {
        return Err(Error::invalid(format!(
            "slice_index {slice_index} out of range for {} slices",
            stack.n_slices()
        )));
    }
    let quad = psf_quadrature(
        cfg.psf_sigma(),
        cfg.quadrature_points,
        cfg.quadrature_halfwidth_sigmas,
    );
    let mut slice = Slice2D::zeros(stack.in_plane_px());
    acquire_slice_into(v, t_s, stack, slice_index, &quad, &mut slice.data);
    if cfg.noise_sigma > 0.0 {
        let mut rng = CounterRng::new(cfg.noise_seed, "acquisition-noise")
            .substream(slice_index as u64);
        for p in &mut slice.data {
            *p += cfg.noise_sigma * rng.normal();
        }
    }
    Ok(slice)
}

/// Noise-free PSF-weighted sampling shared by acquisition, registration,
/// and the reconstruction forward operator.
pub(crate) fn acquire_slice_into(
    v: &Volume3D,
    t_s: &RigidTransform,
    stack: &SliceStack,
    slice_index: usize,
    quad: &[(f64, f64)],
    out: &mut [f64],
) {
    let tinv = invert(t_s);
    let (_, _, normal) = stack.orientation.axes();
    let [w, h] = stack.in_plane_px();
    for j in 0..h {
        for i in 0..w {
            let p0 = stack.pixel_world(i, j, slice_index);
            let mut acc = 0.0;
            for &(t, wt) in quad {
                acc += wt * trilinear_sample(v, apply_to_point(&tinv, p0 + normal * t));
            }
            out[i + w * j] = acc;
        }
    }
}

/// Temporal acquisition order for a stack of `n` slices.
pub fn acquisition_order(n: usize, interleaved: bool) -> Vec<usize> {
    if interleaved {
        let mut order: Vec<usize> = (0..n).step_by(2).collect();
        order.extend((1..n).step_by(2));
        order
    } else {
        (0..n).collect()
    }
}

/// Acquires a full motion-corrupted stack. Slice `s` (spatial index) uses
/// the trajectory sample at its temporal position.
pub fn acquire_stack(
    v: &Volume3D,
    traj: &MotionTrajectory,
    orientation: Orientation,
    cfg: &AcquisitionConfig,
) -> Result<SliceStack> {
    cfg.validate()?;
    if traj.len() != cfg.n_slices {
        return Err(Error::invalid(format!(
            "trajectory length {} != n_slices {}",
            traj.len(),
            cfg.n_slices
        )));
    }
    let mut stack = stack_shell(v, orientation, cfg);
    let order = acquisition_order(cfg.n_slices, cfg.interleaved);
    let mut temporal_pos = vec![0usize; cfg.n_slices];
    for (t, &s) in order.iter().enumerate() {
        temporal_pos[s] = t;
    }
    let center = stack.center_mm;
    let true_transforms: Vec<RigidTransform> = (0..cfg.n_slices)
        .map(|s| traj.transform(temporal_pos[s], center))
        .collect();
    stack.times_s = (0..cfg.n_slices)
        .map(|s| traj.times_s[temporal_pos[s]])
        .collect();
    stack.acquisition_order = order;

    let quad = psf_quadrature(
        cfg.psf_sigma(),
        cfg.quadrature_points,
        cfg.quadrature_halfwidth_sigmas,
    );
    let shell = stack.clone();
    let slices: Vec<Slice2D> = (0..cfg.n_slices)
        .into_par_iter()
        .map(|s| {
            let mut slice = Slice2D::zeros(cfg.in_plane_px);
            acquire_slice_into(v, &true_transforms[s], &shell, s, &quad, &mut slice.data);
            if cfg.noise_sigma > 0.0 {
                let mut rng = CounterRng::new(cfg.noise_seed, "acquisition-noise")
                    .substream(s as u64);
                for p in &mut slice.data {
                    *p += cfg.noise_sigma * rng.normal();
                }
            }
            slice
        })
        .collect();

    let object_level = cfg.object_intensity_fraction * v.intensity_max;
    stack.brain_mask = slices
        .iter()
        .map(|slice| {
            let hits = slice.data.iter().filter(|&&p| p > object_level).count();
            hits as f64 >= cfg.object_pixel_fraction * slice.data.len() as f64
        })
        .collect();
    stack.slices = slices;
    stack.true_transforms = Some(true_transforms);
    Ok(stack)
}

fn take_indices(stack: &SliceStack, keep: &[usize]) -> SliceStack {
    // acquisition order within the substack follows acquisition times
    let mut order: Vec<usize> = (0..keep.len()).collect();
    order.sort_by(|&a, &b| {
        stack.times_s[keep[a]]
            .partial_cmp(&stack.times_s[keep[b]])
            .unwrap()
    });
    SliceStack {
        orientation: stack.orientation,
        slices: keep.iter().map(|&s| stack.slices[s].clone()).collect(),
        in_plane_spacing_mm: stack.in_plane_spacing_mm,
        slice_thickness_mm: stack.slice_thickness_mm,
        slice_positions_mm: keep.iter().map(|&s| stack.slice_positions_mm[s]).collect(),
        center_mm: stack.center_mm,
        times_s: keep.iter().map(|&s| stack.times_s[s]).collect(),
        acquisition_order: order,
        true_transforms: stack
            .true_transforms
            .as_ref()
            .map(|ts| keep.iter().map(|&s| ts[s]).collect()),
        est_transforms: keep.iter().map(|&s| stack.est_transforms[s]).collect(),
        brain_mask: keep.iter().map(|&s| stack.brain_mask[s]).collect(),
    }
}

/// Splits an interleaved stack into its two temporally continuous series
/// (odd and even spatial indices), each with doubled slice gap.
pub fn deinterleave(stack: &SliceStack) -> Result<(SliceStack, SliceStack)> {
    let n = stack.n_slices();
    if n < 2 {
        return Err(Error::invalid("deinterleave needs at least 2 slices"));
    }
    let evens: Vec<usize> = (0..n).step_by(2).collect();
    let odds: Vec<usize> = (1..n).step_by(2).collect();
    Ok((take_indices(stack, &evens), take_indices(stack, &odds)))
}

/// Recombines two deinterleaved substacks into the original layout by
/// alternating spatial indices (`a` first).
pub fn interleave(a: &SliceStack, b: &SliceStack) -> Result<SliceStack> {
    if a.orientation != b.orientation
        || a.in_plane_px() != b.in_plane_px()
        || (a.n_slices() as i64 - b.n_slices() as i64).abs() > 1
    {
        return Err(Error::invalid("substacks are not compatible"));
    }
    let n = a.n_slices() + b.n_slices();
    let mut keep = Vec::with_capacity(n);
    for i in 0..a.n_slices().max(b.n_slices()) {
        if i < a.n_slices() {
            keep.push((0usize, i));
        }
        if i < b.n_slices() {
            keep.push((1usize, i));
        }
    }
    let pick = |f: &dyn Fn(&SliceStack) -> Vec<f64>| -> Vec<f64> {
        keep.iter()
            .map(|&(which, i)| if which == 0 { f(a)[i] } else { f(b)[i] })
            .collect()
    };
    let merged = SliceStack {
        orientation: a.orientation,
        slices: keep
            .iter()
            .map(|&(which, i)| {
                if which == 0 {
                    a.slices[i].clone()
                } else {
                    b.slices[i].clone()
                }
            })
            .collect(),
        in_plane_spacing_mm: a.in_plane_spacing_mm,
        slice_thickness_mm: a.slice_thickness_mm,
        slice_positions_mm: pick(&|s: &SliceStack| s.slice_positions_mm.clone()),
        center_mm: a.center_mm,
        times_s: pick(&|s: &SliceStack| s.times_s.clone()),
        acquisition_order: {
            let times = pick(&|s: &SliceStack| s.times_s.clone());
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&x, &y| times[x].partial_cmp(&times[y]).unwrap());
            order
        },
        true_transforms: match (&a.true_transforms, &b.true_transforms) {
            (Some(ta), Some(tb)) => Some(
                keep.iter()
                    .map(|&(which, i)| if which == 0 { ta[i] } else { tb[i] })
                    .collect(),
            ),
            _ => None,
        },
        est_transforms: keep
            .iter()
            .map(|&(which, i)| {
                if which == 0 {
                    a.est_transforms[i]
                } else {
                    b.est_transforms[i]
                }
            })
            .collect(),
        brain_mask: keep
            .iter()
            .map(|&(which, i)| if which == 0 { a.brain_mask[i] } else { b.brain_mask[i] })
            .collect(),
    };
    merged.validate()?;
    Ok(merged)
}
