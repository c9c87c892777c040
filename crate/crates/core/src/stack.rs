//! Multi-slice stacks: geometry, per-slice transforms, and the on-disk
//! directory format (per-slice raw float32 files plus a JSON manifest).

use crate::error::{Error, Result};
use crate::geometry::{RigidTransform, RigidTransformJson};
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Axial,
    Coronal,
    Sagittal,
}

impl Orientation {
    pub const ALL: [Orientation; 3] = [Orientation::Axial, Orientation::Coronal, Orientation::Sagittal];

    /// In-plane axes (u, v) and slice normal n in world coordinates.
    pub fn axes(&self) -> (Vector3<f64>, Vector3<f64>, Vector3<f64>) {
        match self {
            Orientation::Axial => (Vector3::x(), Vector3::y(), Vector3::z()),
            Orientation::Coronal => (Vector3::x(), Vector3::z(), Vector3::y()),
            Orientation::Sagittal => (Vector3::y(), Vector3::z(), Vector3::x()),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Orientation::Axial => "axial",
            Orientation::Coronal => "coronal",
            Orientation::Sagittal => "sagittal",
        }
    }
}

/// A single 2D slice, u-fastest then v.
#[derive(Debug, Clone, PartialEq)]
pub struct Slice2D {
    pub data: Vec<f64>,
    pub dims: [usize; 2],
}

impl Slice2D {
    pub fn zeros(dims: [usize; 2]) -> Self {
        Slice2D {
            data: vec![0.0; dims[0] * dims[1]],
            dims,
        }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i + self.dims[0] * j]
    }

    pub fn max(&self) -> f64 {
        self.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// An ordered stack of slices with acquisition geometry and per-slice motion.
/// Slices are indexed spatially; `acquisition_order[t]` gives the spatial
/// index acquired at temporal position `t`.
#[derive(Debug, Clone)]
pub struct SliceStack {
    pub orientation: Orientation,
    pub slices: Vec<Slice2D>,
    pub in_plane_spacing_mm: [f64; 2],
    pub slice_thickness_mm: f64,
    /// Slice-center offsets along the stack normal, relative to `center_mm`.
    pub slice_positions_mm: Vec<f64>,
    /// Stack center in world coordinates (shared rotation center).
    pub center_mm: Vector3<f64>,
    /// Acquisition time of each spatial slice (seconds).
    pub times_s: Vec<f64>,
    pub acquisition_order: Vec<usize>,
    pub true_transforms: Option<Vec<RigidTransform>>,
    pub est_transforms: Vec<RigidTransform>,
    /// True where the slice contains enough of the object to be usable.
    pub brain_mask: Vec<bool>,
}

impl SliceStack {
    pub fn n_slices(&self) -> usize {
        self.slices.len()
    }

    pub fn in_plane_px(&self) -> [usize; 2] {
        if self.slices.is_empty() {
            [0, 0]
        } else {
            self.slices[0].dims
        }
    }

    /// World position of pixel (i, j) of slice k at rest (no motion).
    pub fn pixel_world(&self, i: usize, j: usize, k: usize) -> Vector3<f64> {
        let (u, v, n) = self.orientation.axes();
        let [w, h] = self.in_plane_px();
        self.center_mm
            + u * ((i as f64 - 0.5 * (w as f64 - 1.0)) * self.in_plane_spacing_mm[0])
            + v * ((j as f64 - 0.5 * (h as f64 - 1.0)) * self.in_plane_spacing_mm[1])
            + n * self.slice_positions_mm[k]
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.slices.len();
        if self.slice_positions_mm.len() != n
            || self.times_s.len() != n
            || self.acquisition_order.len() != n
            || self.est_transforms.len() != n
            || self.brain_mask.len() != n
            || self.true_transforms.as_ref().is_some_and(|t| t.len() != n)
        {
            return Err(Error::invalid("stack field lengths disagree"));
        }
        let mut seen = vec![false; n];
        for &s in &self.acquisition_order {
            if s >= n || seen[s] {
                return Err(Error::invalid("acquisition_order is not a permutation"));
            }
            seen[s] = true;
        }
        for s in &self.slices {
            if s.dims != self.slices[0].dims {
                return Err(Error::invalid("slices have mixed dimensions"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct StackManifest {
    orientation: Orientation,
    n_slices: usize,
    in_plane_px: [usize; 2],
    in_plane_spacing_mm: [f64; 2],
    slice_thickness_mm: f64,
    slice_positions_mm: Vec<f64>,
    center_mm: [f64; 3],
    times_s: Vec<f64>,
    acquisition_order: Vec<usize>,
    brain_mask: Vec<bool>,
    est_transforms: Vec<RigidTransformJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    true_transforms: Option<Vec<RigidTransformJson>>,
    dtype: String,
}

pub fn save_stack(stack: &SliceStack, dir: &Path) -> Result<()> {
    stack.validate()?;
    std::fs::create_dir_all(dir)?;
    let manifest = StackManifest {
        orientation: stack.orientation,
        n_slices: stack.n_slices(),
        in_plane_px: stack.in_plane_px(),
        in_plane_spacing_mm: stack.in_plane_spacing_mm,
        slice_thickness_mm: stack.slice_thickness_mm,
        slice_positions_mm: stack.slice_positions_mm.clone(),
        center_mm: [stack.center_mm.x, stack.center_mm.y, stack.center_mm.z],
        times_s: stack.times_s.clone(),
        acquisition_order: stack.acquisition_order.clone(),
        brain_mask: stack.brain_mask.clone(),
        est_transforms: stack.est_transforms.iter().map(RigidTransformJson::from).collect(),
        true_transforms: stack
            .true_transforms
            .as_ref()
            .map(|ts| ts.iter().map(RigidTransformJson::from).collect()),
        dtype: "float32".into(),
    };
    std::fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    for (k, slice) in stack.slices.iter().enumerate() {
        let mut bytes = Vec::with_capacity(slice.data.len() * 4);
        for &x in &slice.data {
            bytes.extend_from_slice(&(x as f32).to_le_bytes());
        }
        std::fs::write(dir.join(format!("slice_{k:03}.raw")), bytes)?;
    }
    Ok(())
}

pub fn load_stack(dir: &Path) -> Result<SliceStack> {
    let manifest_path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&manifest_path).map_err(|e| {
        Error::invalid(format!("cannot read {}: {e}", manifest_path.display()))
    })?;
    let m: StackManifest =
        serde_json::from_str(&text).map_err(|e| Error::MalformedHeader(e.to_string()))?;
    if m.dtype != "float32" {
        return Err(Error::UnsupportedDtype(m.dtype));
    }
    let mut slices = Vec::with_capacity(m.n_slices);
    let expected = m.in_plane_px[0] * m.in_plane_px[1] * 4;
    for k in 0..m.n_slices {
        let bytes = std::fs::read(dir.join(format!("slice_{k:03}.raw")))?;
        if bytes.len() != expected {
            return Err(Error::SizeMismatch {
                expected,
                actual: bytes.len(),
            });
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect();
        slices.push(Slice2D {
            data,
            dims: m.in_plane_px,
        });
    }
    let stack = SliceStack {
        orientation: m.orientation,
        slices,
        in_plane_spacing_mm: m.in_plane_spacing_mm,
        slice_thickness_mm: m.slice_thickness_mm,
        slice_positions_mm: m.slice_positions_mm,
        center_mm: Vector3::from(m.center_mm),
        times_s: m.times_s,
        acquisition_order: m.acquisition_order,
        true_transforms: m
            .true_transforms
            .map(|ts| ts.iter().map(RigidTransform::from).collect()),
        est_transforms: m.est_transforms.iter().map(RigidTransform::from).collect(),
        brain_mask: m.brain_mask,
    };
    stack.validate()?;
    Ok(stack)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_stack() -> SliceStack {
        let n = 4;
        let dims = [6, 5];
        let slices: Vec<Slice2D> = (0..n)
            .map(|k| Slice2D {
                data: (0..dims[0] * dims[1])
                    .map(|i| ((i + k) as f64 * 0.125))
                    .collect(),
                dims,
            })
            .collect();
        SliceStack {
            orientation: Orientation::Coronal,
            slices,
            in_plane_spacing_mm: [1.5, 2.0],
            slice_thickness_mm: 3.0,
            slice_positions_mm: (0..n).map(|k| (k as f64 - 1.5) * 3.0).collect(),
            center_mm: Vector3::new(0.5, -1.0, 2.0),
            times_s: (0..n).map(|k| k as f64 * 0.8).collect(),
            acquisition_order: (0..n).collect(),
            true_transforms: Some(vec![RigidTransform::identity(); n]),
            est_transforms: vec![RigidTransform::identity(); n],
            brain_mask: vec![true, true, false, true],
        }
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let stack = toy_stack();
        save_stack(&stack, dir.path()).unwrap();
        let back = load_stack(dir.path()).unwrap();
        assert_eq!(back.slices, stack.slices);
        assert_eq!(back.brain_mask, stack.brain_mask);
        assert_eq!(back.acquisition_order, stack.acquisition_order);
        assert_eq!(back.slice_positions_mm, stack.slice_positions_mm);
        assert_eq!(back.center_mm, stack.center_mm);
        assert!(back.true_transforms.is_some());
    }

    #[test]
    fn validate_rejects_bad_permutation() {
        let mut stack = toy_stack();
        stack.acquisition_order = vec![0, 1, 1, 3];
        assert!(stack.validate().is_err());
    }

    #[test]
    fn validate_rejects_length_mismatch() {
        let mut stack = toy_stack();
        stack.brain_mask.pop();
        assert!(stack.validate().is_err());
    }

    #[test]
    fn pixel_world_uses_orientation_axes() {
        let stack = toy_stack();
        // coronal: u = x, v = z, n = y
        let p = stack.pixel_world(0, 0, 0);
        let c = stack.center_mm;
        assert_eq!(p.x, c.x - 2.5 * 1.5);
        assert_eq!(p.z, c.z - 2.0 * 2.0);
        assert_eq!(p.y, c.y + stack.slice_positions_mm[0]);
    }
}
