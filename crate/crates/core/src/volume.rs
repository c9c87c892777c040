//! Regular-grid 3D volumes: trilinear sampling, rigid resampling, and the
//! native file format.
//!
//! The native format is a raw little-endian float32 payload (x fastest, then
//! y, then z) plus a JSON sidecar holding `dims`, `spacing_mm`, `origin_mm`,
//! and `dtype`. `foo.raw` pairs with `foo.json`.

use crate::error::{Error, Result};
use crate::geometry::{apply_to_point, invert, RigidTransform};
use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

/// Grid geometry: voxel counts, spacing, and the world position of the
/// (0,0,0) voxel center. `origin: None` centers the grid on the world origin.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GridSpec {
    pub dims: [usize; 3],
    pub spacing_mm: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin_mm: Option<[f64; 3]>,
}

impl GridSpec {
    pub fn centered(dims: [usize; 3], spacing_mm: [f64; 3]) -> Self {
        GridSpec {
            dims,
            spacing_mm,
            origin_mm: None,
        }
    }

    pub fn isotropic(n: usize, spacing_mm: f64) -> Self {
        Self::centered([n, n, n], [spacing_mm; 3])
    }

    pub fn origin(&self) -> Vector3<f64> {
        match self.origin_mm {
            Some(o) => Vector3::from(o),
            None => Vector3::new(
                -0.5 * (self.dims[0] as f64 - 1.0) * self.spacing_mm[0],
                -0.5 * (self.dims[1] as f64 - 1.0) * self.spacing_mm[1],
                -0.5 * (self.dims[2] as f64 - 1.0) * self.spacing_mm[2],
            ),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|&d| d < 1) {
            return Err(Error::invalid(format!("grid dims must be >= 1: {:?}", self.dims)));
        }
        if self.spacing_mm.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::invalid(format!(
                "grid spacing must be > 0: {:?}",
                self.spacing_mm
            )));
        }
        Ok(())
    }
}

/// Scalar volume on a regular grid. Voxel `(x, y, z)` sits at world position
/// `origin + (x, y, z) .* spacing`; data is stored x-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume3D {
    pub data: Vec<f64>,
    pub dims: [usize; 3],
    pub spacing: Vector3<f64>,
    pub origin: Vector3<f64>,
    pub intensity_max: f64,
}

impl Volume3D {
    pub fn zeros(grid: &GridSpec) -> Self {
        let n = grid.dims[0] * grid.dims[1] * grid.dims[2];
        Volume3D {
            data: vec![0.0; n],
            dims: grid.dims,
            spacing: Vector3::from(grid.spacing_mm),
            origin: grid.origin(),
            intensity_max: 0.0,
        }
    }

    pub fn from_data(grid: &GridSpec, data: Vec<f64>) -> Result<Self> {
        grid.validate()?;
        let n = grid.dims[0] * grid.dims[1] * grid.dims[2];
        if data.len() != n {
            return Err(Error::SizeMismatch {
                expected: n,
                actual: data.len(),
            });
        }
        let mut v = Volume3D {
            data,
            dims: grid.dims,
            spacing: Vector3::from(grid.spacing_mm),
            origin: grid.origin(),
            intensity_max: 0.0,
        };
        v.update_intensity_max();
        Ok(v)
    }

    pub fn grid(&self) -> GridSpec {
        GridSpec {
            dims: self.dims,
            spacing_mm: [self.spacing.x, self.spacing.y, self.spacing.z],
            origin_mm: Some([self.origin.x, self.origin.y, self.origin.z]),
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn idx(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize, z: usize) -> f64 {
        self.data[self.idx(x, y, z)]
    }

    pub fn set(&mut self, x: usize, y: usize, z: usize, v: f64) {
        let i = self.idx(x, y, z);
        self.data[i] = v;
    }

    pub fn voxel_to_world(&self, x: usize, y: usize, z: usize) -> Vector3<f64> {
        self.origin
            + Vector3::new(
                x as f64 * self.spacing.x,
                y as f64 * self.spacing.y,
                z as f64 * self.spacing.z,
            )
    }

    /// World position of the grid center (also the default rotation center).
    pub fn world_center(&self) -> Vector3<f64> {
        self.origin
            + Vector3::new(
                0.5 * (self.dims[0] as f64 - 1.0) * self.spacing.x,
                0.5 * (self.dims[1] as f64 - 1.0) * self.spacing.y,
                0.5 * (self.dims[2] as f64 - 1.0) * self.spacing.z,
            )
    }

    pub fn update_intensity_max(&mut self) {
        self.intensity_max = self.data.iter().cloned().fold(0.0f64, f64::max);
    }

    /// Clamps negatives to zero and scales so the maximum intensity is 1.
    pub fn normalize(&mut self) {
        for v in &mut self.data {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        let max = self.data.iter().cloned().fold(0.0f64, f64::max);
        if max > 0.0 {
            for v in &mut self.data {
                *v /= max;
            }
        }
        self.intensity_max = if max > 0.0 { 1.0 } else { 0.0 };
    }

    pub fn min_max(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in &self.data {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }
}

/// Trilinear interpolation at a world point; regions outside the grid read
/// as zero (zero padding), including partial corner contributions at the rim.
pub fn trilinear_sample(v: &Volume3D, p_world: Vector3<f64>) -> f64 {
    let ci = (p_world - v.origin).component_div(&v.spacing);
    trilinear_at_index(v, ci.x, ci.y, ci.z)
}

#[inline]
pub(crate) fn trilinear_at_index(v: &Volume3D, cx: f64, cy: f64, cz: f64) -> f64 {
    let [nx, ny, nz] = v.dims;
    if cx <= -1.0 || cy <= -1.0 || cz <= -1.0 {
        return 0.0;
    }
    if cx >= nx as f64 || cy >= ny as f64 || cz >= nz as f64 {
        return 0.0;
    }
    let x0 = cx.floor();
    let y0 = cy.floor();
    let z0 = cz.floor();
    let fx = cx - x0;
    let fy = cy - y0;
    let fz = cz - z0;
    let (x0, y0, z0) = (x0 as i64, y0 as i64, z0 as i64);

    let mut acc = 0.0;
    for dz in 0..2i64 {
        let z = z0 + dz;
        if z < 0 || z >= nz as i64 {
            continue;
        }
        let wz = if dz == 0 { 1.0 - fz } else { fz };
        for dy in 0..2i64 {
            let y = y0 + dy;
            if y < 0 || y >= ny as i64 {
                continue;
            }
            let wy = if dy == 0 { 1.0 - fy } else { fy };
            for dx in 0..2i64 {
                let x = x0 + dx;
                if x < 0 || x >= nx as i64 {
                    continue;
                }
                let wx = if dx == 0 { 1.0 - fx } else { fx };
                acc += wx * wy * wz * v.data[x as usize + nx * (y as usize + ny * z as usize)];
            }
        }
    }
    acc
}

/// Resamples `v` through a rigid motion onto `target`: the output voxel at
/// world point `p` holds `v` sampled at `T^-1(p)`.
pub fn resample(v: &Volume3D, t: &RigidTransform, target: &GridSpec) -> Volume3D {
    let tinv = invert(t);
    let mut out = Volume3D::zeros(target);
    let [nx, ny, _] = out.dims;
    let origin = out.origin;
    let spacing = out.spacing;
    let plane = nx * ny;
    out.data
        .par_chunks_mut(plane)
        .enumerate()
        .for_each(|(z, slab)| {
            for y in 0..ny {
                for x in 0..nx {
                    let p = origin
                        + Vector3::new(
                            x as f64 * spacing.x,
                            y as f64 * spacing.y,
                            z as f64 * spacing.z,
                        );
                    slab[x + nx * y] = trilinear_sample(v, apply_to_point(&tinv, p));
                }
            }
        });
    out.update_intensity_max();
    out
}

#[derive(Debug, Serialize, Deserialize)]
struct VolumeHeader {
    dims: [usize; 3],
    spacing_mm: [f64; 3],
    origin_mm: [f64; 3],
    dtype: String,
}

fn resolve_pair(path: &Path) -> (PathBuf, PathBuf) {
    let base = match path.extension().and_then(|e| e.to_str()) {
        Some("raw") | Some("json") => path.with_extension(""),
        _ => path.to_path_buf(),
    };
    (base.with_extension("raw"), base.with_extension("json"))
}

/// Writes the raw float32 payload and JSON sidecar. Values are cast to f32.
pub fn save_volume(v: &Volume3D, path: &Path) -> Result<()> {
    let (raw_path, json_path) = resolve_pair(path);
    if let Some(parent) = raw_path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let header = VolumeHeader {
        dims: v.dims,
        spacing_mm: [v.spacing.x, v.spacing.y, v.spacing.z],
        origin_mm: [v.origin.x, v.origin.y, v.origin.z],
        dtype: "float32".into(),
    };
    std::fs::write(&json_path, serde_json::to_string_pretty(&header)?)?;
    let mut payload = Vec::with_capacity(v.data.len() * 4);
    for &x in &v.data {
        payload.extend_from_slice(&(x as f32).to_le_bytes());
    }
    let mut f = std::fs::File::create(&raw_path)?;
    f.write_all(&payload)?;
    Ok(())
}

/// Reads a volume written by [`save_volume`]. Errors on a malformed header,
/// payload/header size mismatch, or a datatype other than float32.
pub fn load_volume(path: &Path) -> Result<Volume3D> {
    let (raw_path, json_path) = resolve_pair(path);
    let header_text = std::fs::read_to_string(&json_path).map_err(|e| {
        Error::invalid(format!("cannot read header {}: {e}", json_path.display()))
    })?;
    let header: VolumeHeader = serde_json::from_str(&header_text)
        .map_err(|e| Error::MalformedHeader(e.to_string()))?;
    if header.dtype != "float32" {
        return Err(Error::UnsupportedDtype(header.dtype));
    }
    let grid = GridSpec {
        dims: header.dims,
        spacing_mm: header.spacing_mm,
        origin_mm: Some(header.origin_mm),
    };
    grid.validate()
        .map_err(|e| Error::MalformedHeader(e.to_string()))?;
    let n = header.dims[0] * header.dims[1] * header.dims[2];
    let mut f = std::fs::File::open(&raw_path)?;
    let mut bytes = Vec::new();
    f.read_to_end(&mut bytes)?;
    if bytes.len() != n * 4 {
        return Err(Error::SizeMismatch {
            expected: n * 4,
            actual: bytes.len(),
        });
    }
    let data: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Volume3D::from_data(&grid, data)
}
