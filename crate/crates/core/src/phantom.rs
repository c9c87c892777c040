//! Synthetic ellipsoid-shell phantoms used as ground-truth volumes.
//!
//! A phantom is a set of nested ellipsoid shells with alternating intensity,
//! plus seeded off-center blobs and a smooth intensity texture so that the
//! object is asymmetric about every axis and its orientation is observable.
//! Blobs and texture scale with `texture_amplitude`; at amplitude zero the
//! phantom reduces to the bare shells.

use crate::rng::CounterRng;
use crate::volume::{GridSpec, Volume3D};
use serde::{Deserialize, Serialize};

/// Ratios of the three semi-axes to `size_mm` (distinct on purpose so the
/// principal axes of the object are unambiguous).
pub const SEMI_AXIS_RATIOS: [f64; 3] = [0.50, 0.42, 0.36];

const N_BLOBS: usize = 6;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhantomSpec {
    /// Outer extent of the object along x, in mm.
    pub size_mm: f64,
    pub feature_seed: u64,
    pub n_shells: usize,
    /// In [0, 1]; scales blob and texture strength.
    pub texture_amplitude: f64,
    pub grid: GridSpec,
}

impl Default for PhantomSpec {
    fn default() -> Self {
        PhantomSpec {
            size_mm: 90.0,
            feature_seed: 7,
            n_shells: 3,
            texture_amplitude: 0.35,
            grid: GridSpec::centered([96, 96, 72], [1.6; 3]),
        }
    }
}

impl PhantomSpec {
    /// Acceptance-scale phantom: 36 mm object in a 48^3 grid at 1.25 mm.
    pub fn desk() -> Self {
        PhantomSpec {
            size_mm: 36.0,
            feature_seed: 7,
            n_shells: 3,
            texture_amplitude: 0.35,
            grid: GridSpec::isotropic(48, 1.25),
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut s = self.clone();
        s.size_mm *= factor;
        s
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.n_shells < 1 {
            return Err("n_shells must be >= 1".into());
        }
        if !(0.0..=1.0).contains(&self.texture_amplitude) {
            return Err("texture_amplitude must be in [0, 1]".into());
        }
        if !(self.size_mm > 0.0) {
            return Err("size_mm must be > 0".into());
        }
        Ok(())
    }
}

struct Blob {
    center: [f64; 3], // normalized ellipsoid coordinates
    radius: f64,
    amplitude: f64,
}

/// Shell intensity is a fixed formula (independent of the seed) so the
/// bare-shell phantom has an analytic per-voxel oracle.
pub fn shell_intensity(band: usize) -> f64 {
    if band % 2 == 0 {
        1.0
    } else {
        0.45
    }
}

pub fn make_phantom(spec: &PhantomSpec) -> Volume3D {
    let mut v = Volume3D::zeros(&spec.grid);
    let center = v.world_center();
    let semi = [
        SEMI_AXIS_RATIOS[0] * spec.size_mm,
        SEMI_AXIS_RATIOS[1] * spec.size_mm,
        SEMI_AXIS_RATIOS[2] * spec.size_mm,
    ];

    let mut rng = CounterRng::new(spec.feature_seed, "phantom-features");
    let blobs: Vec<Blob> = (0..N_BLOBS)
        .map(|_| {
            let dir = [
                rng.range(-0.6, 0.6),
                rng.range(-0.6, 0.6),
                rng.range(-0.6, 0.6),
            ];
            Blob {
                center: dir,
                radius: rng.range(0.12, 0.28),
                amplitude: rng.range(0.3, 0.6) * if rng.uniform() < 0.5 { -1.0 } else { 1.0 },
            }
        })
        .collect();
    let tex_freq = [
        rng.range(2.0, 4.0),
        rng.range(2.0, 4.0),
        rng.range(2.0, 4.0),
    ];
    let tex_phase = [
        rng.range(0.0, std::f64::consts::TAU),
        rng.range(0.0, std::f64::consts::TAU),
        rng.range(0.0, std::f64::consts::TAU),
    ];

    let [nx, ny, nz] = v.dims;
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let p = v.voxel_to_world(x, y, z) - center;
                // normalized ellipsoid coordinates
                let e = [p.x / semi[0], p.y / semi[1], p.z / semi[2]];
                let rho = (e[0] * e[0] + e[1] * e[1] + e[2] * e[2]).sqrt();
                if rho > 1.0 {
                    continue;
                }
                let band = ((rho * spec.n_shells as f64) as usize).min(spec.n_shells - 1);
                let mut val = shell_intensity(band);
                if spec.texture_amplitude > 0.0 {
                    for b in &blobs {
                        let dx = (e[0] - b.center[0]) / b.radius;
                        let dy = (e[1] - b.center[1]) / b.radius;
                        let dz = (e[2] - b.center[2]) / b.radius;
                        let q = dx * dx + dy * dy + dz * dz;
                        if q < 1.0 {
                            let bump = (1.0 - q) * (1.0 - q);
                            val += spec.texture_amplitude * b.amplitude * bump;
                        }
                    }
                    let tex = (tex_freq[0] * e[0] + tex_phase[0]).sin()
                        * (tex_freq[1] * e[1] + tex_phase[1]).sin()
                        * (tex_freq[2] * e[2] + tex_phase[2]).sin();
                    val += 0.12 * spec.texture_amplitude * tex;
                }
                let i = v.idx(x, y, z);
                v.data[i] = val.max(0.0);
            }
        }
    }
    v.normalize();
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_for_fixed_spec() {
        let spec = PhantomSpec::desk();
        let a = make_phantom(&spec);
        let b = make_phantom(&spec);
        assert_eq!(a.data, b.data);
    }

    #[test]
    fn single_shell_matches_analytic_membership() {
        let spec = PhantomSpec {
            n_shells: 1,
            texture_amplitude: 0.0,
            ..PhantomSpec::desk()
        };
        let v = make_phantom(&spec);
        let center = v.world_center();
        let semi = [
            SEMI_AXIS_RATIOS[0] * spec.size_mm,
            SEMI_AXIS_RATIOS[1] * spec.size_mm,
            SEMI_AXIS_RATIOS[2] * spec.size_mm,
        ];
        for z in 0..v.dims[2] {
            for y in 0..v.dims[1] {
                for x in 0..v.dims[0] {
                    let p = v.voxel_to_world(x, y, z) - center;
                    let rho2 = (p.x / semi[0]).powi(2)
                        + (p.y / semi[1]).powi(2)
                        + (p.z / semi[2]).powi(2);
                    let expected = if rho2 <= 1.0 { 1.0 } else { 0.0 };
                    assert_eq!(v.at(x, y, z), expected, "voxel ({x},{y},{z})");
                }
            }
        }
    }

    #[test]
    fn support_strictly_inside_grid() {
        let v = make_phantom(&PhantomSpec::desk());
        let [nx, ny, nz] = v.dims;
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    if x == 0 || y == 0 || z == 0 || x == nx - 1 || y == ny - 1 || z == nz - 1 {
                        assert_eq!(v.at(x, y, z), 0.0);
                    }
                }
            }
        }
        assert!(v.data.iter().any(|&x| x > 0.0));
    }

    #[test]
    fn normalized_to_unit_max() {
        let v = make_phantom(&PhantomSpec::desk());
        let (lo, hi) = v.min_max();
        assert!(lo >= 0.0);
        assert_eq!(hi, 1.0);
    }
}
