//! Deterministic generators for validation geometries and category fixtures.

use serde::{Deserialize, Serialize};

use crate::voxel::{Axis, VoxelImage, SOLID};
use crate::{Error, Result};

/// Geometry family of a synthetic sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum GeometryKind {
    /// One solid sphere of the given diameter centered in the unit cube;
    /// periodic boundary conditions tile it into an infinite array.
    SphereArray { diameter: f64 },
    /// Axis-aligned square fluid duct of `width` voxels through a solid block.
    Channel { axis: Axis, width: usize },
    /// Channel whose duct is interrupted by a porous slab spanning the whole
    /// cross-section. `slab_phi = 100` produces a solid plug.
    BlockedChannel {
        axis: Axis,
        width: usize,
        slab_phi: u8,
        slab_thickness: usize,
    },
    /// Constant-porosity slabs stacked along an axis; `(thickness, phi)`
    /// thicknesses must fill the box exactly.
    Layered { axis: Axis, layers: Vec<(usize, u8)> },
    /// Uniform porosity everywhere.
    Homogeneous { phi: u8 },
}

/// A fully specified synthetic sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometrySpec {
    pub dims: [usize; 3],
    pub kind: GeometryKind,
}

impl GeometrySpec {
    pub fn cube(n: usize, kind: GeometryKind) -> Self {
        Self { dims: [n, n, n], kind }
    }
}

fn check_value(phi: u8) -> Result<u8> {
    if phi > SOLID {
        return Err(Error::Config(format!("porosity {phi} exceeds 100")));
    }
    Ok(phi)
}

/// Duct cross-section bounds: centered `width` voxels out of `n`.
fn duct_range(n: usize, width: usize) -> std::ops::Range<usize> {
    let start = (n - width) / 2;
    start..start + width
}

/// Generate the voxel image described by `spec`.
pub fn generate(spec: &GeometrySpec) -> Result<VoxelImage> {
    let [nx, ny, nz] = spec.dims;
    if nx == 0 || ny == 0 || nz == 0 {
        return Err(Error::Config("geometry dims must be positive".into()));
    }
    match &spec.kind {
        GeometryKind::SphereArray { diameter } => {
            if !(nx == ny && ny == nz) {
                return Err(Error::Config("sphere array requires a cubic box".into()));
            }
            if !(*diameter > 0.0 && *diameter <= 1.0) {
                return Err(Error::Config(format!(
                    "sphere diameter {diameter} does not fit the unit cube"
                )));
            }
            let n = nx as f64;
            let r2 = (diameter / 2.0) * (diameter / 2.0);
            Ok(VoxelImage::from_fn(spec.dims, |x, y, z| {
                let dx = (x as f64 + 0.5) / n - 0.5;
                let dy = (y as f64 + 0.5) / n - 0.5;
                let dz = (z as f64 + 0.5) / n - 0.5;
                if dx * dx + dy * dy + dz * dz <= r2 {
                    SOLID
                } else {
                    0
                }
            }))
        }
        GeometryKind::Channel { axis, width } => {
            let [c1, c2] = axis.others().map(|a| spec.dims[a.index()]);
            if *width == 0 || *width > c1.min(c2) {
                return Err(Error::Config(format!(
                    "channel width {width} does not fit a {c1}x{c2} cross-section"
                )));
            }
            let (r1, r2) = (duct_range(c1, *width), duct_range(c2, *width));
            let [a1, a2] = axis.others();
            Ok(VoxelImage::from_fn(spec.dims, |x, y, z| {
                let p = [x, y, z];
                if r1.contains(&p[a1.index()]) && r2.contains(&p[a2.index()]) {
                    0
                } else {
                    SOLID
                }
            }))
        }
        GeometryKind::BlockedChannel {
            axis,
            width,
            slab_phi,
            slab_thickness,
        } => {
            let slab_phi = check_value(*slab_phi)?;
            if slab_phi == 0 {
                return Err(Error::Config("slab porosity 0 would leave the duct open".into()));
            }
            let len = spec.dims[axis.index()];
            if *slab_thickness == 0 || *slab_thickness >= len {
                return Err(Error::Config(format!(
                    "slab thickness {slab_thickness} does not fit length {len}"
                )));
            }
            let channel = generate(&GeometrySpec {
                dims: spec.dims,
                kind: GeometryKind::Channel { axis: *axis, width: *width },
            })?;
            let slab = duct_range(len, *slab_thickness);
            let mut img = channel;
            let dims = img.dims();
            for z in 0..dims[2] {
                for y in 0..dims[1] {
                    for x in 0..dims[0] {
                        let c = [x, y, z][axis.index()];
                        if slab.contains(&c) && img.is_fluid(x, y, z) {
                            let i = img.index(x, y, z);
                            img.data_mut()[i] = slab_phi;
                        }
                    }
                }
            }
            Ok(img)
        }
        GeometryKind::Layered { axis, layers } => {
            let len = spec.dims[axis.index()];
            let total: usize = layers.iter().map(|&(t, _)| t).sum();
            if total != len || layers.iter().any(|&(t, _)| t == 0) {
                return Err(Error::Config(format!(
                    "layer thicknesses must be positive and sum to {len}, got {total}"
                )));
            }
            let mut value_at = Vec::with_capacity(len);
            for &(t, phi) in layers {
                check_value(phi)?;
                value_at.extend(std::iter::repeat(phi).take(t));
            }
            Ok(VoxelImage::from_fn(spec.dims, |x, y, z| {
                value_at[[x, y, z][axis.index()]]
            }))
        }
        GeometryKind::Homogeneous { phi } => {
            let phi = check_value(*phi)?;
            Ok(VoxelImage::from_fn(spec.dims, |_, _, _| phi))
        }
    }
}

/// One sphere-array validation case: geometry, reference effective
/// permeability (dimensionless) and the relative tolerance it is trusted to.
#[derive(Clone, Debug)]
pub struct SphereCase {
    pub spec: GeometrySpec,
    pub diameter: f64,
    pub n: usize,
    pub expected_k_hat: f64,
    pub rel_tolerance: f64,
}

/// Reference results for the periodic sphere-array suite: solid spheres of
/// diameter `D` in a unit cell resolved by `N` voxels per edge, dimensionless
/// permeability of the array. Tolerance 3 percent.
pub fn table1_suite() -> Vec<SphereCase> {
    const CASES: [(f64, usize, f64); 18] = [
        (0.1, 40, 9.74e-1),
        (0.1, 80, 9.01e-1),
        (0.1, 160, 9.02e-1),
        (0.2, 40, 3.77e-1),
        (0.2, 80, 3.78e-1),
        (0.2, 160, 3.80e-1),
        (0.4, 40, 1.21e-1),
        (0.4, 80, 1.22e-1),
        (0.4, 160, 1.23e-1),
        (0.6, 40, 4.44e-2),
        (0.6, 80, 4.43e-2),
        (0.6, 160, 4.43e-2),
        (0.8, 40, 1.29e-2),
        (0.8, 80, 1.31e-2),
        (0.8, 160, 1.31e-2),
        (1.0, 40, 2.48e-3),
        (1.0, 80, 2.51e-3),
        (1.0, 160, 2.51e-3),
    ];
    CASES
        .iter()
        .map(|&(diameter, n, expected_k_hat)| SphereCase {
            spec: GeometrySpec::cube(n, GeometryKind::SphereArray { diameter }),
            diameter,
            n,
            expected_k_hat,
            rel_tolerance: 0.03,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::{classify, Category};

    #[test]
    fn sphere_solid_fraction_matches_volume() {
        let img = generate(&GeometrySpec::cube(
            40,
            GeometryKind::SphereArray { diameter: 1.0 },
        ))
        .unwrap();
        let (_, _, solid) = img.class_counts();
        let frac = solid as f64 / img.len() as f64;
        let exact = std::f64::consts::PI / 6.0;
        // Discretization error is at most one voxel shell over the surface.
        let shell = std::f64::consts::PI * 1.0 / 40.0;
        assert!(
            (frac - exact).abs() <= shell,
            "solid fraction {frac}, analytic {exact}"
        );
    }

    #[test]
    fn sphere_is_invariant_under_cube_symmetries() {
        let n = 9;
        let img = generate(&GeometrySpec::cube(
            n,
            GeometryKind::SphereArray { diameter: 0.7 },
        ))
        .unwrap();
        // All 48 signed axis permutations fix the cube center.
        let perms = [
            [0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0],
        ];
        for perm in perms {
            for flips in 0..8u32 {
                for z in 0..n {
                    for y in 0..n {
                        for x in 0..n {
                            let mut p = [x, y, z];
                            for (i, q) in p.iter_mut().enumerate() {
                                if flips >> i & 1 == 1 {
                                    *q = n - 1 - *q;
                                }
                            }
                            let m = [p[perm[0]], p[perm[1]], p[perm[2]]];
                            assert_eq!(
                                img.value(x, y, z),
                                img.value(m[0], m[1], m[2]),
                                "symmetry {perm:?}/{flips} broken at {x},{y},{z}"
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn full_width_channel_is_all_fluid() {
        let img = generate(&GeometrySpec::cube(
            6,
            GeometryKind::Channel { axis: Axis::Z, width: 6 },
        ))
        .unwrap();
        assert!(img.data().iter().all(|&v| v == 0));
    }

    #[test]
    fn category_fixtures_classify_as_constructed() {
        let channel = GeometrySpec::cube(12, GeometryKind::Channel { axis: Axis::Z, width: 4 });
        assert_eq!(
            classify(&generate(&channel).unwrap(), Axis::Z).category,
            Category::B
        );
        let blocked = GeometrySpec::cube(
            12,
            GeometryKind::BlockedChannel {
                axis: Axis::Z,
                width: 4,
                slab_phi: 60,
                slab_thickness: 2,
            },
        );
        assert_eq!(
            classify(&generate(&blocked).unwrap(), Axis::Z).category,
            Category::A
        );
        let plugged = GeometrySpec::cube(
            12,
            GeometryKind::BlockedChannel {
                axis: Axis::Z,
                width: 4,
                slab_phi: SOLID,
                slab_thickness: 2,
            },
        );
        assert_eq!(
            classify(&generate(&plugged).unwrap(), Axis::Z).category,
            Category::NonPercolating
        );
    }

    #[test]
    fn generators_are_deterministic() {
        let spec = GeometrySpec::cube(
            16,
            GeometryKind::BlockedChannel {
                axis: Axis::Y,
                width: 5,
                slab_phi: 42,
                slab_thickness: 3,
            },
        );
        assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
    }

    #[test]
    fn layered_fills_box_exactly() {
        let spec = GeometrySpec {
            dims: [3, 3, 10],
            kind: GeometryKind::Layered {
                axis: Axis::Z,
                layers: vec![(5, 20), (5, 80)],
            },
        };
        let img = generate(&spec).unwrap();
        assert_eq!(img.value(0, 0, 0), 20);
        assert_eq!(img.value(2, 2, 9), 80);
        let bad = GeometrySpec {
            dims: [3, 3, 10],
            kind: GeometryKind::Layered {
                axis: Axis::Z,
                layers: vec![(5, 20), (4, 80)],
            },
        };
        assert!(generate(&bad).is_err());
    }

    #[test]
    fn invalid_specs_are_rejected() {
        assert!(generate(&GeometrySpec::cube(
            8,
            GeometryKind::SphereArray { diameter: 1.5 }
        ))
        .is_err());
        assert!(generate(&GeometrySpec {
            dims: [8, 8, 10],
            kind: GeometryKind::SphereArray { diameter: 0.5 }
        })
        .is_err());
        assert!(generate(&GeometrySpec::cube(
            8,
            GeometryKind::Channel { axis: Axis::Z, width: 9 }
        ))
        .is_err());
        assert!(generate(&GeometrySpec::cube(
            8,
            GeometryKind::Homogeneous { phi: 101 }
        ))
        .is_err());
    }

    #[test]
    fn table1_suite_covers_the_grid() {
        let suite = table1_suite();
        assert_eq!(suite.len(), 18);
        let find = |d: f64, n: usize| {
            suite
                .iter()
                .find(|c| c.diameter == d && c.n == n)
                .map(|c| c.expected_k_hat)
                .unwrap()
        };
        assert_eq!(find(0.2, 80), 3.78e-1);
        assert_eq!(find(0.6, 160), 4.43e-2);
        assert_eq!(find(1.0, 40), 2.48e-3);
        assert_eq!(find(0.1, 80), 9.01e-1);
        assert!(suite.iter().all(|c| c.rel_tolerance == 0.03));
    }
}
