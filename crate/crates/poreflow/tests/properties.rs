//! Randomized invariants over arbitrary small images. These complement the
//! fixture tests: instead of known answers they check structural guarantees
//! that must hold for every input the generators can produce.

use poreflow::classify::{classify, label_components, remove_isolated, UNLABELED};
use poreflow::grid::{build_operators, BoundaryCondition, FaceCell, Model, StaggeredGrid};
use poreflow::voxel::{Axis, VoxelImage, SOLID};
use proptest::prelude::*;

fn arb_dims() -> impl Strategy<Value = [usize; 3]> {
    (1usize..=5, 1usize..=5, 1usize..=5).prop_map(|(x, y, z)| [x, y, z])
}

fn arb_image() -> impl Strategy<Value = VoxelImage> {
    arb_dims().prop_flat_map(|dims| {
        proptest::collection::vec(0u8..=SOLID, dims[0] * dims[1] * dims[2])
            .prop_map(move |data| VoxelImage::new(dims, data).unwrap())
    })
}

fn arb_axis() -> impl Strategy<Value = Axis> {
    prop_oneof![Just(Axis::X), Just(Axis::Y), Just(Axis::Z)]
}

fn arb_bc() -> impl Strategy<Value = BoundaryCondition> {
    prop_oneof![
        Just(BoundaryCondition::PressureDrop),
        Just(BoundaryCondition::Periodic)
    ]
}

fn splitmix(seed: u64) -> impl FnMut() -> f64 {
    let mut state = seed;
    move || {
        state = state.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        ((z ^ (z >> 31)) >> 11) as f64 / (1u64 << 53) as f64 - 0.5
    }
}

proptest! {
    /// A second cluster-removal pass never finds anything left to remove.
    #[test]
    fn cluster_removal_is_idempotent(image in arb_image(), axis in arb_axis()) {
        let (once, _) = remove_isolated(&image, axis);
        let (twice, removed) = remove_isolated(&once, axis);
        prop_assert_eq!(removed, 0);
        prop_assert_eq!(once.data(), twice.data());
        prop_assert_eq!(classify(&once, axis).removed_voxels, 0);
    }

    /// Labels are dense, cover exactly the selected phase, and agree across
    /// every in-phase face neighborhood.
    #[test]
    fn component_labels_partition_the_phase(image in arb_image()) {
        let (labels, count) = label_components(&image, |v| v != SOLID);
        let [nx, ny, nz] = image.dims();
        let data = image.data();
        let mut seen = vec![false; count as usize];
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    let i = image.index(x, y, z);
                    if data[i] == SOLID {
                        prop_assert_eq!(labels[i], UNLABELED);
                        continue;
                    }
                    prop_assert!(labels[i] < count);
                    seen[labels[i] as usize] = true;
                    if x > 0 && data[i - 1] != SOLID {
                        prop_assert_eq!(labels[i], labels[i - 1]);
                    }
                    if y > 0 && data[i - nx] != SOLID {
                        prop_assert_eq!(labels[i], labels[i - nx]);
                    }
                    if z > 0 && data[i - nx * ny] != SOLID {
                        prop_assert_eq!(labels[i], labels[i - nx * ny]);
                    }
                }
            }
        }
        prop_assert!(seen.into_iter().all(|s| s));
    }

    /// Images with any byte above 100 are rejected at construction.
    #[test]
    fn out_of_range_bytes_are_rejected(
        (dims, mut data, bad) in arb_dims().prop_flat_map(|dims| (
            Just(dims),
            proptest::collection::vec(0u8..=SOLID, dims[0] * dims[1] * dims[2]),
            101u8..=255,
        )),
    ) {
        let slot = (bad as usize) % data.len();
        data[slot] = bad;
        prop_assert!(VoxelImage::new(dims, data).is_err());
    }

    /// Every face in the DOF table resolves back to its own index through the
    /// lattice lookup, and its neighbor cells exist.
    #[test]
    fn face_table_and_lookup_agree(
        image in arb_image(),
        axis in arb_axis(),
        bc in arb_bc(),
    ) {
        let grid = match StaggeredGrid::build(&image, axis, bc) {
            Ok(g) => g,
            Err(_) => return Ok(()),
        };
        let n_cells = grid.n_cells() as u32;
        for (i, f) in grid.faces().iter().enumerate() {
            let pos = [f.pos[0] as usize, f.pos[1] as usize, f.pos[2] as usize];
            prop_assert_eq!(grid.face_dof(f.axis, pos), Some(i as u32));
            for side in [f.lo, f.hi] {
                if let FaceCell::Cell(c) = side {
                    prop_assert!(c < n_cells);
                }
            }
        }
    }

    /// The assembled divergence and gradient are exact transposes on every
    /// buildable image, model and boundary condition.
    #[test]
    fn divergence_and_gradient_are_adjoint(
        image in arb_image(),
        axis in arb_axis(),
        bc in arb_bc(),
        seed in 0u64..1000,
    ) {
        let ops = match build_operators(
            &image,
            axis,
            Model::StokesBrinkman,
            bc,
            (1.0, 0.0),
            0.0009,
            None,
        ) {
            Ok(ops) => ops,
            Err(_) => return Ok(()),
        };
        let mut rng = splitmix(seed);
        let v: Vec<f64> = (0..ops.n_velocity()).map(|_| rng()).collect();
        let p: Vec<f64> = (0..ops.n_pressure()).map(|_| rng()).collect();
        let mut bv = vec![0.0; ops.n_pressure()];
        let mut btp = vec![0.0; ops.n_velocity()];
        ops.apply_b(&v, &mut bv);
        ops.apply_bt(&p, &mut btp);
        let lhs: f64 = bv.iter().zip(&p).map(|(a, b)| a * b).sum();
        let rhs: f64 = v.iter().zip(&btp).map(|(a, b)| a * b).sum();
        let vn = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let pn = p.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!((lhs - rhs).abs() <= 1e-13 * vn * pn.max(1.0));
    }
}
