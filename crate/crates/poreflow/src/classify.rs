//! Pore-space connectivity: component labeling, isolated-region removal and
//! percolation categories.
//!
//! Flow can only cross voxel faces, matching the face-centered velocity
//! unknowns of the discretization, so connectivity is 6-face throughout.

use serde::Serialize;

use crate::voxel::{Axis, VoxelImage, SOLID};

/// Label value of voxels not selected by the phase predicate.
pub const UNLABELED: u32 = u32::MAX;

/// Disjoint-set forest with path halving and union by size.
#[derive(Clone, Debug)]
pub struct DisjointSet {
    parent: Vec<u32>,
    size: Vec<u32>,
}

impl DisjointSet {
    pub fn new(n: usize) -> Self {
        Self {
            parent: (0..n as u32).collect(),
            size: vec![1; n],
        }
    }

    /// Representative of the set containing `i`.
    pub fn find(&mut self, i: u32) -> u32 {
        let mut root = i;
        while self.parent[root as usize] != root {
            self.parent[root as usize] = self.parent[self.parent[root as usize] as usize];
            root = self.parent[root as usize];
        }
        root
    }

    /// Merge the sets containing `i` and `j`.
    pub fn union(&mut self, i: u32, j: u32) {
        let ri = self.find(i);
        let rj = self.find(j);
        if ri == rj {
            return;
        }
        let (small, large) = if self.size[ri as usize] < self.size[rj as usize] {
            (ri, rj)
        } else {
            (rj, ri)
        };
        self.parent[small as usize] = large;
        self.size[large as usize] += self.size[small as usize];
    }

    pub fn same(&mut self, i: u32, j: u32) -> bool {
        self.find(i) == self.find(j)
    }
}

/// Label 6-connected components of the voxels selected by `phase`.
///
/// Returns one label per voxel (selected voxels get dense labels starting at
/// 0 in order of first appearance in the x-fastest scan, others get
/// [`UNLABELED`]) and the component count.
pub fn label_components(image: &VoxelImage, phase: impl Fn(u8) -> bool) -> (Vec<u32>, u32) {
    let [nx, ny, nz] = image.dims();
    let n = image.len();
    let data = image.data();
    let mut dsu = DisjointSet::new(n);
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let i = image.index(x, y, z);
                if !phase(data[i]) {
                    continue;
                }
                if x > 0 && phase(data[i - 1]) {
                    dsu.union(i as u32, (i - 1) as u32);
                }
                if y > 0 && phase(data[i - nx]) {
                    dsu.union(i as u32, (i - nx) as u32);
                }
                if z > 0 && phase(data[i - nx * ny]) {
                    dsu.union(i as u32, (i - nx * ny) as u32);
                }
            }
        }
    }
    let mut labels = vec![UNLABELED; n];
    let mut root_label = vec![UNLABELED; n];
    let mut next = 0u32;
    for i in 0..n {
        if !phase(data[i]) {
            continue;
        }
        let root = dsu.find(i as u32) as usize;
        if root_label[root] == UNLABELED {
            root_label[root] = next;
            next += 1;
        }
        labels[i] = root_label[root];
    }
    (labels, next)
}

/// Percolation category of an image in a given direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Category {
    /// The union of fluid and porous voxels percolates, pure fluid does not;
    /// transport is controlled by the unresolved porosity.
    A,
    /// The pure-fluid phase percolates on its own.
    B,
    /// No inlet-to-outlet path exists even through porous voxels.
    NonPercolating,
}

/// Connectivity summary produced by [`classify`].
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ConnectivityReport {
    pub direction: Axis,
    pub category: Category,
    /// Non-solid voxels converted to solid by isolated-region removal.
    pub removed_voxels: usize,
    /// Inlet-to-outlet percolating non-solid components after removal.
    pub component_count: usize,
}

/// Per-component flags: does the component touch the inlet (layer 0) and the
/// outlet (last layer) along `direction`?
fn spanning_flags(
    image: &VoxelImage,
    labels: &[u32],
    n_components: u32,
    direction: Axis,
) -> Vec<bool> {
    let [nx, ny, nz] = image.dims();
    let last = [nx - 1, ny - 1, nz - 1][direction.index()];
    let mut touches_in = vec![false; n_components as usize];
    let mut touches_out = vec![false; n_components as usize];
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let label = labels[image.index(x, y, z)];
                if label == UNLABELED {
                    continue;
                }
                let c = [x, y, z][direction.index()];
                if c == 0 {
                    touches_in[label as usize] = true;
                }
                if c == last {
                    touches_out[label as usize] = true;
                }
            }
        }
    }
    touches_in
        .iter()
        .zip(&touches_out)
        .map(|(&a, &b)| a && b)
        .collect()
}

/// True if voxels selected by `phase` form at least one component touching
/// both boundary layers along `direction`.
pub fn percolates(image: &VoxelImage, direction: Axis, phase: impl Fn(u8) -> bool) -> bool {
    let (labels, n) = label_components(image, phase);
    spanning_flags(image, &labels, n, direction).iter().any(|&s| s)
}

/// Convert every non-solid component that does not touch both the inlet and
/// outlet layer along `direction` to solid. Returns the cleaned image and
/// the number of voxels converted.
pub fn remove_isolated(image: &VoxelImage, direction: Axis) -> (VoxelImage, usize) {
    let (labels, n_components) = label_components(image, |v| v != SOLID);
    let spanning = spanning_flags(image, &labels, n_components, direction);
    let mut out = image.clone();
    let mut removed = 0usize;
    for (i, &label) in labels.iter().enumerate() {
        if label != UNLABELED && !spanning[label as usize] {
            out.data_mut()[i] = SOLID;
            removed += 1;
        }
    }
    (out, removed)
}

/// Classify percolation along `direction`. Isolated-region removal is
/// applied internally; `removed_voxels` reports its effect.
pub fn classify(image: &VoxelImage, direction: Axis) -> ConnectivityReport {
    let (cleaned, removed_voxels) = remove_isolated(image, direction);
    let (labels, n_components) = label_components(&cleaned, |v| v != SOLID);
    let spanning = spanning_flags(&cleaned, &labels, n_components, direction);
    let component_count = spanning.iter().filter(|&&s| s).count();
    let category = if component_count == 0 {
        Category::NonPercolating
    } else if percolates(&cleaned, direction, |v| v == 0) {
        Category::B
    } else {
        Category::A
    };
    ConnectivityReport {
        direction,
        category,
        removed_voxels,
        component_count,
    }
}
