//! Voxel images, porosity bookkeeping and unit conversions.
//!
//! A sample is an `nx * ny * nz` box of cubic voxels stored x-fastest, one
//! byte per voxel holding a porosity percentage. The box is mapped onto
//! `[0, nx/m] x [0, ny/m] x [0, nz/m]` with `m = max(nx, ny, nz)`, so the
//! longest edge has unit length and the grid spacing is `h = 1/m`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A coordinate axis of the sample box; doubles as the flow direction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    /// Index into `[x, y, z]` triples.
    #[inline]
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    /// Inverse of [`Axis::index`]. Panics outside `0..3`.
    #[inline]
    pub fn from_index(i: usize) -> Axis {
        Axis::ALL[i]
    }

    /// The two axes spanning the cross-section.
    pub fn others(self) -> [Axis; 2] {
        match self {
            Axis::X => [Axis::Y, Axis::Z],
            Axis::Y => [Axis::X, Axis::Z],
            Axis::Z => [Axis::X, Axis::Y],
        }
    }
}

impl std::fmt::Display for Axis {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        })
    }
}

impl std::str::FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x" | "X" => Ok(Axis::X),
            "y" | "Y" => Ok(Axis::Y),
            "z" | "Z" => Ok(Axis::Z),
            other => Err(Error::Config(format!("unknown axis {other:?}"))),
        }
    }
}

/// 1 Darcy in m^2.
pub const DARCY_M2: f64 = 9.869233e-13;
/// 1 microdarcy (mkDa) in m^2.
pub const MICRODARCY_M2: f64 = DARCY_M2 * 1.0e-6;

/// Prefactor of the porosity-permeability correlation, in mkDa.
pub const CORRELATION_PREFACTOR_MKDA: f64 = 7.251e-2;
/// Exponent slope of the correlation, per porosity percent.
pub const CORRELATION_EXPONENT: f64 = 0.147076689;

/// Largest admissible voxel value; equal to 100 percent porosity.
pub const SOLID: u8 = 100;

/// Convert a permeability in microdarcy to m^2.
pub fn mkda_to_m2(k_mkda: f64) -> f64 {
    k_mkda * MICRODARCY_M2
}

/// Convert a permeability in m^2 to microdarcy.
pub fn m2_to_mkda(k_m2: f64) -> f64 {
    k_m2 / MICRODARCY_M2
}

/// Microscale permeability of a porous voxel with porosity `phi` percent,
/// in mkDa. `phi` must lie strictly between 0 and 100.
pub fn correlation_permeability(phi: u8) -> Result<f64> {
    if phi == 0 || phi >= SOLID {
        return Err(Error::Domain(format!(
            "correlation is defined for porosities strictly between 0 and 100, got {phi}"
        )));
    }
    Ok(CORRELATION_PREFACTOR_MKDA * (CORRELATION_EXPONENT * f64::from(phi)).exp())
}

/// Material class of a single voxel.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VoxelClass {
    /// Fully resolved pore space, porosity 0.
    Fluid,
    /// Unresolved porous voxel with porosity strictly between 0 and 100.
    Porous(u8),
    /// Impermeable solid, porosity 100. Excluded from the computational domain.
    Solid,
}

impl VoxelClass {
    /// Class of a raw porosity byte.
    pub fn from_value(v: u8) -> Self {
        match v {
            0 => VoxelClass::Fluid,
            SOLID => VoxelClass::Solid,
            phi => VoxelClass::Porous(phi),
        }
    }
}

/// A voxelized porosity map, stored x-fastest.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VoxelImage {
    dims: [usize; 3],
    data: Vec<u8>,
}

impl VoxelImage {
    /// Wrap raw voxel data. Fails if the length does not match `dims` or any
    /// value exceeds 100.
    pub fn new(dims: [usize; 3], data: Vec<u8>) -> Result<Self> {
        let n = dims[0]
            .checked_mul(dims[1])
            .and_then(|v| v.checked_mul(dims[2]))
            .filter(|&v| v > 0)
            .ok_or_else(|| {
                Error::Dimension(format!(
                    "{}x{}x{} is not a valid image size",
                    dims[0], dims[1], dims[2]
                ))
            })?;
        if data.len() != n {
            return Err(Error::Dimension(format!(
                "expected {}x{}x{} = {} voxels, got {} bytes",
                dims[0],
                dims[1],
                dims[2],
                n,
                data.len()
            )));
        }
        if let Some(index) = data.iter().position(|&v| v > SOLID) {
            return Err(Error::InvalidPorosity {
                index,
                value: data[index],
            });
        }
        Ok(Self { dims, data })
    }

    /// Build an image from a per-voxel porosity function.
    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> u8) -> Self {
        let mut data = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    data.push(f(x, y, z));
                }
            }
        }
        Self::new(dims, data).expect("generator produced an invalid voxel value")
    }

    /// Read an image from a raw byte file whose size must equal
    /// `nx * ny * nz`.
    pub fn load_raw(path: impl AsRef<Path>, dims: [usize; 3]) -> Result<Self> {
        let data = fs::read(path)?;
        Self::new(dims, data)
    }

    /// Write the raw voxel bytes; `load_raw` restores the image exactly.
    pub fn save_raw(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, &self.data)?;
        Ok(())
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn nx(&self) -> usize {
        self.dims[0]
    }

    pub fn ny(&self) -> usize {
        self.dims[1]
    }

    pub fn nz(&self) -> usize {
        self.dims[2]
    }

    /// Number of voxels.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Grid spacing: the longest box edge spans unit length.
    pub fn spacing(&self) -> f64 {
        1.0 / *self.dims.iter().max().expect("non-empty dims") as f64
    }

    /// Linear index of voxel `(x, y, z)`, x-fastest.
    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn value(&self, x: usize, y: usize, z: usize) -> u8 {
        self.data[self.index(x, y, z)]
    }

    #[inline]
    pub fn value_at(&self, index: usize) -> u8 {
        self.data[index]
    }

    #[inline]
    pub fn class(&self, x: usize, y: usize, z: usize) -> VoxelClass {
        VoxelClass::from_value(self.value(x, y, z))
    }

    #[inline]
    pub fn class_at(&self, index: usize) -> VoxelClass {
        VoxelClass::from_value(self.data[index])
    }

    #[inline]
    pub fn is_solid(&self, x: usize, y: usize, z: usize) -> bool {
        self.value(x, y, z) == SOLID
    }

    #[inline]
    pub fn is_fluid(&self, x: usize, y: usize, z: usize) -> bool {
        self.value(x, y, z) == 0
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    /// Voxel counts as `(fluid, porous, solid)`.
    pub fn class_counts(&self) -> (usize, usize, usize) {
        let mut counts = (0usize, 0usize, 0usize);
        for &v in &self.data {
            match VoxelClass::from_value(v) {
                VoxelClass::Fluid => counts.0 += 1,
                VoxelClass::Porous(_) => counts.1 += 1,
                VoxelClass::Solid => counts.2 += 1,
            }
        }
        counts
    }

    /// Porosity fractions `(total, resolved, unresolved)`.
    ///
    /// `resolved` is the fluid voxel fraction, `unresolved` the porosity
    /// carried by porous voxels, `total` their sum.
    pub fn porosity_stats(&self) -> (f64, f64, f64) {
        let mut fluid = 0usize;
        let mut phi_sum = 0u64;
        for &v in &self.data {
            match VoxelClass::from_value(v) {
                VoxelClass::Fluid => fluid += 1,
                VoxelClass::Porous(phi) => phi_sum += u64::from(phi),
                VoxelClass::Solid => {}
            }
        }
        let n = self.data.len() as f64;
        let resolved = fluid as f64 / n;
        let unresolved = phi_sum as f64 / 100.0 / n;
        (resolved + unresolved, resolved, unresolved)
    }

    /// Threshold-segment a multiclass image into a ternary one.
    ///
    /// Porous voxels with porosity `>= threshold` become fluid; the
    /// survivors are replaced by their common arithmetic mean porosity,
    /// rounded to the nearest integer with ties rounding up. Returns the
    /// segmented image and `Some(phi)` with the averaged porosity, or
    /// `None` when no porous voxel survives and the result is binary.
    pub fn segment_ternary(&self, threshold: u8) -> Result<(VoxelImage, Option<u8>)> {
        if threshold == 0 || threshold > SOLID {
            return Err(Error::Domain(format!(
                "segmentation threshold must lie in 1..=100, got {threshold}"
            )));
        }
        let mut sum = 0u64;
        let mut count = 0u64;
        for &v in &self.data {
            if let VoxelClass::Porous(phi) = VoxelClass::from_value(v) {
                if phi < threshold {
                    sum += u64::from(phi);
                    count += 1;
                }
            }
        }
        if count == 0 {
            let data = self
                .data
                .iter()
                .map(|&v| if v == SOLID { SOLID } else { 0 })
                .collect();
            return Ok((Self { dims: self.dims, data }, None));
        }
        // Round half up without going through floats.
        let phi_avg = ((2 * sum + count) / (2 * count)) as u8;
        let data = self
            .data
            .iter()
            .map(|&v| match VoxelClass::from_value(v) {
                VoxelClass::Fluid => 0,
                VoxelClass::Solid => SOLID,
                VoxelClass::Porous(phi) => {
                    if phi >= threshold {
                        0
                    } else {
                        phi_avg
                    }
                }
            })
            .collect();
        Ok((Self { dims: self.dims, data }, Some(phi_avg)))
    }

    /// True if no voxel is porous.
    pub fn is_binary(&self) -> bool {
        self.data.iter().all(|&v| v == 0 || v == SOLID)
    }
}

/// Sidecar metadata stored next to a raw image as flat `key=value` lines.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ImageMeta {
    pub nx: Option<usize>,
    pub ny: Option<usize>,
    pub nz: Option<usize>,
    /// Physical edge length of the longest box side, in meters.
    pub l_meters: Option<f64>,
}

impl ImageMeta {
    pub fn dims(&self) -> Option<[usize; 3]> {
        Some([self.nx?, self.ny?, self.nz?])
    }
}

/// Path of the sidecar belonging to a raw image file.
pub fn sidecar_path(raw: impl AsRef<Path>) -> PathBuf {
    let mut p = raw.as_ref().as_os_str().to_owned();
    p.push(".meta");
    PathBuf::from(p)
}

/// Read sidecar metadata if the file exists. Unknown keys are rejected so a
/// typo does not silently drop a dimension.
pub fn read_sidecar(raw: impl AsRef<Path>) -> Result<Option<ImageMeta>> {
    let path = sidecar_path(raw);
    if !path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path)?;
    let mut meta = ImageMeta::default();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::Config(format!(
                "{}:{}: expected key=value, got {line:?}",
                path.display(),
                lineno + 1
            ))
        })?;
        let (key, value) = (key.trim(), value.trim());
        let parse_dim = |v: &str| {
            v.parse::<usize>()
                .map_err(|_| Error::Config(format!("{}: bad value for {key}: {v:?}", path.display())))
        };
        match key {
            "nx" => meta.nx = Some(parse_dim(value)?),
            "ny" => meta.ny = Some(parse_dim(value)?),
            "nz" => meta.nz = Some(parse_dim(value)?),
            "L_meters" => {
                meta.l_meters = Some(value.parse::<f64>().map_err(|_| {
                    Error::Config(format!("{}: bad value for L_meters: {value:?}", path.display()))
                })?)
            }
            _ => {
                return Err(Error::Config(format!(
                    "{}: unknown sidecar key {key:?}",
                    path.display()
                )))
            }
        }
    }
    Ok(Some(meta))
}

/// Write sidecar metadata next to a raw image.
pub fn write_sidecar(raw: impl AsRef<Path>, dims: [usize; 3], l_meters: f64) -> Result<()> {
    let text = format!(
        "nx={}\nny={}\nnz={}\nL_meters={}\n",
        dims[0], dims[1], dims[2], l_meters
    );
    fs::write(sidecar_path(raw), text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn correlation_matches_reported_values() {
        // Frozen (porosity, mkDa) pairs from the published correlation.
        let expected = [(60u8, 493.0), (61, 571.2), (50, 113.3), (58, 367.4), (49, 97.8)];
        for (phi, k) in expected {
            let got = correlation_permeability(phi).unwrap();
            assert!(rel_err(got, k) < 1.0e-3, "phi={phi}: got {got}, want {k}");
        }
    }

    #[test]
    fn correlation_rejects_out_of_domain() {
        assert!(matches!(correlation_permeability(0), Err(Error::Domain(_))));
        assert!(matches!(correlation_permeability(100), Err(Error::Domain(_))));
        assert!(matches!(correlation_permeability(255), Err(Error::Domain(_))));
    }

    #[test]
    fn unit_round_trip_is_exact() {
        for k in [1.0, 493.0, 1.0e7, 3.7e-4] {
            assert!(rel_err(m2_to_mkda(mkda_to_m2(k)), k) < 1.0e-12);
        }
        // 1 Darcy = 1e6 mkDa.
        assert!(rel_err(mkda_to_m2(1.0e6), DARCY_M2) < 1.0e-15);
    }

    #[test]
    fn new_validates_size_and_values() {
        assert!(matches!(
            VoxelImage::new([2, 2, 2], vec![0; 7]),
            Err(Error::Dimension(_))
        ));
        assert!(matches!(
            VoxelImage::new([0, 2, 2], vec![]),
            Err(Error::Dimension(_))
        ));
        let err = VoxelImage::new([2, 2, 2], vec![0, 0, 0, 101, 0, 0, 0, 0]).unwrap_err();
        match err {
            Error::InvalidPorosity { index, value } => {
                assert_eq!((index, value), (3, 101));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn raw_round_trip_is_byte_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.raw");
        let img = VoxelImage::from_fn([3, 4, 5], |x, y, z| ((x + 2 * y + 3 * z) % 101) as u8);
        img.save_raw(&path).unwrap();
        let back = VoxelImage::load_raw(&path, [3, 4, 5]).unwrap();
        assert_eq!(img, back);
        // Same bytes, wrong box.
        assert!(matches!(
            VoxelImage::load_raw(&path, [3, 4, 6]),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn index_is_x_fastest() {
        let img = VoxelImage::from_fn([3, 4, 5], |x, y, z| ((x + y + z) % 3) as u8);
        assert_eq!(img.index(1, 0, 0), 1);
        assert_eq!(img.index(0, 1, 0), 3);
        assert_eq!(img.index(0, 0, 1), 12);
        assert_eq!(img.index(2, 3, 4), 59);
    }

    #[test]
    fn porosity_stats_counts_all_classes() {
        // 2 fluid, 2 porous at 50, 4 solid.
        let img = VoxelImage::new([2, 2, 2], vec![0, 0, 50, 50, 100, 100, 100, 100]).unwrap();
        let (total, resolved, unresolved) = img.porosity_stats();
        assert!((resolved - 0.25).abs() < 1e-15);
        assert!((unresolved - 0.125).abs() < 1e-15);
        assert!((total - 0.375).abs() < 1e-15);
        assert!((total - (resolved + unresolved)).abs() < 1e-12);
    }

    #[test]
    fn segment_ternary_averages_survivors() {
        let img = VoxelImage::new([5, 1, 1], vec![30, 90, 70, 100, 0]).unwrap();
        let (seg, phi) = img.segment_ternary(80).unwrap();
        assert_eq!(phi, Some(50));
        assert_eq!(seg.data(), &[50, 0, 50, 100, 0]);
    }

    #[test]
    fn segment_ternary_rounds_half_up() {
        let img = VoxelImage::new([2, 1, 1], vec![55, 65]).unwrap();
        let (_, phi) = img.segment_ternary(100).unwrap();
        assert_eq!(phi, Some(60));
        let img = VoxelImage::new([2, 1, 1], vec![50, 51]).unwrap();
        let (_, phi) = img.segment_ternary(100).unwrap();
        assert_eq!(phi, Some(51), "mean 50.5 rounds up");
    }

    #[test]
    fn segment_ternary_signals_binary_result() {
        let img = VoxelImage::new([3, 1, 1], vec![80, 100, 0]).unwrap();
        let (seg, phi) = img.segment_ternary(80).unwrap();
        assert_eq!(phi, None);
        assert_eq!(seg.data(), &[0, 100, 0]);
        assert!(seg.is_binary());
    }

    #[test]
    fn segment_ternary_is_idempotent() {
        let img = VoxelImage::from_fn([4, 4, 4], |x, y, z| ((7 * x + 5 * y + 3 * z) % 101) as u8);
        let (once, phi1) = img.segment_ternary(80).unwrap();
        let (twice, phi2) = once.segment_ternary(80).unwrap();
        assert_eq!(once, twice);
        assert_eq!(phi1, phi2);
    }

    #[test]
    fn segment_ternary_never_loses_fluid() {
        let img = VoxelImage::from_fn([4, 4, 4], |x, y, z| ((7 * x + 5 * y + 3 * z) % 101) as u8);
        let fluid_before = img.class_counts().0;
        for t in [1, 40, 80, 100] {
            let (seg, _) = img.segment_ternary(t).unwrap();
            assert!(seg.class_counts().0 >= fluid_before, "threshold {t}");
        }
    }

    #[test]
    fn segment_ternary_rejects_bad_threshold() {
        let img = VoxelImage::new([1, 1, 1], vec![50]).unwrap();
        assert!(matches!(img.segment_ternary(0), Err(Error::Domain(_))));
        assert!(matches!(img.segment_ternary(101), Err(Error::Domain(_))));
    }

    #[test]
    fn sidecar_round_trip_and_override_keys() {
        let dir = tempfile::tempdir().unwrap();
        let raw = dir.path().join("img.raw");
        write_sidecar(&raw, [10, 20, 30], 9.0e-4).unwrap();
        let meta = read_sidecar(&raw).unwrap().unwrap();
        assert_eq!(meta.dims(), Some([10, 20, 30]));
        assert_eq!(meta.l_meters, Some(9.0e-4));
        // Missing sidecar is not an error.
        assert!(read_sidecar(dir.path().join("other.raw")).unwrap().is_none());
        // Unknown key is rejected.
        std::fs::write(sidecar_path(&raw), "nx=1\nbogus=2\n").unwrap();
        assert!(matches!(read_sidecar(&raw), Err(Error::Config(_))));
    }
}
