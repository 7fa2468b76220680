//! Regular-grid scalar fields with flat-binary persistence.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Ball, Point, Vector};

/// `base` plus a dotted suffix, appended rather than substituted so dotted
/// stems like `scene.u` keep their stem.
pub fn sibling(base: &Path, ext: &str) -> std::path::PathBuf {
    let mut os = base.as_os_str().to_owned();
    os.push(".");
    os.push(ext);
    std::path::PathBuf::from(os)
}

/// Cell-centered scalar field on a regular grid: cell `(i, j, k)` has
/// center `origin + spacing * (i + 1/2, j + 1/2, k + 1/2)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalarGrid {
    pub dims: [usize; 3],
    pub spacing: f64,
    pub origin: Point,
    pub values: Vec<f64>,
}

impl ScalarGrid {
    pub fn new(dims: [usize; 3], spacing: f64, origin: Point, fill: f64) -> Result<Self> {
        if dims.iter().any(|&d| d < 2) {
            return Err(Error::InvalidParameter(format!(
                "grid dims must be at least 2 each, got {dims:?}"
            )));
        }
        if !(spacing > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "grid spacing must be positive, got {spacing}"
            )));
        }
        Ok(Self {
            dims,
            spacing,
            origin,
            values: vec![fill; dims[0] * dims[1] * dims[2]],
        })
    }

    /// Cube grid of `n^3` cells spanning `[0, 1]^3`.
    pub fn unit_cube(n: usize) -> Result<Self> {
        Self::new([n, n, n], 1.0 / n as f64, Point::origin(), 0.0)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.idx(i, j, k)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, k: usize, v: f64) {
        let n = self.idx(i, j, k);
        self.values[n] = v;
    }

    pub fn cell_center(&self, i: usize, j: usize, k: usize) -> Point {
        self.origin
            + Vector::new(
                (i as f64 + 0.5) * self.spacing,
                (j as f64 + 0.5) * self.spacing,
                (k as f64 + 0.5) * self.spacing,
            )
    }

    /// Decompose a linear index.
    #[inline]
    pub fn coords(&self, lin: usize) -> (usize, usize, usize) {
        let i = lin % self.dims[0];
        let j = (lin / self.dims[0]) % self.dims[1];
        let k = lin / (self.dims[0] * self.dims[1]);
        (i, j, k)
    }

    /// Cell containing `p`, if inside the grid box.
    pub fn locate(&self, p: &Point) -> Option<(usize, usize, usize)> {
        let rel = (p - self.origin) / self.spacing;
        if rel.x < 0.0 || rel.y < 0.0 || rel.z < 0.0 {
            return None;
        }
        let i = rel.x.floor() as usize;
        let j = rel.y.floor() as usize;
        let k = rel.z.floor() as usize;
        if i < self.dims[0] && j < self.dims[1] && k < self.dims[2] {
            Some((i, j, k))
        } else {
            None
        }
    }

    /// Value at the cell containing `p` (nearest-cell interpolation).
    pub fn value_at(&self, p: &Point) -> Option<f64> {
        self.locate(p).map(|(i, j, k)| self.at(i, j, k))
    }

    /// Axis-aligned bounding box of the cell-centered domain.
    pub fn domain_max(&self) -> Point {
        self.origin
            + Vector::new(
                self.dims[0] as f64 * self.spacing,
                self.dims[1] as f64 * self.spacing,
                self.dims[2] as f64 * self.spacing,
            )
    }

    /// True when the closed ball lies inside the grid box.
    pub fn contains_ball(&self, b: &Ball) -> bool {
        let lo = self.origin;
        let hi = self.domain_max();
        b.center.x - b.radius >= lo.x
            && b.center.y - b.radius >= lo.y
            && b.center.z - b.radius >= lo.z
            && b.center.x + b.radius <= hi.x
            && b.center.y + b.radius <= hi.y
            && b.center.z + b.radius <= hi.z
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_value(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Central-difference gradient at an interior cell, one-sided at the
    /// boundary.
    pub fn gradient(&self, i: usize, j: usize, k: usize) -> Vector {
        let h = self.spacing;
        let d = |lo: f64, hi: f64, two: bool| if two { (hi - lo) / (2.0 * h) } else { (hi - lo) / h };
        let gx = match i {
            0 => d(self.at(0, j, k), self.at(1, j, k), false),
            i if i + 1 == self.dims[0] => d(self.at(i - 1, j, k), self.at(i, j, k), false),
            i => d(self.at(i - 1, j, k), self.at(i + 1, j, k), true),
        };
        let gy = match j {
            0 => d(self.at(i, 0, k), self.at(i, 1, k), false),
            j if j + 1 == self.dims[1] => d(self.at(i, j - 1, k), self.at(i, j, k), false),
            j => d(self.at(i, j - 1, k), self.at(i, j + 1, k), true),
        };
        let gz = match k {
            0 => d(self.at(i, j, 0), self.at(i, j, 1), false),
            k if k + 1 == self.dims[2] => d(self.at(i, j, k - 1), self.at(i, j, k), false),
            k => d(self.at(i, j, k - 1), self.at(i, j, k + 1), true),
        };
        Vector::new(gx, gy, gz)
    }

    /// Persist as flat little-endian f64 next to a JSON sidecar carrying
    /// the geometry.
    pub fn save(&self, base: &Path) -> Result<()> {
        let bin_path = sibling(base, "f64");
        let mut buf = Vec::with_capacity(self.values.len() * 8);
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::write(&bin_path, buf)?;
        let meta = serde_json::json!({
            "dims": self.dims,
            "spacing": self.spacing,
            "origin": [self.origin.x, self.origin.y, self.origin.z],
            "data_file": bin_path.file_name().map(|s| s.to_string_lossy().into_owned()),
        });
        std::fs::write(sibling(base, "json"), serde_json::to_string_pretty(&meta)?)?;
        Ok(())
    }

    pub fn load(base: &Path) -> Result<Self> {
        #[derive(Deserialize)]
        struct Sidecar {
            dims: [usize; 3],
            spacing: f64,
            origin: [f64; 3],
        }
        let text = std::fs::read_to_string(sibling(base, "json"))?;
        let side: Sidecar = serde_json::from_str(&text)?;
        let mut file = std::fs::File::open(sibling(base, "f64"))?;
        let mut buf = Vec::new();
        file.read_to_end(&mut buf)?;
        let n = side.dims[0] * side.dims[1] * side.dims[2];
        if buf.len() != n * 8 {
            return Err(Error::InvalidParameter(format!(
                "binary payload holds {} bytes, expected {}",
                buf.len(),
                n * 8
            )));
        }
        let values = buf
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Self {
            dims: side.dims,
            spacing: side.spacing,
            origin: Point::new(side.origin[0], side.origin[1], side.origin[2]),
            values,
        })
    }

    /// Stream the raw payload (for hashing or manifests).
    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }
}
