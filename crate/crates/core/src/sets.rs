//! Weighted point samples of 2D sets in 3D, with a voxel-bucket index for
//! nearest-neighbor and range queries.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Ball, Point};

/// Point sample of a surface: positions, per-point area weights (summing
/// approximately to the `H^2` measure of the represented set) and the
/// nominal sample spacing.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiscreteSet {
    points: Vec<Point>,
    weights: Vec<f64>,
    spacing: f64,
}

impl DiscreteSet {
    pub fn new(points: Vec<Point>, weights: Vec<f64>, spacing: f64) -> Self {
        debug_assert_eq!(points.len(), weights.len());
        debug_assert!(spacing > 0.0);
        debug_assert!(weights.iter().all(|&w| w > 0.0));
        Self {
            points,
            weights,
            spacing,
        }
    }

    pub fn empty(spacing: f64) -> Self {
        Self {
            points: Vec::new(),
            weights: Vec::new(),
            spacing,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Indices of points inside the closed ball.
    pub fn indices_in_ball(&self, ball: &Ball) -> Vec<usize> {
        let r2 = ball.radius * ball.radius;
        (0..self.points.len())
            .filter(|&i| (self.points[i] - ball.center).norm_squared() <= r2)
            .collect()
    }

    pub fn push(&mut self, p: Point, w: f64) {
        self.points.push(p);
        self.weights.push(w);
    }

    /// Merge another set into this one (spacing keeps the coarser value).
    pub fn extend_from(&mut self, other: &DiscreteSet) {
        self.points.extend_from_slice(&other.points);
        self.weights.extend_from_slice(&other.weights);
        self.spacing = self.spacing.max(other.spacing);
    }

    /// CSV export with header `x,y,z,weight`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x,y,z,weight")?;
        for (p, wt) in self.points.iter().zip(&self.weights) {
            writeln!(w, "{:?},{:?},{:?},{:?}", p.x, p.y, p.z, wt)?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(f))
    }

    /// ASCII PLY point-cloud export.
    pub fn write_ply<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "ply")?;
        writeln!(w, "format ascii 1.0")?;
        writeln!(w, "element vertex {}", self.points.len())?;
        writeln!(w, "property double x")?;
        writeln!(w, "property double y")?;
        writeln!(w, "property double z")?;
        writeln!(w, "property double weight")?;
        writeln!(w, "end_header")?;
        for (p, wt) in self.points.iter().zip(&self.weights) {
            writeln!(w, "{:?} {:?} {:?} {:?}", p.x, p.y, p.z, wt)?;
        }
        Ok(())
    }

    pub fn save_ply(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        self.write_ply(std::io::BufWriter::new(f))
    }

    pub fn read_csv<R: std::io::BufRead>(r: R, spacing: f64) -> Result<Self> {
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            if lineno == 0 || line.trim().is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::InvalidParameter(format!("csv line {lineno}: {e}")))?;
            if vals.len() != 4 {
                return Err(Error::InvalidParameter(format!(
                    "csv line {lineno}: expected 4 columns"
                )));
            }
            points.push(Point::new(vals[0], vals[1], vals[2]));
            weights.push(vals[3]);
        }
        Ok(Self::new(points, weights, spacing))
    }
}

/// Voxel-bucket index over a point set for nearest-neighbor queries.
pub struct VoxelIndex<'a> {
    set: &'a DiscreteSet,
    cell: f64,
    buckets: HashMap<(i64, i64, i64), Vec<u32>>,
    key_lo: (i64, i64, i64),
    key_hi: (i64, i64, i64),
}

impl<'a> VoxelIndex<'a> {
    pub fn build(set: &'a DiscreteSet) -> Self {
        let cell = set.spacing().max(1e-12) * 2.0;
        let mut buckets: HashMap<(i64, i64, i64), Vec<u32>> = HashMap::new();
        let mut key_lo = (i64::MAX, i64::MAX, i64::MAX);
        let mut key_hi = (i64::MIN, i64::MIN, i64::MIN);
        for (i, p) in set.points().iter().enumerate() {
            let k = Self::key_of(p, cell);
            key_lo = (key_lo.0.min(k.0), key_lo.1.min(k.1), key_lo.2.min(k.2));
            key_hi = (key_hi.0.max(k.0), key_hi.1.max(k.1), key_hi.2.max(k.2));
            buckets.entry(k).or_default().push(i as u32);
        }
        Self {
            set,
            cell,
            buckets,
            key_lo,
            key_hi,
        }
    }

    fn key_of(p: &Point, cell: f64) -> (i64, i64, i64) {
        (
            (p.x / cell).floor() as i64,
            (p.y / cell).floor() as i64,
            (p.z / cell).floor() as i64,
        )
    }

    /// Squared distance to the nearest point, or `None` for an empty set.
    /// Expanding shell search: a point whose bucket is at Chebyshev ring
    /// `k` from the query bucket lies at distance at least `(k-1) * cell`,
    /// so once every shell up to `ring` is scanned the search may stop as
    /// soon as `best <= (ring * cell)^2`.
    pub fn nearest_sq(&self, p: &Point) -> Option<f64> {
        if self.set.is_empty() {
            return None;
        }
        let key = Self::key_of(p, self.cell);
        // Ring beyond which no bucket exists in any direction.
        let max_ring = [
            (key.0 - self.key_lo.0).abs(),
            (key.1 - self.key_lo.1).abs(),
            (key.2 - self.key_lo.2).abs(),
            (key.0 - self.key_hi.0).abs(),
            (key.1 - self.key_hi.1).abs(),
            (key.2 - self.key_hi.2).abs(),
        ]
        .into_iter()
        .max()
        .unwrap();
        let mut best = f64::INFINITY;
        for ring in 0..=max_ring {
            // Unscanned buckets sit at rings >= ring, whose points are at
            // least (ring - 1) cells away.
            let shell_min = (ring as f64 - 1.0).max(0.0) * self.cell;
            if best <= shell_min * shell_min {
                break;
            }
            for dx in -ring..=ring {
                for dy in -ring..=ring {
                    for dz in -ring..=ring {
                        if dx.abs().max(dy.abs()).max(dz.abs()) != ring {
                            continue;
                        }
                        if let Some(idxs) =
                            self.buckets.get(&(key.0 + dx, key.1 + dy, key.2 + dz))
                        {
                            for &i in idxs {
                                let d2 =
                                    (self.set.points()[i as usize] - p).norm_squared();
                                if d2 < best {
                                    best = d2;
                                }
                            }
                        }
                    }
                }
            }
        }
        Some(best)
    }

    pub fn nearest(&self, p: &Point) -> Option<f64> {
        self.nearest_sq(p).map(f64::sqrt)
    }

    /// True if some point lies within `radius` of `p`.
    pub fn any_within(&self, p: &Point, radius: f64) -> bool {
        let reach = (radius / self.cell).ceil() as i64;
        let key = Self::key_of(p, self.cell);
        let r2 = radius * radius;
        for dx in -reach..=reach {
            for dy in -reach..=reach {
                for dz in -reach..=reach {
                    if let Some(idxs) = self.buckets.get(&(key.0 + dx, key.1 + dy, key.2 + dz))
                    {
                        for &i in idxs {
                            if (self.set.points()[i as usize] - p).norm_squared() <= r2 {
                                return true;
                            }
                        }
                    }
                }
            }
        }
        false
    }
}
