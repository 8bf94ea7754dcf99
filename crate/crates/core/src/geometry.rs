//! Points, point sets and anchored boxes in the unit cube.

use alloc::vec::Vec;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::subset::SubsetMask;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("a point set needs at least one point")]
    NoPoints,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("point {point}, coordinate {coord}: value {value} is outside [0,1]")]
    OutOfRange { point: usize, coord: usize, value: f64 },
    #[error("subset index {index} exceeds dimension {dim}")]
    MaskOutOfRange { index: usize, dim: usize },
}

fn check_coord(point: usize, coord: usize, value: f64) -> Result<(), GeometryError> {
    // NaN fails both comparisons
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(GeometryError::OutOfRange { point, coord, value })
    }
}

/// A point of `[0,1]^d`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Point {
    coords: Vec<f64>,
}

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self, GeometryError> {
        if coords.is_empty() {
            return Err(GeometryError::ZeroDimension);
        }
        for (j, &c) in coords.iter().enumerate() {
            check_coord(0, j, c)?;
        }
        Ok(Self { coords })
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }
}

impl TryFrom<Vec<f64>> for Point {
    type Error = GeometryError;
    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        Point::new(v)
    }
}

impl From<Point> for Vec<f64> {
    fn from(p: Point) -> Self {
        p.coords
    }
}

/// Which side of a box face is included.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// `[0, z_j)`
    Open,
    /// `[0, z_j]`
    Closed,
}

/// The box `[0, z)` anchored at the origin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct AnchoredBox {
    upper: Vec<f64>,
}

impl AnchoredBox {
    pub fn new(upper: Vec<f64>) -> Result<Self, GeometryError> {
        if upper.is_empty() {
            return Err(GeometryError::ZeroDimension);
        }
        for (j, &z) in upper.iter().enumerate() {
            check_coord(0, j, z)?;
        }
        Ok(Self { upper })
    }

    /// `[0, 1)^d`.
    pub fn unit(d: usize) -> Result<Self, GeometryError> {
        Self::new(alloc::vec![1.0; d])
    }

    pub fn dim(&self) -> usize {
        self.upper.len()
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Lebesgue measure `prod_j z_j`.
    pub fn volume(&self) -> f64 {
        volume(&self.upper)
    }
}

impl TryFrom<Vec<f64>> for AnchoredBox {
    type Error = GeometryError;
    fn try_from(v: Vec<f64>) -> Result<Self, Self::Error> {
        AnchoredBox::new(v)
    }
}

impl From<AnchoredBox> for Vec<f64> {
    fn from(b: AnchoredBox) -> Self {
        b.upper
    }
}

/// Product of the coordinates of an anchor, evaluated left to right.
#[inline]
pub fn volume(upper: &[f64]) -> f64 {
    upper.iter().product()
}

/// `N` points of `[0,1]^d` stored row-major, with a per-dimension sort order.
///
/// Duplicates are allowed. Insertion order is preserved by `point(i)`;
/// `sorted(j)` lists point indices by ascending `j`-th coordinate (ties by
/// index).
#[derive(Clone, Debug)]
pub struct PointSet {
    dim: usize,
    coords: Vec<f64>,
    sorted: Vec<Vec<u32>>,
}

impl PartialEq for PointSet {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.coords == other.coords
    }
}

impl PointSet {
    /// Builds a point set from `d` and a flat row-major coordinate buffer.
    pub fn from_flat(dim: usize, coords: Vec<f64>) -> Result<Self, GeometryError> {
        if dim == 0 {
            return Err(GeometryError::ZeroDimension);
        }
        if coords.is_empty() {
            return Err(GeometryError::NoPoints);
        }
        if !coords.len().is_multiple_of(dim) {
            return Err(GeometryError::DimensionMismatch {
                expected: dim,
                found: coords.len() % dim,
            });
        }
        assert!(coords.len() / dim <= u32::MAX as usize, "too many points");
        for (k, &c) in coords.iter().enumerate() {
            check_coord(k / dim, k % dim, c)?;
        }
        let n = coords.len() / dim;
        let sorted = (0..dim)
            .map(|j| {
                let mut order: Vec<u32> = (0..n as u32).collect();
                order.sort_by(|&a, &b| {
                    coords[a as usize * dim + j]
                        .total_cmp(&coords[b as usize * dim + j])
                        .then(a.cmp(&b))
                });
                order
            })
            .collect();
        Ok(Self { dim, coords, sorted })
    }

    pub fn from_points(points: &[Point]) -> Result<Self, GeometryError> {
        let first = points.first().ok_or(GeometryError::NoPoints)?;
        let dim = first.dim();
        let mut flat = Vec::with_capacity(points.len() * dim);
        for p in points {
            if p.dim() != dim {
                return Err(GeometryError::DimensionMismatch { expected: dim, found: p.dim() });
            }
            flat.extend_from_slice(p.coords());
        }
        Self::from_flat(dim, flat)
    }

    /// Builds a point set from nested rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self, GeometryError> {
        let first = rows.first().ok_or(GeometryError::NoPoints)?;
        let dim = first.as_ref().len();
        let mut flat = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(GeometryError::DimensionMismatch { expected: dim, found: r.len() });
            }
            flat.extend_from_slice(r);
        }
        Self::from_flat(dim, flat)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of points `N`.
    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn flat(&self) -> &[f64] {
        &self.coords
    }

    #[inline]
    pub fn coord(&self, i: usize, j: usize) -> f64 {
        self.coords[i * self.dim + j]
    }

    /// Point indices by ascending coordinate `j` (0-based dimension).
    pub fn sorted(&self, j: usize) -> &[u32] {
        &self.sorted[j]
    }

    /// True when some coordinate equals 1. Such a point lies in no box `[0, z)`.
    pub fn touches_upper_face(&self, i: usize) -> bool {
        self.point(i).iter().any(|&c| c >= 1.0)
    }

    /// Number of points in the box with upper corner `box`, using `closure[j]`
    /// to decide whether `z_j` itself is included.
    pub fn count_in_box(&self, anchor: &AnchoredBox, closure: &[Boundary]) -> Result<usize, GeometryError> {
        if anchor.dim() != self.dim {
            return Err(GeometryError::DimensionMismatch { expected: self.dim, found: anchor.dim() });
        }
        if closure.len() != self.dim {
            return Err(GeometryError::DimensionMismatch { expected: self.dim, found: closure.len() });
        }
        Ok(count_raw(self, anchor.upper(), closure))
    }

    /// Count in the half-open box `[0, z)`.
    pub fn count_open(&self, anchor: &AnchoredBox) -> Result<usize, GeometryError> {
        self.count_in_box(anchor, &alloc::vec![Boundary::Open; self.dim])
    }

    /// Count in the closed box `[0, z]`.
    pub fn count_closed(&self, anchor: &AnchoredBox) -> Result<usize, GeometryError> {
        self.count_in_box(anchor, &alloc::vec![Boundary::Closed; self.dim])
    }

    /// The points `x_1(u), ..., x_N(u)` in order.
    pub fn project(&self, mask: &SubsetMask) -> Result<PointSet, GeometryError> {
        let cols: Vec<usize> = mask.indices().map(|j| j - 1).collect();
        if let Some(&last) = cols.last() {
            if last >= self.dim {
                return Err(GeometryError::MaskOutOfRange { index: last + 1, dim: self.dim });
            }
        }
        if cols.len() == self.dim {
            return Ok(self.clone());
        }
        let mut flat = Vec::with_capacity(self.len() * cols.len());
        for p in self.points() {
            flat.extend(cols.iter().map(|&j| p[j]));
        }
        let n = self.len();
        let sorted = cols.iter().map(|&j| self.sorted[j].clone()).collect();
        debug_assert_eq!(flat.len(), n * cols.len());
        Ok(PointSet { dim: cols.len(), coords: flat, sorted })
    }
}

pub(crate) fn count_raw(ps: &PointSet, upper: &[f64], closure: &[Boundary]) -> usize {
    ps.points()
        .filter(|p| {
            p.iter().zip(upper).zip(closure).all(|((&x, &z), b)| match b {
                Boundary::Open => x < z,
                Boundary::Closed => x <= z,
            })
        })
        .count()
}

impl Serialize for PointSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_seq(self.points())
    }
}

impl<'de> Deserialize<'de> for PointSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(deserializer)?;
        PointSet::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}
