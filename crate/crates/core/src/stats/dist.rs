//! Empirical laws on a lattice or on fixed-width bins, and the distances
//! between them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::increments::to_units;

/// How points are bucketed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Geometry {
    /// One bucket per atom of `span * Z`.
    Lattice { span: f64 },
    /// Bins `[origin + i w, origin + (i + 1) w)` for `i` in `0..bins`, plus an
    /// underflow bucket (index -1) and an overflow bucket (index `bins`).
    Binned { width: f64, origin: f64, bins: u32 },
}

impl Geometry {
    pub fn lattice(span: f64) -> Self {
        Geometry::Lattice { span }
    }

    /// Bins of width `width` covering `[origin, hi)` (rounded up to whole bins).
    pub fn binned(width: f64, origin: f64, hi: f64) -> Result<Self> {
        if !(width > 0.0 && width.is_finite()) || !(hi > origin) {
            return Err(Error::InvalidArgument(format!(
                "bad bin geometry width={width} [{origin}, {hi})"
            )));
        }
        let bins = ((hi - origin) / width).ceil();
        if bins > 1e7 {
            return Err(Error::InvalidArgument("too many bins".into()));
        }
        Ok(Geometry::Binned {
            width,
            origin,
            bins: bins as u32,
        })
    }

    /// Bucket of a real point.
    pub fn index(&self, y: f64) -> Result<i64> {
        match *self {
            Geometry::Lattice { span } => to_units(y, span).ok_or(Error::OffLattice(y)),
            Geometry::Binned {
                width,
                origin,
                bins,
            } => {
                let t = ((y - origin) / width).floor();
                Ok(if t < 0.0 {
                    -1
                } else if t >= bins as f64 {
                    bins as i64
                } else {
                    t as i64
                })
            }
        }
    }

    /// Real interval `[a, b)` of a bucket; lattice atoms give `a == b`.
    pub fn cell(&self, i: i64) -> (f64, f64) {
        match *self {
            Geometry::Lattice { span } => (i as f64 * span, i as f64 * span),
            Geometry::Binned {
                width,
                origin,
                bins,
            } => {
                let a = if i < 0 {
                    f64::NEG_INFINITY
                } else {
                    origin + i as f64 * width
                };
                let b = if i >= bins as i64 {
                    f64::INFINITY
                } else {
                    origin + (i + 1) as f64 * width
                };
                (a, b)
            }
        }
    }

    /// Representative point: the atom, or the bin midpoint (the finite edge
    /// for the under- and overflow buckets).
    pub fn point(&self, i: i64) -> f64 {
        let (a, b) = self.cell(i);
        if a == b {
            a
        } else if !a.is_finite() {
            b
        } else if !b.is_finite() {
            a
        } else {
            0.5 * (a + b)
        }
    }

    fn same(&self, other: &Geometry) -> bool {
        self == other
    }
}

/// Probability masses per bucket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Masses {
    pub geometry: Geometry,
    pub p: BTreeMap<i64, f64>,
}

impl Masses {
    pub fn new(geometry: Geometry, p: BTreeMap<i64, f64>) -> Self {
        Self { geometry, p }
    }

    pub fn total(&self) -> f64 {
        self.p.values().sum()
    }

    pub fn get(&self, i: i64) -> f64 {
        self.p.get(&i).copied().unwrap_or(0.0)
    }

    /// Merges groups of `factor` consecutive bins (coarsening).
    pub fn coarsen(&self, factor: u32) -> Result<Masses> {
        let Geometry::Binned {
            width,
            origin,
            bins,
        } = self.geometry
        else {
            return Err(Error::ModeMismatch);
        };
        if factor == 0 {
            return Err(Error::InvalidArgument(
                "coarsening factor must be positive".into(),
            ));
        }
        let nb = bins.div_ceil(factor);
        let geometry = Geometry::Binned {
            width: width * factor as f64,
            origin,
            bins: nb,
        };
        let mut p = BTreeMap::new();
        for (&i, &v) in &self.p {
            let j = if i < 0 {
                -1
            } else if i >= bins as i64 {
                nb as i64
            } else {
                i / factor as i64
            };
            *p.entry(j).or_insert(0.0) += v;
        }
        Ok(Masses { geometry, p })
    }
}

/// Counts of observations per bucket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalDistribution {
    geometry: Geometry,
    counts: BTreeMap<i64, u64>,
    n: u64,
}

impl EmpiricalDistribution {
    pub fn new(geometry: Geometry) -> Self {
        Self {
            geometry,
            counts: BTreeMap::new(),
            n: 0,
        }
    }

    pub fn from_samples(geometry: Geometry, ys: &[f64]) -> Result<Self> {
        let mut d = Self::new(geometry);
        for &y in ys {
            d.push(y)?;
        }
        Ok(d)
    }

    pub fn push(&mut self, y: f64) -> Result<()> {
        let i = self.geometry.index(y)?;
        *self.counts.entry(i).or_insert(0) += 1;
        self.n += 1;
        Ok(())
    }

    /// Adds `c` observations to bucket `i`.
    pub fn add_count(&mut self, i: i64, c: u64) {
        if c > 0 {
            *self.counts.entry(i).or_insert(0) += c;
            self.n += c;
        }
    }

    /// Associative, order-independent merge.
    pub fn merge(&mut self, other: &EmpiricalDistribution) -> Result<()> {
        if !self.geometry.same(&other.geometry) {
            return Err(Error::ModeMismatch);
        }
        for (&i, &c) in &other.counts {
            *self.counts.entry(i).or_insert(0) += c;
        }
        self.n += other.n;
        Ok(())
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn counts(&self) -> &BTreeMap<i64, u64> {
        &self.counts
    }

    pub fn count(&self, i: i64) -> u64 {
        self.counts.get(&i).copied().unwrap_or(0)
    }

    pub fn masses(&self) -> Result<Masses> {
        if self.n == 0 {
            return Err(Error::Empty("empirical distribution"));
        }
        let n = self.n as f64;
        Ok(Masses::new(
            self.geometry,
            self.counts
                .iter()
                .map(|(&i, &c)| (i, c as f64 / n))
                .collect(),
        ))
    }
}

/// Total variation distance `0.5 * sum |p_a - p_b|`.
///
/// On binned geometries this is the distance between the binned laws, a
/// lower bound on the distance between the underlying continuous laws.
pub fn tv_distance(a: &Masses, b: &Masses) -> Result<f64> {
    weighted_abs_diff(a, b, |_| 1.0).map(|s| 0.5 * s)
}

/// V_gamma-weighted distance `sum (1 + |y|^gamma) |p_a(y) - p_b(y)|`, with `y`
/// the atom or bin representative point.
pub fn v_gamma_distance(a: &Masses, b: &Masses, gamma: f64) -> Result<f64> {
    let g = a.geometry;
    weighted_abs_diff(a, b, |i| 1.0 + g.point(i).abs().powf(gamma))
}

fn weighted_abs_diff<F: Fn(i64) -> f64>(a: &Masses, b: &Masses, w: F) -> Result<f64> {
    if !a.geometry.same(&b.geometry) {
        return Err(Error::ModeMismatch);
    }
    let mut s = 0.0;
    for (&i, &pa) in &a.p {
        s += w(i) * (pa - b.get(i)).abs();
    }
    for (&i, &pb) in &b.p {
        if !a.p.contains_key(&i) {
            s += w(i) * pb;
        }
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lat(p: &[(i64, f64)]) -> Masses {
        Masses::new(Geometry::lattice(1.0), p.iter().cloned().collect())
    }

    #[test]
    fn tv_examples() {
        let a = lat(&[(0, 2.0 / 3.0), (1, 1.0 / 3.0)]);
        let b = lat(&[(0, 0.5), (1, 0.5)]);
        assert!((tv_distance(&a, &b).unwrap() - 1.0 / 6.0).abs() < 1e-15);
        assert_eq!(tv_distance(&a, &a).unwrap(), 0.0);
        assert_eq!(
            tv_distance(&lat(&[(0, 1.0)]), &lat(&[(1, 1.0)])).unwrap(),
            1.0
        );
    }

    #[test]
    fn v_gamma_examples() {
        let d0 = lat(&[(0, 1.0)]);
        let d1 = lat(&[(1, 1.0)]);
        assert_eq!(v_gamma_distance(&d0, &d1, 1.0).unwrap(), 3.0);
        let a = lat(&[(0, 0.3), (2, 0.7)]);
        let b = lat(&[(0, 0.6), (1, 0.4)]);
        let tv = tv_distance(&a, &b).unwrap();
        // Weight 1 + |y|^0 = 2 everywhere, and sum |p_a - p_b| = 2 TV.
        assert!((v_gamma_distance(&a, &b, 0.0).unwrap() - 4.0 * tv).abs() < 1e-15);
        assert_eq!(v_gamma_distance(&a, &a, 0.5).unwrap(), 0.0);
    }

    #[test]
    fn mode_mismatch() {
        let a = lat(&[(0, 1.0)]);
        let b = Masses::new(
            Geometry::binned(0.5, 0.0, 1.0).unwrap(),
            [(0, 1.0)].into_iter().collect(),
        );
        assert_eq!(tv_distance(&a, &b), Err(Error::ModeMismatch));
    }

    #[test]
    fn binned_indexing() {
        let g = Geometry::binned(0.05, 0.0, 1.0).unwrap();
        assert_eq!(g.index(-0.01).unwrap(), -1);
        assert_eq!(g.index(0.0).unwrap(), 0);
        assert_eq!(g.index(0.051).unwrap(), 1);
        assert_eq!(g.index(1.0).unwrap(), 20);
        assert_eq!(g.cell(20), (1.0, f64::INFINITY));
    }

    #[test]
    fn merge_is_order_independent() {
        let g = Geometry::lattice(1.0);
        let a = EmpiricalDistribution::from_samples(g, &[0.0, 1.0, 1.0]).unwrap();
        let b = EmpiricalDistribution::from_samples(g, &[2.0, 0.0]).unwrap();
        let mut ab = a.clone();
        ab.merge(&b).unwrap();
        let mut ba = b.clone();
        ba.merge(&a).unwrap();
        assert_eq!(ab, ba);
        assert_eq!(ab.n(), 5);
        assert!(EmpiricalDistribution::from_samples(g, &[0.5]).is_err());
    }
}
