//! Origin-centred cubic voxelization and per-voxel fluence statistics.
//!
//! Voxel `(i, j, k)` is the cube of edge `h` centred at `(i h, j h, k h)`,
//! `i, j, k` in `-m..=m`, so `V0` is centred on the fiber tip. Points on a
//! face between two voxels belong to the voxel on the negative side.

use std::io::{BufRead, Write};

use crate::error::{invalid, Error, Result};
use crate::geometry::Vec3;
use crate::scalar::Real;

/// CSV header of an exported fluence field.
pub const FIELD_CSV_HEADER: &str = "ix,iy,iz,x,y,z,fluence,stderr,count";

/// Named probe points used to compare estimators across runs.
pub const PROBES: [(&str, [f64; 3]); 6] = [
    ("v1", [0.0, 0.2, 0.0]),
    ("v2", [0.0, 0.6, 0.0]),
    ("v3", [0.0, 0.0, -0.2]),
    ("v4", [0.0, 0.0, -0.6]),
    ("v5", [0.0, 0.2, -0.2]),
    ("v6", [0.0, 0.6, -0.6]),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VoxelIndex {
    pub i: i32,
    pub j: i32,
    pub k: i32,
}

impl VoxelIndex {
    pub const ORIGIN: VoxelIndex = VoxelIndex { i: 0, j: 0, k: 0 };

    pub fn new(i: i32, j: i32, k: i32) -> Self {
        Self { i, j, k }
    }
}

impl std::fmt::Display for VoxelIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{},{})", self.i, self.j, self.k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoxelGrid<T> {
    h: T,
    m: u32,
}

impl<T: Real> VoxelGrid<T> {
    pub fn new(h: T, m: u32) -> Result<Self> {
        if !(h.is_finite() && h > T::zero()) {
            return Err(invalid(format!("voxel edge must be finite and > 0, got {h}")));
        }
        if m < 1 {
            return Err(invalid("grid radius must be >= 1"));
        }
        if m > 1000 {
            return Err(invalid(format!("grid radius {m} is unreasonably large")));
        }
        Ok(Self { h, m })
    }

    pub fn voxel_edge(&self) -> T {
        self.h
    }

    pub fn radius(&self) -> u32 {
        self.m
    }

    /// Voxels per axis, `2m + 1`.
    pub fn side(&self) -> usize {
        2 * self.m as usize + 1
    }

    pub fn voxel_count(&self) -> usize {
        self.side().pow(3)
    }

    /// Half the edge of the whole cube, `(m + 1/2) h`.
    pub fn half_extent(&self) -> T {
        (T::lit(self.m as f64) + T::lit(0.5)) * self.h
    }

    #[inline]
    fn axis_index(&self, coord: T) -> Option<i32> {
        // round half toward -inf: ceil(x/h - 1/2)
        let q = (coord / self.h - T::lit(0.5)).ceil();
        let m = T::lit(self.m as f64);
        if q >= -m && q <= m {
            q.to_i32()
        } else {
            None
        }
    }

    /// Voxel containing `p`, or `None` outside the grid or for non-finite input.
    #[inline]
    pub fn locate(&self, p: Vec3<T>) -> Option<VoxelIndex> {
        Some(VoxelIndex {
            i: self.axis_index(p.x)?,
            j: self.axis_index(p.y)?,
            k: self.axis_index(p.z)?,
        })
    }

    /// Linear slot of `p`, lexicographic in `(i, j, k)`.
    #[inline]
    pub fn locate_linear(&self, p: Vec3<T>) -> Option<usize> {
        self.locate(p).map(|v| self.linear(v))
    }

    pub fn contains(&self, v: VoxelIndex) -> bool {
        let m = self.m as i32;
        v.i.abs() <= m && v.j.abs() <= m && v.k.abs() <= m
    }

    #[inline]
    pub fn linear(&self, v: VoxelIndex) -> usize {
        let m = self.m as i32;
        let s = self.side();
        (((v.i + m) as usize * s) + (v.j + m) as usize) * s + (v.k + m) as usize
    }

    pub fn from_linear(&self, idx: usize) -> VoxelIndex {
        let s = self.side();
        let m = self.m as i32;
        VoxelIndex {
            i: (idx / (s * s)) as i32 - m,
            j: ((idx / s) % s) as i32 - m,
            k: (idx % s) as i32 - m,
        }
    }

    pub fn center(&self, v: VoxelIndex) -> Vec3<T> {
        Vec3::new(
            T::lit(v.i as f64) * self.h,
            T::lit(v.j as f64) * self.h,
            T::lit(v.k as f64) * self.h,
        )
    }

    /// Lower and upper corners of voxel `v`.
    pub fn bounds(&self, v: VoxelIndex) -> (Vec3<T>, Vec3<T>) {
        let c = self.center(v);
        let half = self.h * T::lit(0.5);
        let d = Vec3::new(half, half, half);
        (c - d, c + d)
    }

    pub fn indices(&self) -> impl Iterator<Item = VoxelIndex> + '_ {
        (0..self.voxel_count()).map(move |l| self.from_linear(l))
    }
}

/// Per-voxel endpoint statistics and, once finalized, fluence estimates.
///
/// Points are accumulated in *units* (independent batches: one ray for plain
/// MC and MC-SOME, one block of consecutive steps for a Markov chain). Each
/// point additionally carries a *group* label; MC-SOME and MH use the
/// rotation index, which is shared across units. The standard error combines
/// the between-unit and between-group dispersion of the per-voxel counts; with
/// one point per unit and a single group it reduces to the binomial formula.
#[derive(Debug, Clone)]
pub struct FluenceField<T> {
    grid: VoxelGrid<T>,
    scale: T,
    groups: usize,
    hits: Vec<u64>,
    hits_sq: Vec<u64>,
    hits_cross: Vec<u64>,
    group_hits: Vec<u64>,
    group_points: Vec<u64>,
    samples: u64,
    outside: u64,
    units: u64,
    unit_points_sq: u128,
    // per-unit scratch
    unit_counts: Vec<u32>,
    touched: Vec<u32>,
    unit_points: u64,
    unit_open: bool,
    estimate: Vec<T>,
    stderr: Vec<T>,
}

impl<T: Real> FluenceField<T> {
    /// Empty field over `grid`; `scale` converts endpoint probability into
    /// fluence and `groups` is the number of group labels (at least 1).
    pub fn new(grid: VoxelGrid<T>, scale: T, groups: usize) -> Self {
        let k = grid.voxel_count();
        let groups = groups.max(1);
        Self {
            grid,
            scale,
            groups,
            hits: vec![0; k],
            hits_sq: vec![0; k],
            hits_cross: vec![0; k],
            group_hits: if groups > 1 { vec![0; k * groups] } else { Vec::new() },
            group_points: vec![0; groups],
            samples: 0,
            outside: 0,
            units: 0,
            unit_points_sq: 0,
            unit_counts: Vec::new(),
            touched: Vec::new(),
            unit_points: 0,
            unit_open: false,
            estimate: Vec::new(),
            stderr: Vec::new(),
        }
    }

    pub fn grid(&self) -> &VoxelGrid<T> {
        &self.grid
    }

    pub fn scale(&self) -> T {
        self.scale
    }

    pub fn groups(&self) -> usize {
        self.groups
    }

    /// Total endpoints accumulated, inside or outside the grid.
    pub fn total_samples(&self) -> u64 {
        self.samples
    }

    pub fn outside_hits(&self) -> u64 {
        self.outside
    }

    pub fn units(&self) -> u64 {
        self.units
    }

    pub fn hits(&self, v: VoxelIndex) -> u64 {
        self.hits[self.grid.linear(v)]
    }

    pub fn hit_counts(&self) -> &[u64] {
        &self.hits
    }

    /// Adds one unit consisting of `weight` endpoints at `endpoint`.
    pub fn accumulate(&mut self, endpoint: Vec3<T>, weight: u64) {
        debug_assert!(!self.unit_open, "accumulate inside an open unit");
        self.invalidate();
        self.samples += weight;
        self.units += 1;
        self.unit_points_sq += (weight as u128) * (weight as u128);
        self.group_points[0] += weight;
        match self.grid.locate_linear(endpoint) {
            Some(l) => {
                self.hits[l] += weight;
                self.hits_sq[l] += weight * weight;
                self.hits_cross[l] += weight * weight;
                if self.groups > 1 {
                    self.group_hits[l * self.groups] += weight;
                }
            }
            None => self.outside += weight,
        }
    }

    /// Adds one unit of `weight` endpoints that fall in no voxel (or are not
    /// counted by the estimator at hand).
    pub fn accumulate_miss(&mut self, weight: u64) {
        debug_assert!(!self.unit_open, "accumulate inside an open unit");
        self.invalidate();
        self.samples += weight;
        self.units += 1;
        self.unit_points_sq += (weight as u128) * (weight as u128);
        self.group_points[0] += weight;
        self.outside += weight;
    }

    /// Opens a multi-point unit; finish it with [`end_unit`](Self::end_unit).
    pub fn begin_unit(&mut self) {
        debug_assert!(!self.unit_open);
        if self.unit_counts.is_empty() {
            self.unit_counts = vec![0; self.grid.voxel_count()];
        }
        self.invalidate();
        self.unit_open = true;
        self.unit_points = 0;
    }

    /// Records one point of the open unit with its group label.
    #[inline]
    pub fn add_point(&mut self, p: Vec3<T>, group: usize) {
        debug_assert!(self.unit_open && group < self.groups);
        self.unit_points += 1;
        self.group_points[group] += 1;
        match self.grid.locate_linear(p) {
            Some(l) => {
                if self.unit_counts[l] == 0 {
                    self.touched.push(l as u32);
                }
                self.unit_counts[l] += 1;
                if self.groups > 1 {
                    self.group_hits[l * self.groups + group] += 1;
                }
            }
            None => self.outside += 1,
        }
    }

    pub fn end_unit(&mut self) {
        debug_assert!(self.unit_open);
        let n = self.unit_points;
        for &l in &self.touched {
            let l = l as usize;
            let c = self.unit_counts[l] as u64;
            self.hits[l] += c;
            self.hits_sq[l] += c * c;
            self.hits_cross[l] += c * n;
            self.unit_counts[l] = 0;
        }
        self.touched.clear();
        self.samples += n;
        self.units += 1;
        self.unit_points_sq += (n as u128) * (n as u128);
        self.unit_open = false;
    }

    /// Adds another field's accumulators. Integer sums make the result
    /// independent of merge order.
    pub fn merge(&mut self, other: &Self) {
        assert_eq!(self.grid, other.grid, "merging fields on different grids");
        assert_eq!(self.groups, other.groups, "merging fields with different group counts");
        debug_assert!(!self.unit_open && !other.unit_open);
        self.invalidate();
        let add = |a: &mut [u64], b: &[u64]| a.iter_mut().zip(b).for_each(|(x, y)| *x += *y);
        add(&mut self.hits, &other.hits);
        add(&mut self.hits_sq, &other.hits_sq);
        add(&mut self.hits_cross, &other.hits_cross);
        add(&mut self.group_hits, &other.group_hits);
        add(&mut self.group_points, &other.group_points);
        self.samples += other.samples;
        self.outside += other.outside;
        self.units += other.units;
        self.unit_points_sq += other.unit_points_sq;
    }

    /// Identity element for [`merge`](Self::merge), without scratch space.
    pub fn empty_like(&self) -> Self {
        Self::new(self.grid, self.scale, self.groups)
    }

    fn invalidate(&mut self) {
        self.estimate.clear();
        self.stderr.clear();
    }

    /// Computes `estimate = scale * p_hat` and its standard error for every
    /// voxel, where `p_hat = hits / total_samples`.
    pub fn finalize(&mut self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::EmptyField);
        }
        let total = self.samples as f64;
        let total_sq = total * total;
        let nsq = self.unit_points_sq as f64;
        let g = self.groups;
        let mean_group = total / g as f64;
        let scale = self.scale.to_f64_lossy();
        let mut est = Vec::with_capacity(self.hits.len());
        let mut err = Vec::with_capacity(self.hits.len());
        for l in 0..self.hits.len() {
            let h = self.hits[l] as f64;
            let p = h / total;
            let row = (self.hits_sq[l] as f64 - 2.0 * p * self.hits_cross[l] as f64 + p * p * nsq) / total_sq;
            let mut var = row.max(0.0);
            if g > 1 && h > 0.0 {
                let ss: f64 = (0..g)
                    .map(|j| {
                        let d = self.group_hits[l * g + j] as f64 - p * self.group_points[j] as f64;
                        d * d
                    })
                    .sum();
                var += ss / ((g * (g - 1)) as f64 * mean_group * mean_group);
            }
            est.push(T::lit(scale * p));
            err.push(T::lit(scale * var.sqrt()));
        }
        self.estimate = est;
        self.stderr = err;
        Ok(())
    }

    pub fn is_finalized(&self) -> bool {
        !self.estimate.is_empty()
    }

    pub fn estimates(&self) -> &[T] {
        assert!(self.is_finalized(), "field not finalized");
        &self.estimate
    }

    pub fn stderrs(&self) -> &[T] {
        assert!(self.is_finalized(), "field not finalized");
        &self.stderr
    }

    pub fn estimate(&self, v: VoxelIndex) -> T {
        self.estimates()[self.grid.linear(v)]
    }

    pub fn stderr(&self, v: VoxelIndex) -> T {
        self.stderrs()[self.grid.linear(v)]
    }

    /// Estimate at the voxel containing `p`.
    pub fn estimate_at(&self, p: Vec3<T>) -> Option<T> {
        self.grid.locate(p).map(|v| self.estimate(v))
    }

    pub fn to_table(&self) -> FieldTable<T> {
        FieldTable {
            grid: self.grid,
            fluence: self.estimates().to_vec(),
            stderr: self.stderrs().to_vec(),
            count: self.hits.clone(),
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        self.to_table().write_csv(w)
    }
}

/// Finalized per-voxel values, as exported to or read from CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldTable<T> {
    pub grid: VoxelGrid<T>,
    pub fluence: Vec<T>,
    pub stderr: Vec<T>,
    pub count: Vec<u64>,
}

/// Formats a float with nine significant digits.
pub fn fmt_sig9<T: Real>(x: T) -> String {
    format!("{:.8e}", x.to_f64_lossy())
}

impl<T: Real> FieldTable<T> {
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{FIELD_CSV_HEADER}")?;
        for (l, v) in self.grid.indices().enumerate() {
            let c = self.grid.center(v);
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                v.i,
                v.j,
                v.k,
                fmt_sig9(c.x),
                fmt_sig9(c.y),
                fmt_sig9(c.z),
                fmt_sig9(self.fluence[l]),
                fmt_sig9(self.stderr[l]),
                self.count[l]
            )?;
        }
        Ok(())
    }

    /// Parses a field CSV, recovering the grid from the index and centre
    /// columns. Every voxel must appear exactly once.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| Error::Parse("empty field file".into()))??;
        if header.trim() != FIELD_CSV_HEADER {
            return Err(Error::Parse(format!("unexpected field header '{}'", header.trim())));
        }
        let mut rows = Vec::new();
        for (n, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 9 {
                return Err(Error::Parse(format!("line {}: expected 9 columns", n + 2)));
            }
            let pi = |s: &str| s.trim().parse::<i32>().map_err(|e| Error::Parse(format!("line {}: {e}", n + 2)));
            let pf = |s: &str| s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("line {}: {e}", n + 2)));
            let idx = VoxelIndex::new(pi(f[0])?, pi(f[1])?, pi(f[2])?);
            let center = [pf(f[3])?, pf(f[4])?, pf(f[5])?];
            let count = f[8].trim().parse::<u64>().map_err(|e| Error::Parse(format!("line {}: {e}", n + 2)))?;
            rows.push((idx, center, pf(f[6])?, pf(f[7])?, count));
        }
        let m = rows
            .iter()
            .map(|r| r.0.i.abs().max(r.0.j.abs()).max(r.0.k.abs()))
            .max()
            .ok_or_else(|| Error::Parse("field file has no rows".into()))?;
        let (idx, c, ..) = rows
            .iter()
            .find(|r| r.0.i != 0)
            .ok_or_else(|| Error::Parse("cannot infer voxel edge".into()))?;
        let h = c[0] / idx.i as f64;
        let grid = VoxelGrid::new(T::lit(h), m as u32)?;
        if rows.len() != grid.voxel_count() {
            return Err(Error::Parse(format!(
                "expected {} voxel rows, found {}",
                grid.voxel_count(),
                rows.len()
            )));
        }
        let k = grid.voxel_count();
        let mut table = FieldTable {
            grid,
            fluence: vec![T::zero(); k],
            stderr: vec![T::zero(); k],
            count: vec![0; k],
        };
        let mut seen = vec![false; k];
        for (idx, _, fl, se, cnt) in rows {
            let l = grid.linear(idx);
            if seen[l] {
                return Err(Error::Parse(format!("voxel {idx} listed twice")));
            }
            seen[l] = true;
            table.fluence[l] = T::lit(fl);
            table.stderr[l] = T::lit(se);
            table.count[l] = cnt;
        }
        Ok(table)
    }

    pub fn fluence_at(&self, v: VoxelIndex) -> T {
        self.fluence[self.grid.linear(v)]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> VoxelGrid<f64> {
        VoxelGrid::new(0.04, 25).unwrap()
    }

    #[test]
    fn locate_examples() {
        let g = grid();
        assert_eq!(g.locate(Vec3::zero()), Some(VoxelIndex::ORIGIN));
        assert_eq!(g.locate(Vec3::new(0.039, 0.0, 0.0)), Some(VoxelIndex::new(1, 0, 0)));
        assert_eq!(g.locate(Vec3::new(10.0, 0.0, 0.0)), None);
        assert_eq!(g.locate(Vec3::new(f64::NAN, 0.0, 0.0)), None);
    }

    #[test]
    fn ties_resolve_toward_negative_infinity() {
        let g = VoxelGrid::new(1.0, 3).unwrap();
        assert_eq!(g.locate(Vec3::new(0.5, 0.0, 0.0)).unwrap().i, 0);
        assert_eq!(g.locate(Vec3::new(-0.5, 0.0, 0.0)).unwrap().i, -1);
        assert_eq!(g.locate(Vec3::new(1.5, 0.0, 0.0)).unwrap().i, 1);
        // outer faces
        assert_eq!(g.locate(Vec3::new(3.5, 0.0, 0.0)).unwrap().i, 3);
        assert_eq!(g.locate(Vec3::new(-3.5, 0.0, 0.0)), None);
    }

    #[test]
    fn locate_of_center_is_identity() {
        let g = VoxelGrid::new(0.04, 6).unwrap();
        for v in g.indices() {
            assert_eq!(g.locate(g.center(v)), Some(v));
            assert_eq!(g.from_linear(g.linear(v)), v);
        }
        assert_eq!(g.voxel_count(), 13 * 13 * 13);
    }

    #[test]
    fn grid_validation() {
        assert!(VoxelGrid::new(0.0, 3).is_err());
        assert!(VoxelGrid::new(0.1, 0).is_err());
        assert!(VoxelGrid::new(f64::INFINITY, 2).is_err());
    }

    #[test]
    fn finalize_requires_samples() {
        let mut f = FluenceField::new(grid(), 1.0, 1);
        assert_eq!(f.finalize(), Err(Error::EmptyField));
    }

    #[test]
    fn zero_hits_give_zero_estimates() {
        let mut f = FluenceField::new(VoxelGrid::new(0.1, 2).unwrap(), 2.0, 1);
        for _ in 0..10 {
            f.accumulate(Vec3::new(5.0, 5.0, 5.0), 1);
        }
        f.finalize().unwrap();
        assert!(f.estimates().iter().all(|&e| e == 0.0));
        assert_eq!(f.outside_hits(), 10);
    }

    #[test]
    fn single_voxel_receives_scale() {
        let mut f = FluenceField::new(VoxelGrid::new(0.1, 2).unwrap(), 0.25, 1);
        for _ in 0..7 {
            f.accumulate(Vec3::new(0.1, 0.0, -0.2), 1);
        }
        f.finalize().unwrap();
        let v = VoxelIndex::new(1, 0, -2);
        assert_eq!(f.estimate(v), 0.25);
        assert_eq!(f.stderr(v), 0.0);
        let total: f64 = f.estimates().iter().sum();
        assert_eq!(total, 0.25);
    }

    #[test]
    fn binomial_stderr_for_single_point_units() {
        let g = VoxelGrid::new(0.1, 2).unwrap();
        let mut f = FluenceField::new(g, 3.0, 1);
        for i in 0..40 {
            let p = if i % 4 == 0 { Vec3::zero() } else { Vec3::new(9.0, 0.0, 0.0) };
            f.accumulate(p, 1);
        }
        f.finalize().unwrap();
        let p = 0.25;
        let want = 3.0 * (p * (1.0 - p) / 40.0f64).sqrt();
        assert!((f.stderr(VoxelIndex::ORIGIN) - want).abs() < 1e-15);
        assert_eq!(f.estimate(VoxelIndex::ORIGIN), 0.75);
    }

    #[test]
    fn unit_stderr_matches_batch_means() {
        // three units with 4 points each; the origin voxel gets 2, 0, 3 of them
        let g = VoxelGrid::new(0.1, 1).unwrap();
        let mut f = FluenceField::new(g, 1.0, 1);
        let far = Vec3::new(7.0, 0.0, 0.0);
        for c in [2usize, 0, 3] {
            f.begin_unit();
            for i in 0..4 {
                f.add_point(if i < c { Vec3::zero() } else { far }, 0);
            }
            f.end_unit();
        }
        f.finalize().unwrap();
        let x = [0.5, 0.0, 0.75];
        let mean = x.iter().sum::<f64>() / 3.0;
        let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 3.0;
        assert!((f.estimate(VoxelIndex::ORIGIN) - mean).abs() < 1e-15);
        assert!((f.stderr(VoxelIndex::ORIGIN) - (var / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn finalize_is_idempotent_and_merge_matches_sequential() {
        let g = VoxelGrid::new(0.5, 2).unwrap();
        let pts: Vec<Vec3<f64>> = (0..50)
            .map(|i| Vec3::new((i % 5) as f64 * 0.4 - 1.0, (i % 3) as f64 * 0.5 - 0.5, (i % 7) as f64 * 0.3 - 1.0))
            .collect();
        let mut whole = FluenceField::new(g, 1.0, 2);
        let mut a = whole.empty_like();
        let mut b = whole.empty_like();
        for (n, chunk) in pts.chunks(5).enumerate() {
            for f in [&mut whole, if n % 2 == 0 { &mut a } else { &mut b }] {
                f.begin_unit();
                for (i, p) in chunk.iter().enumerate() {
                    f.add_point(*p, i % 2);
                }
                f.end_unit();
            }
        }
        a.merge(&b);
        whole.finalize().unwrap();
        a.finalize().unwrap();
        assert_eq!(whole.estimates(), a.estimates());
        assert_eq!(whole.stderrs(), a.stderrs());
        let first = whole.estimates().to_vec();
        whole.finalize().unwrap();
        assert_eq!(first, whole.estimates());
        let inside: u64 = whole.hit_counts().iter().sum();
        assert_eq!(inside + whole.outside_hits(), whole.total_samples());
    }

    #[test]
    fn csv_round_trip() {
        let g = VoxelGrid::new(0.04, 2).unwrap();
        let mut f = FluenceField::new(g, 0.5, 1);
        f.accumulate(Vec3::new(0.04, -0.08, 0.0), 3);
        f.accumulate(Vec3::zero(), 1);
        f.finalize().unwrap();
        let mut buf = Vec::new();
        f.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(FIELD_CSV_HEADER));
        assert_eq!(lines.next(), Some("-2,-2,-2,-8.00000000e-2,-8.00000000e-2,-8.00000000e-2,0.00000000e0,0.00000000e0,0"));
        let t: FieldTable<f64> = FieldTable::read_csv(buf.as_slice()).unwrap();
        assert_eq!(t.grid, g);
        assert_eq!(t.fluence_at(VoxelIndex::new(1, -2, 0)), 0.375);
        assert_eq!(t.count[g.linear(VoxelIndex::ORIGIN)], 1);
    }

    #[test]
    fn csv_rejects_bad_header() {
        let r = FieldTable::<f64>::read_csv("a,b,c\n".as_bytes());
        assert!(matches!(r, Err(Error::Parse(_))));
    }
}
