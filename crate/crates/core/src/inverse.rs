//! Score function, Monte Carlo derivatives of the fluence with respect to
//! `(mu_s, mu_a)`, sensitivity scans and the hybrid Levenberg-Marquardt /
//! steepest-descent fitter.
//!
//! Everything here works in `f64`. Parameter vectors are ordered
//! `(mu_s, mu_a)`.

use std::fmt;
use std::io::{BufRead, Write};

use crate::error::{invalid, Error, Result};
use crate::geometry::Vec3;
use crate::grid::{fmt_sig9, VoxelIndex};
use crate::mc::{some_chunks, IndexedPoint, RotationSet, Scenario, SomeSizes};
use crate::rng::{Purpose, StreamFamily};

/// Fluence measurements `m_i > 0` at given positions.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurements {
    pub points: Vec<(Vec3<f64>, f64)>,
}

pub const MEASUREMENTS_CSV_HEADER: &str = "x,y,z,value";

impl Measurements {
    pub fn new(points: Vec<(Vec3<f64>, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(invalid("no measurements"));
        }
        if let Some((p, m)) = points.iter().find(|(_, m)| !(m.is_finite() && *m > 0.0)) {
            return Err(invalid(format!(
                "measurement at ({}, {}, {}) must be finite and > 0, got {m}",
                p.x, p.y, p.z
            )));
        }
        Ok(Self { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn values(&self) -> Vec<f64> {
        self.points.iter().map(|(_, m)| *m).collect()
    }

    pub fn positions(&self) -> Vec<Vec3<f64>> {
        self.points.iter().map(|(p, _)| *p).collect()
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{MEASUREMENTS_CSV_HEADER}")?;
        for (p, m) in &self.points {
            writeln!(w, "{},{},{},{}", p.x, p.y, p.z, fmt_sig9(*m))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        if header.trim() != MEASUREMENTS_CSV_HEADER {
            return Err(Error::Parse(format!("expected header `{MEASUREMENTS_CSV_HEADER}`, got `{}`", header.trim())));
        }
        let mut points = Vec::new();
        for (no, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let vals: Vec<f64> = line
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse(format!("measurements line {}: {e}", no + 2)))?;
            if vals.len() != 4 {
                return Err(Error::Parse(format!("measurements line {}: expected 4 fields, got {}", no + 2, vals.len())));
            }
            points.push((Vec3::new(vals[0], vals[1], vals[2]), vals[3]));
        }
        Self::new(points)
    }
}

/// `J = 1/2 sum ((L_i - m_i) / m_i)^2`.
pub fn score_j(estimates: &[f64], meas: &Measurements) -> Result<f64> {
    if estimates.len() != meas.len() {
        return Err(invalid(format!("{} estimates for {} measurements", estimates.len(), meas.len())));
    }
    Ok(0.5
        * estimates
            .iter()
            .zip(&meas.points)
            .map(|(l, (_, m))| ((l - m) / m).powi(2))
            .sum::<f64>())
}

/// Index of each quantity in a [`DerivBundle`] row.
pub mod slot {
    pub const L: usize = 0;
    pub const D_MU_S: usize = 1;
    pub const D_MU_A: usize = 2;
    pub const D2_MU_S: usize = 3;
    pub const D2_MU_S_MU_A: usize = 4;
    pub const D2_MU_A: usize = 5;
}

/// Per-hit payloads, before the fluence scale: with `A = sum_{j <= n} r_j`
/// and `q = n / mu_s - A`,
/// `[1, q, -A, q^2 - n / mu_s^2, -A q, A^2]`.
#[inline]
pub fn payloads(n: u64, path_length: f64, mu_s: f64) -> [f64; 6] {
    let a = path_length;
    let n_over = n as f64 / mu_s;
    let q = n_over - a;
    [1.0, q, -a, q * q - n_over / mu_s, -a * q, a * a]
}

/// Fluence, gradient and Hessian estimates at a set of voxels, all from one
/// MC-SOME sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivBundle {
    pub voxels: Vec<VoxelIndex>,
    /// Rows indexed by [`slot`].
    pub values: Vec<[f64; 6]>,
    pub stderr: Vec<[f64; 6]>,
    pub hits: Vec<u64>,
    /// Points drawn (M * M_points * M_rot).
    pub samples: u64,
}

impl DerivBundle {
    pub fn fluence(&self, i: usize) -> f64 {
        self.values[i][slot::L]
    }

    pub fn fluences(&self) -> Vec<f64> {
        self.values.iter().map(|v| v[slot::L]).collect()
    }

    /// `(dL/dmu_s, dL/dmu_a)`.
    pub fn grad(&self, i: usize) -> [f64; 2] {
        [self.values[i][slot::D_MU_S], self.values[i][slot::D_MU_A]]
    }

    pub fn hess(&self, i: usize) -> [[f64; 2]; 2] {
        let v = &self.values[i];
        [[v[slot::D2_MU_S], v[slot::D2_MU_S_MU_A]], [v[slot::D2_MU_S_MU_A], v[slot::D2_MU_A]]]
    }
}

#[derive(Debug, Clone)]
struct DerivAcc {
    ray: Vec<[f64; 6]>,
    sum: Vec<[f64; 6]>,
    sum_sq: Vec<[f64; 6]>,
    group: Vec<[f64; 6]>,
    hits: Vec<u64>,
}

impl DerivAcc {
    fn new(k: usize, groups: usize) -> Self {
        Self {
            ray: vec![[0.0; 6]; k],
            sum: vec![[0.0; 6]; k],
            sum_sq: vec![[0.0; 6]; k],
            group: vec![[0.0; 6]; k * groups],
            hits: vec![0; k],
        }
    }
}

fn add6(a: &mut [f64; 6], b: &[f64; 6]) {
    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
}

/// Resolves positions to voxels of the scenario's grid.
pub fn voxels_of(scn: &Scenario<f64>, positions: &[Vec3<f64>]) -> Result<Vec<VoxelIndex>> {
    positions
        .iter()
        .map(|p| {
            scn.grid
                .locate(*p)
                .ok_or_else(|| invalid(format!("position ({}, {}, {}) is outside the grid", p.x, p.y, p.z)))
        })
        .collect()
}

/// Runs MC-SOME once and accumulates, for every hit of a requested voxel,
/// the fluence and derivative payloads.
///
/// Standard errors treat rays as units and rotation indices as groups, as
/// [`FluenceField`](crate::grid::FluenceField) does.
pub fn estimate_with_derivs(
    scn: &Scenario<f64>,
    voxels: &[VoxelIndex],
    sizes: SomeSizes,
    family: &StreamFamily,
) -> Result<DerivBundle> {
    if voxels.is_empty() {
        return Err(invalid("no voxels requested"));
    }
    let targets: Vec<(usize, usize)> = voxels
        .iter()
        .enumerate()
        .map(|(i, v)| {
            if scn.grid.contains(*v) {
                Ok((scn.grid.linear(*v), i))
            } else {
                Err(invalid(format!("voxel {v} is outside the grid")))
            }
        })
        .collect::<Result<_>>()?;
    let k = voxels.len();
    let groups = sizes.rotations as usize;
    let mu_s = scn.params.mu_s();
    let grid = scn.grid;
    let (_, chunks) = some_chunks(
        scn,
        sizes,
        family,
        || DerivAcc::new(k, groups),
        |acc: &mut DerivAcc, rots: &RotationSet<f64>, pt: IndexedPoint<f64>| {
            let mut pay: Option<[f64; 6]> = None;
            for (j, r) in rots.rotations.iter().enumerate() {
                let Some(l) = grid.locate_linear(r.apply(pt.point)) else { continue };
                for &(tl, i) in &targets {
                    if tl == l {
                        let p = *pay.get_or_insert_with(|| payloads(pt.n, pt.path_length, mu_s));
                        add6(&mut acc.ray[i], &p);
                        add6(&mut acc.group[i * groups + j], &p);
                        acc.hits[i] += 1;
                    }
                }
            }
        },
        |acc: &mut DerivAcc| {
            for i in 0..acc.ray.len() {
                let y = std::mem::replace(&mut acc.ray[i], [0.0; 6]);
                add6(&mut acc.sum[i], &y);
                let sq = y.map(|v| v * v);
                add6(&mut acc.sum_sq[i], &sq);
            }
        },
    );
    let mut total = DerivAcc::new(k, groups);
    for c in &chunks {
        for i in 0..k {
            add6(&mut total.sum[i], &c.sum[i]);
            add6(&mut total.sum_sq[i], &c.sum_sq[i]);
            total.hits[i] += c.hits[i];
        }
        for (t, g) in total.group.iter_mut().zip(&c.group) {
            add6(t, g);
        }
    }
    let scale = scn.scale();
    let rays = sizes.rays as f64;
    let per_ray = sizes.points as f64 * sizes.rotations as f64;
    let per_group = rays * sizes.points as f64;
    let mut values = Vec::with_capacity(k);
    let mut stderr = Vec::with_capacity(k);
    for i in 0..k {
        let mut v = [0.0; 6];
        let mut e = [0.0; 6];
        for s in 0..6 {
            let mean = total.sum[i][s] / (rays * per_ray);
            let mut var = if sizes.rays > 1 {
                let ss = total.sum_sq[i][s] / (per_ray * per_ray) - rays * mean * mean;
                ss.max(0.0) / ((rays - 1.0) * rays)
            } else {
                0.0
            };
            if groups > 1 {
                let ss: f64 = (0..groups)
                    .map(|j| (total.group[i * groups + j][s] / per_group - mean).powi(2))
                    .sum();
                var += ss / ((groups * (groups - 1)) as f64);
            }
            v[s] = scale * mean;
            e[s] = scale * var.sqrt();
        }
        values.push(v);
        stderr.push(e);
    }
    Ok(DerivBundle {
        voxels: voxels.to_vec(),
        values,
        stderr,
        hits: total.hits,
        samples: sizes.total_points(),
    })
}

/// Gradient and Hessian of `J` from a bundle covering the measurement
/// voxels, in measurement order.
pub fn grad_and_hess_j(bundle: &DerivBundle, meas: &Measurements) -> Result<([f64; 2], [[f64; 2]; 2])> {
    if bundle.values.len() != meas.len() {
        return Err(invalid(format!(
            "bundle covers {} voxels for {} measurements",
            bundle.values.len(),
            meas.len()
        )));
    }
    let mut g = [0.0; 2];
    let mut h = [[0.0; 2]; 2];
    for (i, (_, m)) in meas.points.iter().enumerate() {
        let w = (bundle.fluence(i) - m) / (m * m);
        let gl = bundle.grad(i);
        let hl = bundle.hess(i);
        for a in 0..2 {
            g[a] += w * gl[a];
        }
        // Upper triangle, mirrored below so the result is exactly symmetric.
        for a in 0..2 {
            for b in a..2 {
                h[a][b] += w * hl[a][b] + gl[a] * gl[b] / (m * m);
            }
        }
    }
    h[1][0] = h[0][1];
    Ok((g, h))
}

/// Eigenvalues of a symmetric 2x2 matrix, larger first.
pub fn eigen_sym2(h: &[[f64; 2]; 2]) -> [f64; 2] {
    let half_tr = 0.5 * (h[0][0] + h[1][1]);
    let d = (0.25 * (h[0][0] - h[1][1]).powi(2) + h[0][1] * h[0][1]).sqrt();
    [half_tr + d, half_tr - d]
}

/// Options of [`hybrid_descent`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescentOpts {
    pub lambda: f64,
    pub eps_score: f64,
    pub tau0: f64,
    pub iter_cap: u32,
    pub sizes: SomeSizes,
}

impl DescentOpts {
    /// `tau_k = tau0 / (1 + k / 10)`.
    pub fn tau(&self, k: u32) -> f64 {
        self.tau0 / (1.0 + k as f64 / 10.0)
    }
}

pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepType {
    /// Damped Newton (Levenberg-Marquardt) step.
    Lm,
    Steepest,
    /// Final iterate, no step taken.
    None,
}

impl fmt::Display for StepType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StepType::Lm => "LM",
            StepType::Steepest => "steepest",
            StepType::None => "none",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescentRow {
    pub k: u32,
    pub mu_s: f64,
    pub mu_a: f64,
    pub j: f64,
    pub grad: [f64; 2],
    pub eig: [f64; 2],
    pub step: StepType,
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DescentTrace {
    pub rows: Vec<DescentRow>,
}

pub const DESCENT_CSV_HEADER: &str = "k,mu_s,mu_a,J,dJ_dmu_s,dJ_dmu_a,eig1,eig2,step_type,tau";

impl DescentTrace {
    pub fn last(&self) -> Option<&DescentRow> {
        self.rows.last()
    }

    pub fn converged(&self, eps_score: f64) -> bool {
        self.last().is_some_and(|r| r.j <= eps_score)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{DESCENT_CSV_HEADER}")?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{},{}",
                r.k,
                fmt_sig9(r.mu_s),
                fmt_sig9(r.mu_a),
                fmt_sig9(r.j),
                fmt_sig9(r.grad[0]),
                fmt_sig9(r.grad[1]),
                fmt_sig9(r.eig[0]),
                fmt_sig9(r.eig[1]),
                r.step,
                fmt_sig9(r.tau)
            )?;
        }
        Ok(())
    }
}

/// Solves `(H + lambda diag H) x = g`, or `None` when the damped matrix is
/// singular or its condition number exceeds [`MAX_CONDITION`].
fn damped_solve(h: &[[f64; 2]; 2], lambda: f64, g: [f64; 2]) -> Option<[f64; 2]> {
    let d = [[h[0][0] * (1.0 + lambda), h[0][1]], [h[1][0], h[1][1] * (1.0 + lambda)]];
    let ev = eigen_sym2(&d);
    let (big, small) = (ev[0].abs().max(ev[1].abs()), ev[0].abs().min(ev[1].abs()));
    if !(small > 0.0) || !(big / small <= MAX_CONDITION) {
        return None;
    }
    let det = d[0][0] * d[1][1] - d[0][1] * d[1][0];
    let x = [(d[1][1] * g[0] - d[0][1] * g[1]) / det, (d[0][0] * g[1] - d[1][0] * g[0]) / det];
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Fits `(mu_s, mu_a)` to `meas`, holding `g` and the source fixed.
///
/// Iteration `k` estimates a fresh bundle at the current point with the
/// stream family `family.child(Descent, k)`. If `J <= eps_score` it stops;
/// otherwise it takes a Levenberg-Marquardt step
/// `-tau_k (H + lambda diag H)^-1 grad J` when both Hessian eigenvalues are
/// positive, and a steepest step `-tau_k (J / |grad J|) grad J` else. A
/// coordinate that would become `<= 0` is set to half its previous value.
pub fn hybrid_descent(
    base: &Scenario<f64>,
    meas: &Measurements,
    init: (f64, f64),
    opts: &DescentOpts,
    family: &StreamFamily,
) -> Result<DescentTrace> {
    if !(init.0 > 0.0 && init.1 > 0.0) {
        return Err(invalid(format!("initial point ({}, {}) must be positive", init.0, init.1)));
    }
    if opts.iter_cap == 0 {
        return Err(invalid("iteration cap must be >= 1"));
    }
    let voxels = voxels_of(base, &meas.positions())?;
    let mut x = [init.0, init.1];
    let mut trace = DescentTrace::default();
    for k in 0..opts.iter_cap {
        let params = base.params.with_coefficients(x[0], x[1])?;
        let scn = base.with_params(params);
        let bundle = estimate_with_derivs(&scn, &voxels, opts.sizes, &family.child(Purpose::Descent, k as u64))?;
        let j = score_j(&bundle.fluences(), meas)?;
        let (grad, hess) = grad_and_hess_j(&bundle, meas)?;
        let eig = eigen_sym2(&hess);
        let mut row = DescentRow { k, mu_s: x[0], mu_a: x[1], j, grad, eig, step: StepType::None, tau: 0.0 };
        if j <= opts.eps_score {
            trace.rows.push(row);
            break;
        }
        let tau = opts.tau(k);
        let lm = if eig[0] > 0.0 && eig[1] > 0.0 { damped_solve(&hess, opts.lambda, grad) } else { None };
        let step = match lm {
            Some(d) => {
                row.step = StepType::Lm;
                [-tau * d[0], -tau * d[1]]
            }
            None => {
                row.step = StepType::Steepest;
                let norm = (grad[0] * grad[0] + grad[1] * grad[1]).sqrt();
                if norm > 0.0 {
                    [-tau * j / norm * grad[0], -tau * j / norm * grad[1]]
                } else {
                    [0.0, 0.0]
                }
            }
        };
        row.tau = tau;
        trace.rows.push(row);
        for a in 0..2 {
            let next = x[a] + step[a];
            x[a] = if next > 0.0 && next.is_finite() { next } else { 0.5 * x[a] };
        }
    }
    Ok(trace)
}

/// Fluence estimates at the measurement positions from one MC-SOME run.
pub fn estimate_at(scn: &Scenario<f64>, positions: &[Vec3<f64>], sizes: SomeSizes, family: &StreamFamily) -> Result<Vec<f64>> {
    let voxels = voxels_of(scn, positions)?;
    Ok(estimate_with_derivs(scn, &voxels, sizes, family)?.fluences())
}

/// Synthetic measurements: MC-SOME estimates at `positions` under `truth`,
/// drawn from the `Measurements` stream of `family`.
pub fn synthesize_measurements(
    truth: &Scenario<f64>,
    positions: &[Vec3<f64>],
    sizes: SomeSizes,
    family: &StreamFamily,
) -> Result<Measurements> {
    let values = estimate_at(truth, positions, sizes, &family.child(Purpose::Measurements, 0))?;
    if let Some((i, _)) = values.iter().enumerate().find(|(_, v)| **v <= 0.0) {
        let p = positions[i];
        return Err(Error::Diagnostic(format!(
            "no hits at ({}, {}, {}); increase the sample size",
            p.x, p.y, p.z
        )));
    }
    Measurements::new(positions.iter().copied().zip(values).collect())
}

/// Parameter grid of a sensitivity scan.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanGrid {
    pub g: Vec<f64>,
    pub mu_a: Vec<f64>,
    pub mu_s: Vec<f64>,
}

impl ScanGrid {
    /// Parses `g=0.85,0.9;mu_a=0.5,1;mu_s=75,105`.
    pub fn parse(text: &str) -> Result<Self> {
        let (mut g, mut mu_a, mut mu_s) = (None, None, None);
        for part in text.split(';').map(str::trim).filter(|s| !s.is_empty()) {
            let (key, vals) = part
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("grid entry `{part}` is not `key=v1,v2,...`")))?;
            let vals: Vec<f64> = vals
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse(format!("grid entry `{part}`: {e}")))?;
            if vals.is_empty() {
                return Err(Error::Parse(format!("grid entry `{part}` has no values")));
            }
            match key.trim() {
                "g" => g = Some(vals),
                "mu_a" => mu_a = Some(vals),
                "mu_s" => mu_s = Some(vals),
                other => return Err(Error::Parse(format!("unknown grid key `{other}`"))),
            }
        }
        let need = |v: Option<Vec<f64>>, k: &str| v.ok_or_else(|| Error::Parse(format!("grid text is missing `{k}`")));
        Ok(Self { g: need(g, "g")?, mu_a: need(mu_a, "mu_a")?, mu_s: need(mu_s, "mu_s")? })
    }

    pub fn len(&self) -> usize {
        self.g.len() * self.mu_a.len() * self.mu_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Triplets `(g, mu_a, mu_s)` with `mu_s` varying fastest.
    pub fn triplets(&self) -> Vec<(f64, f64, f64)> {
        let mut out = Vec::with_capacity(self.len());
        for &g in &self.g {
            for &a in &self.mu_a {
                for &s in &self.mu_s {
                    out.push((g, a, s));
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanRow {
    pub g: f64,
    pub mu_a: f64,
    pub mu_s: f64,
    pub j: f64,
}

pub const SCAN_CSV_HEADER: &str = "g,mu_a,mu_s,J";

pub fn write_scan_csv<W: Write>(mut w: W, rows: &[ScanRow]) -> Result<()> {
    writeln!(w, "{SCAN_CSV_HEADER}")?;
    for r in rows {
        writeln!(w, "{},{},{},{}", r.g, r.mu_a, r.mu_s, fmt_sig9(r.j))?;
    }
    Ok(())
}

/// `J` at every grid triplet; triplet `i` uses `family.child(Scan, i)`.
pub fn sensitivity_scan(
    base: &Scenario<f64>,
    grid: &ScanGrid,
    meas: &Measurements,
    sizes: SomeSizes,
    family: &StreamFamily,
) -> Result<Vec<ScanRow>> {
    if grid.is_empty() {
        return Err(invalid("empty parameter grid"));
    }
    let voxels = voxels_of(base, &meas.positions())?;
    grid.triplets()
        .into_iter()
        .enumerate()
        .map(|(i, (g, mu_a, mu_s))| {
            let params = crate::optics::OpticalParams::new(mu_s, mu_a, g)?;
            let scn = base.with_params(params);
            let b = estimate_with_derivs(&scn, &voxels, sizes, &family.child(Purpose::Scan, i as u64))?;
            Ok(ScanRow { g, mu_a, mu_s, j: score_j(&b.fluences(), meas)? })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meas(vals: &[f64]) -> Measurements {
        Measurements::new(vals.iter().map(|v| (Vec3::zero(), *v)).collect()).unwrap()
    }

    #[test]
    fn score_examples() {
        let m = meas(&[2.0, 3.0]);
        assert_eq!(score_j(&[2.0, 3.0], &m).unwrap(), 0.0);
        assert_eq!(score_j(&[4.0], &meas(&[2.0])).unwrap(), 0.5);
        assert!(score_j(&[1.0], &m).is_err());
    }

    #[test]
    fn measurements_validate() {
        assert!(Measurements::new(vec![]).is_err());
        assert!(Measurements::new(vec![(Vec3::zero(), 0.0)]).is_err());
    }

    #[test]
    fn measurements_csv_round_trip() {
        let m = Measurements::new(vec![(Vec3::new(0.0, 0.6, 0.0), 2.5e-7), (Vec3::new(0.0, 0.0, -0.6), 3.1e-7)]).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let back = Measurements::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.positions(), m.positions());
        for (a, b) in back.values().iter().zip(m.values()) {
            assert!((a - b).abs() < 1e-15 * b);
        }
        assert!(Measurements::read_csv("x,y,z,value\n".as_bytes()).is_err());
    }

    fn bundle(l: f64, g: [f64; 2], h: [[f64; 2]; 2]) -> DerivBundle {
        DerivBundle {
            voxels: vec![VoxelIndex::ORIGIN],
            values: vec![[l, g[0], g[1], h[0][0], h[0][1], h[1][1]]],
            stderr: vec![[0.0; 6]],
            hits: vec![1],
            samples: 1,
        }
    }

    #[test]
    fn perfect_fit_has_zero_gradient_and_gauss_newton_hessian() {
        let b = bundle(2.0, [0.3, -1.5], [[0.7, 0.1], [0.1, 4.0]]);
        let (g, h) = grad_and_hess_j(&b, &meas(&[2.0])).unwrap();
        assert_eq!(g, [0.0, 0.0]);
        let want = [[0.09 / 4.0, -0.45 / 4.0], [-0.45 / 4.0, 2.25 / 4.0]];
        for a in 0..2 {
            for b in 0..2 {
                assert!((h[a][b] - want[a][b]).abs() < 1e-15);
            }
        }
        assert!(eigen_sym2(&h)[1] >= -1e-15);
    }

    #[test]
    fn single_measurement_matches_hand_expansion() {
        // J = (L - m)^2 / (2 m^2): dJ = (L - m) L' / m^2,
        // d2J = ((L - m) L'' + L' L'^T) / m^2.
        let (l, m) = (3.0, 2.0);
        let gl = [0.5, -2.0];
        let hl = [[0.25, 0.75], [0.75, 6.0]];
        let (g, h) = grad_and_hess_j(&bundle(l, gl, hl), &meas(&[m])).unwrap();
        for a in 0..2 {
            assert!((g[a] - (l - m) * gl[a] / (m * m)).abs() < 1e-15);
            for b in 0..2 {
                let want = ((l - m) * hl[a][b] + gl[a] * gl[b]) / (m * m);
                assert!((h[a][b] - want).abs() < 1e-15);
            }
        }
        assert_eq!(h[0][1], h[1][0]);
    }

    #[test]
    fn eigenvalues_closed_form() {
        let e = eigen_sym2(&[[2.0, 1.0], [1.0, 2.0]]);
        assert!((e[0] - 3.0).abs() < 1e-15 && (e[1] - 1.0).abs() < 1e-15);
        let e = eigen_sym2(&[[1.0, 0.0], [0.0, -4.0]]);
        assert_eq!(e, [1.0, -4.0]);
    }

    #[test]
    fn damped_solve_guards_condition() {
        let x = damped_solve(&[[2.0, 0.0], [0.0, 4.0]], 0.0, [2.0, 4.0]).unwrap();
        assert_eq!(x, [1.0, 1.0]);
        assert!(damped_solve(&[[1.0, 0.0], [0.0, 1e-14]], 0.0, [1.0, 1.0]).is_none());
        assert!(damped_solve(&[[1.0, 1.0], [1.0, 1.0]], 0.0, [1.0, 1.0]).is_none());
    }

    #[test]
    fn payloads_at_zero_scattering() {
        let p = payloads(0, 0.3, 50.0);
        assert_eq!(p, [1.0, -0.3, -0.3, 0.09, 0.09, 0.09]);
    }

    #[test]
    fn scan_grid_parse() {
        let g = ScanGrid::parse("g=0.85,0.9;mu_a=0.5;mu_s=75,105,135").unwrap();
        assert_eq!(g.len(), 6);
        assert_eq!(g.triplets()[1], (0.85, 0.5, 105.0));
        assert!(ScanGrid::parse("g=0.9;mu_a=1").is_err());
        assert!(ScanGrid::parse("g=0.9;mu_a=x;mu_s=1").is_err());
        assert!(ScanGrid::parse("g=0.9;mu_a=1;mu_s=1;k=2").is_err());
    }
}
