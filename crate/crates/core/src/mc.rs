//! Plain Monte Carlo and MC-SOME fluence estimators, and the quadrature
//! value of the unscattered contribution used to check them.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::geometry::{Direction, Mat3, Vec3};
use crate::grid::{FluenceField, VoxelGrid, VoxelIndex};
use crate::optics::{sample_geometric, OpticalParams, SourceSpec};
use crate::quad;
use crate::ray::Walker;
use crate::rng::{Purpose, StreamFamily};
use crate::scalar::Real;

/// Rays per work chunk. Each chunk owns one random stream, so the chunking
/// (not the thread count) fixes which numbers every ray consumes.
pub const CHUNK_RAYS: u64 = 256;

/// Medium, source and discretization of one simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scenario<T> {
    pub params: OpticalParams<T>,
    pub source: SourceSpec<T>,
    pub grid: VoxelGrid<T>,
}

impl<T: Real> Scenario<T> {
    pub fn new(params: OpticalParams<T>, source: SourceSpec<T>, grid: VoxelGrid<T>) -> Self {
        Self { params, source, grid }
    }

    /// `c (1 - cos alpha) / (2 mu_a)`.
    pub fn scale(&self) -> T {
        self.source.fluence_scale(&self.params)
    }

    pub fn with_params(&self, params: OpticalParams<T>) -> Self {
        Self { params, ..*self }
    }
}

/// Sample sizes of the MC-SOME estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SomeSizes {
    pub rays: u64,
    pub points: u32,
    pub rotations: u32,
}

impl SomeSizes {
    pub fn new(rays: u64, points: u32, rotations: u32) -> Result<Self> {
        if rays == 0 || points == 0 || rotations == 0 {
            return Err(invalid(format!(
                "MC-SOME needs M, M_points, M_rot >= 1 (got {rays}, {points}, {rotations})"
            )));
        }
        Ok(Self { rays, points, rotations })
    }

    pub fn total_points(&self) -> u64 {
        self.rays * self.points as u64 * self.rotations as u64
    }
}

fn chunks(m: u64) -> impl IndexedParallelIterator<Item = (u64, u64)> {
    let n = m.div_ceil(CHUNK_RAYS) as usize;
    (0..n).into_par_iter().map(move |c| {
        let c = c as u64;
        (c, CHUNK_RAYS.min(m - c * CHUNK_RAYS))
    })
}

/// Plain Monte Carlo: bins the endpoint `S_N` of `m` independent rays.
pub fn estimate_mc<T: Real>(scn: &Scenario<T>, m: u64, family: &StreamFamily) -> Result<FluenceField<T>> {
    mc_with(scn, m, family, |_n| true)
}

/// Plain Monte Carlo restricted to unscattered rays: only endpoints with
/// `N = 0` are binned; the rest count as misses. Its expectation is the
/// [`direct_term_oracle`] value.
pub fn estimate_mc_unscattered<T: Real>(scn: &Scenario<T>, m: u64, family: &StreamFamily) -> Result<FluenceField<T>> {
    mc_with(scn, m, family, |n| n == 0)
}

fn mc_with<T: Real>(
    scn: &Scenario<T>,
    m: u64,
    family: &StreamFamily,
    keep: impl Fn(u64) -> bool + Sync,
) -> Result<FluenceField<T>> {
    if m == 0 {
        return Err(invalid("M must be >= 1"));
    }
    let ln_rho = scn.params.rho().ln();
    let proto = FluenceField::new(scn.grid, scn.scale(), 1);
    let mut field = chunks(m)
        .fold(
            || proto.empty_like(),
            |mut acc, (c, count)| {
                let mut rng = family.rng(Purpose::Rays, c);
                for _ in 0..count {
                    let n = sample_geometric(&mut rng, ln_rho);
                    let w0 = scn.source.sample(&mut rng);
                    if !keep(n) {
                        acc.accumulate_miss(1);
                        continue;
                    }
                    let mut walker = Walker::new(&scn.params, w0);
                    for _ in 0..=n {
                        walker.step(&mut rng);
                    }
                    acc.accumulate(walker.position(), 1);
                }
                acc
            },
        )
        .reduce(
            || proto.empty_like(),
            |mut a, b| {
                a.merge(&b);
                a
            },
        );
    field.finalize()?;
    Ok(field)
}

/// The `M_rot` initial directions of a rotation-replicated estimator and the
/// rotations carrying the first onto each of them.
#[derive(Debug, Clone)]
pub struct RotationSet<T> {
    pub directions: Vec<Direction<T>>,
    pub rotations: Vec<Mat3<T>>,
}

impl<T: Real> RotationSet<T> {
    pub fn draw<R: Rng + ?Sized>(source: &SourceSpec<T>, count: u32, rng: &mut R) -> Self {
        let directions: Vec<Direction<T>> = (0..count.max(1)).map(|_| source.sample(rng)).collect();
        Self::from_base(directions[0], directions)
    }

    /// Rotations carrying `base` onto each of `directions`.
    pub fn from_base(base: Direction<T>, directions: Vec<Direction<T>>) -> Self {
        let rotations = directions
            .iter()
            .map(|d| if *d == base { Mat3::identity() } else { Mat3::rotation_between(base, *d) })
            .collect();
        Self { directions, rotations }
    }

    pub fn base(&self) -> Direction<T> {
        self.directions[0]
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }
}

/// One walk point reached at a drawn geometric index.
#[derive(Debug, Clone, Copy)]
pub struct IndexedPoint<T> {
    /// Unrotated position `S_n`.
    pub point: Vec3<T>,
    /// The index `n`.
    pub n: u64,
    /// `sum_{i <= n} r_i`.
    pub path_length: T,
}

/// Draws `points` i.i.d. geometric indices, walks from `w0` up to the largest
/// and reports the point at each index (with multiplicity, in index order).
pub(crate) fn walk_indexed<T: Real, R: Rng + ?Sized>(
    rng: &mut R,
    params: &OpticalParams<T>,
    ln_rho: T,
    w0: Direction<T>,
    indices: &mut Vec<u64>,
    points: u32,
    mut emit: impl FnMut(IndexedPoint<T>),
) {
    indices.clear();
    indices.extend((0..points).map(|_| sample_geometric(rng, ln_rho)));
    indices.sort_unstable();
    let mut walker = Walker::new(params, w0);
    let mut next = 0usize;
    let mut p = 0u64;
    walker.step(rng);
    loop {
        while next < indices.len() && indices[next] == p {
            emit(IndexedPoint { point: walker.position(), n: p, path_length: walker.path_length() });
            next += 1;
        }
        if next == indices.len() {
            break;
        }
        walker.step(rng);
        p += 1;
    }
}

/// Runs the MC-SOME ray loop: draws the rotation set from the `Rotations`
/// stream, then for each ray (chunked, in parallel) calls `visit` for every
/// drawn index. Per-chunk accumulators are produced by `init`, and `ray_done`
/// closes each ray.
pub(crate) fn some_chunks<T, A, I, V, D>(
    scn: &Scenario<T>,
    sizes: SomeSizes,
    family: &StreamFamily,
    init: I,
    visit: V,
    ray_done: D,
) -> (RotationSet<T>, Vec<A>)
where
    T: Real,
    A: Send,
    I: Fn() -> A + Sync,
    V: Fn(&mut A, &RotationSet<T>, IndexedPoint<T>) + Sync,
    D: Fn(&mut A) + Sync,
{
    let mut rot_rng = family.rng(Purpose::Rotations, 0);
    let rots = RotationSet::draw(&scn.source, sizes.rotations, &mut rot_rng);
    let ln_rho = scn.params.rho().ln();
    let accs = chunks(sizes.rays)
        .map(|(c, count)| {
            let mut rng = family.rng(Purpose::Rays, c);
            let mut acc = init();
            let mut indices = Vec::with_capacity(sizes.points as usize);
            for _ in 0..count {
                walk_indexed(&mut rng, &scn.params, ln_rho, rots.base(), &mut indices, sizes.points, |pt| {
                    visit(&mut acc, &rots, pt)
                });
                ray_done(&mut acc);
            }
            acc
        })
        .collect();
    (rots, accs)
}

/// MC-SOME: `M` rays sharing the first of `M_rot` cone directions, `M_points`
/// geometric indices per ray, every point replicated over the rotations.
/// Each ray is one statistical unit and the rotation index its group.
pub fn estimate_mc_some<T: Real>(scn: &Scenario<T>, sizes: SomeSizes, family: &StreamFamily) -> Result<FluenceField<T>> {
    let proto = FluenceField::new(scn.grid, scn.scale(), sizes.rotations as usize);
    let mut rot_rng = family.rng(Purpose::Rotations, 0);
    let rots = RotationSet::draw(&scn.source, sizes.rotations, &mut rot_rng);
    let ln_rho = scn.params.rho().ln();
    let mut field = chunks(sizes.rays)
        .fold(
            || proto.empty_like(),
            |mut acc, (c, count)| {
                let mut rng = family.rng(Purpose::Rays, c);
                let mut indices = Vec::with_capacity(sizes.points as usize);
                for _ in 0..count {
                    acc.begin_unit();
                    walk_indexed(&mut rng, &scn.params, ln_rho, rots.base(), &mut indices, sizes.points, |pt| {
                        for (j, r) in rots.rotations.iter().enumerate() {
                            acc.add_point(r.apply(pt.point), j);
                        }
                    });
                    acc.end_unit();
                }
                acc
            },
        )
        .reduce(
            || proto.empty_like(),
            |mut a, b| {
                a.merge(&b);
                a
            },
        );
    field.finalize()?;
    Ok(field)
}

/// Entry and exit parameters of the half-line `{t w : t > 0}` in the box
/// `[lo, hi]`, if it meets it.
fn ray_box(w: Vec3<f64>, lo: Vec3<f64>, hi: Vec3<f64>) -> Option<(f64, f64)> {
    let mut t0 = 0.0f64;
    let mut t1 = f64::INFINITY;
    for (d, l, h) in [(w.x, lo.x, hi.x), (w.y, lo.y, hi.y), (w.z, lo.z, hi.z)] {
        if d == 0.0 {
            if l > 0.0 || h < 0.0 {
                return None;
            }
        } else {
            let (a, b) = ((l / d), (h / d));
            let (a, b) = if a < b { (a, b) } else { (b, a) };
            t0 = t0.max(a);
            t1 = t1.min(b);
        }
    }
    (t1 > t0).then_some((t0, t1))
}

/// Absolute tolerance of the angular quadrature, relative to the
/// probability scale (probabilities are at most 1).
pub const ORACLE_TOL: f64 = 1e-12;

/// Initial panels in `(cos polar, azimuth)`, fine enough that every voxel of
/// edge >= 0.04 cm within ~1.5 cm of the tip spans several Kronrod nodes.
pub const ORACLE_PANELS: (usize, usize) = (32, 64);

/// Fluence contributed to voxel `v` by unscattered paths:
/// `scale * (1 - rho) * P(R_0 W_0 in V_v)`.
///
/// The free path is integrated in closed form (`exp(-mu t0) - exp(-mu t1)`
/// over the chord `[t0, t1]` of the voxel); the remaining integral over the
/// cone in `(cos polar, azimuth)` uses nested adaptive Gauss-Kronrod
/// quadrature with absolute tolerance [`ORACLE_TOL`] over the panels
/// [`ORACLE_PANELS`].
pub fn direct_term_oracle<T: Real>(scn: &Scenario<T>, v: VoxelIndex) -> Result<f64> {
    if !scn.grid.contains(v) {
        return Err(invalid(format!("voxel {v} is outside the grid")));
    }
    let (lo, hi) = scn.grid.bounds(v);
    let (lo, hi) = (lo.cast::<f64>(), hi.cast::<f64>());
    let mu = scn.params.mu().to_f64_lossy();
    let rho = scn.params.rho().to_f64_lossy();
    let cos_a = scn.source.cos_alpha().to_f64_lossy();
    let tau = std::f64::consts::TAU;
    let chord = |u: f64, phi: f64| {
        let s = ((1.0 - u) * (1.0 + u)).max(0.0).sqrt();
        let w = Vec3::new(s * phi.cos(), s * phi.sin(), -u);
        ray_box(w, lo, hi).map_or(0.0, |(t0, t1)| (-mu * t0).exp() - (-mu * t1).exp())
    };
    // Skip the quadrature when no cone direction can reach the voxel.
    let centre = (lo + hi) * 0.5;
    let radius = (hi - lo).norm() * 0.5;
    let dist = centre.norm();
    if dist > radius {
        let half_width = (radius / dist).asin();
        let polar = (-centre.z / dist).clamp(-1.0, 1.0).acos();
        if polar - half_width > cos_a.acos() {
            return Ok(0.0);
        }
    }
    let inner_tol = ORACLE_TOL / (1.0 - cos_a);
    let (p, _) = quad::integrate_panels(
        |u| quad::integrate_panels(|phi| chord(u, phi), 0.0, tau, ORACLE_PANELS.1, inner_tol).0,
        cos_a,
        1.0,
        ORACLE_PANELS.0,
        ORACLE_TOL * tau,
    );
    let prob = p / ((1.0 - cos_a) * tau);
    Ok(scn.scale().to_f64_lossy() * (1.0 - rho) * prob)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario(mu_s: f64, mu_a: f64, h: f64, m: u32) -> Scenario<f64> {
        Scenario::new(
            OpticalParams::new(mu_s, mu_a, 0.9).unwrap(),
            SourceSpec::new(std::f64::consts::PI / 10.0, 1.0).unwrap(),
            VoxelGrid::new(h, m).unwrap(),
        )
    }

    #[test]
    fn single_ray_lands_with_full_scale() {
        let scn = scenario(280.0, 0.57, 0.04, 25);
        let f = estimate_mc(&scn, 1, &StreamFamily::new(1)).unwrap();
        let nonzero: Vec<f64> = f.estimates().iter().copied().filter(|x| *x > 0.0).collect();
        assert!(nonzero.len() <= 1);
        if let Some(x) = nonzero.first() {
            assert_eq!(*x, scn.scale());
        }
    }

    #[test]
    fn some_with_one_point_and_rotation_is_plain_mc_shaped() {
        let scn = scenario(10.0, 1.0, 0.1, 10);
        let f = estimate_mc_some(&scn, SomeSizes::new(500, 1, 1).unwrap(), &StreamFamily::new(2)).unwrap();
        assert_eq!(f.total_samples(), 500);
        assert_eq!(f.units(), 500);
    }

    #[test]
    fn estimates_are_normalized() {
        let scn = scenario(20.0, 2.0, 0.05, 6);
        let f = estimate_mc_some(&scn, SomeSizes::new(300, 4, 3).unwrap(), &StreamFamily::new(3)).unwrap();
        let total: f64 = f.estimates().iter().sum();
        assert!(total / scn.scale() <= 1.0 + 1e-12);
        assert_eq!(f.total_samples(), 300 * 4 * 3);
    }

    #[test]
    fn walk_indexed_reports_every_index() {
        let p = OpticalParams::new(9.0f64, 1.0, 0.5).unwrap();
        let mut rng = StreamFamily::new(4).rng(Purpose::Rays, 0);
        let mut idx = Vec::new();
        let mut seen = Vec::new();
        walk_indexed(&mut rng, &p, p.rho().ln(), Direction::minus_e3(), &mut idx, 25, |pt| seen.push(pt.n));
        assert_eq!(seen.len(), 25);
        assert_eq!(seen, idx);
    }

    #[test]
    fn ray_box_cases() {
        let w = Vec3::new(0.0, 0.0, -1.0);
        let (t0, t1) = ray_box(w, Vec3::new(-0.5, -0.5, -2.0), Vec3::new(0.5, 0.5, -1.0)).unwrap();
        assert_eq!((t0, t1), (1.0, 2.0));
        assert!(ray_box(w, Vec3::new(1.0, 1.0, -2.0), Vec3::new(2.0, 2.0, -1.0)).is_none());
        let (t0, _) = ray_box(w, Vec3::new(-0.5, -0.5, -0.5), Vec3::new(0.5, 0.5, 0.5)).unwrap();
        assert_eq!(t0, 0.0);
    }

    #[test]
    fn oracle_is_zero_outside_the_cone() {
        let scn = scenario(2.5, 2.5, 0.1, 10);
        assert_eq!(direct_term_oracle(&scn, VoxelIndex::new(0, 5, 0)).unwrap(), 0.0);
        assert_eq!(direct_term_oracle(&scn, VoxelIndex::new(0, 0, 3)).unwrap(), 0.0);
        assert!(direct_term_oracle(&scn, VoxelIndex::new(0, 0, -3)).unwrap() > 0.0);
    }

    #[test]
    fn oracle_sums_to_unscattered_mass() {
        // With mu = 50 the unscattered mass leaving a 1.3 cm cube is below
        // 1e-13, so the voxel values must add up to scale * (1 - rho).
        let scn = scenario(25.0, 25.0, 0.1, 6);
        let total: f64 = scn
            .grid
            .indices()
            .filter(|v| v.k <= 0)
            .map(|v| direct_term_oracle(&scn, v).unwrap())
            .sum();
        let expect = scn.scale() * (1.0 - scn.params.rho());
        assert!((total - expect).abs() < 1e-9 * expect, "{total} vs {expect}");
    }

    #[test]
    fn oracle_vanishes_linearly_in_one_minus_rho() {
        let a = scenario(1000.0, 1.0, 0.1, 10);
        let b = scenario(2000.0, 1.0, 0.1, 10);
        let v = VoxelIndex::new(0, 0, 0);
        let (va, vb) = (direct_term_oracle(&a, v).unwrap(), direct_term_oracle(&b, v).unwrap());
        assert!(va > vb && vb > 0.0);
    }
}
