//! Rays (sequences of free-path lengths and directions), their random-walk
//! partial sums, the ray log-density and rigid rotations of walks.

use std::io::{Read, Write};

use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::geometry::{Direction, Mat3, Vec3};
use crate::optics::{frame_transport, sample_exp, sample_geometric, OpticalParams, SourceSpec};
use crate::scalar::Real;

/// One realization of the ray law: `n + 1` segments with lengths `r_i` and
/// directions `w_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ray<T> {
    lengths: Vec<T>,
    directions: Vec<Direction<T>>,
}

impl<T: Real> Ray<T> {
    pub fn new(lengths: Vec<T>, directions: Vec<Direction<T>>) -> Result<Self> {
        if lengths.is_empty() || lengths.len() != directions.len() {
            return Err(invalid(format!(
                "a ray needs equal, non-zero numbers of lengths and directions ({} vs {})",
                lengths.len(),
                directions.len()
            )));
        }
        if let Some(r) = lengths.iter().find(|r| !(r.is_finite() && **r >= T::zero())) {
            return Err(invalid(format!("segment length {r} is not a finite non-negative value")));
        }
        Ok(Self { lengths, directions })
    }

    /// Path length `n` (number of scattering events).
    pub fn n(&self) -> usize {
        self.lengths.len() - 1
    }

    pub fn lengths(&self) -> &[T] {
        &self.lengths
    }

    pub fn directions(&self) -> &[Direction<T>] {
        &self.directions
    }

    pub fn initial_direction(&self) -> Direction<T> {
        self.directions[0]
    }

    /// Reversed direction order with lengths permuted the same way.
    pub fn reversed(&self) -> Self {
        let mut lengths = self.lengths.clone();
        let mut directions = self.directions.clone();
        lengths.reverse();
        directions.reverse();
        Self { lengths, directions }
    }

    pub fn endpoint(&self) -> Vec3<T> {
        self.lengths
            .iter()
            .zip(&self.directions)
            .fold(Vec3::zero(), |s, (r, w)| s + w.vec() * *r)
    }
}

/// Partial sums `S_p = sum_{i <= p} r_i w_i` of a ray, starting at the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkPoints<T> {
    pub points: Vec<Vec3<T>>,
}

impl<T: Real> WalkPoints<T> {
    pub fn last(&self) -> Vec3<T> {
        *self.points.last().expect("walk has at least one point")
    }
}

/// Streaming random walk: draws one segment at a time from a given start
/// direction, tracking the position and the accumulated path length.
///
/// Draw order per segment: for every segment after the first, the deflection
/// cosine then the azimuth; then the segment length.
#[derive(Debug, Clone, Copy)]
pub struct Walker<T> {
    mu: T,
    phase: crate::optics::HenyeyGreenstein<T>,
    dir: Direction<T>,
    pos: Vec3<T>,
    arc: T,
    index: Option<u64>,
}

impl<T: Real> Walker<T> {
    pub fn new(params: &OpticalParams<T>, w0: Direction<T>) -> Self {
        Self {
            mu: params.mu(),
            phase: params.phase(),
            dir: w0,
            pos: Vec3::zero(),
            arc: T::zero(),
            index: None,
        }
    }

    /// Appends the next segment; returns its `(length, direction)`.
    #[inline]
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> (T, Direction<T>) {
        if self.index.is_some() {
            let (c, phi) = self.phase.sample(rng);
            self.dir = frame_transport(self.dir, c, phi);
        }
        let r = sample_exp(rng, self.mu);
        self.pos += self.dir.vec() * r;
        self.arc += r;
        self.index = Some(self.index.map_or(0, |i| i + 1));
        (r, self.dir)
    }

    /// Current point `S_p`.
    pub fn position(&self) -> Vec3<T> {
        self.pos
    }

    /// `sum_{i <= p} r_i`.
    pub fn path_length(&self) -> T {
        self.arc
    }

    /// Index `p` of the last drawn segment, `None` before the first step.
    pub fn index(&self) -> Option<u64> {
        self.index
    }
}

/// Draws a ray: `N` geometric(rho), `w0` uniform on the source cone, then the
/// segments. Uniforms are consumed as: N, w0 (two), then per segment as in
/// [`Walker::step`].
pub fn sample_ray<T: Real, R: Rng + ?Sized>(
    rng: &mut R,
    params: &OpticalParams<T>,
    source: &SourceSpec<T>,
) -> Ray<T> {
    let n = sample_geometric(rng, params.rho().ln());
    let w0 = source.sample(rng);
    sample_ray_with(rng, params, w0, n)
}

/// Draws a ray with a fixed initial direction and a geometric length.
pub fn sample_ray_from<T: Real, R: Rng + ?Sized>(
    rng: &mut R,
    params: &OpticalParams<T>,
    w0: Direction<T>,
) -> Ray<T> {
    let n = sample_geometric(rng, params.rho().ln());
    sample_ray_with(rng, params, w0, n)
}

fn sample_ray_with<T: Real, R: Rng + ?Sized>(
    rng: &mut R,
    params: &OpticalParams<T>,
    w0: Direction<T>,
    n: u64,
) -> Ray<T> {
    let cap = (n as usize).saturating_add(1);
    let mut lengths = Vec::with_capacity(cap);
    let mut directions = Vec::with_capacity(cap);
    let mut walker = Walker::new(params, w0);
    for _ in 0..=n {
        let (r, w) = walker.step(rng);
        lengths.push(r);
        directions.push(w);
    }
    Ray { lengths, directions }
}

/// Prefix sums of `r_i w_i` from the fiber tip at the origin.
pub fn walk_points<T: Real>(ray: &Ray<T>) -> WalkPoints<T> {
    let mut s = Vec3::zero();
    let points = ray
        .lengths
        .iter()
        .zip(&ray.directions)
        .map(|(r, w)| {
            s += w.vec() * *r;
            s
        })
        .collect();
    WalkPoints { points }
}

/// Applies the minimal-angle rotation carrying `from` onto `to` to every
/// point of the walk.
pub fn rotate_walk<T: Real>(points: &WalkPoints<T>, from: Direction<T>, to: Direction<T>) -> WalkPoints<T> {
    let rot = Mat3::rotation_between(from, to);
    WalkPoints {
        points: points.points.iter().map(|p| rot.apply(*p)).collect(),
    }
}

/// Log-density of `ray` under the ray law with `w0` restricted to the source
/// cone:
///
/// `ln((1-rho) rho^n) + (n+1) ln mu - mu sum r_j + sum_{j<n} ln f_HG(<w_j, w_{j+1}>)`.
///
/// The angular reference measure (uniform azimuths, cone-uniform `w0`) is
/// left out; it cancels in every Metropolis-Hastings ratio. An initial
/// direction outside the cone gives `-inf`.
pub fn ray_log_density<T: Real>(ray: &Ray<T>, params: &OpticalParams<T>, source: &SourceSpec<T>) -> T {
    if !source.contains(ray.initial_direction()) {
        return T::neg_infinity();
    }
    let n = T::lit(ray.n() as f64);
    let mu = params.mu();
    let phase = params.phase();
    let sum_r = ray.lengths.iter().fold(T::zero(), |a, r| a + *r);
    let angular = ray
        .directions
        .windows(2)
        .fold(T::zero(), |a, w| a + phase.ln_density(w[0].dot(w[1])));
    (T::one() - params.rho()).ln() + n * params.rho().ln() + (n + T::one()) * mu.ln() - mu * sum_r + angular
}

/// Writes rays as little-endian records: `u32 n`, then `n + 1` groups of four
/// `f64` values `(r, ux, uy, uz)`.
pub fn write_ray_dump<T: Real, W: Write>(mut w: W, rays: &[Ray<T>]) -> Result<()> {
    for ray in rays {
        let n = u32::try_from(ray.n()).map_err(|_| invalid("ray too long for dump format"))?;
        w.write_all(&n.to_le_bytes())?;
        for (r, d) in ray.lengths.iter().zip(&ray.directions) {
            let v = d.vec();
            for x in [*r, v.x, v.y, v.z] {
                w.write_all(&x.to_f64_lossy().to_le_bytes())?;
            }
        }
    }
    Ok(())
}

pub fn read_ray_dump<T: Real, R: Read>(mut r: R) -> Result<Vec<Ray<T>>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut rays = Vec::new();
    let mut at = 0usize;
    let take = |at: &mut usize, k: usize| -> Result<&[u8]> {
        let s = bytes
            .get(*at..*at + k)
            .ok_or_else(|| Error::Parse("truncated ray dump".into()))?;
        *at += k;
        Ok(s)
    };
    while at < bytes.len() {
        let n = u32::from_le_bytes(take(&mut at, 4)?.try_into().unwrap()) as usize;
        let mut lengths = Vec::with_capacity(n + 1);
        let mut directions = Vec::with_capacity(n + 1);
        for _ in 0..=n {
            let mut vals = [0.0f64; 4];
            for v in &mut vals {
                *v = f64::from_le_bytes(take(&mut at, 8)?.try_into().unwrap());
            }
            lengths.push(T::lit(vals[0]));
            let d = Vec3::new(T::lit(vals[1]), T::lit(vals[2]), T::lit(vals[3]));
            directions.push(Direction::new(d).ok_or_else(|| Error::Parse("zero direction in ray dump".into()))?);
        }
        rays.push(Ray::new(lengths, directions)?);
    }
    Ok(rays)
}
