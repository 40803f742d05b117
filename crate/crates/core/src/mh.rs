//! Metropolis-Hastings sampler on ray space with the deletion-addition /
//! rotation-translation mutation kernel.
//!
//! The target is the ray law conditioned on a frozen initial direction
//! `w0`. States store segment lengths and the deflection angles
//! `(cos theta_i, phi_i)` of each direction relative to its predecessor, so
//! every mutation touches only the affected entries.
//!
//! Angular proposal densities are taken with respect to the same reference
//! measure as [`ray_log_density`](crate::ray::ray_log_density) (uniform
//! azimuth, uniform probability on the sphere), so the uniform-azimuth
//! factors cancel between target and proposal.

use std::io::Write;

use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::geometry::{Direction, Vec3};
use crate::grid::FluenceField;
use crate::mc::{RotationSet, Scenario};
use crate::optics::{frame_transport, sample_exp, HenyeyGreenstein, OpticalParams};
use crate::ray::{ray_log_density, sample_ray_from, Ray};
use crate::rng::{uniform, Purpose, StreamFamily};
use crate::scalar::Real;
use crate::stats::{chi_squared_geometric, integrated_autocorr_time, ChiSquaredTest};

/// Tuning of the mutation kernel and of the chain run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MhParams {
    pub small: u64,
    pub big: u64,
    pub epsilon: f64,
    pub steps: u64,
    pub rotations: u32,
    /// Fraction of the chain discarded before accumulation.
    pub burn_in_frac: f64,
    /// Number of consecutive-step batches used as statistical units.
    pub batches: u32,
}

pub const DEFAULT_BURN_IN_FRAC: f64 = 0.05;
pub const DEFAULT_BATCHES: u32 = 50;

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

impl MhParams {
    /// `j`, `J`: coprime length-change sizes with `1 <= j < J`; `epsilon` in
    /// `[-1, 1]`; `steps` (T) and `rotations` (M_rot) at least 1.
    pub fn new(small: u64, big: u64, epsilon: f64, steps: u64, rotations: u32) -> Result<Self> {
        if !(1 <= small && small < big) {
            return Err(invalid(format!("need 1 <= j < J, got j = {small}, J = {big}")));
        }
        if gcd(small, big) != 1 {
            return Err(invalid(format!("j = {small} and J = {big} must be coprime")));
        }
        if !(-1.0..=1.0).contains(&epsilon) {
            return Err(invalid(format!("epsilon must lie in [-1, 1], got {epsilon}")));
        }
        if steps == 0 || rotations == 0 {
            return Err(invalid("T and M_rot must be >= 1"));
        }
        Ok(Self {
            small,
            big,
            epsilon,
            steps,
            rotations,
            burn_in_frac: DEFAULT_BURN_IN_FRAC,
            batches: DEFAULT_BATCHES,
        })
    }

    pub fn with_burn_in(mut self, frac: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&frac) {
            return Err(invalid(format!("burn-in fraction must lie in [0, 1), got {frac}")));
        }
        self.burn_in_frac = frac;
        Ok(self)
    }

    pub fn with_batches(mut self, batches: u32) -> Result<Self> {
        if batches == 0 {
            return Err(invalid("batch count must be >= 1"));
        }
        self.batches = batches;
        Ok(self)
    }

    /// Steps discarded as burn-in (at most `T - 1`).
    pub fn burn_in_steps(&self) -> u64 {
        ((self.burn_in_frac * self.steps as f64).floor() as u64).min(self.steps - 1)
    }
}

/// Probability of each value of the length change given current length `m`.
pub fn zeta(m: u64, small: u64, big: u64) -> f64 {
    if m >= big {
        0.25
    } else if m >= small {
        1.0 / 3.0
    } else {
        0.5
    }
}

/// Mutation applied by a proposal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Move {
    /// Redraw the deflection angles of direction `i >= 1`.
    Rotate(usize),
    /// Redraw `r_0`.
    Translate,
    /// Append this many segments.
    Add(usize),
    /// Remove this many trailing segments.
    Delete(usize),
}

impl Move {
    /// The move type that undoes this one.
    pub fn reverse(self) -> Self {
        match self {
            Move::Add(d) => Move::Delete(d),
            Move::Delete(d) => Move::Add(d),
            m => m,
        }
    }
}

/// Precomputed constants of the kernel.
#[derive(Debug, Clone, Copy)]
pub struct Kernel<T> {
    pub params: OpticalParams<T>,
    pub mh: MhParams,
    mu: T,
    ln_mu: T,
    ln_rho: T,
    target: HenyeyGreenstein<T>,
    proposal: HenyeyGreenstein<T>,
}

impl<T: Real> Kernel<T> {
    pub fn new(params: OpticalParams<T>, mh: MhParams) -> Self {
        Self {
            params,
            mh,
            mu: params.mu(),
            ln_mu: params.mu().ln(),
            ln_rho: params.rho().ln(),
            target: params.phase(),
            proposal: HenyeyGreenstein::new(T::lit(mh.epsilon) * params.g()),
        }
    }

    /// Per-segment length term `ln mu - mu r`.
    #[inline]
    fn e(&self, r: T) -> T {
        self.ln_mu - self.mu * r
    }

    fn zeta(&self, m: usize) -> T {
        T::lit(zeta(m as u64, self.mh.small, self.mh.big))
    }

    /// Length changes allowed from length `n`.
    fn support(&self, n: usize) -> Vec<i64> {
        let (j, big) = (self.mh.small as i64, self.mh.big as i64);
        let n = n as i64;
        if n >= big {
            vec![-big, -j, j, big]
        } else if n >= j {
            vec![-j, j, big]
        } else {
            vec![j, big]
        }
    }

    /// `ln q(from, to)` for states related by `mv`, from the four-case
    /// proposal density; `-inf` if `mv` cannot turn `from` into `to`.
    pub fn log_q(&self, from: &ChainState<T>, to: &ChainState<T>, mv: Move) -> T {
        let half = T::lit(0.5).ln();
        let n = from.n();
        match mv {
            Move::Rotate(i) if i >= 1 && i <= n && to.n() == n => {
                half - T::lit((n + 1) as f64).ln() + self.proposal.ln_density(to.cos[i])
            }
            Move::Translate if to.n() == n => half - T::lit((n + 1) as f64).ln() + self.e(to.lengths[0]),
            Move::Add(d) if to.n() == n + d && self.support(n).contains(&(d as i64)) => {
                let fresh = (n + 1..=n + d).fold(T::zero(), |a, k| {
                    a + self.e(to.lengths[k]) + self.proposal.ln_density(to.cos[k])
                });
                half + self.zeta(n).ln() + fresh
            }
            Move::Delete(d) if d <= n && to.n() == n - d && self.support(n).contains(&-(d as i64)) => {
                half + self.zeta(n).ln()
            }
            _ => T::neg_infinity(),
        }
    }
}

/// Chain state: the ray in spherical form plus cached cartesian directions,
/// endpoint and log-density.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState<T> {
    w0: Direction<T>,
    lengths: Vec<T>,
    // Entry 0 is unused; entry i >= 1 is the deflection of w_i from w_{i-1}.
    cos: Vec<T>,
    phi: Vec<T>,
    dirs: Vec<Direction<T>>,
    endpoint: Vec3<T>,
    log_density: T,
}

/// Spherical angles `(cos theta, phi)` of `w` in the frame `(e1, e2, prev)`
/// used by [`frame_transport`].
fn deflection_angles<T: Real>(prev: Direction<T>, w: Direction<T>) -> (T, T) {
    let u = prev.vec();
    let v = w.vec();
    let c = u.dot(v).max(-T::one()).min(T::one());
    let (e1, e2) = if u.z.abs() >= T::one() - T::lit(crate::optics::POLE_EPS) {
        (Vec3::new(T::one(), T::zero(), T::zero()), Vec3::new(T::zero(), T::one(), T::zero()))
    } else {
        let t = ((T::one() - u.z) * (T::one() + u.z)).sqrt();
        (
            Vec3::new(u.x * u.z / t, u.y * u.z / t, -t),
            Vec3::new(-u.y / t, u.x / t, T::zero()),
        )
    };
    let mut phi = v.dot(e2).atan2(v.dot(e1));
    if phi < T::zero() {
        phi += T::TAU();
    }
    (c, phi)
}

impl<T: Real> ChainState<T> {
    /// Builds the state of `ray`; its initial direction becomes the frozen
    /// `w0`.
    pub fn from_ray(ray: &Ray<T>, scn: &Scenario<T>) -> Self {
        let dirs = ray.directions().to_vec();
        let mut cos = vec![T::one()];
        let mut phi = vec![T::zero()];
        for w in dirs.windows(2) {
            let (c, p) = deflection_angles(w[0], w[1]);
            cos.push(c);
            phi.push(p);
        }
        Self {
            w0: dirs[0],
            lengths: ray.lengths().to_vec(),
            cos,
            phi,
            endpoint: ray.endpoint(),
            log_density: ray_log_density(ray, &scn.params, &scn.source),
            dirs,
        }
    }

    pub fn n(&self) -> usize {
        self.lengths.len() - 1
    }

    pub fn w0(&self) -> Direction<T> {
        self.w0
    }

    pub fn lengths(&self) -> &[T] {
        &self.lengths
    }

    pub fn directions(&self) -> &[Direction<T>] {
        &self.dirs
    }

    /// Deflection `(cos theta_i, phi_i)` for `i >= 1`.
    pub fn deflection(&self, i: usize) -> (T, T) {
        (self.cos[i], self.phi[i])
    }

    pub fn endpoint(&self) -> Vec3<T> {
        self.endpoint
    }

    pub fn log_density(&self) -> T {
        self.log_density
    }

    pub fn to_ray(&self) -> Ray<T> {
        Ray::new(self.lengths.clone(), self.dirs.clone()).expect("chain state holds a valid ray")
    }

    /// Draws a proposal. Uniforms are consumed as: move family, then either
    /// the length change and `(r, cos, phi)` per appended segment, or the
    /// index and its new `(cos, phi)` / `r_0`.
    pub fn propose<R: Rng + ?Sized>(&self, rng: &mut R, k: &Kernel<T>) -> Proposal<T> {
        let mut p = Proposal::empty();
        self.propose_into(rng, k, &mut p);
        p
    }

    pub fn propose_into<R: Rng + ?Sized>(&self, rng: &mut R, k: &Kernel<T>, p: &mut Proposal<T>) {
        let n = self.n();
        let half = T::lit(0.5).ln();
        p.fresh.clear();
        p.dirs.clear();
        if uniform::<f64, R>(rng) < 0.5 {
            let support = k.support(n);
            let pick = ((uniform::<f64, R>(rng) * support.len() as f64) as usize).min(support.len() - 1);
            let delta = support[pick];
            let n_new = (n as i64 + delta) as usize;
            let lz = k.zeta(n).ln();
            let lz_new = k.zeta(n_new).ln();
            if delta > 0 {
                let d = delta as usize;
                let mut w = self.dirs[n];
                let mut add = Vec3::zero();
                let mut target = T::zero();
                let mut fresh_q = T::zero();
                for _ in 0..d {
                    let (c, phi) = k.proposal.sample(rng);
                    let r = sample_exp(rng, k.mu);
                    w = frame_transport(w, c, phi);
                    add += w.vec() * r;
                    let e = k.e(r);
                    target += e + k.target.ln_density(c);
                    fresh_q += e + k.proposal.ln_density(c);
                    p.fresh.push((r, c, phi));
                    p.dirs.push(w);
                }
                p.mv = Move::Add(d);
                p.endpoint = self.endpoint + add;
                p.delta_log_target = T::lit(d as f64) * k.ln_rho + target;
                p.log_q_forward = half + lz + fresh_q;
                p.log_q_backward = half + lz_new;
                p.log_q_ratio = (lz_new - lz) - fresh_q;
            } else {
                let d = (-delta) as usize;
                let mut removed = Vec3::zero();
                let mut target = T::zero();
                let mut fresh_q = T::zero();
                for i in n_new + 1..=n {
                    removed += self.dirs[i].vec() * self.lengths[i];
                    let e = k.e(self.lengths[i]);
                    target += e + k.target.ln_density(self.cos[i]);
                    fresh_q += e + k.proposal.ln_density(self.cos[i]);
                }
                p.mv = Move::Delete(d);
                p.endpoint = self.endpoint - removed;
                p.delta_log_target = -(T::lit(d as f64) * k.ln_rho + target);
                p.log_q_forward = half + lz;
                p.log_q_backward = half + lz_new + fresh_q;
                p.log_q_ratio = (lz_new - lz) + fresh_q;
            }
        } else {
            let i = ((uniform::<f64, R>(rng) * (n + 1) as f64) as usize).min(n);
            let base = half - T::lit((n + 1) as f64).ln();
            if i == 0 {
                let r0 = self.lengths[0];
                let r = sample_exp(rng, k.mu);
                let (e_new, e_old) = (k.e(r), k.e(r0));
                p.mv = Move::Translate;
                p.fresh.push((r, T::one(), T::zero()));
                p.endpoint = self.endpoint + self.w0.vec() * (r - r0);
                p.delta_log_target = e_new - e_old;
                p.log_q_forward = base + e_new;
                p.log_q_backward = base + e_old;
                p.log_q_ratio = e_old - e_new;
            } else {
                let (c, phi) = k.proposal.sample(rng);
                let mut w = frame_transport(self.dirs[i - 1], c, phi);
                let mut old = Vec3::zero();
                let mut new = Vec3::zero();
                for m in i..=n {
                    if m > i {
                        w = frame_transport(w, self.cos[m], self.phi[m]);
                    }
                    old += self.dirs[m].vec() * self.lengths[m];
                    new += w.vec() * self.lengths[m];
                    p.dirs.push(w);
                }
                let (q_new, q_old) = (k.proposal.ln_density(c), k.proposal.ln_density(self.cos[i]));
                p.mv = Move::Rotate(i);
                p.fresh.push((T::zero(), c, phi));
                p.endpoint = self.endpoint - old + new;
                p.delta_log_target = k.target.ln_density(c) - k.target.ln_density(self.cos[i]);
                p.log_q_forward = base + q_new;
                p.log_q_backward = base + q_old;
                p.log_q_ratio = q_old - q_new;
            }
        }
    }

    /// Applies an accepted proposal in place.
    pub fn commit(&mut self, p: &Proposal<T>) {
        let n = self.n();
        match p.mv {
            Move::Translate => self.lengths[0] = p.fresh[0].0,
            Move::Rotate(i) => {
                self.cos[i] = p.fresh[0].1;
                self.phi[i] = p.fresh[0].2;
                self.dirs[i..=n].copy_from_slice(&p.dirs);
            }
            Move::Add(_) => {
                for (&(r, c, phi), w) in p.fresh.iter().zip(&p.dirs) {
                    self.lengths.push(r);
                    self.cos.push(c);
                    self.phi.push(phi);
                    self.dirs.push(*w);
                }
            }
            Move::Delete(d) => {
                let keep = n + 1 - d;
                self.lengths.truncate(keep);
                self.cos.truncate(keep);
                self.phi.truncate(keep);
                self.dirs.truncate(keep);
            }
        }
        self.endpoint = p.endpoint;
        self.log_density += p.delta_log_target;
    }

    /// The candidate state of `p`.
    pub fn apply(&self, p: &Proposal<T>) -> Self {
        let mut s = self.clone();
        s.commit(p);
        s
    }

    /// Recomputes the cached directions, endpoint and log-density from the
    /// spherical record.
    pub fn refreshed(&self, scn: &Scenario<T>) -> Self {
        let mut dirs = Vec::with_capacity(self.dirs.len());
        dirs.push(self.w0);
        for i in 1..=self.n() {
            dirs.push(frame_transport(dirs[i - 1], self.cos[i], self.phi[i]));
        }
        let ray = Ray::new(self.lengths.clone(), dirs.clone()).expect("valid ray");
        Self {
            endpoint: ray.endpoint(),
            log_density: ray_log_density(&ray, &scn.params, &scn.source),
            dirs,
            ..self.clone()
        }
    }
}

/// A proposed mutation with its target and proposal log-densities.
#[derive(Debug, Clone, PartialEq)]
pub struct Proposal<T> {
    pub mv: Move,
    /// New `(r, cos, phi)` entries: appended segments, the redrawn angles, or
    /// the redrawn `r_0`.
    fresh: Vec<(T, T, T)>,
    /// New cartesian directions of the affected suffix / appended segments.
    dirs: Vec<Direction<T>>,
    pub endpoint: Vec3<T>,
    /// `ln nu(candidate) - ln nu(current)`.
    pub delta_log_target: T,
    pub log_q_forward: T,
    pub log_q_backward: T,
    /// `log_q_backward - log_q_forward`, formed from the terms that differ.
    pub log_q_ratio: T,
}

impl<T: Real> Proposal<T> {
    fn empty() -> Self {
        Self {
            mv: Move::Translate,
            fresh: Vec::new(),
            dirs: Vec::new(),
            endpoint: Vec3::zero(),
            delta_log_target: T::zero(),
            log_q_forward: T::zero(),
            log_q_backward: T::zero(),
            log_q_ratio: T::zero(),
        }
    }

    /// `min(0, delta ln nu + ln q_b - ln q_f)`; `-inf` if non-finite.
    pub fn log_acceptance(&self) -> T {
        let a = self.delta_log_target + self.log_q_ratio;
        if a.is_nan() {
            T::neg_infinity()
        } else {
            a.min(T::zero())
        }
    }
}

/// `min(0, [ln nu(cand) - ln nu(cur)] + [ln q_b - ln q_f])` from the cached
/// log-densities of two states.
pub fn acceptance_log_ratio<T: Real>(cur: &ChainState<T>, cand: &ChainState<T>, log_q_f: T, log_q_b: T) -> T {
    let a = (cand.log_density - cur.log_density) + (log_q_b - log_q_f);
    if !cand.log_density.is_finite() || a.is_nan() {
        T::neg_infinity()
    } else {
        a.min(T::zero())
    }
}

/// One row of the exported chain trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow<T> {
    pub t: u64,
    pub n: u64,
    pub accepted: bool,
    pub log_density: T,
}

pub const TRACE_CSV_HEADER: &str = "t,n,accepted,log_density";

pub fn write_trace_csv<T: Real, W: Write>(mut w: W, rows: &[TraceRow<T>]) -> Result<()> {
    writeln!(w, "{TRACE_CSV_HEADER}")?;
    for r in rows {
        writeln!(w, "{},{},{},{}", r.t, r.n, r.accepted as u8, crate::grid::fmt_sig9(r.log_density))?;
    }
    Ok(())
}

/// Output of [`run_chain`].
#[derive(Debug, Clone)]
pub struct ChainRun<T> {
    pub field: FluenceField<T>,
    pub steps: u64,
    pub burn_in: u64,
    /// Accepted proposals over all `T - 1` transitions.
    pub accepted: u64,
    /// Accepted proposals among transitions into post-burn-in states.
    pub accepted_after_burn_in: u64,
    /// `N_t` for every `t`, burn-in included.
    pub lengths: Vec<u64>,
    /// Rows every `trace_stride` steps, if requested.
    pub trace: Vec<TraceRow<T>>,
    pub final_state: ChainState<T>,
}

impl<T> ChainRun<T> {
    pub fn acceptance_rate(&self) -> f64 {
        if self.steps <= 1 {
            return f64::NAN;
        }
        self.accepted as f64 / (self.steps - 1) as f64
    }

    pub fn acceptance_rate_after_burn_in(&self) -> f64 {
        let moves = self.steps - self.burn_in - u64::from(self.burn_in == 0);
        if moves == 0 {
            return f64::NAN;
        }
        self.accepted_after_burn_in as f64 / moves as f64
    }
}

/// Runs the Metropolis-Hastings ray chain for `mh.steps` states and
/// accumulates the post-burn-in endpoints rotated onto `mh.rotations` cone
/// directions.
///
/// Streams: `Rotations` gives the frozen `w0` followed by the rotation
/// targets; `Chain` drives the initial ray and every move. Batches of
/// consecutive steps are the statistical units of the field, rotation
/// indices its groups. `trace_stride = 0` disables the trace.
pub fn run_chain<T: Real>(
    scn: &Scenario<T>,
    mh: MhParams,
    family: &StreamFamily,
    trace_stride: u64,
) -> Result<ChainRun<T>> {
    let kernel = Kernel::new(scn.params, mh);
    let mut rot_rng = family.rng(Purpose::Rotations, 0);
    let w0 = scn.source.sample(&mut rot_rng);
    let targets: Vec<Direction<T>> = (0..mh.rotations).map(|_| scn.source.sample(&mut rot_rng)).collect();
    let rots = RotationSet::from_base(w0, targets);
    let mut rng = family.rng(Purpose::Chain, 0);
    let ray = sample_ray_from(&mut rng, &scn.params, w0);
    let mut state = ChainState::from_ray(&ray, scn);

    let burn_in = mh.burn_in_steps();
    let kept = mh.steps - burn_in;
    let batch_len = kept.div_ceil(u64::from(mh.batches).min(kept));
    let mut field = FluenceField::new(scn.grid, scn.scale(), mh.rotations as usize);
    let mut lengths = Vec::with_capacity(mh.steps as usize);
    let mut trace = Vec::new();
    let mut proposal = Proposal::empty();
    let (mut accepted, mut accepted_after) = (0u64, 0u64);
    let mut in_batch = 0u64;

    for t in 0..mh.steps {
        let mut acc = false;
        if t > 0 {
            state.propose_into(&mut rng, &kernel, &mut proposal);
            let u: T = uniform(&mut rng);
            if u.ln() < proposal.log_acceptance() {
                state.commit(&proposal);
                acc = true;
                accepted += 1;
                if t >= burn_in {
                    accepted_after += 1;
                }
            }
        }
        lengths.push(state.n() as u64);
        if trace_stride > 0 && t % trace_stride == 0 {
            trace.push(TraceRow { t: t + 1, n: state.n() as u64, accepted: acc, log_density: state.log_density });
        }
        if t >= burn_in {
            if in_batch == 0 {
                field.begin_unit();
            }
            let s = state.endpoint();
            for (j, r) in rots.rotations.iter().enumerate() {
                field.add_point(r.apply(s), j);
            }
            in_batch += 1;
            if in_batch == batch_len || t + 1 == mh.steps {
                field.end_unit();
                in_batch = 0;
            }
        }
    }
    field.finalize()?;
    Ok(ChainRun {
        field,
        steps: mh.steps,
        burn_in,
        accepted,
        accepted_after_burn_in: accepted_after,
        lengths,
        trace,
        final_state: state,
    })
}

/// Chi-squared test of a chain's length trace against geometric(rho).
///
/// Consecutive chain states are correlated, so the trace is thinned to every
/// `ceil(2 tau)`-th value, `tau` being its integrated autocorrelation time.
/// A constant trace is reported as a diagnostic failure.
pub fn length_law_diagnostic(trace: &[u64], rho: f64) -> Result<ChiSquaredTest> {
    if trace.len() < 10_000 {
        return Err(invalid(format!("length trace needs at least 10^4 values, got {}", trace.len())));
    }
    let xs: Vec<f64> = trace.iter().map(|&n| n as f64).collect();
    let tau = integrated_autocorr_time(&xs)
        .ok_or_else(|| Error::Diagnostic("length trace is constant; the chain never changed length".into()))?;
    let stride = (2.0 * tau).ceil().max(1.0) as usize;
    let thinned: Vec<u64> = trace.iter().step_by(stride).copied().collect();
    let mut test = chi_squared_geometric(&thinned, rho)?;
    test.stride = stride;
    Ok(test)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::VoxelGrid;
    use crate::optics::SourceSpec;

    fn scn(mu_s: f64, mu_a: f64) -> Scenario<f64> {
        Scenario::new(
            OpticalParams::new(mu_s, mu_a, 0.9).unwrap(),
            SourceSpec::new(std::f64::consts::PI / 10.0, 1.0).unwrap(),
            VoxelGrid::new(0.1, 10).unwrap(),
        )
    }

    #[test]
    fn zeta_examples() {
        assert_eq!(zeta(25, 10, 21), 0.25);
        assert_eq!(zeta(15, 10, 21), 1.0 / 3.0);
        assert_eq!(zeta(3, 10, 21), 0.5);
        assert_eq!(zeta(21, 10, 21), 0.25);
        assert_eq!(zeta(10, 10, 21), 1.0 / 3.0);
    }

    #[test]
    fn params_validation() {
        assert!(MhParams::new(10, 21, 0.9, 10, 1).is_ok());
        assert!(MhParams::new(10, 20, 0.9, 10, 1).is_err());
        assert!(MhParams::new(21, 10, 0.9, 10, 1).is_err());
        assert!(MhParams::new(0, 1, 0.9, 10, 1).is_err());
        assert!(MhParams::new(1, 2, 1.5, 10, 1).is_err());
        assert!(MhParams::new(1, 2, 0.5, 0, 1).is_err());
    }

    #[test]
    fn short_rays_only_grow() {
        let s = scn(9.0, 1.0);
        let k = Kernel::new(s.params, MhParams::new(10, 21, 0.9, 10, 1).unwrap());
        assert_eq!(k.support(5), vec![10, 21]);
        assert_eq!(k.support(15), vec![-10, 10, 21]);
        assert_eq!(k.support(30), vec![-21, -10, 10, 21]);
    }

    #[test]
    fn deflection_angles_invert_transport() {
        let mut rng = StreamFamily::new(1).rng(Purpose::Auxiliary, 0);
        for _ in 0..1000 {
            let prev: Direction<f64> = crate::optics::sample_sphere(&mut rng);
            let c = 2.0 * uniform::<f64, _>(&mut rng) - 1.0;
            let phi = std::f64::consts::TAU * uniform::<f64, _>(&mut rng);
            let w = frame_transport(prev, c, phi);
            let (c2, phi2) = deflection_angles(prev, w);
            let w2 = frame_transport(prev, c2, phi2);
            assert!((w.vec() - w2.vec()).norm() < 1e-9);
        }
    }

    #[test]
    fn single_step_chain_bins_initial_endpoint() {
        let s = scn(9.0, 1.0);
        let run = run_chain(&s, MhParams::new(1, 2, 0.9, 1, 4).unwrap(), &StreamFamily::new(5), 0).unwrap();
        assert_eq!(run.field.total_samples(), 4);
        assert_eq!(run.lengths.len(), 1);
    }
}
