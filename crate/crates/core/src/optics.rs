//! Optical parameters of the medium and the elementary sampling primitives:
//! exponential free paths, geometric path lengths, Henyey-Greenstein
//! deflection, cone-uniform emission and direction transport.

use rand::Rng;

use crate::error::{invalid, Result};
use crate::geometry::{Direction, Vec3};
use crate::rng::{uniform, uniform_open0};
use crate::scalar::Real;

/// Anisotropies below this magnitude are sampled as isotropic scattering.
pub const ISOTROPIC_THRESHOLD: f64 = 1e-6;

/// Directions with `|uz|` above `1 - POLE_EPS` use the axis-aligned
/// transport formula.
pub const POLE_EPS: f64 = 1e-9;

/// Homogeneous medium: scattering and absorption coefficients (cm^-1) and
/// the Henyey-Greenstein anisotropy factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpticalParams<T> {
    mu_s: T,
    mu_a: T,
    g: T,
    mu: T,
    rho: T,
}

impl<T: Real> OpticalParams<T> {
    pub fn new(mu_s: T, mu_a: T, g: T) -> Result<Self> {
        if !(mu_s.is_finite() && mu_s > T::zero()) {
            return Err(invalid(format!("mu_s must be finite and > 0, got {mu_s}")));
        }
        if !(mu_a.is_finite() && mu_a > T::zero()) {
            return Err(invalid(format!("mu_a must be finite and > 0, got {mu_a}")));
        }
        if !(g >= T::zero() && g < T::one()) {
            return Err(invalid(format!("g must lie in [0, 1), got {g}")));
        }
        let mu = mu_s + mu_a;
        Ok(Self {
            mu_s,
            mu_a,
            g,
            mu,
            rho: mu_s / mu,
        })
    }

    pub fn mu_s(&self) -> T {
        self.mu_s
    }

    pub fn mu_a(&self) -> T {
        self.mu_a
    }

    pub fn g(&self) -> T {
        self.g
    }

    /// Attenuation coefficient `mu_s + mu_a`.
    pub fn mu(&self) -> T {
        self.mu
    }

    /// Albedo `mu_s / mu`, the parameter of the geometric path-length law.
    pub fn rho(&self) -> T {
        self.rho
    }

    /// Same medium with different coefficients (anisotropy kept).
    pub fn with_coefficients(&self, mu_s: T, mu_a: T) -> Result<Self> {
        Self::new(mu_s, mu_a, self.g)
    }

    pub fn phase(&self) -> HenyeyGreenstein<T> {
        HenyeyGreenstein::new(self.g)
    }
}

/// Fiber source: cone of half-angle `alpha` about -e3, emission constant `c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceSpec<T> {
    alpha: T,
    c: T,
}

impl<T: Real> SourceSpec<T> {
    pub fn new(alpha: T, c: T) -> Result<Self> {
        if !(alpha > T::zero() && alpha < T::FRAC_PI_2()) {
            return Err(invalid(format!("alpha must lie in (0, pi/2), got {alpha}")));
        }
        if !(c.is_finite() && c > T::zero()) {
            return Err(invalid(format!("c must be finite and > 0, got {c}")));
        }
        Ok(Self { alpha, c })
    }

    pub fn alpha(&self) -> T {
        self.alpha
    }

    pub fn c(&self) -> T {
        self.c
    }

    pub fn cos_alpha(&self) -> T {
        self.alpha.cos()
    }

    pub fn axis(&self) -> Direction<T> {
        Direction::minus_e3()
    }

    /// Uniform-probability measure of the emission cap, `(1 - cos alpha) / 2`.
    pub fn cap_measure(&self) -> T {
        (T::one() - self.cos_alpha()) / T::lit(2.0)
    }

    /// Fluence per unit endpoint probability, `c (1 - cos alpha) / (2 mu_a)`.
    pub fn fluence_scale(&self, params: &OpticalParams<T>) -> T {
        self.c * self.cap_measure() / params.mu_a()
    }

    pub fn contains(&self, w: Direction<T>) -> bool {
        w.dot(self.axis()) >= self.cos_alpha()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Direction<T> {
        let u1 = uniform(rng);
        let u2 = uniform(rng);
        sample_cone_direction(u1, u2, self.alpha)
    }
}

/// Inverse CDF of the exponential law with rate `mu`.
pub fn exp_inverse_cdf<T: Real>(u: T, mu: T) -> Result<T> {
    if !u.is_finite() || u < T::zero() || u >= T::one() {
        return Err(invalid(format!("u must lie in [0, 1), got {u}")));
    }
    if !(mu.is_finite() && mu > T::zero()) {
        return Err(invalid(format!("mu must be finite and > 0, got {mu}")));
    }
    Ok(exp_sample(u, mu))
}

#[inline]
pub(crate) fn exp_sample<T: Real>(u: T, mu: T) -> T {
    -(-u).ln_1p() / mu
}

/// `floor(ln u / ln rho)`, distributed as `P(N = n) = (1 - rho) rho^n`.
///
/// `u = 1` is accepted and maps to 0.
pub fn geometric_path_length<T: Real>(u: T, rho: T) -> Result<u64> {
    if !(rho > T::zero() && rho < T::one()) {
        return Err(invalid(format!("rho must lie in (0, 1), got {rho}")));
    }
    if !(u > T::zero() && u <= T::one()) {
        return Err(invalid(format!("u must lie in (0, 1], got {u}")));
    }
    Ok(geometric_sample(u, rho.ln()))
}

#[inline]
pub(crate) fn geometric_sample<T: Real>(u: T, ln_rho: T) -> u64 {
    let q = (u.ln() / ln_rho).floor();
    q.to_u64().unwrap_or(u64::MAX)
}

/// Henyey-Greenstein density with respect to the uniform probability on the
/// sphere: `(1 - g^2) / (1 + g^2 - 2 g cos)^(3/2)`.
#[inline]
pub fn hg_density<T: Real>(cos_theta: T, g: T) -> T {
    let g2 = g * g;
    let d = T::one() + g2 - T::lit(2.0) * g * cos_theta;
    (T::one() - g2) / (d * d.sqrt())
}

/// Closed-form inverse of the HG cos-theta CDF for `0 < g < 1`.
pub fn hg_inverse_cdf<T: Real>(y: T, g: T) -> Result<T> {
    if !(y >= T::zero() && y <= T::one()) {
        return Err(invalid(format!("y must lie in [0, 1], got {y}")));
    }
    if !(g > T::zero() && g < T::one()) {
        return Err(invalid(format!(
            "hg_inverse_cdf needs 0 < g < 1 (use the isotropic sampler for g = 0), got {g}"
        )));
    }
    Ok(hg_inverse_cdf_unchecked(y, g))
}

#[inline]
fn hg_inverse_cdf_unchecked<T: Real>(y: T, g: T) -> T {
    let g2 = g * g;
    let f = (T::one() - g2) / (T::one() - g + T::lit(2.0) * g * y);
    let c = (T::one() + g2 - f * f) / (T::lit(2.0) * g);
    c.max(-T::one()).min(T::one())
}

/// Henyey-Greenstein phase function with anisotropy in `(-1, 1)`.
///
/// Negative anisotropies arise as the perturbed proposal `eps * g` of the
/// Metropolis-Hastings kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HenyeyGreenstein<T> {
    g: T,
}

impl<T: Real> HenyeyGreenstein<T> {
    pub fn new(g: T) -> Self {
        debug_assert!(g.abs() < T::one());
        Self { g }
    }

    pub fn g(&self) -> T {
        self.g
    }

    pub fn is_isotropic(&self) -> bool {
        self.g.abs() < T::lit(ISOTROPIC_THRESHOLD)
    }

    #[inline]
    pub fn density(&self, cos_theta: T) -> T {
        if self.is_isotropic() {
            T::one()
        } else {
            hg_density(cos_theta, self.g)
        }
    }

    #[inline]
    pub fn ln_density(&self, cos_theta: T) -> T {
        if self.is_isotropic() {
            T::zero()
        } else {
            hg_density(cos_theta, self.g).ln()
        }
    }

    /// Maps a uniform `y` in `[0, 1]` to a deflection cosine.
    #[inline]
    pub fn cos_from_uniform(&self, y: T) -> T {
        if self.is_isotropic() {
            T::lit(2.0) * y - T::one()
        } else if self.g > T::zero() {
            hg_inverse_cdf_unchecked(y, self.g)
        } else {
            -hg_inverse_cdf_unchecked(T::one() - y, -self.g)
        }
    }

    /// Draws `(cos theta, phi)`; one uniform for each, in that order.
    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> (T, T) {
        let c = self.cos_from_uniform(uniform(rng));
        let phi = T::TAU() * uniform::<T, R>(rng);
        (c, phi)
    }
}

/// Direction in the cap about -e3 with `cos(polar) = 1 - u1 (1 - cos alpha)`
/// and azimuth `2 pi u2`.
pub fn sample_cone_direction<T: Real>(u1: T, u2: T, alpha: T) -> Direction<T> {
    let cos_t = T::one() - u1 * (T::one() - alpha.cos());
    let sin_t = ((T::one() - cos_t) * (T::one() + cos_t)).max(T::zero()).sqrt();
    let (sp, cp) = (T::TAU() * u2).sin_cos();
    Direction::new_unchecked(Vec3::new(sin_t * cp, sin_t * sp, -cos_t))
}

/// Deflects `prev` by polar cosine `cos_theta` and azimuth `phi`, measured in
/// the right-handed frame `(e1, e2, prev)` with
/// `e1 = (ux uz, uy uz, -(1 - uz^2)) / sqrt(1 - uz^2)` and
/// `e2 = (-uy, ux, 0) / sqrt(1 - uz^2)`.
///
/// Near the poles (`|uz| > 1 - 1e-9`) the frame degenerates to the
/// coordinate axes.
#[inline]
pub fn frame_transport<T: Real>(prev: Direction<T>, cos_theta: T, phi: T) -> Direction<T> {
    let u = prev.vec();
    let sin_t = ((T::one() - cos_theta) * (T::one() + cos_theta)).max(T::zero()).sqrt();
    let (sp, cp) = phi.sin_cos();
    let out = if u.z.abs() >= T::one() - T::lit(POLE_EPS) {
        Vec3::new(sin_t * cp, sin_t * sp, u.z.signum() * cos_theta)
    } else {
        let tmp = ((T::one() - u.z) * (T::one() + u.z)).sqrt();
        let inv = tmp.recip();
        Vec3::new(
            sin_t * (u.x * u.z * cp - u.y * sp) * inv + u.x * cos_theta,
            sin_t * (u.y * u.z * cp + u.x * sp) * inv + u.y * cos_theta,
            -sin_t * cp * tmp + u.z * cos_theta,
        )
    };
    Direction::new_unchecked(out).renormalized()
}

/// Uniform point on the whole sphere (two uniforms).
pub fn sample_sphere<T: Real, R: Rng + ?Sized>(rng: &mut R) -> Direction<T> {
    let c = T::lit(2.0) * uniform::<T, R>(rng) - T::one();
    let phi = T::TAU() * uniform::<T, R>(rng);
    frame_transport(Direction::new_unchecked(Vec3::new(T::zero(), T::zero(), T::one())), c, phi)
}

#[inline]
pub(crate) fn sample_exp<T: Real, R: Rng + ?Sized>(rng: &mut R, mu: T) -> T {
    exp_sample(uniform(rng), mu)
}

#[inline]
pub(crate) fn sample_geometric<T: Real, R: Rng + ?Sized>(rng: &mut R, ln_rho: T) -> u64 {
    geometric_sample(uniform_open0::<T, R>(rng), ln_rho)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Purpose, StreamFamily};
    use approx::assert_abs_diff_eq;

    #[test]
    fn params_derive_mu_and_rho() {
        let p = OpticalParams::new(280.0, 0.57, 0.9).unwrap();
        assert_eq!(p.mu(), 280.0 + 0.57);
        assert_eq!(p.rho(), 280.0 / (280.0 + 0.57));
        assert!(OpticalParams::new(0.0, 1.0, 0.5).is_err());
        assert!(OpticalParams::new(1.0, -1.0, 0.5).is_err());
        assert!(OpticalParams::new(1.0, 1.0, 1.0).is_err());
        assert!(OpticalParams::new(1.0, 1.0, -0.1).is_err());
        assert!(OpticalParams::new(f64::NAN, 1.0, 0.5).is_err());
    }

    #[test]
    fn source_validation_and_cap_measure() {
        assert!(SourceSpec::new(0.0, 1.0).is_err());
        assert!(SourceSpec::new(std::f64::consts::FRAC_PI_2, 1.0).is_err());
        assert!(SourceSpec::new(0.3, 0.0).is_err());
        let s = SourceSpec::new(std::f64::consts::PI / 10.0, 1.0).unwrap();
        // (1 - cos(pi/10)) / 2
        assert_abs_diff_eq!(s.cap_measure(), 0.024471741852423234, epsilon = 1e-15);
    }

    #[test]
    fn exp_inverse_cdf_examples() {
        assert_eq!(exp_inverse_cdf(0.0, 280.57).unwrap(), 0.0);
        let u = 1.0 - (-1.0f64).exp();
        assert_abs_diff_eq!(exp_inverse_cdf(u, 1.0).unwrap(), 1.0, epsilon = 1e-15);
        // ln(2)/2
        assert_abs_diff_eq!(exp_inverse_cdf(0.5, 2.0).unwrap(), 0.34657359027997264, epsilon = 1e-15);
        assert!(exp_inverse_cdf(f64::NAN, 1.0).is_err());
        assert!(exp_inverse_cdf(1.0, 1.0).is_err());
        assert!(exp_inverse_cdf(0.5, 0.0).is_err());
    }

    #[test]
    fn geometric_examples() {
        assert_eq!(geometric_path_length(0.9, 0.5).unwrap(), 0);
        assert_eq!(geometric_path_length(0.3, 0.5).unwrap(), 1);
        for u in [1e-200, 1e-9, 0.1, 0.5, 0.999] {
            assert_eq!(geometric_path_length(u, 1e-300).unwrap(), 0);
        }
        assert_eq!(geometric_path_length(1.0, 0.9).unwrap(), 0);
        assert!(geometric_path_length(0.5, 1.0).is_err());
        assert!(geometric_path_length(0.5, 0.0).is_err());
        assert!(geometric_path_length(0.0, 0.5).is_err());
    }

    #[test]
    fn geometric_matches_enumerated_cdf() {
        // N = n exactly when rho^(n+1) < u <= rho^n.
        let rho: f64 = 0.7;
        for n in 0..20u64 {
            let hi = rho.powi(n as i32);
            let lo = rho.powi(n as i32 + 1);
            let mid = 0.5 * (hi + lo);
            assert_eq!(geometric_path_length(mid, rho).unwrap(), n);
        }
    }

    #[test]
    fn hg_density_examples() {
        for c in [-1.0, -0.3, 0.0, 0.7, 1.0] {
            assert_eq!(hg_density(c, 0.0), 1.0);
        }
        assert_abs_diff_eq!(hg_density(1.0, 0.5), 6.0, epsilon = 1e-12);
    }

    #[test]
    fn hg_inverse_cdf_examples() {
        assert_abs_diff_eq!(hg_inverse_cdf(0.0, 0.9).unwrap(), -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(hg_inverse_cdf(1.0, 0.9).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(hg_inverse_cdf(0.5, 0.5).unwrap(), 0.6875, epsilon = 1e-14);
        assert!(hg_inverse_cdf(0.5, 0.0).is_err());
        assert!(hg_inverse_cdf(1.5, 0.5).is_err());
    }

    #[test]
    fn negative_anisotropy_mirrors() {
        let pos = HenyeyGreenstein::new(0.6);
        let neg = HenyeyGreenstein::new(-0.6);
        for y in [0.1, 0.4, 0.8] {
            assert_abs_diff_eq!(neg.cos_from_uniform(y), -pos.cos_from_uniform(1.0 - y), epsilon = 1e-12);
        }
        assert_abs_diff_eq!(neg.density(0.3), pos.density(-0.3), epsilon = 1e-12);
    }

    #[test]
    fn tiny_anisotropy_routes_to_isotropic() {
        let hg = HenyeyGreenstein::new(1e-9);
        assert!(hg.is_isotropic());
        assert_eq!(hg.cos_from_uniform(0.25), -0.5);
        assert_eq!(hg.density(0.9), 1.0);
    }

    #[test]
    fn cone_apex_and_rim() {
        let alpha = std::f64::consts::PI / 10.0;
        let apex = sample_cone_direction(0.0, 0.37, alpha);
        assert_eq!(apex.vec(), Vec3::new(0.0, 0.0, -1.0));
        let rim = sample_cone_direction(1.0, 0.37, alpha);
        let polar = rim.dot(Direction::minus_e3()).acos();
        assert_abs_diff_eq!(polar, alpha, epsilon = 1e-12);
    }

    #[test]
    fn transport_examples() {
        let mut rng = StreamFamily::new(5).rng(Purpose::Auxiliary, 0);
        for _ in 0..100 {
            let prev: Direction<f64> = sample_sphere(&mut rng);
            let out = frame_transport(prev, 1.0, 2.0);
            assert!((out.vec() - prev.vec()).norm() < 1e-12);
        }
        let up = Direction::new_unchecked(Vec3::new(0.0, 0.0, 1.0));
        let out = frame_transport(up, 0.0, 0.0);
        assert_abs_diff_eq!(out.vec().z, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(out.vec().norm(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn transport_is_right_handed() {
        // prev = +e1: e1 -> (0, 0, -1), e2 -> (0, 1, 0); phi = pi/2 lands on e2.
        let prev = Direction::new_unchecked(Vec3::new(1.0, 0.0, 0.0));
        let out = frame_transport(prev, 0.0, std::f64::consts::FRAC_PI_2);
        assert!((out.vec() - Vec3::new(0.0, 1.0, 0.0)).norm() < 1e-12);
        let out = frame_transport(prev, 0.0, 0.0);
        assert!((out.vec() - Vec3::new(0.0, 0.0, -1.0)).norm() < 1e-12);
    }

    #[test]
    fn f32_kernels_agree_with_f64() {
        let c32 = hg_inverse_cdf(0.5f32, 0.5f32).unwrap();
        assert!((c32 - 0.6875).abs() < 1e-6);
        let d32 = frame_transport(Direction::<f32>::minus_e3(), 0.3, 1.0);
        assert!((d32.vec().norm() - 1.0).abs() < 1e-6);
    }
}
