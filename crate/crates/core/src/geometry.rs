//! Geometry of the cosphere bundle `S*(R^2) = R^2 x S^1`.
//!
//! The anisotropic metric is implemented through its closed form
//! `d((x, w), (y, v)) = (|x - y|^2 + |<w, x - y>| + |w - v|^2)^{1/2}`,
//! with `|w - v|` the chordal distance on the circle. The form is only
//! quasi-symmetric because the middle term uses the first direction.

use std::collections::HashMap;
use std::f64::consts::{LN_2, PI, TAU};
use std::sync::Mutex;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Chordal distance between the unit vectors at angles `a` and `b`.
pub fn chord(a: f64, b: f64) -> f64 {
    2.0 * ((a - b) * 0.5).sin().abs()
}

/// Unit vector at angle `a`.
pub fn unit(a: f64) -> [f64; 2] {
    [a.cos(), a.sin()]
}

pub fn wrap_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// A point `(x, w)` of the cosphere bundle; `w` is stored as an angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CospherePoint {
    pub x: [f64; 2],
    angle: f64,
}

impl CospherePoint {
    pub fn new(x: [f64; 2], angle: f64) -> Self {
        Self { x, angle: wrap_angle(angle) }
    }

    pub fn angle(&self) -> f64 {
        self.angle
    }

    pub fn direction(&self) -> [f64; 2] {
        unit(self.angle)
    }
}

/// Metric from the spatial displacement `y - x` and the two angles.
pub fn metric_from_displacement(dx: [f64; 2], from_angle: f64, to_angle: f64) -> f64 {
    let w = unit(from_angle);
    let along = w[0] * dx[0] + w[1] * dx[1];
    let c = chord(from_angle, to_angle);
    (dx[0] * dx[0] + dx[1] * dx[1] + along.abs() + c * c).sqrt()
}

/// The anisotropic metric on `R^2 x S^1`.
pub fn metric_d(p: &CospherePoint, q: &CospherePoint) -> f64 {
    metric_from_displacement([q.x[0] - p.x[0], q.x[1] - p.x[1]], p.angle, q.angle)
}

/// The same metric on the torus of period `period`, using the shortest
/// displacement.
pub fn metric_d_torus(p: &CospherePoint, q: &CospherePoint, period: f64) -> f64 {
    let wrap = |d: f64| d - period * (d / period).round();
    metric_from_displacement([wrap(q.x[0] - p.x[0]), wrap(q.x[1] - p.x[1])], p.angle, q.angle)
}

/// Uniform directions `a_m = 2 pi m / M` with quadrature weight `2 pi / M`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DirectionSet {
    count: usize,
}

impl DirectionSet {
    pub fn new(count: usize) -> Result<Self> {
        if count < 4 {
            return Err(Error::InvalidConfig(format!("need at least 4 directions, got {count}")));
        }
        Ok(Self { count })
    }

    /// Checks `M >= ceil(2 pi / sqrt(sigma_min))`.
    pub fn check_resolves(&self, ladder: &ScaleLadder) -> Result<()> {
        let need = (TAU / ladder.sigma_min().sqrt()).ceil() as usize;
        if self.count < need {
            return Err(Error::InvalidConfig(format!(
                "M = {} directions violates M >= ceil(2 pi / sqrt(sigma_min)) = {need}",
                self.count
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn spacing(&self) -> f64 {
        TAU / self.count as f64
    }

    pub fn weight(&self) -> f64 {
        self.spacing()
    }

    pub fn angle(&self, m: usize) -> f64 {
        self.spacing() * (m % self.count) as f64
    }

    pub fn unit(&self, m: usize) -> [f64; 2] {
        unit(self.angle(m))
    }

    /// Index of the direction nearest to `angle`.
    pub fn nearest(&self, angle: f64) -> usize {
        ((wrap_angle(angle) / self.spacing()).round() as usize) % self.count
    }

    /// Largest `w` with `chord(a_m, a_{m+w}) <= radius`; `None` when the window
    /// covers the whole circle.
    pub fn window_halfwidth(&self, radius: f64) -> Option<usize> {
        if radius >= 2.0 {
            return None;
        }
        let max_angle = 2.0 * (radius * 0.5).asin();
        let w = (max_angle / self.spacing() * (1.0 + 1e-12)).floor() as usize;
        if 2 * w + 1 >= self.count {
            None
        } else {
            Some(w)
        }
    }
}

/// Geometric scale ladder `sigma_k = 2^{-k/J}` for `k = 1..=K`, each node
/// carrying the `d sigma / sigma` weight `ln 2 / J`. The slot `sigma in [1, e]`
/// is collapsed into one coarse node of weight 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScaleLadder {
    per_octave: usize,
    depth: usize,
}

impl ScaleLadder {
    pub fn new(per_octave: usize, depth: usize) -> Result<Self> {
        if per_octave == 0 || depth == 0 {
            return Err(Error::InvalidConfig("ladder needs J >= 1 and K >= 1".into()));
        }
        Ok(Self { per_octave, depth })
    }

    /// Ladder with `J` nodes per octave ending at `sigma_min`, which must be a
    /// node `2^{-K/J}`.
    pub fn from_sigma_min(per_octave: usize, sigma_min: f64) -> Result<Self> {
        if !(sigma_min > 0.0 && sigma_min < 1.0) {
            return Err(Error::InvalidConfig(format!("sigma_min must lie in (0, 1), got {sigma_min}")));
        }
        let k = per_octave as f64 * (1.0 / sigma_min).log2();
        let depth = k.round();
        if (k - depth).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "sigma_min = {sigma_min} is not of the form 2^(-K/{per_octave})"
            )));
        }
        Self::new(per_octave, depth as usize)
    }

    /// Shortest ladder whose packets (radial support `[inner, outer] / sigma`)
    /// reach `zeta_max`: the first node past the ladder, `sigma_{K+1}`, must put
    /// `zeta_max` below the inner edge of its support.
    pub fn covering(per_octave: usize, zeta_max: f64, inner: f64) -> Result<Self> {
        let need = per_octave as f64 * (zeta_max / inner).log2();
        let depth = (need.ceil() as usize).saturating_sub(1).max(1);
        Self::new(per_octave, depth)
    }

    pub fn per_octave(&self) -> usize {
        self.per_octave
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn len(&self) -> usize {
        self.depth
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `sigma_k = 2^{-k/J}`; valid for any integer `k`.
    pub fn sigma(&self, k: i64) -> f64 {
        (-(k as f64) / self.per_octave as f64).exp2()
    }

    pub fn sigma_min(&self) -> f64 {
        self.sigma(self.depth as i64)
    }

    /// `ln 2 / J`.
    pub fn weight(&self) -> f64 {
        LN_2 / self.per_octave as f64
    }

    pub fn coarse_weight(&self) -> f64 {
        1.0
    }

    /// The channel nodes `k = 1..=K`.
    pub fn nodes(&self) -> impl Iterator<Item = usize> {
        1..=self.depth
    }

    pub fn total_weight(&self) -> f64 {
        self.weight() * self.depth as f64
    }
}

/// The ball `B_tau(x, w)` of the anisotropic metric.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnisotropicBall {
    pub center: CospherePoint,
    radius: f64,
}

impl AnisotropicBall {
    pub fn new(center: CospherePoint, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidConfig(format!("ball radius must be positive, got {radius}")));
        }
        Ok(Self { center, radius })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }
}

pub fn ball_membership(ball: &AnisotropicBall, q: &CospherePoint) -> bool {
    metric_d(&ball.center, q) <= ball.radius
}

/// Box region `|x - y| <= t`, `|<w, x - y>| <= t^2`, `|w - v| <= t`.
/// Every ball of radius `t` holds the box of radius `t / sqrt 3` and sits in the
/// box of radius `t`.
pub fn box_ball_membership(ball: &AnisotropicBall, q: &CospherePoint) -> bool {
    box_contains(&ball.center, ball.radius, q)
}

fn box_contains(center: &CospherePoint, t: f64, q: &CospherePoint) -> bool {
    let dx = [q.x[0] - center.x[0], q.x[1] - center.x[1]];
    let w = center.direction();
    let along = (w[0] * dx[0] + w[1] * dx[1]).abs();
    (dx[0] * dx[0] + dx[1] * dx[1]).sqrt() <= t && along <= t * t && chord(center.angle(), q.angle()) <= t
}

/// Tent test: `q` lies in the tent over `ball` at height `sigma` when
/// `d(center, q) <= tau - sqrt(sigma)`.
pub fn tent_membership(ball: &AnisotropicBall, q: &CospherePoint, sigma: f64) -> bool {
    sigma > 0.0 && metric_d(&ball.center, q) <= ball.radius - sigma.sqrt()
}

/// Monte-Carlo volumes of balls and of the anisotropic slabs around the
/// zero section. Estimates are deterministic for a given seed and cached.
#[derive(Debug)]
pub struct VolumeEstimator {
    samples: usize,
    seed: u64,
    cache: Mutex<HashMap<u64, f64>>,
}

impl VolumeEstimator {
    pub fn new(samples: usize, seed: u64) -> Self {
        Self { samples: samples.max(1), seed, cache: Mutex::new(HashMap::new()) }
    }

    pub fn samples(&self) -> usize {
        self.samples
    }

    /// `|B_tau|` for the measure `dx dw`; center-independent, cached per `tau`.
    pub fn ball_volume(&self, tau: f64) -> f64 {
        let key = tau.to_bits();
        if let Some(v) = self.cache.lock().expect("volume cache poisoned").get(&key) {
            return *v;
        }
        let v = self.ball_volume_at(&CospherePoint::new([0.0, 0.0], 0.0), tau);
        self.cache.lock().expect("volume cache poisoned").insert(key, v);
        v
    }

    /// Monte-Carlo volume of `B_tau(center)`, sampling the bounding box in
    /// the frame of `center` and testing membership with [`metric_d`].
    pub fn ball_volume_at(&self, center: &CospherePoint, tau: f64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ tau.to_bits());
        let along_max = (tau * tau).min(tau);
        let half_angle = if tau >= 2.0 { PI } else { 2.0 * (tau * 0.5).asin() };
        let w = center.direction();
        let perp = [-w[1], w[0]];
        let ball = AnisotropicBall { center: *center, radius: tau };
        let mut hits = 0usize;
        for _ in 0..self.samples {
            let a = rng.gen_range(-along_max..=along_max);
            let b = rng.gen_range(-tau..=tau);
            let da = rng.gen_range(-half_angle..=half_angle);
            let x = [center.x[0] + a * w[0] + b * perp[0], center.x[1] + a * w[1] + b * perp[1]];
            let q = CospherePoint::new(x, center.angle() + da);
            if ball_membership(&ball, &q) {
                hits += 1;
            }
        }
        let box_volume = (2.0 * along_max) * (2.0 * tau) * (2.0 * half_angle);
        box_volume * hits as f64 / self.samples as f64
    }

    /// Area of `{z : 2^{j-1} sigma < |z|^2 + |<w, z>| <= 2^j sigma}` (no lower
    /// bound for `j = 0`).
    pub fn slab_volume(&self, j: u32, sigma: f64, angle: f64) -> f64 {
        let hi = (j as f64).exp2() * sigma;
        let lo = if j == 0 { 0.0 } else { 0.5 * hi };
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ hi.to_bits() ^ angle.to_bits().rotate_left(17));
        let along_max = hi.min(hi.sqrt());
        let across_max = hi.sqrt();
        let w = unit(angle);
        let mut hits = 0usize;
        for _ in 0..self.samples {
            let a = rng.gen_range(-along_max..=along_max);
            let b = rng.gen_range(-across_max..=across_max);
            // z = a w + b w_perp, so |z|^2 = a^2 + b^2 and <w, z> = a.
            let z = [a * w[0] - b * w[1], a * w[1] + b * w[0]];
            let along = w[0] * z[0] + w[1] * z[1];
            let v = z[0] * z[0] + z[1] * z[1] + along.abs();
            if v > lo && v <= hi {
                hits += 1;
            }
        }
        (2.0 * along_max) * (2.0 * across_max) * hits as f64 / self.samples as f64
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::SQRT_2;

    #[test]
    fn metric_examples() {
        let p = CospherePoint::new([0.3, -1.0], 1.1);
        assert_eq!(metric_d(&p, &p), 0.0);
        let a = CospherePoint::new([0.0, 0.0], 0.0);
        let b = CospherePoint::new([0.0, 0.0], PI / 2.0);
        assert!((metric_d(&a, &b) - SQRT_2).abs() < 1e-15);
        let c = CospherePoint::new([1.0, 0.0], 0.0);
        let d = CospherePoint::new([0.0, 0.0], 0.0);
        assert!((metric_d(&c, &d) - SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn metric_is_quasi_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut worst: f64 = 1.0;
        for _ in 0..100_000 {
            let p = CospherePoint::new([rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)], rng.gen_range(0.0..TAU));
            let q = CospherePoint::new([rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)], rng.gen_range(0.0..TAU));
            let (a, b) = (metric_d(&p, &q), metric_d(&q, &p));
            worst = worst.max(a / b).max(b / a);
        }
        assert!(worst <= 2.0, "asymmetry constant {worst}");
    }

    #[test]
    fn torus_metric_wraps() {
        let p = CospherePoint::new([0.1, 0.1], 0.0);
        let q = CospherePoint::new([TAU - 0.1, 0.1], 0.0);
        let d = metric_d_torus(&p, &q, TAU);
        assert!((d - (0.04f64 + 0.2).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn membership_thresholds() {
        let center = CospherePoint::new([1.0, 2.0], 0.7);
        let ball = AnisotropicBall::new(center, 0.3).unwrap();
        assert!(ball_membership(&ball, &center));
        assert!(box_ball_membership(&ball, &center));
        // Walk across the direction until d = 1.01 tau.
        let w = center.direction();
        let perp = [-w[1], w[0]];
        let s = 0.3 * 1.01;
        let q = CospherePoint::new([1.0 + s * perp[0], 2.0 + s * perp[1]], 0.7);
        assert!((metric_d(&center, &q) - s).abs() < 1e-12);
        assert!(!ball_membership(&ball, &q));
        assert!(AnisotropicBall::new(center, 0.0).is_err());
    }

    #[test]
    fn box_ball_sandwich_on_random_cloud() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..100_000 {
            let tau = rng.gen_range(0.01f64..3.0);
            let center = CospherePoint::new([rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)], rng.gen_range(0.0..TAU));
            let r = 1.5 * tau.max(tau * tau);
            let q = CospherePoint::new(
                [center.x[0] + rng.gen_range(-r..r), center.x[1] + rng.gen_range(-r..r)],
                center.angle() + rng.gen_range(-2.0 * tau.min(PI)..2.0 * tau.min(PI)),
            );
            let ball = AnisotropicBall::new(center, tau).unwrap();
            let inner = AnisotropicBall::new(center, tau / 3f64.sqrt()).unwrap();
            if box_ball_membership(&inner, &q) {
                assert!(ball_membership(&ball, &q));
            }
            if ball_membership(&ball, &q) {
                assert!(box_ball_membership(&ball, &q));
            }
        }
    }

    /// Boundary-sampling oracle for `d(q, B^c) >= sqrt(sigma)`.
    fn tent_oracle(ball: &AnisotropicBall, q: &CospherePoint, sigma: f64) -> bool {
        if !ball_membership(ball, q) {
            return false;
        }
        let c = ball.center;
        let tau = ball.radius();
        let w = c.direction();
        let perp = [-w[1], w[0]];
        // Probe points just outside the ball along 256 rays of (along, across, angle).
        let mut min_d = f64::INFINITY;
        for i in 0..256 {
            let t = i as f64 / 256.0 * TAU;
            let u = [t.cos() * 0.8, t.sin() * 0.8, (2.0 * t).cos() * 0.6];
            // Bisect along the ray to the boundary.
            let (mut lo, mut hi) = (0.0, 10.0 * tau.max(1.0));
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                let pt = CospherePoint::new(
                    [c.x[0] + mid * (u[0] * w[0] + u[1] * perp[0]), c.x[1] + mid * (u[0] * w[1] + u[1] * perp[1])],
                    c.angle() + mid * u[2],
                );
                if ball_membership(ball, &pt) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let pt = CospherePoint::new(
                [c.x[0] + hi * (u[0] * w[0] + u[1] * perp[0]), c.x[1] + hi * (u[0] * w[1] + u[1] * perp[1])],
                c.angle() + hi * u[2],
            );
            min_d = min_d.min(metric_d(q, &pt)).min(metric_d(&pt, q));
        }
        min_d >= sigma.sqrt()
    }

    #[test]
    fn tent_examples() {
        let center = CospherePoint::new([0.0, 0.0], 0.3);
        let ball = AnisotropicBall::new(center, 0.5).unwrap();
        assert!(tent_membership(&ball, &center, 0.001));
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            let q = CospherePoint::new([rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3)], 0.3 + rng.gen_range(-0.4..0.4));
            let sigma = 0.25 * rng.gen_range(1.0001..2.0);
            assert!(!tent_membership(&ball, &q, sigma));
            assert!(!tent_oracle(&ball, &q, sigma));
        }
        let outside = CospherePoint::new([0.0, 2.0], 0.3);
        assert!(!tent_membership(&ball, &outside, 1e-6));
        assert!(!tent_oracle(&ball, &outside, 1e-6));
        assert!(tent_oracle(&ball, &center, 0.001));
    }

    #[test]
    fn direction_windows() {
        let d = DirectionSet::new(64).unwrap();
        assert_eq!(d.window_halfwidth(0.0), Some(0));
        let w = d.window_halfwidth(0.5).unwrap();
        assert!(chord(0.0, d.angle(w)) <= 0.5);
        assert!(chord(0.0, d.angle(w + 1)) > 0.5);
        assert_eq!(d.window_halfwidth(2.0), None);
        assert_eq!(d.nearest(TAU - 1e-9), 0);
    }

    #[test]
    fn ladder_weights_and_coverage() {
        let l = ScaleLadder::from_sigma_min(4, 2f64.powi(-6)).unwrap();
        assert_eq!(l.depth(), 24);
        assert!((l.total_weight() - (1.0 / l.sigma_min()).ln()).abs() < 1e-12);
        assert!(ScaleLadder::from_sigma_min(4, 0.3).is_err());
        let c = ScaleLadder::covering(4, 181.02, 0.8).unwrap();
        assert!(c.sigma(c.depth() as i64 + 1) * 181.02 <= 0.8);
        assert!(c.sigma(c.depth() as i64) * 181.02 > 0.8);
        let dirs = DirectionSet::new(64).unwrap();
        assert!(dirs.check_resolves(&l).is_ok());
        assert!(DirectionSet::new(32).unwrap().check_resolves(&l).is_err());
    }

    #[test]
    fn ball_volume_doubling_and_slopes() {
        let est = VolumeEstimator::new(200_000, 5);
        let taus: Vec<f64> = (0..=14).map(|i| 0.01 * 2f64.powf(i as f64 * 0.5)).collect();
        let mut worst_hi: f64 = 0.0;
        let mut worst_lo = f64::INFINITY;
        for &t in &taus {
            let ratio = est.ball_volume(2.0 * t) / est.ball_volume(t);
            worst_hi = worst_hi.max(ratio / 16.0);
            worst_lo = worst_lo.min(ratio / 4.0);
        }
        let c = worst_hi.max(1.0 / worst_lo);
        assert!(c <= 8.0, "doubling constant {c}");

        let small: Vec<(f64, f64)> = [0.01, 0.02, 0.04, 0.07, 0.1].iter().map(|&t| (t, est.ball_volume(t))).collect();
        let large: Vec<(f64, f64)> = [10.0, 20.0, 40.0, 70.0, 100.0].iter().map(|&t| (t, est.ball_volume(t))).collect();
        assert!((loglog_slope(&small) - 4.0).abs() <= 0.3);
        assert!((loglog_slope(&large) - 2.0).abs() <= 0.3);
    }

    #[test]
    fn ball_volume_is_center_independent() {
        let est = VolumeEstimator::new(200_000, 11);
        for tau in [0.05, 0.5, 3.0] {
            let a = est.ball_volume_at(&CospherePoint::new([0.0, 0.0], 0.0), tau);
            let b = est.ball_volume_at(&CospherePoint::new([3.0, -7.0], 2.2), tau);
            assert!((a - b).abs() / a <= 0.05, "tau {tau}: {a} vs {b}");
        }
    }

    #[test]
    fn slab_volumes() {
        let est = VolumeEstimator::new(400_000, 3);
        let v = est.slab_volume(2, 0.0025, 0.0);
        let target = 0.01f64.powf(1.5);
        assert!(v / target <= 4.0 && target / v <= 4.0);
        let v = est.slab_volume(3, 12.5, 0.0);
        assert!(v / 100.0 <= 4.0 && 100.0 / v <= 4.0);
        let a = est.slab_volume(1, 0.3, 0.0);
        let b = est.slab_volume(1, 0.3, PI / 4.0);
        assert!((a - b).abs() / a <= 0.02);
    }
}
