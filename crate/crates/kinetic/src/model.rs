//! Collision kinematics and kernel models.
//!
//! A binary collision maps pre-collisional velocities `(v, w)` and a unit
//! vector `sigma` to
//!
//! ```text
//! v' = (v + w)/2 + |v - w| sigma / 2,
//! w' = (v + w)/2 - |v - w| sigma / 2,
//! ```
//!
//! which conserves momentum and kinetic energy of the pair. Collision
//! kernels have the product form `B = Gamma(|v - w|) b(cos theta)` with the
//! symmetrized angular support `theta in [0, pi/2]`.

use crate::quad::{gauss_legendre_on, kahan_sum, sphere_area};
use crate::{KineticError, Result};
use rand::Rng;

pub const SIGMA_UNIT_TOL: f64 = 1e-12;

/// A velocity vector in `R^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct Velocity(pub Vec<f64>);

impl Velocity {
    pub fn zero(d: usize) -> Self {
        Velocity(vec![0.0; d])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }
}

impl std::ops::Deref for Velocity {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Full N-particle velocity vector with cached conserved quantities.
///
/// Velocities are stored as one contiguous `d * n` array. The cached
/// energy is the mean square speed `(1/N) sum |v_i|^2` and the cached
/// momentum the mean velocity; both are recomputed with compensated
/// summation whenever [`ParticleState::refresh_caches`] runs (at
/// construction and at trajectory checkpoints).
#[derive(Clone, Debug)]
pub struct ParticleState {
    d: usize,
    n: usize,
    vel: Vec<f64>,
    cached_energy: f64,
    cached_momentum: Vec<f64>,
}

impl ParticleState {
    pub fn new(d: usize, vel: Vec<f64>) -> Result<Self> {
        if d == 0 || vel.is_empty() || vel.len() % d != 0 {
            return Err(KineticError::DimensionMismatch(format!(
                "velocity buffer of length {} is not a multiple of d={}",
                vel.len(),
                d
            )));
        }
        if vel.iter().any(|x| !x.is_finite()) {
            return Err(KineticError::ConstraintViolation(
                "non-finite velocity component".into(),
            ));
        }
        let n = vel.len() / d;
        let mut state = ParticleState {
            d,
            n,
            vel,
            cached_energy: 0.0,
            cached_momentum: vec![0.0; d],
        };
        state.refresh_caches();
        Ok(state)
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn velocity(&self, i: usize) -> &[f64] {
        &self.vel[i * self.d..(i + 1) * self.d]
    }

    pub fn velocities(&self) -> &[f64] {
        &self.vel
    }

    pub fn cached_energy(&self) -> f64 {
        self.cached_energy
    }

    pub fn cached_momentum(&self) -> &[f64] {
        &self.cached_momentum
    }

    /// Mean square speed computed fresh with compensated summation.
    pub fn energy(&self) -> f64 {
        kahan_sum(self.vel.iter().map(|x| x * x)) / self.n as f64
    }

    /// Mean velocity computed fresh with compensated summation.
    pub fn momentum(&self) -> Vec<f64> {
        (0..self.d)
            .map(|k| {
                kahan_sum((0..self.n).map(|i| self.vel[i * self.d + k])) / self.n as f64
            })
            .collect()
    }

    pub fn refresh_caches(&mut self) {
        self.cached_energy = self.energy();
        self.cached_momentum = self.momentum();
    }

    /// Largest particle speed; used as a rejection majorant for hard spheres.
    pub fn max_speed(&self) -> f64 {
        (0..self.n)
            .map(|i| norm(self.velocity(i)))
            .fold(0.0, f64::max)
    }

    /// Applies the pair collision map to particles `i` and `j` in place.
    /// The caller guarantees `sigma` is unit within tolerance.
    pub fn apply_collision(&mut self, i: usize, j: usize, sigma: &[f64]) {
        debug_assert!(i != j);
        let d = self.d;
        let (lo, hi) = if i < j { (i, j) } else { (j, i) };
        let (head, tail) = self.vel.split_at_mut(hi * d);
        let vi = &mut head[lo * d..lo * d + d];
        let vj = &mut tail[..d];
        let rel: f64 = vi
            .iter()
            .zip(vj.iter())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        for k in 0..d {
            let center = 0.5 * (vi[k] + vj[k]);
            let half = 0.5 * rel * sigma[k];
            vi[k] = center + half;
            vj[k] = center - half;
        }
    }

    /// Checks membership of the Boltzmann sphere `S^N(E)` (zero momentum,
    /// mean square speed `E`) within relative tolerance `tol`.
    pub fn on_sphere(&self, constraint: &SphereConstraint, tol: f64) -> bool {
        let e = self.energy();
        if (e - constraint.energy).abs() > tol * constraint.energy {
            return false;
        }
        let scale = constraint.energy.sqrt();
        self.momentum()
            .iter()
            .zip(&constraint.momentum.0)
            .all(|(m, m0)| (m - m0).abs() <= tol * scale)
    }
}

/// The invariant submanifold `S^N(E)`: prescribed mean square speed and
/// mean velocity (always zero here).
#[derive(Clone, Debug)]
pub struct SphereConstraint {
    pub energy: f64,
    pub momentum: Velocity,
}

impl SphereConstraint {
    pub fn new(energy: f64, d: usize) -> Result<Self> {
        if energy <= 0.0 {
            return Err(KineticError::InvalidConfig(
                "sphere energy must be positive".into(),
            ));
        }
        Ok(SphereConstraint {
            energy,
            momentum: Velocity::zero(d),
        })
    }
}

/// Multi-index for velocity monomials `v^alpha`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MomentIndex(pub Vec<u8>);

impl MomentIndex {
    pub fn order(&self) -> u32 {
        self.0.iter().map(|&a| a as u32).sum()
    }

    /// `v^alpha = prod v_k^{alpha_k}`.
    pub fn eval(&self, v: &[f64]) -> f64 {
        v.iter()
            .zip(&self.0)
            .map(|(x, &a)| x.powi(a as i32))
            .product()
    }

    /// All multi-indices in dimension `d` with `|alpha| <= k_max`.
    pub fn all_up_to(d: usize, k_max: u32) -> Vec<MomentIndex> {
        let mut out = Vec::new();
        let mut cur = vec![0u8; d];
        fn rec(cur: &mut Vec<u8>, pos: usize, left: u32, out: &mut Vec<MomentIndex>) {
            if pos == cur.len() {
                out.push(MomentIndex(cur.clone()));
                return;
            }
            for a in 0..=left {
                cur[pos] = a as u8;
                rec(cur, pos + 1, left - a, out);
            }
            cur[pos] = 0;
        }
        rec(&mut cur, 0, k_max, &mut out);
        out.sort_by_key(|a| (a.order(), a.0.clone()));
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum KernelKind {
    /// Grad cutoff Maxwell molecules: `Gamma = 1`, `b = 1`.
    Gmm,
    /// True Maxwell molecules with angular cutoff: `Gamma = 1`,
    /// `b(cos theta) = strength * theta^{-5/2}` on `[cutoff, pi/2]`.
    Tmm { cutoff: f64, strength: f64 },
    /// Hard spheres: `Gamma(z) = z`, `b = 1`.
    Hs,
}

/// Collision kernel `B = Gamma(|v - w|) b(cos theta)` with symmetrized
/// angular support `theta in [0, pi/2]`.
#[derive(Clone, Debug)]
pub struct CollisionKernel {
    kind: KernelKind,
    d: usize,
    angular_mass: f64,
    /// Inverse CDF table for the deviation angle (tMM only).
    theta_icdf: Option<Vec<f64>>,
}

const TMM_NU: f64 = 0.5;
const ICDF_TABLE: usize = 4096;

impl CollisionKernel {
    pub fn gmm(d: usize) -> Self {
        CollisionKernel {
            kind: KernelKind::Gmm,
            d,
            angular_mass: 0.5 * sphere_area(d),
            theta_icdf: None,
        }
    }

    pub fn hs(d: usize) -> Self {
        CollisionKernel {
            kind: KernelKind::Hs,
            d,
            angular_mass: 0.5 * sphere_area(d),
            theta_icdf: None,
        }
    }

    pub fn tmm(d: usize, cutoff: f64, strength: f64) -> Result<Self> {
        if d < 2 {
            return Err(KineticError::InvalidConfig(
                "tMM kernel requires d >= 2".into(),
            ));
        }
        if !(cutoff > 0.0 && cutoff < std::f64::consts::FRAC_PI_2) {
            return Err(KineticError::InvalidConfig(
                "tMM cutoff must lie in (0, pi/2)".into(),
            ));
        }
        if strength <= 0.0 {
            return Err(KineticError::InvalidConfig(
                "tMM strength must be positive".into(),
            ));
        }
        // sigma-measure density over theta: b(cos t) |S^{d-2}| sin^{d-2} t.
        let ring = sphere_area(d - 1);
        let density = move |t: f64| {
            strength * t.powf(-2.0 - TMM_NU) * ring * t.sin().powi(d as i32 - 2)
        };
        // Cumulative table on [cutoff, pi/2] for inverse-CDF sampling.
        let n = ICDF_TABLE;
        let h = (std::f64::consts::FRAC_PI_2 - cutoff) / n as f64;
        let mut cdf = vec![0.0; n + 1];
        for i in 0..n {
            let a = cutoff + i as f64 * h;
            // Simpson per panel; the density is smooth on the truncated range.
            let mid = a + 0.5 * h;
            let inc = h / 6.0 * (density(a) + 4.0 * density(mid) + density(a + h));
            cdf[i + 1] = cdf[i] + inc;
        }
        let total = cdf[n];
        // Invert onto a uniform grid in probability.
        let mut icdf = vec![0.0; n + 1];
        let mut j = 0;
        for (i, slot) in icdf.iter_mut().enumerate() {
            let target = total * i as f64 / n as f64;
            while j < n && cdf[j + 1] < target {
                j += 1;
            }
            let seg = cdf[j + 1] - cdf[j];
            let frac = if seg > 0.0 { (target - cdf[j]) / seg } else { 0.0 };
            *slot = cutoff + (j as f64 + frac) * h;
        }
        icdf[n] = std::f64::consts::FRAC_PI_2;
        Ok(CollisionKernel {
            kind: KernelKind::Tmm { cutoff, strength },
            d,
            angular_mass: total,
            theta_icdf: Some(icdf),
        })
    }

    pub fn kind(&self) -> &KernelKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    /// Whether `Gamma` is constant (Maxwellian-type kernel).
    pub fn is_maxwellian(&self) -> bool {
        !matches!(self.kind, KernelKind::Hs)
    }

    /// Relative-speed factor `Gamma(z)`.
    pub fn gamma(&self, z: f64) -> f64 {
        match self.kind {
            KernelKind::Hs => z,
            _ => 1.0,
        }
    }

    /// Total angular mass `int_{theta in [0, pi/2]} b(sigma . u) dsigma`.
    pub fn angular_mass(&self) -> f64 {
        self.angular_mass
    }

    /// Angular density `b(cos theta)`, with the truncation applied.
    pub fn angular_density(&self, cos_theta: f64) -> f64 {
        match self.kind {
            KernelKind::Gmm | KernelKind::Hs => {
                if cos_theta >= 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            KernelKind::Tmm { cutoff, strength } => {
                let theta = cos_theta.clamp(-1.0, 1.0).acos();
                if theta >= cutoff && theta <= std::f64::consts::FRAC_PI_2 {
                    strength * theta.powf(-2.0 - TMM_NU)
                } else {
                    0.0
                }
            }
        }
    }

    /// Pair interaction rate `Gamma(|v - w|) * angular_mass`.
    pub fn rate(&self, v: &[f64], w: &[f64]) -> f64 {
        self.gamma(distance(v, w)) * self.angular_mass
    }

    /// Cosine Gauss-Legendre quadrature of `g(cos theta)` against the
    /// angular measure `b(sigma . u) dsigma` over the half sphere:
    /// `|S^{d-2}| int b(c) (1 - c^2)^{(d-3)/2} g(c) dc`.
    pub fn angular_quadrature(&self, n: usize, g: impl Fn(f64) -> f64) -> f64 {
        let ring = sphere_area(self.d - 1);
        match self.kind {
            KernelKind::Gmm | KernelKind::Hs => {
                let (xs, ws) = gauss_legendre_on(n, 0.0, 1.0);
                xs.iter()
                    .zip(&ws)
                    .map(|(&c, &w)| {
                        w * ring * (1.0 - c * c).powf((self.d as f64 - 3.0) / 2.0) * g(c)
                    })
                    .sum()
            }
            KernelKind::Tmm { cutoff, .. } => {
                // Integrate in theta where the density is singular-free.
                let (ts, ws) = gauss_legendre_on(n, cutoff, std::f64::consts::FRAC_PI_2);
                ts.iter()
                    .zip(&ws)
                    .map(|(&t, &w)| {
                        let c = t.cos();
                        w * self.angular_density(c) * ring * t.sin().powi(self.d as i32 - 2) * g(c)
                    })
                    .sum()
            }
        }
    }

    /// Draws the post-collisional direction with density proportional to
    /// `b(sigma . u_hat)` on the half sphere `sigma . u_hat >= 0`.
    pub fn sample_sigma(&self, u_hat: &[f64], rng: &mut impl Rng) -> Vec<f64> {
        debug_assert_eq!(u_hat.len(), self.d);
        match self.kind {
            KernelKind::Gmm | KernelKind::Hs => {
                // Uniform on the half sphere: uniform direction, reflected.
                let mut sigma = sample_unit_vector(self.d, rng);
                if dot(&sigma, u_hat) < 0.0 {
                    for s in &mut sigma {
                        *s = -*s;
                    }
                }
                sigma
            }
            KernelKind::Tmm { .. } => {
                let icdf = self.theta_icdf.as_ref().expect("tMM table");
                let u: f64 = rng.gen();
                let pos = u * (icdf.len() - 1) as f64;
                let i = (pos as usize).min(icdf.len() - 2);
                let theta = icdf[i] + (pos - i as f64) * (icdf[i + 1] - icdf[i]);
                // Uniform azimuth: Gaussian projection orthogonal to u_hat.
                let mut w = sample_unit_vector(self.d, rng);
                let p = dot(&w, u_hat);
                for (wk, uk) in w.iter_mut().zip(u_hat) {
                    *wk -= p * uk;
                }
                let mut nw = norm(&w);
                while nw < 1e-12 {
                    w = sample_unit_vector(self.d, rng);
                    let p = dot(&w, u_hat);
                    for (wk, uk) in w.iter_mut().zip(u_hat) {
                        *wk -= p * uk;
                    }
                    nw = norm(&w);
                }
                let (st, ct) = theta.sin_cos();
                u_hat
                    .iter()
                    .zip(&w)
                    .map(|(uk, wk)| ct * uk + st * wk / nw)
                    .collect()
            }
        }
    }
}

/// Uniform random unit vector in `R^d` (Box-Muller Gaussian, normalized).
pub fn sample_unit_vector(d: usize, rng: &mut impl Rng) -> Vec<f64> {
    loop {
        let v = sample_gaussian_vector(d, rng);
        let n = norm(&v);
        if n > 1e-12 {
            return v.iter().map(|x| x / n).collect();
        }
    }
}

/// Vector of iid standard Gaussians.
pub fn sample_gaussian_vector(d: usize, rng: &mut impl Rng) -> Vec<f64> {
    let mut out = Vec::with_capacity(d);
    while out.len() < d {
        let u1: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
        let u2: f64 = rng.gen();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (2.0 * std::f64::consts::PI * u2).sin_cos();
        out.push(r * c);
        if out.len() < d {
            out.push(r * s);
        }
    }
    out
}

/// The elastic pair collision map.
///
/// Returns `(v', w')` rotated about the pair center by `sigma`. Errors on
/// dimension mismatch or when `sigma` deviates from unit length by more
/// than [`SIGMA_UNIT_TOL`]; within tolerance `sigma` is renormalized.
pub fn collide_pair(v: &[f64], w: &[f64], sigma: &[f64]) -> Result<(Velocity, Velocity)> {
    if v.len() != w.len() || v.len() != sigma.len() {
        return Err(KineticError::DimensionMismatch(format!(
            "collide_pair: v, w, sigma have lengths {}, {}, {}",
            v.len(),
            w.len(),
            sigma.len()
        )));
    }
    let ns = norm(sigma);
    let deviation = (ns - 1.0).abs();
    if deviation > SIGMA_UNIT_TOL {
        return Err(KineticError::NonUnitSigma { deviation });
    }
    let rel = distance(v, w);
    let mut vp = Vec::with_capacity(v.len());
    let mut wp = Vec::with_capacity(v.len());
    for k in 0..v.len() {
        let center = 0.5 * (v[k] + w[k]);
        let half = 0.5 * rel * sigma[k] / ns;
        vp.push(center + half);
        wp.push(center - half);
    }
    Ok((Velocity(vp), Velocity(wp)))
}
