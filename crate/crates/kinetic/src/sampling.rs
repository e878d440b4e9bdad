//! Initial data: a library of zero-mean reference one-particle
//! densities with closed-form moments, tensorized sampling, and the
//! sphere samplers (center-and-rescale conditioning and the exact
//! uniform law on the energy sphere).

use crate::metrics::{
    sobolev_h_neg1_vs_cdf, wasserstein_empirical, CharacteristicFunction, WeightedPointMeasure,
};
use crate::model::{sample_gaussian_vector, ParticleState, Velocity};
use crate::quad::{adaptive_simpson, kahan_sum, sphere_area};
use crate::streams::derive_rng;
use crate::{KineticError, Result};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::Serialize;

/// Relative energy threshold below which a centered draw is considered
/// degenerate and redrawn.
pub const DEGENERACY_THRESHOLD: f64 = 1e-6;

/// Maximum consecutive degenerate draws before the sampler gives up.
pub const MAX_REJECTIONS: usize = 100;

/// Zero-mean reference densities with closed-form moments.
#[derive(Clone, Debug, Serialize)]
pub enum ReferenceDensity {
    /// Uniform law on the centered ball of the given radius.
    UniformBall { d: usize, radius: f64 },
    /// Isotropic Gaussian restricted to the ball of the given radius.
    TruncGauss { d: usize, sigma: f64, radius: f64 },
    /// `(delta_{a e1} + delta_{-a e1}) / 2`.
    TwoPoint { d: usize, a: f64 },
    /// Even two-component Gaussian mixture centered at `+-m e1` with
    /// per-coordinate deviation `sigma`.
    Bimodal { d: usize, m: f64, sigma: f64 },
}

impl ReferenceDensity {
    pub fn uniform_ball(d: usize, radius: f64) -> Self {
        ReferenceDensity::UniformBall { d, radius }
    }

    pub fn trunc_gauss(d: usize, sigma: f64, radius: f64) -> Self {
        ReferenceDensity::TruncGauss { d, sigma, radius }
    }

    pub fn two_point(d: usize, a: f64) -> Self {
        ReferenceDensity::TwoPoint { d, a }
    }

    pub fn bimodal(d: usize, m: f64, sigma: f64) -> Self {
        ReferenceDensity::Bimodal { d, m, sigma }
    }

    /// Library lookup by the names used in experiment configs.
    pub fn by_name(name: &str, d: usize, scale: f64) -> Result<Self> {
        match name {
            "uniform_ball" => Ok(Self::uniform_ball(d, scale)),
            "trunc_gauss" => Ok(Self::trunc_gauss(d, scale, 4.0 * scale)),
            "two_point" => Ok(Self::two_point(d, scale)),
            "bimodal" => Ok(Self::bimodal(d, scale, 0.5 * scale)),
            "gaussian" => Ok(Self::trunc_gauss(d, scale, 12.0 * scale)),
            other => Err(KineticError::InvalidConfig(format!(
                "unknown reference density '{other}'"
            ))),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::UniformBall { d, .. }
            | Self::TruncGauss { d, .. }
            | Self::TwoPoint { d, .. }
            | Self::Bimodal { d, .. } => *d,
        }
    }

    pub fn compact_support(&self) -> bool {
        !matches!(self, Self::Bimodal { .. })
    }

    /// Radial moment `int |v|^k f0(dv)` for `k <= 6`.
    pub fn radial_moment(&self, k: u32) -> f64 {
        assert!(k <= 6, "moment library covers orders up to 6");
        let kf = k as f64;
        match self {
            Self::UniformBall { d, radius } => {
                let df = *d as f64;
                radius.powf(kf) * df / (df + kf)
            }
            Self::TwoPoint { a, .. } => a.powf(kf),
            Self::TruncGauss { d, sigma, radius } => {
                let df = *d as f64;
                // radial density proportional to r^{d-1} exp(-r^2 / 2 sigma^2)
                let w = |r: f64| r.powf(df - 1.0) * (-0.5 * r * r / (sigma * sigma)).exp();
                let z = adaptive_simpson(w, 0.0, *radius, 1e-13, 32);
                adaptive_simpson(|r| r.powf(kf) * w(r), 0.0, *radius, 1e-13, 32) / z
            }
            Self::Bimodal { d, m, sigma } => {
                // E |m e1 + sigma Z|^k for standard Gaussian Z, by radial
                // quadrature of the noncentral chi distribution
                let df = *d as f64;
                let lambda = m / sigma;
                let w = |r: f64| {
                    let bessel = if *d == 1 {
                        (lambda * r).cosh() * 2.0
                    } else {
                        // angular average of exp(lambda r cos(theta)) on S^{d-1}
                        let area = sphere_area(*d);
                        adaptive_simpson(
                            |t: f64| {
                                (lambda * r * t.cos()).exp()
                                    * t.sin().powf(df - 2.0)
                                    * sphere_area(*d - 1)
                            },
                            0.0,
                            std::f64::consts::PI,
                            1e-12,
                            16,
                        ) / area
                            * 2.0
                    };
                    r.powf(df - 1.0) * (-0.5 * (r * r + lambda * lambda)).exp() * bessel
                };
                let hi = 10.0 + 2.0 * lambda.abs();
                let z = adaptive_simpson(w, 0.0, hi, 1e-12, 64);
                let raw = adaptive_simpson(|r| r.powf(kf) * w(r), 0.0, hi, 1e-12, 64) / z;
                raw * sigma.powf(kf)
            }
        }
    }

    /// Energy `int |v|^2 f0(dv)`.
    pub fn energy(&self) -> f64 {
        match self {
            Self::Bimodal { d, m, sigma } => m * m + *d as f64 * sigma * sigma,
            _ => self.radial_moment(2),
        }
    }

    /// Closed-form characteristic function, when one exists.
    pub fn char_fn(&self) -> Option<CharacteristicFunction> {
        match self {
            Self::UniformBall { d, radius } => Some(CharacteristicFunction::UniformBall {
                d: *d,
                radius: *radius,
            }),
            Self::TwoPoint { d, a } => Some(CharacteristicFunction::TwoPoint { d: *d, a: *a }),
            _ => None,
        }
    }

    /// Distribution function of the first coordinate, when closed-form
    /// (used by the one-dimensional Sobolev fast path).
    pub fn cdf_1d(&self) -> Option<Box<dyn Fn(f64) -> f64 + Sync>> {
        if self.dim() != 1 {
            return None;
        }
        match self {
            Self::UniformBall { radius, .. } => {
                let r = *radius;
                Some(Box::new(move |x: f64| ((x + r) / (2.0 * r)).clamp(0.0, 1.0)))
            }
            Self::TwoPoint { a, .. } => {
                let a = *a;
                Some(Box::new(move |x: f64| {
                    if x < -a {
                        0.0
                    } else if x < a {
                        0.5
                    } else {
                        1.0
                    }
                }))
            }
            Self::TruncGauss { sigma, radius, .. } => {
                use statrs::function::erf::erf;
                let (s, r) = (*sigma, *radius);
                let phi = move |x: f64| 0.5 * (1.0 + erf(x / (s * 2.0f64.sqrt())));
                let z = phi(r) - phi(-r);
                Some(Box::new(move |x: f64| {
                    ((phi(x.clamp(-r, r)) - phi(-r)) / z).clamp(0.0, 1.0)
                }))
            }
            Self::Bimodal { m, sigma, .. } => {
                use statrs::function::erf::erf;
                let (m, s) = (*m, *sigma);
                Some(Box::new(move |x: f64| {
                    let phi = |y: f64| 0.5 * (1.0 + erf(y / 2.0f64.sqrt()));
                    0.5 * phi((x - m) / s) + 0.5 * phi((x + m) / s)
                }))
            }
        }
    }

    /// One draw from the density.
    pub fn sample(&self, rng: &mut impl Rng) -> Velocity {
        match self {
            Self::UniformBall { d, radius } => {
                let dir = crate::model::sample_unit_vector(*d, rng);
                let r = radius * rng.gen::<f64>().powf(1.0 / *d as f64);
                Velocity(dir.into_iter().map(|x| x * r).collect())
            }
            Self::TruncGauss { d, sigma, radius } => loop {
                let v: Vec<f64> = sample_gaussian_vector(*d, rng)
                    .into_iter()
                    .map(|x| x * sigma)
                    .collect();
                if crate::model::norm(&v) <= *radius {
                    return Velocity(v);
                }
            },
            Self::TwoPoint { d, a } => {
                let mut v = vec![0.0; *d];
                v[0] = if rng.gen::<bool>() { *a } else { -*a };
                Velocity(v)
            }
            Self::Bimodal { d, m, sigma } => {
                let mut v: Vec<f64> = sample_gaussian_vector(*d, rng)
                    .into_iter()
                    .map(|x| x * sigma)
                    .collect();
                v[0] += if rng.gen::<bool>() { *m } else { -*m };
                Velocity(v)
            }
        }
    }
}

/// `N` iid draws from `f0`, flattened into one particle state.
pub fn sample_tensorized(f0: &ReferenceDensity, n: usize, rng: &mut impl Rng) -> ParticleState {
    let d = f0.dim();
    let mut vel = Vec::with_capacity(n * d);
    for _ in 0..n {
        vel.extend_from_slice(&f0.sample(rng));
    }
    ParticleState::new(d, vel).expect("tensorized buffer is well-formed")
}

/// Centers a velocity buffer and rescales it so the mean square speed is
/// exactly `e`. Returns `None` when the centered energy is degenerate.
fn center_and_rescale(d: usize, vel: &mut [f64], e: f64) -> Option<()> {
    let n = vel.len() / d;
    for k in 0..d {
        let mean = kahan_sum((0..n).map(|i| vel[i * d + k])) / n as f64;
        for i in 0..n {
            vel[i * d + k] -= mean;
        }
    }
    let ms = kahan_sum(vel.iter().map(|x| x * x)) / n as f64;
    if ms < DEGENERACY_THRESHOLD * e {
        return None;
    }
    let lambda = (e / ms).sqrt();
    for x in vel.iter_mut() {
        *x *= lambda;
    }
    Some(())
}

/// Tensorized draw conditioned onto the energy sphere by centering and
/// rescaling; the output has momentum 0 and mean square speed `e` to
/// machine precision.
pub fn sample_sphere_conditioned(
    f0: &ReferenceDensity,
    n: usize,
    e: f64,
    rng: &mut impl Rng,
) -> Result<ParticleState> {
    if n < 2 {
        return Err(KineticError::InvalidConfig(
            "sphere conditioning needs at least two particles".into(),
        ));
    }
    if e <= 0.0 {
        return Err(KineticError::InvalidConfig(
            "sphere energy must be positive".into(),
        ));
    }
    let d = f0.dim();
    for attempt in 0..MAX_REJECTIONS {
        let mut state = sample_tensorized(f0, n, rng);
        let mut vel = state.velocities().to_vec();
        if center_and_rescale(d, &mut vel, e).is_some() {
            state = ParticleState::new(d, vel)?;
            return Ok(state);
        }
        let _ = attempt;
    }
    Err(KineticError::DegenerateSampler(MAX_REJECTIONS))
}

/// Exact uniform law on the momentum-zero energy sphere: an iid Gaussian
/// vector with the mean projected out, rescaled to mean square speed `e`.
/// Orthogonal invariance of the Gaussian makes the law exactly uniform.
pub fn sample_uniform_sphere(
    n: usize,
    e: f64,
    d: usize,
    rng: &mut impl Rng,
) -> Result<ParticleState> {
    if n < 2 {
        return Err(KineticError::InvalidConfig(
            "the energy sphere needs at least two particles".into(),
        ));
    }
    if e <= 0.0 || d == 0 {
        return Err(KineticError::InvalidConfig(
            "energy must be positive and d >= 1".into(),
        ));
    }
    loop {
        let mut vel = sample_gaussian_vector(n * d, rng);
        if center_and_rescale(d, &mut vel, e).is_some() {
            return Ok(ParticleState::new(d, vel)?);
        }
    }
}

/// Distance used by the chaos baseline.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum BaselineMetric {
    /// `W1` against an independent same-size cloud resampled from `f0`.
    W1Resampled,
    /// `|| mu^N - f0 ||^2` in the homogeneous Sobolev norm of order -1
    /// against the closed-form distribution function (d = 1 only).
    HNeg1Squared,
}

/// Monte Carlo estimate of the mean empirical-measure distance
/// `E D(mu^N, f0)` over `m` independent draws. Returns the mean and its
/// standard error.
pub fn chaos_baseline(
    f0: &ReferenceDensity,
    n: usize,
    m: usize,
    metric: BaselineMetric,
    master_seed: u64,
) -> Result<(f64, f64)> {
    if n == 0 || m == 0 {
        return Err(KineticError::InvalidConfig(
            "baseline needs n >= 1 and m >= 1".into(),
        ));
    }
    let d = f0.dim();
    if metric == BaselineMetric::HNeg1Squared && d != 1 {
        return Err(KineticError::InvalidConfig(
            "the Sobolev baseline is one-dimensional".into(),
        ));
    }
    let cdf = f0.cdf_1d();
    let values = crate::map_indexed(m, |r| -> Result<f64> {
        let mut rng: ChaCha12Rng = derive_rng(master_seed, &[r as u64, 0]);
        let cloud = empirical_cloud(f0, n, &mut rng)?;
        match metric {
            BaselineMetric::W1Resampled => {
                let mut rng_ref = derive_rng(master_seed, &[r as u64, 1]);
                let reference = empirical_cloud(f0, n, &mut rng_ref)?;
                wasserstein_empirical(&cloud, &reference, 1)
            }
            BaselineMetric::HNeg1Squared => {
                let cdf = cdf.as_ref().ok_or_else(|| {
                    KineticError::InvalidConfig(
                        "reference density has no closed-form distribution function".into(),
                    )
                })?;
                let norm = sobolev_h_neg1_vs_cdf(&cloud, &**cdf, -50.0, 50.0)?;
                Ok(norm * norm)
            }
        }
    });
    let values: Vec<f64> = values.into_iter().collect::<Result<_>>()?;
    Ok(mean_and_stderr(&values))
}

/// Empirical measure of `n` iid draws.
pub fn empirical_cloud(
    f0: &ReferenceDensity,
    n: usize,
    rng: &mut impl Rng,
) -> Result<WeightedPointMeasure> {
    let points = (0..n).map(|_| f0.sample(rng)).collect();
    WeightedPointMeasure::uniform(f0.dim(), points)
}

/// Sample mean and standard error of the mean.
pub fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let m = values.len() as f64;
    let mean = kahan_sum(values.iter().copied()) / m;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = kahan_sum(values.iter().map(|v| (v - mean) * (v - mean))) / (m - 1.0);
    (mean, (var / m).sqrt())
}
