//! Deterministic solvers for the mean-field (Boltzmann) limit equation.
//!
//! For Maxwellian-type kernels the equation closes in Fourier variables:
//! the gain term becomes an angular average of `F(xi+) F(xi-)` with
//! `|xi+|^2 + |xi-|^2 = |xi|^2`, so the dynamics at a frequency only ever
//! reads frequencies of smaller modulus. The module provides a radial
//! solver for isotropic data, a full tensor-grid solver for anisotropic
//! data at reduced resolution, a closed bilinear ODE system for the
//! polynomial moments, the Maxwellian equilibrium, and a large-N particle
//! oracle for kernels without a deterministic solver (hard spheres).

use crate::kac;
use crate::metrics::WeightedPointMeasure;
use crate::model::{norm, CollisionKernel, KernelKind, MomentIndex, Velocity};
use crate::quad::{gauss_legendre_on, kahan_sum, sphere_area};
use crate::sampling::{sample_sphere_conditioned, ReferenceDensity};
use crate::streams::derive_rng;
use crate::{KineticError, Result};
use num_complex::Complex64;
use rand::Rng;
use std::io::Write;

/// Storage layout of a grid-based density.
#[derive(Clone, Debug)]
pub enum Representation {
    /// Real values `f(v_k)` on a uniform box grid `[-extent, extent]^d`
    /// with `n` nodes per axis (row-major).
    Velocity {
        extent: f64,
        n: usize,
        values: Vec<f64>,
    },
    /// Isotropic characteristic function `F(|xi|)` on `[0, xi_max]`.
    RadialFourier { xi_max: f64, values: Vec<f64> },
    /// Full characteristic function on `[-xi_max, xi_max]^d`, `n` nodes
    /// per axis (row-major), `n` odd so the origin is a node.
    FourierGrid {
        xi_max: f64,
        n: usize,
        values: Vec<Complex64>,
    },
}

/// A density in one of the grid representations, with cached invariants.
#[derive(Clone, Debug)]
pub struct GridDensity {
    d: usize,
    pub repr: Representation,
    mass: f64,
    momentum: Vec<f64>,
    energy: f64,
    /// Set when an evaluation was clamped at the grid edge.
    pub truncated: bool,
}

/// Centered Gaussian equilibrium with per-coordinate variance `E/d`.
#[derive(Clone, Copy, Debug)]
pub struct Maxwellian {
    pub energy: f64,
    pub d: usize,
}

impl Maxwellian {
    pub fn new(energy: f64, d: usize) -> Result<Self> {
        if energy <= 0.0 || !energy.is_finite() {
            return Err(KineticError::InvalidConfig(
                "Maxwellian energy must be positive".into(),
            ));
        }
        Ok(Maxwellian { energy, d })
    }

    pub fn variance(&self) -> f64 {
        self.energy / self.d as f64
    }

    pub fn density(&self, v: &[f64]) -> f64 {
        self.log_density(v).exp()
    }

    pub fn log_density(&self, v: &[f64]) -> f64 {
        let s2 = self.variance();
        let q: f64 = v.iter().map(|x| x * x).sum();
        -0.5 * q / s2 - 0.5 * self.d as f64 * (2.0 * std::f64::consts::PI * s2).ln()
    }

    /// Characteristic function, a function of `|xi|` only.
    pub fn char_radial(&self, r: f64) -> f64 {
        (-0.5 * self.variance() * r * r).exp()
    }
}

/// Quintic Lagrange weights on the six uniform nodes at offsets
/// `-2..=3` around the cell `[0, 1]` containing `t`. Exact for degree-5
/// polynomials, so the interpolation error is `O(h^6)`; this matters
/// because the energy functional reads curvature at the origin and
/// amplifies pointwise interpolation error by `1/h^2`.
fn lagrange_weights(t: f64) -> [f64; 6] {
    let mut w = [0.0; 6];
    for (j, wj) in w.iter_mut().enumerate() {
        let xj = j as f64 - 2.0;
        let mut p = 1.0;
        for k in 0..6 {
            if k == j {
                continue;
            }
            let xk = k as f64 - 2.0;
            p *= (t - xk) / (xj - xk);
        }
        *wj = p;
    }
    w
}

/// Quintic interpolation of an even radial profile on a uniform grid
/// with spacing `h`; the stencil mirrors across 0. Values beyond the
/// last node clamp to the edge value.
fn eval_radial_raw(values: &[f64], h: f64, r: f64) -> f64 {
    let n = values.len();
    let x = r / h;
    let i = (x.floor() as isize).clamp(0, n as isize - 2) as usize;
    let t = x - i as f64;
    let w = lagrange_weights(t);
    let fetch = |k: isize| -> f64 {
        // mirror across 0 (the profile is even); clamp at the far edge
        let k = k.abs().min(n as isize - 1) as usize;
        values[k]
    };
    w.iter()
        .enumerate()
        .map(|(s, &ws)| ws * fetch(i as isize + s as isize - 2))
        .sum()
}

/// Separable cubic interpolation on the tensor Fourier grid. Returns the
/// value and whether the point fell outside the grid (clamped to 0).
fn eval_tensor_raw(
    values: &[Complex64],
    n: usize,
    d: usize,
    xi_max: f64,
    point: &[f64],
) -> (Complex64, bool) {
    let h = 2.0 * xi_max / (n - 1) as f64;
    let mut base = [0usize; 3];
    let mut frac = [0.0f64; 3];
    for a in 0..d {
        let x = (point[a] + xi_max) / h;
        if x < 0.0 || x > (n - 1) as f64 {
            return (Complex64::new(0.0, 0.0), true);
        }
        let i = (x.floor() as isize).clamp(0, n as isize - 2) as usize;
        base[a] = i;
        frac[a] = x - i as f64;
    }
    let mut weights = [[0.0f64; 6]; 3];
    for a in 0..d {
        weights[a] = lagrange_weights(frac[a]);
    }
    let clamp = |k: isize| k.clamp(0, n as isize - 1) as usize;
    let mut acc = Complex64::new(0.0, 0.0);
    match d {
        1 => {
            for (s0, &w0) in weights[0].iter().enumerate() {
                let i0 = clamp(base[0] as isize + s0 as isize - 2);
                acc += values[i0] * w0;
            }
        }
        2 => {
            for (s0, &w0) in weights[0].iter().enumerate() {
                let i0 = clamp(base[0] as isize + s0 as isize - 2);
                for (s1, &w1) in weights[1].iter().enumerate() {
                    let i1 = clamp(base[1] as isize + s1 as isize - 2);
                    acc += values[i0 * n + i1] * (w0 * w1);
                }
            }
        }
        3 => {
            for (s0, &w0) in weights[0].iter().enumerate() {
                let i0 = clamp(base[0] as isize + s0 as isize - 2);
                for (s1, &w1) in weights[1].iter().enumerate() {
                    let i1 = clamp(base[1] as isize + s1 as isize - 2);
                    let w01 = w0 * w1;
                    for (s2, &w2) in weights[2].iter().enumerate() {
                        let i2 = clamp(base[2] as isize + s2 as isize - 2);
                        acc += values[(i0 * n + i1) * n + i2] * (w01 * w2);
                    }
                }
            }
        }
        _ => unreachable!("tensor grids support d <= 3"),
    }
    (acc, false)
}

/// Angular integral `int_{half sphere} b(sigma . u) g(sigma . u) dsigma`
/// for integrands depending only on the polar cosine; integrated in the
/// polar angle so the `d = 2` surface weight stays regular.
fn angular_theta_quad(kernel: &CollisionKernel, n: usize, g: impl Fn(f64) -> f64) -> f64 {
    let d = kernel.dim();
    let ring = sphere_area(d - 1);
    let (lo, hi) = match kernel.kind() {
        KernelKind::Tmm { cutoff, .. } => (*cutoff, std::f64::consts::FRAC_PI_2),
        _ => (0.0, std::f64::consts::FRAC_PI_2),
    };
    let (ts, ws) = gauss_legendre_on(n, lo, hi);
    ts.iter()
        .zip(&ws)
        .map(|(&t, &w)| {
            let c = t.cos();
            w * kernel.angular_density(c) * ring * t.sin().powi(d as i32 - 2) * g(c)
        })
        .sum()
}

/// Orthonormal frame completing `u_hat`: `d - 1` vectors spanning its
/// orthogonal complement.
fn orthonormal_frame(u_hat: &[f64]) -> Vec<Vec<f64>> {
    let d = u_hat.len();
    match d {
        2 => vec![vec![-u_hat[1], u_hat[0]]],
        3 => {
            let a = (0..3)
                .min_by(|&i, &j| u_hat[i].abs().partial_cmp(&u_hat[j].abs()).unwrap())
                .unwrap();
            let mut e1 = vec![0.0; 3];
            e1[a] = 1.0;
            let p: f64 = e1.iter().zip(u_hat).map(|(x, u)| x * u).sum();
            for (x, u) in e1.iter_mut().zip(u_hat) {
                *x -= p * u;
            }
            let nm = norm(&e1);
            for x in &mut e1 {
                *x /= nm;
            }
            let e2 = vec![
                u_hat[1] * e1[2] - u_hat[2] * e1[1],
                u_hat[2] * e1[0] - u_hat[0] * e1[2],
                u_hat[0] * e1[1] - u_hat[1] * e1[0],
            ];
            vec![e1, e2]
        }
        _ => panic!("sigma quadrature supports d in {{2, 3}}"),
    }
}

/// Full angular integral `int b(sigma . u_hat) g(sigma) dsigma` over the
/// half sphere `sigma . u_hat >= 0`, for vector-dependent integrands.
fn sigma_integral(
    kernel: &CollisionKernel,
    u_hat: &[f64],
    n_polar: usize,
    n_azimuth: usize,
    mut g: impl FnMut(&[f64]) -> Complex64,
) -> Complex64 {
    let d = kernel.dim();
    let frame = orthonormal_frame(u_hat);
    let mut acc = Complex64::new(0.0, 0.0);
    match d {
        2 => {
            // sigma(theta) = cos(theta) u + sin(theta) e_perp,
            // theta in [-pi/2, pi/2]; the angular density is even.
            let segments: Vec<(f64, f64)> = match kernel.kind() {
                KernelKind::Tmm { cutoff, .. } => vec![
                    (*cutoff, std::f64::consts::FRAC_PI_2),
                    (-std::f64::consts::FRAC_PI_2, -*cutoff),
                ],
                _ => vec![(-std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2)],
            };
            let mut sigma = vec![0.0; 2];
            for (lo, hi) in segments {
                let (ts, ws) = gauss_legendre_on(n_polar, lo, hi);
                for (&t, &w) in ts.iter().zip(&ws) {
                    let (s, c) = t.sin_cos();
                    for a in 0..2 {
                        sigma[a] = c * u_hat[a] + s * frame[0][a];
                    }
                    acc += g(&sigma) * (w * kernel.angular_density(c));
                }
            }
        }
        3 => {
            // polar nodes: Gauss-Legendre in cos(theta) when the density
            // is flat, in theta for the singular truncated density
            let polar: Vec<(f64, f64)> = match kernel.kind() {
                KernelKind::Tmm { cutoff, .. } => {
                    let (ts, ws) = gauss_legendre_on(n_polar, *cutoff, std::f64::consts::FRAC_PI_2);
                    ts.iter()
                        .zip(&ws)
                        .map(|(&t, &w)| (t.cos(), w * kernel.angular_density(t.cos()) * t.sin()))
                        .collect()
                }
                _ => {
                    let (cs, ws) = gauss_legendre_on(n_polar, 0.0, 1.0);
                    cs.iter().zip(&ws).map(|(&c, &w)| (c, w)).collect()
                }
            };
            let dphi = 2.0 * std::f64::consts::PI / n_azimuth as f64;
            let mut sigma = vec![0.0; 3];
            for &(c, wc) in &polar {
                let s = (1.0 - c * c).max(0.0).sqrt();
                for k in 0..n_azimuth {
                    let phi = dphi * k as f64;
                    let (sp, cp) = phi.sin_cos();
                    for a in 0..3 {
                        sigma[a] = c * u_hat[a] + s * (cp * frame[0][a] + sp * frame[1][a]);
                    }
                    acc += g(&sigma) * (wc * dphi);
                }
            }
        }
        _ => panic!("sigma quadrature supports d in {{2, 3}}"),
    }
    acc
}

fn radial_spacing(xi_max: f64, n: usize) -> f64 {
    xi_max / (n - 1) as f64
}

/// `1 / (2j (d + 2j - 2))`: ratio of consecutive Taylor coefficients of
/// the radial Fourier kernel, so `F(r) = sum_j (-1)^j a_j R_{2j} r^{2j}`
/// with `a_0 = 1`, `a_j = a_{j-1} / (2j (d + 2j - 2))` and `R_{2j}` the
/// radial moments `int |v|^{2j} f`.
fn radial_taylor_coeffs(d: usize, k: usize) -> Vec<f64> {
    let mut a = vec![1.0; k + 1];
    for j in 1..=k {
        a[j] = a[j - 1] / (2.0 * j as f64 * (d as f64 + 2.0 * j as f64 - 2.0));
    }
    a
}

fn least_squares(rows: &[Vec<f64>], y: &[f64]) -> (Vec<f64>, f64) {
    let m = rows.len();
    let k = rows[0].len();
    let a = nalgebra::DMatrix::from_fn(m, k, |i, j| rows[i][j]);
    let b = nalgebra::DVector::from_column_slice(y);
    let svd = a.clone().svd(true, true);
    let x = svd.solve(&b, 1e-13).expect("SVD solve");
    let res = &a * &x - &b;
    let max_res = res.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    (x.iter().copied().collect(), max_res)
}

impl GridDensity {
    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn momentum(&self) -> &[f64] {
        &self.momentum
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    /// Isotropic density from its radial characteristic function.
    pub fn radial_fourier_from_fn(
        d: usize,
        xi_max: f64,
        n: usize,
        f: impl Fn(f64) -> f64,
    ) -> Result<Self> {
        if n < 16 || xi_max <= 0.0 {
            return Err(KineticError::InvalidConfig(
                "radial grid needs n >= 16 and positive extent".into(),
            ));
        }
        let h = radial_spacing(xi_max, n);
        let values: Vec<f64> = (0..n).map(|i| f(i as f64 * h)).collect();
        if (values[0] - 1.0).abs() > 1e-12 {
            return Err(KineticError::ConstraintViolation(format!(
                "characteristic function at 0 is {} (expected 1)",
                values[0]
            )));
        }
        let mut g = GridDensity {
            d,
            repr: Representation::RadialFourier { xi_max, values },
            mass: 1.0,
            momentum: vec![0.0; d],
            energy: 0.0,
            truncated: false,
        };
        if let Representation::RadialFourier { values, .. } = &mut g.repr {
            values[0] = 1.0;
        }
        g.energy = g.fourier_energy();
        if !(g.energy.is_finite() && g.energy > 0.0) {
            return Err(KineticError::ConstraintViolation(format!(
                "non-positive energy {} from radial profile",
                g.energy
            )));
        }
        Ok(g)
    }

    /// Isotropic Gaussian scale mixture: components `(weight, variance)`,
    /// weights summing to 1.
    pub fn gaussian_mixture_fourier(
        d: usize,
        xi_max: f64,
        n: usize,
        comps: &[(f64, f64)],
    ) -> Result<Self> {
        let total: f64 = comps.iter().map(|c| c.0).sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(KineticError::InvalidConfig(
                "mixture weights must sum to 1".into(),
            ));
        }
        Self::radial_fourier_from_fn(d, xi_max, n, |r| {
            comps
                .iter()
                .map(|&(w, s2)| w * (-0.5 * s2 * r * r).exp())
                .sum()
        })
    }

    /// Anisotropic density from its characteristic function on a tensor
    /// grid. `n` must be odd so the origin is a node.
    pub fn tensor_fourier_from_fn(
        d: usize,
        xi_max: f64,
        n: usize,
        f: impl Fn(&[f64]) -> Complex64,
    ) -> Result<Self> {
        if !(1..=3).contains(&d) {
            return Err(KineticError::InvalidConfig(
                "tensor grids support d in 1..=3".into(),
            ));
        }
        if n < 9 || n % 2 == 0 {
            return Err(KineticError::InvalidConfig(
                "tensor grid needs odd n >= 9".into(),
            ));
        }
        let h = 2.0 * xi_max / (n - 1) as f64;
        let total = n.pow(d as u32);
        let values: Vec<Complex64> = (0..total)
            .map(|idx| {
                let mut xi = vec![0.0; d];
                let mut rem = idx;
                for a in (0..d).rev() {
                    xi[a] = (rem % n) as f64 * h - xi_max;
                    rem /= n;
                }
                f(&xi)
            })
            .collect();
        let center = Self::center_index(n, d);
        if (values[center] - Complex64::new(1.0, 0.0)).norm() > 1e-12 {
            return Err(KineticError::ConstraintViolation(
                "characteristic function at 0 must be 1".into(),
            ));
        }
        let mut g = GridDensity {
            d,
            repr: Representation::FourierGrid { xi_max, n, values },
            mass: 1.0,
            momentum: vec![0.0; d],
            energy: 0.0,
            truncated: false,
        };
        if let Representation::FourierGrid { values, .. } = &mut g.repr {
            values[center] = Complex64::new(1.0, 0.0);
        }
        g.energy = g.fourier_energy();
        g.momentum = g.fourier_momentum();
        if !(g.energy.is_finite() && g.energy > 0.0) {
            return Err(KineticError::ConstraintViolation(format!(
                "non-positive energy {} from tensor profile",
                g.energy
            )));
        }
        Ok(g)
    }

    /// Density from explicit values on a velocity box grid.
    pub fn velocity_grid(d: usize, extent: f64, n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n.pow(d as u32) {
            return Err(KineticError::DimensionMismatch(format!(
                "expected {} grid values, got {}",
                n.pow(d as u32),
                values.len()
            )));
        }
        let h = 2.0 * extent / (n - 1) as f64;
        let hd = h.powi(d as i32);
        let mass = hd * kahan_sum(values.iter().copied());
        if (mass - 1.0).abs() > 1e-8 {
            return Err(KineticError::ConstraintViolation(format!(
                "grid mass {mass} deviates from 1 beyond 1e-8"
            )));
        }
        let mut momentum = vec![0.0; d];
        let mut energy = 0.0;
        let mut xi = vec![0.0; d];
        for (idx, &v) in values.iter().enumerate() {
            let mut rem = idx;
            let mut q = 0.0;
            for a in (0..d).rev() {
                xi[a] = (rem % n) as f64 * h - extent;
                rem /= n;
                q += xi[a] * xi[a];
            }
            energy += hd * v * q;
            for a in 0..d {
                momentum[a] += hd * v * xi[a];
            }
        }
        Ok(GridDensity {
            d,
            repr: Representation::Velocity { extent, n, values },
            mass,
            momentum,
            energy,
            truncated: false,
        })
    }

    fn center_index(n: usize, d: usize) -> usize {
        let c = n / 2;
        let mut idx = 0;
        for _ in 0..d {
            idx = idx * n + c;
        }
        idx
    }

    /// Radial profile evaluation (cubic interpolation).
    pub fn eval_radial(&self, r: f64) -> f64 {
        match &self.repr {
            Representation::RadialFourier { xi_max, values } => {
                eval_radial_raw(values, radial_spacing(*xi_max, values.len()), r)
            }
            _ => panic!("eval_radial requires the radial representation"),
        }
    }

    /// Tensor-grid evaluation (separable cubic interpolation); points
    /// beyond the grid evaluate to 0.
    pub fn eval_tensor(&self, xi: &[f64]) -> Complex64 {
        match &self.repr {
            Representation::FourierGrid { xi_max, n, values } => {
                eval_tensor_raw(values, *n, self.d, *xi_max, xi).0
            }
            _ => panic!("eval_tensor requires the tensor representation"),
        }
    }

    /// Energy read off the curvature of the characteristic function at 0
    /// (fourth-order stencil).
    fn fourier_energy(&self) -> f64 {
        match &self.repr {
            Representation::RadialFourier { xi_max, values } => {
                let h = radial_spacing(*xi_max, values.len());
                // even profile: F(-h) = F(h)
                let second =
                    (-2.0 * values[2] + 32.0 * values[1] - 30.0 * values[0]) / (12.0 * h * h);
                -(self.d as f64) * second
            }
            Representation::FourierGrid { xi_max, n, values } => {
                let h = 2.0 * xi_max / (*n - 1) as f64;
                let center = Self::center_index(*n, self.d) as isize;
                let mut lap = 0.0;
                for a in 0..self.d {
                    let stride = n.pow((self.d - 1 - a) as u32) as isize;
                    let at = |off: isize| values[(center + off * stride) as usize].re;
                    lap += (-at(2) + 16.0 * at(1) - 30.0 * at(0) + 16.0 * at(-1) - at(-2))
                        / (12.0 * h * h);
                }
                -lap
            }
            Representation::Velocity { .. } => self.energy,
        }
    }

    fn fourier_momentum(&self) -> Vec<f64> {
        match &self.repr {
            Representation::FourierGrid { xi_max, n, values } => {
                let h = 2.0 * xi_max / (*n - 1) as f64;
                let center = Self::center_index(*n, self.d) as isize;
                (0..self.d)
                    .map(|a| {
                        let stride = n.pow((self.d - 1 - a) as u32) as isize;
                        let at = |off: isize| values[(center + off * stride) as usize].im;
                        // momentum_a = -Im dF/dxi_a (0)
                        -(-at(2) + 8.0 * at(1) - 8.0 * at(-1) + at(-2)) / (12.0 * h)
                    })
                    .collect()
            }
            _ => vec![0.0; self.d],
        }
    }

    /// Radial moments `R_{2k} = int |v|^{2k} f(v) dv`, `k = 0..=k_max`,
    /// by polynomial fit of the radial profile near the origin.
    pub fn radial_moments(&self, k_max: usize) -> Result<Vec<f64>> {
        let (xi_max, values) = match &self.repr {
            Representation::RadialFourier { xi_max, values } => (*xi_max, values),
            _ => {
                return Err(KineticError::InvalidConfig(
                    "radial moments require the radial representation".into(),
                ))
            }
        };
        let h = radial_spacing(xi_max, values.len());
        let fit_radius = (xi_max / 4.0).min(0.9 / self.energy.sqrt().max(0.3));
        let degree = k_max + 3;
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for (i, &v) in values.iter().enumerate() {
            let r = i as f64 * h;
            if r > fit_radius {
                break;
            }
            rows.push((0..=degree).map(|j| r.powi(2 * j as i32)).collect());
            y.push(v);
        }
        if rows.len() < degree + 2 {
            return Err(KineticError::InvalidConfig(
                "radial grid too coarse for moment extraction".into(),
            ));
        }
        let (coef, _) = least_squares(&rows, &y);
        let a = radial_taylor_coeffs(self.d, k_max);
        Ok((0..=k_max)
            .map(|k| if k % 2 == 0 { 1.0 } else { -1.0 } * coef[k] / a[k])
            .collect())
    }

    /// Polynomial moments `M_alpha`, `|alpha| <= k_max`, fitted from the
    /// tensor grid on the ball `|xi| <= fit_radius`.
    pub fn extract_moments(&self, k_max: u32, fit_radius: f64) -> Result<MomentVector> {
        let (xi_max, n, values) = match &self.repr {
            Representation::FourierGrid { xi_max, n, values } => (*xi_max, *n, values),
            _ => {
                return Err(KineticError::InvalidConfig(
                    "moment extraction requires the tensor representation".into(),
                ))
            }
        };
        let d = self.d;
        let h = 2.0 * xi_max / (n - 1) as f64;
        // round the fit degree up to even: the even/odd parts are fitted
        // separately and an odd top order would leave the even fit one
        // order short, biasing the second moments
        let degree = {
            let g = k_max + 3;
            g + g % 2
        };
        let basis = MomentIndex::all_up_to(d, degree);
        // collect fitting nodes
        let mut pts: Vec<Vec<f64>> = Vec::new();
        let mut re = Vec::new();
        let mut im = Vec::new();
        let total = n.pow(d as u32);
        for idx in 0..total {
            let mut xi = vec![0.0; d];
            let mut rem = idx;
            for a in (0..d).rev() {
                xi[a] = (rem % n) as f64 * h - xi_max;
                rem /= n;
            }
            if norm(&xi) <= fit_radius {
                re.push(values[idx].re);
                im.push(values[idx].im);
                pts.push(xi);
            }
        }
        if pts.len() < 2 * basis.len() {
            return Err(KineticError::InvalidConfig(
                "tensor grid too coarse for the requested moment order".into(),
            ));
        }
        // F(xi) = sum_beta M_beta (-i xi)^beta / beta!; even orders are
        // real, odd orders imaginary, so the two parts fit independently.
        let even: Vec<&MomentIndex> = basis.iter().filter(|b| b.order() % 2 == 0).collect();
        let odd: Vec<&MomentIndex> = basis.iter().filter(|b| b.order() % 2 == 1).collect();
        let rows_for = |set: &[&MomentIndex]| -> Vec<Vec<f64>> {
            pts.iter()
                .map(|xi| set.iter().map(|b| b.eval(xi)).collect())
                .collect()
        };
        let (ce, _) = least_squares(&rows_for(&even), &re);
        let (co, _) = least_squares(&rows_for(&odd), &im);
        let factorial = |b: &MomentIndex| -> f64 {
            b.0.iter()
                .map(|&k| (1..=k as u64).product::<u64>() as f64)
                .product()
        };
        let indices = MomentIndex::all_up_to(d, k_max);
        let values_out = indices
            .iter()
            .map(|alpha| {
                let k = alpha.order();
                if k % 2 == 0 {
                    let pos = even.iter().position(|b| b.0 == alpha.0).unwrap();
                    // (-i)^k = (-1)^{k/2} for even k
                    let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
                    factorial(alpha) * ce[pos] * sign
                } else {
                    let pos = odd.iter().position(|b| b.0 == alpha.0).unwrap();
                    // Im (-i)^k = -1 for k = 1 mod 4, +1 for k = 3 mod 4
                    let sign = if k % 4 == 1 { -1.0 } else { 1.0 };
                    factorial(alpha) * co[pos] / sign
                }
            })
            .collect();
        Ok(MomentVector {
            d,
            indices,
            values: values_out,
        })
    }

    /// Inverse Fourier transform of a tensor grid onto the dual velocity
    /// grid (direct DFT per axis; the grids are small).
    pub fn to_velocity_grid(&self) -> Result<GridDensity> {
        let (xi_max, n, values) = match &self.repr {
            Representation::FourierGrid { xi_max, n, values } => (*xi_max, *n, values),
            _ => {
                return Err(KineticError::InvalidConfig(
                    "velocity-grid inversion requires the tensor representation".into(),
                ))
            }
        };
        let d = self.d;
        let h_xi = 2.0 * xi_max / (n - 1) as f64;
        let h_v = 2.0 * std::f64::consts::PI / (n as f64 * h_xi);
        let c = (n - 1) as f64 / 2.0;
        // phase matrix P[m][k] = exp(i x_m xi_k), x_m = (m - c) h_v
        let phase: Vec<Complex64> = (0..n * n)
            .map(|p| {
                let (m, k) = (p / n, p % n);
                let x = (m as f64 - c) * h_v;
                let xi = (k as f64 - c) * h_xi;
                Complex64::from_polar(1.0, x * xi)
            })
            .collect();
        let mut data = values.clone();
        for axis in 0..d {
            let stride = n.pow((d - 1 - axis) as u32);
            let lines = data.len() / n;
            let mut out = vec![Complex64::new(0.0, 0.0); data.len()];
            for line in 0..lines {
                // index of the line's first element in the original layout
                let block = line / stride;
                let offset = line % stride;
                let start = block * stride * n + offset;
                for m in 0..n {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for k in 0..n {
                        acc += phase[m * n + k] * data[start + k * stride];
                    }
                    out[start + m * stride] = acc * h_xi;
                }
            }
            data = out;
        }
        let scale = (2.0 * std::f64::consts::PI).powi(-(d as i32));
        let real: Vec<f64> = data.iter().map(|z| z.re * scale).collect();
        let max_imag = data.iter().fold(0.0f64, |a, z| a.max(z.im.abs() * scale));
        if max_imag > 1e-8 {
            return Err(KineticError::ConstraintViolation(format!(
                "inverse transform has imaginary residue {max_imag:e}"
            )));
        }
        let extent = c * h_v;
        GridDensity::velocity_grid(d, extent, n, real)
    }

    /// Writes the grid values as CSV (`grid coordinates..., value`).
    pub fn write_csv(&self, w: &mut impl Write) -> Result<()> {
        match &self.repr {
            Representation::Velocity { extent, n, values } => {
                let h = 2.0 * extent / (*n - 1) as f64;
                let cols: Vec<String> = (1..=self.d).map(|a| format!("v{a}")).collect();
                writeln!(w, "{},value", cols.join(","))?;
                for (idx, v) in values.iter().enumerate() {
                    let mut rem = idx;
                    let mut coords = vec![0.0; self.d];
                    for a in (0..self.d).rev() {
                        coords[a] = (rem % n) as f64 * h - extent;
                        rem /= n;
                    }
                    let row: Vec<String> = coords.iter().map(|c| format!("{c:.12e}")).collect();
                    writeln!(w, "{},{v:.12e}", row.join(","))?;
                }
            }
            Representation::RadialFourier { xi_max, values } => {
                let h = radial_spacing(*xi_max, values.len());
                writeln!(w, "xi,value")?;
                for (i, v) in values.iter().enumerate() {
                    writeln!(w, "{:.12e},{v:.12e}", i as f64 * h)?;
                }
            }
            Representation::FourierGrid { xi_max, n, values } => {
                let h = 2.0 * xi_max / (*n - 1) as f64;
                let cols: Vec<String> = (1..=self.d).map(|a| format!("xi{a}")).collect();
                writeln!(w, "{},value_re,value_im", cols.join(","))?;
                for (idx, v) in values.iter().enumerate() {
                    let mut rem = idx;
                    let mut coords = vec![0.0; self.d];
                    for a in (0..self.d).rev() {
                        coords[a] = (rem % n) as f64 * h - xi_max;
                        rem /= n;
                    }
                    let row: Vec<String> = coords.iter().map(|c| format!("{c:.12e}")).collect();
                    writeln!(w, "{},{:.12e},{:.12e}", row.join(","), v.re, v.im)?;
                }
            }
        }
        Ok(())
    }

    /// JSON metadata sidecar describing the grid.
    pub fn metadata_json(&self, time: f64) -> serde_json::Value {
        let (repr, extent, spacing) = match &self.repr {
            Representation::Velocity { extent, n, .. } => (
                "velocity",
                *extent,
                2.0 * extent / (*n - 1) as f64,
            ),
            Representation::RadialFourier { xi_max, values } => (
                "radial_fourier",
                *xi_max,
                radial_spacing(*xi_max, values.len()),
            ),
            Representation::FourierGrid { xi_max, n, .. } => (
                "fourier_grid",
                *xi_max,
                2.0 * xi_max / (*n - 1) as f64,
            ),
        };
        serde_json::json!({
            "representation": repr,
            "d": self.d,
            "extent": extent,
            "spacing": spacing,
            "time": time,
            "mass": self.mass,
            "energy": self.energy,
            "truncated": self.truncated,
        })
    }
}

fn qhat_values_radial(values: &[f64], h: f64, kernel: &CollisionKernel, n_quad: usize) -> Vec<f64> {
    crate::map_indexed(values.len(), |i| {
        let r = i as f64 * h;
        angular_theta_quad(kernel, n_quad, |c| {
            let rp = r * ((1.0 + c) * 0.5).sqrt();
            let rm = r * ((1.0 - c) * 0.5).sqrt();
            eval_radial_raw(values, h, rp) * eval_radial_raw(values, h, rm)
        })
    })
}

fn qhat_values_tensor(
    values: &[Complex64],
    n: usize,
    d: usize,
    xi_max: f64,
    kernel: &CollisionKernel,
    n_polar: usize,
    n_azimuth: usize,
) -> (Vec<Complex64>, bool) {
    let h = 2.0 * xi_max / (n - 1) as f64;
    let total = n.pow(d as u32);
    let mass_b = kernel.angular_mass();
    let out: Vec<(Complex64, bool)> = crate::map_indexed(total, |idx| {
        let mut xi = vec![0.0; d];
        let mut rem = idx;
        for a in (0..d).rev() {
            xi[a] = (rem % n) as f64 * h - xi_max;
            rem /= n;
        }
        let rn = norm(&xi);
        if rn == 0.0 {
            return (Complex64::new(mass_b, 0.0), false);
        }
        let u: Vec<f64> = xi.iter().map(|x| x / rn).collect();
        let mut clipped = false;
        let mut xp = vec![0.0; d];
        let mut xm = vec![0.0; d];
        let acc = sigma_integral(kernel, &u, n_polar, n_azimuth, |sigma| {
            for a in 0..d {
                xp[a] = 0.5 * (xi[a] + rn * sigma[a]);
                xm[a] = 0.5 * (xi[a] - rn * sigma[a]);
            }
            let (fp, cp) = eval_tensor_raw(values, n, d, xi_max, &xp);
            let (fm, cm) = eval_tensor_raw(values, n, d, xi_max, &xm);
            clipped |= cp | cm;
            fp * fm
        });
        (acc, clipped)
    });
    let any_clipped = out.iter().any(|x| x.1);
    (out.into_iter().map(|x| x.0).collect(), any_clipped)
}

/// Gain term of the collision operator in Fourier variables.
pub fn qhat_gain(f: &GridDensity, kernel: &CollisionKernel) -> Result<GridDensity> {
    if !kernel.is_maxwellian() {
        return Err(KineticError::InvalidConfig(
            "the Fourier gain term requires a Maxwellian-type kernel".into(),
        ));
    }
    if kernel.dim() != f.dim() {
        return Err(KineticError::DimensionMismatch(format!(
            "kernel dimension {} != density dimension {}",
            kernel.dim(),
            f.dim()
        )));
    }
    let mut out = f.clone();
    match &f.repr {
        Representation::RadialFourier { xi_max, values } => {
            let h = radial_spacing(*xi_max, values.len());
            let gained = qhat_values_radial(values, h, kernel, 64);
            out.repr = Representation::RadialFourier {
                xi_max: *xi_max,
                values: gained,
            };
        }
        Representation::FourierGrid { xi_max, n, values } => {
            let (gained, clipped) = qhat_values_tensor(values, *n, f.d, *xi_max, kernel, 16, 12);
            out.truncated |= clipped;
            out.repr = Representation::FourierGrid {
                xi_max: *xi_max,
                n: *n,
                values: gained,
            };
        }
        Representation::Velocity { .. } => {
            return Err(KineticError::InvalidConfig(
                "the gain term is computed in Fourier representations only".into(),
            ))
        }
    }
    // the gain of a probability density is not itself one; invalidate the
    // cached normalization rather than pretending
    out.mass = f64::NAN;
    Ok(out)
}

/// Time-stamped states of a spectral run.
#[derive(Clone, Debug)]
pub struct FourierTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<GridDensity>,
}

impl FourierTrajectory {
    pub fn last(&self) -> &GridDensity {
        self.states.last().expect("non-empty trajectory")
    }
}

/// Integrates `dF/dt = Qhat+(F, F) - (int b) F` with RK4, saving every
/// `save_stride`-th step (plus the initial and final states).
pub fn evolve_fourier(
    f0: &GridDensity,
    kernel: &CollisionKernel,
    horizon: f64,
    dt: f64,
    save_stride: usize,
) -> Result<FourierTrajectory> {
    let mass_b = kernel.angular_mass();
    if dt <= 0.0 || dt > 0.5 / mass_b {
        return Err(KineticError::InvalidConfig(format!(
            "time step {dt} violates the stability bound {}",
            0.5 / mass_b
        )));
    }
    if !kernel.is_maxwellian() {
        return Err(KineticError::InvalidConfig(
            "the spectral solver requires a Maxwellian-type kernel".into(),
        ));
    }
    let steps = ((horizon / dt).ceil() as usize).max(1);
    let dt = horizon / steps as f64;
    let save_stride = save_stride.max(1);

    let mut times = vec![0.0];
    let mut states = vec![f0.clone()];
    let mut truncated = f0.truncated;

    match &f0.repr {
        Representation::RadialFourier { xi_max, values } => {
            let xi_max = *xi_max;
            let h = radial_spacing(xi_max, values.len());
            let rhs = |v: &[f64]| -> Vec<f64> {
                let mut g = qhat_values_radial(v, h, kernel, 64);
                for (gi, vi) in g.iter_mut().zip(v) {
                    *gi -= mass_b * vi;
                }
                g
            };
            let mut v = values.clone();
            for step in 1..=steps {
                v = rk4_step(&v, dt, rhs);
                v[0] = 1.0;
                if step % save_stride == 0 || step == steps {
                    let mut g = f0.clone();
                    g.repr = Representation::RadialFourier {
                        xi_max,
                        values: v.clone(),
                    };
                    g.energy = g.fourier_energy();
                    g.truncated = truncated;
                    times.push(step as f64 * dt);
                    states.push(g);
                }
            }
        }
        Representation::FourierGrid { xi_max, n, values } => {
            let (xi_max, n, d) = (*xi_max, *n, f0.d);
            let center = GridDensity::center_index(n, d);
            let clipped = std::cell::Cell::new(false);
            let rhs = |v: &[Complex64]| -> Vec<Complex64> {
                let (mut g, c) = qhat_values_tensor(v, n, d, xi_max, kernel, 16, 12);
                clipped.set(clipped.get() | c);
                for (gi, vi) in g.iter_mut().zip(v) {
                    *gi -= vi * mass_b;
                }
                g
            };
            let mut v = values.clone();
            for step in 1..=steps {
                v = rk4_step_c(&v, dt, rhs);
                v[center] = Complex64::new(1.0, 0.0);
                truncated |= clipped.get();
                if step % save_stride == 0 || step == steps {
                    let mut g = f0.clone();
                    g.repr = Representation::FourierGrid {
                        xi_max,
                        n,
                        values: v.clone(),
                    };
                    g.energy = g.fourier_energy();
                    g.momentum = g.fourier_momentum();
                    g.truncated = truncated;
                    times.push(step as f64 * dt);
                    states.push(g);
                }
            }
        }
        Representation::Velocity { .. } => {
            return Err(KineticError::InvalidConfig(
                "the spectral solver requires a Fourier representation".into(),
            ))
        }
    }
    Ok(FourierTrajectory { times, states })
}

fn rk4_step(v: &[f64], dt: f64, rhs: impl Fn(&[f64]) -> Vec<f64>) -> Vec<f64> {
    let k1 = rhs(v);
    let y2: Vec<f64> = v.iter().zip(&k1).map(|(x, k)| x + 0.5 * dt * k).collect();
    let k2 = rhs(&y2);
    let y3: Vec<f64> = v.iter().zip(&k2).map(|(x, k)| x + 0.5 * dt * k).collect();
    let k3 = rhs(&y3);
    let y4: Vec<f64> = v.iter().zip(&k3).map(|(x, k)| x + dt * k).collect();
    let k4 = rhs(&y4);
    v.iter()
        .enumerate()
        .map(|(i, x)| x + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect()
}

fn rk4_step_c(v: &[Complex64], dt: f64, rhs: impl Fn(&[Complex64]) -> Vec<Complex64>) -> Vec<Complex64> {
    let k1 = rhs(v);
    let y2: Vec<Complex64> = v.iter().zip(&k1).map(|(x, k)| x + k * (0.5 * dt)).collect();
    let k2 = rhs(&y2);
    let y3: Vec<Complex64> = v.iter().zip(&k2).map(|(x, k)| x + k * (0.5 * dt)).collect();
    let k3 = rhs(&y3);
    let y4: Vec<Complex64> = v.iter().zip(&k3).map(|(x, k)| x + k * dt).collect();
    let k4 = rhs(&y4);
    v.iter()
        .enumerate()
        .map(|(i, x)| x + (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (dt / 6.0))
        .collect()
}

/// Supremum of `|F - G|(r) / r^s` over the shared radial grid.
pub fn radial_fourier_distance(f: &GridDensity, g: &GridDensity, s: f64) -> Result<f64> {
    match (&f.repr, &g.repr) {
        (
            Representation::RadialFourier { xi_max: xf, values: vf },
            Representation::RadialFourier { xi_max: xg, values: vg },
        ) => {
            if xf != xg || vf.len() != vg.len() {
                return Err(KineticError::DimensionMismatch(
                    "radial grids must match".into(),
                ));
            }
            let h = radial_spacing(*xf, vf.len());
            Ok(vf
                .iter()
                .zip(vg)
                .enumerate()
                .skip(1)
                .map(|(i, (a, b))| (a - b).abs() / (i as f64 * h).powf(s))
                .fold(0.0, f64::max))
        }
        _ => Err(KineticError::InvalidConfig(
            "radial Fourier distance requires radial representations".into(),
        )),
    }
}

/// Moment values indexed by multi-index.
#[derive(Clone, Debug)]
pub struct MomentVector {
    pub d: usize,
    pub indices: Vec<MomentIndex>,
    pub values: Vec<f64>,
}

impl MomentVector {
    pub fn get(&self, alpha: &[u8]) -> Option<f64> {
        self.indices
            .iter()
            .position(|i| i.0 == alpha)
            .map(|p| self.values[p])
    }

    /// Moments of a centered Gaussian with diagonal covariance.
    pub fn gaussian(d: usize, cov_diag: &[f64], k_max: u32) -> Self {
        let indices = MomentIndex::all_up_to(d, k_max);
        let values = indices
            .iter()
            .map(|alpha| {
                alpha
                    .0
                    .iter()
                    .zip(cov_diag)
                    .map(|(&k, &s2)| {
                        if k % 2 == 1 {
                            0.0
                        } else {
                            // (k-1)!! sigma^k
                            let mut acc = 1.0;
                            let mut j = k as i64 - 1;
                            while j > 0 {
                                acc *= j as f64;
                                j -= 2;
                            }
                            acc * s2.powi(k as i32 / 2)
                        }
                    })
                    .product()
            })
            .collect();
        MomentVector { d, indices, values }
    }

    /// Moments of the Maxwellian with the given energy.
    pub fn maxwellian(gamma: &Maxwellian, k_max: u32) -> Self {
        Self::gaussian(gamma.d, &vec![gamma.variance(); gamma.d], k_max)
    }
}

/// Bilinear ODE system for the moments: for each `alpha`,
/// `dM_alpha/dt = sum coeff * M_beta M_gamma` over pairs with
/// `|beta| + |gamma| = |alpha|` (the collision map is linear in `(v, w)`,
/// so the system is closed and triangular in the total order).
#[derive(Clone, Debug)]
pub struct MomentSystem {
    pub d: usize,
    pub k_max: u32,
    pub indices: Vec<MomentIndex>,
    /// per target index: (beta position, gamma position, coefficient)
    terms: Vec<Vec<(usize, usize, f64)>>,
}

impl MomentSystem {
    pub fn rhs(&self, m: &[f64]) -> Vec<f64> {
        self.terms
            .iter()
            .map(|ts| ts.iter().map(|&(b, c, a)| a * m[b] * m[c]).sum())
            .collect()
    }

    /// Linear decay coefficient `a_{alpha,alpha}`: the terms pairing
    /// `M_alpha` with the mass moment.
    pub fn diagonal(&self, alpha: &[u8]) -> f64 {
        let pos = self
            .indices
            .iter()
            .position(|i| i.0 == alpha)
            .expect("index in table");
        let zero = self.indices.iter().position(|i| i.order() == 0).unwrap();
        self.terms[pos]
            .iter()
            .filter(|&&(b, c, _)| (b == pos && c == zero) || (b == zero && c == pos))
            .map(|&(_, _, a)| a)
            .sum()
    }
}

/// Builds the moment ODE coefficients by angular quadrature of the
/// collision average of each monomial, fitted onto the bilinear basis
/// `v^beta w^gamma` (fit residual certifies the closure).
pub fn moment_ode_coefficients(kernel: &CollisionKernel, k_max: u32) -> Result<MomentSystem> {
    if !kernel.is_maxwellian() {
        return Err(KineticError::InvalidConfig(
            "moment closure requires a Maxwellian-type kernel".into(),
        ));
    }
    let d = kernel.dim();
    let indices = MomentIndex::all_up_to(d, k_max);
    let mass_b = kernel.angular_mass();
    let tolerance = 1e-10;
    let (n_polar, n_azimuth) = match kernel.kind() {
        KernelKind::Tmm { .. } => (192, (2 * k_max as usize + 6).max(8)),
        _ => (12, (2 * k_max as usize + 6).max(8)),
    };
    let mut terms = vec![Vec::new(); indices.len()];
    for (pos, alpha) in indices.iter().enumerate() {
        let k = alpha.order();
        if k == 0 {
            continue;
        }
        // bilinear basis of total degree k
        let mut basis: Vec<(usize, usize)> = Vec::new();
        for (bi, beta) in indices.iter().enumerate() {
            for (ci, gamma) in indices.iter().enumerate() {
                if beta.order() + gamma.order() == k {
                    basis.push((bi, ci));
                }
            }
        }
        let n_pts = 2 * basis.len() + 40;
        let mut rng = derive_rng(0x6d6f_6d65, &[d as u64, k as u64]);
        let mut rows = Vec::with_capacity(n_pts);
        let mut y = Vec::with_capacity(n_pts);
        let mut vp = vec![0.0; d];
        while rows.len() < n_pts {
            let v: Vec<f64> = (0..d).map(|_| 2.0 * rng.gen::<f64>() - 1.0).collect();
            let w: Vec<f64> = (0..d).map(|_| 2.0 * rng.gen::<f64>() - 1.0).collect();
            let rel: Vec<f64> = v.iter().zip(&w).map(|(a, b)| a - b).collect();
            let r = norm(&rel);
            if r < 1e-3 {
                continue;
            }
            let u: Vec<f64> = rel.iter().map(|x| x / r).collect();
            // int b [ (v')^alpha - v^alpha ] dsigma
            let gain = sigma_integral(kernel, &u, n_polar, n_azimuth, |sigma| {
                for a in 0..d {
                    vp[a] = 0.5 * (v[a] + w[a]) + 0.5 * r * sigma[a];
                }
                Complex64::new(alpha.eval(&vp), 0.0)
            })
            .re;
            y.push(gain - mass_b * alpha.eval(&v));
            rows.push(
                basis
                    .iter()
                    .map(|&(bi, ci)| indices[bi].eval(&v) * indices[ci].eval(&w))
                    .collect(),
            );
        }
        let (coef, residual) = least_squares(&rows, &y);
        let scale = 1.0 + y.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if residual > tolerance * scale {
            return Err(KineticError::QuadratureNonConvergent {
                residual,
                tolerance: tolerance * scale,
            });
        }
        terms[pos] = basis
            .iter()
            .zip(&coef)
            .filter(|(_, &a)| a.abs() > 1e-12)
            .map(|(&(bi, ci), &a)| (bi, ci, a))
            .collect();
    }
    Ok(MomentSystem {
        d,
        k_max,
        indices,
        terms,
    })
}

/// Integrates the moment system with RK4; returns the full trajectory.
pub fn evolve_moments(
    m0: &MomentVector,
    sys: &MomentSystem,
    horizon: f64,
    dt: f64,
) -> Result<Vec<(f64, MomentVector)>> {
    if m0.indices.len() != sys.indices.len() || m0.d != sys.d {
        return Err(KineticError::DimensionMismatch(
            "moment vector does not match the coefficient table".into(),
        ));
    }
    let steps = ((horizon / dt).ceil() as usize).max(1);
    let dt = horizon / steps as f64;
    let mut m = m0.values.clone();
    let mut out = vec![(0.0, m0.clone())];
    for step in 1..=steps {
        m = rk4_step(&m, dt, |x| sys.rhs(x));
        out.push((
            step as f64 * dt,
            MomentVector {
                d: m0.d,
                indices: m0.indices.clone(),
                values: m.clone(),
            },
        ));
    }
    Ok(out)
}

/// Equilibrium Maxwellian on its default velocity grid
/// (`extent = 8 sqrt(E/d)`).
pub fn maxwellian_density(e: f64, d: usize) -> Result<GridDensity> {
    let n = match d {
        1 => 1001,
        2 => 201,
        _ => 81,
    };
    maxwellian_density_on(e, d, 8.0 * (e / d as f64).sqrt(), n)
}

/// Equilibrium Maxwellian on an explicit velocity grid.
pub fn maxwellian_density_on(e: f64, d: usize, extent: f64, n: usize) -> Result<GridDensity> {
    let gamma = Maxwellian::new(e, d)?;
    let h = 2.0 * extent / (n - 1) as f64;
    let total = n.pow(d as u32);
    let values: Vec<f64> = (0..total)
        .map(|idx| {
            let mut rem = idx;
            let mut v = vec![0.0; d];
            for a in (0..d).rev() {
                v[a] = (rem % n) as f64 * h - extent;
                rem /= n;
            }
            gamma.density(&v)
        })
        .collect();
    GridDensity::velocity_grid(d, extent, n, values)
}

/// Provenance of a particle-based limit oracle.
#[derive(Clone, Debug, serde::Serialize)]
pub struct OracleMeta {
    pub n_oracle: usize,
    pub m_oracle: usize,
    pub seed: u64,
    pub kernel: String,
}

/// Reference solution for kernels without a deterministic solver: a
/// large-N simulation on the energy sphere, pooled into per-checkpoint
/// 1-marginal sample clouds. Keep the seed disjoint from any ensemble
/// the oracle is compared against.
pub fn dsmc_limit_oracle(
    f0: &ReferenceDensity,
    kernel: &CollisionKernel,
    e: f64,
    horizon: f64,
    checkpoints: &[f64],
    n_oracle: usize,
    m_oracle: usize,
    seed: u64,
) -> Result<(Vec<WeightedPointMeasure>, OracleMeta)> {
    let d = f0.dim();
    let ensemble = kac::run_ensemble(
        |rng| {
            sample_sphere_conditioned(f0, n_oracle, e, rng)
                .expect("sphere conditioning failed for the oracle density")
        },
        kernel,
        horizon,
        checkpoints,
        m_oracle,
        seed,
    )?;
    let mut clouds = Vec::with_capacity(checkpoints.len());
    for (ci, _) in checkpoints.iter().enumerate() {
        let mut points = Vec::with_capacity(n_oracle * m_oracle);
        for rep in &ensemble.replicas {
            let state = &rep.snapshots[ci];
            for i in 0..state.len() {
                points.push(Velocity(state.velocity(i).to_vec()));
            }
        }
        clouds.push(WeightedPointMeasure::uniform(d, points)?);
    }
    Ok((
        clouds,
        OracleMeta {
            n_oracle,
            m_oracle,
            seed,
            kernel: format!("{:?}", kernel.kind()),
        },
    ))
}

/// [`dsmc_limit_oracle`] specialized to hard spheres.
pub fn hs_limit_oracle(
    f0: &ReferenceDensity,
    e: f64,
    horizon: f64,
    checkpoints: &[f64],
    n_oracle: usize,
    m_oracle: usize,
    seed: u64,
) -> Result<(Vec<WeightedPointMeasure>, OracleMeta)> {
    let kernel = CollisionKernel::hs(f0.dim());
    dsmc_limit_oracle(f0, &kernel, e, horizon, checkpoints, n_oracle, m_oracle, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn gaussian_radial(d: usize, e: f64) -> GridDensity {
        let s2 = e / d as f64;
        GridDensity::radial_fourier_from_fn(d, 16.0, 512, |r| (-0.5 * s2 * r * r).exp()).unwrap()
    }

    #[test]
    fn radial_gaussian_invariants() {
        let g = gaussian_radial(3, 3.0);
        assert_relative_eq!(g.energy(), 3.0, epsilon = 1e-6);
        assert_eq!(g.mass(), 1.0);
        let r = g.radial_moments(2).unwrap();
        assert_relative_eq!(r[0], 1.0, epsilon = 1e-8);
        assert_relative_eq!(r[1], 3.0, epsilon = 1e-6);
        // E |v|^4 for a standard 3-d Gaussian is 15
        assert_relative_eq!(r[2], 15.0, max_relative = 1e-4);
    }

    #[test]
    fn qhat_gaussian_is_equilibrium() {
        let kernel = CollisionKernel::gmm(3);
        let g = gaussian_radial(3, 3.0);
        let gain = qhat_gain(&g, &kernel).unwrap();
        let (gv, fv) = match (&gain.repr, &g.repr) {
            (
                Representation::RadialFourier { values: a, .. },
                Representation::RadialFourier { values: b, .. },
            ) => (a, b),
            _ => unreachable!(),
        };
        let mass_b = kernel.angular_mass();
        let sup = gv
            .iter()
            .zip(fv)
            .map(|(a, b)| (a - mass_b * b).abs())
            .fold(0.0, f64::max);
        assert!(sup < 1e-6, "equilibrium residual {sup}");
    }

    #[test]
    fn qhat_of_flat_profile_is_mass() {
        let kernel = CollisionKernel::gmm(3);
        // F == 1 corresponds to a point mass at the origin
        let g = GridDensity {
            d: 3,
            repr: Representation::RadialFourier {
                xi_max: 16.0,
                values: vec![1.0; 128],
            },
            mass: 1.0,
            momentum: vec![0.0; 3],
            energy: 1.0,
            truncated: false,
        };
        let gain = qhat_gain(&g, &kernel).unwrap();
        if let Representation::RadialFourier { values, .. } = &gain.repr {
            for v in values {
                assert_relative_eq!(*v, kernel.angular_mass(), epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn gaussian_fixed_under_evolution() {
        let kernel = CollisionKernel::gmm(3);
        let g = gaussian_radial(3, 3.0);
        let traj = evolve_fourier(&g, &kernel, 1.0, 0.05, 5).unwrap();
        let last = traj.last();
        if let (
            Representation::RadialFourier { values: a, .. },
            Representation::RadialFourier { values: b, .. },
        ) = (&g.repr, &last.repr)
        {
            let sup = a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max);
            assert!(sup < 1e-6, "Gaussian drifted by {sup}");
        }
        assert_relative_eq!(last.energy(), 3.0, epsilon = 1e-5);
    }

    #[test]
    fn evolution_conserves_energy_and_contracts() {
        let kernel = CollisionKernel::gmm(3);
        // two isotropic data with equal energy 3
        let f = GridDensity::gaussian_mixture_fourier(
            3,
            16.0,
            512,
            &[(0.5, 0.4), (0.5, 1.6)],
        )
        .unwrap();
        let g = gaussian_radial(3, 3.0);
        assert_relative_eq!(f.energy(), 3.0, epsilon = 1e-5);
        let tf = evolve_fourier(&f, &kernel, 2.0, 0.05, 4).unwrap();
        let tg = evolve_fourier(&g, &kernel, 2.0, 0.05, 4).unwrap();
        let mut prev = f64::INFINITY;
        for (a, b) in tf.states.iter().zip(&tg.states) {
            let dist = radial_fourier_distance(a, b, 2.0).unwrap();
            assert!(
                dist <= prev + 1e-3,
                "Fourier distance grew: {prev} -> {dist}"
            );
            prev = dist;
        }
        let drift = (tf.last().energy() - f.energy()).abs();
        assert!(drift < 5e-5, "energy drift {drift}");
    }

    #[test]
    fn stability_bound_rejects_large_steps() {
        let kernel = CollisionKernel::gmm(3);
        let g = gaussian_radial(3, 3.0);
        let err = evolve_fourier(&g, &kernel, 1.0, 0.2, 1);
        assert!(err.is_err());
    }

    #[test]
    fn moment_coefficients_match_hand_derivation() {
        // GMM d=3: the second-moment flux integrates to
        // d/dt M_200 = -pi M_200 + pi M_100^2
        //              + (pi/3)(R_2 - sum_k M_k^2)
        let kernel = CollisionKernel::gmm(3);
        let sys = moment_ode_coefficients(&kernel, 2).unwrap();
        let mut rng = derive_rng(5, &[1]);
        let m: Vec<f64> = sys
            .indices
            .iter()
            .map(|i| if i.order() == 0 { 1.0 } else { rng.gen::<f64>() - 0.3 })
            .collect();
        let rhs = sys.rhs(&m);
        let get = |alpha: &[u8]| {
            let p = sys.indices.iter().position(|i| i.0 == alpha).unwrap();
            m[p]
        };
        let rhs_at = |alpha: &[u8]| {
            let p = sys.indices.iter().position(|i| i.0 == alpha).unwrap();
            rhs[p]
        };
        let r2 = get(&[2, 0, 0]) + get(&[0, 2, 0]) + get(&[0, 0, 2]);
        let msq = get(&[1, 0, 0]).powi(2) + get(&[0, 1, 0]).powi(2) + get(&[0, 0, 1]).powi(2);
        let expect = -PI * get(&[2, 0, 0]) + PI * get(&[1, 0, 0]).powi(2) + PI / 3.0 * (r2 - msq);
        assert_relative_eq!(rhs_at(&[2, 0, 0]), expect, max_relative = 1e-8);
        // conserved rows: mass, momentum, energy trace
        assert!(rhs_at(&[0, 0, 0]).abs() < 1e-10);
        assert!((rhs_at(&[2, 0, 0]) + rhs_at(&[0, 2, 0]) + rhs_at(&[0, 0, 2])).abs() < 1e-8);
        for alpha in [[1u8, 0, 0], [0, 1, 0], [0, 0, 1]] {
            assert!(rhs_at(&alpha).abs() < 1e-9);
        }
        // off-diagonal second moments decay at the pure rate pi; the
        // diagonal ones keep a pi/3 feedback through the energy trace
        assert_relative_eq!(sys.diagonal(&[1, 1, 0]), -PI, max_relative = 1e-8);
        assert_relative_eq!(sys.diagonal(&[2, 0, 0]), -2.0 * PI / 3.0, max_relative = 1e-8);
    }

    #[test]
    fn maxwellian_moments_are_stationary() {
        let kernel = CollisionKernel::gmm(3);
        let sys = moment_ode_coefficients(&kernel, 3).unwrap();
        let gamma = Maxwellian::new(3.0, 3).unwrap();
        let m0 = MomentVector::maxwellian(&gamma, 3);
        let rhs = sys.rhs(&m0.values);
        for (i, r) in rhs.iter().enumerate() {
            assert!(
                r.abs() < 1e-8,
                "moment {:?} drifts at rate {r}",
                sys.indices[i].0
            );
        }
    }

    #[test]
    fn moment_difference_decays_at_diagonal_rate() {
        let kernel = CollisionKernel::gmm(3);
        let sys = moment_ode_coefficients(&kernel, 2).unwrap();
        // anisotropic vs isotropic Gaussian moments with equal energy
        let m_a = MomentVector::gaussian(3, &[1.6, 0.7, 0.7], 2);
        let m_b = MomentVector::gaussian(3, &[1.0, 1.0, 1.0], 2);
        let ta = evolve_moments(&m_a, &sys, 2.0, 0.01).unwrap();
        let tb = evolve_moments(&m_b, &sys, 2.0, 0.01).unwrap();
        let diff_at = |k: usize| {
            (ta[k].1.get(&[2, 0, 0]).unwrap() - tb[k].1.get(&[2, 0, 0]).unwrap()).abs()
        };
        let (t0, t1) = (50, 150);
        let rate = -(diff_at(t1) / diff_at(t0)).ln() / ((t1 - t0) as f64 * 0.01);
        assert_relative_eq!(rate, PI, max_relative = 1e-4);
    }

    #[test]
    fn maxwellian_grid_quadratures() {
        let g = maxwellian_density(3.0, 3).unwrap();
        assert_relative_eq!(g.mass(), 1.0, epsilon = 1e-8);
        assert_relative_eq!(g.energy(), 3.0, epsilon = 1e-6);
        let gamma = Maxwellian::new(1.0, 1).unwrap();
        assert_relative_eq!(
            gamma.density(&[0.0]),
            (2.0 * PI).powf(-0.5),
            epsilon = 1e-12
        );
    }

    #[test]
    fn tensor_gaussian_roundtrip_and_moments() {
        // anisotropic 2-d Gaussian, energy 1.5
        let (s1, s2) = (1.0f64, 0.5f64);
        let f = GridDensity::tensor_fourier_from_fn(2, 11.0, 161, |xi| {
            Complex64::new((-0.5 * (s1 * xi[0] * xi[0] + s2 * xi[1] * xi[1])).exp(), 0.0)
        })
        .unwrap();
        assert_relative_eq!(f.energy(), s1 + s2, epsilon = 1e-4);
        let m = f.extract_moments(3, 0.6).unwrap();
        assert_relative_eq!(m.get(&[2, 0]).unwrap(), s1, epsilon = 1e-4);
        assert_relative_eq!(m.get(&[0, 2]).unwrap(), s2, epsilon = 1e-4);
        assert!(m.get(&[1, 1]).unwrap().abs() < 1e-6);
        // inversion back to velocity space reproduces the Gaussian density
        let v = f.to_velocity_grid().unwrap();
        assert_relative_eq!(v.mass(), 1.0, epsilon = 1e-9);
        assert_relative_eq!(v.energy(), s1 + s2, epsilon = 1e-6);
        if let Representation::Velocity { extent, n, values } = &v.repr {
            let h = 2.0 * extent / (*n - 1) as f64;
            let mid = n / 2;
            let at_origin = values[mid * n + mid];
            let expect = (2.0 * PI).powi(-1) / (s1 * s2).sqrt();
            assert_relative_eq!(at_origin, expect, max_relative = 1e-8);
            let _ = h;
        }
    }

    #[test]
    fn tensor_evolution_relaxes_anisotropy() {
        let kernel = CollisionKernel::gmm(2);
        let f = GridDensity::tensor_fourier_from_fn(2, 4.0, 81, |xi| {
            Complex64::new((-0.5 * (1.2 * xi[0] * xi[0] + 0.4 * xi[1] * xi[1])).exp(), 0.0)
        })
        .unwrap();
        let traj = evolve_fourier(&f, &kernel, 1.0, 0.05, 20).unwrap();
        let m0 = traj.states[0].extract_moments(2, 0.5).unwrap();
        let m1 = traj.last().extract_moments(2, 0.5).unwrap();
        let aniso0 = m0.get(&[2, 0]).unwrap() - m0.get(&[0, 2]).unwrap();
        let aniso1 = m1.get(&[2, 0]).unwrap() - m1.get(&[0, 2]).unwrap();
        assert!(aniso1.abs() < 0.7 * aniso0.abs());
        let drift = (traj.last().energy() - f.energy()).abs();
        assert!(drift < 5e-4, "energy drift {drift}");
    }

    #[test]
    fn moments_from_spectral_match_ode() {
        let kernel = CollisionKernel::gmm(2);
        let f = GridDensity::tensor_fourier_from_fn(2, 4.0, 81, |xi| {
            Complex64::new((-0.5 * (1.2 * xi[0] * xi[0] + 0.4 * xi[1] * xi[1])).exp(), 0.0)
        })
        .unwrap();
        let sys = moment_ode_coefficients(&kernel, 3).unwrap();
        let m0 = MomentVector::gaussian(2, &[1.2, 0.4], 3);
        let horizon = 1.0;
        let spectral = evolve_fourier(&f, &kernel, horizon, 0.05, 20).unwrap();
        let odes = evolve_moments(&m0, &sys, horizon, 0.005).unwrap();
        let m_spec = spectral.last().extract_moments(3, 0.5).unwrap();
        let m_ode = &odes.last().unwrap().1;
        for (idx, v) in m_ode.indices.iter().zip(&m_ode.values) {
            let s = m_spec.get(&idx.0).unwrap();
            assert!(
                (s - v).abs() < 1e-4,
                "moment {:?}: spectral {s} vs ode {v}",
                idx.0
            );
        }
    }

    #[test]
    fn csv_and_metadata() {
        let g = gaussian_radial(3, 3.0);
        let mut buf = Vec::new();
        g.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("xi,value"));
        assert_eq!(text.lines().count(), 513);
        let meta = g.metadata_json(0.5);
        assert_eq!(meta["representation"], "radial_fourier");
        assert_eq!(meta["d"], 3);
        assert_eq!(meta["time"], 0.5);
    }

    #[test]
    fn oracle_at_horizon_zero_has_prescribed_energy() {
        let f0 = ReferenceDensity::uniform_ball(3, (5.0f64 / 3.0).sqrt());
        let (clouds, meta) =
            hs_limit_oracle(&f0, 1.0, 0.5, &[0.0, 0.5], 64, 8, 0xABCD).unwrap();
        assert_eq!(clouds.len(), 2);
        assert_eq!(meta.n_oracle, 64);
        for cloud in &clouds {
            let e: f64 = cloud
                .atoms()
                .iter()
                .map(|(v, w)| w * v.iter().map(|x| x * x).sum::<f64>())
                .sum();
            assert_relative_eq!(e, 1.0, epsilon = 1e-9);
        }
    }
}
