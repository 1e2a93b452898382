//! Total-variation regularized reconstruction
//!
//! ```text
//!     min_x  TV(x) + (mu/2) * s^2 * ||A x - y||^2
//! ```
//!
//! where `s` is [`data_scale`], a fixed normalization of the sensing matrix
//! that makes `||s A x||` comparable to `||x||` for zero-mean images. With it
//! the same `mu` behaves alike for any number of measurements.
//!
//! [`tv_min`] is the production solver (variable splitting on the gradient,
//! augmented Lagrangian, alternating shrinkage / gradient steps).
//! [`reference_solve`] is a slow primal-dual solver for the same functional,
//! used as an oracle.

mod reference;
mod tval;

pub use reference::reference_solve;
pub use tval::tv_min;

use crate::error::{Error, Result};
use crate::sensing::{MeasurementVector, PatternSetId, SensingMatrix};

/// Right-hand side of a reconstruction: one value per pattern plus the
/// identity of the pattern set it was taken with.
pub trait Observations {
    fn values(&self) -> &[f64];
    fn patterns(&self) -> PatternSetId;
}

impl Observations for MeasurementVector {
    fn values(&self) -> &[f64] {
        &self.values
    }

    fn patterns(&self) -> PatternSetId {
        self.patterns
    }
}

/// Which discrete TV norm to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TvNorm {
    /// `sum_i sqrt(dx_i^2 + dy_i^2)`
    Isotropic,
    /// `sum_i |dx_i| + |dy_i|`
    Anisotropic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Data-fidelity weight.
    pub mu: f64,
    /// Initial penalty on the gradient splitting `w = D x`.
    pub beta: f64,
    /// Upper limit for the penalty continuation.
    pub beta_max: f64,
    pub tv_norm: TvNorm,
    /// Relative change of `x` between outer iterations that ends the solve.
    pub tol: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Project iterates onto `x >= 0`.
    pub nonnegative: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            mu: 16.0,
            beta: 32.0,
            beta_max: 128.0,
            tv_norm: TvNorm::Isotropic,
            tol: 1e-4,
            max_outer: 300,
            max_inner: 10,
            nonnegative: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Argument(format!("solver {name} must be positive, got {v}")))
            }
        };
        positive("mu", self.mu)?;
        positive("beta", self.beta)?;
        positive("tol", self.tol)?;
        if self.beta_max < self.beta {
            return Err(Error::Argument("solver beta_max must be >= beta".into()));
        }
        if self.max_outer == 0 || self.max_inner == 0 {
            return Err(Error::Argument("solver iteration caps must be at least 1".into()));
        }
        Ok(())
    }
}

/// Solver output.
#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub image: Vec<f64>,
    pub width: usize,
    pub height: usize,
    pub outer_iterations: usize,
    /// Final value of the regularized functional.
    pub objective: f64,
    /// `||A x - y|| / ||y||` (0 when `y == 0`).
    pub residual: f64,
    pub converged: bool,
}

/// Forward differences with a zero last column / row.
pub fn grad(image: &[f64], width: usize, height: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    check_len(image.len(), width, height)?;
    let mut dx = vec![0.0; image.len()];
    let mut dy = vec![0.0; image.len()];
    grad_into(image, width, height, &mut dx, &mut dy);
    Ok((dx, dy))
}

pub(crate) fn grad_into(image: &[f64], width: usize, height: usize, dx: &mut [f64], dy: &mut [f64]) {
    for r in 0..height {
        let row = &image[r * width..(r + 1) * width];
        let out = &mut dx[r * width..(r + 1) * width];
        for c in 0..width - 1 {
            out[c] = row[c + 1] - row[c];
        }
        out[width - 1] = 0.0;
    }
    for i in 0..(height - 1) * width {
        dy[i] = image[i + width] - image[i];
    }
    for v in &mut dy[(height - 1) * width..] {
        *v = 0.0;
    }
}

/// `out = D^T (px, py)`, the adjoint of [`grad`].
pub(crate) fn grad_adjoint_into(px: &[f64], py: &[f64], width: usize, height: usize, out: &mut [f64]) {
    for r in 0..height {
        let base = r * width;
        for c in 0..width {
            let i = base + c;
            let mut v = 0.0;
            if c + 1 < width {
                v -= px[i];
            }
            if c > 0 {
                v += px[i - 1];
            }
            if r + 1 < height {
                v -= py[i];
            }
            if r > 0 {
                v += py[i - width];
            }
            out[i] = v;
        }
    }
}

pub(crate) fn tv_of_grad(dx: &[f64], dy: &[f64], norm: TvNorm) -> f64 {
    match norm {
        TvNorm::Isotropic => dx.iter().zip(dy).map(|(a, b)| a.hypot(*b)).sum(),
        TvNorm::Anisotropic => dx.iter().zip(dy).map(|(a, b)| a.abs() + b.abs()).sum(),
    }
}

pub fn total_variation(image: &[f64], width: usize, height: usize, norm: TvNorm) -> Result<f64> {
    let (dx, dy) = grad(image, width, height)?;
    Ok(tv_of_grad(&dx, &dy, norm))
}

/// Proximal map of `t * ||.||` for the chosen TV norm, applied per pixel:
/// 2-D shrinkage for the isotropic norm, soft thresholding otherwise.
pub fn shrink(vx: &[f64], vy: &[f64], t: f64, norm: TvNorm) -> (Vec<f64>, Vec<f64>) {
    let mut wx = vec![0.0; vx.len()];
    let mut wy = vec![0.0; vy.len()];
    shrink_into(vx, vy, t, norm, &mut wx, &mut wy);
    (wx, wy)
}

pub(crate) fn shrink_into(vx: &[f64], vy: &[f64], t: f64, norm: TvNorm, wx: &mut [f64], wy: &mut [f64]) {
    match norm {
        TvNorm::Isotropic => {
            for i in 0..vx.len() {
                let mag = vx[i].hypot(vy[i]);
                if mag > t {
                    let k = (mag - t) / mag;
                    wx[i] = k * vx[i];
                    wy[i] = k * vy[i];
                } else {
                    wx[i] = 0.0;
                    wy[i] = 0.0;
                }
            }
        }
        TvNorm::Anisotropic => {
            let soft = |v: f64| v.signum() * (v.abs() - t).max(0.0);
            for i in 0..vx.len() {
                wx[i] = soft(vx[i]);
                wy[i] = soft(vy[i]);
            }
        }
    }
}

/// Normalization `s` applied to `A` and `y` inside the fidelity term:
/// `1 / sqrt(m p (1 - p))` with `p` the mean entry of `A`, so that
/// `E ||s A x||^2 = ||x||^2` for zero-mean `x` under i.i.d. Bernoulli(p) rows.
/// A full raster scan gets `s` close to 1.
pub fn data_scale(a: &SensingMatrix) -> f64 {
    let p = a.fill_fraction();
    let var = (p * (1.0 - p)).max(1.0 / a.n() as f64);
    1.0 / (a.m() as f64 * var).sqrt()
}

/// Value of the regularized functional at `x`.
pub fn objective(a: &SensingMatrix, y: &impl Observations, x: &[f64], config: &SolverConfig) -> Result<f64> {
    check_problem(a, y)?;
    if x.len() != a.n() {
        return Err(Error::dims(format!("image of {} pixels", a.n()), format!("{} pixels", x.len())));
    }
    let tv = total_variation(x, a.width(), a.height(), config.tv_norm)?;
    let mut ax = vec![0.0; a.m()];
    a.apply(x, &mut ax);
    let s = data_scale(a);
    let r2: f64 = ax.iter().zip(y.values()).map(|(p, q)| (p - q) * (p - q)).sum();
    Ok(tv + 0.5 * config.mu * s * s * r2)
}

pub(crate) fn relative_residual(a: &SensingMatrix, y: &[f64], x: &[f64]) -> f64 {
    let mut ax = vec![0.0; a.m()];
    a.apply(x, &mut ax);
    let ny = norm2(y);
    if ny == 0.0 {
        return 0.0;
    }
    let r: f64 = ax.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum();
    r.sqrt() / ny
}

fn check_len(len: usize, width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 || len != width * height {
        return Err(Error::dims(format!("{width}x{height} image"), format!("{len} values")));
    }
    Ok(())
}

pub(crate) fn check_problem(a: &SensingMatrix, y: &impl Observations) -> Result<()> {
    let values = y.values();
    if a.m() == 0 || values.is_empty() {
        return Err(Error::Argument("no measurements".into()));
    }
    if values.len() != a.m() {
        return Err(Error::dims(format!("{} measurements", a.m()), format!("{}", values.len())));
    }
    if y.patterns().n != a.n() {
        return Err(Error::dims(format!("{} pixels", a.n()), format!("{} pixels", y.patterns().n)));
    }
    if let Some(k) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Argument(format!("measurement {k} is not finite")));
    }
    Ok(())
}

pub(crate) fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grad_of_constant_is_zero() {
        let (dx, dy) = grad(&[3.5; 12], 4, 3).unwrap();
        assert!(dx.iter().chain(&dy).all(|&v| v == 0.0));
    }

    #[test]
    fn vertical_edge() {
        // 0 for columns 0..=1, 1 for columns 2..=3
        let img: Vec<f64> = (0..16).map(|i| if i % 4 >= 2 { 1.0 } else { 0.0 }).collect();
        let (dx, dy) = grad(&img, 4, 4).unwrap();
        for r in 0..4 {
            for c in 0..4 {
                assert_eq!(dx[r * 4 + c], if c == 1 { 1.0 } else { 0.0 });
            }
        }
        assert!(dy.iter().all(|&v| v == 0.0));
        assert!(grad(&img, 5, 3).is_err());
    }

    #[test]
    fn adjoint_identity() {
        let (w, h) = (5, 3);
        let x: Vec<f64> = (0..15).map(|i| ((i * 7) % 11) as f64 - 4.0).collect();
        let px: Vec<f64> = (0..15).map(|i| ((i * 3) % 5) as f64 * 0.5).collect();
        let py: Vec<f64> = (0..15).map(|i| ((i * 13) % 7) as f64 - 2.0).collect();
        let (dx, dy) = grad(&x, w, h).unwrap();
        let lhs: f64 = dx.iter().zip(&px).chain(dy.iter().zip(&py)).map(|(a, b)| a * b).sum();
        let mut dtp = vec![0.0; 15];
        grad_adjoint_into(&px, &py, w, h, &mut dtp);
        let rhs: f64 = x.iter().zip(&dtp).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn shrink_matches_scalar_grid_search() {
        // prox of t|w| at v: argmin_w t|w| + (w - v)^2 / 2
        let t = 0.3;
        for &v in &[-1.2, -0.3, -0.1, 0.0, 0.05, 0.29, 0.31, 2.0] {
            let grid = (-300_000..=300_000).map(|k| k as f64 * 1e-5);
            let best = grid
                .map(|w| (w, t * f64::abs(w) + 0.5 * (w - v) * (w - v)))
                .fold((0.0, f64::INFINITY), |acc, c| if c.1 < acc.1 { c } else { acc })
                .0;
            for norm in [TvNorm::Isotropic, TvNorm::Anisotropic] {
                let (wx, wy) = shrink(&[v], &[0.0], t, norm);
                assert!((wx[0] - best).abs() <= 1e-5, "v={v} {norm:?}: {} vs {best}", wx[0]);
                assert_eq!(wy[0], 0.0);
            }
        }
    }

    #[test]
    fn isotropic_shrink_keeps_direction() {
        let (wx, wy) = shrink(&[3.0], &[4.0], 1.0, TvNorm::Isotropic);
        assert!((wx[0] - 2.4).abs() < 1e-12 && (wy[0] - 3.2).abs() < 1e-12);
        let (wx, wy) = shrink(&[0.3], &[0.4], 1.0, TvNorm::Isotropic);
        assert_eq!((wx[0], wy[0]), (0.0, 0.0));
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        let bad = SolverConfig { mu: 0.0, ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = SolverConfig { max_inner: 0, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
