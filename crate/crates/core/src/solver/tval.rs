//! Augmented-Lagrangian / alternating-direction TV solver.
//!
//! The gradient is split off as `w = D x`. For fixed multipliers `nu` and
//! penalty `beta` the inner loop alternates
//!
//! * `w <- shrink(D x - nu / beta, 1 / beta)` (closed form), and
//! * one projected gradient step in `x` on
//!   `beta/2 ||D x - w - nu/beta||^2 + mu s^2/2 ||A x - y||^2`
//!   with a Barzilai-Borwein step and nonmonotone (Zhang-Hager) backtracking,
//!
//! after which `nu <- nu - beta (D x - w)` and `beta` doubles up to
//! `beta_max`.
//!
//! Nonnegative patterns give `A^T A` one outlying eigenvalue along the
//! constant image. Steps are preconditioned by the inverse of
//! `I + gamma 1 1^T`, which pulls that eigenvalue back into the bulk.

use super::{
    check_problem, data_scale, grad_adjoint_into, grad_into, norm2, objective, relative_residual,
    shrink_into, Reconstruction, SolverConfig,
};
use crate::error::Result;
use super::Observations;
use crate::sensing::{dot, SensingMatrix};

/// Armijo constant of the nonmonotone line search.
const ARMIJO: f64 = 1e-4;
/// Weight of the history in the nonmonotone reference value.
const ETA: f64 = 0.85;
const MAX_BACKTRACKS: usize = 30;

struct Workspace {
    width: usize,
    height: usize,
    dx: Vec<f64>,
    dy: Vec<f64>,
    wx: Vec<f64>,
    wy: Vec<f64>,
    px: Vec<f64>,
    py: Vec<f64>,
    dtp: Vec<f64>,
}

impl Workspace {
    /// Sets `(px, py) = D x - w - nu / beta` from the cached `D x`, returns its squared norm.
    fn split_residual(&mut self, nux: &[f64], nuy: &[f64], beta: f64) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.dx.len() {
            self.px[i] = self.dx[i] - self.wx[i] - nux[i] / beta;
            self.py[i] = self.dy[i] - self.wy[i] - nuy[i] / beta;
            acc += self.px[i] * self.px[i] + self.py[i] * self.py[i];
        }
        acc
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

/// Reconstructs an image from `y` by TV-regularized least squares.
pub fn tv_min(a: &SensingMatrix, y: &impl Observations, config: &SolverConfig) -> Result<Reconstruction> {
    config.validate()?;
    check_problem(a, y)?;
    let (m, n) = (a.m(), a.n());
    let (width, height) = (a.width(), a.height());
    let yv = y.values();

    if norm2(yv) == 0.0 {
        return Ok(Reconstruction {
            image: vec![0.0; n],
            width,
            height,
            outer_iterations: 0,
            objective: 0.0,
            residual: 0.0,
            converged: true,
        });
    }

    let s = data_scale(a);
    let mu_s2 = config.mu * s * s;
    let norm = config.tv_norm;
    let project = |v: &mut [f64]| {
        if config.nonnegative {
            v.iter_mut().for_each(|x| *x = x.max(0.0));
        }
    };

    // backprojection A^T y, scaled to best fit the measurements
    let mut x = vec![0.0; n];
    a.apply_transpose(yv, &mut x);
    let mut ax = vec![0.0; m];
    a.apply(&x, &mut ax);
    let fit = dot(&ax, &ax);
    let t = if fit > 0.0 { dot(&ax, yv) / fit } else { 0.0 };
    x.iter_mut().for_each(|v| *v *= t);
    project(&mut x);
    a.apply(&x, &mut ax);

    let mut resid: Vec<f64> = ax.iter().zip(yv).map(|(p, q)| p - q).collect();
    let mut atr = vec![0.0; n];
    a.apply_transpose(&resid, &mut atr);

    let mut ws = Workspace {
        width,
        height,
        dx: vec![0.0; n],
        dy: vec![0.0; n],
        wx: vec![0.0; n],
        wy: vec![0.0; n],
        px: vec![0.0; n],
        py: vec![0.0; n],
        dtp: vec![0.0; n],
    };
    grad_into(&x, width, height, &mut ws.dx, &mut ws.dy);

    let mut nux = vec![0.0; n];
    let mut nuy = vec![0.0; n];
    let mut vx = vec![0.0; n];
    let mut vy = vec![0.0; n];
    let mut g = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut x_new = vec![0.0; n];
    let mut ax_new = vec![0.0; m];
    let mut dx_new = vec![0.0; n];
    let mut dy_new = vec![0.0; n];
    let mut ag = vec![0.0; m];

    // rank-one preconditioner (I + gamma 1 1^T)^-1
    let ones = vec![1.0; n];
    let mut a1 = vec![0.0; m];
    a.apply(&ones, &mut a1);
    let dc_curvature = s * s * dot(&a1, &a1) / n as f64;
    let gamma = ((dc_curvature - 1.0) / n as f64).max(0.0);
    // under the nonnegativity constraint, pixels held at zero by the gradient
    // take a plain gradient step and the rank-one term acts on the rest
    let precondition = |x: &[f64], g: &[f64], d: &mut [f64]| {
        let held = |i: usize| config.nonnegative && x[i] <= 0.0 && g[i] > 0.0;
        let (mut sum, mut free) = (0.0, 0usize);
        for i in 0..n {
            if !held(i) {
                sum += g[i];
                free += 1;
            }
        }
        let shift = gamma / (1.0 + gamma * free as f64) * sum;
        for i in 0..n {
            d[i] = if held(i) { g[i] } else { g[i] - shift };
        }
    };
    let mut d = vec![0.0; n];

    let mut beta = config.beta;
    let mut bb_step: Option<f64> = None;
    let mut converged = false;
    let mut outer_iterations = 0;

    for outer in 1..=config.max_outer {
        outer_iterations = outer;
        let x_outer = x.clone();
        let mut c_ref = f64::INFINITY;
        let mut q_ref = 0.0;

        for inner in 0..config.max_inner {
            // w-subproblem
            for i in 0..n {
                vx[i] = ws.dx[i] - nux[i] / beta;
                vy[i] = ws.dy[i] - nuy[i] / beta;
            }
            shrink_into(&vx, &vy, 1.0 / beta, norm, &mut ws.wx, &mut ws.wy);
            let w_norm = super::tv_of_grad(&ws.wx, &ws.wy, norm);

            // x-subproblem gradient
            let split = ws.split_residual(&nux, &nuy, beta);
            grad_adjoint_into(&ws.px, &ws.py, width, height, &mut ws.dtp);
            for i in 0..n {
                g[i] = beta * ws.dtp[i] + mu_s2 * atr[i];
            }
            let merit = w_norm + 0.5 * beta * split + 0.5 * mu_s2 * dot(&resid, &resid);
            if inner == 0 {
                c_ref = merit;
                q_ref = 1.0;
            }

            let gg = dot(&g, &g);
            if gg == 0.0 {
                break;
            }
            precondition(&x, &g, &mut d);
            let mut merit_new = f64::INFINITY;
            let mut gd = 0.0;
            let mut alpha = 0.0;
            // a projected preconditioned step may fail to descend; retry along -g
            for attempt in 0..2 {
                if attempt == 1 {
                    d.copy_from_slice(&g);
                    bb_step = None;
                }
                let gdir = dot(&g, &d);
                alpha = match bb_step {
                    Some(step) => step,
                    None => {
                        // exact minimizing step along -d for the quadratic
                        a.apply(&d, &mut ag);
                        grad_into(&d, width, height, &mut dx_new, &mut dy_new);
                        let curv = beta * (dot(&dx_new, &dx_new) + dot(&dy_new, &dy_new))
                            + mu_s2 * dot(&ag, &ag);
                        if curv > 0.0 {
                            gdir / curv
                        } else {
                            1.0
                        }
                    }
                };
                for _ in 0..MAX_BACKTRACKS {
                    for i in 0..n {
                        x_new[i] = x[i] - alpha * d[i];
                    }
                    project(&mut x_new);
                    gd = 0.0;
                    for i in 0..n {
                        gd += g[i] * (x_new[i] - x[i]);
                    }
                    a.apply(&x_new, &mut ax_new);
                    grad_into(&x_new, width, height, &mut dx_new, &mut dy_new);
                    let mut split_new = 0.0;
                    for i in 0..n {
                        let u = dx_new[i] - ws.wx[i] - nux[i] / beta;
                        let v = dy_new[i] - ws.wy[i] - nuy[i] / beta;
                        split_new += u * u + v * v;
                    }
                    merit_new = w_norm + 0.5 * beta * split_new + 0.5 * mu_s2 * sq_dist(&ax_new, yv);
                    if gd <= 0.0 && merit_new <= c_ref + ARMIJO * gd {
                        break;
                    }
                    alpha *= 0.5;
                }
                if gd <= 0.0 || !config.nonnegative {
                    break;
                }
            }
            if gd >= 0.0 {
                // projected step does not move x
                break;
            }

            for i in 0..m {
                resid[i] = ax_new[i] - yv[i];
            }
            a.apply_transpose(&resid, &mut atr);
            // gradient at x_new under the same w, for the BB pair
            for i in 0..n {
                ws.px[i] = dx_new[i] - ws.wx[i] - nux[i] / beta;
                ws.py[i] = dy_new[i] - ws.wy[i] - nuy[i] / beta;
            }
            grad_adjoint_into(&ws.px, &ws.py, width, height, &mut ws.dtp);
            for i in 0..n {
                g_new[i] = beta * ws.dtp[i] + mu_s2 * atr[i];
            }
            // BB step in the metric P^-1
            let mut ss = 0.0;
            let mut s_sum = 0.0;
            let mut sy = 0.0;
            for i in 0..n {
                let sx = x_new[i] - x[i];
                ss += sx * sx;
                s_sum += sx;
                sy += sx * (g_new[i] - g[i]);
            }
            let s_metric = ss + gamma * s_sum * s_sum;
            bb_step = (sy > 0.0).then(|| s_metric / sy).or(Some(alpha));

            let q_next = ETA * q_ref + 1.0;
            c_ref = (ETA * q_ref * c_ref + merit_new) / q_next;
            q_ref = q_next;

            std::mem::swap(&mut x, &mut x_new);
            std::mem::swap(&mut ax, &mut ax_new);
            std::mem::swap(&mut ws.dx, &mut dx_new);
            std::mem::swap(&mut ws.dy, &mut dy_new);
        }

        // multiplier ascent
        for i in 0..n {
            nux[i] -= beta * (ws.dx[i] - ws.wx[i]);
            nuy[i] -= beta * (ws.dy[i] - ws.wy[i]);
        }

        let change = (sq_dist(&x, &x_outer) / dot(&x_outer, &x_outer).max(f64::MIN_POSITIVE)).sqrt();
        if change < config.tol {
            converged = true;
            break;
        }
        if beta < config.beta_max {
            beta = (2.0 * beta).min(config.beta_max);
            bb_step = None;
        }
    }

    let objective = objective(a, y, &x, config)?;
    let residual = relative_residual(a, yv, &x);
    Ok(Reconstruction {
        image: x,
        width: ws.width,
        height: ws.height,
        outer_iterations,
        objective,
        residual,
        converged,
    })
}
