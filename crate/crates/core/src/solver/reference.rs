//! Slow reference solver: diagonally preconditioned primal-dual hybrid
//! gradient on the exact (unsmoothed) functional. It shares only the problem
//! definition with the production solver, never its iteration.

use super::{check_problem, data_scale, objective, relative_residual, Reconstruction, SolverConfig, TvNorm};
use crate::error::Result;
use super::Observations;
use crate::sensing::SensingMatrix;

const REL_TOL: f64 = 1e-8;
const MAX_ITER: usize = 400_000;

pub fn reference_solve(a: &SensingMatrix, y: &impl Observations, config: &SolverConfig) -> Result<Reconstruction> {
    config.validate()?;
    check_problem(a, y)?;
    let (m, n, w, h) = (a.m(), a.n(), a.width(), a.height());
    let s = data_scale(a);
    let mu = config.mu;
    let yv = y.values();

    // dual steps: 1 / row abs-sum; primal steps: 1 / column abs-sum of K = [D; sA]
    let sigma_d = 0.5;
    let sigma_a: Vec<f64> = a
        .rows()
        .map(|row| {
            let sum: f64 = row.iter().sum::<f64>() * s;
            if sum > 0.0 { 1.0 / sum } else { 1.0 }
        })
        .collect();
    let mut col_sum = vec![0.0; n];
    for row in a.rows() {
        for (c, &v) in col_sum.iter_mut().zip(row) {
            *c += v * s;
        }
    }
    let tau: Vec<f64> = (0..n)
        .map(|i| {
            let (r, c) = (i / w, i % w);
            // each pixel enters up to two horizontal and two vertical differences
            let dcount = (c + 1 < w) as usize + (c > 0) as usize + (r + 1 < h) as usize + (r > 0) as usize;
            1.0 / (dcount as f64 + col_sum[i]).max(1e-12)
        })
        .collect();

    let mut x = vec![0.0; n];
    let mut xbar = vec![0.0; n];
    let mut x_old = vec![0.0; n];
    let mut px = vec![0.0; n];
    let mut py = vec![0.0; n];
    let mut q = vec![0.0; m];
    let mut ax = vec![0.0; m];
    let mut kt = vec![0.0; n];
    let mut converged = false;
    let mut iterations = 0;

    for it in 1..=MAX_ITER {
        iterations = it;
        // dual ascent on the TV part, then projection onto the unit dual ball
        for r in 0..h {
            for c in 0..w {
                let i = r * w + c;
                let gx: f64 = if c + 1 < w { xbar[i + 1] - xbar[i] } else { 0.0 };
                let gy: f64 = if r + 1 < h { xbar[i + w] - xbar[i] } else { 0.0 };
                let ux = px[i] + sigma_d * gx;
                let uy = py[i] + sigma_d * gy;
                match config.tv_norm {
                    TvNorm::Isotropic => {
                        let mag = (ux * ux + uy * uy).sqrt().max(1.0);
                        px[i] = ux / mag;
                        py[i] = uy / mag;
                    }
                    TvNorm::Anisotropic => {
                        px[i] = ux.clamp(-1.0, 1.0);
                        py[i] = uy.clamp(-1.0, 1.0);
                    }
                }
            }
        }
        // dual step on the fidelity part: prox of the conjugate of (mu/2)||z - s y||^2
        for (k, row) in a.rows().enumerate() {
            ax[k] = row.iter().zip(&xbar).map(|(p, v)| p * v).sum::<f64>();
        }
        for k in 0..m {
            let sk = sigma_a[k];
            q[k] = (q[k] + sk * s * (ax[k] - yv[k])) / (1.0 + sk / mu);
        }

        // primal descent with K^T (p, q)
        x_old.copy_from_slice(&x);
        for v in kt.iter_mut() {
            *v = 0.0;
        }
        for (k, row) in a.rows().enumerate() {
            let qk = q[k] * s;
            for (o, &v) in kt.iter_mut().zip(row) {
                *o += qk * v;
            }
        }
        for r in 0..h {
            for c in 0..w {
                let i = r * w + c;
                let mut div = 0.0;
                if c + 1 < w {
                    div -= px[i];
                }
                if c > 0 {
                    div += px[i - 1];
                }
                if r + 1 < h {
                    div -= py[i];
                }
                if r > 0 {
                    div += py[i - w];
                }
                kt[i] += div;
            }
        }
        let mut change = 0.0;
        let mut size = 0.0;
        for i in 0..n {
            let mut v = x[i] - tau[i] * kt[i];
            if config.nonnegative && v < 0.0 {
                v = 0.0;
            }
            x[i] = v;
            xbar[i] = 2.0 * v - x_old[i];
            change += (v - x_old[i]) * (v - x_old[i]);
            size += v * v;
        }
        if it > 100 && change <= REL_TOL * REL_TOL * size.max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
    }

    Ok(Reconstruction {
        objective: objective(a, y, &x, config)?,
        residual: relative_residual(a, yv, &x),
        image: x,
        width: w,
        height: h,
        outer_iterations: iterations,
        converged,
    })
}
