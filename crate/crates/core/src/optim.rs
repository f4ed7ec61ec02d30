//! Small unconstrained minimizers over `R^k`: adaptive Nelder-Mead for
//! nonsmooth objectives and BFGS with Armijo backtracking for smooth ones.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadConfig {
    pub max_evals: usize,
    /// Relative spread of function values at which a simplex is collapsed.
    pub f_tol: f64,
    pub x_tol: f64,
    /// Initial simplex edge, relative to `max(1, |x0_i|)`.
    pub step: f64,
    /// Fresh simplices built around the incumbent after a collapse.
    pub max_rebuilds: usize,
}

impl Default for NelderMeadConfig {
    fn default() -> Self {
        NelderMeadConfig { max_evals: 20_000, f_tol: 1e-13, x_tol: 1e-10, step: 0.1, max_rebuilds: 8 }
    }
}

/// Nelder-Mead with dimension-adaptive coefficients (Gao and Han). After the
/// simplex collapses a new one is built around the best point; the run is
/// converged when a rebuild no longer improves the incumbent.
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(mut f: F, x0: &[f64], cfg: &NelderMeadConfig) -> Outcome {
    let k = x0.len();
    if k == 0 {
        return Outcome { x: Vec::new(), value: f(x0), iterations: 1, converged: true };
    }
    let kf = k as f64;
    let (alpha, beta, gamma, delta) = (1.0, 1.0 + 2.0 / kf, 0.75 - 1.0 / (2.0 * kf), 1.0 - 1.0 / kf);
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut best_x = x0.to_vec();
    let mut best_f = eval(&best_x, &mut evals);
    let mut step_scale = cfg.step;
    let mut converged = false;

    for _ in 0..=cfg.max_rebuilds {
        let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(k + 1);
        simplex.push((best_x.clone(), best_f));
        for i in 0..k {
            let mut x = best_x.clone();
            x[i] += step_scale * x[i].abs().max(1.0);
            let v = eval(&x, &mut evals);
            simplex.push((x, v));
        }

        loop {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let lo = simplex[0].1;
            let hi = simplex[k].1;
            let spread = (hi - lo).abs();
            let diameter = simplex[1..]
                .iter()
                .map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
                .fold(0.0, f64::max);
            if (spread <= cfg.f_tol * lo.abs().max(1e-300) && diameter <= cfg.x_tol * 1e3)
                || diameter <= cfg.x_tol
                || evals >= cfg.max_evals
            {
                break;
            }

            let centroid: Vec<f64> = (0..k).map(|j| simplex[..k].iter().map(|(x, _)| x[j]).sum::<f64>() / kf).collect();
            let worst = simplex[k].0.clone();
            let along = |t: f64| -> Vec<f64> { centroid.iter().zip(&worst).map(|(c, w)| c + t * (c - w)).collect() };

            let xr = along(alpha);
            let fr = eval(&xr, &mut evals);
            if fr < simplex[0].1 {
                let xe = along(alpha * beta);
                let fe = eval(&xe, &mut evals);
                simplex[k] = if fe < fr { (xe, fe) } else { (xr, fr) };
            } else if fr < simplex[k - 1].1 {
                simplex[k] = (xr, fr);
            } else {
                let (xc, fc) = if fr < simplex[k].1 {
                    let xc = along(alpha * gamma);
                    let fc = eval(&xc, &mut evals);
                    (xc, fc)
                } else {
                    let xc = along(-gamma);
                    let fc = eval(&xc, &mut evals);
                    (xc, fc)
                };
                if fc < simplex[k].1.min(fr) {
                    simplex[k] = (xc, fc);
                } else {
                    let x_best = simplex[0].0.clone();
                    for entry in simplex.iter_mut().skip(1) {
                        let xs: Vec<f64> = x_best.iter().zip(&entry.0).map(|(b, x)| b + delta * (x - b)).collect();
                        let fs = eval(&xs, &mut evals);
                        *entry = (xs, fs);
                    }
                }
            }
        }

        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (x, v) = simplex.swap_remove(0);
        let improved = v < best_f - cfg.f_tol * best_f.abs().max(1e-300);
        if v <= best_f {
            best_x = x;
            best_f = v;
        }
        if evals >= cfg.max_evals {
            break;
        }
        if !improved {
            converged = true;
            break;
        }
        step_scale = (step_scale * 0.5).max(1e-6);
    }

    Outcome { x: best_x, value: best_f, iterations: evals, converged }
}

#[derive(Debug, Clone, Copy)]
pub struct BfgsConfig {
    pub max_iter: usize,
    /// Stop when `|grad| <= grad_tol * max(1, |f|)`.
    pub grad_tol: f64,
    /// Stop when the objective improves by less than `stall_tol` (relative)
    /// over `stall_window` consecutive iterations.
    pub stall_tol: f64,
    pub stall_window: usize,
}

impl Default for BfgsConfig {
    fn default() -> Self {
        BfgsConfig { max_iter: 2000, grad_tol: 1e-9, stall_tol: 1e-12, stall_window: 50 }
    }
}

/// BFGS on a smooth objective returning `(value, gradient)`.
pub fn bfgs<F: FnMut(&[f64]) -> (f64, Vec<f64>)>(mut fg: F, x0: &[f64], cfg: &BfgsConfig) -> Outcome {
    let k = x0.len();
    let (f0, g0) = fg(x0);
    if k == 0 {
        return Outcome { x: Vec::new(), value: f0, iterations: 0, converged: true };
    }
    let mut x = DVector::from_column_slice(x0);
    let mut fx = f0;
    let mut g = DVector::from_vec(g0);
    let mut h_inv = DMatrix::<f64>::identity(k, k);
    let mut history: Vec<f64> = vec![fx];
    let mut converged = false;
    let mut iterations = 0;

    for it in 0..cfg.max_iter {
        iterations = it + 1;
        if g.norm() <= cfg.grad_tol * fx.abs().max(1.0) {
            converged = true;
            break;
        }
        let mut dir = -(&h_inv * &g);
        let mut slope = dir.dot(&g);
        if slope >= 0.0 {
            h_inv = DMatrix::identity(k, k);
            dir = -g.clone();
            slope = dir.dot(&g);
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial = &x + &dir * t;
            let (ft, gt) = fg(trial.as_slice());
            if ft.is_finite() && ft <= fx + 1e-4 * t * slope {
                accepted = Some((trial, ft, DVector::from_vec(gt)));
                break;
            }
            t *= 0.5;
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            // no descent along a descent direction: stationary up to rounding
            converged = g.norm() <= cfg.grad_tol.sqrt() * fx.abs().max(1.0);
            break;
        };
        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > 1e-300 {
            let rho = 1.0 / sy;
            let eye = DMatrix::<f64>::identity(k, k);
            let left = &eye - (&s * y.transpose()) * rho;
            let right = &eye - (&y * s.transpose()) * rho;
            h_inv = &left * &h_inv * &right + (&s * s.transpose()) * rho;
        } else {
            h_inv = DMatrix::identity(k, k);
        }
        x = x_new;
        fx = f_new;
        g = g_new;
        history.push(fx);
        if history.len() > cfg.stall_window {
            let old = history[history.len() - 1 - cfg.stall_window];
            if (old - fx).abs() <= cfg.stall_tol * old.abs().max(1e-300) {
                converged = true;
                break;
            }
        }
    }

    Outcome { x: x.as_slice().to_vec(), value: fx, iterations, converged }
}
