//! Box-constrained local minimisation: SQP with a damped BFGS Hessian and
//! forward-difference gradients, with a Nelder–Mead fallback.
//!
//! Parameters are mapped to the unit box internally, so the finite-difference
//! step is a fraction of each parameter's range.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerOptions {
    pub max_iterations: usize,
    /// Forward-difference step as a fraction of each parameter range.
    pub fd_step: f64,
    /// After convergence the step is divided by ten this many times and the
    /// search resumed, which removes the first-order bias of forward
    /// differences.
    pub fd_refinements: usize,
    /// Relative objective change per iteration below which the search stops.
    pub ftol: f64,
    /// Absolute objective spread below which the simplex search stops; the
    /// level of solver noise on a self-consistent target.
    pub ftol_abs: f64,
    /// Projected-gradient norm (unit box) below which the search stops,
    /// relative to `1 + |f|`.
    pub gtol: f64,
    pub nelder_mead_fallback: bool,
    /// Objective evaluations allowed to the Nelder–Mead fallback, restarts
    /// included.
    pub nelder_mead_evaluations: usize,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            fd_step: 1e-2,
            fd_refinements: 2,
            ftol: 1e-4,
            ftol_abs: 1e-3,
            gtol: 1e-9,
            nelder_mead_fallback: true,
            nelder_mead_evaluations: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub method: String,
    pub parameters: Vec<f64>,
    pub objective: f64,
    /// Best objective seen so far; non-increasing along the trace.
    pub best_objective: f64,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub trace: Vec<TraceEntry>,
}

/// Unit-box view of a bounded objective that counts evaluations and tracks
/// the best point.
struct Scaled<'a, F> {
    f: &'a F,
    lower: Vec<f64>,
    range: Vec<f64>,
    evaluations: std::sync::atomic::AtomicUsize,
}

impl<F: Fn(&[f64]) -> f64 + Sync> Scaled<'_, F> {
    fn to_physical(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(&self.lower)
            .zip(&self.range)
            .map(|((&z, &l), &r)| l + z.clamp(0.0, 1.0) * r)
            .collect()
    }

    fn eval(&self, z: &[f64]) -> f64 {
        self.evaluations.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
        let v = (self.f)(&self.to_physical(z));
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }

    fn count(&self) -> usize {
        self.evaluations.load(std::sync::atomic::Ordering::Relaxed)
    }

    /// Forward differences, stepping backwards where the forward point would
    /// leave the box. Evaluated concurrently, combined in index order.
    fn gradient(&self, z: &[f64], fz: f64, h: f64) -> Vec<f64> {
        (0..z.len())
            .into_par_iter()
            .map(|i| {
                let mut p = z.to_vec();
                let step = if z[i] + h <= 1.0 { h } else { -h };
                p[i] += step;
                (self.eval(&p) - fz) / step
            })
            .collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn mat_vec(m: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    m.iter().map(|row| dot(row, v)).collect()
}

/// Norm of the gradient with components that push against an active bound
/// removed.
fn projected_gradient_norm(z: &[f64], g: &[f64]) -> f64 {
    z.iter()
        .zip(g)
        .map(|(&z, &g)| if (z <= 0.0 && g > 0.0) || (z >= 1.0 && g < 0.0) { 0.0 } else { g * g })
        .sum::<f64>()
        .sqrt()
}

/// Solves `min gᵀd + ½ dᵀBd` subject to `lo ≤ d ≤ hi` by enumerating the
/// active sets. `B` must be symmetric positive definite.
pub(crate) fn box_qp(b: &[Vec<f64>], g: &[f64], lo: &[f64], hi: &[f64]) -> Vec<f64> {
    let n = g.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let total = 3usize.pow(n as u32);
    for code in 0..total {
        // 0 free, 1 at lower, 2 at upper
        let mut c = code;
        let mut state = vec![0u8; n];
        for s in state.iter_mut() {
            *s = (c % 3) as u8;
            c /= 3;
        }
        let mut d = vec![0.0; n];
        for i in 0..n {
            d[i] = match state[i] {
                1 => lo[i],
                2 => hi[i],
                _ => 0.0,
            };
        }
        let free: Vec<usize> = (0..n).filter(|&i| state[i] == 0).collect();
        if !free.is_empty() {
            let m = free.len();
            let mut a = nalgebra::DMatrix::zeros(m, m);
            let mut rhs = nalgebra::DVector::zeros(m);
            for (r, &i) in free.iter().enumerate() {
                rhs[r] = -g[i] - (0..n).filter(|j| state[*j] != 0).map(|j| b[i][j] * d[j]).sum::<f64>();
                for (c, &j) in free.iter().enumerate() {
                    a[(r, c)] = b[i][j];
                }
            }
            let Some(sol) = a.cholesky().map(|ch| ch.solve(&rhs)) else {
                continue;
            };
            for (r, &i) in free.iter().enumerate() {
                d[i] = sol[r];
            }
        }
        if (0..n).any(|i| d[i] < lo[i] - 1e-14 || d[i] > hi[i] + 1e-14) {
            continue;
        }
        let q = dot(g, &d) + 0.5 * dot(&d, &mat_vec(b, &d));
        if best.as_ref().is_none_or(|(bq, _)| q < *bq) {
            best = Some((q, d));
        }
    }
    best.map(|(_, d)| d).unwrap_or_else(|| vec![0.0; n])
}

fn scaled_identity(n: usize, s: f64) -> Vec<Vec<f64>> {
    (0..n).map(|i| (0..n).map(|j| if i == j { s } else { 0.0 }).collect()).collect()
}

/// Damped BFGS update keeping `B` positive definite.
fn bfgs_update(b: &mut [Vec<f64>], s: &[f64], y: &[f64]) {
    let bs = mat_vec(b, s);
    let sbs = dot(s, &bs);
    if !(sbs > 0.0) {
        return;
    }
    let sy = dot(s, y);
    let theta = if sy >= 0.2 * sbs { 1.0 } else { 0.8 * sbs / (sbs - sy) };
    let r: Vec<f64> = y.iter().zip(&bs).map(|(y, bs)| theta * y + (1.0 - theta) * bs).collect();
    let sr = dot(s, &r);
    if !(sr > 0.0) {
        return;
    }
    let n = s.len();
    for i in 0..n {
        for j in 0..n {
            b[i][j] += -bs[i] * bs[j] / sbs + r[i] * r[j] / sr;
        }
    }
}

/// Minimises `f` over the box `[lower, upper]` starting from `x0`.
pub fn minimize<F>(f: &F, x0: &[f64], lower: &[f64], upper: &[f64], options: &OptimizerOptions) -> Outcome
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let n = x0.len();
    assert!(n > 0 && lower.len() == n && upper.len() == n);
    let scaled = Scaled {
        f,
        lower: lower.to_vec(),
        range: lower.iter().zip(upper).map(|(l, u)| u - l).collect(),
        evaluations: Default::default(),
    };
    let mut z: Vec<f64> = x0
        .iter()
        .zip(lower)
        .zip(&scaled.range)
        .map(|((&x, &l), &r)| ((x - l) / r).clamp(0.0, 1.0))
        .collect();
    let mut fz = scaled.eval(&z);
    let mut trace = Vec::new();
    let mut best = fz;
    let mut push = |trace: &mut Vec<TraceEntry>, it: usize, method: &str, z: &[f64], v: f64, evals: usize| {
        best = best.min(v);
        trace.push(TraceEntry {
            iteration: it,
            method: method.to_string(),
            parameters: scaled.to_physical(z),
            objective: v,
            best_objective: best,
            evaluations: evals,
        });
    };
    push(&mut trace, 0, "start", &z, fz, scaled.count());

    let mut h = options.fd_step;
    let mut refinements_left = options.fd_refinements;
    let mut b: Option<Vec<Vec<f64>>> = None;
    let mut previous: Option<(Vec<f64>, Vec<f64>)> = None; // (step, gradient)
    let mut converged = false;
    let mut stalled = false;
    let mut iterations = 0;

    while iterations < options.max_iterations {
        if fz == 0.0 {
            converged = true;
            break;
        }
        let g = scaled.gradient(&z, fz, h);
        // an exactly flat neighbourhood with a positive misfit is a plateau,
        // not a minimum
        if g.iter().any(|v| !v.is_finite()) || g.iter().all(|&v| v == 0.0) {
            stalled = true;
            break;
        }
        let hess = b.get_or_insert_with(|| {
            let gn = dot(&g, &g).sqrt();
            scaled_identity(n, if gn > 0.0 { gn / 0.2 } else { 1.0 })
        });
        if let Some((s, g_prev)) = previous.take() {
            let y: Vec<f64> = g.iter().zip(&g_prev).map(|(a, b)| a - b).collect();
            bfgs_update(hess, &s, &y);
        }
        if projected_gradient_norm(&z, &g) <= options.gtol * (1.0 + fz.abs()) {
            if refinements_left > 0 {
                refinements_left -= 1;
                h /= 10.0;
                continue;
            }
            converged = true;
            break;
        }
        let lo: Vec<f64> = z.iter().map(|v| -v).collect();
        let hi: Vec<f64> = z.iter().map(|v| 1.0 - v).collect();
        let d = box_qp(hess, &g, &lo, &hi);
        let slope = dot(&g, &d);
        iterations += 1;

        let mut accepted = None;
        if slope < 0.0 {
            let mut alpha = 1.0;
            for _ in 0..8 {
                let trial: Vec<f64> = z.iter().zip(&d).map(|(z, d)| (z + alpha * d).clamp(0.0, 1.0)).collect();
                let ft = scaled.eval(&trial);
                if ft <= fz + 1e-4 * alpha * slope {
                    accepted = Some((trial, ft));
                    break;
                }
                alpha *= 0.5;
            }
            // a full step can overshoot into a region the misfit cannot see;
            // keep shortening while that still improves
            while let Some((_, fa)) = &accepted {
                alpha *= 0.5;
                if alpha < 1.0 / 256.0 {
                    break;
                }
                let trial: Vec<f64> = z.iter().zip(&d).map(|(z, d)| (z + alpha * d).clamp(0.0, 1.0)).collect();
                let ft = scaled.eval(&trial);
                if ft >= *fa {
                    break;
                }
                accepted = Some((trial, ft));
            }
        }
        match accepted {
            Some((trial, ft)) => {
                let s: Vec<f64> = trial.iter().zip(&z).map(|(a, b)| a - b).collect();
                let relative = (fz - ft).abs() / fz.abs().max(f64::MIN_POSITIVE);
                previous = Some((s, g));
                z = trial;
                fz = ft;
                push(&mut trace, iterations, "sqp", &z, fz, scaled.count());
                if relative < options.ftol {
                    if refinements_left > 0 {
                        refinements_left -= 1;
                        h /= 10.0;
                        continue;
                    }
                    converged = true;
                    break;
                }
            }
            None => {
                // the model or gradient is poor here; retry with a smaller
                // difference step and a fresh Hessian before giving up
                push(&mut trace, iterations, "sqp", &z, fz, scaled.count());
                if refinements_left > 0 {
                    refinements_left -= 1;
                    h /= 10.0;
                    b = None;
                    previous = None;
                    continue;
                }
                stalled = true;
                break;
            }
        }
    }

    if !converged && stalled && options.nelder_mead_fallback {
        let budget = scaled.count() + options.nelder_mead_evaluations;
        let mut report = |zz: &[f64], v: f64| {
            iterations += 1;
            push(&mut trace, iterations, "nelder-mead", zz, v, scaled.count());
        };
        loop {
            let (zn, fnm, ok) = nelder_mead(&scaled, &z, fz, budget, options, &mut report);
            let gain = fz - fnm;
            if fnm <= fz {
                z = zn;
                fz = fnm;
            }
            converged = ok;
            // a collapsed simplex stalls in curved valleys; restart while it pays
            if !ok || gain <= (options.ftol * fz.abs()).max(options.ftol_abs) {
                break;
            }
        }
    }

    Outcome {
        x: scaled.to_physical(&z),
        value: fz,
        iterations,
        evaluations: scaled.count(),
        converged,
        trace,
    }
}

/// Reflects a coordinate back into `[0, 1]`.
fn reflect(v: f64) -> f64 {
    let r = if v < 0.0 {
        -v
    } else if v > 1.0 {
        2.0 - v
    } else {
        v
    };
    r.clamp(0.0, 1.0)
}

fn nelder_mead<F: Fn(&[f64]) -> f64 + Sync>(
    scaled: &Scaled<'_, F>,
    z0: &[f64],
    f0: f64,
    budget: usize,
    options: &OptimizerOptions,
    report: &mut dyn FnMut(&[f64], f64),
) -> (Vec<f64>, f64, bool) {
    let n = z0.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = vec![(z0.to_vec(), f0)];
    let vertices: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut p = z0.to_vec();
            p[i] = if p[i] + 0.05 <= 1.0 { p[i] + 0.05 } else { p[i] - 0.05 };
            p
        })
        .collect();
    let values: Vec<f64> = vertices.par_iter().map(|p| scaled.eval(p)).collect();
    simplex.extend(vertices.into_iter().zip(values));

    let order = |s: &mut Vec<(Vec<f64>, f64)>| s.sort_by(|a, b| a.1.total_cmp(&b.1));
    order(&mut simplex);
    let mut converged = false;
    while scaled.count() < budget {
        let spread = simplex[n].1 - simplex[0].1;
        let diameter = simplex[1..]
            .iter()
            .map(|(p, _)| p.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if spread <= (options.ftol * simplex[0].1.abs()).max(options.ftol_abs) || diameter < 1e-6 {
            converged = true;
            break;
        }
        let centroid: Vec<f64> = (0..n).map(|i| simplex[..n].iter().map(|(p, _)| p[i]).sum::<f64>() / n as f64).collect();
        let worst = simplex[n].clone();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&worst.0)
                .map(|(c, w)| reflect(c + t * (c - w)))
                .collect()
        };
        let xr = along(1.0);
        let fr = scaled.eval(&xr);
        if fr < simplex[0].1 {
            let xe = along(2.0);
            let fe = scaled.eval(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < worst.1 {
                let x = along(0.5);
                let v = scaled.eval(&x);
                (x, v)
            } else {
                let x = along(-0.5);
                let v = scaled.eval(&x);
                (x, v)
            };
            if fc < worst.1.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                let shrunk: Vec<Vec<f64>> = simplex[1..]
                    .iter()
                    .map(|(p, _)| p.iter().zip(&best).map(|(a, b)| b + 0.5 * (a - b)).collect())
                    .collect();
                let values: Vec<f64> = shrunk.par_iter().map(|p| scaled.eval(p)).collect();
                for (k, (p, v)) in shrunk.into_iter().zip(values).enumerate() {
                    simplex[k + 1] = (p, v);
                }
            }
        }
        order(&mut simplex);
        report(&simplex[0].0, simplex[0].1);
    }
    let (z, v) = simplex.swap_remove(0);
    (z, v, converged)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_quadratic() {
        let f = |x: &[f64]| (x[0] - 3.0).powi(2);
        let out = minimize(&f, &[0.0], &[0.0], &[10.0], &OptimizerOptions::default());
        assert!((out.x[0] - 3.0).abs() < 1e-3, "{:?}", out.x);
        assert!(out.converged);
    }

    #[test]
    fn flat_shelf_past_the_minimum() {
        // blind beyond 0.6, like a fit window that ends before late failures
        let f = |x: &[f64]| if x[0] < 0.6 { (x[0] - 0.5).powi(2) } else { 0.01 };
        for start in [0.0, 0.3, 0.55] {
            let out = minimize(&f, &[start], &[0.0], &[1.0], &OptimizerOptions::default());
            assert!((out.x[0] - 0.5).abs() < 0.05, "from {start}: {:?}", out.x);
        }
    }

    #[test]
    fn active_upper_bound() {
        let f = |x: &[f64]| (x[0] - 3.0).powi(2);
        let out = minimize(&f, &[0.0], &[0.0], &[2.0], &OptimizerOptions::default());
        assert_eq!(out.x[0], 2.0);
        assert!(out.converged);
    }

    #[test]
    fn rosenbrock_in_a_box() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let out = minimize(&f, &[-1.0, 2.0], &[-2.0, -1.0], &[2.0, 3.0], &OptimizerOptions::default());
        assert!((out.x[0] - 1.0).abs() < 2e-2 && (out.x[1] - 1.0).abs() < 4e-2, "{:?}", out);
    }

    #[test]
    fn l1_valley() {
        let f = |x: &[f64]| (x[0] - 0.3).abs() + 2.0 * (x[1] + 0.2).abs();
        let out = minimize(&f, &[0.8, 0.7], &[-1.0, -1.0], &[1.0, 1.0], &OptimizerOptions::default());
        assert!((out.x[0] - 0.3).abs() < 1e-2 && (out.x[1] + 0.2).abs() < 1e-2, "{:?}", out.x);
    }

    #[test]
    fn trace_best_is_monotone_and_feasible() {
        let f = |x: &[f64]| (x[0] - 0.7).powi(2) + (x[1] - 5.0).abs();
        let out = minimize(&f, &[0.1, 1.0], &[0.0, 0.0], &[1.0, 4.0], &OptimizerOptions::default());
        for w in out.trace.windows(2) {
            assert!(w[1].best_objective <= w[0].best_objective);
        }
        for t in &out.trace {
            assert!(t.parameters[0] >= 0.0 && t.parameters[0] <= 1.0);
            assert!(t.parameters[1] >= 0.0 && t.parameters[1] <= 4.0);
        }
        assert_eq!(out.x[1], 4.0);
    }

    #[test]
    fn qp_respects_box() {
        let b = vec![vec![2.0, 0.5], vec![0.5, 1.0]];
        let d = box_qp(&b, &[-10.0, 1.0], &[-0.1, -0.1], &[0.3, 0.3]);
        assert_eq!(d[0], 0.3);
        assert!(d[1] >= -0.1 && d[1] <= 0.3);
        // unconstrained optimum is returned when it is interior
        let d = box_qp(&b, &[-0.1, 0.05], &[-1.0, -1.0], &[1.0, 1.0]);
        let r0 = 2.0 * d[0] + 0.5 * d[1] - 0.1;
        let r1 = 0.5 * d[0] + d[1] + 0.05;
        assert!(r0.abs() < 1e-12 && r1.abs() < 1e-12);
    }
}
