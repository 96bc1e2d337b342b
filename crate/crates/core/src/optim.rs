//! Derivative-free minimization with box constraints.

use crate::error::{Error, Result};

/// Nelder–Mead settings. Trial points are projected onto the box `[lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NelderMead {
    pub max_evals: usize,
    /// Stop when the simplex spans less than this in every coordinate...
    pub xtol: f64,
    /// ...and the function values differ by less than this (absolute).
    pub ftol: f64,
    /// Edge length of the initial simplex.
    pub initial_step: f64,
}

impl Default for NelderMead {
    fn default() -> Self {
        Self {
            max_evals: 400,
            xtol: 1e-7,
            ftol: 1e-10,
            initial_step: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub fx: f64,
    pub evals: usize,
    pub converged: bool,
}

fn project(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for ((v, &l), &u) in x.iter_mut().zip(lower).zip(upper) {
        *v = v.clamp(l, u);
    }
}

impl NelderMead {
    /// Minimizes `f` from `x0`. Non-finite values are treated as `+∞`, except at the
    /// start point where they are an error.
    pub fn minimize<F>(&self, mut f: F, x0: &[f64], lower: &[f64], upper: &[f64]) -> Result<Minimum>
    where
        F: FnMut(&[f64]) -> f64,
    {
        let d = x0.len();
        if lower.len() != d || upper.len() != d || lower.iter().zip(upper).any(|(l, u)| !(l <= u)) {
            return Err(Error::Config("optimizer box is malformed".into()));
        }
        let mut eval = |x: &[f64], evals: &mut usize| {
            *evals += 1;
            let v = f(x);
            if v.is_finite() {
                v
            } else {
                f64::INFINITY
            }
        };
        let mut evals = 0usize;
        let mut start = x0.to_vec();
        project(&mut start, lower, upper);
        let f0 = eval(&start, &mut evals);
        if !f0.is_finite() {
            return Err(Error::Numerical(
                "objective is not finite at the start point".into(),
            ));
        }
        if d == 0 {
            return Ok(Minimum {
                x: start,
                fx: f0,
                evals,
                converged: true,
            });
        }

        let mut simplex: Vec<(Vec<f64>, f64)> = vec![(start.clone(), f0)];
        for j in 0..d {
            let mut v = start.clone();
            // step away from a bound that would collapse the edge
            let step = if v[j] + self.initial_step <= upper[j] {
                self.initial_step
            } else {
                -self.initial_step
            };
            v[j] += step;
            project(&mut v, lower, upper);
            let fv = eval(&v, &mut evals);
            simplex.push((v, fv));
        }

        let mut converged = false;
        while evals < self.max_evals {
            simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
            let best = simplex[0].1;
            let worst = simplex[d].1;
            let spread = (0..d)
                .map(|j| {
                    let (lo, hi) = simplex
                        .iter()
                        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                            (lo.min(v.0[j]), hi.max(v.0[j]))
                        });
                    hi - lo
                })
                .fold(0.0, f64::max);
            if spread <= self.xtol && (worst - best).abs() <= self.ftol.max(1e-15 * best.abs()) {
                converged = true;
                break;
            }
            if spread <= self.xtol * 1e-3 {
                // collapsed onto a bound face
                converged = true;
                break;
            }

            let mut centroid = vec![0.0; d];
            for v in &simplex[..d] {
                for (c, x) in centroid.iter_mut().zip(&v.0) {
                    *c += x / d as f64;
                }
            }
            let along = |t: f64| -> Vec<f64> {
                let mut p: Vec<f64> = (0..d)
                    .map(|j| centroid[j] + t * (simplex[d].0[j] - centroid[j]))
                    .collect();
                project(&mut p, lower, upper);
                p
            };

            let xr = along(-1.0);
            let fr = eval(&xr, &mut evals);
            if fr < simplex[0].1 {
                let xe = along(-2.0);
                let fe = eval(&xe, &mut evals);
                simplex[d] = if fe < fr { (xe, fe) } else { (xr, fr) };
            } else if fr < simplex[d - 1].1 {
                simplex[d] = (xr, fr);
            } else {
                let (xc, fc) = if fr < simplex[d].1 {
                    let xc = along(-0.5);
                    let fc = eval(&xc, &mut evals);
                    (xc, fc)
                } else {
                    let xc = along(0.5);
                    let fc = eval(&xc, &mut evals);
                    (xc, fc)
                };
                if fc < simplex[d].1.min(fr) {
                    simplex[d] = (xc, fc);
                } else {
                    let x_best = simplex[0].0.clone();
                    for v in simplex.iter_mut().skip(1) {
                        for (x, b) in v.0.iter_mut().zip(&x_best) {
                            *x = b + 0.5 * (*x - b);
                        }
                        v.1 = eval(&v.0, &mut evals);
                    }
                }
            }
        }
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (x, fx) = simplex.swap_remove(0);
        Ok(Minimum {
            x,
            fx,
            evals,
            converged,
        })
    }
}
