//! Derivative-free simplex minimizer.

#[derive(Clone, Debug)]
pub struct NmOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    pub converged: bool,
}

/// Minimizes `f` from `x0` with an axis-aligned initial simplex of edge `step`.
///
/// Uses the dimension-adaptive coefficients of Gao and Han, which keep the
/// simplex from collapsing prematurely in 10+ dimensions. Stops once the
/// spread of function values over the simplex is at most `tol`, or after
/// `max_evals` evaluations.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], step: f64, max_evals: usize, tol: f64) -> NmOutcome
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
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
    if n == 0 {
        let v = eval(x0, &mut evals);
        return NmOutcome { x: Vec::new(), f: v, evals, converged: true };
    }

    let nf = n as f64;
    let (alpha, gamma) = (1.0, 1.0 + 2.0 / nf);
    let (rho, sigma) = (0.75 - 1.0 / (2.0 * nf), 1.0 - 1.0 / nf);
    let sigma = if n == 1 { 0.5 } else { sigma };

    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += step;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|x| eval(x, &mut evals)).collect();
    let mut converged = false;

    while evals < max_evals {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        if (values[n] - values[0]).abs() <= tol {
            converged = true;
            break;
        }

        let mut centroid = vec![0.0; n];
        for x in &simplex[..n] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / nf;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            centroid.iter().zip(&simplex[n]).map(|(c, w)| c + t * (c - w)).collect()
        };

        let xr = along(alpha);
        let fr = eval(&xr, &mut evals);
        if fr < values[0] {
            let xe = along(alpha * gamma);
            let fe = eval(&xe, &mut evals);
            if fe < fr {
                simplex[n] = xe;
                values[n] = fe;
            } else {
                simplex[n] = xr;
                values[n] = fr;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n] = xr;
            values[n] = fr;
            continue;
        }
        let (xc, fc) = if fr < values[n] {
            let xc = along(alpha * rho);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        } else {
            let xc = along(-rho);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        };
        if fc < fr.min(values[n]) {
            simplex[n] = xc;
            values[n] = fc;
            continue;
        }
        // shrink toward the best vertex
        let best = simplex[0].clone();
        for i in 1..=n {
            for (xi, bi) in simplex[i].iter_mut().zip(&best) {
                *xi = bi + sigma * (*xi - bi);
            }
            values[i] = eval(&simplex[i], &mut evals);
        }
    }

    let best = (0..=n).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap();
    NmOutcome { x: simplex[best].clone(), f: values[best], evals, converged }
}

/// Repeats [`nelder_mead`] from the incumbent with a fresh simplex until a
/// pass improves by less than `tol` or the budget runs out. Fresh simplices
/// escape the degenerate shapes a single run can stall in.
pub fn nelder_mead_polished<F>(mut f: F, x0: &[f64], step: f64, max_evals: usize, tol: f64) -> NmOutcome
where
    F: FnMut(&[f64]) -> f64,
{
    let mut best = nelder_mead(&mut f, x0, step, max_evals, tol);
    let mut evals = best.evals;
    let mut step = step;
    loop {
        if evals >= max_evals {
            return NmOutcome { evals, converged: false, ..best };
        }
        step = (step * 0.5).max(1e-4);
        let next = nelder_mead(&mut f, &best.x, step, max_evals - evals, tol);
        evals += next.evals;
        let gain = best.f - next.f;
        if next.f < best.f {
            best = next;
        }
        if gain <= tol {
            let converged = best.converged && evals < max_evals;
            return NmOutcome { evals, converged, ..best };
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_quadratic_bowl() {
        let out = nelder_mead(|x| (x[0] - 1.0).powi(2) + 3.0 * (x[1] + 2.0).powi(2), &[0.0, 0.0], 0.5, 5000, 1e-14);
        assert!(out.converged);
        assert!((out.x[0] - 1.0).abs() < 1e-5 && (out.x[1] + 2.0).abs() < 1e-5);
    }

    #[test]
    fn rosenbrock_with_polishing() {
        let rosen = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let out = nelder_mead_polished(rosen, &[-1.2, 1.0], 0.5, 20_000, 1e-14);
        assert!(out.f < 1e-10, "{out:?}");
    }

    #[test]
    fn budget_is_respected_and_flagged() {
        let out = nelder_mead_polished(|x| x.iter().map(|v| v.abs()).sum(), &[3.0; 8], 1.0, 50, 1e-12);
        assert!(!out.converged);
        assert!(out.evals <= 50 + 9);
    }

    #[test]
    fn never_returns_worse_than_start() {
        let f = |x: &[f64]| -(x[0] * 3.0).cos() * (x[1] * 2.0).sin();
        let x0 = [0.3, -0.2];
        let out = nelder_mead_polished(f, &x0, 0.4, 500, 1e-10);
        assert!(out.f <= f(&x0));
    }
}
