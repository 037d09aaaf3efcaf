//! Derivative-free minimization (Nelder-Mead) and finite-difference
//! derivatives used for standard errors.

/// Settings for [`nelder_mead`].
#[derive(Debug, Clone, Copy)]
pub struct SimplexOptions {
    pub max_evals: usize,
    /// Relative spread of function values across the simplex at which to stop.
    pub f_tol: f64,
    /// Largest vertex distance from the best vertex at which to stop.
    pub x_tol: f64,
    /// Edge length of the initial simplex.
    pub step: f64,
}

impl Default for SimplexOptions {
    fn default() -> Self {
        Self {
            max_evals: 5000,
            f_tol: 1e-8,
            x_tol: 1e-6,
            step: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimplexResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub evals: usize,
    /// Final max distance between the best vertex and the others.
    pub simplex_size: f64,
    /// True when the tolerances were met before `max_evals`.
    pub tolerance_met: bool,
}

/// Minimizes `f` from `x0` using the adaptive-coefficient Nelder-Mead method
/// (Gao & Han), which behaves better than the classic coefficients beyond a
/// handful of dimensions. Non-finite objective values are treated as `+inf`.
pub fn nelder_mead<F>(mut f: F, x0: &[f64], opts: SimplexOptions) -> SimplexResult
where
    F: FnMut(&[f64]) -> f64,
{
    let n = x0.len();
    let nf = n as f64;
    let (alpha, gamma, rho, sigma) = (1.0, 1.0 + 2.0 / nf, 0.75 - 1.0 / (2.0 * nf), 1.0 - 1.0 / nf);
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };

    let mut pts: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    pts.push(x0.to_vec());
    for i in 0..n {
        let mut p = x0.to_vec();
        p[i] += opts.step;
        pts.push(p);
    }
    let mut vals: Vec<f64> = pts.iter().map(|p| eval(p, &mut evals)).collect();

    let mut tolerance_met = false;
    loop {
        // order vertices, best first; stable sort keeps ties deterministic
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = order.iter().map(|&i| pts[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();

        let best = vals[0];
        let worst = vals[n];
        let size = simplex_size(&pts);
        if best.is_finite() && (worst - best).abs() <= opts.f_tol * (best.abs() + 1e-12) && size <= opts.x_tol {
            tolerance_met = true;
            break;
        }
        if evals >= opts.max_evals {
            break;
        }

        let mut centroid = vec![0.0; n];
        for p in &pts[..n] {
            for (c, v) in centroid.iter_mut().zip(p) {
                *c += v / nf;
            }
        }
        let along = |coef: f64| -> Vec<f64> { centroid.iter().zip(&pts[n]).map(|(c, w)| c + coef * (c - w)).collect() };

        let xr = along(alpha);
        let fr = eval(&xr, &mut evals);
        if fr < vals[0] {
            let xe = along(alpha * gamma);
            let fe = eval(&xe, &mut evals);
            if fe < fr {
                pts[n] = xe;
                vals[n] = fe;
            } else {
                pts[n] = xr;
                vals[n] = fr;
            }
            continue;
        }
        if fr < vals[n - 1] {
            pts[n] = xr;
            vals[n] = fr;
            continue;
        }
        let (xc, fc) = if fr < vals[n] {
            let xc = along(alpha * rho);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        } else {
            let xc = along(-rho);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        };
        if fc < vals[n].min(fr) {
            pts[n] = xc;
            vals[n] = fc;
            continue;
        }
        // shrink toward the best vertex
        let b = pts[0].clone();
        for i in 1..=n {
            for (v, bv) in pts[i].iter_mut().zip(&b) {
                *v = bv + sigma * (*v - bv);
            }
            vals[i] = eval(&pts[i], &mut evals);
        }
    }

    let size = simplex_size(&pts);
    SimplexResult {
        x: pts[0].clone(),
        f: vals[0],
        evals,
        simplex_size: size,
        tolerance_met,
    }
}

fn simplex_size(pts: &[Vec<f64>]) -> f64 {
    pts[1..]
        .iter()
        .map(|p| p.iter().zip(&pts[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
        .fold(0.0, f64::max)
}

/// Central-difference gradient with a fixed absolute step.
pub fn gradient<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], step: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            xp[i] = x[i] + step;
            let fp = f(&xp);
            xp[i] = x[i] - step;
            let fm = f(&xp);
            xp[i] = x[i];
            (fp - fm) / (2.0 * step)
        })
        .collect()
}

/// Central-difference Hessian (row-major, symmetric) with a fixed absolute step.
pub fn hessian<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], step: f64) -> Vec<Vec<f64>> {
    let n = x.len();
    let f0 = f(x);
    let mut h = vec![vec![0.0; n]; n];
    let mut xp = x.to_vec();
    for i in 0..n {
        xp[i] = x[i] + step;
        let fp = f(&xp);
        xp[i] = x[i] - step;
        let fm = f(&xp);
        xp[i] = x[i];
        h[i][i] = (fp - 2.0 * f0 + fm) / (step * step);
        for j in 0..i {
            let mut at = |di: f64, dj: f64| {
                xp[i] = x[i] + di;
                xp[j] = x[j] + dj;
                let v = f(&xp);
                xp[i] = x[i];
                xp[j] = x[j];
                v
            };
            let v = (at(step, step) - at(step, -step) - at(-step, step) + at(-step, -step)) / (4.0 * step * step);
            h[i][j] = v;
            h[j][i] = v;
        }
    }
    h
}
