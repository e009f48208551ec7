use nalgebra::DMatrix;

/// Central-difference gradient with step `h` (scaled by `max(1, |x_i|)`).
pub fn numerical_gradient<F>(f: F, x: &[f64], h: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            let hi = h * x[i].abs().max(1.0);
            p[i] = x[i] + hi;
            let up = f(&p);
            p[i] = x[i] - hi;
            let down = f(&p);
            p[i] = x[i];
            (up - down) / (2.0 * hi)
        })
        .collect()
}

/// Central-difference Hessian, symmetrized as `(H + Hᵀ) / 2`.
pub fn numerical_hessian<F>(f: F, x: &[f64], h: f64) -> DMatrix<f64>
where
    F: Fn(&[f64]) -> f64,
{
    let n = x.len();
    let steps: Vec<f64> = x.iter().map(|v| h * v.abs().max(1.0)).collect();
    let mut p = x.to_vec();
    let mut eval = |shifts: &[(usize, f64)]| {
        p.copy_from_slice(x);
        for &(i, s) in shifts {
            p[i] += s;
        }
        f(&p)
    };
    let f0 = eval(&[]);
    let mut hess = DMatrix::zeros(n, n);
    for i in 0..n {
        let hi = steps[i];
        let up = eval(&[(i, hi)]);
        let down = eval(&[(i, -hi)]);
        hess[(i, i)] = (up - 2.0 * f0 + down) / (hi * hi);
        for j in (i + 1)..n {
            let hj = steps[j];
            let pp = eval(&[(i, hi), (j, hj)]);
            let pm = eval(&[(i, hi), (j, -hj)]);
            let mp = eval(&[(i, -hi), (j, hj)]);
            let mm = eval(&[(i, -hi), (j, -hj)]);
            let v = (pp - pm - mp + mm) / (4.0 * hi * hj);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    (&hess + hess.transpose()) * 0.5
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}
