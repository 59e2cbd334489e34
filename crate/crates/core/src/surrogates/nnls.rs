use nalgebra::{DMatrix, DVector};

/// Nonnegative least squares `min ||A w - b||` subject to `w >= 0`
/// (Lawson-Hanson active set).
pub fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let k = a.ncols();
    let mut w = DVector::zeros(k);
    let mut passive = vec![false; k];
    let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0) * b.amax().max(1.0);
    let tol = 1e-12 * scale * (a.nrows().max(k) as f64);
    for _ in 0..(3 * k + 10) {
        let grad = a.transpose() * (b - a * &w);
        let next = (0..k)
            .filter(|&j| !passive[j] && grad[j] > tol)
            .max_by(|&i, &j| grad[i].total_cmp(&grad[j]));
        let Some(j) = next else { break };
        passive[j] = true;
        loop {
            let z = restricted_ls(a, b, &passive);
            if (0..k).filter(|&i| passive[i]).all(|i| z[i] > 0.0) {
                w = z;
                break;
            }
            // step back towards w until a passive coefficient hits zero
            let mut alpha = f64::INFINITY;
            for i in (0..k).filter(|&i| passive[i] && z[i] <= 0.0) {
                alpha = alpha.min(w[i] / (w[i] - z[i]));
            }
            w = &w + (&z - &w) * alpha;
            for i in 0..k {
                if passive[i] && w[i] <= tol.min(1e-14) {
                    passive[i] = false;
                    w[i] = 0.0;
                }
            }
        }
    }
    w
}

fn restricted_ls(a: &DMatrix<f64>, b: &DVector<f64>, passive: &[bool]) -> DVector<f64> {
    let cols: Vec<usize> = (0..a.ncols()).filter(|&j| passive[j]).collect();
    let mut z = DVector::zeros(a.ncols());
    if cols.is_empty() {
        return z;
    }
    let sub = a.select_columns(&cols);
    let sol = sub
        .svd(true, true)
        .solve(b, 1e-12)
        .unwrap_or_else(|_| DVector::zeros(cols.len()));
    for (p, &j) in cols.iter().enumerate() {
        z[j] = sol[p];
    }
    z
}
