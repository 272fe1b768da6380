//! Closed-form ridge regression, the fast alternative to boosted trees.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeRegression {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl RidgeRegression {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.bias + self.weights.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
    }

    /// Minimizes `||Xc w - yc||^2 + lambda ||w||^2` on centered data; the
    /// intercept is not penalized.
    pub fn fit(features: &[Vec<f64>], labels: &[f64], lambda: f64) -> Self {
        let n = labels.len();
        let d = features.first().map_or(0, Vec::len);
        if n == 0 {
            return Self {
                weights: vec![0.0; d],
                bias: 0.0,
            };
        }
        let mean_y = labels.iter().sum::<f64>() / n as f64;
        let mut mean_x = vec![0.0; d];
        for row in features {
            for (m, v) in mean_x.iter_mut().zip(row) {
                *m += v / n as f64;
            }
        }
        let mut gram = vec![0.0; d * d];
        let mut rhs = vec![0.0; d];
        let mut centered = vec![0.0; d];
        for (row, y) in features.iter().zip(labels) {
            for j in 0..d {
                centered[j] = row[j] - mean_x[j];
            }
            let yc = y - mean_y;
            for j in 0..d {
                let cj = centered[j];
                if cj == 0.0 {
                    continue;
                }
                rhs[j] += cj * yc;
                for k in j..d {
                    gram[j * d + k] += cj * centered[k];
                }
            }
        }
        for j in 0..d {
            for k in 0..j {
                gram[j * d + k] = gram[k * d + j];
            }
            gram[j * d + j] += lambda.max(1e-12);
        }
        let weights = cholesky_solve(&mut gram, &rhs, d);
        let bias = mean_y - weights.iter().zip(&mean_x).map(|(w, m)| w * m).sum::<f64>();
        Self { weights, bias }
    }
}

/// Solves `A x = b` for symmetric positive-definite `A` (overwritten).
fn cholesky_solve(a: &mut [f64], b: &[f64], d: usize) -> Vec<f64> {
    for j in 0..d {
        let mut diag = a[j * d + j];
        for k in 0..j {
            diag -= a[j * d + k] * a[j * d + k];
        }
        let l_jj = diag.max(1e-300).sqrt();
        a[j * d + j] = l_jj;
        for i in j + 1..d {
            let mut s = a[i * d + j];
            for k in 0..j {
                s -= a[i * d + k] * a[j * d + k];
            }
            a[i * d + j] = s / l_jj;
        }
    }
    let mut y = vec![0.0; d];
    for i in 0..d {
        let mut s = b[i];
        for k in 0..i {
            s -= a[i * d + k] * y[k];
        }
        y[i] = s / a[i * d + i];
    }
    let mut x = vec![0.0; d];
    for i in (0..d).rev() {
        let mut s = y[i];
        for k in i + 1..d {
            s -= a[k * d + i] * x[k];
        }
        x[i] = s / a[i * d + i];
    }
    x
}
