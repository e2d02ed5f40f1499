//! Reference solvers that share no code with the library's solvers.
#![allow(dead_code)]

/// Minimizes `½‖u − f‖² + α Σ √(|∇u|² + ε²)` (forward differences, zero
/// difference past the last row/column) with restarted Nesterov descent.
pub fn rof_smoothed(f: &[f64], w: usize, h: usize, alpha: f64, eps: f64, max_iter: usize) -> Vec<f64> {
    let n = w * h;
    let lip = 1.0 + 8.0 * alpha / eps;
    let grad = |u: &[f64], g: &mut [f64]| {
        for k in 0..n {
            g[k] = u[k] - f[k];
        }
        for j in 0..h {
            for i in 0..w {
                let k = j * w + i;
                let dx = if i + 1 < w { u[k + 1] - u[k] } else { 0.0 };
                let dy = if j + 1 < h { u[k + w] - u[k] } else { 0.0 };
                let norm = (dx * dx + dy * dy + eps * eps).sqrt();
                let (px, py) = (alpha * dx / norm, alpha * dy / norm);
                if i + 1 < w {
                    g[k + 1] += px;
                    g[k] -= px;
                }
                if j + 1 < h {
                    g[k + w] += py;
                    g[k] -= py;
                }
            }
        }
    };
    let mut x = f.to_vec();
    let mut y = x.clone();
    let mut g = vec![0.0; n];
    let mut t = 1.0f64;
    for _ in 0..max_iter {
        grad(&y, &mut g);
        let gnorm: f64 = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if gnorm < 1e-11 {
            break;
        }
        let next: Vec<f64> = y.iter().zip(&g).map(|(a, b)| a - b / lip).collect();
        // Restart momentum when it points uphill.
        let uphill: f64 = g.iter().zip(next.iter().zip(&x)).map(|(gk, (a, b))| gk * (a - b)).sum();
        let t_next = if uphill > 0.0 { 1.0 } else { (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0 };
        let beta = if uphill > 0.0 { 0.0 } else { (t - 1.0) / t_next };
        for k in 0..n {
            y[k] = next[k] + beta * (next[k] - x[k]);
        }
        x = next;
        t = t_next;
    }
    x
}

/// Root mean square difference.
pub fn rms(a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len() as f64).sqrt()
}
