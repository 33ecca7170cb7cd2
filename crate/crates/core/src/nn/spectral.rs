//! Largest singular values by power iteration, and the layer-norm product
//! that bounds the Lipschitz constant of a tanh perceptron (tanh is
//! 1-Lipschitz, so no activation factor enters).

use super::Mlp;

pub const DEFAULT_SPECTRAL_TOL: f64 = 1e-8;

fn matvec(w: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    for r in 0..rows {
        out[r] = w[r * cols..(r + 1) * cols].iter().zip(x).map(|(a, b)| a * b).sum();
    }
}

fn matvec_t(w: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for r in 0..rows {
        let xr = x[r];
        for (o, a) in out.iter_mut().zip(&w[r * cols..(r + 1) * cols]) {
            *o += xr * a;
        }
    }
}

fn normalize(x: &mut [f64]) -> f64 {
    let n = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n > 0.0 {
        x.iter_mut().for_each(|v| *v /= n);
    }
    n
}

/// `||W||_2` of a row-major `rows × cols` matrix.
///
/// Power iteration on `WᵀW` from the normalised all-ones vector; stops when
/// the Rayleigh quotient changes by less than `tol` relative, or after
/// `10 * max(rows, cols)` iterations. If the start vector lies in the null
/// space, the largest row of `W` is used instead.
pub fn spectral_norm(w: &[f64], rows: usize, cols: usize, tol: f64) -> f64 {
    assert_eq!(w.len(), rows * cols, "matrix storage does not match shape");
    if w.iter().all(|&v| v == 0.0) {
        return 0.0;
    }
    let mut x = vec![1.0; cols];
    normalize(&mut x);
    let mut wx = vec![0.0; rows];
    matvec(w, rows, cols, &x, &mut wx);
    if normalize(&mut wx.clone()) == 0.0 {
        let best = (0..rows)
            .max_by(|&a, &b| {
                let na: f64 = w[a * cols..(a + 1) * cols].iter().map(|v| v * v).sum();
                let nb: f64 = w[b * cols..(b + 1) * cols].iter().map(|v| v * v).sum();
                na.total_cmp(&nb)
            })
            .unwrap();
        x.copy_from_slice(&w[best * cols..(best + 1) * cols]);
        normalize(&mut x);
    }
    let max_iter = 10 * rows.max(cols);
    let mut lambda = 0.0f64;
    for _ in 0..max_iter.max(1) {
        matvec(w, rows, cols, &x, &mut wx);
        // Rayleigh quotient xᵀWᵀWx with ||x|| = 1
        let next: f64 = wx.iter().map(|v| v * v).sum();
        matvec_t(w, rows, cols, &wx, &mut x);
        normalize(&mut x);
        let done = (next - lambda).abs() <= tol * next;
        lambda = next;
        if done {
            break;
        }
    }
    lambda.sqrt()
}

/// `c_W = Π_j ||W_j||_2` over all layers.
pub fn lipschitz_constant(net: &Mlp) -> f64 {
    net.weights()
        .iter()
        .enumerate()
        .map(|(i, w)| spectral_norm(w, net.dims()[i + 1], net.dims()[i], DEFAULT_SPECTRAL_TOL))
        .product()
}
