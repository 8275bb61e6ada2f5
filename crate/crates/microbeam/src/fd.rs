//! Second-order finite-difference stencils on uniform grids.
//!
//! Stencils are solved from the moment conditions rather than tabulated: a
//! window of `order + 2` points reproduces derivatives of polynomials up to
//! degree `order + 1` exactly, which yields the familiar centered stencils in
//! the interior and shifted/one-sided ones near the ends.

/// Stencil weights for the `order`-th derivative at node `i` of an `n`-point
/// grid with spacing `h`. Returns `(start, weights)` over nodes
/// `start..start + weights.len()`.
pub fn stencil(order: usize, n: usize, i: usize, h: f64) -> (usize, Vec<f64>) {
    if order == 0 {
        return (i, vec![1.0]);
    }
    let w = order + 2;
    assert!(n >= w, "grid too coarse for derivative order {order}");
    let start = i.saturating_sub((w - 1) / 2).min(n - w);
    let weights = solve_moments(order, i as isize - start as isize, w, h);
    (start, weights)
}

/// One-sided stencil anchored at an end of the grid (used for boundary flux
/// evaluation and anchored-derivative constraints).
pub fn one_sided(order: usize, at_left: bool, w: usize, h: f64) -> Vec<f64> {
    assert!(w >= order + 2);
    if at_left {
        solve_moments(order, 0, w, h)
    } else {
        solve_moments(order, w as isize - 1, w, h)
    }
}

/// Weights over offsets `0..w` reproducing the `order`-th derivative at the
/// node at offset `at`, exact for polynomials of degree < `w`.
fn solve_moments(order: usize, at: isize, w: usize, h: f64) -> Vec<f64> {
    // Vandermonde system sum_k c_k (k - at)^m = m! [m == order], m = 0..w-1.
    let mut mat = vec![vec![0.0f64; w]; w];
    let mut rhs = vec![0.0f64; w];
    for m in 0..w {
        for k in 0..w {
            mat[m][k] = ((k as isize - at) as f64).powi(m as i32);
        }
    }
    rhs[order] = (1..=order).map(|v| v as f64).product::<f64>();

    // Tiny dense Gaussian elimination with partial pivoting.
    for col in 0..w {
        let piv = (col..w)
            .max_by(|&r1, &r2| mat[r1][col].abs().total_cmp(&mat[r2][col].abs()))
            .unwrap();
        mat.swap(col, piv);
        rhs.swap(col, piv);
        let diag = mat[col][col];
        for row in col + 1..w {
            let factor = mat[row][col] / diag;
            if factor != 0.0 {
                for k in col..w {
                    mat[row][k] -= factor * mat[col][k];
                }
                rhs[row] -= factor * rhs[col];
            }
        }
    }
    let mut c = vec![0.0f64; w];
    for row in (0..w).rev() {
        let mut acc = rhs[row];
        for k in row + 1..w {
            acc -= mat[row][k] * c[k];
        }
        c[row] = acc / mat[row][row];
    }
    let scale = h.powi(order as i32);
    c.iter().map(|v| v / scale).collect()
}

/// Pointwise `order`-th derivative of sampled values.
pub fn derivative(values: &[f64], h: f64, order: usize) -> Vec<f64> {
    let n = values.len();
    (0..n)
        .map(|i| {
            let (start, w) = stencil(order, n, i, h);
            w.iter()
                .enumerate()
                .map(|(k, c)| c * values[start + k])
                .sum()
        })
        .collect()
}

/// Apply a stencil to sampled values.
pub fn apply(values: &[f64], start: usize, weights: &[f64]) -> f64 {
    weights
        .iter()
        .enumerate()
        .map(|(k, c)| c * values[start + k])
        .sum()
}

/// Trapezoid weights for an `n`-point uniform grid of spacing `h`.
pub fn trapezoid_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; n];
    w[0] = 0.5 * h;
    w[n - 1] = 0.5 * h;
    w
}
