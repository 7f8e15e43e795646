//! Zero-sum matrix games solved by a dense simplex method.

/// Maximin strategy of the row player for payoff matrix `a` (`rows × cols`,
/// row-major), where the row player maximises and the column player
/// minimises. Returns the game value and a row strategy.
///
/// Entries must be finite. The returned value is recomputed from the
/// strategy, so it never exceeds what the strategy guarantees.
pub fn maximin(a: &[f64], rows: usize, cols: usize) -> (f64, Vec<f64>) {
    assert_eq!(a.len(), rows * cols, "matrix shape");
    assert!(rows > 0 && cols > 0, "empty matrix");
    let min = a.iter().copied().fold(f64::INFINITY, f64::min);
    let max = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    // Pure saddle points and constant matrices need no LP.
    let (best_row, best_row_val) = (0..rows)
        .map(|i| (i, (0..cols).map(|j| a[i * cols + j]).fold(f64::INFINITY, f64::min)))
        .fold((0, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
    let min_col_max = (0..cols)
        .map(|j| (0..rows).map(|i| a[i * cols + j]).fold(f64::NEG_INFINITY, f64::max))
        .fold(f64::INFINITY, f64::min);
    if max - min < 1e-15 || best_row_val >= min_col_max {
        let mut x = vec![0.0; rows];
        x[best_row] = 1.0;
        return (best_row_val, x);
    }

    // Shift so every entry is at least 1, then solve the column player's
    // problem  max Σz  s.t.  A'z ≤ 1, z ≥ 0. The duals give the row strategy.
    let shift = 1.0 - min;
    let width = cols + rows + 1;
    let mut t = vec![0.0; (rows + 1) * width];
    for i in 0..rows {
        for j in 0..cols {
            t[i * width + j] = a[i * cols + j] + shift;
        }
        t[i * width + cols + i] = 1.0;
        t[i * width + width - 1] = 1.0;
    }
    let obj = rows * width;
    for j in 0..cols {
        t[obj + j] = -1.0;
    }
    let mut basis: Vec<usize> = (cols..cols + rows).collect();
    simplex(&mut t, &mut basis, rows, width);

    let mut x: Vec<f64> = (0..rows).map(|i| t[obj + cols + i].max(0.0)).collect();
    let total: f64 = x.iter().sum();
    if total > 0.0 && total.is_finite() {
        for v in &mut x {
            *v /= total;
        }
    } else {
        x = vec![0.0; rows];
        x[best_row] = 1.0;
    }
    let value = guaranteed(a, rows, cols, &x);
    if value < best_row_val {
        let mut pure = vec![0.0; rows];
        pure[best_row] = 1.0;
        return (best_row_val, pure);
    }
    (value, x)
}

/// `min_j Σ_i x_i a_ij`.
pub fn guaranteed(a: &[f64], rows: usize, cols: usize, x: &[f64]) -> f64 {
    (0..cols)
        .map(|j| (0..rows).map(|i| x[i] * a[i * cols + j]).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
}

const EPS: f64 = 1e-12;

/// Primal simplex on a tableau already in canonical form, Bland's rule.
fn simplex(t: &mut [f64], basis: &mut [usize], rows: usize, width: usize) {
    let obj = rows * width;
    let vars = width - 1;
    for _ in 0..50_000 {
        let Some(enter) = (0..vars).find(|&j| t[obj + j] < -EPS) else { return };
        let mut leave: Option<usize> = None;
        let mut best = f64::INFINITY;
        for i in 0..rows {
            let coef = t[i * width + enter];
            if coef > EPS {
                let ratio = t[i * width + vars] / coef;
                let better = ratio < best - EPS
                    || (ratio <= best + EPS && leave.is_some_and(|l| basis[i] < basis[l]));
                if better {
                    best = ratio;
                    leave = Some(i);
                }
            }
        }
        // Unbounded cannot happen here: every column has a positive entry.
        let Some(r) = leave else { return };
        pivot(t, rows, width, r, enter);
        basis[r] = enter;
    }
}

fn pivot(t: &mut [f64], rows: usize, width: usize, r: usize, c: usize) {
    let p = t[r * width + c];
    for j in 0..width {
        t[r * width + j] /= p;
    }
    for i in 0..=rows {
        if i == r {
            continue;
        }
        let f = t[i * width + c];
        if f != 0.0 {
            for j in 0..width {
                t[i * width + j] -= f * t[r * width + j];
            }
        }
    }
}
