use crate::anthro::{FeatureVector, NUM_FEATURES};
use crate::error::{Error, Result};

/// Minimum training examples for a linear fit.
pub const MIN_LINEAR_EXAMPLES: usize = 10;

const COLS: usize = NUM_FEATURES + 1;

/// Minimizes ‖Xw + b − y‖² + ridge·‖w‖² (bias unpenalized).
///
/// Householder QR on the design matrix with a bias column, augmented by
/// √ridge·I rows for the weights. Returns `(weights, bias)`.
pub fn solve_ridge(x: &[FeatureVector], y: &[f64], ridge: f64) -> Result<(FeatureVector, f64)> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < MIN_LINEAR_EXAMPLES {
        return Err(Error::DatasetTooSmall(format!(
            "linear regression needs at least {MIN_LINEAR_EXAMPLES} examples, got {}",
            x.len()
        )));
    }
    if !(ridge >= 0.0) || !ridge.is_finite() {
        return Err(Error::InvalidInput(format!("ridge {ridge} must be >= 0")));
    }

    let penalty_rows = if ridge > 0.0 { NUM_FEATURES } else { 0 };
    let rows = x.len() + penalty_rows;
    // Column-major so each Householder step walks contiguous memory.
    let mut a = vec![0.0; rows * COLS];
    let mut rhs = vec![0.0; rows];
    for (r, (xi, yi)) in x.iter().zip(y).enumerate() {
        for c in 0..NUM_FEATURES {
            a[c * rows + r] = xi[c];
        }
        a[NUM_FEATURES * rows + r] = 1.0;
        rhs[r] = *yi;
    }
    let root = ridge.sqrt();
    for j in 0..penalty_rows {
        a[j * rows + x.len() + j] = root;
    }

    let mut diag = [0.0; COLS];
    for k in 0..COLS {
        let (done, rest) = a.split_at_mut((k + 1) * rows);
        let col = &mut done[k * rows..];
        let norm = col[k..].iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::Singular);
        }
        let alpha = if col[k] > 0.0 { -norm } else { norm };
        // v = col[k..] - alpha·e1, stored in place.
        col[k] -= alpha;
        let vnorm2 = col[k..].iter().map(|v| v * v).sum::<f64>();
        diag[k] = alpha;
        if vnorm2 > 0.0 {
            for c in 0..COLS - k - 1 {
                let other = &mut rest[c * rows..(c + 1) * rows];
                let dot: f64 = col[k..].iter().zip(&other[k..]).map(|(v, o)| v * o).sum();
                let f = 2.0 * dot / vnorm2;
                for (o, v) in other[k..].iter_mut().zip(&col[k..]) {
                    *o -= f * v;
                }
            }
            let dot: f64 = col[k..].iter().zip(&rhs[k..]).map(|(v, o)| v * o).sum();
            let f = 2.0 * dot / vnorm2;
            for (o, v) in rhs[k..].iter_mut().zip(&col[k..]) {
                *o -= f * v;
            }
        }
    }

    let scale = diag.iter().map(|d| d.abs()).fold(0.0, f64::max);
    if diag.iter().any(|d| d.abs() <= 1e-10 * scale) {
        return Err(Error::Singular);
    }

    // Back-substitution against R: diagonal in `diag`, upper part in `a`.
    let mut sol = [0.0; COLS];
    for k in (0..COLS).rev() {
        let mut s = rhs[k];
        for c in k + 1..COLS {
            s -= a[c * rows + k] * sol[c];
        }
        sol[k] = s / diag[k];
    }
    let mut w = [0.0; NUM_FEATURES];
    w.copy_from_slice(&sol[..NUM_FEATURES]);
    Ok((w, sol[NUM_FEATURES]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_system(n: usize, seed: u64) -> (Vec<FeatureVector>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<FeatureVector> = (0..n)
            .map(|_| std::array::from_fn(|_| rng.gen_range(-2.0..2.0)))
            .collect();
        let y = (0..n).map(|_| rng.gen_range(5000.0..11000.0)).collect();
        (x, y)
    }

    #[test]
    fn exact_affine_target_recovered() {
        let (x, _) = random_system(40, 1);
        let w_true: FeatureVector = std::array::from_fn(|i| 100.0 * (i as f64 - 4.0));
        let y: Vec<f64> = x
            .iter()
            .map(|r| 8000.0 + r.iter().zip(&w_true).map(|(a, b)| a * b).sum::<f64>())
            .collect();
        let (w, b) = solve_ridge(&x, &y, 1e-10).unwrap();
        let rms = (x
            .iter()
            .zip(&y)
            .map(|(r, t)| (r.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>() + b - t).powi(2))
            .sum::<f64>()
            / y.len() as f64)
            .sqrt();
        assert!(rms < 1e-8, "{rms}");
    }

    #[test]
    fn collinear_columns_are_singular_without_ridge() {
        let (mut x, y) = random_system(30, 2);
        for r in &mut x {
            r[3] = 2.0 * r[1];
        }
        assert!(matches!(solve_ridge(&x, &y, 0.0), Err(Error::Singular)));
        assert!(solve_ridge(&x, &y, 1e-3).is_ok());
    }

    #[test]
    fn constant_column_collides_with_bias() {
        let (mut x, y) = random_system(30, 3);
        for r in &mut x {
            r[0] = 1.0;
        }
        assert!(matches!(solve_ridge(&x, &y, 0.0), Err(Error::Singular)));
    }

    #[test]
    fn too_few_examples() {
        let (x, y) = random_system(9, 4);
        assert!(matches!(solve_ridge(&x, &y, 0.0), Err(Error::DatasetTooSmall(_))));
    }

    #[test]
    fn ridge_shrinks_weights() {
        let (x, y) = random_system(30, 5);
        let (w0, _) = solve_ridge(&x, &y, 0.0).unwrap();
        let (w1, _) = solve_ridge(&x, &y, 100.0).unwrap();
        let n = |w: &FeatureVector| w.iter().map(|v| v * v).sum::<f64>();
        assert!(n(&w1) < n(&w0));
    }
}
