use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Variance given to non-stationary state blocks.
pub const DIFFUSE_VARIANCE: f64 = 1e6;

/// Largest eigenvalue modulus of `t`.
pub fn spectral_radius(t: &DMatrix<f64>) -> f64 {
    if t.nrows() == 0 {
        return 0.0;
    }
    t.clone().complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Solves `P = T P T' + V` through `(I - T kron T) vec P = vec V`.
pub fn solve_discrete_lyapunov(t: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m = t.nrows();
    let k = t.kronecker(t);
    let a = DMatrix::identity(m * m, m * m) - k;
    let b = nalgebra::DVector::from_column_slice(v.as_slice());
    let x = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Numeric("Lyapunov system is singular".into()))?;
    let p = DMatrix::from_column_slice(m, m, x.as_slice());
    Ok((&p + p.transpose()) * 0.5)
}

/// Groups states into blocks that neither `T` nor `V` couple.
fn blocks(t: &DMatrix<f64>, v: &DMatrix<f64>) -> Vec<Vec<usize>> {
    let m = t.nrows();
    let mut parent: Vec<usize> = (0..m).collect();
    fn find(p: &mut [usize], i: usize) -> usize {
        let mut r = i;
        while p[r] != r {
            r = p[r];
        }
        p[i] = r;
        r
    }
    for i in 0..m {
        for j in 0..m {
            if t[(i, j)] != 0.0 || v[(i, j)] != 0.0 {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a] = b;
            }
        }
    }
    let mut out: Vec<Vec<usize>> = Vec::new();
    let mut root_of = vec![usize::MAX; m];
    for i in 0..m {
        let r = find(&mut parent, i);
        if root_of[r] == usize::MAX {
            root_of[r] = out.len();
            out.push(Vec::new());
        }
        out[root_of[r]].push(i);
    }
    out
}

/// Unconditional covariance for each stationary block of the state,
/// `DIFFUSE_VARIANCE * I` for blocks with a root on or outside the unit circle.
pub fn initial_covariance(t: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let m = t.nrows();
    let mut p = DMatrix::zeros(m, m);
    for idx in blocks(t, v) {
        let k = idx.len();
        let tb = DMatrix::from_fn(k, k, |i, j| t[(idx[i], idx[j])]);
        let vb = DMatrix::from_fn(k, k, |i, j| v[(idx[i], idx[j])]);
        let pb = if spectral_radius(&tb) < 1.0 - 1e-10 {
            solve_discrete_lyapunov(&tb, &vb)?
        } else {
            DMatrix::identity(k, k) * DIFFUSE_VARIANCE
        };
        for i in 0..k {
            for j in 0..k {
                p[(idx[i], idx[j])] = pb[(i, j)];
            }
        }
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ar1_variance() {
        let t = DMatrix::from_element(1, 1, 0.8);
        let v = DMatrix::from_element(1, 1, 1.0);
        let p = solve_discrete_lyapunov(&t, &v).unwrap();
        assert!((p[(0, 0)] - 1.0 / (1.0 - 0.64)).abs() < 1e-12);
    }

    #[test]
    fn ar2_companion_matches_closed_form() {
        let (a1, a2) = (0.5, 0.3);
        let t = DMatrix::from_row_slice(2, 2, &[a1, a2, 1.0, 0.0]);
        let v = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let p = solve_discrete_lyapunov(&t, &v).unwrap();
        let g0 = (1.0 - a2) / ((1.0 + a2) * ((1.0 - a2).powi(2) - a1 * a1));
        assert!((p[(0, 0)] - g0).abs() < 1e-10);
        assert!((p[(0, 1)] - a1 * g0 / (1.0 - a2)).abs() < 1e-10);
    }

    #[test]
    fn random_walk_block_is_diffuse() {
        let t = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.5]);
        let v = DMatrix::identity(2, 2);
        let p = initial_covariance(&t, &v).unwrap();
        assert_eq!(p[(0, 0)], DIFFUSE_VARIANCE);
        assert!((p[(1, 1)] - 1.0 / 0.75).abs() < 1e-12);
        assert_eq!(p[(0, 1)], 0.0);
    }
}
