//! Small dense linear-algebra helpers: SVD pseudoinverse with a relative
//! rank tolerance, null-space projectors, the skew operator and
//! block-diagonal assembly.

use nalgebra::{DMatrix, Matrix3, Vector3, SVD};

use crate::error::{Error, Result};

/// Dense row/column matrix used throughout the crate.
pub type Mat = DMatrix<f64>;

/// Default relative singular-value cutoff for [`pinv`].
pub const DEFAULT_PINV_TOL: f64 = 1e-10;

/// Pseudoinverse together with the numerical rank it was computed at.
#[derive(Debug, Clone)]
pub struct Pinv {
    pub matrix: Mat,
    pub rank: usize,
}

fn check_finite(m: &Mat) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidInput("matrix has non-finite entries".into()))
    }
}

/// Moore–Penrose pseudoinverse with its numerical rank.
///
/// Singular values `σ ≤ tol · σ_max` are treated as zero.
pub fn pinv_rank(m: &Mat, tol: f64) -> Result<Pinv> {
    if !(tol >= 0.0) {
        return Err(Error::InvalidInput(format!("tolerance must be >= 0, got {tol}")));
    }
    check_finite(m)?;
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return Ok(Pinv {
            matrix: Mat::zeros(cols, rows),
            rank: 0,
        });
    }
    let svd = SVD::try_new(m.clone(), true, true, f64::EPSILON, 0).ok_or(Error::SvdFailed)?;
    let u = svd.u.as_ref().ok_or(Error::SvdFailed)?;
    let v_t = svd.v_t.as_ref().ok_or(Error::SvdFailed)?;
    let sigma_max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let cutoff = tol * sigma_max;

    let mut out = Mat::zeros(cols, rows);
    let mut rank = 0;
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s <= cutoff || s == 0.0 {
            continue;
        }
        rank += 1;
        // out += v_k (1/s) u_kᵀ
        let vk = v_t.row(k).transpose();
        let uk = u.column(k);
        out.ger(1.0 / s, &vk, &uk, 1.0);
    }
    Ok(Pinv { matrix: out, rank })
}

/// Moore–Penrose pseudoinverse via SVD with relative tolerance `tol`.
pub fn pinv(m: &Mat, tol: f64) -> Result<Mat> {
    pinv_rank(m, tol).map(|p| p.matrix)
}

/// Numerical rank at relative tolerance `tol`.
pub fn rank(m: &Mat, tol: f64) -> Result<usize> {
    pinv_rank(m, tol).map(|p| p.rank)
}

/// `N = I − m⁺ m`, the orthogonal projector onto the null space of `m`.
pub fn nullspace_projector(m: &Mat, tol: f64) -> Result<Mat> {
    let p = pinv(m, tol)?;
    Ok(projector_from_pinv(m, &p))
}

/// Same as [`nullspace_projector`] but reuses an already computed `m⁺`.
pub fn projector_from_pinv(m: &Mat, m_pinv: &Mat) -> Mat {
    let c = m.ncols();
    Mat::identity(c, c) - m_pinv * m
}

/// Skew-symmetric matrix with `skew(x) · y = x × y`.
pub fn skew(x: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -x.z, x.y, x.z, 0.0, -x.x, -x.y, x.x, 0.0)
}

/// Block-diagonal assembly; off-block entries are exactly zero.
pub fn block_diag(blocks: &[Mat]) -> Result<Mat> {
    if blocks.is_empty() {
        return Err(Error::InvalidInput("block_diag needs at least one block".into()));
    }
    for b in blocks {
        check_finite(b)?;
    }
    let rows: usize = blocks.iter().map(|b| b.nrows()).sum();
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = Mat::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), b.shape()).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
        Mat::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn pinv_identity() {
        let p = pinv(&Mat::identity(3, 3), 1e-12).unwrap();
        assert!((p - Mat::identity(3, 3)).norm() < 1e-15);
    }

    #[test]
    fn pinv_singular_diagonal() {
        let m = Mat::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 0.0]));
        let p = pinv(&m, 1e-12).unwrap();
        assert_eq!(p[(0, 0)], 0.5);
        assert_eq!(p[(1, 1)], 0.0);
        assert_eq!(p[(0, 1)], 0.0);
        assert_eq!(p[(1, 0)], 0.0);
    }

    #[test]
    fn pinv_wide_penrose() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = random(&mut rng, 4, 6);
        let p = pinv(&m, DEFAULT_PINV_TOL).unwrap();
        assert!((&m * &p * &m - &m).norm() < 1e-10);
        assert!((&p * &m * &p - &p).norm() < 1e-10);
    }

    #[test]
    fn pinv_rejects_nan() {
        let mut m = Mat::identity(2, 2);
        m[(0, 1)] = f64::NAN;
        assert!(matches!(pinv(&m, 1e-10), Err(Error::InvalidInput(_))));
        assert!(pinv(&Mat::identity(2, 2), -1.0).is_err());
    }

    #[test]
    fn pinv_reports_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = random(&mut rng, 5, 2);
        let b = random(&mut rng, 2, 7);
        assert_eq!(rank(&(a * b), 1e-10).unwrap(), 2);
    }

    #[test]
    fn projector_examples() {
        let n = nullspace_projector(&Mat::identity(3, 3), 1e-12).unwrap();
        assert!(n.norm() < 1e-15);
        let row = Mat::from_row_slice(1, 2, &[1.0, 0.0]);
        let n = nullspace_projector(&row, 1e-12).unwrap();
        assert!((n - Mat::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0])).norm() < 1e-15);
    }

    #[test]
    fn projector_random_wide() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = random(&mut rng, 6, 12);
        let n = nullspace_projector(&m, DEFAULT_PINV_TOL).unwrap();
        assert!((&m * &n).norm() < 1e-10);
        assert!((&n * &n - &n).norm() < 1e-10);
    }

    #[test]
    fn skew_examples() {
        assert_eq!(skew(&Vector3::zeros()), Matrix3::zeros());
        let s = skew(&Vector3::new(1.0, 0.0, 0.0));
        assert_eq!(s * Vector3::new(0.0, 1.0, 0.0), Vector3::new(0.0, 0.0, 1.0));
        let x = Vector3::new(0.3, -1.7, 2.2);
        assert_eq!(skew(&x) * x, Vector3::zeros());
        assert_eq!(skew(&x).transpose(), -skew(&x));
    }

    #[test]
    fn block_diag_examples() {
        let b = block_diag(&[Mat::identity(2, 2), Mat::identity(3, 3)]).unwrap();
        assert_eq!(b, Mat::identity(5, 5));
        let b = block_diag(&[Mat::from_element(1, 1, 2.0), Mat::from_element(1, 1, 3.0)]).unwrap();
        assert_eq!(b, Mat::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0]));
        assert!(block_diag(&[]).is_err());
    }

    #[test]
    fn block_diag_determinant_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..20 {
            let b1 = random(&mut rng, 3, 3);
            let b2 = random(&mut rng, 4, 4);
            let d = block_diag(&[b1.clone(), b2.clone()]).unwrap().determinant();
            let expected = b1.determinant() * b2.determinant();
            assert!((d - expected).abs() < 1e-12 * (1.0 + expected.abs()));
        }
    }
}
