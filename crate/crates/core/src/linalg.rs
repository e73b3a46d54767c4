//! Vector kernels, a symmetric eigensolver and 2-D PCA.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Norms below this are treated as degenerate by [`cosine`].
pub const COSINE_NORM_FLOOR: f64 = 1e-12;

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = T::zero();
    for (x, y) in a.iter().zip(b) {
        acc += *x * *y;
    }
    acc
}

pub fn norm_sq<T: Scalar>(a: &[T]) -> T {
    dot(a, a)
}

pub fn norm<T: Scalar>(a: &[T]) -> T {
    norm_sq(a).sqrt()
}

/// Unit vector in the direction of `a`, or `None` when `a` is zero.
pub fn l2_normalize<T: Scalar>(a: &[T]) -> Option<Vec<T>> {
    let n = norm(a);
    if n == T::zero() || !n.is_finite() {
        return None;
    }
    Some(a.iter().map(|x| *x / n).collect())
}

/// Cosine similarity given precomputed squared norms.
///
/// Computed as `dot / sqrt(|a|^2 |b|^2)` so that `cosine(x, x)` is exactly 1.
/// Returns +0 if either norm is below [`COSINE_NORM_FLOOR`]; clamps to [-1, 1].
pub fn cosine_with_norms<T: Scalar>(a: &[T], a_norm_sq: T, b: &[T], b_norm_sq: T) -> T {
    let floor = T::of(COSINE_NORM_FLOOR * COSINE_NORM_FLOOR);
    if a_norm_sq < floor || b_norm_sq < floor {
        return T::zero();
    }
    let c = dot(a, b) / (a_norm_sq * b_norm_sq).sqrt();
    if c == T::zero() {
        // -0.0 would sort apart from +0.0 under total ordering.
        return T::zero();
    }
    c.max(-T::one()).min(T::one())
}

pub fn cosine<T: Scalar>(a: &[T], b: &[T]) -> T {
    cosine_with_norms(a, norm_sq(a), b, norm_sq(b))
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in descending order and the matching unit
/// eigenvectors as rows.
pub fn symmetric_eigen<T: Scalar>(a: &Matrix<T>) -> Result<(Vec<T>, Matrix<T>)> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::invalid("eigen decomposition needs a square matrix"));
    }
    let mut m = a.clone();
    // v holds eigenvectors as columns while iterating.
    let mut v = Matrix::zeros(n, n);
    for i in 0..n {
        v.set(i, i, T::one());
    }
    let eps = T::epsilon();
    for _sweep in 0..100 {
        let mut off = T::zero();
        let mut total = T::zero();
        for i in 0..n {
            for j in 0..n {
                let x = m.get(i, j) * m.get(i, j);
                total += x;
                if i != j {
                    off += x;
                }
            }
        }
        if off <= eps * eps * total || off == T::zero() {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m.get(p, q);
                if apq == T::zero() {
                    continue;
                }
                let app = m.get(p, p);
                let aqq = m.get(q, q);
                let theta = (aqq - app) / (T::of(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m.get(k, p);
                    let mkq = m.get(k, q);
                    m.set(k, p, c * mkp - s * mkq);
                    m.set(k, q, s * mkp + c * mkq);
                }
                for k in 0..n {
                    let mpk = m.get(p, k);
                    let mqk = m.get(q, k);
                    m.set(p, k, c * mpk - s * mqk);
                    m.set(q, k, s * mpk + c * mqk);
                }
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m.get(j, j).partial_cmp(&m.get(i, i)).unwrap_or(std::cmp::Ordering::Equal).then(i.cmp(&j)));
    let values = order.iter().map(|&i| m.get(i, i)).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (r, &i) in order.iter().enumerate() {
        for k in 0..n {
            vectors.set(r, k, v.get(k, i));
        }
    }
    Ok((values, vectors))
}

/// Result of projecting rows onto their top two principal directions.
#[derive(Debug, Clone)]
pub struct Pca2<T> {
    /// `[n x 2]` coordinates.
    pub coords: Matrix<T>,
    /// Unit principal directions, first nonzero coordinate positive.
    pub directions: [Vec<T>; 2],
    /// Covariance eigenvalues (population, divisor n) for the two directions.
    pub eigenvalues: [T; 2],
}

/// PCA to two dimensions with a deterministic sign convention.
pub fn pca_2d<T: Scalar>(data: &Matrix<T>) -> Result<Pca2<T>> {
    let (n, d) = (data.rows(), data.cols());
    if n < 2 {
        return Err(Error::invalid(format!("PCA layout needs at least 2 rows, got {n}")));
    }
    if d == 0 {
        return Err(Error::invalid("PCA layout needs at least 1 column"));
    }
    let nt = T::from_usize(n).expect("row count fits the scalar type");
    let mut mean = vec![T::zero(); d];
    for row in data.iter_rows() {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += *x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= nt);

    let mut centered = data.clone();
    for i in 0..n {
        for (x, m) in centered.row_mut(i).iter_mut().zip(&mean) {
            *x -= *m;
        }
    }
    let mut cov: Matrix<T> = Matrix::zeros(d, d);
    for row in centered.iter_rows() {
        for a in 0..d {
            for b in a..d {
                let v = cov.get(a, b) + row[a] * row[b];
                cov.set(a, b, v);
            }
        }
    }
    for a in 0..d {
        for b in a..d {
            let v = cov.get(a, b) / nt;
            cov.set(a, b, v);
            cov.set(b, a, v);
        }
    }
    let (values, vectors) = symmetric_eigen(&cov)?;
    let pick = |r: usize| -> (Vec<T>, T) {
        if r < d {
            let mut dir = vectors.row(r).to_vec();
            if let Some(first) = dir.iter().copied().find(|x| *x != T::zero()) {
                if first < T::zero() {
                    dir.iter_mut().for_each(|x| *x = -*x);
                }
            }
            (dir, values[r].max(T::zero()))
        } else {
            (vec![T::zero(); d], T::zero())
        }
    };
    let (d0, e0) = pick(0);
    let (d1, e1) = pick(1);
    let mut coords = Matrix::zeros(n, 2);
    for (i, row) in centered.iter_rows().enumerate() {
        coords.set(i, 0, dot(row, &d0));
        coords.set(i, 1, dot(row, &d1));
    }
    Ok(Pca2 {
        coords,
        directions: [d0, d1],
        eigenvalues: [e0, e1],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_of_identical_vectors_is_exactly_one() {
        let v = [0.3, -1.7, 2.2, 1e-3];
        assert_eq!(cosine(&v, &v), 1.0);
        let w: Vec<f64> = v.iter().map(|x| -x).collect();
        assert_eq!(cosine(&v, &w), -1.0);
    }

    #[test]
    fn cosine_degenerate_guard() {
        assert_eq!(cosine(&[0.0, 0.0], &[1.0, 0.0]), 0.0);
        assert_eq!(cosine(&[1e-13, 0.0], &[1.0, 0.0]), 0.0);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 5.0]), 0.0);
    }

    #[test]
    fn works_for_f32() {
        let a = [1.0f32, 2.0, 2.0];
        assert_eq!(norm(&a), 3.0);
        assert!((cosine(&a, &[2.0f32, 4.0, 4.0]) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn eigen_of_diagonal() {
        let m = Matrix::from_rows(&[vec![1.0, 0.0, 0.0], vec![0.0, 3.0, 0.0], vec![0.0, 0.0, 2.0]]).unwrap();
        let (vals, vecs) = symmetric_eigen(&m).unwrap();
        assert_eq!(vals, vec![3.0, 2.0, 1.0]);
        assert_eq!(vecs.row(0), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn pca_needs_two_rows() {
        let m = Matrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        assert!(pca_2d(&m).is_err());
    }

    #[test]
    fn pca_sign_convention() {
        let m = Matrix::from_rows(&[vec![-2.0, 0.1], vec![2.0, -0.1], vec![0.0, 0.0]]).unwrap();
        let p = pca_2d(&m).unwrap();
        for dir in &p.directions {
            let first = dir.iter().find(|x| **x != 0.0).unwrap();
            assert!(*first > 0.0);
        }
    }
}
