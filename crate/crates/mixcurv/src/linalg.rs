//! Dense helpers over any [`Scalar`]; sizes never exceed the chart dimension.

use crate::jets::Scalar;

pub type Mat<S> = Vec<Vec<S>>;

pub fn zeros<S: Scalar>(r: usize, c: usize) -> Mat<S> {
    vec![vec![S::zero(); c]; r]
}

pub fn identity<S: Scalar>(n: usize) -> Mat<S> {
    let mut m = zeros(n, n);
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = S::one();
    }
    m
}

pub fn matmul<S: Scalar>(a: &Mat<S>, b: &Mat<S>) -> Mat<S> {
    let (r, k, c) = (a.len(), b.len(), b.first().map_or(0, |x| x.len()));
    let mut m = zeros(r, c);
    for i in 0..r {
        for l in 0..k {
            let ail = a[i][l];
            for j in 0..c {
                m[i][j] += ail * b[l][j];
            }
        }
    }
    m
}

pub fn transpose<S: Scalar>(a: &Mat<S>) -> Mat<S> {
    let (r, c) = (a.len(), a.first().map_or(0, |x| x.len()));
    (0..c).map(|j| (0..r).map(|i| a[i][j]).collect()).collect()
}

pub fn matvec<S: Scalar>(a: &Mat<S>, v: &[S]) -> Vec<S> {
    a.iter().map(|row| dot(row, v)).collect()
}

pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    let mut s = S::zero();
    for (x, y) in a.iter().zip(b) {
        s += *x * *y;
    }
    s
}

/// Bilinear form `u^T g v`.
pub fn inner<S: Scalar>(g: &Mat<S>, u: &[S], v: &[S]) -> S {
    let mut s = S::zero();
    for (i, ui) in u.iter().enumerate() {
        s += *ui * dot(&g[i], v);
    }
    s
}

/// Inverse by Gauss-Jordan with partial pivoting on value parts.
/// Returns `None` when a pivot is (relatively) zero.
pub fn inverse<S: Scalar>(a: &Mat<S>) -> Option<Mat<S>> {
    let n = a.len();
    let scale = a.iter().flatten().fold(0.0f64, |m, x| m.max(x.value().abs()));
    if scale == 0.0 {
        return None;
    }
    let mut m = a.clone();
    let mut inv = identity::<S>(n);
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i][col].value().abs().total_cmp(&m[j][col].value().abs()))
            .unwrap();
        if m[piv][col].value().abs() <= 1e-14 * scale {
            return None;
        }
        m.swap(col, piv);
        inv.swap(col, piv);
        let p = m[col][col].recip();
        for j in 0..n {
            m[col][j] *= p;
            inv[col][j] *= p;
        }
        for i in 0..n {
            if i != col {
                let f = m[i][col];
                for j in 0..n {
                    let mc = m[col][j];
                    let ic = inv[col][j];
                    m[i][j] -= f * mc;
                    inv[i][j] -= f * ic;
                }
            }
        }
    }
    Some(inv)
}

/// Determinant by elimination (value-part pivoting).
pub fn det<S: Scalar>(a: &Mat<S>) -> S {
    let n = a.len();
    let mut m = a.clone();
    let mut d = S::one();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i][col].value().abs().total_cmp(&m[j][col].value().abs()))
            .unwrap();
        if m[piv][col].value() == 0.0 {
            return S::zero();
        }
        if piv != col {
            m.swap(col, piv);
            d = -d;
        }
        d *= m[col][col];
        let p = m[col][col].recip();
        for i in col + 1..n {
            let f = m[i][col] * p;
            for j in col..n {
                let mc = m[col][j];
                m[i][j] -= f * mc;
            }
        }
    }
    d
}

pub fn map<S: Scalar, T>(a: &Mat<S>, f: impl Fn(&S) -> T) -> Vec<Vec<T>> {
    a.iter().map(|r| r.iter().map(&f).collect()).collect()
}

/// Matrix of value parts.
pub fn values<S: Scalar>(a: &Mat<S>) -> Mat<f64> {
    map(a, |x| x.value())
}

pub fn max_abs(a: &Mat<f64>) -> f64 {
    a.iter().flatten().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn sub(a: &Mat<f64>, b: &Mat<f64>) -> Mat<f64> {
    a.iter().zip(b).map(|(r, s)| r.iter().zip(s).map(|(x, y)| x - y).collect()).collect()
}
