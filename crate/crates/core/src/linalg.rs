//! Dense real-symmetric eigensolver and small complex-vector helpers.
//!
//! The eigensolver is the classic two-phase method: Householder reduction to
//! tridiagonal form followed by implicit QL iterations with Wilkinson-style
//! shifts (EISPACK `tred2`/`tql2`).

use num_complex::Complex;

use crate::scalar::Real;

/// Eigen-decomposition of a real symmetric matrix.
#[derive(Clone, Debug)]
pub struct SymmetricEigen<T> {
    pub dim: usize,
    /// Ascending eigenvalues.
    pub values: Vec<T>,
    /// Eigenvector `j` occupies `vectors[j * dim..(j + 1) * dim]`.
    pub vectors: Vec<T>,
}

impl<T: Real> SymmetricEigen<T> {
    #[inline]
    pub fn vector(&self, j: usize) -> &[T] {
        &self.vectors[j * self.dim..(j + 1) * self.dim]
    }
}

/// Diagonalises the symmetric `dim × dim` row-major matrix `a`. Only the
/// lower triangle is read.
pub fn symmetric_eigen<T: Real>(dim: usize, a: &[T]) -> SymmetricEigen<T> {
    assert_eq!(a.len(), dim * dim, "matrix storage does not match dimension");
    let n = dim;
    if n == 0 {
        return SymmetricEigen { dim, values: vec![], vectors: vec![] };
    }
    let mut v = a.to_vec();
    let mut d = vec![T::zero(); n];
    let mut e = vec![T::zero(); n];
    tred2(n, &mut v, &mut d, &mut e);
    // QL rotations act on columns of V; work on the transpose so they touch
    // contiguous rows.
    let mut w = transpose(n, &v);
    tql2(n, &mut w, &mut d, &mut e);
    SymmetricEigen { dim, values: d, vectors: w }
}

fn transpose<T: Real>(n: usize, a: &[T]) -> Vec<T> {
    let mut t = vec![T::zero(); n * n];
    for r in 0..n {
        for c in 0..n {
            t[c * n + r] = a[r * n + c];
        }
    }
    t
}

fn tred2<T: Real>(n: usize, v: &mut [T], d: &mut [T], e: &mut [T]) {
    let idx = |r: usize, c: usize| r * n + c;
    for j in 0..n {
        d[j] = v[idx(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = T::zero();
        let mut h = T::zero();
        for k in 0..i {
            scale += d[k].abs();
        }
        if scale == T::zero() {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[idx(i - 1, j)];
                v[idx(i, j)] = T::zero();
                v[idx(j, i)] = T::zero();
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > T::zero() {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for j in 0..i {
                e[j] = T::zero();
            }
            for j in 0..i {
                f = d[j];
                v[idx(j, i)] = f;
                g = e[j] + v[idx(j, j)] * f;
                for k in (j + 1)..i {
                    g += v[idx(k, j)] * d[k];
                    e[k] += v[idx(k, j)] * f;
                }
                e[j] = g;
            }
            f = T::zero();
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    let upd = f * e[k] + g * d[k];
                    v[idx(k, j)] -= upd;
                }
                d[j] = v[idx(i - 1, j)];
                v[idx(i, j)] = T::zero();
            }
        }
        d[i] = h;
    }
    for i in 0..n - 1 {
        v[idx(n - 1, i)] = v[idx(i, i)];
        v[idx(i, i)] = T::one();
        let h = d[i + 1];
        if h != T::zero() {
            for k in 0..=i {
                d[k] = v[idx(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = T::zero();
                for k in 0..=i {
                    g += v[idx(k, i + 1)] * v[idx(k, j)];
                }
                for k in 0..=i {
                    let upd = g * d[k];
                    v[idx(k, j)] -= upd;
                }
            }
        }
        for k in 0..=i {
            v[idx(k, i + 1)] = T::zero();
        }
    }
    for j in 0..n {
        d[j] = v[idx(n - 1, j)];
        v[idx(n - 1, j)] = T::zero();
    }
    v[idx(n - 1, n - 1)] = T::one();
    e[0] = T::zero();
}

/// QL on the tridiagonal `(d, e)`; `w` holds the transposed accumulator so
/// eigenvector `j` ends up in row `j`.
fn tql2<T: Real>(n: usize, w: &mut [T], d: &mut [T], e: &mut [T]) {
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = T::zero();
    let mut f = T::zero();
    let mut tst1 = T::zero();
    let eps = T::epsilon();
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            loop {
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (T::lit(2.0) * e[l]);
                let mut r = p.hypot(T::one());
                if p < T::zero() {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for x in d.iter_mut().take(n).skip(l + 2) {
                    *x -= h;
                }
                f += h;

                p = d[m];
                let mut c = T::one();
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = T::zero();
                let mut s2 = T::zero();
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    let (lo, hi) = w.split_at_mut((i + 1) * n);
                    let row_i = &mut lo[i * n..];
                    let row_i1 = &mut hi[..n];
                    for k in 0..n {
                        let h = row_i1[k];
                        row_i1[k] = s * row_i[k] + c * h;
                        row_i[k] = c * row_i[k] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if !(e[l].abs() > eps * tst1) {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = T::zero();
    }
    for i in 0..n.saturating_sub(1) {
        let mut k = i;
        let mut p = d[i];
        for (j, &dj) in d.iter().enumerate().skip(i + 1) {
            if dj < p {
                k = j;
                p = dj;
            }
        }
        if k != i {
            d[k] = d[i];
            d[i] = p;
            for c in 0..n {
                w.swap(i * n + c, k * n + c);
            }
        }
    }
}

/// ⟨a|b⟩ for complex vectors.
#[inline]
pub fn inner<T: Real>(a: &[Complex<T>], b: &[Complex<T>]) -> Complex<T> {
    a.iter().zip(b).fold(Complex::new(T::zero(), T::zero()), |acc, (x, y)| acc + x.conj() * y)
}

/// ⟨v|ψ⟩ with a real bra.
#[inline]
pub fn real_inner<T: Real>(v: &[T], psi: &[Complex<T>]) -> Complex<T> {
    v.iter().zip(psi).fold(Complex::new(T::zero(), T::zero()), |acc, (&x, y)| acc + y * x)
}

#[inline]
pub fn norm_sqr<T: Real>(a: &[Complex<T>]) -> T {
    a.iter().map(|z| z.norm_sqr()).sum()
}

/// ‖a − b‖₂.
pub fn distance<T: Real>(a: &[Complex<T>], b: &[Complex<T>]) -> T {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<T>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reconstruct(eig: &SymmetricEigen<f64>) -> Vec<f64> {
        let n = eig.dim;
        let mut out = vec![0.0; n * n];
        for j in 0..n {
            let v = eig.vector(j);
            for r in 0..n {
                for c in 0..n {
                    out[r * n + c] += eig.values[j] * v[r] * v[c];
                }
            }
        }
        out
    }

    #[test]
    fn two_by_two() {
        let eig = symmetric_eigen(2, &[0.0f64, 0.5, 0.5, 0.0]);
        assert!((eig.values[0] + 0.5).abs() < 1e-15);
        assert!((eig.values[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn diagonal_is_sorted() {
        let eig = symmetric_eigen(3, &[3.0f64, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 2.0]);
        assert_eq!(eig.values, vec![-1.0, 2.0, 3.0]);
        assert!((eig.vector(0)[1].abs() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn random_reconstruction() {
        let n = 17;
        let mut a = vec![0.0; n * n];
        let mut x = 0.3f64;
        for r in 0..n {
            for c in 0..=r {
                x = (x * 3.7 + 0.11).fract();
                a[r * n + c] = x - 0.5;
                a[c * n + r] = x - 0.5;
            }
        }
        let eig = symmetric_eigen(n, &a);
        let back = reconstruct(&eig);
        let err = a.iter().zip(&back).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(err < 1e-13, "{err}");
        for w in eig.values.windows(2) {
            assert!(w[0] <= w[1]);
        }
    }

    #[test]
    fn single_element() {
        let eig = symmetric_eigen(1, &[4.0f32]);
        assert_eq!(eig.values, vec![4.0]);
        assert_eq!(eig.vectors, vec![1.0]);
    }
}
