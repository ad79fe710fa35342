//! Dense and tridiagonal linear-algebra kernels.
//!
//! The symmetric tridiagonal eigensolver is an implicit-shift QL iteration
//! (Wilkinson shift, EISPACK lineage) with eigenvector accumulation and
//! deflation on negligible off-diagonals. Exact zero off-diagonals split the
//! problem into independent blocks before iterating. Dense symmetric
//! matrices are reduced to tridiagonal form by Householder reflections
//! first. A partial-pivot LU with iterative refinement and a Hager 1-norm
//! condition estimate backs the dense solves.

use crate::error::{Error, Result};

const MAX_QL_ITERS: usize = 60;

/// Column-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub n_rows: usize,
    pub n_cols: usize,
    pub data: Vec<f64>,
}

impl Dense {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Dense { n_rows, n_cols, data: vec![0.0; n_rows * n_cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Dense::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    #[inline]
    pub fn col(&self, j: usize) -> &[f64] {
        &self.data[j * self.n_rows..(j + 1) * self.n_rows]
    }

    #[inline]
    pub fn col_mut(&mut self, j: usize) -> &mut [f64] {
        &mut self.data[j * self.n_rows..(j + 1) * self.n_rows]
    }

    pub fn matmul(&self, rhs: &Dense) -> Dense {
        assert_eq!(self.n_cols, rhs.n_rows);
        let mut out = Dense::zeros(self.n_rows, rhs.n_cols);
        for j in 0..rhs.n_cols {
            for k in 0..self.n_cols {
                let r = rhs[(k, j)];
                if r == 0.0 {
                    continue;
                }
                let a = self.col(k);
                let o = out.col_mut(j);
                for i in 0..self.n_rows {
                    o[i] += a[i] * r;
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(self.n_cols, x.len());
        let mut y = vec![0.0; self.n_rows];
        for j in 0..self.n_cols {
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            let a = self.col(j);
            for i in 0..self.n_rows {
                y[i] += a[i] * xj;
            }
        }
        y
    }

    pub fn one_norm(&self) -> f64 {
        (0..self.n_cols)
            .map(|j| self.col(j).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

impl std::ops::Index<(usize, usize)> for Dense {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[j * self.n_rows + i]
    }
}

impl std::ops::IndexMut<(usize, usize)> for Dense {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[j * self.n_rows + i]
    }
}

#[inline]
fn hypot(a: f64, b: f64) -> f64 {
    a.hypot(b)
}

/// Implicit-shift QL sweep on one unreduced tridiagonal block.
///
/// `d` holds the diagonal, `e` the sub-diagonal (`e[i]` couples `i` and
/// `i+1`, length `d.len() - 1`). If `z` is given it must be a square
/// column-major block of width `d.len()`; the accumulated rotations are
/// applied to its columns.
fn ql_implicit(d: &mut [f64], e: &mut [f64], mut z: Option<&mut [f64]>) -> Result<()> {
    let n = d.len();
    if n <= 1 {
        return Ok(());
    }
    // internal convention: ee[i] couples i and i+1, ee[n-1] is scratch
    let mut ee = vec![0.0; n];
    ee[..n - 1].copy_from_slice(e);

    for l in 0..n {
        let mut iter = 0;
        loop {
            // deflation scan: first negligible coupling at or after l
            let mut m = l;
            while m < n - 1 {
                let dd = d[m].abs() + d[m + 1].abs();
                if ee[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > MAX_QL_ITERS {
                return Err(Error::NonConvergence { lo: l, hi: m + 1 });
            }
            // Wilkinson-style shift from the leading 2x2
            let mut g = (d[l + 1] - d[l]) / (2.0 * ee[l]);
            let mut r = hypot(g, 1.0);
            g = d[m] - d[l] + ee[l] / (g + r.copysign(if g == 0.0 { 1.0 } else { g }));
            let mut s = 1.0;
            let mut c = 1.0;
            let mut p = 0.0;
            let mut underflow_break = false;
            for i in (l..m).rev() {
                let mut f = s * ee[i];
                let b = c * ee[i];
                r = hypot(f, g);
                ee[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    ee[m] = 0.0;
                    underflow_break = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                if let Some(zz) = z.as_deref_mut() {
                    let (lo, hi) = zz.split_at_mut((i + 1) * n);
                    let zi = &mut lo[i * n..(i + 1) * n];
                    let zi1 = &mut hi[..n];
                    for k in 0..n {
                        f = zi1[k];
                        zi1[k] = s * zi[k] + c * f;
                        zi[k] = c * zi[k] - s * f;
                    }
                }
            }
            if underflow_break {
                continue;
            }
            d[l] -= p;
            ee[l] = g;
            ee[m] = 0.0;
        }
    }
    Ok(())
}

/// Eigendecomposition of a symmetric tridiagonal matrix, block-split on
/// exact zero off-diagonals.
///
/// Returns eigenvalues sorted descending; when `want_vectors` is set, a
/// column-major `n x n` matrix of matching orthonormal eigenvectors, each
/// sign-normalized so its first significant entry is positive.
pub fn sym_tridiag_eig(
    diag: &[f64],
    offdiag: &[f64],
    want_vectors: bool,
) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
    let n = diag.len();
    assert_eq!(offdiag.len(), n.saturating_sub(1));
    let mut values = vec![0.0; n];
    let mut vectors = want_vectors.then(|| vec![0.0; n * n]);

    let mut lo = 0;
    while lo < n {
        let mut hi = lo;
        while hi < n - 1 && offdiag[hi] != 0.0 {
            hi += 1;
        }
        // block covers sites lo..=hi
        let bn = hi - lo + 1;
        let mut d: Vec<f64> = diag[lo..=hi].to_vec();
        let mut e: Vec<f64> = offdiag[lo..hi].to_vec();
        if let Some(full) = vectors.as_mut() {
            let mut zb = vec![0.0; bn * bn];
            for i in 0..bn {
                zb[i * bn + i] = 1.0;
            }
            ql_implicit(&mut d, &mut e, Some(&mut zb)).map_err(|_| Error::NonConvergence {
                lo,
                hi: hi + 1,
            })?;
            for (jb, &val) in d.iter().enumerate() {
                values[lo + jb] = val;
                let dst = &mut full[(lo + jb) * n..(lo + jb + 1) * n];
                dst[lo..=hi].copy_from_slice(&zb[jb * bn..(jb + 1) * bn]);
            }
        } else {
            ql_implicit(&mut d, &mut e, None).map_err(|_| Error::NonConvergence { lo, hi: hi + 1 })?;
            values[lo..=hi].copy_from_slice(&d);
        }
        lo = hi + 1;
    }

    sort_descending(n, &mut values, vectors.as_deref_mut());
    if let Some(v) = vectors.as_deref_mut() {
        sign_normalize_columns(n, v);
    }
    Ok((values, vectors))
}

/// Eigendecomposition of a dense symmetric matrix (Householder reduction to
/// tridiagonal, then the QL iteration above).
pub fn sym_dense_eig(a: &Dense, want_vectors: bool) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
    assert_eq!(a.n_rows, a.n_cols);
    let n = a.n_rows;
    let mut z = a.clone();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tred2(&mut z, &mut d, &mut e, want_vectors);
    // shift sub-diagonal to the e[i] ~ (i, i+1) convention
    let mut esub = vec![0.0; n.saturating_sub(1)];
    for i in 1..n {
        esub[i - 1] = e[i];
    }
    let mut vectors = want_vectors.then(|| z.data);
    ql_implicit(&mut d, &mut esub, vectors.as_deref_mut())?;
    sort_descending(n, &mut d, vectors.as_deref_mut());
    if let Some(v) = vectors.as_deref_mut() {
        sign_normalize_columns(n, v);
    }
    Ok((d, vectors))
}

/// Householder reduction of a symmetric matrix to tridiagonal form
/// (EISPACK tred2). On exit `d` is the diagonal, `e[1..]` the sub-diagonal,
/// and `z` holds the accumulated orthogonal transformation when
/// `accumulate` is set.
fn tred2(z: &mut Dense, d: &mut [f64], e: &mut [f64], accumulate: bool) {
    let n = z.n_rows;
    for i in (1..n).rev() {
        let l = i - 1;
        let mut h = 0.0;
        let mut scale = 0.0;
        if l > 0 {
            for k in 0..i {
                scale += z[(i, k)].abs();
            }
            if scale == 0.0 {
                e[i] = z[(i, l)];
            } else {
                for k in 0..i {
                    let v = z[(i, k)] / scale;
                    z[(i, k)] = v;
                    h += v * v;
                }
                let f = z[(i, l)];
                let g = if f >= 0.0 { -h.sqrt() } else { h.sqrt() };
                e[i] = scale * g;
                h -= f * g;
                z[(i, l)] = f - g;
                let mut fsum = 0.0;
                for j in 0..i {
                    if accumulate {
                        z[(j, i)] = z[(i, j)] / h;
                    }
                    let mut g = 0.0;
                    for k in 0..=j {
                        g += z[(j, k)] * z[(i, k)];
                    }
                    for k in j + 1..i {
                        g += z[(k, j)] * z[(i, k)];
                    }
                    e[j] = g / h;
                    fsum += e[j] * z[(i, j)];
                }
                let hh = fsum / (h + h);
                for j in 0..i {
                    let f = z[(i, j)];
                    let g = e[j] - hh * f;
                    e[j] = g;
                    for k in 0..=j {
                        let upd = f * e[k] + g * z[(i, k)];
                        z[(j, k)] -= upd;
                    }
                }
            }
        } else {
            e[i] = z[(i, l)];
        }
        d[i] = h;
    }
    if accumulate {
        d[0] = 0.0;
    }
    e[0] = 0.0;
    for i in 0..n {
        if accumulate {
            if d[i] != 0.0 {
                for j in 0..i {
                    let mut g = 0.0;
                    for k in 0..i {
                        g += z[(i, k)] * z[(k, j)];
                    }
                    for k in 0..i {
                        let upd = g * z[(k, i)];
                        z[(k, j)] -= upd;
                    }
                }
            }
            d[i] = z[(i, i)];
            z[(i, i)] = 1.0;
            for j in 0..i {
                z[(j, i)] = 0.0;
                z[(i, j)] = 0.0;
            }
        } else {
            d[i] = z[(i, i)];
        }
    }
}

fn sort_descending(n: usize, values: &mut [f64], vectors: Option<&mut [f64]>) {
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| values[j].partial_cmp(&values[i]).unwrap());
    let sorted: Vec<f64> = order.iter().map(|&i| values[i]).collect();
    values.copy_from_slice(&sorted);
    if let Some(v) = vectors {
        let mut out = vec![0.0; n * n];
        for (jnew, &jold) in order.iter().enumerate() {
            out[jnew * n..(jnew + 1) * n].copy_from_slice(&v[jold * n..(jold + 1) * n]);
        }
        v.copy_from_slice(&out);
    }
}

/// Flip column signs so the first entry exceeding `1e-8 * max|entry|` is
/// positive.
fn sign_normalize_columns(n: usize, vectors: &mut [f64]) {
    for j in 0..n {
        let col = &mut vectors[j * n..(j + 1) * n];
        let maxabs = col.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        if maxabs == 0.0 {
            continue;
        }
        let tol = 1e-8 * maxabs;
        if let Some(&lead) = col.iter().find(|v| v.abs() > tol) {
            if lead < 0.0 {
                col.iter_mut().for_each(|v| *v = -*v);
            }
        }
    }
}

/// LU factorization with partial pivoting.
pub struct LuFactors {
    n: usize,
    lu: Vec<f64>, // row-major
    piv: Vec<usize>,
}

impl LuFactors {
    pub fn factor(a: &Dense) -> Result<LuFactors> {
        assert_eq!(a.n_rows, a.n_cols);
        let n = a.n_rows;
        let mut lu = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                lu[i * n + j] = a[(i, j)];
            }
        }
        let mut piv = vec![0usize; n];
        for k in 0..n {
            let mut p = k;
            let mut best = lu[k * n + k].abs();
            for i in k + 1..n {
                let v = lu[i * n + k].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 {
                return Err(Error::IllConditioned { cond: f64::INFINITY });
            }
            piv[k] = p;
            if p != k {
                for j in 0..n {
                    lu.swap(k * n + j, p * n + j);
                }
            }
            let pivot = lu[k * n + k];
            for i in k + 1..n {
                let m = lu[i * n + k] / pivot;
                lu[i * n + k] = m;
                if m != 0.0 {
                    for j in k + 1..n {
                        lu[i * n + j] -= m * lu[k * n + j];
                    }
                }
            }
        }
        Ok(LuFactors { n, lu, piv })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = b.to_vec();
        for k in 0..n {
            x.swap(k, self.piv[k]);
            let xk = x[k];
            if xk != 0.0 {
                for i in k + 1..n {
                    x[i] -= self.lu[i * n + k] * xk;
                }
            }
        }
        for k in (0..n).rev() {
            x[k] /= self.lu[k * n + k];
            let xk = x[k];
            if xk != 0.0 {
                for i in 0..k {
                    x[i] -= self.lu[i * n + k] * xk;
                }
            }
        }
        x
    }

    /// Solve `A^T x = b` using the same factors.
    pub fn solve_transposed(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut x = b.to_vec();
        // A^T = (P^T L U)^T = U^T L^T P, so forward with U^T, back with L^T
        for k in 0..n {
            let mut s = x[k];
            for i in 0..k {
                s -= self.lu[i * n + k] * x[i];
            }
            x[k] = s / self.lu[k * n + k];
        }
        for k in (0..n).rev() {
            let mut s = x[k];
            for i in k + 1..n {
                s -= self.lu[i * n + k] * x[i];
            }
            x[k] = s;
        }
        for k in (0..n).rev() {
            x.swap(k, self.piv[k]);
        }
        x
    }

    /// One pass of iterative refinement for `A x = b`.
    pub fn refine(&self, a: &Dense, b: &[f64], x: &mut [f64]) {
        let ax = a.matvec(x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bi, axi)| bi - axi).collect();
        let dx = self.solve(&r);
        for (xi, di) in x.iter_mut().zip(&dx) {
            *xi += di;
        }
    }

    /// Hager estimate of `||A^{-1}||_1`.
    pub fn inv_one_norm_estimate(&self) -> f64 {
        let n = self.n;
        let mut x = vec![1.0 / n as f64; n];
        let mut est = 0.0;
        for _ in 0..6 {
            let y = self.solve(&x);
            est = y.iter().map(|v| v.abs()).sum::<f64>();
            let xi: Vec<f64> = y.iter().map(|v| if *v >= 0.0 { 1.0 } else { -1.0 }).collect();
            let z = self.solve_transposed(&xi);
            let (jmax, zmax) = z
                .iter()
                .enumerate()
                .map(|(j, v)| (j, v.abs()))
                .fold((0, 0.0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
            let ztx: f64 = z.iter().zip(&x).map(|(a, b)| a * b).sum();
            if zmax <= ztx.abs() {
                break;
            }
            x = vec![0.0; n];
            x[jmax] = 1.0;
        }
        est
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tridiag_dense(d: &[f64], e: &[f64]) -> Dense {
        let n = d.len();
        let mut m = Dense::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = d[i];
            if i + 1 < n {
                m[(i, i + 1)] = e[i];
                m[(i + 1, i)] = e[i];
            }
        }
        m
    }

    #[test]
    fn two_by_two_exchange_matrix() {
        let (vals, vecs) = sym_tridiag_eig(&[0.0, 0.0], &[1.0], true).unwrap();
        assert!((vals[0] - 1.0).abs() < 1e-14);
        assert!((vals[1] + 1.0).abs() < 1e-14);
        let v = vecs.unwrap();
        let s = 0.5f64.sqrt();
        assert!((v[0] - s).abs() < 1e-14 && (v[1] - s).abs() < 1e-14);
    }

    #[test]
    fn three_site_chain_spectrum() {
        // b = 0, a = (1, 1): roots of x^3 - 2x
        let (vals, _) = sym_tridiag_eig(&[0.0; 3], &[1.0, 1.0], true).unwrap();
        let s2 = 2.0f64.sqrt();
        assert!((vals[0] - s2).abs() < 1e-14);
        assert!(vals[1].abs() < 1e-14);
        assert!((vals[2] + s2).abs() < 1e-14);
    }

    #[test]
    fn block_split_keeps_basis_vectors() {
        // zero coupling between sites 1 and 2 -> two independent blocks
        let (vals, vecs) = sym_tridiag_eig(&[2.0, -1.0, 5.0], &[0.0, 0.0], true).unwrap();
        assert_eq!(vals, vec![5.0, 2.0, -1.0]);
        let v = vecs.unwrap();
        assert_eq!(&v[0..3], &[0.0, 0.0, 1.0]);
        assert_eq!(&v[3..6], &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn residual_and_orthogonality_on_random_tridiagonal() {
        use rand::Rng;
        let mut rng = crate::rng::RngStream::new(11, 0).rng();
        let n = 48;
        let d: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
        let e: Vec<f64> = (0..n - 1).map(|_| rng.random::<f64>() + 0.05).collect();
        let (vals, vecs) = sym_tridiag_eig(&d, &e, true).unwrap();
        let v = vecs.unwrap();
        let m = tridiag_dense(&d, &e);
        for k in 0..n {
            let u = &v[k * n..(k + 1) * n];
            let mu = m.matvec(u);
            for i in 0..n {
                assert!((mu[i] - vals[k] * u[i]).abs() < 1e-11 * vals[k].abs().max(1.0));
            }
            for k2 in 0..n {
                let dot: f64 =
                    u.iter().zip(&v[k2 * n..(k2 + 1) * n]).map(|(a, b)| a * b).sum();
                let target = if k2 == k { 1.0 } else { 0.0 };
                assert!((dot - target).abs() < 1e-12);
            }
        }
        // descending order
        for k in 1..n {
            assert!(vals[k - 1] >= vals[k]);
        }
    }

    #[test]
    fn dense_matches_tridiagonal_solver() {
        use rand::Rng;
        let mut rng = crate::rng::RngStream::new(3, 1).rng();
        let n = 20;
        let d: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let e: Vec<f64> = (0..n - 1).map(|_| rng.random::<f64>() + 0.1).collect();
        let m = tridiag_dense(&d, &e);
        let (v1, _) = sym_tridiag_eig(&d, &e, false).unwrap();
        let (v2, vecs2) = sym_dense_eig(&m, true).unwrap();
        for k in 0..n {
            assert!((v1[k] - v2[k]).abs() < 1e-11);
        }
        let z = vecs2.unwrap();
        for k in 0..n {
            let u = &z[k * n..(k + 1) * n];
            let mu = m.matvec(u);
            for i in 0..n {
                assert!((mu[i] - v2[k] * u[i]).abs() < 1e-11);
            }
        }
    }

    #[test]
    fn lu_solves_and_estimates_condition() {
        use rand::Rng;
        let mut rng = crate::rng::RngStream::new(5, 2).rng();
        let n = 30;
        let mut a = Dense::zeros(n, n);
        for j in 0..n {
            for i in 0..n {
                a[(i, j)] = rng.random::<f64>() - 0.5;
            }
            a[(j, j)] += 4.0; // diagonally dominant-ish
        }
        let xs: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let b = a.matvec(&xs);
        let f = LuFactors::factor(&a).unwrap();
        let mut x = f.solve(&b);
        f.refine(&a, &b, &mut x);
        for i in 0..n {
            assert!((x[i] - xs[i]).abs() < 1e-12);
        }
        let xt = f.solve_transposed(&b);
        // check A^T xt = b
        let mut atx = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                atx[j] += a[(i, j)] * xt[i];
            }
        }
        for i in 0..n {
            assert!((atx[i] - b[i]).abs() < 1e-9);
        }
        let cond = a.one_norm() * f.inv_one_norm_estimate();
        assert!(cond > 1.0 && cond < 1e4);
    }
}
