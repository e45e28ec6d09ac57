//! Small dense/sparse helpers shared by the solvers.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Relative singular-value cutoff used by every pseudo-inverse in the crate.
pub const PINV_RCOND: f64 = 1e-10;

/// Sparse row: parallel column indices and values.
pub type Row = Vec<(usize, f64)>;

/// Coordinate-format sparse matrix. Duplicate entries are summed on use.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Triplets {
    pub nrows: usize,
    pub ncols: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl Triplets {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Self { nrows, ncols, entries: Vec::new() }
    }

    pub fn push(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.nrows && c < self.ncols);
        if v != 0.0 {
            self.entries.push((r, c, v));
        }
    }

    /// Appends `other` with its origin shifted to `(r0, c0)`.
    pub fn push_block(&mut self, r0: usize, c0: usize, other: &Triplets, scale: f64) {
        for &(r, c, v) in &other.entries {
            self.push(r0 + r, c0 + c, scale * v);
        }
    }

    pub fn transpose(&self) -> Triplets {
        Triplets {
            nrows: self.ncols,
            ncols: self.nrows,
            entries: self.entries.iter().map(|&(r, c, v)| (c, r, v)).collect(),
        }
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.nrows, self.ncols);
        for &(r, c, v) in &self.entries {
            m[(r, c)] += v;
        }
        m
    }

    pub fn mul_vec(&self, x: &Vector) -> Vector {
        let mut out = Vector::zeros(self.nrows);
        for &(r, c, v) in &self.entries {
            out[r] += v * x[c];
        }
        out
    }

    pub fn tr_mul_vec(&self, x: &Vector) -> Vector {
        let mut out = Vector::zeros(self.ncols);
        for &(r, c, v) in &self.entries {
            out[c] += v * x[r];
        }
        out
    }

    /// Merges duplicates and drops exact zeros; entries end up sorted by (row, col).
    pub fn compress(&mut self) {
        self.entries.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut out: Vec<(usize, usize, f64)> = Vec::with_capacity(self.entries.len());
        for &(r, c, v) in &self.entries {
            match out.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => out.push((r, c, v)),
            }
        }
        out.retain(|e| e.2 != 0.0);
        self.entries = out;
    }

    /// Row-major adjacency lists after compression.
    pub fn rows(&self) -> Vec<Row> {
        let mut t = self.clone();
        t.compress();
        let mut rows = vec![Vec::new(); self.nrows];
        for (r, c, v) in t.entries {
            rows[r].push((c, v));
        }
        rows
    }

    pub fn max_abs_diff(&self, other: &Triplets) -> f64 {
        (self.to_dense() - other.to_dense()).abs().max()
    }
}

pub fn row_dot(row: &Row, x: &Vector) -> f64 {
    row.iter().map(|&(j, a)| a * x[j]).sum()
}

pub fn norm_inf(v: &Vector) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Thin SVD `a = U diag(s) Vᵀ` through faer; nalgebra's bidiagonal SVD loses
/// accuracy on some tall sparse-pattern matrices.
fn thin_svd(a: &Matrix) -> (Matrix, Vec<f64>, Matrix) {
    let fa = faer::Mat::<f64>::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)]);
    match fa.thin_svd() {
        Ok(svd) => {
            let (u, v) = (svd.U(), svd.V());
            let sv = svd.S().column_vector();
            let k = sv.nrows();
            (
                Matrix::from_fn(a.nrows(), k, |i, j| u[(i, j)]),
                (0..k).map(|i| sv[i]).collect(),
                Matrix::from_fn(a.ncols(), k, |i, j| v[(i, j)]),
            )
        }
        Err(_) => {
            let svd = SVD::new(a.clone(), true, true);
            let u = svd.u.expect("u requested");
            let v = svd.v_t.expect("v_t requested").transpose();
            (u, svd.singular_values.iter().cloned().collect(), v)
        }
    }
}

/// SVD pseudo-inverse with the crate-wide relative cutoff.
pub fn pinv(a: &Matrix) -> Matrix {
    pinv_solve(a, &Matrix::identity(a.nrows(), a.nrows()))
}

/// Minimum-norm least-squares solution `pinv(a) * b` computed through one SVD.
pub fn pinv_solve(a: &Matrix, b: &Matrix) -> Matrix {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Matrix::zeros(a.ncols(), b.ncols());
    }
    let (u, sv, v) = thin_svd(a);
    let smax = sv.iter().cloned().fold(0.0_f64, f64::max);
    let cut = PINV_RCOND * smax;
    let mut utb = u.transpose() * b;
    for (k, &s) in sv.iter().enumerate() {
        let inv = if s > cut && s > 0.0 { 1.0 / s } else { 0.0 };
        utb.row_mut(k).scale_mut(inv);
    }
    v * utb
}

/// Pseudo-inverse solve for a symmetric matrix via its eigendecomposition.
/// Singular values of a symmetric matrix are the absolute eigenvalues, so this
/// equals `pinv_solve` up to rounding.
pub fn pinv_solve_symmetric(a: &Matrix, b: &Matrix) -> Matrix {
    let n = a.nrows();
    if n == 0 {
        return Matrix::zeros(0, b.ncols());
    }
    let eig = SymmetricEigen::new(a.clone());
    let emax = eig.eigenvalues.iter().fold(0.0_f64, |m, e| m.max(e.abs()));
    let cut = PINV_RCOND * emax;
    let q = &eig.eigenvectors;
    let mut qtb = q.transpose() * b;
    for (k, &e) in eig.eigenvalues.iter().enumerate() {
        let inv = if e.abs() > cut && e != 0.0 { 1.0 / e } else { 0.0 };
        qtb.row_mut(k).scale_mut(inv);
    }
    q * qtb
}

/// Solves `[H Aᵀ; A 0] [u; v] = [f; g]` by block elimination.
///
/// `H` is split into the connected components of its sparsity graph and each
/// diagonal block is factored densely. The multipliers then solve the small
/// dense system `(A H⁻¹ Aᵀ) v = A H⁻¹ f − g` by pseudo-inverse, so dependent
/// rows of `A` are tolerated. Returns `None` when a block of `H` is singular
/// or the assembled solution misses the system by more than `1e-8` relative.
pub fn solve_saddle(h: &Triplets, a: &Triplets, f: &Matrix, g: &Matrix) -> Option<(Matrix, Matrix)> {
    let (n, m, nc) = (h.nrows, a.nrows, f.ncols());
    debug_assert!(h.ncols == n && a.ncols == n && f.nrows() == n && g.nrows() == m && g.ncols() == nc);
    let mut parent: Vec<usize> = (0..n).collect();
    fn root(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for &(r, c, _) in &h.entries {
        let (rr, rc) = (root(&mut parent, r), root(&mut parent, c));
        if rr != rc {
            parent[rr.max(rc)] = rr.min(rc);
        }
    }
    let mut comp_of = vec![usize::MAX; n];
    let mut comps: Vec<Vec<usize>> = Vec::new();
    let mut local = vec![0usize; n];
    for j in 0..n {
        let r = root(&mut parent, j);
        if comp_of[r] == usize::MAX {
            comp_of[r] = comps.len();
            comps.push(Vec::new());
        }
        let c = comp_of[r];
        comp_of[j] = c;
        local[j] = comps[c].len();
        comps[c].push(j);
    }
    let mut blocks: Vec<Matrix> = comps.iter().map(|c| Matrix::zeros(c.len(), c.len())).collect();
    for &(r, c, v) in &h.entries {
        blocks[comp_of[r]][(local[r], local[c])] += v;
    }
    let mut lus = Vec::with_capacity(blocks.len());
    for b in blocks {
        let lu = b.lu();
        if !lu.is_invertible() {
            return None;
        }
        lus.push(lu);
    }
    let h_solve = |rhs: &Matrix| -> Option<Matrix> {
        let mut out = Matrix::zeros(n, rhs.ncols());
        for (c, idx) in comps.iter().enumerate() {
            let sub = Matrix::from_fn(idx.len(), rhs.ncols(), |i, k| rhs[(idx[i], k)]);
            let sol = lus[c].solve(&sub)?;
            for (i, &j) in idx.iter().enumerate() {
                out.row_mut(j).copy_from(&sol.row(i));
            }
        }
        Some(out)
    };
    let ad = a.to_dense();
    let hf = h_solve(f)?;
    let v = if m == 0 {
        Matrix::zeros(0, nc)
    } else {
        let hat = h_solve(&ad.transpose())?;
        let schur = &ad * &hat;
        pinv_solve(&schur, &(&ad * &hf - g))
    };
    let u = if m == 0 { hf } else { h_solve(&(f - ad.transpose() * &v))? };
    let mut r1 = f - ad.transpose() * &v;
    for &(r, c, val) in &h.entries {
        for k in 0..nc {
            r1[(r, k)] -= val * u[(c, k)];
        }
    }
    let r2 = g - &ad * &u;
    let scale = 1.0 + f.amax().max(g.amax());
    if !(r1.amax().max(r2.amax()) <= 1e-8 * scale) {
        return None;
    }
    Some((u, v))
}

/// Power iteration estimate of the spectral norm of a sparse operator.
pub fn spectral_norm_estimate(a: &Triplets, iters: usize) -> f64 {
    if a.entries.is_empty() {
        return 0.0;
    }
    let mut v = Vector::from_element(a.ncols, 1.0 / (a.ncols as f64).sqrt());
    let mut est = 0.0;
    for _ in 0..iters {
        let w = a.tr_mul_vec(&a.mul_vec(&v));
        let nw = w.norm();
        if nw == 0.0 {
            return 0.0;
        }
        est = nw.sqrt();
        v = w / nw;
    }
    est
}
