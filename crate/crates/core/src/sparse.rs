//! Compressed sparse row matrices and a preconditioned BiCGStab solver.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Rows below this count are processed sequentially.
const PAR_MIN_ROWS: usize = 512;

#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Build from per-row `(column, value)` lists. Duplicate columns are summed,
    /// columns are sorted and explicit zeros are kept so the pattern is stable.
    pub fn from_rows(n: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        assert_eq!(rows.len(), n, "row count");
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            let start = cols.len();
            for (c, v) in row {
                assert!(c < n, "column {c} out of range");
                if cols.len() > start && *cols.last().unwrap() == c {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(c);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        CsrMatrix { n, row_ptr, cols, vals }
    }

    pub fn identity(n: usize) -> Self {
        CsrMatrix::from_rows(n, (0..n).map(|i| vec![(i, 1.0)]).collect())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// Dense row-major copy, for small test systems.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for (i, row) in d.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] += v;
            }
        }
        d
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        let kernel = |(i, yi): (usize, &mut f64)| {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.vals[k] * x[self.cols[k]];
            }
            *yi = s;
        };
        if self.n >= PAR_MIN_ROWS {
            y.par_iter_mut().enumerate().with_min_len(256).for_each(kernel);
        } else {
            y.iter_mut().enumerate().for_each(kernel);
        }
    }

    pub fn residual(&self, x: &[f64], b: &[f64]) -> Vec<f64> {
        let mut r = vec![0.0; self.n];
        self.matvec(x, &mut r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        r
    }
}

/// How the unknown vector maps onto grid fields: `components` blocks of `nodes` entries.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Layout {
    pub components: usize,
    pub nodes: usize,
}

impl Layout {
    #[inline]
    pub fn index(&self, component: usize, node: usize) -> usize {
        component * self.nodes + node
    }

    pub fn len(&self) -> usize {
        self.components * self.nodes
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug)]
pub struct SparseSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    pub layout: Layout,
    /// Starting guess for the iterative solver.
    pub guess: Option<Vec<f64>>,
}

impl SparseSystem {
    pub fn relative_residual(&self, x: &[f64]) -> f64 {
        let r = self.matrix.residual(x, &self.rhs);
        let nb = norm(&self.rhs);
        if nb == 0.0 {
            norm(&r)
        } else {
            norm(&r) / nb
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveStats {
    pub iterations: usize,
    pub residual: f64,
    /// True when the ILU(0) fallback was needed.
    pub fallback: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

trait Preconditioner {
    fn apply(&self, r: &[f64], z: &mut [f64]);
}

struct Jacobi {
    inv_diag: Vec<f64>,
}

impl Preconditioner for Jacobi {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        for ((zi, ri), d) in z.iter_mut().zip(r).zip(&self.inv_diag) {
            *zi = ri * d;
        }
    }
}

/// Incomplete LU factorisation with the sparsity pattern of `A`.
struct Ilu0 {
    lu: CsrMatrix,
    diag_pos: Vec<usize>,
}

impl Ilu0 {
    fn new(a: &CsrMatrix) -> Option<Self> {
        let mut lu = a.clone();
        let n = lu.n;
        let mut diag_pos = vec![usize::MAX; n];
        for i in 0..n {
            for k in lu.row_ptr[i]..lu.row_ptr[i + 1] {
                if lu.cols[k] == i {
                    diag_pos[i] = k;
                }
            }
            if diag_pos[i] == usize::MAX {
                return None;
            }
        }
        let mut pos = vec![usize::MAX; n];
        for i in 0..n {
            let (start, end) = (lu.row_ptr[i], lu.row_ptr[i + 1]);
            for k in start..end {
                pos[lu.cols[k]] = k;
            }
            for k in start..end {
                let j = lu.cols[k];
                if j >= i {
                    break;
                }
                let pivot = lu.vals[diag_pos[j]];
                if pivot == 0.0 {
                    return None;
                }
                let factor = lu.vals[k] / pivot;
                lu.vals[k] = factor;
                for kk in diag_pos[j] + 1..lu.row_ptr[j + 1] {
                    let c = lu.cols[kk];
                    if pos[c] != usize::MAX && pos[c] >= start && pos[c] < end {
                        lu.vals[pos[c]] -= factor * lu.vals[kk];
                    }
                }
            }
            for k in start..end {
                pos[lu.cols[k]] = usize::MAX;
            }
            if lu.vals[diag_pos[i]] == 0.0 || !lu.vals[diag_pos[i]].is_finite() {
                return None;
            }
        }
        Some(Ilu0 { lu, diag_pos })
    }
}

impl Preconditioner for Ilu0 {
    fn apply(&self, r: &[f64], z: &mut [f64]) {
        let lu = &self.lu;
        for i in 0..lu.n {
            let mut s = r[i];
            for k in lu.row_ptr[i]..self.diag_pos[i] {
                s -= lu.vals[k] * z[lu.cols[k]];
            }
            z[i] = s;
        }
        for i in (0..lu.n).rev() {
            let mut s = z[i];
            for k in self.diag_pos[i] + 1..lu.row_ptr[i + 1] {
                s -= lu.vals[k] * z[lu.cols[k]];
            }
            z[i] = s / lu.vals[self.diag_pos[i]];
        }
    }
}

enum Outcome {
    Converged(usize, f64),
    Stalled(usize),
}

fn bicgstab<P: Preconditioner>(a: &CsrMatrix, b: &[f64], x: &mut [f64], pc: &P, tol: f64, max_iter: usize) -> Outcome {
    let n = a.n;
    let nb = norm(b);
    let mut r = a.residual(x, b);
    let res = norm(&r) / nb;
    if res <= tol {
        return Outcome::Converged(0, res);
    }
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut t = vec![0.0; n];
    for it in 1..=max_iter {
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 || omega == 0.0 || !rho_new.is_finite() {
            return Outcome::Stalled(it);
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        pc.apply(&p, &mut y);
        a.matvec(&y, &mut v);
        let denom = dot(&r_hat, &v);
        if denom == 0.0 || !denom.is_finite() {
            return Outcome::Stalled(it);
        }
        alpha = rho / denom;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm(&s) / nb <= tol {
            for i in 0..n {
                x[i] += alpha * y[i];
            }
            let res = norm(&a.residual(x, b)) / nb;
            if res <= tol {
                return Outcome::Converged(it, res);
            }
            r = a.residual(x, b);
            continue;
        }
        pc.apply(&s, &mut z);
        a.matvec(&z, &mut t);
        let tt = dot(&t, &t);
        if tt == 0.0 {
            return Outcome::Stalled(it);
        }
        omega = dot(&t, &s) / tt;
        for i in 0..n {
            x[i] += alpha * y[i] + omega * z[i];
            r[i] = s[i] - omega * t[i];
        }
        let res = norm(&r) / nb;
        if !res.is_finite() {
            return Outcome::Stalled(it);
        }
        if res <= tol {
            // guard against drift of the recursive residual
            let true_res = norm(&a.residual(x, b)) / nb;
            if true_res <= tol {
                return Outcome::Converged(it, true_res);
            }
            r = a.residual(x, b);
        }
    }
    Outcome::Stalled(max_iter)
}

/// Solve `A x = b` to relative residual `tol`.
///
/// BiCGStab with Jacobi preconditioning first; on breakdown or stagnation the
/// iteration restarts from the best iterate with an ILU(0) preconditioner.
pub fn solve_sparse(system: &SparseSystem, tol: f64, max_iter: usize) -> Result<(Vec<f64>, SolveStats)> {
    let a = &system.matrix;
    let b = &system.rhs;
    let n = a.n;
    if b.len() != n || system.layout.len() != n {
        return Err(Error::ShapeMismatch(format!("system of size {n} with rhs {} and layout {}", b.len(), system.layout.len())));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("solver tolerance must be > 0, got {tol}")));
    }
    let diag = a.diagonal();
    for i in 0..n {
        if a.row(i).all(|(_, v)| v == 0.0) || diag[i] == 0.0 {
            return Err(Error::LinearSolveDiverged { iterations: 0, residual: f64::INFINITY });
        }
    }
    if norm(b) == 0.0 {
        return Ok((vec![0.0; n], SolveStats { iterations: 0, residual: 0.0, fallback: false }));
    }
    let mut x = system.guess.clone().unwrap_or_else(|| vec![0.0; n]);
    if x.len() != n || x.iter().any(|v| !v.is_finite()) {
        x = vec![0.0; n];
    }
    let jacobi = Jacobi { inv_diag: diag.iter().map(|d| 1.0 / d).collect() };
    let first = bicgstab(a, b, &mut x, &jacobi, tol, max_iter);
    let used = match first {
        Outcome::Converged(it, res) => return Ok((x, SolveStats { iterations: it, residual: res, fallback: false })),
        Outcome::Stalled(it) => it,
    };
    if x.iter().any(|v| !v.is_finite()) {
        x = vec![0.0; n];
    }
    let ilu = Ilu0::new(a).ok_or(Error::LinearSolveDiverged { iterations: used, residual: f64::INFINITY })?;
    let mut total = used;
    for _ in 0..3 {
        match bicgstab(a, b, &mut x, &ilu, tol, max_iter) {
            Outcome::Converged(it, res) => {
                return Ok((x, SolveStats { iterations: total + it, residual: res, fallback: true }));
            }
            Outcome::Stalled(it) => total += it,
        }
        if x.iter().any(|v| !v.is_finite()) {
            break;
        }
    }
    let residual = if x.iter().all(|v| v.is_finite()) { system.relative_residual(&x) } else { f64::INFINITY };
    Err(Error::LinearSolveDiverged { iterations: total, residual })
}
