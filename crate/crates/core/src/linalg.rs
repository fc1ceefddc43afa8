//! Small dense complex solves for the per-bin weight systems.
//!
//! Systems are `I × I` with `I` the microphone count, so everything here is
//! plain O(n³) code on row-major storage.

use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;

use crate::{Error, Result};

/// Condition estimates above this are treated as singular.
pub const MAX_CONDITION: f64 = 1e14;

#[derive(Debug, Clone)]
enum Factor {
    /// Lower-triangular `L` with `A = L Lᴴ`.
    Cholesky(Array2<Complex64>),
    /// Packed `L\U` with row permutation, for indefinite Hermitian input.
    Lu {
        lu: Array2<Complex64>,
        perm: Vec<usize>,
    },
}

/// Factorization of `G + loading · (tr G / n) · Id`.
#[derive(Debug, Clone)]
pub struct LoadedSolver {
    factor: Factor,
    condition: f64,
}

impl LoadedSolver {
    /// Factorizes the loaded matrix. Tries Cholesky first and falls back to
    /// partial-pivot LU when the loaded matrix is not positive definite.
    pub fn new(gram: ArrayView2<Complex64>, loading: f64) -> Result<Self> {
        let n = gram.nrows();
        if n == 0 || gram.ncols() != n {
            return Err(Error::Shape(format!(
                "expected a non-empty square matrix, got {}x{}",
                gram.nrows(),
                gram.ncols()
            )));
        }
        if !(loading >= 0.0 && loading.is_finite()) {
            return Err(Error::Config(format!(
                "diagonal loading must be finite and >= 0, got {loading}"
            )));
        }
        let a = loaded_matrix(gram, loading);
        let factor = match cholesky(&a) {
            Some(l) => Factor::Cholesky(l),
            None => lu(&a).map_err(|_| Error::Singular {
                condition: f64::INFINITY,
            })?,
        };
        let mut solver = Self {
            factor,
            condition: f64::INFINITY,
        };
        solver.condition = solver.condition_1norm(&a);
        if !(solver.condition <= MAX_CONDITION) {
            return Err(Error::Singular {
                condition: solver.condition,
            });
        }
        Ok(solver)
    }

    /// 1-norm condition number of the loaded matrix.
    pub fn condition(&self) -> f64 {
        self.condition
    }

    pub fn is_cholesky(&self) -> bool {
        matches!(self.factor, Factor::Cholesky(_))
    }

    pub fn dim(&self) -> usize {
        match &self.factor {
            Factor::Cholesky(l) => l.nrows(),
            Factor::Lu { lu, .. } => lu.nrows(),
        }
    }

    pub fn solve(&self, rhs: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(rhs.len(), self.dim(), "rhs length");
        match &self.factor {
            Factor::Cholesky(l) => {
                let n = l.nrows();
                let mut y = rhs.to_vec();
                for i in 0..n {
                    let mut acc = y[i];
                    for k in 0..i {
                        acc -= l[[i, k]] * y[k];
                    }
                    y[i] = acc / l[[i, i]];
                }
                for i in (0..n).rev() {
                    let mut acc = y[i];
                    for k in i + 1..n {
                        acc -= l[[k, i]].conj() * y[k];
                    }
                    y[i] = acc / l[[i, i]].conj();
                }
                y
            }
            Factor::Lu { lu, perm } => {
                let n = lu.nrows();
                let mut y: Vec<Complex64> = perm.iter().map(|&p| rhs[p]).collect();
                for i in 0..n {
                    for k in 0..i {
                        let t = lu[[i, k]] * y[k];
                        y[i] -= t;
                    }
                }
                for i in (0..n).rev() {
                    for k in i + 1..n {
                        let t = lu[[i, k]] * y[k];
                        y[i] -= t;
                    }
                    y[i] /= lu[[i, i]];
                }
                y
            }
        }
    }

    fn condition_1norm(&self, a: &Array2<Complex64>) -> f64 {
        let n = a.nrows();
        let norm_a = one_norm(a.view());
        let mut inv = Array2::zeros((n, n));
        let mut e = vec![Complex64::new(0.0, 0.0); n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
            e[j] = Complex64::new(1.0, 0.0);
            for (i, v) in self.solve(&e).into_iter().enumerate() {
                inv[[i, j]] = v;
            }
        }
        let c = norm_a * one_norm(inv.view());
        if c.is_finite() {
            c
        } else {
            f64::INFINITY
        }
    }
}

/// `gram + loading · (tr gram / n) · Id`.
pub fn loaded_matrix(gram: ArrayView2<Complex64>, loading: f64) -> Array2<Complex64> {
    let n = gram.nrows();
    let trace: f64 = (0..n).map(|i| gram[[i, i]].re).sum();
    let delta = loading * trace / n as f64;
    let mut a = gram.to_owned();
    for i in 0..n {
        a[[i, i]] += delta;
    }
    a
}

/// Solves `(G + loading · tr(G)/I · Id) w = g` without forming an inverse.
pub fn solve_sector_weights(
    gram: ArrayView2<Complex64>,
    moment: &[Complex64],
    loading: f64,
) -> Result<Vec<Complex64>> {
    if moment.len() != gram.nrows() {
        return Err(Error::Shape(format!(
            "moment length {} does not match matrix size {}",
            moment.len(),
            gram.nrows()
        )));
    }
    Ok(LoadedSolver::new(gram, loading)?.solve(moment))
}

fn one_norm(a: ArrayView2<Complex64>) -> f64 {
    a.columns()
        .into_iter()
        .map(|c| c.iter().map(|v| v.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn cholesky(a: &Array2<Complex64>) -> Option<Array2<Complex64>> {
    let n = a.nrows();
    let mut l = Array2::<Complex64>::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]].re;
        for k in 0..j {
            d -= l[[j, k]].norm_sqr();
        }
        if !(d > 0.0) || !d.is_finite() {
            return None;
        }
        let ljj = d.sqrt();
        l[[j, j]] = Complex64::new(ljj, 0.0);
        for i in j + 1..n {
            let mut acc = a[[i, j]];
            for k in 0..j {
                acc -= l[[i, k]] * l[[j, k]].conj();
            }
            l[[i, j]] = acc / ljj;
        }
    }
    Some(l)
}

fn lu(a: &Array2<Complex64>) -> std::result::Result<Factor, ()> {
    let n = a.nrows();
    let mut lu = a.clone();
    let mut perm: Vec<usize> = (0..n).collect();
    for k in 0..n {
        let (p, pivot) = (k..n)
            .map(|i| (i, lu[[i, k]].norm()))
            .fold((k, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if !(pivot > 0.0) {
            return Err(());
        }
        if p != k {
            perm.swap(p, k);
            for j in 0..n {
                let t = lu[[p, j]];
                lu[[p, j]] = lu[[k, j]];
                lu[[k, j]] = t;
            }
        }
        for i in k + 1..n {
            let m = lu[[i, k]] / lu[[k, k]];
            lu[[i, k]] = m;
            for j in k + 1..n {
                let t = m * lu[[k, j]];
                lu[[i, j]] -= t;
            }
        }
    }
    Ok(Factor::Lu { lu, perm })
}
