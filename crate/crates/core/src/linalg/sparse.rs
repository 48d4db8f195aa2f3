use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};

use crate::error::{Error, Result};
use crate::real::Real;

/// Coordinate-format accumulator; duplicate entries are summed.
#[derive(Clone, Debug)]
pub struct Triplets<T> {
    pub nrows: usize,
    pub ncols: usize,
    pub entries: Vec<(usize, usize, T)>,
}

impl<T: Real> Triplets<T> {
    pub fn new(nrows: usize, ncols: usize) -> Self {
        Triplets { nrows, ncols, entries: Vec::new() }
    }

    pub fn push(&mut self, i: usize, j: usize, v: T) {
        debug_assert!(i < self.nrows && j < self.ncols);
        if v != T::zero() {
            self.entries.push((i, j, v));
        }
    }

    pub fn to_csr(&self) -> Csr<T> {
        let mut order: Vec<usize> = (0..self.entries.len()).collect();
        order.sort_by_key(|&k| (self.entries[k].0, self.entries[k].1));
        let mut indptr = vec![0usize; self.nrows + 1];
        let mut indices: Vec<usize> = Vec::with_capacity(order.len());
        let mut values: Vec<T> = Vec::with_capacity(order.len());
        let mut last: Option<(usize, usize)> = None;
        for k in order {
            let (i, j, v) = self.entries[k];
            if last == Some((i, j)) {
                *values.last_mut().unwrap() = *values.last().unwrap() + v;
            } else {
                indices.push(j);
                values.push(v);
                indptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..self.nrows {
            indptr[i + 1] += indptr[i];
        }
        Csr { nrows: self.nrows, ncols: self.ncols, indptr, indices, values }
    }
}

/// Compressed sparse rows.
#[derive(Clone, Debug)]
pub struct Csr<T> {
    pub nrows: usize,
    pub ncols: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub values: Vec<T>,
}

impl<T: Real> Csr<T> {
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn mul_vec(&self, x: &[T], y: &mut [T]) {
        for i in 0..self.nrows {
            let mut s = T::zero();
            for k in self.indptr[i]..self.indptr[i + 1] {
                s = s + self.values[k] * x[self.indices[k]];
            }
            y[i] = s;
        }
    }

    /// y = Aᵀ x
    pub fn tmul_vec(&self, x: &[T], y: &mut [T]) {
        y.iter_mut().for_each(|v| *v = T::zero());
        for i in 0..self.nrows {
            let xi = x[i];
            if xi == T::zero() {
                continue;
            }
            for k in self.indptr[i]..self.indptr[i + 1] {
                let j = self.indices[k];
                y[j] = y[j] + self.values[k] * xi;
            }
        }
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        (self.indptr[i]..self.indptr[i + 1])
            .find(|&k| self.indices[k] == j)
            .map(|k| self.values[k])
            .unwrap_or(T::zero())
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    /// Largest |a_ij - a_ji| relative to the largest entry.
    pub fn asymmetry(&self) -> T {
        let scale = self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        let mut worst = T::zero();
        for i in 0..self.nrows {
            for k in self.indptr[i]..self.indptr[i + 1] {
                let j = self.indices[k];
                worst = worst.max((self.values[k] - self.get(j, i)).abs());
            }
        }
        if scale == T::zero() {
            T::zero()
        } else {
            worst / scale
        }
    }

    fn to_faer(&self) -> Result<SparseColMat<usize, T>> {
        let mut t = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows {
            for k in self.indptr[i]..self.indptr[i + 1] {
                t.push(Triplet::new(i, self.indices[k], self.values[k]));
            }
        }
        SparseColMat::try_new_from_triplets(self.nrows, self.ncols, &t)
            .map_err(|e| Error::Factorization(format!("{e:?}")))
    }
}

/// Sparse LLᵀ factorization of a symmetric positive definite matrix.
pub struct Cholesky<T: Real> {
    llt: faer::sparse::linalg::solvers::Llt<usize, T>,
    n: usize,
}

impl<T: Real> Cholesky<T> {
    pub fn new(a: &Csr<T>) -> Result<Self> {
        if a.nrows != a.ncols {
            return Err(Error::Factorization("matrix is not square".into()));
        }
        let m = a.to_faer()?;
        let llt = m
            .sp_cholesky(faer::Side::Lower)
            .map_err(|e| Error::Factorization(format!("{e:?}")))?;
        Ok(Cholesky { llt, n: a.nrows })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn solve_in_place(&self, x: &mut [T]) {
        assert_eq!(x.len(), self.n);
        self.llt.solve_in_place(faer::MatMut::from_column_major_slice_mut(x, self.n, 1));
    }
}
