//! Sparse storage for the global system and the factorized mass solve.

use std::collections::VecDeque;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds an `n x n` matrix from `(row, col, value)` triplets. Duplicates are
    /// summed in their input order, so the result is deterministic.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        if let Some(&(i, j, _)) = triplets.iter().find(|(i, j, _)| *i >= n || *j >= n) {
            return Err(Error::DofMap(format!("entry ({i}, {j}) outside a {n}x{n} matrix")));
        }
        let mut order: Vec<usize> = (0..triplets.len()).collect();
        order.sort_by_key(|&t| (triplets[t].0, triplets[t].1));
        let mut row_ptr = vec![0; n + 1];
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        let mut last: Option<(usize, usize)> = None;
        for t in order {
            let (i, j, v) = triplets[t];
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(j);
                values.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Ok(Self { n, row_ptr, col_idx, values })
    }

    pub fn nrows(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    /// `y = A x`.
    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate().take(self.n) {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            *yi = s;
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                a[(i, j)] += v;
            }
        }
        a
    }

    /// Largest `|a_ij - a_ji|` relative to the largest entry.
    pub fn asymmetry(&self) -> f64 {
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst / scale
    }
}

/// Symmetric positive definite mass operator: a diagonal plus a sparse symmetric
/// correction that only couples degrees of freedom of cut elements.
#[derive(Debug, Clone)]
pub struct MassOperator {
    pub diagonal: Vec<f64>,
    /// Both triangles stored, sorted by `(row, col)`, no duplicates.
    pub correction: Vec<(usize, usize, f64)>,
}

impl MassOperator {
    pub fn from_diagonal(diagonal: Vec<f64>) -> Self {
        Self { diagonal, correction: Vec::new() }
    }

    /// Merges duplicate correction entries (summed in input order) and sorts them.
    pub fn new(diagonal: Vec<f64>, correction: &[(usize, usize, f64)]) -> Result<Self> {
        let n = diagonal.len();
        let csr = CsrMatrix::from_triplets(n, correction)?;
        let correction = (0..n).flat_map(|i| csr.row(i).map(move |(j, v)| (i, j, v))).collect();
        Ok(Self { diagonal, correction })
    }

    pub fn len(&self) -> usize {
        self.diagonal.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diagonal.is_empty()
    }

    pub fn is_diagonal(&self) -> bool {
        self.correction.is_empty()
    }

    pub fn apply_into(&self, x: &[f64], y: &mut [f64]) {
        for ((yi, d), xi) in y.iter_mut().zip(&self.diagonal).zip(x) {
            *yi = d * xi;
        }
        for &(i, j, v) in &self.correction {
            y[i] += v * x[j];
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.len()];
        self.apply_into(x, &mut y);
        y
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&self.diagonal));
        for &(i, j, v) in &self.correction {
            m[(i, j)] += v;
        }
        m
    }

    /// Sum of all entries, i.e. `1^T M 1`.
    pub fn total(&self) -> f64 {
        self.diagonal.iter().sum::<f64>() + self.correction.iter().map(|e| e.2).sum::<f64>()
    }

    pub fn factorize(&self) -> Result<MassSolver> {
        MassSolver::new(self)
    }
}

/// Direct solver for a [`MassOperator`]: diagonal solve on untouched degrees of
/// freedom, envelope Cholesky in reverse Cuthill–McKee order on the coupled block.
#[derive(Debug, Clone)]
pub struct MassSolver {
    inv_diag: Vec<f64>,
    /// Global indices of the coupled block in factorization order.
    block: Vec<usize>,
    factor: SkylineCholesky,
}

impl MassSolver {
    pub fn new(m: &MassOperator) -> Result<Self> {
        let n = m.len();
        let mut coupled = vec![false; n];
        for &(i, j, _) in &m.correction {
            if i != j {
                coupled[i] = true;
                coupled[j] = true;
            }
        }
        let mut inv_diag = vec![0.0; n];
        let mut diag_full = m.diagonal.clone();
        for &(i, j, v) in &m.correction {
            if i == j {
                diag_full[i] += v;
            }
        }
        for i in (0..n).filter(|&i| !coupled[i]) {
            if !(diag_full[i] > 0.0 && diag_full[i].is_finite()) {
                return Err(Error::NotPositiveDefinite { index: i, pivot: diag_full[i] });
            }
            inv_diag[i] = 1.0 / diag_full[i];
        }
        let members: Vec<usize> = (0..n).filter(|&i| coupled[i]).collect();
        let mut local = vec![usize::MAX; n];
        for (k, &g) in members.iter().enumerate() {
            local[g] = k;
        }
        let mut adjacency = vec![Vec::new(); members.len()];
        for &(i, j, _) in &m.correction {
            if i != j {
                adjacency[local[i]].push(local[j]);
            }
        }
        let perm = reverse_cuthill_mckee(&adjacency);
        let block: Vec<usize> = perm.iter().map(|&k| members[k]).collect();
        let mut position = vec![usize::MAX; n];
        for (k, &g) in block.iter().enumerate() {
            position[g] = k;
        }
        let mut entries: Vec<(usize, usize, f64)> = block.iter().enumerate().map(|(k, &g)| (k, k, m.diagonal[g])).collect();
        entries.extend(m.correction.iter().filter(|e| coupled[e.0]).map(|&(i, j, v)| (position[i], position[j], v)));
        let factor = SkylineCholesky::new(block.len(), &entries).map_err(|e| match e {
            Error::NotPositiveDefinite { index, pivot } => Error::NotPositiveDefinite { index: block[index], pivot },
            other => other,
        })?;
        Ok(Self { inv_diag, block, factor })
    }

    pub fn solve_into(&self, b: &[f64], x: &mut [f64]) {
        for ((xi, bi), d) in x.iter_mut().zip(b).zip(&self.inv_diag) {
            *xi = bi * d;
        }
        if self.block.is_empty() {
            return;
        }
        let mut y: Vec<f64> = self.block.iter().map(|&g| b[g]).collect();
        self.factor.solve_in_place(&mut y);
        for (&g, v) in self.block.iter().zip(y) {
            x[g] = v;
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; b.len()];
        self.solve_into(b, &mut x);
        x
    }

    /// Size of the block handled by the envelope factorization.
    pub fn coupled_len(&self) -> usize {
        self.block.len()
    }
}

/// Reverse Cuthill–McKee ordering of an undirected graph given as adjacency lists.
pub fn reverse_cuthill_mckee(adjacency: &[Vec<usize>]) -> Vec<usize> {
    let n = adjacency.len();
    let adj: Vec<Vec<usize>> = adjacency
        .iter()
        .map(|a| {
            let mut a = a.clone();
            a.sort_unstable();
            a.dedup();
            a
        })
        .collect();
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&v| (degree[v], v));
    for &start in &by_degree {
        if visited[start] {
            continue;
        }
        visited[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = adj[v].iter().copied().filter(|&u| !visited[u]).collect();
            next.sort_by_key(|&u| (degree[u], u));
            for u in next {
                visited[u] = true;
                queue.push_back(u);
            }
        }
    }
    order.reverse();
    order
}

/// Envelope (skyline) Cholesky factorization `A = L L^T` stored row-wise.
#[derive(Debug, Clone, Default)]
struct SkylineCholesky {
    first: Vec<usize>,
    start: Vec<usize>,
    data: Vec<f64>,
}

impl SkylineCholesky {
    fn new(n: usize, entries: &[(usize, usize, f64)]) -> Result<Self> {
        let mut first: Vec<usize> = (0..n).collect();
        for &(i, j, _) in entries {
            if j < i {
                first[i] = first[i].min(j);
            }
        }
        let mut start = vec![0; n + 1];
        for i in 0..n {
            start[i + 1] = start[i] + (i - first[i] + 1);
        }
        let mut data = vec![0.0; start[n]];
        for &(i, j, v) in entries {
            if j <= i {
                data[start[i] + j - first[i]] += v;
            }
        }
        let mut f = Self { first, start, data };
        for i in 0..n {
            for j in f.first[i]..=i {
                let lo = f.first[i].max(f.first[j]);
                let mut s = f.at(i, j);
                for k in lo..j {
                    s -= f.at(i, k) * f.at(j, k);
                }
                if j < i {
                    let d = f.at(j, j);
                    *f.at_mut(i, j) = s / d;
                } else {
                    // Stabilized cut-element masses legitimately span many orders of
                    // magnitude, so only strict positivity is required here.
                    if !(s > 0.0 && s.is_finite()) {
                        return Err(Error::NotPositiveDefinite { index: i, pivot: s });
                    }
                    *f.at_mut(i, i) = s.sqrt();
                }
            }
        }
        Ok(f)
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[self.start[i] + j - self.first[i]]
    }

    #[inline]
    fn at_mut(&mut self, i: usize, j: usize) -> &mut f64 {
        &mut self.data[self.start[i] + j - self.first[i]]
    }

    fn solve_in_place(&self, b: &mut [f64]) {
        let n = b.len();
        for i in 0..n {
            let mut s = b[i];
            for k in self.first[i]..i {
                s -= self.at(i, k) * b[k];
            }
            b[i] = s / self.at(i, i);
        }
        for i in (0..n).rev() {
            b[i] /= self.at(i, i);
            let bi = b[i];
            for k in self.first[i]..i {
                b[k] -= self.at(i, k) * bi;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csr_sums_duplicates() {
        let a = CsrMatrix::from_triplets(3, &[(0, 0, 1.0), (2, 1, 2.0), (0, 0, 3.0), (1, 2, 2.0)]).unwrap();
        assert_eq!(a.nnz(), 3);
        assert_eq!(a.get(0, 0), 4.0);
        assert_eq!(a.matvec(&[1.0, 1.0, 1.0]), vec![4.0, 2.0, 2.0]);
        assert_eq!(a.asymmetry(), 0.0);
        assert!(CsrMatrix::from_triplets(2, &[(2, 0, 1.0)]).is_err());
    }

    #[test]
    fn diagonal_mass_solve() {
        let m = MassOperator::from_diagonal(vec![2.0, 4.0]);
        let s = m.factorize().unwrap();
        assert_eq!(s.solve(&[1.0, 1.0]), vec![0.5, 0.25]);
        assert_eq!(s.coupled_len(), 0);
    }

    #[test]
    fn coupled_mass_solve_matches_dense() {
        // Tridiagonal coupling on dofs 1..4 of a 6-dof operator.
        let mut corr = Vec::new();
        for i in 1..4 {
            corr.push((i, i + 1, 0.3));
            corr.push((i + 1, i, 0.3));
            corr.push((i, i, 0.1));
        }
        let m = MassOperator::new(vec![1.0, 2.0, 1.5, 1.0, 2.5, 3.0], &corr).unwrap();
        let b = [1.0, -2.0, 0.5, 3.0, 1.0, -1.0];
        let x = m.factorize().unwrap().solve(&b);
        let r = m.apply(&x);
        for (ri, bi) in r.iter().zip(&b) {
            assert!((ri - bi).abs() < 1e-14);
        }
        let dense = m.to_dense();
        assert!((dense.sum() - m.total()).abs() < 1e-14);
    }

    #[test]
    fn indefinite_block_is_rejected() {
        let m = MassOperator::new(vec![1.0, 1.0], &[(0, 1, 2.0), (1, 0, 2.0)]).unwrap();
        assert!(matches!(m.factorize(), Err(Error::NotPositiveDefinite { .. })));
    }

    #[test]
    fn rcm_is_permutation() {
        let adj = vec![vec![3], vec![2, 4], vec![1], vec![0, 4], vec![1, 3]];
        let mut p = reverse_cuthill_mckee(&adj);
        p.sort_unstable();
        assert_eq!(p, (0..5).collect::<Vec<_>>());
    }
}
