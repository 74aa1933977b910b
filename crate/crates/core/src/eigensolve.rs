//! Symmetric eigensolvers: cyclic Jacobi and Cholesky reduction for element
//! matrices, and the largest generalized eigenvalue of the global pencil.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{CsrMatrix, MassOperator, MassSolver};

const JACOBI_MAX_SWEEPS: usize = 100;
const CHOLESKY_PIVOT_TOL: f64 = 1e-14;
/// Global problems up to this size are solved densely.
pub const DENSE_LIMIT: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orthonormality {
    Standard,
    BWeighted,
}

/// Eigenvalues in ascending order with column-aligned eigenvectors.
#[derive(Debug, Clone)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
    pub orthonormality: Orthonormality,
}

impl EigenPairs {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max(&self) -> f64 {
        self.values.last().copied().unwrap_or(f64::NAN)
    }
}

fn check_square(a: &DMatrix<f64>) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::InvalidArgument(format!("matrix is {}x{}, expected square", a.nrows(), a.ncols())));
    }
    Ok(())
}

fn frobenius(a: &DMatrix<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Flips each column so that its largest-magnitude entry is positive.
fn normalize_signs(v: &mut DMatrix<f64>) {
    for mut col in v.column_iter_mut() {
        let mut best = 0.0f64;
        for &x in col.iter() {
            if x.abs() > best.abs() + 1e-12 * best.abs() {
                best = x;
            }
        }
        if best < 0.0 {
            col.neg_mut();
        }
    }
}

/// Full spectrum of a dense symmetric matrix by cyclic Jacobi rotations.
pub fn sym_eig(a: &DMatrix<f64>) -> Result<EigenPairs> {
    check_square(a)?;
    let n = a.nrows();
    let scale = frobenius(a);
    let asym = (a - a.transpose()).abs().max();
    if asym > 1e-12 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::InvalidArgument(format!("matrix not symmetric (defect {asym:e})")));
    }
    let mut s = (a + a.transpose()) * 0.5;
    let mut v = DMatrix::<f64>::identity(n, n);
    let mut converged = n < 2 || scale == 0.0;
    for _ in 0..JACOBI_MAX_SWEEPS {
        if converged {
            break;
        }
        let off: f64 = (0..n).flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j))).map(|(i, j)| s[(i, j)].powi(2)).sum();
        if off.sqrt() <= 1e-15 * scale {
            converged = true;
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = s[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let tau = (s[(q, q)] - s[(p, p)]) / (2.0 * apq);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let t = if tau == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let sn = t * c;
                for k in 0..n {
                    let (skp, skq) = (s[(k, p)], s[(k, q)]);
                    s[(k, p)] = c * skp - sn * skq;
                    s[(k, q)] = sn * skp + c * skq;
                }
                for k in 0..n {
                    let (spk, sqk) = (s[(p, k)], s[(q, k)]);
                    s[(p, k)] = c * spk - sn * sqk;
                    s[(q, k)] = sn * spk + c * sqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[(k, p)], v[(k, q)]);
                    v[(k, p)] = c * vkp - sn * vkq;
                    v[(k, q)] = sn * vkp + c * vkq;
                }
            }
        }
    }
    if !converged {
        return Err(Error::NoConvergence(format!("Jacobi did not converge in {JACOBI_MAX_SWEEPS} sweeps")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| s[(i, i)].total_cmp(&s[(j, j)]));
    let values = order.iter().map(|&i| s[(i, i)]).collect();
    let mut vectors = DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    normalize_signs(&mut vectors);
    Ok(EigenPairs { values, vectors, orthonormality: Orthonormality::Standard })
}

/// Lower-triangular Cholesky factor `L` with `B = L L^T`.
pub fn cholesky(b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_square(b)?;
    let n = b.nrows();
    let dmax = (0..n).map(|i| b[(i, i)].abs()).fold(0.0, f64::max);
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = b[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > CHOLESKY_PIVOT_TOL * dmax) {
            return Err(Error::NotPositiveDefinite { index: j, pivot: d });
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut s = b[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

/// Solves `L X = R` in place for lower-triangular `L`.
fn forward_substitute(l: &DMatrix<f64>, r: &mut DMatrix<f64>) {
    let n = l.nrows();
    for c in 0..r.ncols() {
        for i in 0..n {
            let mut s = r[(i, c)];
            for k in 0..i {
                s -= l[(i, k)] * r[(k, c)];
            }
            r[(i, c)] = s / l[(i, i)];
        }
    }
}

/// Solves `L^T X = R` in place for lower-triangular `L`.
fn backward_substitute_transpose(l: &DMatrix<f64>, r: &mut DMatrix<f64>) {
    let n = l.nrows();
    for c in 0..r.ncols() {
        for i in (0..n).rev() {
            let mut s = r[(i, c)];
            for k in i + 1..n {
                s -= l[(k, i)] * r[(k, c)];
            }
            r[(i, c)] = s / l[(i, i)];
        }
    }
}

/// Symmetric-definite pencil `A phi = lambda B phi` with B-orthonormal vectors.
pub fn gen_sym_eig(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<EigenPairs> {
    check_square(a)?;
    if a.shape() != b.shape() {
        return Err(Error::InvalidArgument("pencil matrices differ in shape".into()));
    }
    // Jacobi scaling first: cut element masses mix O(1) and O(alpha) diagonals.
    let n = b.nrows();
    let mut scale = vec![0.0; n];
    for i in 0..n {
        let d = b[(i, i)];
        if !(d > 0.0) {
            return Err(Error::NotPositiveDefinite { index: i, pivot: d });
        }
        scale[i] = 1.0 / d.sqrt();
    }
    let b = DMatrix::from_fn(n, n, |i, j| b[(i, j)] * scale[i] * scale[j]);
    let a = DMatrix::from_fn(n, n, |i, j| a[(i, j)] * scale[i] * scale[j]);
    let l = cholesky(&b)?;
    // C = L^-1 A L^-T
    let mut x = a.clone();
    forward_substitute(&l, &mut x);
    let mut c = x.transpose();
    forward_substitute(&l, &mut c);
    let c = (&c + c.transpose()) * 0.5;
    let eig = sym_eig(&c)?;
    let mut vectors = eig.vectors;
    backward_substitute_transpose(&l, &mut vectors);
    for (i, mut row) in vectors.row_iter_mut().enumerate() {
        row *= scale[i];
    }
    normalize_signs(&mut vectors);
    Ok(EigenPairs { values: eig.values, vectors, orthonormality: Orthonormality::BWeighted })
}

/// Ascending eigenvalues of a dense symmetric-definite pencil, computed with
/// nalgebra's Cholesky and symmetric QR routines (used for global matrices).
pub fn dense_gen_eigenvalues(k: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = m.nrows();
    let chol = nalgebra::Cholesky::new(m.clone()).ok_or(Error::NotPositiveDefinite { index: n, pivot: f64::NAN })?;
    let l = chol.l();
    let x = l.solve_lower_triangular(k).ok_or_else(|| Error::InvalidArgument("singular factor".into()))?;
    let c = l.solve_lower_triangular(&x.transpose()).ok_or_else(|| Error::InvalidArgument("singular factor".into()))?;
    let c = (&c + c.transpose()) * 0.5;
    let mut values: Vec<f64> = c.symmetric_eigenvalues().iter().copied().collect();
    values.sort_by(f64::total_cmp);
    Ok(values)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaxEigMethod {
    /// Dense for `n <= DENSE_LIMIT`, Lanczos otherwise.
    Auto,
    Dense,
    Lanczos,
    Power,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaxEig {
    pub value: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Largest eigenvalue of `K phi = lambda M phi`.
pub fn max_gen_eig(k: &CsrMatrix, m: &MassOperator, method: MaxEigMethod) -> Result<MaxEig> {
    let n = m.len();
    if k.nrows() != n {
        return Err(Error::InvalidArgument("K and M differ in size".into()));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("empty system".into()));
    }
    let method = match method {
        MaxEigMethod::Auto if n <= DENSE_LIMIT => MaxEigMethod::Dense,
        MaxEigMethod::Auto => MaxEigMethod::Lanczos,
        other => other,
    };
    match method {
        MaxEigMethod::Dense => {
            let values = dense_gen_eigenvalues(&k.to_dense(), &m.to_dense())?;
            Ok(MaxEig { value: *values.last().unwrap(), converged: true, iterations: 0 })
        }
        MaxEigMethod::Lanczos => lanczos_max(k, m, &m.factorize()?, 1e-10),
        MaxEigMethod::Power => power_max(k, m, &m.factorize()?, 1e-10, 100_000),
        MaxEigMethod::Auto => unreachable!(),
    }
}

/// Seeded random start vector. Structured choices can be exactly orthogonal to
/// the top mode of a uniform mesh.
fn start_vector(n: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    (0..n).map(|_| rng.random_range(0.5..1.5)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Power iteration on `M^-1 K`, stopped on the eigen-residual.
pub fn power_max(k: &CsrMatrix, m: &MassOperator, solver: &MassSolver, tol: f64, max_iter: usize) -> Result<MaxEig> {
    let n = m.len();
    let mut v = start_vector(n);
    let mut mv = m.apply(&v);
    let norm = dot(&v, &mv).sqrt();
    v.iter_mut().for_each(|x| *x /= norm);
    let mut kv = vec![0.0; n];
    let mut theta = 0.0;
    for it in 1..=max_iter {
        k.matvec_into(&v, &mut kv);
        let new_theta = dot(&v, &kv);
        let mut w = solver.solve(&kv);
        // Residual M^-1 K v - theta v in the M-norm; a stalled Rayleigh quotient
        // alone is not evidence of convergence when the top of the spectrum is clustered.
        let r: Vec<f64> = w.iter().zip(&v).map(|(a, b)| a - new_theta * b).collect();
        m.apply_into(&r, &mut mv);
        let residual = dot(&r, &mv).sqrt();
        m.apply_into(&w, &mut mv);
        let norm = dot(&w, &mv).sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::NoConvergence("power iteration broke down".into()));
        }
        w.iter_mut().for_each(|x| *x /= norm);
        v = w;
        theta = new_theta;
        if residual <= tol * theta.abs() {
            return Ok(MaxEig { value: theta, converged: true, iterations: it });
        }
    }
    log::warn!("power iteration hit the cap of {max_iter} iterations");
    Ok(MaxEig { value: theta, converged: false, iterations: max_iter })
}

/// Lanczos in the M-inner product with full reorthogonalization and explicit
/// restarts from the current Ritz vector.
pub fn lanczos_max(k: &CsrMatrix, m: &MassOperator, solver: &MassSolver, tol: f64) -> Result<MaxEig> {
    const BASIS: usize = 80;
    const RESTARTS: usize = 50;
    const NOISE_RESTARTS: usize = 5;
    let n = m.len();
    let basis = BASIS.min(n);
    let mut start = start_vector(n);
    let mut total = 0;
    let mut theta = 0.0;
    let mut previous = f64::NAN;
    for restart in 0..RESTARTS {
        let mut q: Vec<Vec<f64>> = Vec::with_capacity(basis);
        let mut mq: Vec<Vec<f64>> = Vec::with_capacity(basis);
        let mut alpha = Vec::with_capacity(basis);
        let mut beta: Vec<f64> = Vec::with_capacity(basis);
        let mut v = start.clone();
        let mut mv = m.apply(&v);
        let nv = dot(&v, &mv).sqrt();
        v.iter_mut().for_each(|x| *x /= nv);
        mv.iter_mut().for_each(|x| *x /= nv);
        let mut kv = vec![0.0; n];
        let mut residual = f64::INFINITY;
        let mut ritz = Vec::new();
        for j in 0..basis {
            total += 1;
            k.matvec_into(&v, &mut kv);
            let a = dot(&v, &kv);
            let mut w = solver.solve(&kv);
            q.push(std::mem::take(&mut v));
            mq.push(std::mem::take(&mut mv));
            alpha.push(a);
            for _ in 0..2 {
                for (qi, mqi) in q.iter().zip(&mq) {
                    let c = dot(&w, mqi);
                    w.iter_mut().zip(qi).for_each(|(x, y)| *x -= c * y);
                }
            }
            let mw = m.apply(&w);
            let b = dot(&w, &mw).max(0.0).sqrt();
            let t = DMatrix::from_fn(j + 1, j + 1, |r, c| {
                if r == c {
                    alpha[r]
                } else if r + 1 == c {
                    beta[r]
                } else if c + 1 == r {
                    beta[c]
                } else {
                    0.0
                }
            });
            let eig = t.symmetric_eigen();
            let (imax, &tmax) = eig.eigenvalues.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap();
            theta = tmax;
            ritz = eig.eigenvectors.column(imax).iter().copied().collect();
            residual = b * ritz[j].abs();
            if residual <= tol * theta.abs() || b <= 1e-14 * theta.abs() || j + 1 == n {
                return Ok(MaxEig { value: theta, converged: true, iterations: total });
            }
            beta.push(b);
            v = w.iter().map(|x| x / b).collect();
            mv = mw.iter().map(|x| x / b).collect();
        }
        log::debug!("Lanczos restart, theta = {theta:e}, residual = {residual:e}");
        // A restart that no longer moves the Ritz value has converged the value,
        // even if a cluster at the top keeps the vector residual large. With a
        // badly conditioned mass the value settles into rounding noise instead.
        let change = (theta - previous).abs() / theta.abs();
        if change <= 1e-10 || (restart >= NOISE_RESTARTS && change <= 1e-6) {
            return Ok(MaxEig { value: theta.max(previous), converged: true, iterations: total });
        }
        previous = theta;
        start = vec![0.0; n];
        for (c, qi) in ritz.iter().zip(&q) {
            start.iter_mut().zip(qi).for_each(|(s, x)| *s += c * x);
        }
    }
    log::warn!("Lanczos did not converge after {total} iterations");
    Ok(MaxEig { value: theta, converged: false, iterations: total })
}

/// Solves `M x = b` with a one-off factorization.
pub fn spd_solve(m: &MassOperator, b: &[f64]) -> Result<Vec<f64>> {
    if b.len() != m.len() {
        return Err(Error::InvalidArgument("right-hand side length mismatch".into()));
    }
    Ok(m.factorize()?.solve(b))
}
