//! One-dimensional polynomial machinery: Legendre polynomials, Gauss–Lobatto–Legendre
//! and Gauss–Legendre rules, nodal Lagrange shape functions on GLL points and their
//! tensor products.

use crate::error::{Error, Result};

const NEWTON_TOL: f64 = 1e-15;
const NEWTON_MAX_ITER: usize = 100;

/// Value and first derivative of the Legendre polynomial `P_p` at `x`.
pub fn legendre(p: usize, x: f64) -> (f64, f64) {
    if p == 0 {
        return (1.0, 0.0);
    }
    let (mut p_prev, mut p_cur) = (1.0, x);
    let (mut d_prev, mut d_cur) = (0.0, 1.0);
    for k in 1..p {
        let kf = k as f64;
        let p_next = ((2.0 * kf + 1.0) * x * p_cur - kf * p_prev) / (kf + 1.0);
        // P'_{k+1} = P'_{k-1} + (2k+1) P_k
        let d_next = d_prev + (2.0 * kf + 1.0) * p_cur;
        p_prev = p_cur;
        p_cur = p_next;
        d_prev = d_cur;
        d_cur = d_next;
    }
    (p_cur, d_cur)
}

/// A one-dimensional quadrature rule on the reference interval `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule1D {
    pub points: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureRule1D {
    /// Gauss–Lobatto–Legendre rule with `p + 1` points, exact up to degree `2p - 1`.
    pub fn gauss_lobatto(p: usize) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidArgument("GLL rule requires p >= 1".into()));
        }
        let n = p + 1;
        let mut points = vec![0.0; n];
        points[0] = -1.0;
        points[p] = 1.0;
        let pf = p as f64;
        // Interior nodes are the roots of P'_p, symmetric about zero.
        for j in 1..(p + 1) / 2 {
            let mut x = -(std::f64::consts::PI * j as f64 / pf).cos();
            let mut converged = false;
            for _ in 0..NEWTON_MAX_ITER {
                let (val, der) = legendre(p, x);
                // (1 - x^2) P'' = 2x P' - p(p+1) P
                let second = (2.0 * x * der - pf * (pf + 1.0) * val) / (1.0 - x * x);
                let step = der / second;
                x -= step;
                if step.abs() <= NEWTON_TOL {
                    converged = true;
                    break;
                }
            }
            if !converged {
                return Err(Error::NoConvergence(format!("GLL node {j} for p = {p}")));
            }
            points[j] = x;
            points[p - j] = -x;
        }
        if p % 2 == 0 {
            points[p / 2] = 0.0;
        }
        let weights = points
            .iter()
            .map(|&x| {
                let (val, _) = legendre(p, x);
                2.0 / (pf * (pf + 1.0) * val * val)
            })
            .collect();
        Ok(Self { points, weights })
    }

    /// `n`-point Gauss–Legendre rule, exact up to degree `2n - 1`.
    pub fn gauss_legendre(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("Gauss-Legendre rule requires n >= 1".into()));
        }
        let mut points = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = -(std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut converged = false;
            let mut der = 0.0;
            for _ in 0..NEWTON_MAX_ITER {
                let (val, d) = legendre(n, x);
                der = d;
                let step = val / d;
                x -= step;
                if step.abs() <= NEWTON_TOL {
                    converged = true;
                    der = legendre(n, x).1;
                    break;
                }
            }
            if !converged {
                return Err(Error::NoConvergence(format!("Gauss node {i} for n = {n}")));
            }
            let w = 2.0 / ((1.0 - x * x) * der * der);
            points[i] = x;
            points[n - 1 - i] = -x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            points[n / 2] = 0.0;
            let d = legendre(n, 0.0).1;
            weights[n / 2] = 2.0 / (d * d);
        }
        Ok(Self { points, weights })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Integrates `f` over `[-1, 1]`.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.points.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)).sum()
    }

    /// Points and weights of the rule mapped affinely onto `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.points.iter().zip(&self.weights).map(move |(&x, &w)| (mid + half * x, w * half))
    }
}

/// Nodal Lagrange basis of degree `p` on the GLL points.
#[derive(Debug, Clone)]
pub struct SpectralBasis1D {
    degree: usize,
    nodes: Vec<f64>,
    /// `1 / (x_i - x_j)` for `i != j`, row-major.
    inv_diff: Vec<f64>,
}

impl SpectralBasis1D {
    pub fn new(degree: usize) -> Result<Self> {
        let nodes = QuadratureRule1D::gauss_lobatto(degree)?.points;
        let n = degree + 1;
        let mut inv_diff = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    inv_diff[i * n + j] = 1.0 / (nodes[i] - nodes[j]);
                }
            }
        }
        Ok(Self { degree, nodes, inv_diff })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.degree + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Values and derivatives of all shape functions at `xi`.
    pub fn eval(&self, xi: f64) -> (Vec<f64>, Vec<f64>) {
        let n = self.len();
        let mut values = vec![0.0; n];
        let mut derivs = vec![0.0; n];
        self.eval_into(xi, &mut values, &mut derivs);
        (values, derivs)
    }

    /// Product form of the Lagrange polynomials; the derivative uses prefix and
    /// suffix products so that evaluation at a node is exact.
    pub fn eval_into(&self, xi: f64, values: &mut [f64], derivs: &mut [f64]) {
        let n = self.len();
        let mut factors = [0.0f64; 32];
        let mut prefix = [0.0f64; 33];
        let mut suffix = [0.0f64; 33];
        for i in 0..n {
            // factors t_j = (xi - x_j) / (x_i - x_j), with t_i := 1
            for j in 0..n {
                factors[j] = if j == i { 1.0 } else { (xi - self.nodes[j]) * self.inv_diff[i * n + j] };
            }
            prefix[0] = 1.0;
            for j in 0..n {
                prefix[j + 1] = prefix[j] * factors[j];
            }
            suffix[n] = 1.0;
            for j in (0..n).rev() {
                suffix[j] = suffix[j + 1] * factors[j];
            }
            values[i] = prefix[n];
            let mut d = 0.0;
            for m in 0..n {
                if m != i {
                    d += self.inv_diff[i * n + m] * prefix[m] * suffix[m + 1];
                }
            }
            derivs[i] = d;
        }
    }
}

/// Tensor-product basis in `dim` dimensions (1 or 2). Local functions are ordered
/// lexicographically with the first index running fastest.
#[derive(Debug, Clone)]
pub struct TensorBasis {
    dim: usize,
    basis: SpectralBasis1D,
}

/// Values and reference gradients of a tensor basis at one point; gradients are
/// stored with stride `dim`.
#[derive(Debug, Clone, Default)]
pub struct TensorEval {
    pub values: Vec<f64>,
    pub grads: Vec<f64>,
}

impl TensorBasis {
    pub fn new(dim: usize, degree: usize) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::InvalidArgument(format!("unsupported dimension {dim}")));
        }
        Ok(Self { dim, basis: SpectralBasis1D::new(degree)? })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.basis.degree()
    }

    pub fn basis_1d(&self) -> &SpectralBasis1D {
        &self.basis
    }

    /// Number of local functions, `(p + 1)^dim`.
    pub fn len(&self) -> usize {
        self.basis.len().pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn flat_index(&self, multi: &[usize]) -> usize {
        let n = self.basis.len();
        multi.iter().rev().fold(0, |acc, &i| acc * n + i)
    }

    pub fn multi_index(&self, flat: usize) -> [usize; 2] {
        let n = self.basis.len();
        if self.dim == 1 {
            [flat, 0]
        } else {
            [flat % n, flat / n]
        }
    }

    pub fn eval(&self, xi: &[f64]) -> TensorEval {
        let mut out = TensorEval::default();
        self.eval_into(xi, &mut out);
        out
    }

    pub fn eval_into(&self, xi: &[f64], out: &mut TensorEval) {
        let n = self.basis.len();
        let len = self.len();
        out.values.resize(len, 0.0);
        out.grads.resize(len * self.dim, 0.0);
        let mut vx = [0.0; 32];
        let mut dx = [0.0; 32];
        self.basis.eval_into(xi[0], &mut vx[..n], &mut dx[..n]);
        if self.dim == 1 {
            out.values.copy_from_slice(&vx[..n]);
            out.grads.copy_from_slice(&dx[..n]);
            return;
        }
        let mut vy = [0.0; 32];
        let mut dy = [0.0; 32];
        self.basis.eval_into(xi[1], &mut vy[..n], &mut dy[..n]);
        for j in 0..n {
            for i in 0..n {
                let a = j * n + i;
                out.values[a] = vx[i] * vy[j];
                out.grads[2 * a] = dx[i] * vy[j];
                out.grads[2 * a + 1] = vx[i] * dy[j];
            }
        }
    }

    /// Reference coordinates of the tensor GLL nodes, in local ordering.
    pub fn nodes(&self) -> Vec<[f64; 2]> {
        let x = self.basis.nodes();
        (0..self.len())
            .map(|a| {
                let m = self.multi_index(a);
                if self.dim == 1 {
                    [x[m[0]], 0.0]
                } else {
                    [x[m[0]], x[m[1]]]
                }
            })
            .collect()
    }

    /// Tensor GLL weights in local ordering (the lumped-mass weights).
    pub fn nodal_weights(&self) -> Result<Vec<f64>> {
        let w = QuadratureRule1D::gauss_lobatto(self.degree())?.weights;
        Ok((0..self.len())
            .map(|a| {
                let m = self.multi_index(a);
                if self.dim == 1 {
                    w[m[0]]
                } else {
                    w[m[0]] * w[m[1]]
                }
            })
            .collect())
    }
}
