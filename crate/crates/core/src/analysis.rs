//! Spectrum accuracy and L2 errors against closed-form solutions.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::assembly::{GlobalSystem, Model};
use crate::eigensolve::dense_gen_eigenvalues;
use crate::error::{Error, Result};
use crate::geometry::{BoundaryCondition, CutQuadrature, ElementClass};
use crate::polybasis::TensorEval;

/// Angular eigenfrequencies of a rod `[0, l_p]` with a Neumann left end:
/// `n pi c / l_p` (Neumann right end) or `(n + 1/2) pi c / l_p` (Dirichlet).
pub fn rod_reference_frequencies(l_p: f64, c: f64, bc: BoundaryCondition, count: usize) -> Vec<f64> {
    let shift = match bc {
        BoundaryCondition::Neumann => 0.0,
        BoundaryCondition::Dirichlet => 0.5,
    };
    (0..count).map(|n| (n as f64 + shift) * PI * c / l_p).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumEntry {
    /// One-based, ascending.
    pub mode_index: usize,
    pub lambda: f64,
    pub omega: f64,
    pub omega_ref: f64,
    /// `NaN` for the rigid mode.
    pub ratio: f64,
}

/// Full discrete spectrum of the rod pencil paired by index with the analytic one.
pub fn spectrum_accuracy(system: &GlobalSystem, l_p: f64, c: f64, bc: BoundaryCondition) -> Result<Vec<SpectrumEntry>> {
    let values = dense_gen_eigenvalues(&system.stiffness.to_dense(), &system.mass.to_dense())?;
    let lmax = values.last().copied().unwrap_or(0.0);
    if let Some(&l0) = values.first() {
        if l0 < -1e-10 * lmax.abs() {
            log::warn!("pencil has a negative eigenvalue {l0:e}");
        }
    }
    let refs = rod_reference_frequencies(l_p, c, bc, values.len());
    Ok(values
        .iter()
        .zip(refs)
        .enumerate()
        .map(|(i, (&lambda, omega_ref))| {
            let omega = lambda.max(0.0).sqrt();
            let ratio = if omega_ref > 0.0 { omega / omega_ref } else { f64::NAN };
            SpectrumEntry { mode_index: i + 1, lambda, omega, omega_ref, ratio }
        })
        .collect())
}

/// Relative L2 error over the physical domain,
/// `||psi_h - exact|| / ||exact||`, with `n_points` Gauss points per direction on
/// every physical leaf (internal elements use a single tensor rule).
pub fn l2_error(model: &Model, coefficients: &[f64], exact: impl Fn([f64; 2]) -> f64 + Sync, n_points: usize) -> Result<f64> {
    if coefficients.len() != model.n_dof() {
        return Err(Error::InvalidArgument("coefficient vector length differs from the dof count".into()));
    }
    let basis = &model.basis;
    let dim = basis.dim();
    let depth = model.config.quadtree_depth;
    let sums = model
        .elements
        .par_iter()
        .zip(&model.dofs.local_to_global)
        .map(|(el, map)| -> Result<(f64, f64)> {
            let quad = match el.class {
                ElementClass::Cut => model.domain.cut_quadrature(el.element, &el.bounds, n_points, 1.0, depth)?,
                _ => CutQuadrature::gauss(el.element, dim, n_points)?,
            };
            let local: Vec<f64> = map.iter().map(|g| g.map_or(0.0, |g| coefficients[g])).collect();
            let jac = el.bounds.jacobian();
            let mut ev = TensorEval { values: vec![0.0; basis.len()], grads: vec![0.0; basis.len() * dim] };
            let (mut num, mut den) = (0.0, 0.0);
            for ((xi, w), &phys) in quad.points.iter().zip(&quad.weights).zip(&quad.physical) {
                if !phys {
                    continue;
                }
                basis.eval_into(&xi[..dim], &mut ev);
                let uh: f64 = ev.values.iter().zip(&local).map(|(n, u)| n * u).sum();
                let ue = exact(el.bounds.to_physical(*xi));
                num += w * jac * (uh - ue).powi(2);
                den += w * jac * ue * ue;
            }
            Ok((num, den))
        })
        .collect::<Result<Vec<_>>>()?;
    let (num, den) = sums.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    if den == 0.0 {
        return Err(Error::InvalidArgument("exact solution vanishes on the domain".into()));
    }
    Ok((num / den).sqrt())
}

/// Least-squares slope of `log y` against `log x`. Pairs with a non-finite or
/// non-positive entry are skipped; `None` when fewer than two pairs remain.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| a.is_finite() && b.is_finite() && **a > 0.0 && **b > 0.0)
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let (mx, my) = pts.iter().fold((0.0, 0.0), |s, p| (s.0 + p.0 / n, s.1 + p.1 / n));
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}
