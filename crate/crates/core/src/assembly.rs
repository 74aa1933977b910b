//! Element matrices, Nitsche terms, degree-of-freedom numbering and global assembly.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::eigensolve::sym_eig;
use crate::error::{Error, Result};
use crate::geometry::{BoundaryCondition, BoundaryFacetQuadrature, CartesianMesh, CutQuadrature, Domain, ElementBox, ElementClass};
use crate::linalg::{CsrMatrix, MassOperator};
use crate::polybasis::{TensorBasis, TensorEval};

/// Relative threshold below which eigenvalues of the volume gradient matrix are
/// treated as null space in the penalty eigenproblem.
const PENALTY_NULL_TOL: f64 = 1e-10;

/// Material data. The wave speed comes from the domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaterialField {
    pub density: f64,
    pub alpha: f64,
    pub source: f64,
    pub neumann_flux: f64,
}

impl MaterialField {
    pub fn new(alpha: f64) -> Result<Self> {
        let m = Self { density: 1.0, alpha, source: 0.0, neumann_flux: 0.0 };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.density > 0.0 && self.alpha > 0.0 && self.alpha <= 1.0 {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("need rho > 0 and 0 < alpha <= 1, got {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NitscheMode {
    /// Penalty from the element eigenproblem, `2 * max mu`.
    ComputedPenalty,
    FixedPenalty(f64),
    /// Penalty term only, without the two consistency terms.
    PenaltyOnly(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NitscheConfig {
    pub mode: NitscheMode,
    pub g_d: f64,
}

impl Default for NitscheConfig {
    fn default() -> Self {
        Self { mode: NitscheMode::ComputedPenalty, g_d: 0.0 }
    }
}

impl NitscheConfig {
    pub fn validate(&self) -> Result<()> {
        match self.mode {
            NitscheMode::FixedPenalty(l) | NitscheMode::PenaltyOnly(l) if !(l > 0.0) => {
                Err(Error::InvalidArgument(format!("Nitsche penalty must be positive, got {l}")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ElementMatrices {
    pub m: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub f: DVector<f64>,
    pub is_lumped: bool,
    /// Nitsche penalty used on this element, if it carries Dirichlet terms.
    pub penalty: Option<f64>,
}

/// Evaluates the basis at a reference point and maps gradients to physical space.
fn eval_physical(basis: &TensorBasis, bounds: &ElementBox, xi: [f64; 2], out: &mut TensorEval) {
    let d = basis.dim();
    basis.eval_into(&xi[..d], out);
    let n = basis.len();
    for a in 0..n {
        for k in 0..d {
            out.grads[a * d + k] *= 2.0 / bounds.size(k);
        }
    }
}

fn empty_eval(basis: &TensorBasis) -> TensorEval {
    TensorEval { values: vec![0.0; basis.len()], grads: vec![0.0; basis.len() * basis.dim()] }
}

fn symmetrize_upper(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in 0..i {
            a[(i, j)] = a[(j, i)];
        }
    }
}

/// Lumped GLL mass for internal elements (`quad = None`), consistent
/// indicator-weighted mass from the cut quadrature otherwise.
pub fn element_mass(quad: Option<&CutQuadrature>, basis: &TensorBasis, material: &MaterialField, bounds: &ElementBox) -> Result<DMatrix<f64>> {
    let n = basis.len();
    let jac = bounds.jacobian();
    match quad {
        None => {
            let w = basis.nodal_weights()?;
            Ok(DMatrix::from_diagonal(&DVector::from_iterator(n, w.iter().map(|wi| material.density * wi * jac))))
        }
        Some(q) => {
            let mut m = DMatrix::zeros(n, n);
            let mut ev = empty_eval(basis);
            for ((xi, w), ind) in q.points.iter().zip(&q.weights).zip(&q.indicator) {
                basis.eval_into(&xi[..basis.dim()], &mut ev);
                let s = w * ind * jac * material.density;
                for i in 0..n {
                    let si = s * ev.values[i];
                    for j in i..n {
                        m[(i, j)] += si * ev.values[j];
                    }
                }
            }
            symmetrize_upper(&mut m);
            Ok(m)
        }
    }
}

/// Volume stiffness `int alpha rho c^2 grad N_i . grad N_j`.
fn volume_stiffness(quad: &CutQuadrature, basis: &TensorBasis, domain: &Domain, material: &MaterialField, bounds: &ElementBox) -> DMatrix<f64> {
    let n = basis.len();
    let d = basis.dim();
    let jac = bounds.jacobian();
    let mut k = DMatrix::zeros(n, n);
    let mut ev = empty_eval(basis);
    for ((xi, w), ind) in quad.points.iter().zip(&quad.weights).zip(&quad.indicator) {
        eval_physical(basis, bounds, *xi, &mut ev);
        let c = domain.wave_speed(bounds.to_physical(*xi));
        let s = w * ind * jac * material.density * c * c;
        for i in 0..n {
            for j in i..n {
                let g: f64 = (0..d).map(|a| ev.grads[i * d + a] * ev.grads[j * d + a]).sum();
                k[(i, j)] += s * g;
            }
        }
    }
    symmetrize_upper(&mut k);
    k
}

fn normal_derivatives(ev: &TensorEval, normal: [f64; 2], d: usize) -> Vec<f64> {
    (0..ev.values.len()).map(|i| (0..d).map(|a| ev.grads[i * d + a] * normal[a]).sum()).collect()
}

fn dirichlet_facets(facets: &[BoundaryFacetQuadrature]) -> impl Iterator<Item = &BoundaryFacetQuadrature> {
    facets.iter().filter(|f| f.kind == BoundaryCondition::Dirichlet)
}

/// Penalty `2 max mu` of the pencil `A = int_{Gamma_D} d_n N d_n N`,
/// `B = int_{physical part} grad N . grad N`, restricted to the complement of the
/// numerical null space of `B`. Returns zero (with a warning) when `A` vanishes.
pub fn nitsche_penalty(quad: &CutQuadrature, facets: &[BoundaryFacetQuadrature], basis: &TensorBasis, bounds: &ElementBox) -> Result<f64> {
    let n = basis.len();
    let d = basis.dim();
    let jac = bounds.jacobian();
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut ev = empty_eval(basis);
    for facet in dirichlet_facets(facets) {
        for ((xi, w), nrm) in facet.points.iter().zip(&facet.weights).zip(&facet.normals) {
            eval_physical(basis, bounds, *xi, &mut ev);
            let dn = normal_derivatives(&ev, *nrm, d);
            for i in 0..n {
                for j in 0..n {
                    a[(i, j)] += w * dn[i] * dn[j];
                }
            }
        }
    }
    let mut b = DMatrix::<f64>::zeros(n, n);
    for ((xi, w), &phys) in quad.points.iter().zip(&quad.weights).zip(&quad.physical) {
        if !phys {
            continue;
        }
        eval_physical(basis, bounds, *xi, &mut ev);
        for i in 0..n {
            for j in 0..n {
                let g: f64 = (0..d).map(|k| ev.grads[i * d + k] * ev.grads[j * d + k]).sum();
                b[(i, j)] += w * jac * g;
            }
        }
    }
    let amax = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if amax == 0.0 {
        log::warn!("Nitsche penalty eigenproblem has no normal-gradient content; using zero penalty");
        return Ok(0.0);
    }
    let eb = sym_eig(&((&b + b.transpose()) * 0.5))?;
    let bmax = eb.max();
    let kept: Vec<usize> = (0..n).filter(|&i| eb.values[i] > PENALTY_NULL_TOL * bmax).collect();
    if kept.is_empty() {
        return Err(Error::InvalidArgument("physical part of the element carries no gradient energy".into()));
    }
    // Reduced pencil in the B-eigenbasis, scaled to a standard problem.
    let r = kept.len();
    let u = DMatrix::from_fn(n, r, |i, c| eb.vectors[(i, kept[c])] / eb.values[kept[c]].sqrt());
    let c = u.transpose() * &a * &u;
    let mu = sym_eig(&((&c + c.transpose()) * 0.5))?;
    Ok(2.0 * mu.max())
}

/// Stiffness with volume term and, on Dirichlet facets, Nitsche terms. The
/// consistency terms carry the flux coefficient `rho c^2`, which is one on the rod.
pub fn element_stiffness(
    quad: &CutQuadrature,
    facets: &[BoundaryFacetQuadrature],
    basis: &TensorBasis,
    domain: &Domain,
    material: &MaterialField,
    nitsche: &NitscheConfig,
    bounds: &ElementBox,
) -> Result<(DMatrix<f64>, Option<f64>)> {
    let mut k = volume_stiffness(quad, basis, domain, material, bounds);
    if dirichlet_facets(facets).next().is_none() {
        return Ok((k, None));
    }
    let (penalty, consistency) = match nitsche.mode {
        NitscheMode::ComputedPenalty => (nitsche_penalty(quad, facets, basis, bounds)?, true),
        NitscheMode::FixedPenalty(l) => (l, true),
        NitscheMode::PenaltyOnly(l) => (l, false),
    };
    let n = basis.len();
    let d = basis.dim();
    let mut ev = empty_eval(basis);
    for facet in dirichlet_facets(facets) {
        for ((xi, w), nrm) in facet.points.iter().zip(&facet.weights).zip(&facet.normals) {
            eval_physical(basis, bounds, *xi, &mut ev);
            let dn = normal_derivatives(&ev, *nrm, d);
            let c = domain.wave_speed(bounds.to_physical(*xi));
            let flux = material.density * c * c;
            for i in 0..n {
                for j in 0..n {
                    let mut v = penalty * ev.values[i] * ev.values[j];
                    if consistency {
                        v -= flux * (dn[i] * ev.values[j] + ev.values[i] * dn[j]);
                    }
                    k[(i, j)] += w * v;
                }
            }
        }
    }
    Ok((k, Some(penalty)))
}

/// Source, Neumann flux and Nitsche right-hand side terms.
#[allow(clippy::too_many_arguments)]
pub fn element_force(
    quad: &CutQuadrature,
    facets: &[BoundaryFacetQuadrature],
    basis: &TensorBasis,
    domain: &Domain,
    material: &MaterialField,
    nitsche: &NitscheConfig,
    penalty: Option<f64>,
    bounds: &ElementBox,
) -> DVector<f64> {
    let n = basis.len();
    let d = basis.dim();
    let mut f = DVector::zeros(n);
    let mut ev = empty_eval(basis);
    if material.source != 0.0 {
        let jac = bounds.jacobian();
        for ((xi, w), &phys) in quad.points.iter().zip(&quad.weights).zip(&quad.physical) {
            if phys {
                basis.eval_into(&xi[..d], &mut ev);
                for i in 0..n {
                    f[i] += w * jac * material.source * ev.values[i];
                }
            }
        }
    }
    for facet in facets {
        for ((xi, w), nrm) in facet.points.iter().zip(&facet.weights).zip(&facet.normals) {
            eval_physical(basis, bounds, *xi, &mut ev);
            match facet.kind {
                BoundaryCondition::Neumann if material.neumann_flux != 0.0 => {
                    for i in 0..n {
                        f[i] += w * material.neumann_flux * ev.values[i];
                    }
                }
                BoundaryCondition::Dirichlet if nitsche.g_d != 0.0 => {
                    let dn = normal_derivatives(&ev, *nrm, d);
                    let c = domain.wave_speed(bounds.to_physical(*xi));
                    let consistency = !matches!(nitsche.mode, NitscheMode::PenaltyOnly(_));
                    for i in 0..n {
                        let mut v = penalty.unwrap_or(0.0) * nitsche.g_d * ev.values[i];
                        if consistency {
                            v -= material.density * c * c * nitsche.g_d * dn[i];
                        }
                        f[i] += w * v;
                    }
                }
                _ => {}
            }
        }
    }
    f
}

/// Local-to-global numbering over the lattice of GLL nodes of the active elements.
#[derive(Debug, Clone)]
pub struct DofMap {
    /// Per active element (in mesh order), global index of each local function;
    /// `None` for strongly constrained nodes.
    pub local_to_global: Vec<Vec<Option<usize>>>,
    pub n_dof: usize,
    /// Lattice coordinates `(I, J)` of each global dof.
    pub lattice: Vec<[usize; 2]>,
}

impl DofMap {
    /// `constrained` lists lattice nodes that are removed from the system.
    pub fn new(mesh: &CartesianMesh, basis: &TensorBasis, constrained: &[[usize; 2]]) -> Result<Self> {
        let p = basis.degree();
        let nx = mesh.n_el[0] * p + 1;
        let ny = if mesh.dim == 1 { 1 } else { mesh.n_el[1] * p + 1 };
        let lattice_of = |e: usize, a: usize| {
            let [i, j] = mesh.element_index(e);
            let [la, lb] = basis.multi_index(a);
            [i * p + la, j * p + lb]
        };
        let mut used = vec![false; nx * ny];
        for &e in &mesh.active {
            for a in 0..basis.len() {
                let [x, y] = lattice_of(e, a);
                used[y * nx + x] = true;
            }
        }
        for c in constrained {
            if c[0] >= nx || c[1] >= ny {
                return Err(Error::DofMap(format!("constrained node {c:?} outside the lattice")));
            }
            used[c[1] * nx + c[0]] = false;
        }
        let mut index = vec![None; nx * ny];
        let mut lattice = Vec::new();
        for (flat, &u) in used.iter().enumerate() {
            if u {
                index[flat] = Some(lattice.len());
                lattice.push([flat % nx, flat / nx]);
            }
        }
        let local_to_global = mesh
            .active
            .iter()
            .map(|&e| {
                (0..basis.len())
                    .map(|a| {
                        let [x, y] = lattice_of(e, a);
                        index[y * nx + x]
                    })
                    .collect()
            })
            .collect();
        Ok(Self { local_to_global, n_dof: lattice.len(), lattice })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DirichletTreatment {
    /// Weak enforcement with Nitsche terms on immersed Dirichlet boundaries.
    Nitsche,
    /// Boundary-fitted rod only: the node at `l_p` is removed.
    Strong,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub degree: usize,
    pub n_el: usize,
    pub material: MaterialField,
    pub nitsche: NitscheConfig,
    pub dirichlet: DirichletTreatment,
    pub quadtree_depth: usize,
}

impl ModelConfig {
    pub fn new(degree: usize, n_el: usize, alpha: f64) -> Result<Self> {
        Ok(Self {
            degree,
            n_el,
            material: MaterialField::new(alpha)?,
            nitsche: NitscheConfig::default(),
            dirichlet: DirichletTreatment::Nitsche,
            quadtree_depth: 6,
        })
    }
}

/// Per active element data kept after assembly of the element matrices.
#[derive(Debug, Clone)]
pub struct ElementData {
    pub element: usize,
    pub class: ElementClass,
    pub bounds: ElementBox,
    pub volume_fraction: f64,
    pub has_dirichlet: bool,
    pub matrices: ElementMatrices,
}

/// Discretized problem before global assembly. Element matrices may be modified
/// (stabilized) in place before calling [`Model::assemble`].
#[derive(Debug, Clone)]
pub struct Model {
    pub domain: Domain,
    pub config: ModelConfig,
    pub mesh: CartesianMesh,
    pub basis: TensorBasis,
    pub dofs: DofMap,
    pub elements: Vec<ElementData>,
    /// Physical coordinates of every global dof.
    pub coordinates: Vec<[f64; 2]>,
}

/// Builds mesh, numbering and element matrices for `domain`.
pub fn build_model(domain: &Domain, config: &ModelConfig) -> Result<Model> {
    config.material.validate()?;
    config.nitsche.validate()?;
    let mesh = CartesianMesh::new(domain, config.n_el)?;
    let basis = TensorBasis::new(domain.dim(), config.degree)?;
    let constrained = match (domain, config.dirichlet) {
        (Domain::Rod(r), DirichletTreatment::Strong) => {
            if r.right_bc == BoundaryCondition::Dirichlet {
                if mesh.cut_elements().next().is_some() || (r.physical_length - r.length).abs() > 1e-14 * r.length {
                    return Err(Error::InvalidArgument("strong Dirichlet needs a boundary-fitted rod (l_p = l)".into()));
                }
                vec![[mesh.n_el[0] * config.degree, 0]]
            } else {
                Vec::new()
            }
        }
        (Domain::Arc(_), DirichletTreatment::Strong) => {
            return Err(Error::InvalidArgument("strong Dirichlet is only available on the rod".into()));
        }
        _ => Vec::new(),
    };
    let dofs = DofMap::new(&mesh, &basis, &constrained)?;
    let strong = config.dirichlet == DirichletTreatment::Strong;
    let elements = mesh
        .active
        .par_iter()
        .map(|&e| -> Result<ElementData> {
            let bounds = mesh.element_box(e);
            let class = mesh.classes[e];
            let quad = domain.element_quadrature(e, &bounds, class, config.degree, config.material.alpha, config.quadtree_depth)?;
            let facets = if strong { Vec::new() } else { domain.boundary_quadrature(e, &bounds, config.degree + 2)? };
            let m = element_mass((class == ElementClass::Cut).then_some(&quad), &basis, &config.material, &bounds)?;
            let (k, penalty) = element_stiffness(&quad, &facets, &basis, domain, &config.material, &config.nitsche, &bounds)?;
            let f = element_force(&quad, &facets, &basis, domain, &config.material, &config.nitsche, penalty, &bounds);
            Ok(ElementData {
                element: e,
                class,
                bounds,
                volume_fraction: quad.volume_fraction,
                has_dirichlet: penalty.is_some(),
                matrices: ElementMatrices { m, k, f, is_lumped: class == ElementClass::Internal, penalty },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let coordinates = lattice_coordinates(&mesh, &basis, &dofs);
    Ok(Model { domain: *domain, config: *config, mesh, basis, dofs, elements, coordinates })
}

fn lattice_coordinates(mesh: &CartesianMesh, basis: &TensorBasis, dofs: &DofMap) -> Vec<[f64; 2]> {
    let p = basis.degree();
    let nodes = basis.basis_1d().nodes();
    let coord = |axis: usize, l: usize| {
        let (e, a) = if l == mesh.n_el[axis] * p { (mesh.n_el[axis] - 1, p) } else { (l / p, l % p) };
        let h = mesh.element_size(axis);
        let lower = e as f64 * h;
        let upper = if e + 1 == mesh.n_el[axis] { mesh.extent[axis] } else { (e + 1) as f64 * h };
        lower + 0.5 * (nodes[a] + 1.0) * (upper - lower)
    };
    dofs.lattice
        .iter()
        .map(|&[i, j]| if mesh.dim == 1 { [coord(0, i), 0.0] } else { [coord(0, i), coord(1, j)] })
        .collect()
}

/// Assembled semi-discrete system `M psi'' + K psi = F`.
#[derive(Debug, Clone)]
pub struct GlobalSystem {
    pub mass: MassOperator,
    pub stiffness: CsrMatrix,
    pub force: Vec<f64>,
    pub n_dof: usize,
}

impl Model {
    pub fn assemble(&self) -> Result<GlobalSystem> {
        assemble(&self.dofs, &self.elements)
    }

    pub fn n_dof(&self) -> usize {
        self.dofs.n_dof
    }

    /// Nodal interpolant of `f` at the global GLL nodes.
    pub fn interpolate(&self, f: impl Fn([f64; 2]) -> f64) -> Vec<f64> {
        self.coordinates.iter().map(|&x| f(x)).collect()
    }

    pub fn cut_elements(&self) -> impl Iterator<Item = &ElementData> {
        self.elements.iter().filter(|e| e.class == ElementClass::Cut)
    }
}

/// Sums element contributions in element order. Lumped element masses go to the
/// diagonal, consistent ones to the sparse correction.
pub fn assemble(dofs: &DofMap, elements: &[ElementData]) -> Result<GlobalSystem> {
    let n = dofs.n_dof;
    if elements.len() != dofs.local_to_global.len() {
        return Err(Error::DofMap("element count differs from the dof map".into()));
    }
    let mut diag = vec![0.0; n];
    let mut mass_corr = Vec::new();
    let mut k_trip = Vec::new();
    let mut force = vec![0.0; n];
    for (el, map) in elements.iter().zip(&dofs.local_to_global) {
        let mat = &el.matrices;
        if map.len() != mat.m.nrows() {
            return Err(Error::DofMap(format!("element {} has {} local dofs, map has {}", el.element, mat.m.nrows(), map.len())));
        }
        for (a, ga) in map.iter().enumerate() {
            let Some(ga) = *ga else { continue };
            if ga >= n {
                return Err(Error::DofMap(format!("global index {ga} out of range {n}")));
            }
            force[ga] += mat.f[a];
            for (b, gb) in map.iter().enumerate() {
                let Some(gb) = *gb else { continue };
                let kv = mat.k[(a, b)];
                if kv != 0.0 {
                    k_trip.push((ga, gb, kv));
                }
                let mv = mat.m[(a, b)];
                if mat.is_lumped {
                    if a == b {
                        diag[ga] += mv;
                    }
                } else if mv != 0.0 || a == b {
                    mass_corr.push((ga, gb, mv));
                }
            }
        }
    }
    Ok(GlobalSystem {
        mass: MassOperator::new(diag, &mass_corr)?,
        stiffness: CsrMatrix::from_triplets(n, &k_trip)?,
        force,
        n_dof: n,
    })
}
