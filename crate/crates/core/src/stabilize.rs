//! Stabilization of cut elements: material stabilization (the FCM `alpha`),
//! eigenvalue stabilization of the mass matrix (EVS), and generalized eigenvalue
//! stabilization (GEVS) that deflates element eigenvalues above a target `lambda*`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::assembly::{element_mass, ElementData, MaterialField, Model};
use crate::eigensolve::{gen_sym_eig, sym_eig};
use crate::error::{Error, Result};
use crate::geometry::{CutQuadrature, Domain, ElementBox, ElementClass};
use crate::polybasis::TensorBasis;

/// Relative tolerance under which an eigenvalue counts as equal to `lambda*`.
const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StabilizationMode {
    Ms,
    Evs,
    GevsMass,
    GevsStiffness,
    GevsBoth,
}

impl StabilizationMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Ms => "ms",
            Self::Evs => "evs",
            Self::GevsMass => "gevs-mass",
            Self::GevsStiffness => "gevs-stiffness",
            Self::GevsBoth => "gevs-both",
        }
    }

    pub fn gevs_variant(&self) -> Option<GevsVariant> {
        match self {
            Self::GevsMass => Some(GevsVariant::Mass),
            Self::GevsStiffness => Some(GevsVariant::Stiffness),
            Self::GevsBoth => Some(GevsVariant::Both),
            _ => None,
        }
    }
}

impl std::str::FromStr for StabilizationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ms" => Ok(Self::Ms),
            "evs" => Ok(Self::Evs),
            "gevs-mass" | "gevs" => Ok(Self::GevsMass),
            "gevs-stiffness" => Ok(Self::GevsStiffness),
            "gevs-both" => Ok(Self::GevsBoth),
            other => Err(Error::InvalidArgument(format!("unknown stabilization '{other}'"))),
        }
    }
}

/// Which full-element mass scales the EVS shift.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvsReference {
    Lumped,
    Consistent,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilizationConfig {
    pub mode: StabilizationMode,
    pub alpha: f64,
    pub epsilon: f64,
    pub f_lambda: f64,
    /// GEVS target; `None` selects the full-element reference.
    pub lambda_star: Option<f64>,
    pub evs_reference: EvsReference,
    /// Also deflate uncut elements that carry weak Dirichlet terms.
    pub include_uncut_dirichlet: bool,
}

impl StabilizationConfig {
    pub fn new(mode: StabilizationMode, alpha: f64) -> Self {
        Self {
            mode,
            alpha,
            epsilon: 1e-2,
            f_lambda: 1e-2,
            lambda_star: None,
            evs_reference: EvsReference::Lumped,
            include_uncut_dirichlet: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1], got {}", self.alpha)));
        }
        if !(self.f_lambda > 0.0 && self.f_lambda < 1.0) {
            return Err(Error::InvalidArgument(format!("f_lambda must lie in (0, 1), got {}", self.f_lambda)));
        }
        if self.mode == StabilizationMode::Evs && !(self.epsilon > 0.0) {
            return Err(Error::InvalidArgument("EVS needs epsilon > 0".into()));
        }
        if let Some(l) = self.lambda_star {
            if !(l > 0.0) {
                return Err(Error::InvalidArgument(format!("lambda_star must be positive, got {l}")));
            }
        }
        Ok(())
    }

    /// Parameter label used in result files.
    pub fn param_label(&self) -> String {
        match self.mode {
            StabilizationMode::Ms => format!("alpha={:e}", self.alpha),
            StabilizationMode::Evs => format!("eps={:e}", self.epsilon),
            _ => format!("alpha={:e}", self.alpha),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GevsVariant {
    Mass,
    Stiffness,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DeflationSide {
    Left,
    Right,
    Both,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DeflationReport {
    pub element: usize,
    pub count: usize,
    pub pre_max: f64,
    pub post_max: f64,
    pub pre_min: f64,
    pub coefficients: Vec<f64>,
}

fn rank_one(phi: &DVector<f64>) -> DMatrix<f64> {
    phi * phi.transpose()
}

/// `A + (lambda* - lambda_k) phi phi^T` for a unit eigenvector `phi`.
pub fn deflate_standard(a: &DMatrix<f64>, lambda_k: f64, phi: &DVector<f64>, lambda_star: f64) -> DMatrix<f64> {
    a + rank_one(phi) * (lambda_star - lambda_k)
}

/// Coefficients `(c_A, c_B)` that move the pencil eigenvalue `lambda` to `lambda*`.
fn generalized_coefficients(lambda: f64, lambda_star: f64, side: DeflationSide) -> (f64, f64) {
    match side {
        DeflationSide::Left => (lambda_star - lambda, 0.0),
        DeflationSide::Right => (0.0, lambda / lambda_star - 1.0),
        DeflationSide::Both => {
            let ca = 0.5 * (lambda_star - lambda);
            (ca, (lambda + ca - lambda_star) / lambda_star)
        }
    }
}

/// Rank-one deflation of one B-orthonormal pair of the pencil `(A, B)`.
pub fn deflate_generalized(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    lambda_k: f64,
    phi: &DVector<f64>,
    lambda_star: f64,
    side: DeflationSide,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let norm = (phi.transpose() * b * phi)[(0, 0)];
    if (norm - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("eigenvector is not B-normalized (phi^T B phi = {norm})")));
    }
    if !(lambda_star > 0.0) {
        return Err(Error::InvalidArgument("lambda_star must be positive".into()));
    }
    let (ca, cb) = generalized_coefficients(lambda_k, lambda_star, side);
    if side != DeflationSide::Left && 1.0 + cb <= 0.0 {
        return Err(Error::InvalidArgument(format!("deflation would make B indefinite (1 + c_B = {})", 1.0 + cb)));
    }
    let bphi = b * phi;
    let p = rank_one(&bphi);
    Ok((a + &p * ca, b + &p * cb))
}

/// Largest entry of a matrix.
fn max_entry(a: &DMatrix<f64>) -> f64 {
    a.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// EVS: lifts the mass eigenvalues below `f_lambda * lambda_max` by
/// `epsilon * max(m_full) / max(m_s0)` where `m_s0` is the sum of their projectors.
pub fn evs_mass(m: &DMatrix<f64>, m_full: &DMatrix<f64>, epsilon: f64, f_lambda: f64) -> Result<DMatrix<f64>> {
    let eig = sym_eig(m)?;
    let threshold = f_lambda * eig.max();
    let mut s0 = DMatrix::zeros(m.nrows(), m.ncols());
    let mut any = false;
    for (i, &l) in eig.values.iter().enumerate() {
        if l < threshold {
            s0 += rank_one(&eig.vectors.column(i).into_owned());
            any = true;
        }
    }
    if !any {
        return Ok(m.clone());
    }
    let scale = max_entry(m_full) / max_entry(&s0);
    Ok(m + s0 * (epsilon * scale))
}

/// Deflates every eigenvalue of `(k, m)` above `lambda*` onto `lambda*`.
pub fn gevs(k: &DMatrix<f64>, m: &DMatrix<f64>, lambda_star: f64, variant: GevsVariant) -> Result<(DMatrix<f64>, DMatrix<f64>, DeflationReport)> {
    if !(lambda_star > 0.0) {
        return Err(Error::InvalidArgument("lambda_star must be positive".into()));
    }
    let eig = gen_sym_eig(k, m)?;
    let mut report = DeflationReport { pre_max: eig.max(), pre_min: eig.values[0], ..Default::default() };
    let mut kt = k.clone();
    let mut mt = m.clone();
    for (i, &l) in eig.values.iter().enumerate() {
        if l <= lambda_star * (1.0 + TIE_TOL) {
            continue;
        }
        let mphi = m * eig.vectors.column(i);
        let p = rank_one(&mphi);
        let (ck, cm) = match variant {
            GevsVariant::Mass => generalized_coefficients(l, lambda_star, DeflationSide::Right),
            GevsVariant::Stiffness => generalized_coefficients(l, lambda_star, DeflationSide::Left),
            GevsVariant::Both => generalized_coefficients(l, lambda_star, DeflationSide::Both),
        };
        if ck != 0.0 {
            kt += &p * ck;
            report.coefficients.push(ck);
        }
        if cm != 0.0 {
            mt += &p * cm;
            report.coefficients.push(cm);
        }
        report.count += 1;
    }
    kt = (&kt + kt.transpose()) * 0.5;
    mt = (&mt + mt.transpose()) * 0.5;
    report.post_max = if report.count == 0 { report.pre_max } else { gen_sym_eig(&kt, &mt)?.max() };
    Ok((kt, mt, report))
}

/// Full-element GLL quadrature matrices of an uncut element with the given box:
/// stiffness, lumped mass and consistent mass.
pub fn full_element_matrices(domain: &Domain, basis: &TensorBasis, material: &MaterialField, bounds: &ElementBox) -> Result<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let full = MaterialField { alpha: 1.0, ..*material };
    let gll = CutQuadrature::gll(0, basis.dim(), basis.degree())?;
    let (k, _) = crate::assembly::element_stiffness(&gll, &[], basis, domain, &full, &Default::default(), bounds)?;
    let lumped = element_mass(None, basis, &full, bounds)?;
    let gauss = CutQuadrature::gauss(0, basis.dim(), basis.degree() + 2)?;
    let consistent = element_mass(Some(&gauss), basis, &full, bounds)?;
    Ok((k, lumped, consistent))
}

/// Largest eigenvalue of the full-element pencil with lumped mass.
pub fn lambda_star_reference(domain: &Domain, basis: &TensorBasis, material: &MaterialField, bounds: &ElementBox) -> Result<f64> {
    let (k, m, _) = full_element_matrices(domain, basis, material, bounds)?;
    Ok(gen_sym_eig(&k, &m)?.max())
}

/// `lambda*` for a model: the maximum over internal elements without Dirichlet
/// terms, or the full-element pencil of the first active element if there are none.
pub fn model_lambda_star(model: &Model) -> Result<f64> {
    let internal: Vec<&ElementData> = model.elements.iter().filter(|e| e.class == ElementClass::Internal && !e.has_dirichlet).collect();
    if internal.is_empty() {
        let bounds = model.elements.first().ok_or_else(|| Error::InvalidArgument("model has no active elements".into()))?.bounds;
        return lambda_star_reference(&model.domain, &model.basis, &model.config.material, &bounds);
    }
    let values = internal
        .par_iter()
        .map(|e| gen_sym_eig(&e.matrices.k, &e.matrices.m).map(|eig| eig.max()))
        .collect::<Result<Vec<f64>>>()?;
    Ok(values.into_iter().fold(f64::NEG_INFINITY, f64::max))
}

/// Applies the configured stabilization to the cut elements of `model` in place.
/// Returns one report per modified element (GEVS only) and the `lambda*` used.
pub fn stabilize_model(model: &mut Model, config: &StabilizationConfig) -> Result<(Vec<DeflationReport>, Option<f64>)> {
    config.validate()?;
    if (config.alpha - model.config.material.alpha).abs() > 0.0 {
        return Err(Error::InvalidArgument(format!(
            "stabilization alpha {} differs from the model's alpha {}",
            config.alpha, model.config.material.alpha
        )));
    }
    let include_uncut = config.include_uncut_dirichlet;
    let selected = |e: &ElementData| e.class == ElementClass::Cut || (include_uncut && e.has_dirichlet);
    match config.mode {
        StabilizationMode::Ms => Ok((Vec::new(), None)),
        StabilizationMode::Evs => {
            let (domain, basis, material) = (model.domain, model.basis.clone(), model.config.material);
            model.elements.par_iter_mut().filter(|e| e.class == ElementClass::Cut).try_for_each(|e| -> Result<()> {
                let (_, lumped, consistent) = full_element_matrices(&domain, &basis, &material, &e.bounds)?;
                let m_full = match config.evs_reference {
                    EvsReference::Lumped => lumped,
                    EvsReference::Consistent => consistent,
                };
                e.matrices.m = evs_mass(&e.matrices.m, &m_full, config.epsilon, config.f_lambda)?;
                Ok(())
            })?;
            Ok((Vec::new(), None))
        }
        mode => {
            let variant = mode.gevs_variant().expect("GEVS mode");
            let lambda_star = match config.lambda_star {
                Some(l) => l,
                None => model_lambda_star(model)?,
            };
            let reports = model
                .elements
                .par_iter_mut()
                .filter(|e| selected(e))
                .map(|e| -> Result<DeflationReport> {
                    let (k, m, mut report) = gevs(&e.matrices.k, &e.matrices.m, lambda_star, variant)?;
                    e.matrices.k = k;
                    e.matrices.m = m;
                    e.matrices.is_lumped = false;
                    report.element = e.element;
                    Ok(report)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((reports, Some(lambda_star)))
        }
    }
}
