//! Immersed domains, Cartesian meshes and cut-cell quadrature.
//!
//! Two physical domains are supported: a rod `[0, l_p]` embedded in `[0, l]` and a
//! quarter-annulus sector ("arc") embedded in the square `[0, l]^2`. Elements of the
//! extended mesh are classified as internal, cut or outside; cut elements get a
//! quadrature that resolves the physical and fictitious parts separately, and the
//! parts of the physical boundary inside an element get their own surface rule.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::polybasis::QuadratureRule1D;

/// Boundary condition type at the immersed boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BoundaryCondition {
    Neumann,
    Dirichlet,
}

impl BoundaryCondition {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Neumann => "neumann",
            Self::Dirichlet => "dirichlet",
        }
    }
}

/// Rod `[0, physical_length]` embedded in `[0, length]`. The left end is a
/// homogeneous Neumann end; the right end carries `right_bc`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RodDomain {
    pub length: f64,
    pub physical_length: f64,
    pub right_bc: BoundaryCondition,
}

impl RodDomain {
    pub fn new(length: f64, physical_length: f64, right_bc: BoundaryCondition) -> Result<Self> {
        if !(physical_length > 0.0 && physical_length <= length) {
            return Err(Error::InvalidArgument(format!(
                "rod requires 0 < l_p <= l, got l_p = {physical_length}, l = {length}"
            )));
        }
        Ok(Self { length, physical_length, right_bc })
    }
}

/// Annular sector `r_i <= r <= r_o`, `theta_gamma <= theta <= pi/2 - theta_gamma`
/// around `(center, center)`, embedded in `[0, side]^2`. Dirichlet conditions, when
/// selected, apply on the two radial end faces; the circular arcs are Neumann.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArcDomain {
    pub side: f64,
    pub center: f64,
    pub inner_radius: f64,
    pub outer_radius: f64,
    pub theta_gamma: f64,
    pub bc: BoundaryCondition,
}

impl Default for ArcDomain {
    fn default() -> Self {
        Self {
            side: 1.1,
            center: 0.05,
            inner_radius: 0.5,
            outer_radius: 1.0,
            theta_gamma: PI / 16.0,
            bc: BoundaryCondition::Neumann,
        }
    }
}

impl ArcDomain {
    pub fn validate(&self) -> Result<()> {
        let ok_radii = 0.0 <= self.inner_radius && self.inner_radius < self.outer_radius;
        let ok_angle = self.theta_gamma > 0.0 && self.theta_gamma < PI / 4.0;
        let ok_box = self.center >= 0.0 && self.center + self.outer_radius <= self.side;
        if ok_radii && ok_angle && ok_box {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid arc geometry {self:?}")))
        }
    }

    fn theta_range(&self) -> (f64, f64) {
        (self.theta_gamma, 0.5 * PI - self.theta_gamma)
    }

    /// Physical `y`-interval on the vertical line through `x`; the sector's
    /// vertical cross sections are always a single interval.
    fn vertical_section(&self, x: f64) -> Option<(f64, f64)> {
        let dx = x - self.center;
        if dx <= 0.0 || dx >= self.outer_radius {
            return None;
        }
        let (ta, tb) = self.theta_range();
        let lo = (dx * ta.tan()).max((self.inner_radius.powi(2) - dx * dx).max(0.0).sqrt());
        let hi = (dx * tb.tan()).min((self.outer_radius.powi(2) - dx * dx).sqrt());
        (lo < hi).then_some((self.center + lo, self.center + hi))
    }

    /// `x`-positions where the vertical section (clipped to `[y0, y1]`) is not smooth.
    fn section_breakpoints(&self, y0: f64, y1: f64) -> Vec<f64> {
        let d = self.center;
        let (ta, tb) = self.theta_range();
        let radii = [self.inner_radius, self.outer_radius];
        let mut xs = vec![d];
        for r in radii {
            xs.push(d + r);
            for t in [ta, tb] {
                xs.push(d + r * t.cos());
            }
        }
        for yc in [y0, y1] {
            let dy = yc - d;
            if dy > 0.0 {
                for t in [ta, tb] {
                    xs.push(d + dy / t.tan());
                }
            }
            for r in radii {
                if dy.abs() <= r {
                    xs.push(d + (r * r - dy * dy).sqrt());
                }
            }
        }
        xs
    }

    fn pieces(&self) -> [ArcPiece; 4] {
        let (ta, tb) = self.theta_range();
        let bc_faces = self.bc;
        [
            ArcPiece::Circle { radius: self.outer_radius, outward: 1.0, range: (ta, tb) },
            ArcPiece::Circle { radius: self.inner_radius, outward: -1.0, range: (ta, tb) },
            ArcPiece::Radial { theta: ta, outward: -1.0, range: (self.inner_radius, self.outer_radius), bc: bc_faces },
            ArcPiece::Radial { theta: tb, outward: 1.0, range: (self.inner_radius, self.outer_radius), bc: bc_faces },
        ]
    }
}

/// One smooth piece of the arc boundary, parameterized by angle (circles) or by
/// radius (radial faces).
#[derive(Debug, Clone, Copy)]
enum ArcPiece {
    Circle { radius: f64, outward: f64, range: (f64, f64) },
    Radial { theta: f64, outward: f64, range: (f64, f64), bc: BoundaryCondition },
}

impl ArcPiece {
    fn range(&self) -> (f64, f64) {
        match *self {
            Self::Circle { range, .. } | Self::Radial { range, .. } => range,
        }
    }

    fn kind(&self) -> BoundaryCondition {
        match *self {
            Self::Circle { .. } => BoundaryCondition::Neumann,
            Self::Radial { bc, .. } => bc,
        }
    }

    /// Point, outward normal and arclength density at parameter `t`.
    fn eval(&self, center: f64, t: f64) -> ([f64; 2], [f64; 2], f64) {
        match *self {
            Self::Circle { radius, outward, .. } => {
                let (s, c) = t.sin_cos();
                ([center + radius * c, center + radius * s], [outward * c, outward * s], radius)
            }
            Self::Radial { theta, outward, .. } => {
                let (s, c) = theta.sin_cos();
                // +1 rotates the radial direction counter-clockwise.
                ([center + t * c, center + t * s], [-outward * s, outward * c], 1.0)
            }
        }
    }

    /// Parameters where the piece crosses the lines `x = xc` and `y = yc`.
    fn crossings(&self, center: f64, xs: [f64; 2], ys: [f64; 2]) -> Vec<f64> {
        let mut out = Vec::new();
        match *self {
            Self::Circle { radius, .. } => {
                for xc in xs {
                    let a = (xc - center) / radius;
                    if a.abs() <= 1.0 {
                        out.push(a.acos());
                    }
                }
                for yc in ys {
                    let a = (yc - center) / radius;
                    if a.abs() <= 1.0 {
                        out.push(a.asin());
                        out.push(PI - a.asin());
                    }
                }
            }
            Self::Radial { theta, .. } => {
                let (s, c) = theta.sin_cos();
                for xc in xs {
                    out.push((xc - center) / c);
                }
                for yc in ys {
                    out.push((yc - center) / s);
                }
            }
        }
        out
    }
}

/// Either of the two supported immersed domains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Domain {
    Rod(RodDomain),
    Arc(ArcDomain),
}

/// Axis-aligned element box; in 1D only the first component is meaningful.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementBox {
    pub dim: usize,
    pub lower: [f64; 2],
    pub upper: [f64; 2],
}

impl ElementBox {
    pub fn interval(a: f64, b: f64) -> Self {
        Self { dim: 1, lower: [a, 0.0], upper: [b, 0.0] }
    }

    pub fn rect(lower: [f64; 2], upper: [f64; 2]) -> Self {
        Self { dim: 2, lower, upper }
    }

    pub fn size(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }

    pub fn measure(&self) -> f64 {
        (0..self.dim).map(|k| self.size(k)).product()
    }

    /// Determinant of the affine reference-to-physical map.
    pub fn jacobian(&self) -> f64 {
        (0..self.dim).map(|k| 0.5 * self.size(k)).product()
    }

    pub fn to_physical(&self, xi: [f64; 2]) -> [f64; 2] {
        let mut x = [0.0; 2];
        for k in 0..self.dim {
            x[k] = self.lower[k] + 0.5 * (xi[k] + 1.0) * self.size(k);
        }
        x
    }

    pub fn to_reference(&self, x: [f64; 2]) -> [f64; 2] {
        let mut xi = [0.0; 2];
        for k in 0..self.dim {
            xi[k] = 2.0 * (x[k] - self.lower[k]) / self.size(k) - 1.0;
        }
        xi
    }

    pub fn center(&self) -> [f64; 2] {
        self.to_physical([0.0, 0.0])
    }

    fn contains_closed(&self, x: [f64; 2], tol: f64) -> bool {
        (0..self.dim).all(|k| x[k] >= self.lower[k] - tol && x[k] <= self.upper[k] + tol)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ElementClass {
    Internal,
    Cut,
    Outside,
}

/// Quadrature over one element with the FCM indicator at each point. Points are
/// reference coordinates and weights are reference measure (multiply by the
/// element Jacobian for physical measure).
#[derive(Debug, Clone, Default)]
pub struct CutQuadrature {
    pub element: usize,
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub indicator: Vec<f64>,
    pub physical: Vec<bool>,
    pub volume_fraction: f64,
}

impl CutQuadrature {
    fn push(&mut self, xi: [f64; 2], w: f64, physical: bool, alpha: f64) {
        self.points.push(xi);
        self.weights.push(w);
        self.physical.push(physical);
        self.indicator.push(if physical { 1.0 } else { alpha });
    }

    fn finish(mut self, dim: usize) -> Self {
        let full = 2f64.powi(dim as i32);
        let phys: f64 = self.weights.iter().zip(&self.physical).filter(|(_, &p)| p).map(|(w, _)| w).sum();
        self.volume_fraction = phys / full;
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `sum(weight * indicator) * jacobian`.
    pub fn weighted_volume(&self, jacobian: f64) -> f64 {
        self.weights.iter().zip(&self.indicator).map(|(w, a)| w * a).sum::<f64>() * jacobian
    }

    /// Full-element tensor GLL rule with indicator one.
    pub fn gll(element: usize, dim: usize, degree: usize) -> Result<Self> {
        Self::tensor(element, dim, &QuadratureRule1D::gauss_lobatto(degree)?)
    }

    /// Full-element tensor Gauss–Legendre rule with indicator one.
    pub fn gauss(element: usize, dim: usize, n_points: usize) -> Result<Self> {
        Self::tensor(element, dim, &QuadratureRule1D::gauss_legendre(n_points)?)
    }

    fn tensor(element: usize, dim: usize, rule: &QuadratureRule1D) -> Result<Self> {
        let mut q = Self { element, ..Default::default() };
        if dim == 1 {
            for (&x, &w) in rule.points.iter().zip(&rule.weights) {
                q.push([x, 0.0], w, true, 1.0);
            }
        } else {
            for (&y, &wy) in rule.points.iter().zip(&rule.weights) {
                for (&x, &wx) in rule.points.iter().zip(&rule.weights) {
                    q.push([x, y], wx * wy, true, 1.0);
                }
            }
        }
        Ok(q.finish(dim))
    }
}

/// Surface quadrature on the part of the physical boundary inside an element.
/// Points are reference coordinates; weights carry the physical surface measure
/// (a unit point mass in 1D).
#[derive(Debug, Clone)]
pub struct BoundaryFacetQuadrature {
    pub element: usize,
    pub kind: BoundaryCondition,
    pub points: Vec<[f64; 2]>,
    pub weights: Vec<f64>,
    pub normals: Vec<[f64; 2]>,
}

impl BoundaryFacetQuadrature {
    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }
}

const GEOM_TOL: f64 = 1e-13;

impl Domain {
    pub fn dim(&self) -> usize {
        match self {
            Self::Rod(_) => 1,
            Self::Arc(_) => 2,
        }
    }

    /// Size of the extended domain per axis.
    pub fn extent(&self) -> [f64; 2] {
        match self {
            Self::Rod(r) => [r.length, 0.0],
            Self::Arc(a) => [a.side, a.side],
        }
    }

    pub fn contains(&self, x: [f64; 2]) -> bool {
        match self {
            Self::Rod(r) => x[0] >= 0.0 && x[0] <= r.physical_length,
            Self::Arc(a) => {
                let (dx, dy) = (x[0] - a.center, x[1] - a.center);
                let r = dx.hypot(dy);
                let t = dy.atan2(dx);
                let (ta, tb) = a.theta_range();
                r >= a.inner_radius && r <= a.outer_radius && t >= ta && t <= tb
            }
        }
    }

    /// Wave speed: uniform one on the rod, `r / r_o` on the arc.
    pub fn wave_speed(&self, x: [f64; 2]) -> f64 {
        match self {
            Self::Rod(_) => 1.0,
            Self::Arc(a) => (x[0] - a.center).hypot(x[1] - a.center) / a.outer_radius,
        }
    }

    /// Exact classification for both domains: an element is cut when a boundary
    /// piece of positive length passes through it.
    pub fn classify(&self, bounds: &ElementBox) -> ElementClass {
        match self {
            Self::Rod(r) => {
                let (a, b) = (bounds.lower[0], bounds.upper[0]);
                if b <= r.physical_length {
                    ElementClass::Internal
                } else if a >= r.physical_length {
                    ElementClass::Outside
                } else {
                    ElementClass::Cut
                }
            }
            Self::Arc(arc) => classify_rect(arc, bounds),
        }
    }

    /// Boundary pieces of the physical domain inside the element, with
    /// `n_points` Gauss points per piece in 2D.
    pub fn boundary_quadrature(&self, element: usize, bounds: &ElementBox, n_points: usize) -> Result<Vec<BoundaryFacetQuadrature>> {
        match self {
            Self::Rod(r) => {
                let (a, b) = (bounds.lower[0], bounds.upper[0]);
                let lp = r.physical_length;
                if lp > a && lp <= b {
                    Ok(vec![BoundaryFacetQuadrature {
                        element,
                        kind: r.right_bc,
                        points: vec![bounds.to_reference([lp, 0.0])],
                        weights: vec![1.0],
                        normals: vec![[1.0, 0.0]],
                    }])
                } else {
                    Ok(Vec::new())
                }
            }
            Self::Arc(arc) => {
                let rule = QuadratureRule1D::gauss_legendre(n_points)?;
                let mut out = Vec::new();
                for piece in arc.pieces() {
                    let segments = clip_piece(arc, &piece, bounds);
                    if segments.is_empty() {
                        continue;
                    }
                    let mut facet = BoundaryFacetQuadrature {
                        element,
                        kind: piece.kind(),
                        points: Vec::new(),
                        weights: Vec::new(),
                        normals: Vec::new(),
                    };
                    for (t0, t1) in segments {
                        for (t, w) in rule.mapped(t0, t1) {
                            let (x, n, ds) = piece.eval(arc.center, t);
                            facet.points.push(bounds.to_reference(x));
                            facet.weights.push(w * ds);
                            facet.normals.push(n);
                        }
                    }
                    out.push(facet);
                }
                Ok(out)
            }
        }
    }

    /// Quadrature used for the system matrices of an active element: the tensor
    /// GLL rule on internal elements and the cut-cell rule on cut elements.
    pub fn element_quadrature(
        &self,
        element: usize,
        bounds: &ElementBox,
        class: ElementClass,
        degree: usize,
        alpha: f64,
        depth: usize,
    ) -> Result<CutQuadrature> {
        match class {
            ElementClass::Internal => CutQuadrature::gll(element, self.dim(), degree),
            ElementClass::Cut => self.cut_quadrature(element, bounds, degree + 1, alpha, depth),
            ElementClass::Outside => Err(Error::InvalidArgument(format!("element {element} is outside the domain"))),
        }
    }

    /// Cut-cell quadrature with `n_points` Gauss points per direction and part.
    pub fn cut_quadrature(&self, element: usize, bounds: &ElementBox, n_points: usize, alpha: f64, depth: usize) -> Result<CutQuadrature> {
        match self {
            Self::Rod(r) => rod_cut_quadrature(r, element, bounds, n_points, alpha),
            Self::Arc(a) => arc_cut_quadrature(a, element, bounds, n_points, alpha, depth),
        }
    }
}

/// Splits a cut rod element at `l_p` and puts `n_points` Gauss points on each side.
pub fn rod_cut_quadrature(rod: &RodDomain, element: usize, bounds: &ElementBox, n_points: usize, alpha: f64) -> Result<CutQuadrature> {
    let rule = QuadratureRule1D::gauss_legendre(n_points)?;
    let split = bounds.to_reference([rod.physical_length, 0.0])[0].clamp(-1.0, 1.0);
    let mut q = CutQuadrature { element, ..Default::default() };
    for (a, b, physical) in [(-1.0, split, true), (split, 1.0, false)] {
        if b - a <= 0.0 {
            continue;
        }
        for (x, w) in rule.mapped(a, b) {
            q.push([x, 0.0], w, physical, alpha);
        }
    }
    let mut q = q.finish(1);
    q.volume_fraction = ((rod.physical_length - bounds.lower[0]) / bounds.size(0)).clamp(0.0, 1.0);
    Ok(q)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RectClass {
    Inside,
    Outside,
    Crossing,
}

fn rect_class(arc: &ArcDomain, bounds: &ElementBox) -> RectClass {
    if arc.pieces().iter().any(|p| !clip_piece(arc, p, bounds).is_empty()) {
        RectClass::Crossing
    } else if Domain::Arc(*arc).contains(bounds.center()) {
        RectClass::Inside
    } else {
        RectClass::Outside
    }
}

fn classify_rect(arc: &ArcDomain, bounds: &ElementBox) -> ElementClass {
    match rect_class(arc, bounds) {
        RectClass::Inside => ElementClass::Internal,
        RectClass::Outside => ElementClass::Outside,
        RectClass::Crossing => ElementClass::Cut,
    }
}

/// Parameter intervals of `piece` that lie inside the closed box.
fn clip_piece(arc: &ArcDomain, piece: &ArcPiece, bounds: &ElementBox) -> Vec<(f64, f64)> {
    let (t0, t1) = piece.range();
    let mut ts: Vec<f64> = piece
        .crossings(arc.center, [bounds.lower[0], bounds.upper[0]], [bounds.lower[1], bounds.upper[1]])
        .into_iter()
        .filter(|&t| t > t0 && t < t1)
        .collect();
    ts.push(t0);
    ts.push(t1);
    ts.sort_by(f64::total_cmp);
    let scale = bounds.size(0).max(bounds.size(1));
    let mut out: Vec<(f64, f64)> = Vec::new();
    for w in ts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b - a <= 1e-14 * (1.0 + t1.abs()) {
            continue;
        }
        let (x, _, _) = piece.eval(arc.center, 0.5 * (a + b));
        if bounds.contains_closed(x, GEOM_TOL * scale) {
            match out.last_mut() {
                Some(last) if (last.1 - a).abs() <= 1e-14 => last.1 = b,
                _ => out.push((a, b)),
            }
        }
    }
    out
}

/// Quadtree cut-cell quadrature for the arc. Leaves entirely inside or outside get a
/// tensor Gauss rule with indicator one or `alpha`; leaves at maximal depth that
/// still contain boundary are integrated by vertical sections, splitting each
/// section analytically into its physical and fictitious parts.
pub fn arc_cut_quadrature(
    arc: &ArcDomain,
    element: usize,
    bounds: &ElementBox,
    n_points: usize,
    alpha: f64,
    depth: usize,
) -> Result<CutQuadrature> {
    let leaf_rule = QuadratureRule1D::gauss_legendre(n_points)?;
    let section_rule = QuadratureRule1D::gauss_legendre(n_points + 1)?;
    let mut q = CutQuadrature { element, ..Default::default() };
    let ref_scale = [2.0 / bounds.size(0), 2.0 / bounds.size(1)];
    let mut stack = vec![(*bounds, 0usize)];
    while let Some((cell, level)) = stack.pop() {
        match rect_class(arc, &cell) {
            class @ (RectClass::Inside | RectClass::Outside) => {
                let physical = class == RectClass::Inside;
                for (y, wy) in leaf_rule.mapped(cell.lower[1], cell.upper[1]) {
                    for (x, wx) in leaf_rule.mapped(cell.lower[0], cell.upper[0]) {
                        q.push(bounds.to_reference([x, y]), wx * wy * ref_scale[0] * ref_scale[1], physical, alpha);
                    }
                }
            }
            RectClass::Crossing if level < depth => {
                let c = cell.center();
                let (lo, hi) = (cell.lower, cell.upper);
                // Reverse order so that children pop in lexicographic order.
                stack.push((ElementBox::rect([c[0], c[1]], [hi[0], hi[1]]), level + 1));
                stack.push((ElementBox::rect([lo[0], c[1]], [c[0], hi[1]]), level + 1));
                stack.push((ElementBox::rect([c[0], lo[1]], [hi[0], c[1]]), level + 1));
                stack.push((ElementBox::rect([lo[0], lo[1]], [c[0], c[1]]), level + 1));
            }
            RectClass::Crossing => {
                section_quadrature(arc, &cell, bounds, &section_rule, ref_scale, alpha, &mut q);
            }
        }
    }
    Ok(q.finish(2))
}

fn section_quadrature(
    arc: &ArcDomain,
    cell: &ElementBox,
    element_box: &ElementBox,
    rule: &QuadratureRule1D,
    ref_scale: [f64; 2],
    alpha: f64,
    q: &mut CutQuadrature,
) {
    let (x0, x1) = (cell.lower[0], cell.upper[0]);
    let (y0, y1) = (cell.lower[1], cell.upper[1]);
    let mut xs: Vec<f64> = arc.section_breakpoints(y0, y1).into_iter().filter(|&x| x > x0 && x < x1).collect();
    xs.push(x0);
    xs.push(x1);
    xs.sort_by(f64::total_cmp);
    xs.dedup_by(|a, b| (*a - *b).abs() <= 1e-15 * (1.0 + b.abs()));
    for w in xs.windows(2) {
        for (x, wx) in rule.mapped(w[0], w[1]) {
            let parts: [(f64, f64, bool); 3] = match arc.vertical_section(x) {
                Some((lo, hi)) => {
                    let lo = lo.clamp(y0, y1);
                    let hi = hi.clamp(y0, y1);
                    [(y0, lo, false), (lo, hi, true), (hi, y1, false)]
                }
                None => [(y0, y1, false), (y1, y1, true), (y1, y1, false)],
            };
            for (a, b, physical) in parts {
                if b - a <= 0.0 {
                    continue;
                }
                for (y, wy) in rule.mapped(a, b) {
                    q.push(element_box.to_reference([x, y]), wx * wy * ref_scale[0] * ref_scale[1], physical, alpha);
                }
            }
        }
    }
}

/// Uniform Cartesian mesh of the extended domain with per-element classes.
#[derive(Debug, Clone)]
pub struct CartesianMesh {
    pub dim: usize,
    pub extent: [f64; 2],
    pub n_el: [usize; 2],
    pub classes: Vec<ElementClass>,
    pub active: Vec<usize>,
}

impl CartesianMesh {
    /// `n_el` elements per axis over the domain's extended box.
    pub fn new(domain: &Domain, n_el: usize) -> Result<Self> {
        if n_el == 0 {
            return Err(Error::InvalidArgument("mesh needs at least one element".into()));
        }
        if let Domain::Arc(a) = domain {
            a.validate()?;
        }
        let dim = domain.dim();
        let counts = if dim == 1 { [n_el, 1] } else { [n_el, n_el] };
        let mut mesh = Self { dim, extent: domain.extent(), n_el: counts, classes: Vec::new(), active: Vec::new() };
        mesh.classes = (0..mesh.n_elements()).map(|e| domain.classify(&mesh.element_box(e))).collect();
        mesh.active = (0..mesh.n_elements()).filter(|&e| mesh.classes[e] != ElementClass::Outside).collect();
        Ok(mesh)
    }

    pub fn n_elements(&self) -> usize {
        self.n_el[0] * self.n_el[1]
    }

    pub fn element_size(&self, axis: usize) -> f64 {
        self.extent[axis] / self.n_el[axis] as f64
    }

    /// Grid position of element `e` (x index runs fastest).
    pub fn element_index(&self, e: usize) -> [usize; 2] {
        [e % self.n_el[0], e / self.n_el[0]]
    }

    pub fn element_box(&self, e: usize) -> ElementBox {
        let [i, j] = self.element_index(e);
        // The last element ends exactly at the extent so boundary-fitted meshes
        // are not misclassified by rounding.
        let edge = |axis: usize, k: usize| {
            if k == self.n_el[axis] {
                self.extent[axis]
            } else {
                k as f64 * self.element_size(axis)
            }
        };
        if self.dim == 1 {
            ElementBox::interval(edge(0, i), edge(0, i + 1))
        } else {
            ElementBox::rect([edge(0, i), edge(1, j)], [edge(0, i + 1), edge(1, j + 1)])
        }
    }

    pub fn cut_elements(&self) -> impl Iterator<Item = usize> + '_ {
        self.active.iter().copied().filter(|&e| self.classes[e] == ElementClass::Cut)
    }
}
