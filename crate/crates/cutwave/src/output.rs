//! CSV rows. Floats use `{:.12e}`; a missing cut fraction is an empty field.

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use cutwave_core::geometry::BoundaryCondition;

use crate::experiments::FieldDump;

pub const SPECTRUM_HEADER: &str = "experiment,bc,stabilization,param,p,n_el,mode_index,omega,omega_ref,ratio";
pub const RESULT_HEADER: &str = "experiment,bc,stabilization,param,p,n_el,cut_fraction,dt_crit,l2_error,n_steps,wall_seconds,status";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    /// Critical step computed, time integration skipped by `max_steps`.
    DtOnly,
    Unstable,
    Failed,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Ok => "ok",
            Self::DtOnly => "dt_only",
            Self::Unstable => "unstable",
            Self::Failed => "failed",
        }
    }

    pub fn is_failure(&self) -> bool {
        matches!(self, Self::Unstable | Self::Failed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumRow {
    pub experiment: &'static str,
    pub bc: BoundaryCondition,
    pub stabilization: &'static str,
    pub param: String,
    pub p: usize,
    pub n_el: usize,
    pub mode_index: usize,
    pub omega: f64,
    pub omega_ref: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub experiment: &'static str,
    pub bc: BoundaryCondition,
    pub stabilization: &'static str,
    pub param: String,
    pub p: usize,
    pub n_el: usize,
    pub cut_fraction: Option<f64>,
    pub dt_crit: f64,
    pub l2_error: f64,
    pub n_steps: usize,
    pub wall_seconds: f64,
    pub status: Status,
}

fn num(x: f64) -> String {
    format!("{x:.12e}")
}

impl SpectrumRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.experiment,
            self.bc.as_str(),
            self.stabilization,
            self.param,
            self.p,
            self.n_el,
            self.mode_index,
            num(self.omega),
            num(self.omega_ref),
            num(self.ratio)
        )
    }
}

impl ResultRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.experiment,
            self.bc.as_str(),
            self.stabilization,
            self.param,
            self.p,
            self.n_el,
            self.cut_fraction.map(num).unwrap_or_default(),
            num(self.dt_crit),
            num(self.l2_error),
            self.n_steps,
            num(self.wall_seconds),
            self.status.as_str()
        )
    }
}

pub fn write_csv(path: &Path, header: &str, lines: impl IntoIterator<Item = String>) -> io::Result<()> {
    let mut text = String::from(header);
    text.push('\n');
    for l in lines {
        text.push_str(&l);
        text.push('\n');
    }
    std::fs::write(path, text)
}

/// `x,psi` (1D) or `x,y,psi` (2D) per dof.
pub fn write_field(path: &Path, field: &FieldDump) -> io::Result<()> {
    let mut text = String::from(if field.dim == 1 { "x,psi\n" } else { "x,y,psi\n" });
    for (c, v) in field.coordinates.iter().zip(&field.values) {
        if field.dim == 1 {
            let _ = writeln!(text, "{},{}", num(c[0]), num(*v));
        } else {
            let _ = writeln!(text, "{},{},{}", num(c[0]), num(c[1]), num(*v));
        }
    }
    std::fs::write(path, text)
}
