//! Experiment drivers. Each driver expands the configuration into independent
//! cells, runs them on the rayon pool and returns rows in cell order.

use std::f64::consts::PI;
use std::time::Instant;

use rayon::prelude::*;

use cutwave_core::analysis::{l2_error, spectrum_accuracy};
use cutwave_core::assembly::{build_model, DirichletTreatment, Model, ModelConfig, NitscheConfig};
use cutwave_core::geometry::{ArcDomain, BoundaryCondition, Domain, RodDomain};
use cutwave_core::stabilize::{stabilize_model, StabilizationConfig, StabilizationMode};
use cutwave_core::timeint::{critical_dt, Cdm, InitialState};

use crate::config::{Config, Experiment};
use crate::output::{ResultRow, SpectrumRow, Status};

/// Width of the rod's initial pulse.
const ROD_SIGMA: f64 = 0.05;
const ARC_THETA0: f64 = PI / 4.0;
const ARC_SIGMA: f64 = PI / 40.0;

/// Discretization variant of a cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Variant {
    /// Uniform elements on the physical rod, no cut elements.
    Fitted,
    Immersed { mode: StabilizationMode, alpha: f64, epsilon: f64 },
}

impl Variant {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Fitted => "fitted",
            Self::Immersed { mode, .. } => mode.as_str(),
        }
    }

    pub fn param(&self) -> String {
        match self {
            Self::Fitted => "none".into(),
            Self::Immersed { mode: StabilizationMode::Evs, epsilon, .. } => format!("eps={epsilon:e}"),
            Self::Immersed { alpha, .. } => format!("alpha={alpha:e}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub bc: BoundaryCondition,
    pub variant: Variant,
    pub p: usize,
    pub n_el: usize,
    /// Target cut fraction of the sweep.
    pub chi: Option<f64>,
}

fn variants(cfg: &Config) -> Vec<Variant> {
    let mut out = Vec::new();
    let rod = cfg.experiment != Experiment::ArcConvergence;
    if cfg.reference && rod {
        out.push(Variant::Fitted);
    }
    for &mode in &cfg.stabilizations {
        let base = Variant::Immersed { mode, alpha: cfg.alpha, epsilon: 0.0 };
        match mode {
            StabilizationMode::Ms if cfg.experiment == Experiment::RodSpectrum => {
                out.extend(cfg.ms_alphas.iter().map(|&alpha| Variant::Immersed { mode, alpha, epsilon: 0.0 }))
            }
            StabilizationMode::Evs => out.extend(cfg.evs_epsilons.iter().map(|&epsilon| Variant::Immersed { mode, alpha: cfg.alpha, epsilon })),
            _ => out.push(base),
        }
    }
    out
}

/// All cells of the configured experiment, in output order.
pub fn cells(cfg: &Config) -> Vec<Cell> {
    let mut out = Vec::new();
    for &bc in &cfg.bcs {
        for variant in variants(cfg) {
            for &p in &cfg.degrees {
                match cfg.experiment {
                    Experiment::RodCutSweep => {
                        out.extend(cfg.cut_fractions.iter().map(|&chi| Cell { bc, variant, p, n_el: cfg.sweep_n_el, chi: Some(chi) }))
                    }
                    _ => out.extend(cfg.n_el.iter().map(|&n_el| Cell { bc, variant, p, n_el, chi: None })),
                }
            }
        }
    }
    out
}

/// Physical rod length of a cell: the configured one, or for the sweep the last
/// element's left edge plus `chi` element lengths.
pub fn rod_physical_length(cfg: &Config, cell: &Cell) -> f64 {
    match cell.chi {
        Some(chi) => {
            let h = cfg.rod_length / cell.n_el as f64;
            cfg.rod_length - h + chi * h
        }
        None => cfg.rod_physical_length,
    }
}

/// Builds and stabilizes the model of a cell.
pub fn cell_model(cfg: &Config, cell: &Cell) -> cutwave_core::Result<Model> {
    let nitsche = NitscheConfig { mode: cfg.nitsche, g_d: 0.0 };
    match (cfg.experiment, cell.variant) {
        (Experiment::ArcConvergence, Variant::Fitted) => {
            Err(cutwave_core::Error::InvalidArgument("no boundary-fitted arc discretization".into()))
        }
        (_, Variant::Fitted) => {
            let l_p = rod_physical_length(cfg, cell);
            let domain = Domain::Rod(RodDomain::new(l_p, l_p, cell.bc)?);
            let mut mc = ModelConfig::new(cell.p, cell.n_el, 1.0)?;
            mc.dirichlet = DirichletTreatment::Strong;
            build_model(&domain, &mc)
        }
        (experiment, Variant::Immersed { mode, alpha, epsilon }) => {
            let domain = match experiment {
                Experiment::ArcConvergence => Domain::Arc(ArcDomain { bc: cell.bc, ..cfg.arc }),
                _ => Domain::Rod(RodDomain::new(cfg.rod_length, rod_physical_length(cfg, cell), cell.bc)?),
            };
            let mut mc = ModelConfig::new(cell.p, cell.n_el, alpha)?;
            mc.nitsche = nitsche;
            mc.quadtree_depth = cfg.quadtree_depth;
            let mut model = build_model(&domain, &mc)?;
            let mut sc = StabilizationConfig::new(mode, alpha);
            if mode == StabilizationMode::Evs {
                sc.epsilon = epsilon;
            }
            sc.f_lambda = cfg.evs_threshold;
            sc.evs_reference = cfg.evs_reference;
            sc.lambda_star = cfg.lambda_star;
            stabilize_model(&mut model, &sc)?;
            Ok(model)
        }
    }
}

/// Closed-form initial displacement of the experiment.
pub fn initial_field(cfg: &Config) -> impl Fn([f64; 2]) -> f64 + Sync + Copy {
    let arc = cfg.arc;
    let rod = cfg.experiment != Experiment::ArcConvergence;
    move |x: [f64; 2]| {
        if rod {
            2.0 * (-x[0] * x[0] / (2.0 * ROD_SIGMA * ROD_SIGMA)).exp()
        } else {
            let theta = (x[1] - arc.center).atan2(x[0] - arc.center);
            2.0 * (-(theta - ARC_THETA0).powi(2) / (2.0 * ARC_SIGMA * ARC_SIGMA)).exp()
        }
    }
}

fn smallest_cut_fraction(model: &Model) -> Option<f64> {
    model.cut_elements().map(|e| e.volume_fraction).reduce(f64::min)
}

/// Field dumped by `dump_field`: dof coordinates and final values.
pub struct FieldDump {
    pub dim: usize,
    pub coordinates: Vec<[f64; 2]>,
    pub values: Vec<f64>,
}

fn time_cell(cfg: &Config, cell: &Cell) -> (ResultRow, Option<FieldDump>) {
    let start = Instant::now();
    let mut row = ResultRow {
        experiment: cfg.experiment.as_str(),
        bc: cell.bc,
        stabilization: cell.variant.label(),
        param: cell.variant.param(),
        p: cell.p,
        n_el: cell.n_el,
        cut_fraction: None,
        dt_crit: f64::NAN,
        l2_error: f64::NAN,
        n_steps: 0,
        wall_seconds: 0.0,
        status: Status::Failed,
    };
    let mut dump = None;
    let outcome = (|| -> cutwave_core::Result<()> {
        let model = cell_model(cfg, cell)?;
        row.cut_fraction = smallest_cut_fraction(&model);
        let system = model.assemble()?;
        let dt_crit = critical_dt(&system)?;
        row.dt_crit = dt_crit;
        let l_p = match model.domain {
            Domain::Rod(r) => r.physical_length,
            Domain::Arc(_) => 0.0,
        };
        let t_final = cfg.final_time(l_p);
        let n = if cfg.fast { (t_final / (0.5 * dt_crit)).ceil() as usize } else { cfg.n_steps };
        row.n_steps = n;
        if cfg.max_steps.is_some_and(|m| n > m) {
            row.status = Status::DtOnly;
            return Ok(());
        }
        let dt = t_final / n as f64;
        if dt >= dt_crit {
            log::warn!("{:?}: dt {dt:e} exceeds the critical step {dt_crit:e}", cell);
            row.status = Status::Unstable;
            return Ok(());
        }
        let psi0 = initial_field(cfg);
        let cdm = Cdm::new(&system, dt)?;
        let state = cdm.initialize(&InitialState::interpolate(&model, psi0, |_| 0.0))?;
        let result = cdm.run(state, n, 0);
        if result.aborted_at.is_some() {
            row.status = Status::Unstable;
            return Ok(());
        }
        let sign = match cell.bc {
            BoundaryCondition::Neumann => 1.0,
            BoundaryCondition::Dirichlet => -1.0,
        };
        row.l2_error = l2_error(&model, &result.state.current, |x| sign * psi0(x), cell.p + 3)?;
        row.status = Status::Ok;
        if cfg.dump_field {
            dump = Some(FieldDump { dim: model.domain.dim(), coordinates: model.coordinates.clone(), values: result.state.current });
        }
        Ok(())
    })();
    if let Err(e) = outcome {
        log::error!("{:?} failed: {e}", cell);
        row.status = Status::Failed;
    }
    row.wall_seconds = start.elapsed().as_secs_f64();
    log::info!(
        "{} {} {} p={} n_el={} dt_crit={:.4e} l2={:.4e} {}",
        row.experiment,
        row.bc.as_str(),
        row.stabilization,
        row.p,
        row.n_el,
        row.dt_crit,
        row.l2_error,
        row.status.as_str()
    );
    (row, dump)
}

/// Rows of a time-integration experiment together with the final fields
/// (present only with `dump_field`).
pub fn run_cells(cfg: &Config) -> Vec<(ResultRow, Option<FieldDump>)> {
    cells(cfg).par_iter().map(|c| time_cell(cfg, c)).collect()
}

/// Rows of a time-integration experiment.
pub fn run_results(cfg: &Config) -> Vec<ResultRow> {
    run_cells(cfg).into_iter().map(|(r, _)| r).collect()
}

/// Full discrete spectra of every rod variant, paired with the analytic ones.
/// A failing cell yields no rows and is reported in the second return value.
pub fn rod_spectrum(cfg: &Config) -> (Vec<SpectrumRow>, Vec<String>) {
    let cells = cells(cfg);
    let out: Vec<cutwave_core::Result<Vec<SpectrumRow>>> = cells
        .par_iter()
        .map(|cell| {
            let model = cell_model(cfg, cell)?;
            let system = model.assemble()?;
            let l_p = rod_physical_length(cfg, cell);
            let entries = spectrum_accuracy(&system, l_p, 1.0, cell.bc)?;
            Ok(entries
                .into_iter()
                .map(|e| SpectrumRow {
                    experiment: cfg.experiment.as_str(),
                    bc: cell.bc,
                    stabilization: cell.variant.label(),
                    param: cell.variant.param(),
                    p: cell.p,
                    n_el: cell.n_el,
                    mode_index: e.mode_index,
                    omega: e.omega,
                    omega_ref: e.omega_ref,
                    ratio: e.ratio,
                })
                .collect())
        })
        .collect();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (cell, r) in cells.iter().zip(out) {
        match r {
            Ok(r) => rows.extend(r),
            Err(e) => failures.push(format!("{cell:?}: {e}")),
        }
    }
    (rows, failures)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectrum_cells_cover_all_variants() {
        let cfg = Config::new(Experiment::RodSpectrum);
        let c = cells(&cfg);
        // fitted, 3 x MS, 2 x EVS, 3 x GEVS for both ends
        assert_eq!(c.len(), 2 * 9);
        assert_eq!(c[0].variant, Variant::Fitted);
        assert_eq!(c[1].variant.param(), "alpha=1e-1");
        assert_eq!(c[4].variant.param(), "eps=1e-2");
    }

    #[test]
    fn sweep_places_the_boundary_in_the_last_element() {
        let cfg = Config::new(Experiment::RodCutSweep);
        for cell in cells(&cfg).iter().take(15) {
            let l_p = rod_physical_length(&cfg, cell);
            assert!((l_p - (0.95 + cell.chi.unwrap() * 0.05)).abs() < 1e-15);
        }
    }

    #[test]
    fn arc_has_no_fitted_cells() {
        let mut cfg = Config::new(Experiment::ArcConvergence);
        cfg.reference = true;
        assert!(cells(&cfg).iter().all(|c| c.variant != Variant::Fitted));
    }

    #[test]
    fn small_rod_cell_runs() {
        let mut cfg = Config::new(Experiment::RodConvergence);
        cfg.degrees = vec![2];
        cfg.n_el = vec![10];
        cfg.fast = true;
        let rows = run_results(&cfg);
        assert_eq!(rows.len(), 4);
        for r in &rows {
            assert_eq!(r.status, Status::Ok, "{r:?}");
            assert!(r.dt_crit > 0.0 && r.l2_error < 1.0);
        }
        assert!(rows[0].cut_fraction.is_none());
        assert!(rows[1].cut_fraction.unwrap() > 0.0);
    }

    #[test]
    fn step_cap_reports_dt_only() {
        let mut cfg = Config::new(Experiment::RodConvergence);
        cfg.degrees = vec![1];
        cfg.n_el = vec![10];
        cfg.max_steps = Some(5);
        cfg.bcs = vec![BoundaryCondition::Neumann];
        let rows = run_results(&cfg);
        assert!(rows.iter().all(|r| r.status == Status::DtOnly && r.l2_error.is_nan() && r.dt_crit > 0.0));
    }

    #[test]
    fn too_few_steps_are_unstable() {
        let mut cfg = Config::new(Experiment::RodConvergence);
        cfg.degrees = vec![1];
        cfg.n_el = vec![10];
        cfg.n_steps = 3;
        cfg.bcs = vec![BoundaryCondition::Neumann];
        assert!(run_results(&cfg).iter().all(|r| r.status == Status::Unstable));
    }
}
