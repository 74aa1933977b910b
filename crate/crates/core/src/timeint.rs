//! Explicit central difference time integration.

use crate::assembly::{GlobalSystem, Model};
use crate::eigensolve::{max_gen_eig, MaxEigMethod};
use crate::error::{Error, Result};
use crate::linalg::MassSolver;

/// Samples kept in the amplitude trace of a run.
const TRACE_SAMPLES: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct CdmState {
    pub current: Vec<f64>,
    pub previous: Vec<f64>,
    pub step: usize,
    pub dt: f64,
    pub time: f64,
}

impl CdmState {
    /// Exchanges the two time levels, which reverses the direction of time.
    pub fn reversed(&self) -> Self {
        Self { current: self.previous.clone(), previous: self.current.clone(), ..self.clone() }
    }
}

/// Nodal initial displacement and velocity.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialState {
    pub displacement: Vec<f64>,
    pub velocity: Vec<f64>,
}

impl InitialState {
    pub fn at_rest(displacement: Vec<f64>) -> Self {
        let n = displacement.len();
        Self { displacement, velocity: vec![0.0; n] }
    }

    /// Nodal interpolation of closed-form fields at the model's GLL nodes.
    pub fn interpolate(model: &Model, psi0: impl Fn([f64; 2]) -> f64, v0: impl Fn([f64; 2]) -> f64) -> Self {
        Self { displacement: model.interpolate(psi0), velocity: model.interpolate(v0) }
    }
}

/// `2 / sqrt(lambda_max(K, M))`.
pub fn critical_dt(system: &GlobalSystem) -> Result<f64> {
    critical_dt_with(system, MaxEigMethod::Auto)
}

pub fn critical_dt_with(system: &GlobalSystem, method: MaxEigMethod) -> Result<f64> {
    let eig = max_gen_eig(&system.stiffness, &system.mass, method)?;
    if !eig.converged {
        log::warn!("largest eigenvalue not converged after {} iterations", eig.iterations);
    }
    if !(eig.value > 0.0) {
        return Err(Error::InvalidArgument(format!("largest eigenvalue {} is not positive", eig.value)));
    }
    Ok(2.0 / eig.value.sqrt())
}

/// Central difference integrator with a mass factorization reused for every step.
#[derive(Debug)]
pub struct Cdm<'a> {
    system: &'a GlobalSystem,
    solver: MassSolver,
    dt: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub state: CdmState,
    /// `(step, max |psi|)` samples.
    pub amplitude_trace: Vec<(usize, f64)>,
    pub max_amplitude: f64,
    /// Step at which non-finite values appeared.
    pub aborted_at: Option<usize>,
    /// Largest relative deviation of the conserved discrete energy from its start value.
    pub energy_drift: f64,
}

impl<'a> Cdm<'a> {
    pub fn new(system: &'a GlobalSystem, dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {dt}")));
        }
        Ok(Self { system, solver: system.mass.factorize()?, dt })
    }

    /// Rejects `dt` at or above the critical step before a run.
    pub fn checked(system: &'a GlobalSystem, dt: f64, dt_crit: f64) -> Result<Self> {
        if dt >= dt_crit {
            return Err(Error::TimeStepTooLarge { dt, dt_crit });
        }
        Self::new(system, dt)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// `M^-1 (F - K psi)`.
    fn acceleration(&self, psi: &[f64], out: &mut [f64], scratch: &mut [f64]) {
        self.system.stiffness.matvec_into(psi, scratch);
        for (s, f) in scratch.iter_mut().zip(&self.system.force) {
            *s = f - *s;
        }
        self.solver.solve_into(scratch, out);
    }

    /// Second-order Taylor start for the level `-1`.
    pub fn initialize(&self, initial: &InitialState) -> Result<CdmState> {
        let n = self.system.n_dof;
        if initial.displacement.len() != n || initial.velocity.len() != n {
            return Err(Error::InvalidArgument("initial state length differs from the system size".into()));
        }
        let mut acc = vec![0.0; n];
        let mut scratch = vec![0.0; n];
        self.acceleration(&initial.displacement, &mut acc, &mut scratch);
        let dt = self.dt;
        let previous = (0..n).map(|i| initial.displacement[i] - dt * initial.velocity[i] + 0.5 * dt * dt * acc[i]).collect();
        Ok(CdmState { current: initial.displacement.clone(), previous, step: 0, dt, time: 0.0 })
    }

    fn step_with(&self, state: &mut CdmState, acc: &mut [f64], scratch: &mut [f64]) -> Result<()> {
        self.acceleration(&state.current, acc, scratch);
        let dt2 = self.dt * self.dt;
        let mut finite = true;
        for i in 0..acc.len() {
            let next = 2.0 * state.current[i] - state.previous[i] + dt2 * acc[i];
            finite &= next.is_finite();
            state.previous[i] = state.current[i];
            state.current[i] = next;
        }
        state.step += 1;
        state.time += self.dt;
        if finite {
            Ok(())
        } else {
            Err(Error::Unstable { step: state.step })
        }
    }

    pub fn step(&self, state: &mut CdmState) -> Result<()> {
        let n = state.current.len();
        self.step_with(state, &mut vec![0.0; n], &mut vec![0.0; n])
    }

    /// Conserved energy of the scheme between levels `k-1` and `k` (for `F = 0`):
    /// `1/2 v^T M v + 1/2 psi_k^T K psi_{k-1}` with `v = (psi_k - psi_{k-1}) / dt`.
    pub fn staggered_energy(&self, state: &CdmState) -> f64 {
        let v: Vec<f64> = state.current.iter().zip(&state.previous).map(|(a, b)| (a - b) / self.dt).collect();
        let mv = self.system.mass.apply(&v);
        let kp = self.system.stiffness.matvec(&state.previous);
        0.5 * dot(&v, &mv) + 0.5 * dot(&state.current, &kp)
    }

    /// `1/2 v^T M v + 1/2 psi_k^T K psi_k` with the backward difference velocity.
    pub fn energy(&self, state: &CdmState) -> f64 {
        let v: Vec<f64> = state.current.iter().zip(&state.previous).map(|(a, b)| (a - b) / self.dt).collect();
        let mv = self.system.mass.apply(&v);
        let kp = self.system.stiffness.matvec(&state.current);
        0.5 * dot(&v, &mv) + 0.5 * dot(&state.current, &kp)
    }

    /// Runs `n_steps` steps. Non-finite values stop the run and are reported in
    /// [`RunResult::aborted_at`]. The energy is monitored every `energy_stride`
    /// steps (0 disables it).
    pub fn run(&self, mut state: CdmState, n_steps: usize, energy_stride: usize) -> RunResult {
        let n = state.current.len();
        let mut acc = vec![0.0; n];
        let mut scratch = vec![0.0; n];
        let stride = (n_steps / TRACE_SAMPLES).max(1);
        let amp = |s: &CdmState| s.current.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut max_amplitude = amp(&state);
        let mut amplitude_trace = vec![(state.step, max_amplitude)];
        let e0 = if energy_stride > 0 { self.staggered_energy(&state) } else { 0.0 };
        let mut energy_drift = 0.0f64;
        let mut aborted_at = None;
        for k in 1..=n_steps {
            if let Err(Error::Unstable { step }) = self.step_with(&mut state, &mut acc, &mut scratch) {
                aborted_at = Some(step);
                max_amplitude = f64::INFINITY;
                break;
            }
            if k % stride == 0 || k == n_steps {
                let a = amp(&state);
                max_amplitude = max_amplitude.max(a);
                amplitude_trace.push((state.step, a));
            }
            if energy_stride > 0 && (k % energy_stride == 0 || k == n_steps) {
                let e = self.staggered_energy(&state);
                energy_drift = energy_drift.max(((e - e0) / e0).abs());
            }
        }
        RunResult { state, amplitude_trace, max_amplitude, aborted_at, energy_drift }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Convenience wrapper: start from `initial` and run with `dt = t_final / n_steps`.
pub fn run(system: &GlobalSystem, initial: &InitialState, t_final: f64, n_steps: usize) -> Result<RunResult> {
    if n_steps == 0 {
        let state = CdmState { current: initial.displacement.clone(), previous: initial.displacement.clone(), step: 0, dt: 0.0, time: 0.0 };
        let a = state.current.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        return Ok(RunResult { state, amplitude_trace: vec![(0, a)], max_amplitude: a, aborted_at: None, energy_drift: 0.0 });
    }
    let cdm = Cdm::new(system, t_final / n_steps as f64)?;
    let state = cdm.initialize(initial)?;
    Ok(cdm.run(state, n_steps, 0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{CsrMatrix, MassOperator};

    fn oscillator(m: f64, k: f64) -> GlobalSystem {
        GlobalSystem {
            mass: MassOperator::from_diagonal(vec![m]),
            stiffness: CsrMatrix::from_triplets(1, &[(0, 0, k)]).unwrap(),
            force: vec![0.0],
            n_dof: 1,
        }
    }

    #[test]
    fn rest_state() {
        let sys = oscillator(1.0, 4.0);
        let cdm = Cdm::new(&sys, 0.1).unwrap();
        let s = cdm.initialize(&InitialState::at_rest(vec![0.0])).unwrap();
        assert_eq!(s.previous, vec![0.0]);
    }

    #[test]
    fn single_linear_element_critical_step() {
        let h = 0.1;
        let sys = GlobalSystem {
            mass: MassOperator::from_diagonal(vec![h / 2.0; 2]),
            stiffness: CsrMatrix::from_triplets(2, &[(0, 0, 1.0 / h), (0, 1, -1.0 / h), (1, 0, -1.0 / h), (1, 1, 1.0 / h)]).unwrap(),
            force: vec![0.0; 2],
            n_dof: 2,
        };
        assert!((critical_dt(&sys).unwrap() - h).abs() < 1e-12);
    }

    #[test]
    fn oscillator_second_order() {
        let sys = oscillator(1.0, 1.0);
        let t = 1.0;
        let err = |n: usize| {
            let r = run(&sys, &InitialState::at_rest(vec![1.0]), t, n).unwrap();
            (r.state.current[0] - t.cos()).abs()
        };
        let (e1, e2) = (err(50), err(100));
        assert!((e1 / e2).log2() > 1.9);
    }

    #[test]
    fn too_large_step_rejected() {
        let sys = oscillator(1.0, 1.0);
        assert!(matches!(Cdm::checked(&sys, 2.5, 2.0), Err(Error::TimeStepTooLarge { .. })));
    }

    #[test]
    fn zero_steps_returns_initial() {
        let sys = oscillator(1.0, 1.0);
        let r = run(&sys, &InitialState::at_rest(vec![0.3]), 1.0, 0).unwrap();
        assert_eq!(r.state.current, vec![0.3]);
    }
}
