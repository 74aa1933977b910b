//! Quick end-to-end sanity checks run by `cutwave selftest`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use cutwave_core::assembly::{build_model, GlobalSystem, ModelConfig};
use cutwave_core::eigensolve::dense_gen_eigenvalues;
use cutwave_core::geometry::{BoundaryCondition, Domain, RodDomain};
use cutwave_core::linalg::{CsrMatrix, MassOperator};
use cutwave_core::polybasis::QuadratureRule1D;
use cutwave_core::stabilize::{gevs, stabilize_model, GevsVariant, StabilizationConfig, StabilizationMode};
use cutwave_core::timeint::{critical_dt, run, InitialState};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

fn quadrature() -> Check {
    let mut worst = 0.0f64;
    for p in 1..=10 {
        let gll = QuadratureRule1D::gauss_lobatto(p).expect("valid degree");
        let gl = QuadratureRule1D::gauss_legendre(p).expect("valid size");
        let exact = |k: i32| if k % 2 == 0 { 2.0 / (k as f64 + 1.0) } else { 0.0 };
        for k in 0..=(2 * p as i32 - 1) {
            worst = worst.max((gll.integrate(|x| x.powi(k)) - exact(k)).abs());
            worst = worst.max((gl.integrate(|x| x.powi(k)) - exact(k)).abs());
        }
    }
    check("quadrature exactness (p <= 10)", worst < 1e-12, format!("max error {worst:.2e}"))
}

fn random_spd(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() * scale + DMatrix::identity(n, n) * 0.1
}

fn deflation(seed: u64) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let n = rng.random_range(2..=8);
        let k = random_spd(&mut rng, n, 1e2);
        let m = random_spd(&mut rng, n, 1.0);
        let before = dense_gen_eigenvalues(&k, &m).expect("definite pencil");
        let star = before[n / 2];
        for variant in [GevsVariant::Mass, GevsVariant::Stiffness, GevsVariant::Both] {
            let (kt, mt, _) = gevs(&k, &m, star, variant).expect("deflation");
            let after = dense_gen_eigenvalues(&kt, &mt).expect("definite pencil");
            let mut expect: Vec<f64> = before.iter().map(|&l| l.min(star)).collect();
            expect.sort_by(f64::total_cmp);
            for (a, e) in after.iter().zip(&expect) {
                worst = worst.max((a - e).abs() / e.abs().max(star * 1e-12));
            }
        }
    }
    check("GEVS spectrum surgery (20 seeded pencils)", worst < 1e-9, format!("max relative deviation {worst:.2e}"))
}

fn oscillator() -> Check {
    let sys = GlobalSystem {
        mass: MassOperator::from_diagonal(vec![1.0]),
        stiffness: CsrMatrix::from_triplets(1, &[(0, 0, 1.0)]).expect("valid triplets"),
        force: vec![0.0],
        n_dof: 1,
    };
    let err = |n| (run(&sys, &InitialState::at_rest(vec![1.0]), 1.0, n).expect("stable run").state.current[0] - 1f64.cos()).abs();
    let order = (err(50) / err(100)).log2();
    check("central difference order", order >= 1.9, format!("observed order {order:.3}"))
}

/// GEVS critical step relative to the boundary-fitted one and to MS.
fn rod_step_ratios() -> cutwave_core::Result<(f64, f64)> {
    let l_p = 0.9863;
    let immersed = Domain::Rod(RodDomain::new(1.0, l_p, BoundaryCondition::Neumann)?);
    let mut model = build_model(&immersed, &ModelConfig::new(2, 10, 1e-10)?)?;
    let ms = critical_dt(&model.assemble()?)?;
    stabilize_model(&mut model, &StabilizationConfig::new(StabilizationMode::GevsMass, 1e-10))?;
    let stabilized = critical_dt(&model.assemble()?)?;
    let fitted = Domain::Rod(RodDomain::new(l_p, l_p, BoundaryCondition::Neumann)?);
    let reference = critical_dt(&build_model(&fitted, &ModelConfig::new(2, 10, 1.0)?)?.assemble()?)?;
    Ok((stabilized / reference, stabilized / ms))
}

fn rod_time_step() -> Check {
    let name = "rod GEVS critical step near boundary-fitted";
    match rod_step_ratios() {
        Ok((ratio, gain)) => check(name, (0.8..=1.25).contains(&ratio) && gain > 1.0, format!("ratio {ratio:.4}, gain over MS {gain:.1}")),
        Err(e) => check(name, false, e.to_string()),
    }
}

/// Runs every check; `seed` drives the random pencils.
pub fn run_all(seed: u64) -> Vec<Check> {
    vec![quadrature(), deflation(seed), oscillator(), rod_time_step()]
}
