use std::time::Instant;

use cutwave_core::eigensolve::{dense_gen_eigenvalues, gen_sym_eig, sym_eig};
use cutwave_core::stabilize::{deflate_generalized, evs_mass, gevs, DeflationSide, GevsVariant};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const VARIANTS: [GevsVariant; 3] = [GevsVariant::Mass, GevsVariant::Stiffness, GevsVariant::Both];

fn random_spd(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &a * a.transpose() * scale + DMatrix::identity(n, n) * 0.1
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn spectrum_surgery_on_seeded_pencils() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    let mut worst = 0.0f64;
    for case in 0..100 {
        let n = rng.random_range(1..=12);
        let scale = rng.random_range(1.0..100.0);
        let k = random_spd(&mut rng, n, scale);
        let m = random_spd(&mut rng, n, 1.0);
        let before = dense_gen_eigenvalues(&k, &m).unwrap();
        // lambda* anywhere from below the spectrum to above it
        let star = before[0] * 0.5 + rng.random_range(0.0..1.2) * (before[n - 1] - before[0] * 0.5);
        for variant in VARIANTS {
            let (kt, mt, report) = gevs(&k, &m, star, variant).unwrap();
            let after = dense_gen_eigenvalues(&kt, &mt).unwrap();
            let moved = before.iter().filter(|&&l| l > star * (1.0 + 1e-12)).count();
            assert_eq!(report.count, moved, "case {case}");
            let mut expect: Vec<f64> = before.iter().map(|&l| l.min(star)).collect();
            expect.sort_by(f64::total_cmp);
            for (a, e) in after.iter().zip(&expect) {
                let r = rel(*a, *e);
                worst = worst.max(r);
                assert!(r < 1e-9, "case {case} {variant:?}: {a} vs {e} (lambda* {star})");
            }
        }
    }
    eprintln!("worst relative deviation {worst:e}, {:.2}s", start.elapsed().as_secs_f64());
    assert!(start.elapsed().as_secs_f64() < 5.0);
}

#[test]
fn untouched_eigenvectors_survive() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let k = random_spd(&mut rng, 6, 30.0);
    let m = random_spd(&mut rng, 6, 1.0);
    let eig = gen_sym_eig(&k, &m).unwrap();
    let star = 0.5 * (eig.values[2] + eig.values[3]);
    for variant in VARIANTS {
        let (kt, mt, _) = gevs(&k, &m, star, variant).unwrap();
        for i in 0..3 {
            let phi = eig.vectors.column(i);
            let r = &kt * phi - &mt * phi * eig.values[i];
            assert!(r.norm() < 1e-9 * (&k * phi).norm(), "{variant:?} mode {i}");
        }
    }
}

#[test]
fn single_pair_deflation_matches_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let k = random_spd(&mut rng, 5, 10.0);
    let m = random_spd(&mut rng, 5, 1.0);
    let eig = gen_sym_eig(&k, &m).unwrap();
    let top = eig.values[4];
    let phi = eig.vectors.column(4).into_owned();
    for side in [DeflationSide::Left, DeflationSide::Right, DeflationSide::Both] {
        let star = 0.3 * top;
        let (a, b) = deflate_generalized(&k, &m, top, &phi, star, side).unwrap();
        let r = &a * &phi - &b * &phi * star;
        assert!(r.norm() < 1e-9 * (&k * &phi).norm(), "{side:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn deflation_is_idempotent(seed in any::<u64>(), n in 2usize..=8, frac in 0.05f64..0.95) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = random_spd(&mut rng, n, 20.0);
        let m = random_spd(&mut rng, n, 1.0);
        let ev = dense_gen_eigenvalues(&k, &m).unwrap();
        let star = ev[0] + frac * (ev[n - 1] - ev[0]);
        for variant in VARIANTS {
            let (k1, m1, _) = gevs(&k, &m, star, variant).unwrap();
            let (k2, m2, again) = gevs(&k1, &m1, star, variant).unwrap();
            prop_assert_eq!(again.count, 0);
            prop_assert!((&k2 - &k1).abs().max() <= 1e-12 * k1.abs().max());
            prop_assert!((&m2 - &m1).abs().max() <= 1e-12 * m1.abs().max());
        }
    }

    #[test]
    fn one_sided_variants_leave_the_other_matrix(seed in any::<u64>(), n in 2usize..=8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = random_spd(&mut rng, n, 50.0);
        let m = random_spd(&mut rng, n, 1.0);
        let ev = dense_gen_eigenvalues(&k, &m).unwrap();
        let star = 0.5 * (ev[0] + ev[n - 1]);
        let (kt, _, _) = gevs(&k, &m, star, GevsVariant::Mass).unwrap();
        prop_assert_eq!(kt, k.clone());
        let (_, mt, _) = gevs(&k, &m, star, GevsVariant::Stiffness).unwrap();
        prop_assert_eq!(mt, m);
    }

    #[test]
    fn evs_shifts_only_the_small_mass_modes(seed in any::<u64>(), n in 2usize..=8, eps in 1e-6f64..1e-1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // mass with a few tiny eigenvalues, like a poorly cut element
        let q = sym_eig(&random_spd(&mut rng, n, 1.0)).unwrap().vectors;
        let small = rng.random_range(1..n);
        let d: Vec<f64> = (0..n).map(|i| if i < small { 10f64.powf(rng.random_range(-9.0..-4.0)) } else { rng.random_range(0.5..2.0) }).collect();
        let m = &q * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(d.clone())) * q.transpose();
        let full = DMatrix::from_diagonal_element(n, n, 1.0);
        let threshold = 1e-2;
        let mt = evs_mass(&m, &full, eps, threshold).unwrap();
        let before = sym_eig(&m).unwrap().values;
        let after = sym_eig(&mt).unwrap().values;
        let lmax = before[n - 1];
        let lifted: Vec<f64> = before.iter().filter(|&&l| l < threshold * lmax).copied().collect();
        prop_assert_eq!(lifted.len(), small);
        // the shifted eigenvalues are l + eps * scale with a common scale
        let mut expect: Vec<f64> = before.clone();
        let projector_max = {
            let e = sym_eig(&m).unwrap();
            let mut s0 = DMatrix::zeros(n, n);
            for i in 0..small {
                let v = e.vectors.column(i);
                s0 += v * v.transpose();
            }
            s0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        };
        for l in expect.iter_mut().take(small) {
            *l += eps / projector_max;
        }
        expect.sort_by(f64::total_cmp);
        for (a, e) in after.iter().zip(&expect) {
            prop_assert!((a - e).abs() < 1e-10 * lmax, "{} vs {}", a, e);
        }
    }
}
