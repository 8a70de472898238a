use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rfpls_core::basis::{build_design, evaluate_basis, gram_matrix};
use rfpls_core::eval::{select_num_components, CvOptions};
use rfpls_core::simgen::{contaminate, generate_clean};
use rfpls_core::sofr::{fit_fpls, fit_rfpls, Method};
use rfpls_core::{BasisSystem, MultiFunctionalDesign};

fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn basis_is_a_partition_of_unity(
        k in 4usize..25,
        order in 2usize..5,
        lo in -5.0f64..5.0,
        width in 0.1f64..10.0,
        ts in prop::collection::vec(0.0f64..=1.0, 1..40),
    ) {
        prop_assume!(k >= order);
        let system = BasisSystem::new((lo, lo + width), k, order).unwrap();
        let points: Vec<f64> = ts.iter().map(|t| lo + t * width).collect();
        let b = evaluate_basis(&system, &points).unwrap();
        for i in 0..points.len() {
            prop_assert!((b.row(i).sum() - 1.0).abs() < 1e-12);
            prop_assert!(b.row(i).iter().all(|&v| (-1e-15..=1.0 + 1e-15).contains(&v)));
        }
    }

    #[test]
    fn gram_is_banded_and_symmetric(k in 4usize..20, order in 2usize..5) {
        prop_assume!(k >= order);
        let psi = gram_matrix(&BasisSystem::new((0.0, 2.0), k, order).unwrap());
        prop_assert_eq!(&psi, &psi.transpose());
        for i in 0..k {
            for j in 0..k {
                if i.abs_diff(j) >= order {
                    prop_assert_eq!(psi[(i, j)], 0.0);
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn cv_never_overshoots_true_rank(seed in 0u64..1000, rank in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let systems = vec![BasisSystem::cubic((0.0, 1.0), 7).unwrap(); 2];
        let latent = gaussian(&mut rng, 40, rank);
        let design = MultiFunctionalDesign::from_coefficients(systems, &latent * gaussian(&mut rng, rank, 14)).unwrap();
        let y = &latent * DVector::from_fn(rank, |_, _| rng.random_range(0.5..2.0));
        let report = select_num_components(
            &design,
            &y,
            Method::Fpls,
            &CvOptions { max_components: 6, seed, ..CvOptions::default() },
        )
        .unwrap();
        prop_assert!(report.chosen_h <= rank + 1, "{:?}", report.scores);
    }
}

/// Swapping predictors swaps the estimated coefficient blocks.
#[test]
fn relabeling_predictors_permutes_estimates() {
    let data = contaminate(&generate_clean(120, 4).unwrap(), 0.1, 5).unwrap();
    let systems = vec![BasisSystem::cubic((0.0, 1.0), 10).unwrap(); 3];
    let order = [2, 0, 1];
    let design = build_design(&data.curves, &data.grids, &systems).unwrap();
    let curves: Vec<_> = order.iter().map(|&m| data.curves[m].clone()).collect();
    let grids: Vec<_> = order.iter().map(|&m| data.grids[m].clone()).collect();
    let permuted = build_design(&curves, &grids, &systems).unwrap();

    let base = fit_fpls(&design, &data.y, 3).unwrap();
    let other = fit_fpls(&permuted, &data.y, 3).unwrap();
    for (new, &old) in order.iter().enumerate() {
        assert!((other.beta_block(new) - base.beta_block(old)).amax() < 1e-8);
    }

    let base = fit_rfpls(&design, &data.y, 3).unwrap();
    let other = fit_rfpls(&permuted, &data.y, 3).unwrap();
    for (new, &old) in order.iter().enumerate() {
        let scale = base.beta_block(old).amax();
        assert!((other.beta_block(new) - base.beta_block(old)).amax() < 1e-6 * scale.max(1.0));
    }

    let opts = CvOptions {
        max_components: 5,
        seed: 8,
        ..CvOptions::default()
    };
    let a = select_num_components(&design, &data.y, Method::Rfpls, &opts).unwrap();
    let b = select_num_components(&permuted, &data.y, Method::Rfpls, &opts).unwrap();
    assert_eq!(a.chosen_h, b.chosen_h);
}

/// Raw sampled curves to fitted coefficient functions on clean simulated data.
#[test]
fn simulated_pipeline_recovers_coefficients() {
    let data = generate_clean(300, 17).unwrap();
    let systems = vec![BasisSystem::cubic((0.0, 1.0), 20).unwrap(); 3];
    let design = build_design(&data.curves, &data.grids, &systems).unwrap();
    let fit = fit_fpls(&design, &data.y, 5).unwrap();
    let curves = rfpls_core::sofr::coefficient_functions(&fit, &data.grids).unwrap();
    for (m, curve) in curves.iter().enumerate() {
        let r = rfpls_core::eval::risee(&data.grids[m], data.beta_true[m].as_slice(), curve.as_slice()).unwrap();
        assert!(r < 0.5, "beta{} risee {r}", m + 1);
    }
}
