use proptest::prelude::*;

use tenar::estimate::{fit_lse, fit_mle, FitOptions};
use tenar::forecast::predict_one;
use tenar::io::{self, SeriesFormat};
use tenar::simulate::{noise_cov, random_model, simulate_series, NoiseSetting};
use tenar::{DenseMatrix, DenseTensor, ModelSpec};

#[test]
fn series_and_model_files_round_trip_through_a_fit() {
    let dir = tempfile::tempdir().unwrap();
    let dims = vec![2, 3, 2];
    let spec = ModelSpec::new(dims.clone(), vec![1, 1]).unwrap();
    let truth = random_model(&spec, 0.7, 3)
        .unwrap()
        .with_noise(noise_cov(NoiseSetting::III, &dims, 3))
        .unwrap();
    let series = simulate_series(&truth, 300, 100, 3).unwrap();

    for (name, format) in [("s.csv", SeriesFormat::Csv), ("s.bin", SeriesFormat::Binary)] {
        let path = dir.path().join(name);
        io::write_series(&path, &series, format).unwrap();
        assert_eq!(io::read_series(&path).unwrap(), series, "{name}");
    }

    let fit = fit_mle(&series, &spec, &FitOptions::default()).unwrap();
    let path = dir.path().join("m.json");
    io::write_model(&path, &fit.model).unwrap();
    let back = io::read_model(&path).unwrap();
    assert_eq!(back, fit.model);

    let window = &series.observations()[series.len() - 2..];
    assert_eq!(predict_one(&back, window).unwrap(), predict_one(&fit.model, window).unwrap());
}

#[test]
fn fits_are_reproducible() {
    let spec = ModelSpec::new(vec![3, 2], vec![2]).unwrap();
    let truth = random_model(&spec, 0.8, 11).unwrap();
    let series = simulate_series(&truth, 400, 100, 11).unwrap();
    let opts = FitOptions {
        seed: 5,
        ..FitOptions::default()
    };
    let a = fit_lse(&series, &spec, &opts).unwrap();
    let b = fit_lse(&series, &spec, &opts).unwrap();
    assert_eq!(a.model, b.model);
    assert_eq!(a.objective_trace, b.objective_trace);
}

fn tensor_strategy() -> impl Strategy<Value = DenseTensor> {
    prop::collection::vec(1usize..=4, 1..=3).prop_flat_map(|dims| {
        let n: usize = dims.iter().product();
        prop::collection::vec(-10.0f64..10.0, n)
            .prop_map(move |data| DenseTensor::new(dims.clone(), data).unwrap())
    })
}

proptest! {
    #[test]
    fn matricize_then_fold_is_identity(x in tensor_strategy()) {
        for k in 0..x.dims().len() {
            let m = x.matricize(k).unwrap();
            prop_assert_eq!(DenseTensor::fold(&m, k, x.dims()).unwrap(), x.clone());
        }
    }

    #[test]
    fn mode_products_on_distinct_modes_commute(x in tensor_strategy(), seed in 0u64..1000) {
        prop_assume!(x.dims().len() >= 2);
        let (d0, d1) = (x.dims()[0], x.dims()[1]);
        let a = DenseMatrix::from_fn(2, d0, |i, j| ((seed as usize + 3 * i + j) % 7) as f64 - 3.0);
        let b = DenseMatrix::from_fn(3, d1, |i, j| ((seed as usize + i + 5 * j) % 5) as f64 - 2.0);
        let ab = x.mode_product(&a, 0).unwrap().mode_product(&b, 1).unwrap();
        let ba = x.mode_product(&b, 1).unwrap().mode_product(&a, 0).unwrap();
        let scale = ab.frobenius_norm().max(1.0);
        prop_assert!(ab.sub(&ba).frobenius_norm() <= 1e-12 * scale);
    }
}
