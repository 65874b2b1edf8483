use nalgebra::DMatrix;
use spikesurgery::experiments::fixture_model;
use spikesurgery::lanczos::{lanczos, random_start, ritz, subspace_stability, top_eigenpairs, DEFAULT_REL_TOL};
use spikesurgery::models::{hvp, MlpSpec, Samples};
use spikesurgery::operators::{stratified_batch, ModelOracle};
use spikesurgery::vecspace::{dense_eigh, ParamVector, Rng};

/// Dense Hessian assembled column by column from unit-vector products.
fn dense_hessian(spec: &MlpSpec, theta: &ParamVector, data: &Samples) -> DMatrix<f64> {
    let p = theta.dim();
    let mut h = DMatrix::zeros(p, p);
    for j in 0..p {
        let col = hvp(spec, theta, data, &ParamVector::unit(p, j)).unwrap();
        for i in 0..p {
            h[(i, j)] = col.as_slice()[i];
        }
    }
    0.5 * (&h + h.transpose())
}

#[test]
fn full_order_lanczos_on_a_model_matches_dense() {
    let spec = MlpSpec::tanh(4, &[5], 3).unwrap();
    let mut rng = Rng::new(21);
    let theta = spec.init(&mut rng);
    let mut data = Samples::empty(4);
    for i in 0..30 {
        let x: Vec<f64> = (0..4).map(|_| rng.gaussian()).collect();
        data.push(&x, i % 3);
    }
    let p = spec.param_count();
    let dense = dense_eigh(&dense_hessian(&spec, &theta, &data)).unwrap();
    let oracle = ModelOracle::new(spec, theta, data).unwrap();
    let out = lanczos(&oracle, &random_start(p, 5), p, DEFAULT_REL_TOL).unwrap();
    let basis = ritz(&out, out.tridiagonal.dim(), "full").unwrap();
    // repeated eigenvalues (softmax shift invariance) end the recurrence
    // early, but every Ritz value is exact and the top ones are simple
    let scale = dense.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for a in &basis.eigenvalues {
        let gap = dense.values.iter().map(|b| (a - b).abs()).fold(f64::INFINITY, f64::min);
        assert!(gap <= 1e-8 * scale, "{a} is {gap} from the dense spectrum");
    }
    for (a, b) in basis.eigenvalues.iter().zip(&dense.values).take(5) {
        assert!((a - b).abs() <= 1e-8 * scale, "{a} vs {b}");
    }
}

#[test]
fn shuffled_labels_separate_from_nested_batches() {
    for seed in 0..3u64 {
        shuffled_separation(seed);
    }
}

fn shuffled_separation(seed: u64) {
    let f = fixture_model("imbalanced-4", seed).unwrap();
    let classes = f.data.classes();
    let mut rng = Rng::new(31);
    let big = stratified_batch(f.data.train(), classes, 256, &mut rng).unwrap();
    let small = big.prefix(big.len() / 2);
    let shuffled = big.with_shuffled_labels(&mut Rng::new(32));
    let basis_of = |batch: Samples| {
        let oracle = ModelOracle::new(f.spec.clone(), f.theta.clone(), batch).unwrap();
        top_eigenpairs(&oracle, 40, 3, 7).unwrap()
    };
    let reference = basis_of(big);
    let nested = subspace_stability(&basis_of(small), &reference, &[3]).unwrap();
    let noise = subspace_stability(&basis_of(shuffled), &reference, &[3]).unwrap();
    let (nested_angle, noise_angle) = (nested.angles[0].mean, noise.angles[0].mean);
    // labels only enter through the residual term of the Hessian, so the
    // separation is real but modest
    assert!(
        noise_angle > 1.25 * nested_angle,
        "seed {seed}: nested {nested_angle:.2} deg, shuffled {noise_angle:.2} deg"
    );
    assert!(noise.matched_mean < nested.matched_mean);
}
