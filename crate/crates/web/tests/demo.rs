use mfflow_web::Demo;

#[test]
fn simulate_returns_both_fidelities() {
    let demo = Demo::new(3, 40, false).unwrap();
    assert_eq!(demo.param_dim(), 9);
    let w = demo.n_points();
    let out = demo.simulate(&vec![0.0; 9], 0).unwrap();
    assert_eq!(out.len(), 2 * w);
    assert!(out.iter().all(|v| v.is_finite()));
    let (lf, hf) = out.split_at(w);
    assert_ne!(lf, hf, "the LF model is biased, so the two records differ");
    assert!(demo.simulate(&[0.0; 3], 0).is_err());
}

#[test]
fn training_lowers_nll_and_predict_is_ordered() {
    let mut demo = Demo::new(4, 60, false).unwrap();
    let first = demo.train(2).unwrap();
    let all = demo.train(8).unwrap();
    assert_eq!(first.len(), 2);
    assert_eq!(all.len(), 10);
    assert_eq!(demo.epochs_trained(), 10);
    assert!(all[9] < all[0], "{all:?}");

    let w = demo.n_points();
    let theta = vec![0.1; 9];
    let band = demo.predict(&theta, 200, 0.9, 1).unwrap();
    assert_eq!(band.len(), 3 * w);
    let (mean, rest) = band.split_at(w);
    let (lo, hi) = rest.split_at(w);
    for k in 0..w {
        assert!(lo[k] <= hi[k]);
        assert!(mean[k].is_finite());
    }
    assert_eq!(band, demo.predict(&theta, 200, 0.9, 1).unwrap());
    assert!(demo.predict(&theta, 0, 0.9, 1).is_err());
}

#[test]
fn rejects_tiny_training_sets() {
    assert!(Demo::new(1, 1, true).is_err());
}
