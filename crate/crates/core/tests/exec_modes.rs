//! Single test per binary: the execution mode is process-wide.

use spikesurgery::exec::{set_mode, Mode};
use spikesurgery::experiments::{fixture_model, fixture_surgery_config};
use spikesurgery::surgery::run_surgery;

#[test]
fn surgery_is_bit_identical_across_modes() {
    let f = fixture_model("imbalanced-4", 2).unwrap();
    let mut config = fixture_surgery_config(2);
    config.iterations = 3;
    let run = |mode| {
        set_mode(mode);
        run_surgery(&f.spec, &f.theta, &f.data, &config).unwrap()
    };
    let (seq, seq_report) = run(Mode::Sequential);
    let (par, par_report) = run(Mode::Parallel);
    assert!(seq.theta.bit_eq(&par.theta));
    assert_eq!(seq_report, par_report);
    assert_eq!(seq.log.len(), 3);
    for (a, b) in seq.log.iter().zip(&par.log) {
        assert_eq!(a.sigma.to_bits(), b.sigma.to_bits());
        assert_eq!(a.alpha, b.alpha);
    }
}
