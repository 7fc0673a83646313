use std::f64::consts::PI;

use twistqw::complex_scaling::{locate_resonances, scaled_system, LocateOptions, ScalingContext};
use twistqw::discretization::{build_grid, TwistFrame};
use twistqw::model::{level_table, WaveguideSpec};
use twistqw::resonance::{detect_candidates_in, fit_lineshape, DetectOptions, PhaseJump, ResonanceKind};
use twistqw::scattering::{ModeSpace, ScatteringOptions};
use twistqw::spectra::{prepare_problem, sweep_energy, SweepOptions};
use twistqw::Complex64;

// ε_{3,1} of the ν = 3.95 well lies in the one-channel window and shares the
// inversion parity of channel (1,1), so a half turn lets it decay.
#[test]
fn parity_allowed_level_becomes_a_fano_resonance() {
    let spec = WaveguideSpec::default().with_nu(3.95).with_phi(PI / 2.0);
    let rep = ModeSpace { modes: 24 };
    let table = level_table(&spec, 120.0).unwrap();
    let eps31 = table.combined_level(3, 1).unwrap().energy;

    let grid = build_grid(&spec, 1.0).unwrap();
    let theta = Complex64::new(0.0, 0.3);
    let (k, thresholds) = scaled_system(&grid, &spec, theta, &rep).unwrap();
    let ctx = ScalingContext { theta, thresholds, levels: table.clone() };
    let located = locate_resonances(&k, (eps31 - 1.0, eps31 + 3.0), &[eps31 + 0.8], &ctx, &LocateOptions::default()).unwrap();
    let pole = located
        .found
        .iter()
        .min_by(|a, b| a.value.im.abs().total_cmp(&b.value.im.abs()))
        .expect("isolated eigenvalue near ε31");
    assert_eq!(pole.label, Some((3, 1)));
    assert!(pole.value.im < 0.0 && pole.value.im > -0.05, "{}", pole.value);

    let problem = prepare_problem(&spec, 1.0, &TwistFrame::default(), &rep, ScatteringOptions::default()).unwrap();
    let window = (pole.value.re - 0.5, pole.value.re + 0.5);
    let detect = DetectOptions::default();

    let mut fits = Vec::new();
    for hint_points in [100, 200] {
        let opts = SweepOptions {
            base_points: 60,
            hints: vec![(pole.value.re, 0.02)],
            hint_points,
            ..Default::default()
        };
        let s = sweep_energy(&problem, 1, window, &opts).unwrap();
        assert_eq!(s.flagged_rows(), 0);
        let found = detect_candidates_in(&s, 1, &detect);
        assert_eq!(found.len(), 1, "{found:?}");
        let r = fit_lineshape(&s, &found[0]).unwrap();
        assert_eq!(r.kind, ResonanceKind::Fano);
        assert_eq!(r.phase_jump, PhaseJump::AbruptPi);
        assert!(r.min_transmission < 0.01, "{r:?}");
        assert!((r.e_r - pole.value.re).abs() < 0.02, "{r:?}");
        assert!(r.gamma > 1e-4 && r.gamma < 0.02, "{r:?}");
        fits.push(r);
    }
    let (a, b) = (&fits[0], &fits[1]);
    assert!((a.e_r - b.e_r).abs() < 0.1 * a.gamma);
    assert!((a.gamma - b.gamma).abs() < 0.05 * a.gamma);
}
