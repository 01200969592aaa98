use proptest::prelude::*;
use qpssh_core::dynamics::{
    average_at_horizon, average_instances, chiral_displacement_series, chiral_displacement_trapezoid, evolve,
    evolve_spectrum, run_instances, survival_series, survival_trapezoid, time_avg_survival_spectral, InstanceAverage,
    PositionReference, TimeAveraging, WalkInstance, WalkOptions,
};
use qpssh_core::model::{build_gssh, Boundary, ModelParams};
use qpssh_core::numerics::linspace;
use qpssh_core::spectral::{eigensolve, localization_diagnostics};

fn open(m: f64, w: f64, nc: usize) -> ModelParams {
    ModelParams::new(m, w, nc, Boundary::Open)
}

/// Independent propagation: explicit complex sums over eigenpairs.
fn survival_amplitude_oracle(p: &ModelParams, l0: usize, t: f64) -> f64 {
    let s = eigensolve(&build_gssh(p).unwrap()).unwrap();
    let v = s.states.as_real().unwrap();
    let (mut re, mut im) = (0.0, 0.0);
    for n in 0..s.len() {
        let c2 = v[(l0 - 1, n)].powi(2);
        re += c2 * (s.energies[n] * t).cos();
        im -= c2 * (s.energies[n] * t).sin();
    }
    re * re + im * im
}

#[test]
fn flat_edge_site_is_frozen() {
    let inst = WalkInstance { params: open(0.0, 0.0, 16), l0: 1, times: linspace(0.0, 14.0, 64) };
    let r = evolve(&inst, &WalkOptions::default()).unwrap();
    for p in &r.density {
        assert!((p[0] - 1.0).abs() < 1e-12);
    }
}

#[test]
fn flat_bulk_site_oscillates() {
    // l0 = 16 is b_8, dimerized with a_9.
    let times = linspace(0.0, 14.0, 512);
    let inst = WalkInstance { params: open(0.0, 0.0, 16), l0: 16, times: times.clone() };
    let r = evolve(&inst, &WalkOptions::default()).unwrap();
    for (k, t) in times.iter().enumerate() {
        assert!((r.inst_survival[k] - t.cos().powi(2)).abs() < 1e-12);
        let x = 2.0 * t;
        let (c, s) = if *t == 0.0 { (0.0, 1.0) } else { (1.0 - x.sin() / x, 0.5 + x.sin() / (2.0 * x)) };
        assert!((r.chiral_disp[k] - c).abs() < 1e-9);
        assert!((r.survival[k] - s).abs() < 1e-9);
    }
    // gt = pi/4 closed form.
    let quarter = evolve_spectrum(
        &eigensolve(&build_gssh(&open(0.0, 0.0, 16)).unwrap()).unwrap(),
        16,
        &[0.0, std::f64::consts::FRAC_PI_4],
        &WalkOptions::default(),
    )
    .unwrap();
    assert!((quarter.chiral_disp[1] - (1.0 - 2.0 / std::f64::consts::PI)).abs() < 1e-12);
    assert!(
        (time_avg_survival_spectral(
            &eigensolve(&build_gssh(&open(0.0, 0.0, 16)).unwrap()).unwrap(),
            16,
            f64::INFINITY
        )
        .unwrap()
            - 0.5)
            .abs()
            < 1e-12
    );
}

#[test]
fn decoupled_sites_never_move() {
    let p = open(0.0, 0.0, 4).with_g(1.0);
    // m = W = 0 with a single cell leaves every coupling zero.
    let single = ModelParams { n_cells: 1, ..p };
    let inst = WalkInstance { params: single, l0: 2, times: linspace(0.0, 5.0, 20) };
    let r = evolve(&inst, &WalkOptions::default()).unwrap();
    assert!(r.density.iter().all(|p| p[1] == 1.0 && p[0] == 0.0));
    assert!(r.chiral_disp.iter().all(|&c| c == 0.0));
    assert!(r.survival.iter().all(|&s| (s - 1.0).abs() < 1e-15));
}

#[test]
fn density_matches_independent_propagation() {
    let p = open(0.7, 1.1, 8).with_delta(0.9);
    let times = [0.0, 0.37, 2.5, 9.1];
    let inst = WalkInstance { params: p.clone(), l0: 5, times: times.to_vec() };
    let r = evolve(&inst, &WalkOptions::default()).unwrap();
    for (k, &t) in times.iter().enumerate() {
        assert!((r.inst_survival[k] - survival_amplitude_oracle(&p, 5, t)).abs() < 1e-12);
    }
}

#[test]
fn spectral_survival_matches_fine_trapezoid() {
    let p = open(0.45, 1.3, 8).with_delta(2.2);
    let t_end = 6.0;
    let fine = linspace(0.0, t_end, 10_001);
    let inst = WalkInstance { params: p, l0: 7, times: fine };
    let r = evolve(&inst, &WalkOptions::default()).unwrap();
    let trap = survival_trapezoid(&r);
    let spec = survival_series(&r);
    assert!((trap[10_000] - spec[10_000]).abs() < 1e-6);
    let s = eigensolve(&build_gssh(&inst.params).unwrap()).unwrap();
    assert!((time_avg_survival_spectral(&s, 7, t_end).unwrap() - spec[10_000]).abs() < 1e-14);
    let ctrap = chiral_displacement_trapezoid(&r);
    assert!((ctrap[10_000] - chiral_displacement_series(&r)[10_000]).abs() < 1e-6);
}

#[test]
fn trapezoid_option_converges_to_spectral() {
    let p = open(0.9, 0.8, 8).with_delta(0.5);
    let errs: Vec<f64> = [128usize, 512, 2048]
        .iter()
        .map(|&n| {
            let times = linspace(0.0, 14.0, n);
            let inst = WalkInstance { params: p.clone(), l0: 6, times };
            let spec = evolve(&inst, &WalkOptions::default()).unwrap();
            let trap =
                evolve(&inst, &WalkOptions { averaging: TimeAveraging::Trapezoid, ..Default::default() }).unwrap();
            (spec.survival[n - 1] - trap.survival[n - 1]).abs()
        })
        .collect();
    assert!(errs[1] < errs[0] && errs[2] < errs[1], "{errs:?}");
    assert!(errs[1] <= 10.0 / (512.0f64).powi(2) + 1e-6, "{errs:?}");
}

#[test]
fn infinite_time_survival_over_all_sites_is_average_ipr() {
    for (m, w, d) in [(0.3, 0.8, 0.1), (1.5, 2.5, 2.0), (0.0, 1.0, 4.0)] {
        let s = eigensolve(&build_gssh(&open(m, w, 16).with_delta(d)).unwrap()).unwrap();
        let total: f64 = (1..=s.len()).map(|l0| time_avg_survival_spectral(&s, l0, f64::INFINITY).unwrap()).sum();
        let avg_ipr = localization_diagnostics(&s).avg_ipr;
        assert!((total / s.len() as f64 - avg_ipr).abs() <= 1e-12);
    }
}

#[test]
fn trivial_chain_displacement_vanishes() {
    let deltas: Vec<f64> = (0..8).map(|j| j as f64 * std::f64::consts::FRAC_PI_4).collect();
    let avg = average_instances(
        &open(2.0, 0.0, 16),
        &deltas,
        &[15, 16, 17, 18],
        &linspace(0.0, 14.0, 512),
        &WalkOptions::default(),
    )
    .unwrap();
    assert!(avg.c_bar[511].abs() < 0.05, "{}", avg.c_bar[511]);
}

#[test]
fn single_instance_average_is_identity() {
    let times = linspace(0.0, 3.0, 16);
    let results = run_instances(&open(0.5, 0.5, 6), &[0.3], &[4], &times, &WalkOptions::default()).unwrap();
    let avg = InstanceAverage::from_results(&results, 1, 1).unwrap();
    assert_eq!(avg.c_bar, results[0].chiral_disp);
    assert_eq!(avg.s_bar, results[0].survival);
    assert!(avg.sem_c.iter().all(|&x| x == 0.0));
}

#[test]
fn horizon_average_matches_series_endpoint() {
    let deltas = [0.0, 1.0, 2.0];
    let l0s = [3, 4];
    let p = open(0.8, 0.6, 8);
    let times = linspace(0.0, 14.0, 32);
    let avg = average_instances(&p, &deltas, &l0s, &times, &WalkOptions::default()).unwrap();
    let h = average_at_horizon(&p, &deltas, &l0s, 14.0, PositionReference::Relative).unwrap();
    assert!((h.c_bar - avg.c_bar[31]).abs() < 1e-12);
    assert!((h.s_bar - avg.s_bar[31]).abs() < 1e-12);
}

#[test]
fn absolute_position_shifts_by_initial_cell() {
    let p = open(0.4, 0.4, 8);
    let times = linspace(0.0, 5.0, 8);
    let rel =
        evolve(&WalkInstance { params: p.clone(), l0: 7, times: times.clone() }, &WalkOptions::default()).unwrap();
    let abs = evolve(
        &WalkInstance { params: p, l0: 7, times },
        &WalkOptions { position: PositionReference::Absolute, ..Default::default() },
    )
    .unwrap();
    // <Gamma> x_0 term with x_0 = 4 (cell of site 7).
    for k in 0..8 {
        let mut gamma = 0.0;
        for (i, &p) in rel.density[k].iter().enumerate() {
            gamma += if i % 2 == 0 { p } else { -p };
        }
        assert!((abs.inst_chiral[k] - rel.inst_chiral[k] - 2.0 * 4.0 * gamma).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn evolution_is_unitary(m in 0.0..2.0f64, w in 0.0..3.0f64, delta in 0.0..6.3f64, l0 in 1usize..=24) {
        let inst = WalkInstance { params: open(m, w, 12).with_delta(delta), l0, times: linspace(0.0, 20.0, 40) };
        let r = evolve(&inst, &WalkOptions::default()).unwrap();
        for p in &r.density {
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
        for &s in &r.survival {
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&s));
        }
    }

    #[test]
    fn spectral_and_quadrature_agree(m in 0.0..2.0f64, w in 0.0..3.0f64, delta in 0.0..6.3f64, l0 in 1usize..=12) {
        let n = 4000;
        let inst = WalkInstance { params: open(m, w, 6).with_delta(delta), l0, times: linspace(0.0, 8.0, n) };
        let r = evolve(&inst, &WalkOptions::default()).unwrap();
        let trap = survival_trapezoid(&r);
        let tol = 1e-6f64.max(10.0 / (n as f64).powi(2));
        prop_assert!((trap[n - 1] - r.survival[n - 1]).abs() <= tol);
    }

    #[test]
    fn averages_lie_in_instance_envelope(m in 0.0..2.0f64, w in 0.0..3.0f64) {
        let times = linspace(0.0, 10.0, 20);
        let results = run_instances(&open(m, w, 8), &[0.0, 0.8, 1.6], &[7, 8, 9], &times, &WalkOptions::default()).unwrap();
        let avg = InstanceAverage::from_results(&results, 3, 3).unwrap();
        for k in 0..times.len() {
            let cs: Vec<f64> = results.iter().map(|r| r.chiral_disp[k]).collect();
            let lo = cs.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = cs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(avg.c_bar[k] >= lo - 1e-12 && avg.c_bar[k] <= hi + 1e-12);
        }
    }
}
