use proptest::prelude::*;
use qpssh_core::model::{build_gssh, Boundary, ModelParams};
use qpssh_core::spectral::{
    block_singular_values, eigensolve, fractal_dimension, gap_half_filling, ipr_state, localization_diagnostics,
    winding_number, write_spectrum_csv, zero_mode_loc_length_analytic, zero_mode_loc_length_numeric,
    LocalizationDiagnostics, Spectrum,
};

fn solve(p: &ModelParams) -> Spectrum {
    eigensolve(&build_gssh(p).unwrap()).unwrap()
}

fn open(m: f64, w: f64, nc: usize) -> ModelParams {
    ModelParams::new(m, w, nc, Boundary::Open)
}

/// Brute-force trace formula: full Q from sgn(E), zero modes resolved by hand
/// into sublattice-polarized states, explicit matrix products.
fn winding_oracle(s: &Spectrum, bulk_cells: std::ops::RangeInclusive<usize>) -> f64 {
    let v = s.states.as_real().unwrap();
    let l = s.len();
    let mut q = vec![vec![0.0; l]; l];
    let mut zero = Vec::new();
    for n in 0..l {
        if s.energies[n].abs() < 1e-8 {
            zero.push(n);
            continue;
        }
        let sg = s.energies[n].signum();
        for i in 0..l {
            for j in 0..l {
                q[i][j] += sg * v[(i, n)] * v[(j, n)];
            }
        }
    }
    // Project the zero-mode subspace onto each sublattice: P_A - P_B.
    for i in 0..l {
        for j in 0..l {
            let mut p = 0.0;
            for &n in &zero {
                p += v[(i, n)] * v[(j, n)];
            }
            let (gi, gj) = (f64::from(s.chiral_sign[i]), f64::from(s.chiral_sign[j]));
            q[i][j] += 0.5 * (gi + gj) * p;
        }
    }
    let x: Vec<f64> = s.cell_index.iter().map(|&c| c as f64).collect();
    let mut trace = 0.0;
    let mut sites = 0;
    for i in 0..l {
        if !bulk_cells.contains(&s.cell_index[i]) {
            continue;
        }
        sites += 1;
        let mut qqx = 0.0;
        for k in 0..l {
            // (Q [Q, X])_{ii} = sum_k Q_ik (Q_ki x_i - x_k Q_ki)
            qqx += q[i][k] * (q[k][i] * x[i] - x[k] * q[k][i]);
        }
        trace += f64::from(s.chiral_sign[i]) * qqx;
    }
    trace / sites as f64
}

#[test]
fn eigensolve_examples() {
    let e = solve(&open(0.0, 0.0, 2)).energies;
    let expect = [-1.0, 0.0, 0.0, 1.0];
    for (a, b) in e.iter().zip(expect) {
        assert!((a - b).abs() < 1e-14);
    }
}

#[test]
fn eigenpairs_satisfy_invariants() {
    let p = open(0.9, 1.3, 40).with_w_prime(0.4).with_delta(1.1);
    let h = build_gssh(&p).unwrap();
    let s = eigensolve(&h).unwrap();
    let v = s.states.as_real().unwrap();
    let hm = match &h.entries {
        qpssh_core::model::Entries::Real(m) => m.clone(),
        _ => unreachable!(),
    };
    let scale = h.max_abs_entry();
    for n in 0..s.len() {
        let norm: f64 = (0..s.len()).map(|i| v[(i, n)].powi(2)).sum();
        assert!((norm - 1.0).abs() < 1e-12);
        let mut res = 0.0f64;
        for i in 0..s.len() {
            let hv: f64 = (0..s.len()).map(|j| hm[(i, j)] * v[(j, n)]).sum();
            res += (hv - s.energies[n] * v[(i, n)]).powi(2);
        }
        assert!(res.sqrt() <= 1e-9 * scale);
        if n > 0 {
            assert!(s.energies[n] >= s.energies[n - 1]);
        }
    }
}

#[test]
fn eigensolve_is_reproducible() {
    let p = open(0.0, 0.0, 16);
    let (a, b) = (solve(&p), solve(&p));
    let (va, vb) = (a.states.as_real().unwrap(), b.states.as_real().unwrap());
    for n in 0..a.len() {
        for i in 0..a.len() {
            assert_eq!(va[(i, n)].to_bits(), vb[(i, n)].to_bits());
        }
    }
}

#[test]
fn flat_chain_average_ipr() {
    let d = localization_diagnostics(&solve(&open(0.0, 0.0, 16)));
    assert!((d.avg_ipr - 17.0 / 32.0).abs() < 1e-12);
}

#[test]
fn uniform_states_give_minus_log_l_eta() {
    let d = LocalizationDiagnostics::from_iprs(vec![1.0 / 64.0; 64], 64);
    assert!((d.eta + 64f64.log10()).abs() < 1e-12);
    assert!(d.d_f_per_state.iter().all(|&x| x == 1.0));
}

#[test]
fn fractal_dimension_extremes() {
    let l = 100;
    assert!((fractal_dimension(ipr_state(&vec![0.1; l]), l) - 1.0).abs() < 1e-14);
    let mut single = vec![0.0; l];
    single[7] = 1.0;
    assert_eq!(fractal_dimension(ipr_state(&single), l), 0.0);
}

#[test]
fn flat_winding_is_one_and_matches_oracle() {
    let nw = winding_number(&solve(&open(0.0, 0.0, 16)), 0.5).unwrap();
    assert!((nw - 1.0).abs() < 1e-6, "{nw}");
    let small = solve(&open(0.0, 0.0, 4));
    let nw4 = winding_number(&small, 0.5).unwrap();
    let oracle = winding_oracle(&small, 2..=3);
    assert!((nw4 - oracle).abs() < 1e-12, "{nw4} vs {oracle}");
    for delta in [0.3, 1.7] {
        let d = solve(&open(0.0, 0.0, 4).with_delta(delta));
        let moved = solve(&open(0.0, 0.0, 4).with_delta(delta + std::f64::consts::FRAC_PI_4));
        let (a, b) = (winding_number(&d, 0.5).unwrap(), winding_number(&moved, 0.5).unwrap());
        assert!((a - b).abs() < 1e-6);
    }
}

#[test]
fn disordered_winding_matches_oracle() {
    let s = solve(&open(0.6, 0.9, 12).with_delta(0.4));
    // Central half of 12 cells: cells 4..=9.
    let nw = winding_number(&s, 0.5).unwrap();
    assert!((nw - winding_oracle(&s, 4..=9)).abs() < 1e-10);
}

#[test]
fn clean_trivial_winding_vanishes() {
    let nw = winding_number(&solve(&open(2.0, 0.0, 610)), 0.5).unwrap();
    assert!(nw.abs() < 0.02, "{nw}");
}

#[test]
fn gap_examples() {
    let p = ModelParams::new(2.0, 0.0, 610, Boundary::Periodic);
    let gap = gap_half_filling(&solve(&p)).unwrap();
    assert!((gap - 2.0).abs() < 1e-9, "{gap}");
    assert!(gap_half_filling(&solve(&open(0.0, 0.0, 10))).unwrap().abs() < 1e-12);
}

#[test]
fn gap_is_twice_smallest_singular_value() {
    for (m, w, d) in [(0.5, 1.0, 0.0), (1.4, 0.6, 2.0), (0.2, 2.5, 4.0)] {
        let p = ModelParams::new(m, w, 89, Boundary::Periodic).with_delta(d);
        let h = build_gssh(&p).unwrap();
        let gap = gap_half_filling(&eigensolve(&h).unwrap()).unwrap();
        let sv = block_singular_values(&h).unwrap();
        assert!((gap - 2.0 * sv[0]).abs() < 1e-10);
    }
}

#[test]
fn numeric_loc_length_converges_to_closed_form() {
    let cases = [(2.0, 1.0, 0.623_810_716_364_871_4), (0.5, 1.0, 0.5f64.ln())];
    for (m, w, exact) in cases {
        assert!((zero_mode_loc_length_analytic(m, w, 1.0).unwrap() - exact).abs() < 1e-12);
        let z = zero_mode_loc_length_numeric(&open(m, w, 100_000)).unwrap();
        assert!((z.value - exact).abs() < 1e-3);
        assert!(!z.singular_bond);
    }
    let at_boundary = zero_mode_loc_length_numeric(&open(1.25, 1.0, 1_000_000)).unwrap();
    assert!(at_boundary.value.abs() < 1e-3);
}

#[test]
fn numeric_loc_length_error_shrinks_with_size() {
    for (m, w) in [(2.0, 1.0), (0.5, 1.0), (1.5, 1.2)] {
        let exact = zero_mode_loc_length_analytic(m, w, 1.0).unwrap();
        let err = |nc: usize| -> f64 {
            let per: Vec<f64> = (0..8)
                .map(|j| {
                    let p = open(m, w, nc).with_delta(j as f64 * std::f64::consts::FRAC_PI_4 + 0.1);
                    (zero_mode_loc_length_numeric(&p).unwrap().value - exact).abs()
                })
                .collect();
            per.iter().sum::<f64>() / per.len() as f64
        };
        let e: Vec<f64> = [610, 987, 1597, 10946].iter().map(|&n| err(n)).collect();
        assert!(e[0] + e[1] > e[2] + e[3], "{e:?}");
        assert!(e[3] < e[0], "{e:?}");
    }
}

#[test]
fn spectrum_csv_has_one_row_per_state() {
    let s = solve(&open(0.5, 0.5, 8));
    let mut buf = Vec::new();
    write_spectrum_csv(&s, 2, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 17);
    assert!(text.starts_with("index,energy,ipr,d_f,edge_weight\n1,"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn chiral_partners_share_ipr(m in 0.0..2.5f64, w in 0.0..3.5f64, wp in 0.0..1.0f64, delta in 0.0..6.3f64, nc in 4usize..40) {
        let s = solve(&open(m, w, nc).with_w_prime(wp).with_delta(delta));
        let l = s.len();
        for n in 0..l / 2 {
            // Near-degenerate zero-energy pairs can mix; compare bulk states only.
            if s.energies[n].abs() < 1e-6 {
                continue;
            }
            prop_assert!((s.ipr(n) - s.ipr(l - 1 - n)).abs() < 1e-10);
        }
    }

    #[test]
    fn gap_is_non_negative(m in 0.0..2.5f64, w in 0.0..3.5f64, delta in 0.0..6.3f64) {
        let s = solve(&ModelParams::new(m, w, 34, Boundary::Periodic).with_delta(delta));
        prop_assert!(gap_half_filling(&s).unwrap() >= 0.0);
    }
}

#[test]
fn degenerate_zero_modes_sit_on_one_edge() {
    let s = solve(&open(0.0, 0.0, 8));
    for n in [7, 8] {
        assert!(s.energies[n].abs() < 1e-14);
        assert!((s.ipr(n) - 1.0).abs() < 1e-12);
        assert!((s.edge_weight(n, 1).unwrap() - 1.0).abs() < 1e-12);
    }
    // Weakly coupled edge modes of a long topological chain stay on one edge.
    let long = solve(&open(0.5, 0.0, 144));
    let l = long.len();
    for n in [l / 2 - 1, l / 2] {
        assert!((long.ipr(n) - 0.6).abs() < 1e-9, "{}", long.ipr(n));
    }
}
