use proptest::prelude::*;
use qpssh_core::model::{
    build_2d, build_gssh, disorder_sequence, sublattice_block, Boundary, Entries, ModelParams, Params2D,
};
use qpssh_core::spectral::{block_singular_values, eigenvalues};

const PHI: f64 = 1.618_033_988_749_895;

/// cos by argument reduction and a long Taylor series; independent of libm.
fn cos_series(x: f64) -> f64 {
    let two_pi = std::f64::consts::TAU;
    let r = x - two_pi * (x / two_pi).round();
    let (mut term, mut sum) = (1.0f64, 1.0f64);
    for k in 1..40 {
        term *= -r * r / ((2 * k - 1) as f64 * (2 * k) as f64);
        sum += term;
    }
    sum
}

fn dense(h: &qpssh_core::model::LatticeHamiltonian) -> Vec<Vec<f64>> {
    match &h.entries {
        Entries::Real(m) => (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect()).collect(),
        Entries::Complex(_) => panic!("expected a real chain"),
    }
}

#[test]
fn first_disorder_value_matches_series_oracle() {
    let p = ModelParams::new(1.0, 0.5, 1, Boundary::Open);
    let m1 = disorder_sequence(&p).unwrap()[0];
    let oracle = 1.0 + 0.5 * cos_series(2.0 * std::f64::consts::PI * ((5f64.sqrt() - 1.0) / 2.0));
    assert!((m1 - oracle).abs() < 1e-14);
    assert!((m1 - 0.63132).abs() < 1e-5);
}

#[test]
fn two_cell_spectrum_is_golden() {
    let h = build_gssh(&ModelParams::new(1.0, 0.0, 2, Boundary::Open)).unwrap();
    let e = eigenvalues(&h).unwrap();
    let expect = [-PHI, -1.0 / PHI, 1.0 / PHI, PHI];
    for (a, b) in e.iter().zip(expect) {
        assert!((a - b).abs() < 1e-12, "{e:?}");
    }
    let sv = block_singular_values(&h).unwrap();
    assert!((sv[0] - 1.0 / PHI).abs() < 1e-12 && (sv[1] - PHI).abs() < 1e-12);
}

#[test]
fn block_places_bonds_on_bidiagonal() {
    let p = ModelParams::new(0.7, 0.4, 5, Boundary::Open).with_w_prime(0.3).with_delta(0.2);
    let b = sublattice_block(&build_gssh(&p).unwrap()).unwrap();
    let m = disorder_sequence(&p).unwrap();
    let t = p.inter_cell_sequence().unwrap();
    for r in 0..5 {
        for c in 0..5 {
            let expect = if r == c {
                m[r]
            } else if r == c + 1 {
                t[c]
            } else {
                0.0
            };
            assert_eq!(b[(r, c)], expect);
        }
    }
}

#[test]
fn single_row_lattice_equals_chain() {
    let p2 = Params2D::new(0.8, 1.3, 16, 1);
    let lattice = eigenvalues(&build_2d(&p2).unwrap()).unwrap();
    let chain = eigenvalues(&build_gssh(&p2.chain(0.0)).unwrap()).unwrap();
    for (a, b) in lattice.iter().zip(&chain) {
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn lattice_is_hermitian() {
    let h = build_2d(&Params2D::new(0.3, 1.7, 12, 5)).unwrap();
    assert!(h.hermiticity_error() <= 1e-15 * h.max_abs_entry());
}

fn params_strategy() -> impl Strategy<Value = ModelParams> {
    (0.0..3.0f64, 0.0..4.0f64, 0.0..2.0f64, 0.0..6.3f64, 1usize..24, any::<bool>()).prop_map(
        |(m, w, wp, delta, nc, periodic)| {
            let fib = [1usize, 2, 3, 5, 8, 13, 21];
            let (nc, b) = if periodic { (fib[nc % fib.len()], Boundary::Periodic) } else { (nc, Boundary::Open) };
            ModelParams::new(m, w, nc, b).with_w_prime(wp).with_delta(delta)
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn real_builds_are_exactly_symmetric(p in params_strategy()) {
        let h = dense(&build_gssh(&p).unwrap());
        for i in 0..h.len() {
            for j in 0..h.len() {
                prop_assert_eq!(h[i][j], h[j][i]);
            }
        }
    }

    #[test]
    fn chiral_symmetry_is_exact(p in params_strategy()) {
        let built = build_gssh(&p).unwrap();
        let h = dense(&built);
        for i in 0..h.len() {
            prop_assert_eq!(h[i][i], 0.0);
            for j in 0..h.len() {
                // (Gamma H Gamma + H)_ij = (s_i s_j + 1) H_ij
                let s = f64::from(built.chiral_sign[i] * built.chiral_sign[j]);
                prop_assert_eq!((s + 1.0) * h[i][j], 0.0);
            }
        }
    }

    #[test]
    fn spectrum_is_mirror_symmetric(p in params_strategy()) {
        let h = build_gssh(&p).unwrap();
        let e = eigenvalues(&h).unwrap();
        let scale = h.max_abs_entry().max(1.0);
        let l = e.len();
        for k in 0..l {
            prop_assert!((e[k] + e[l - 1 - k]).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn disorder_is_phase_covariant(m in 0.0..2.0f64, w in 0.0..3.0f64, delta in 0.0..6.3f64, nc in 2usize..40) {
        let base = ModelParams::new(m, w, nc, Boundary::Open).with_delta(delta);
        let shifted = base.clone().with_delta(delta + 2.0 * std::f64::consts::PI * base.beta);
        let a = disorder_sequence(&base).unwrap();
        let b = disorder_sequence(&shifted).unwrap();
        for n in 0..nc - 1 {
            prop_assert!((a[n + 1] - b[n]).abs() < 1e-11);
        }
    }
}
