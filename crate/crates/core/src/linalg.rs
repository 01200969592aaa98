//! Thin wrappers over the dense Hermitian eigensolver and SVD.

use faer::{c64, Mat, Side};

use crate::error::{Error, Result};

/// Clear the upper halves of the AVX registers on the calling thread.
///
/// The backend's SIMD kernels can return with them dirty. On some x86 cores
/// every later legacy-SSE instruction then pays a transition penalty, which
/// slows scalar `sin`, `cos` and `ln` loops by more than an order of
/// magnitude. Call this before such loops; elsewhere it is a no-op.
pub(crate) fn clear_upper_simd() {
    #[cfg(target_arch = "x86_64")]
    {
        #[inline(never)]
        #[target_feature(enable = "avx")]
        unsafe fn zeroupper() {
            std::arch::x86_64::_mm256_zeroupper();
        }
        if std::arch::is_x86_feature_detected!("avx") {
            // SAFETY: AVX support was checked at runtime, and every vector
            // register is caller-saved across this non-inlined call.
            unsafe { zeroupper() }
        }
    }
}

/// Relative closeness within which two component magnitudes count as tied
/// when picking the gauge pivot.
const GAUGE_TIE: f64 = 1e-12;

fn pivot<F: Fn(usize) -> f64>(n: usize, mag: F) -> usize {
    let max = (0..n).map(&mag).fold(0.0f64, f64::max);
    (0..n).find(|&i| mag(i) >= max * (1.0 - GAUGE_TIE)).unwrap_or(0)
}

/// Eigenpairs of a real symmetric matrix, ascending, with every eigenvector's
/// largest-magnitude component made positive (lowest index on ties).
pub(crate) fn eigh_real(h: &Mat<f64>) -> Result<(Vec<f64>, Mat<f64>)> {
    let evd = h.self_adjoint_eigen(Side::Lower).map_err(|e| Error::Eigensolver(format!("{e:?}")))?;
    let s = evd.S().column_vector();
    let energies: Vec<f64> = (0..h.nrows()).map(|i| s[i]).collect();
    let mut u = evd.U().to_owned();
    fix_gauge_real(&mut u);
    Ok((energies, u))
}

/// Flip each column so its largest-magnitude component is positive.
pub(crate) fn fix_gauge_real(u: &mut Mat<f64>) {
    let n = u.nrows();
    for j in 0..u.ncols() {
        let p = pivot(n, |i| u[(i, j)].abs());
        if u[(p, j)] < 0.0 {
            for i in 0..n {
                u[(i, j)] = -u[(i, j)];
            }
        }
    }
}

/// Complex Hermitian counterpart of [`eigh_real`]; the pivot component is made
/// real and positive.
pub(crate) fn eigh_complex(h: &Mat<c64>) -> Result<(Vec<f64>, Mat<c64>)> {
    let evd = h.self_adjoint_eigen(Side::Lower).map_err(|e| Error::Eigensolver(format!("{e:?}")))?;
    let s = evd.S().column_vector();
    let energies: Vec<f64> = (0..h.nrows()).map(|i| s[i].re).collect();
    let mut u = evd.U().to_owned();
    let n = u.nrows();
    for j in 0..u.ncols() {
        let p = pivot(n, |i| u[(i, j)].norm());
        let z = u[(p, j)];
        let r = z.norm();
        if r > 0.0 {
            let phase = z.conj() / r;
            for i in 0..n {
                u[(i, j)] *= phase;
            }
            u[(p, j)] = c64::new(u[(p, j)].norm(), 0.0);
        }
    }
    Ok((energies, u))
}

pub(crate) fn eigvals_real(h: &Mat<f64>) -> Result<Vec<f64>> {
    h.self_adjoint_eigenvalues(Side::Lower).map_err(|e| Error::Eigensolver(format!("{e:?}")))
}

pub(crate) fn eigvals_complex(h: &Mat<c64>) -> Result<Vec<f64>> {
    h.self_adjoint_eigenvalues(Side::Lower).map_err(|e| Error::Eigensolver(format!("{e:?}")))
}

/// Singular values in ascending order.
pub(crate) fn singular_values(b: &Mat<f64>) -> Result<Vec<f64>> {
    let mut sv = b.singular_values().map_err(|e| Error::Eigensolver(format!("{e:?}")))?;
    sv.reverse();
    Ok(sv)
}
