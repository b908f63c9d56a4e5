//! Thin wrapper over LAPACK's MRRR symmetric eigensolver.

use std::os::raw::c_char;

use ndarray::{Array2, ShapeBuilder};

use crate::error::{Error, Result};

/// Which eigenpairs to compute.
#[derive(Clone, Copy, Debug)]
pub enum EigenRange {
    All,
    /// Eigenvalues in the half-open interval `(lo, hi]`.
    Values(f64, f64),
}

/// Eigenvalues (ascending) and column eigenvectors of a real symmetric matrix.
///
/// Only the lower triangle of `a` is referenced; `a` is consumed as workspace.
pub fn symmetric_eigen(a: Array2<f64>, range: EigenRange) -> Result<(Vec<f64>, Array2<f64>)> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "matrix must be square");
    if n == 0 {
        return Ok((Vec::new(), Array2::zeros((0, 0))));
    }
    // Row-major storage of a symmetric matrix is its own column-major transpose.
    let mut data = a.as_standard_layout().into_owned().into_raw_vec_and_offset().0;
    let ni = n as i32;
    let (range_flag, vl, vu) = match range {
        EigenRange::All => (b'A', 0.0, 0.0),
        EigenRange::Values(lo, hi) => (b'V', lo, hi),
    };
    let mut w = vec![0.0; n];
    let mut z = vec![0.0; n * n];
    let mut isuppz = vec![0i32; 2 * n];
    let mut m = 0i32;
    let mut info = 0i32;
    let abstol = 0.0;
    let (il, iu) = (0i32, 0i32);
    let jobz = b'V' as c_char;
    let range_c = range_flag as c_char;
    let uplo = b'L' as c_char;

    let mut work_query = [0.0f64];
    let mut iwork_query = [0i32];
    let (mut lwork, mut liwork) = (-1i32, -1i32);
    // SAFETY: all buffers are sized per the dsyevr contract (a: n×n, w: n,
    // z: n×n with ldz = n, isuppz: 2n); the first call is a workspace query.
    unsafe {
        lapack_sys::dsyevr_(
            &jobz, &range_c, &uplo, &ni, data.as_mut_ptr(), &ni, &vl, &vu, &il, &iu, &abstol,
            &mut m, w.as_mut_ptr(), z.as_mut_ptr(), &ni, isuppz.as_mut_ptr(),
            work_query.as_mut_ptr(), &lwork, iwork_query.as_mut_ptr(), &liwork, &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Lapack { routine: "dsyevr", info });
    }
    lwork = work_query[0] as i32;
    liwork = iwork_query[0];
    let mut work = vec![0.0f64; lwork.max(1) as usize];
    let mut iwork = vec![0i32; liwork.max(1) as usize];
    // SAFETY: as above, with workspaces of the queried sizes.
    unsafe {
        lapack_sys::dsyevr_(
            &jobz, &range_c, &uplo, &ni, data.as_mut_ptr(), &ni, &vl, &vu, &il, &iu, &abstol,
            &mut m, w.as_mut_ptr(), z.as_mut_ptr(), &ni, isuppz.as_mut_ptr(),
            work.as_mut_ptr(), &lwork, iwork.as_mut_ptr(), &liwork, &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Lapack { routine: "dsyevr", info });
    }
    let m = m as usize;
    w.truncate(m);
    z.truncate(n * m);
    let vectors = Array2::from_shape_vec((n, m).f(), z).expect("shape matches buffer");
    Ok((w, vectors.as_standard_layout().into_owned()))
}

/// Verifies the linked LAPACK/BLAS on a 256 x 256 problem: orthonormal
/// eigenvectors that reconstruct the input. Some OpenBLAS builds select
/// faulty kernels on recent CPUs and fail this silently otherwise.
pub fn dense_backend_check() -> Result<()> {
    let n = 256;
    let a = Array2::from_shape_fn((n, n), |(i, j)| ((i * j) as f64 * 0.37).sin() + ((i + j) as f64).cos());
    let (w, v) = symmetric_eigen(a.clone(), EigenRange::All)?;
    let gram = v.t().dot(&v);
    let mut worst: f64 = 0.0;
    for ((i, j), g) in gram.indexed_iter() {
        worst = worst.max((g - if i == j { 1.0 } else { 0.0 }).abs());
    }
    let recon = (&v * &ndarray::Array1::from(w)).dot(&v.t());
    for (x, y) in recon.iter().zip(a.iter()) {
        worst = worst.max((x - y).abs() / 16.0);
    }
    if worst > 1e-10 {
        return Err(Error::Linalg(format!(
            "the dense eigensolver backend is inaccurate (error {worst:.2e}); \
             with OpenBLAS, export OPENBLAS_CORETYPE=Haswell and rerun"
        )));
    }
    Ok(())
}
