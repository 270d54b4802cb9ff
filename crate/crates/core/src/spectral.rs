//! Symmetric eigendecomposition, the extended adjacency spectral embedding
//! and within-block statistics of embedding columns.

use nalgebra::{DMatrix, DMatrixView, DVector};

use crate::error::{Error, Result};
use crate::graph::{AdjacencyMatrix, Membership};

const SYMMETRY_TOL: f64 = 1e-12;

/// Top eigenpairs of a symmetric matrix, eigenvalues in algebraic
/// descending order.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub eigenvalues: Vec<f64>,
    /// `n x m`, orthonormal columns.
    pub eigenvectors: DMatrix<f64>,
}

/// Computes the `top` algebraically largest eigenpairs of a symmetric matrix.
///
/// Each eigenvector is flipped so that its entry of largest magnitude is
/// positive (first such entry on ties), which makes the output a
/// deterministic function of the input.
pub fn eig_sym(a: &DMatrix<f64>, top: usize) -> Result<SpectralDecomposition> {
    check_symmetric(a)?;
    eig_sym_owned(a.clone(), top)
}

fn check_symmetric(a: &DMatrix<f64>) -> Result<()> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::param(format!(
            "matrix is {}x{}, not square",
            n,
            a.ncols()
        )));
    }
    for j in 0..n {
        for i in j + 1..n {
            let (x, y) = (a[(i, j)], a[(j, i)]);
            if (x - y).abs() > SYMMETRY_TOL * (1.0 + x.abs().max(y.abs())) {
                return Err(Error::param(format!(
                    "matrix is not symmetric at ({i},{j})"
                )));
            }
        }
    }
    Ok(())
}

/// Same as [`eig_sym`] but consumes the (already validated) input, which
/// LAPACK overwrites.
fn eig_sym_owned(mut a: DMatrix<f64>, top: usize) -> Result<SpectralDecomposition> {
    let n = a.nrows();
    if top == 0 || top > n {
        return Err(Error::param(format!(
            "requested {top} eigenpairs of a {n}x{n} matrix"
        )));
    }
    let n_i = i32::try_from(n).map_err(|_| Error::param("matrix too large for LAPACK"))?;
    let jobz = b'V' as libc_char;
    let range = b'I' as libc_char;
    let uplo = b'L' as libc_char;
    let il = n_i - top as i32 + 1;
    let iu = n_i;
    let (vl, vu, abstol) = (0.0, 0.0, 0.0);
    let mut m = 0i32;
    let mut w = vec![0.0; n];
    let mut z = vec![0.0; n * top];
    let mut isuppz = vec![0i32; 2 * top];
    let mut info = 0i32;

    let mut work_query = [0.0f64];
    let mut iwork_query = [0i32];
    // SAFETY: all pointers reference live buffers of the sizes LAPACK expects
    // for the arguments passed; a workspace query (lwork = -1) writes only
    // the first element of work and iwork.
    unsafe {
        lapack_sys::dsyevr_(
            &jobz,
            &range,
            &uplo,
            &n_i,
            a.as_mut_ptr(),
            &n_i,
            &vl,
            &vu,
            &il,
            &iu,
            &abstol,
            &mut m,
            w.as_mut_ptr(),
            z.as_mut_ptr(),
            &n_i,
            isuppz.as_mut_ptr(),
            work_query.as_mut_ptr(),
            &-1,
            iwork_query.as_mut_ptr(),
            &-1,
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Numeric(format!(
            "dsyevr workspace query failed (info = {info})"
        )));
    }
    let lwork = work_query[0] as i32;
    let liwork = iwork_query[0];
    let mut work = vec![0.0; lwork as usize];
    let mut iwork = vec![0i32; liwork as usize];
    // SAFETY: as above, with workspaces sized by the query.
    unsafe {
        lapack_sys::dsyevr_(
            &jobz,
            &range,
            &uplo,
            &n_i,
            a.as_mut_ptr(),
            &n_i,
            &vl,
            &vu,
            &il,
            &iu,
            &abstol,
            &mut m,
            w.as_mut_ptr(),
            z.as_mut_ptr(),
            &n_i,
            isuppz.as_mut_ptr(),
            work.as_mut_ptr(),
            &lwork,
            iwork.as_mut_ptr(),
            &liwork,
            &mut info,
        );
    }
    if info != 0 {
        return Err(Error::Numeric(format!(
            "symmetric eigensolver did not converge (info = {info})"
        )));
    }
    if m as usize != top {
        return Err(Error::Numeric(format!(
            "eigensolver returned {m} of {top} eigenpairs"
        )));
    }

    // LAPACK returns ascending order; reverse to descending.
    let eigenvalues: Vec<f64> = w[..top].iter().rev().copied().collect();
    let mut eigenvectors = DMatrix::zeros(n, top);
    for (dst, src) in (0..top).zip((0..top).rev()) {
        let col = &z[src * n..(src + 1) * n];
        let pivot = col
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |(bi, bv), (i, &v)| {
                if v.abs() > bv.abs() {
                    (i, v)
                } else {
                    (bi, bv)
                }
            })
            .1;
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for (i, &v) in col.iter().enumerate() {
            eigenvectors[(i, dst)] = sign * v;
        }
    }
    Ok(SpectralDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

#[allow(non_camel_case_types)]
type libc_char = std::ffi::c_char;

/// Extended spectral embedding `Z = U_D * Lambda_D^{1/2}`.
#[derive(Debug, Clone)]
pub struct ExtendedEmbedding {
    z: DMatrix<f64>,
    eigenvalues: Vec<f64>,
}

impl ExtendedEmbedding {
    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn dim(&self) -> usize {
        self.z.ncols()
    }

    pub fn n(&self) -> usize {
        self.z.nrows()
    }

    /// The top-`D` eigenvalues, descending.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Leading `d` columns (informative part) and trailing `D - d` columns
    /// (redundant part).
    pub fn split(&self, d: usize) -> Result<(DMatrixView<'_, f64>, DMatrixView<'_, f64>)> {
        split(&self.z, d)
    }

    /// First `d` columns as an owned matrix.
    pub fn truncated(&self, d: usize) -> Result<DMatrix<f64>> {
        Ok(self.split(d)?.0.into_owned())
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.z
    }
}

/// Column split of an `n x D` matrix at `d`.
pub fn split(z: &DMatrix<f64>, d: usize) -> Result<(DMatrixView<'_, f64>, DMatrixView<'_, f64>)> {
    let total = z.ncols();
    if d > total {
        return Err(Error::param(format!(
            "split point {d} exceeds dimension {total}"
        )));
    }
    Ok((z.columns(0, d), z.columns(d, total - d)))
}

/// Extended adjacency spectral embedding to dimension `dim`.
///
/// Fails when the `dim`-th largest eigenvalue is not positive; the error
/// names the largest dimension that would succeed.
pub fn extended_ase(a: &AdjacencyMatrix, dim: usize) -> Result<ExtendedEmbedding> {
    if a.n() == 0 {
        return Err(Error::param("graph has no vertices"));
    }
    embed_symmetric(a.to_dense(), dim)
}

/// Spectral embedding of an arbitrary symmetric matrix (no symmetry check
/// beyond the one in [`eig_sym`]).
pub fn embed_symmetric(m: DMatrix<f64>, dim: usize) -> Result<ExtendedEmbedding> {
    check_symmetric(&m)?;
    if dim == 0 || dim > m.nrows() {
        return Err(Error::param(format!(
            "embedding dimension {dim} must lie in 1..={}",
            m.nrows()
        )));
    }
    let SpectralDecomposition {
        eigenvalues,
        mut eigenvectors,
    } = eig_sym_owned(m, dim)?;
    let positive = eigenvalues.iter().take_while(|&&l| l > 0.0).count();
    if positive < dim {
        return Err(Error::EmbeddingDimension {
            requested: dim,
            max_admissible: positive,
        });
    }
    for (s, &l) in eigenvalues.iter().enumerate() {
        eigenvectors.column_mut(s).scale_mut(l.sqrt());
    }
    Ok(ExtendedEmbedding {
        z: eigenvectors,
        eigenvalues,
    })
}

/// Per-block sample moments of matrix rows.
#[derive(Debug, Clone)]
pub struct BlockStat {
    pub size: usize,
    pub mean: DVector<f64>,
    /// Unbiased per-column variances; equal to the covariance diagonal.
    pub variances: DVector<f64>,
    /// Unbiased sample covariance (divisor `size - 1`).
    pub covariance: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct BlockStats {
    pub blocks: Vec<BlockStat>,
}

impl BlockStats {
    /// Mean absolute off-diagonal covariance of each block.
    pub fn mean_abs_off_diagonal(&self) -> Vec<f64> {
        self.blocks
            .iter()
            .map(|b| {
                let p = b.covariance.nrows();
                if p < 2 {
                    return 0.0;
                }
                let mut s = 0.0;
                for i in 0..p {
                    for j in 0..p {
                        if i != j {
                            s += b.covariance[(i, j)].abs();
                        }
                    }
                }
                s / (p * (p - 1)) as f64
            })
            .collect()
    }
}

/// Within-block mean, variances and covariance of the rows of `y`.
pub fn block_stats(y: DMatrixView<'_, f64>, tau: &Membership) -> Result<BlockStats> {
    if y.nrows() != tau.len() {
        return Err(Error::param(format!(
            "{} rows but {} membership labels",
            y.nrows(),
            tau.len()
        )));
    }
    let sizes = tau.block_sizes();
    if let Some((block, &size)) = sizes.iter().enumerate().find(|(_, &s)| s < 2) {
        return Err(Error::DegenerateBlock { block, size });
    }
    let p = y.ncols();
    let blocks = sizes
        .iter()
        .enumerate()
        .map(|(k, &size)| {
            let rows: Vec<usize> = tau
                .labels()
                .iter()
                .enumerate()
                .filter_map(|(i, &l)| (l == k).then_some(i))
                .collect();
            let mut mean = DVector::zeros(p);
            for &i in &rows {
                mean += y.row(i).transpose();
            }
            mean /= size as f64;
            let mut covariance = DMatrix::zeros(p, p);
            for &i in &rows {
                let c = y.row(i).transpose() - &mean;
                covariance.ger(1.0, &c, &c, 1.0);
            }
            covariance /= (size - 1) as f64;
            // keep exact symmetry
            for a in 0..p {
                for b in a + 1..p {
                    let v = 0.5 * (covariance[(a, b)] + covariance[(b, a)]);
                    covariance[(a, b)] = v;
                    covariance[(b, a)] = v;
                }
            }
            let variances = covariance.diagonal();
            BlockStat {
                size,
                mean,
                variances,
                covariance,
            }
        })
        .collect();
    Ok(BlockStats { blocks })
}
