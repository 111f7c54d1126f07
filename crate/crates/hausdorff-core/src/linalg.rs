//! Small-matrix helpers for the rotation-group backends: the orthonormal
//! skew-symmetric basis, principal logarithm, re-orthogonalization, and
//! rotation-angle extraction.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Orthonormal basis of the skew-symmetric matrices so(n) under the
/// Frobenius inner product: E_{ij} = (e_i e_j^T - e_j e_i^T)/sqrt(2) for
/// i < j in lexicographic order.
pub fn skew_basis(n: usize) -> Vec<DMatrix<f64>> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut basis = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let mut e = DMatrix::zeros(n, n);
            e[(i, j)] = -s;
            e[(j, i)] = s;
            basis.push(e);
        }
    }
    basis
}

/// Coordinates of a skew matrix in the `skew_basis` ordering.
pub fn skew_coords(x: &DMatrix<f64>) -> DVector<f64> {
    let n = x.nrows();
    let s = std::f64::consts::SQRT_2;
    let mut v = DVector::zeros(n * (n - 1) / 2);
    let mut k = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            v[k] = s * x[(j, i)];
            k += 1;
        }
    }
    v
}

/// Skew matrix with the given `skew_basis` coordinates.
pub fn skew_from_coords(n: usize, v: &DVector<f64>) -> DMatrix<f64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let mut x = DMatrix::zeros(n, n);
    let mut k = 0;
    for i in 0..n {
        for j in (i + 1)..n {
            x[(i, j)] = -s * v[k];
            x[(j, i)] = s * v[k];
            k += 1;
        }
    }
    x
}

pub fn frobenius_inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Largest singular value.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.clone()
        .svd(false, false)
        .singular_values
        .iter()
        .cloned()
        .fold(0.0, f64::max)
}

/// Max-abs deviation of X^T X from the identity.
pub fn orthogonality_defect(x: &DMatrix<f64>) -> f64 {
    let n = x.nrows();
    let g = x.transpose() * x - DMatrix::identity(n, n);
    g.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

/// Nearest special-orthogonal matrix, via SVD polar projection. Flips the
/// last column sign if the projection lands on determinant -1.
pub fn reorthogonalize(x: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = x.clone().svd(true, true);
    let u = svd.u.expect("svd with vectors");
    let vt = svd.v_t.expect("svd with vectors");
    let mut q = u * vt;
    if q.determinant() < 0.0 {
        let n = q.ncols();
        for i in 0..q.nrows() {
            q[(i, n - 1)] = -q[(i, n - 1)];
        }
    }
    q
}

/// Rotation angles of a special-orthogonal matrix, one per invariant plane,
/// each in (-pi, pi]. Closed forms for n <= 3, real Schur form otherwise.
pub fn rotation_angles(x: &DMatrix<f64>) -> Result<Vec<f64>> {
    let n = x.nrows();
    match n {
        1 => Ok(vec![]),
        2 => Ok(vec![x[(1, 0)].atan2(x[(0, 0)])]),
        3 => {
            let c = ((x.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
            Ok(vec![c.acos()])
        }
        _ => {
            let mut angles = Vec::new();
            for block in schur_blocks(x)? {
                match block {
                    SchurBlock::Plane { theta, .. } => angles.push(theta),
                    SchurBlock::NegativePair { .. } => angles.push(std::f64::consts::PI),
                    SchurBlock::Fixed(_) => {}
                }
            }
            Ok(angles)
        }
    }
}

/// Geodesic distance of a special-orthogonal matrix from the identity:
/// the Frobenius norm of the principal logarithm, sqrt(2 sum theta_i^2).
pub fn rotation_distance_from_identity(x: &DMatrix<f64>) -> Result<f64> {
    let angles = rotation_angles(x)?;
    Ok((2.0 * angles.iter().map(|t| t * t).sum::<f64>()).sqrt())
}

enum SchurBlock {
    /// 2x2 rotation block on columns (i, i+1) of Q with angle theta.
    Plane { i: usize, theta: f64 },
    /// Two paired -1 eigenvalues at columns (i, j): a half-turn plane.
    NegativePair { i: usize, j: usize },
    /// A +1 eigenvalue (fixed direction).
    Fixed(#[allow(dead_code)] usize),
}

/// Block structure of the real Schur form of a special-orthogonal matrix,
/// together with the orthogonal similarity Q. For a normal matrix the Schur
/// form is block diagonal: 2x2 rotation blocks and eigenvalues +-1. The -1
/// entries are paired in order of appearance (the fixed convention for
/// half-turn planes).
fn schur_decompose(x: &DMatrix<f64>) -> Result<(DMatrix<f64>, Vec<SchurBlock>)> {
    let schur = nalgebra::linalg::Schur::try_new(x.clone(), 1e-14, 10_000)
        .ok_or_else(|| Error::Numerical("real Schur iteration did not converge".into()))?;
    let (q, t) = schur.unpack();
    let n = t.nrows();
    let mut blocks = Vec::new();
    let mut negatives = Vec::new();
    let mut i = 0;
    while i < n {
        if i + 1 < n && t[(i + 1, i)].abs() > 1e-8 {
            let a = t[(i, i)];
            let d = t[(i + 1, i + 1)];
            let b = t[(i, i + 1)];
            let c = t[(i + 1, i)];
            let theta = (0.5 * (c - b)).atan2(0.5 * (a + d));
            blocks.push(SchurBlock::Plane { i, theta });
            i += 2;
        } else {
            if t[(i, i)] < 0.0 {
                negatives.push(i);
            } else {
                blocks.push(SchurBlock::Fixed(i));
            }
            i += 1;
        }
    }
    if negatives.len() % 2 != 0 {
        return Err(Error::Numerical(
            "odd count of -1 eigenvalues: matrix is not special-orthogonal".into(),
        ));
    }
    for pair in negatives.chunks(2) {
        blocks.push(SchurBlock::NegativePair {
            i: pair[0],
            j: pair[1],
        });
    }
    Ok((q, blocks))
}

fn schur_blocks(x: &DMatrix<f64>) -> Result<Vec<SchurBlock>> {
    schur_decompose(x).map(|(_, b)| b)
}

/// Principal logarithm of a special-orthogonal matrix: the skew-symmetric
/// generator with all rotation angles in (-pi, pi]. Half-turn planes (angle
/// exactly pi) use the paired-eigenvector convention of the Schur form.
pub fn so_log(x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = x.nrows();
    if orthogonality_defect(x) > 1e-8 {
        return Err(Error::Numerical(
            "matrix logarithm requested outside the special-orthogonal backend".into(),
        ));
    }
    let (q, blocks) = schur_decompose(x)?;
    let mut s = DMatrix::zeros(n, n);
    for block in blocks {
        match block {
            SchurBlock::Plane { i, theta } => {
                s[(i, i + 1)] = -theta;
                s[(i + 1, i)] = theta;
            }
            SchurBlock::NegativePair { i, j } => {
                s[(i, j)] = -std::f64::consts::PI;
                s[(j, i)] = std::f64::consts::PI;
            }
            SchurBlock::Fixed(_) => {}
        }
    }
    let out = &q * s * q.transpose();
    // enforce exact skew-symmetry against roundoff
    Ok(0.5 * (&out - out.transpose()))
}

/// Exponential of a skew-symmetric matrix, projected back onto the group.
pub fn so_exp(s: &DMatrix<f64>) -> DMatrix<f64> {
    reorthogonalize(&s.exp())
}
