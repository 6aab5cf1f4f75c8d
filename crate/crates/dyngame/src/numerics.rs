//! Dense linear solves, definiteness classification, and matrix identity residuals.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense real matrix used throughout the crate.
pub type Matrix = DMatrix<f64>;
/// Dense real column vector used throughout the crate.
pub type Vector = DVector<f64>;

/// Relative pivot magnitude below which a system is declared singular.
pub const PIVOT_TOLERANCE: f64 = 1e-12;
/// Default tolerance for symmetry repair and definiteness classification.
pub const DEFAULT_TOLERANCE: f64 = 1e-9;

/// Largest absolute entry of a matrix (0 for an empty matrix).
pub fn max_abs(m: &Matrix) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// Largest absolute entry of a vector (0 for an empty vector).
pub fn max_abs_vec(v: &Vector) -> f64 {
    v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// Solves `lhs * X = rhs` by LU factorization with partial pivoting.
///
/// `system` names the equation family that produced the operator and is carried
/// into the error when the operator is singular within [`PIVOT_TOLERANCE`].
pub fn solve_dense(lhs: &Matrix, rhs: &Matrix, system: &str) -> Result<Matrix> {
    let q = lhs.nrows();
    if lhs.ncols() != q {
        return Err(Error::InvalidArgument(format!(
            "{system}: left-hand side is {}x{}, expected square",
            q,
            lhs.ncols()
        )));
    }
    if rhs.nrows() != q {
        return Err(Error::InvalidArgument(format!(
            "{system}: right-hand side has {} rows, expected {q}",
            rhs.nrows()
        )));
    }
    if q == 0 {
        return Ok(Matrix::zeros(0, rhs.ncols()));
    }
    let scale = max_abs(lhs);
    let lu = lhs.clone().lu();
    let pivots = lu.u().diagonal();
    let largest = pivots.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    let smallest = pivots.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
    if scale == 0.0 || smallest <= PIVOT_TOLERANCE * scale {
        let condition = if largest > 0.0 { smallest / largest } else { 0.0 };
        return Err(Error::Singular {
            system: system.to_string(),
            stage: None,
            condition,
        });
    }
    let solution = lu.solve(rhs).ok_or_else(|| Error::Singular {
        system: system.to_string(),
        stage: None,
        condition: smallest / largest,
    })?;
    let residual = max_abs(&(lhs * &solution - rhs));
    let bound = 1e-10 * (1.0 + scale * max_abs(&solution));
    if residual > bound {
        log::warn!("{system}: solve residual {residual:.3e} exceeds {bound:.3e}");
    }
    Ok(solution)
}

/// Vector right-hand-side convenience wrapper around [`solve_dense`].
pub fn solve_dense_vec(lhs: &Matrix, rhs: &Vector, system: &str) -> Result<Vector> {
    let rhs_matrix = Matrix::from_column_slice(rhs.len(), 1, rhs.as_slice());
    let x = solve_dense(lhs, &rhs_matrix, system)?;
    Ok(x.column(0).into_owned())
}

/// Solves a block system `sum_j blocks[i][j] * X_j = rhs[i]` for all `i`.
///
/// Each `blocks[i][j]` is `d_i x d_j` and each `rhs[i]` is `d_i x c`. The blocks are
/// assembled into one dense operator in ascending block order and factored once.
pub fn solve_blocks(blocks: &[Vec<Matrix>], rhs: &[Matrix], system: &str) -> Result<Vec<Matrix>> {
    let count = blocks.len();
    if rhs.len() != count {
        return Err(Error::InvalidArgument(format!(
            "{system}: {count} block rows but {} right-hand sides",
            rhs.len()
        )));
    }
    let dims: Vec<usize> = rhs.iter().map(|r| r.nrows()).collect();
    let columns = rhs.first().map_or(0, |r| r.ncols());
    let offsets: Vec<usize> = dims
        .iter()
        .scan(0, |acc, d| {
            let start = *acc;
            *acc += d;
            Some(start)
        })
        .collect();
    let total: usize = dims.iter().sum();
    let mut lhs = Matrix::zeros(total, total);
    let mut stacked = Matrix::zeros(total, columns);
    for i in 0..count {
        if blocks[i].len() != count || rhs[i].ncols() != columns {
            return Err(Error::InvalidArgument(format!(
                "{system}: block row {i} has inconsistent shape"
            )));
        }
        for j in 0..count {
            let block = &blocks[i][j];
            if block.shape() != (dims[i], dims[j]) {
                return Err(Error::InvalidArgument(format!(
                    "{system}: block ({i},{j}) is {:?}, expected {:?}",
                    block.shape(),
                    (dims[i], dims[j])
                )));
            }
            lhs.view_mut((offsets[i], offsets[j]), (dims[i], dims[j]))
                .copy_from(block);
        }
        stacked
            .view_mut((offsets[i], 0), (dims[i], columns))
            .copy_from(&rhs[i]);
    }
    let solution = solve_dense(&lhs, &stacked, system)?;
    Ok((0..count)
        .map(|i| solution.view((offsets[i], 0), (dims[i], columns)).into_owned())
        .collect())
}

/// Returns the symmetrized matrix when its asymmetry is within
/// `tol * (1 + max|M|)`, and an error otherwise.
pub fn symmetrize(m: &Matrix, tol: f64) -> Result<Matrix> {
    if !m.is_square() {
        return Err(Error::InvalidArgument(format!(
            "matrix is {}x{}, expected square",
            m.nrows(),
            m.ncols()
        )));
    }
    let asymmetry = max_abs(&(m - m.transpose()));
    if asymmetry > tol * (1.0 + max_abs(m)) {
        return Err(Error::InvalidArgument(format!(
            "matrix is not symmetric (asymmetry {asymmetry:.3e})"
        )));
    }
    Ok((m + m.transpose()) * 0.5)
}

/// Definiteness class of a symmetric matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefinitenessClass {
    PositiveDefinite,
    PositiveSemidefinite,
    Indefinite,
}

/// Definiteness classification together with the smallest eigenvalue.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Definiteness {
    pub class: DefinitenessClass,
    pub min_eigenvalue: f64,
}

/// Smallest eigenvalue of the symmetric part of a square matrix.
pub fn min_symmetric_eigenvalue(m: &Matrix) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    let sym = (m + m.transpose()) * 0.5;
    SymmetricEigen::new(sym).eigenvalues.min()
}

/// Classifies a symmetric matrix by its smallest eigenvalue against `±tol`.
///
/// Matrices whose asymmetry exceeds the repair tolerance are rejected.
pub fn classify_definiteness(m: &Matrix, tol: f64) -> Result<Definiteness> {
    let sym = symmetrize(m, DEFAULT_TOLERANCE.max(tol))?;
    let min_eigenvalue = min_symmetric_eigenvalue(&sym);
    let class = if min_eigenvalue > tol {
        DefinitenessClass::PositiveDefinite
    } else if min_eigenvalue >= -tol {
        DefinitenessClass::PositiveSemidefinite
    } else {
        DefinitenessClass::Indefinite
    };
    Ok(Definiteness {
        class,
        min_eigenvalue,
    })
}

/// Residuals of the two push-through identities for positive definite `a`:
///
/// 1. `I - a b (I + b' a b)^-1 b' = (I + a b b')^-1`
/// 2. `I - b (I + b' a b)^-1 b' a = (I + b b' a)^-1`
///
/// Each residual is the max-norm of the difference of the two sides.
pub fn pushthrough_residuals(a: &Matrix, b: &Matrix) -> Result<(f64, f64)> {
    let p = a.nrows();
    if b.nrows() != p {
        return Err(Error::InvalidArgument(format!(
            "b has {} rows, expected {p}",
            b.nrows()
        )));
    }
    let definiteness = classify_definiteness(a, DEFAULT_TOLERANCE)?;
    if definiteness.class != DefinitenessClass::PositiveDefinite {
        return Err(Error::Precondition(format!(
            "push-through identities require a positive definite matrix (min eigenvalue {:.3e})",
            definiteness.min_eigenvalue
        )));
    }
    let ip = Matrix::identity(p, p);
    let im = Matrix::identity(b.ncols(), b.ncols());
    let inner = &im + b.transpose() * a * b;
    let inner_inv = solve_dense(&inner, &im, "push-through inner inverse")?;
    let bbt = b * b.transpose();

    let left1 = &ip - a * b * &inner_inv * b.transpose();
    let right1 = solve_dense(&(&ip + a * &bbt), &ip, "push-through identity 1")?;
    let left2 = &ip - b * &inner_inv * b.transpose() * a;
    let right2 = solve_dense(&(&ip + &bbt * a), &ip, "push-through identity 2")?;
    Ok((max_abs(&(left1 - right1)), max_abs(&(left2 - right2))))
}
