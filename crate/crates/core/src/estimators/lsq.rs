use nalgebra::{DMatrix, DVector, Matrix3};

use super::{constraint_rows, Conditioning, CorrespondenceSet, EstimatorReport, Similarity};
use super::{DEFAULT_INLIER_THRESHOLD, WEIGHT_FLOOR};
use crate::error::{Error, Result};
use crate::geometry::Homography;

/// Diagonal entries of R below this fraction of the largest mark rank loss.
const RANK_TOLERANCE: f64 = 1e-10;

/// Everything the gradient code needs to reproduce a weighted solve.
#[derive(Clone, Debug)]
pub(crate) struct SolveDetail {
    pub homography: Homography,
    /// Free parameters of the solution in conditioned coordinates.
    pub normalized_params: [f64; 8],
    pub src_transform: Similarity,
    pub dst_transform: Similarity,
}

/// Solves the weighted problem over the pairs with weight above the floor.
/// `weights == None` means every pair has weight one.
pub(crate) fn solve_detail(
    c: &CorrespondenceSet,
    weights: Option<&[f64]>,
    conditioning: Conditioning,
) -> Result<SolveDetail> {
    let support: Vec<usize> = match weights {
        None => (0..c.len()).collect(),
        Some(w) => (0..c.len()).filter(|&i| w[i] > WEIGHT_FLOOR).collect(),
    };
    if support.len() < 4 {
        return Err(match weights {
            None => Error::TooFewCorrespondences(c.len()),
            Some(_) => Error::InsufficientSupport {
                support: support.len(),
            },
        });
    }
    let pairs = c.pairs();
    let (src_transform, dst_transform) = match conditioning {
        Conditioning::Hartley => (
            Similarity::hartley(support.iter().map(|&i| &pairs[i].p)),
            Similarity::hartley(support.iter().map(|&i| &pairs[i].p_prime)),
        ),
        Conditioning::None => (Similarity::IDENTITY, Similarity::IDENTITY),
    };

    let m = support.len();
    let mut a = DMatrix::zeros(2 * m, 8);
    let mut b = DVector::zeros(2 * m);
    for (r, &i) in support.iter().enumerate() {
        let sw = weights.map_or(1.0, |w| w[i].sqrt());
        let p = src_transform.apply(pairs[i].p);
        let q = dst_transform.apply(pairs[i].p_prime);
        let (rows, rhs) = constraint_rows(p, q);
        for k in 0..2 {
            for j in 0..8 {
                a[(2 * r + k, j)] = sw * rows[k][j];
            }
            b[2 * r + k] = sw * rhs[k];
        }
    }

    let normalized_params = qr_solve(a, b)?;
    let hn = Matrix3::new(
        normalized_params[0],
        normalized_params[1],
        normalized_params[2],
        normalized_params[3],
        normalized_params[4],
        normalized_params[5],
        normalized_params[6],
        normalized_params[7],
        1.0,
    );
    let full = dst_transform.inverse_matrix() * hn * src_transform.matrix();
    let homography = Homography::new(full)?;
    Ok(SolveDetail {
        homography,
        normalized_params,
        src_transform,
        dst_transform,
    })
}

/// Least squares via Householder QR then back-substitution on `R h = Qᵀ b`.
fn qr_solve(a: DMatrix<f64>, mut b: DVector<f64>) -> Result<[f64; 8]> {
    let qr = a.qr();
    let r = qr.r();
    let diag_max = (0..8).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if let Some(i) = (0..8).find(|&i| !(r[(i, i)].abs() > RANK_TOLERANCE * diag_max)) {
        return Err(Error::DegenerateConfiguration(format!(
            "constraint matrix is rank deficient (R[{i},{i}] = {:e})",
            r[(i, i)]
        )));
    }
    qr.q_tr_mul(&mut b);
    let rhs = b.rows(0, 8).into_owned();
    let h = r
        .solve_upper_triangular(&rhs)
        .ok_or_else(|| Error::DegenerateConfiguration("triangular solve failed".into()))?;
    let mut out = [0.0; 8];
    out.copy_from_slice(h.as_slice());
    Ok(out)
}

/// Unweighted least squares over every pair.
pub fn solve_lsq(c: &CorrespondenceSet, conditioning: Conditioning) -> Result<EstimatorReport> {
    let detail = solve_detail(c, None, conditioning)?;
    Ok(EstimatorReport::from_homography(
        c,
        detail.homography,
        DEFAULT_INLIER_THRESHOLD,
        1,
    ))
}

/// Weighted least squares with one weight per pair applied to both of its
/// rows. An unweighted set is solved with unit weights.
pub fn solve_weighted_lsq(c: &CorrespondenceSet) -> Result<EstimatorReport> {
    let ones;
    let w = match c.weights() {
        Some(w) => w,
        None => {
            ones = vec![1.0; c.len()];
            &ones
        }
    };
    let detail = solve_detail(c, Some(w), Conditioning::Hartley)?;
    Ok(EstimatorReport::from_homography(
        c,
        detail.homography,
        DEFAULT_INLIER_THRESHOLD,
        1,
    ))
}
