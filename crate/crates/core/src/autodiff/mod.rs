//! First-order sensitivities of the weighted least-squares homography.
//!
//! The forward solve runs on the QR path; gradients use the stationarity
//! condition of the same problem, `(ÃᵀWÃ) h = ÃᵀW b`, differentiated
//! implicitly:
//!
//! ```text
//! ∂h/∂wᵢ = (ÃᵀWÃ)⁻¹ Ãᵢᵀ (bᵢ − Ãᵢ h)
//! ```
//!
//! where `Ãᵢ`, `bᵢ` are the two rows of pair `i`. The solver conditions the
//! points before solving, so this is evaluated in conditioned coordinates
//! and pushed through the de-normalization and the h33 = 1 rescaling. The
//! conditioning transforms depend only on which pairs are above the weight
//! floor, so they are constant under small weight perturbations.

use nalgebra::{DMatrix, DVector, Matrix3, SMatrix, SVector, Vector3};

use crate::error::{Error, Result};
use crate::estimators::{constraint_rows, solve_detail, Conditioning, CorrespondenceSet};
use crate::geometry::{Homography, Point2};

pub mod gradcheck;

/// Gradients of one weighted solve.
#[derive(Clone, Debug)]
pub struct SolveGradients {
    /// The solution the gradients were taken at.
    pub homography: Homography,
    /// `8 × N`: column `i` is `∂[h11 … h32]/∂wᵢ` of the canonical solution.
    pub d_h_d_w: DMatrix<f64>,
    /// `∂L/∂wᵢ` when a reprojection loss is attached.
    pub d_loss_d_w: Option<DVector<f64>>,
    pub loss: Option<f64>,
}

fn weights_of(c: &CorrespondenceSet) -> Vec<f64> {
    (0..c.len()).map(|i| c.weight(i)).collect()
}

/// `∂ĥ/∂w` for every pair, sharing one factorization of the normal matrix.
pub fn grad_solution_wrt_weights(c: &CorrespondenceSet) -> Result<SolveGradients> {
    let w = weights_of(c);
    let detail = solve_detail(c, Some(&w), Conditioning::Hartley)?;
    let t_src = detail.src_transform;
    let t_dst = detail.dst_transform;
    let hn = SVector::<f64, 8>::from_row_slice(&detail.normalized_params);

    let rows: Vec<([[f64; 8]; 2], [f64; 2])> = c
        .pairs()
        .iter()
        .map(|pr| constraint_rows(t_src.apply(pr.p), t_dst.apply(pr.p_prime)))
        .collect();

    let mut normal = SMatrix::<f64, 8, 8>::zeros();
    for (i, (a, _)) in rows.iter().enumerate() {
        if w[i] <= crate::estimators::WEIGHT_FLOOR {
            continue;
        }
        for row in a {
            let r = SVector::<f64, 8>::from_row_slice(row);
            normal += w[i] * r * r.transpose();
        }
    }
    let lu = normal.lu();

    // de-normalization: H = T'⁻¹ Hn T, then divide by H33
    let t_inv = t_dst.inverse_matrix();
    let t = t_src.matrix();
    let hn_full = Matrix3::new(hn[0], hn[1], hn[2], hn[3], hn[4], hn[5], hn[6], hn[7], 1.0);
    let h_raw = t_inv * hn_full * t;
    let h33 = h_raw[(2, 2)];

    let n = c.len();
    let mut d_h_d_w = DMatrix::zeros(8, n);
    for (i, (a, b)) in rows.iter().enumerate() {
        let mut g = SVector::<f64, 8>::zeros();
        for k in 0..2 {
            let r = SVector::<f64, 8>::from_row_slice(&a[k]);
            let resid = b[k] - r.dot(&hn);
            g += r * resid;
        }
        let dhn = lu
            .solve(&g)
            .ok_or_else(|| Error::DegenerateConfiguration("normal matrix is singular".into()))?;
        let dhn_full = Matrix3::new(dhn[0], dhn[1], dhn[2], dhn[3], dhn[4], dhn[5], dhn[6], dhn[7], 0.0);
        let dh_raw = t_inv * dhn_full * t;
        let dh = dh_raw / h33 - h_raw * (dh_raw[(2, 2)] / (h33 * h33));
        for k in 0..8 {
            d_h_d_w[(k, i)] = dh[(k / 3, k % 3)];
        }
    }

    Ok(SolveGradients {
        homography: detail.homography,
        d_h_d_w,
        d_loss_d_w: None,
        loss: None,
    })
}

/// Loss value and `∂L/∂θ` over the eight canonical parameters for
/// `L(H) = mean ‖p − H⁻¹ H_gt p‖`. Points with exactly zero error
/// contribute a zero subgradient.
pub(crate) fn loss_and_param_gradient(
    h: &Homography,
    h_gt: &Homography,
    points: &[Point2],
) -> Result<(f64, [f64; 8])> {
    if points.is_empty() {
        return Err(Error::EmptyInput("evaluation points"));
    }
    let h_inv = h
        .matrix()
        .try_inverse()
        .ok_or_else(|| Error::DegenerateResult("estimate is not invertible".into()))?;
    let mut loss = 0.0;
    let mut grad = [0.0; 8];
    let inv_n = 1.0 / points.len() as f64;
    for p in points {
        let q = h_gt.matrix() * Vector3::new(p.x, p.y, 1.0);
        let u = h_inv * q;
        if !(u.z.abs() > 1e-12) {
            return Err(Error::PointAtInfinity(u.z));
        }
        let proj = Point2::new(u.x / u.z, u.y / u.z);
        let e = *p - proj;
        let norm = e.x.hypot(e.y);
        loss += norm * inv_n;
        if norm == 0.0 {
            continue;
        }
        // d u = −H⁻¹ E_k u for the unit perturbation E_k of entry k
        for (k, gk) in grad.iter_mut().enumerate() {
            let (row, col) = (k / 3, k % 3);
            let du = -h_inv.column(row) * u[col];
            let dpx = (du.x * u.z - u.x * du.z) / (u.z * u.z);
            let dpy = (du.y * u.z - u.y * du.z) / (u.z * u.z);
            *gk += -(e.x * dpx + e.y * dpy) / norm * inv_n;
        }
    }
    Ok((loss, grad))
}

/// `∂L/∂w` through the reprojection loss and the weighted solve.
pub fn grad_loss_wrt_weights(
    c: &CorrespondenceSet,
    h_gt: &Homography,
    eval_points: &[Point2],
) -> Result<SolveGradients> {
    let mut g = grad_solution_wrt_weights(c)?;
    let (loss, dl_dh) = loss_and_param_gradient(&g.homography, h_gt, eval_points)?;
    let dl = DVector::from_row_slice(&dl_dh);
    let d_loss = g.d_h_d_w.transpose() * dl;
    g.d_loss_d_w = Some(d_loss);
    g.loss = Some(loss);
    Ok(g)
}
