use nalgebra::{DMatrix, DVector, Matrix3};
use serde::{Deserialize, Serialize};

use super::CorrespondenceSet;
use crate::error::{Error, Result};
use crate::geometry::Point2;

/// Point conditioning applied inside the solvers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Conditioning {
    /// Shift to the centroid and scale to mean distance √2, per point set.
    #[default]
    Hartley,
    /// Raw pixel coordinates.
    None,
}

/// The stacked `2N × 8` system `Ã h̃ = b` over the eight free parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintSystem {
    pub a_tilde: DMatrix<f64>,
    pub b: DVector<f64>,
}

/// The two rows (and right-hand sides) contributed by one pair.
#[inline]
pub(crate) fn constraint_rows(p: Point2, q: Point2) -> ([[f64; 8]; 2], [f64; 2]) {
    let (x, y) = (p.x, p.y);
    let (xp, yp) = (q.x, q.y);
    (
        [
            [0.0, 0.0, 0.0, -x, -y, -1.0, yp * x, yp * y],
            [x, y, 1.0, 0.0, 0.0, 0.0, -xp * x, -xp * y],
        ],
        [-yp, xp],
    )
}

/// Stacks the constraint rows of every pair in raw pixel coordinates.
pub fn build_system(c: &CorrespondenceSet) -> Result<ConstraintSystem> {
    let n = c.len();
    if n < 4 {
        return Err(Error::TooFewCorrespondences(n));
    }
    let mut a_tilde = DMatrix::zeros(2 * n, 8);
    let mut b = DVector::zeros(2 * n);
    for (i, pair) in c.pairs().iter().enumerate() {
        let (rows, rhs) = constraint_rows(pair.p, pair.p_prime);
        for (k, row) in rows.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                a_tilde[(2 * i + k, j)] = v;
            }
            b[2 * i + k] = rhs[k];
        }
    }
    Ok(ConstraintSystem { a_tilde, b })
}

/// `p ↦ scale · (p − center)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct Similarity {
    pub scale: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Similarity {
    pub const IDENTITY: Similarity = Similarity {
        scale: 1.0,
        cx: 0.0,
        cy: 0.0,
    };

    pub fn hartley<'a>(points: impl Iterator<Item = &'a Point2> + Clone) -> Similarity {
        let mut n = 0usize;
        let (mut sx, mut sy) = (0.0, 0.0);
        for p in points.clone() {
            sx += p.x;
            sy += p.y;
            n += 1;
        }
        if n == 0 {
            return Self::IDENTITY;
        }
        let (cx, cy) = (sx / n as f64, sy / n as f64);
        let mean_dist = points.map(|p| (p.x - cx).hypot(p.y - cy)).sum::<f64>() / n as f64;
        let scale = if mean_dist > 0.0 {
            std::f64::consts::SQRT_2 / mean_dist
        } else {
            1.0
        };
        Similarity { scale, cx, cy }
    }

    #[inline]
    pub fn apply(&self, p: Point2) -> Point2 {
        Point2::new(self.scale * (p.x - self.cx), self.scale * (p.y - self.cy))
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        let s = self.scale;
        Matrix3::new(s, 0.0, -s * self.cx, 0.0, s, -s * self.cy, 0.0, 0.0, 1.0)
    }

    pub fn inverse_matrix(&self) -> Matrix3<f64> {
        let s = 1.0 / self.scale;
        Matrix3::new(s, 0.0, self.cx, 0.0, s, self.cy, 0.0, 0.0, 1.0)
    }
}
