use std::fmt;

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this fraction of the max-norm, h33 is treated as vanishing.
const H33_RELATIVE_FLOOR: f64 = 1e-9;
const MIN_DETERMINANT: f64 = 1e-12;
const MIN_HOMOGENEOUS_SCALE: f64 = 1e-12;

/// Pixel coordinate.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl std::ops::Sub for Point2 {
    type Output = Point2;
    fn sub(self, rhs: Point2) -> Point2 {
        Point2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl std::ops::Add for Point2 {
    type Output = Point2;
    fn add(self, rhs: Point2) -> Point2 {
        Point2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

/// A planar projective transform in pixel coordinates, kept in canonical
/// form with the bottom-right element equal to one.
#[derive(Clone, Copy, PartialEq)]
pub struct Homography {
    m: Matrix3<f64>,
}

impl fmt::Debug for Homography {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("Homography").field(&self.to_row_major()).finish()
    }
}

/// Serialized as nine row-major numbers.
impl Serialize for Homography {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_row_major().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Homography {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = <[f64; 9]>::deserialize(d)?;
        Homography::from_row_major(&v).map_err(serde::de::Error::custom)
    }
}

impl fmt::Display for Homography {
    /// Nine whitespace-separated numbers, row-major.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let v = self.to_row_major();
        for (i, x) in v.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{x}")?;
        }
        Ok(())
    }
}

impl Homography {
    pub fn identity() -> Self {
        Self {
            m: Matrix3::identity(),
        }
    }

    pub fn translation(tx: f64, ty: f64) -> Self {
        Self {
            m: Matrix3::new(1.0, 0.0, tx, 0.0, 1.0, ty, 0.0, 0.0, 1.0),
        }
    }

    /// Anisotropic scaling about the origin.
    pub fn scaling(sx: f64, sy: f64) -> Result<Self> {
        Self::new(Matrix3::new(sx, 0.0, 0.0, 0.0, sy, 0.0, 0.0, 0.0, 1.0))
    }

    /// Canonicalizes `m` (h33 = 1) and checks invertibility.
    pub fn new(m: Matrix3<f64>) -> Result<Self> {
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::DegenerateResult("non-finite matrix entry".into()));
        }
        let max_norm = m.amax();
        let h33 = m[(2, 2)];
        if max_norm == 0.0 || h33.abs() <= H33_RELATIVE_FLOOR * max_norm {
            return Err(Error::DegenerateResult(format!(
                "bottom-right element {h33:e} vanishes relative to max-norm {max_norm:e}"
            )));
        }
        let m = m / h33;
        let det = m.determinant();
        if !(det.abs() > MIN_DETERMINANT) {
            return Err(Error::DegenerateResult(format!(
                "determinant {det:e} is numerically singular"
            )));
        }
        Ok(Self { m })
    }

    pub fn from_row_major(v: &[f64; 9]) -> Result<Self> {
        Self::new(Matrix3::from_row_slice(v))
    }

    /// Builds from the eight free parameters `[h11 h12 h13 h21 h22 h23 h31 h32]`.
    pub fn from_params(p: &[f64; 8]) -> Result<Self> {
        Self::new(Matrix3::new(p[0], p[1], p[2], p[3], p[4], p[5], p[6], p[7], 1.0))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    pub fn to_row_major(&self) -> [f64; 9] {
        let m = &self.m;
        [
            m[(0, 0)],
            m[(0, 1)],
            m[(0, 2)],
            m[(1, 0)],
            m[(1, 1)],
            m[(1, 2)],
            m[(2, 0)],
            m[(2, 1)],
            m[(2, 2)],
        ]
    }

    pub fn params(&self) -> [f64; 8] {
        let v = self.to_row_major();
        [v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7]]
    }

    pub fn warp_point(&self, p: Point2) -> Result<Point2> {
        let v = self.m * Vector3::new(p.x, p.y, 1.0);
        if !(v.z.abs() > MIN_HOMOGENEOUS_SCALE) {
            return Err(Error::PointAtInfinity(v.z));
        }
        Ok(Point2::new(v.x / v.z, v.y / v.z))
    }

    /// `self · other`: applies `other` first.
    pub fn compose(&self, other: &Homography) -> Result<Homography> {
        Self::new(self.m * other.m)
    }

    pub fn inverse(&self) -> Result<Homography> {
        let inv = self
            .m
            .try_inverse()
            .ok_or_else(|| Error::DegenerateResult("matrix is not invertible".into()))?;
        Self::new(inv)
    }

    /// Conjugates by an isotropic pixel scaling: returns `S · self · S⁻¹`
    /// with `S = diag(s, s, 1)`.
    pub fn rescaled(&self, s: f64) -> Result<Homography> {
        let sm = Matrix3::new(s, 0.0, 0.0, 0.0, s, 0.0, 0.0, 0.0, 1.0);
        let sinv = Matrix3::new(1.0 / s, 0.0, 0.0, 0.0, 1.0 / s, 0.0, 0.0, 0.0, 1.0);
        Self::new(sm * self.m * sinv)
    }

    /// Exact homography mapping four source points onto four destination points.
    pub fn from_four_points(src: &[Point2; 4], dst: &[Point2; 4]) -> Result<Homography> {
        let mut a = SMatrix::<f64, 8, 8>::zeros();
        let mut b = SVector::<f64, 8>::zeros();
        for i in 0..4 {
            let (x, y) = (src[i].x, src[i].y);
            let (u, v) = (dst[i].x, dst[i].y);
            let r = 2 * i;
            a.row_mut(r)
                .copy_from_slice(&[x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y]);
            a.row_mut(r + 1)
                .copy_from_slice(&[0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y]);
            b[r] = u;
            b[r + 1] = v;
        }
        let h = a
            .lu()
            .solve(&b)
            .ok_or_else(|| Error::DegenerateResult("four-point system is singular".into()))?;
        Self::from_params(&[h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7]])
    }

    /// Max absolute difference between canonical matrices.
    pub fn max_abs_diff(&self, other: &Homography) -> f64 {
        (self.m - other.m).amax()
    }
}

pub fn warp_point(h: &Homography, p: Point2) -> Result<Point2> {
    h.warp_point(p)
}

pub fn compose(a: &Homography, b: &Homography) -> Result<Homography> {
    a.compose(b)
}

pub fn invert(h: &Homography) -> Result<Homography> {
    h.inverse()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample_h() -> Homography {
        Homography::from_row_major(&[1.05, 0.02, 12.0, -0.03, 0.97, -7.5, 1e-4, -2e-4, 1.0]).unwrap()
    }

    #[test]
    fn identity_and_translation_warps() {
        let p = Homography::identity().warp_point(Point2::new(7.0, 3.0)).unwrap();
        assert_eq!(p, Point2::new(7.0, 3.0));
        let q = Homography::translation(3.0, 4.0)
            .warp_point(Point2::new(0.0, 0.0))
            .unwrap();
        assert_eq!(q, Point2::new(3.0, 4.0));
    }

    #[test]
    fn warp_matches_direct_formula() {
        let v = [0.9, -0.1, 30.0, 0.2, 1.1, -4.0, 3e-4, 1e-4, 1.0];
        let h = Homography::from_row_major(&v).unwrap();
        let (x, y) = (123.5, 47.25);
        let w = v[6] * x + v[7] * y + v[8];
        let ex = (v[0] * x + v[1] * y + v[2]) / w;
        let ey = (v[3] * x + v[4] * y + v[5]) / w;
        let p = h.warp_point(Point2::new(x, y)).unwrap();
        assert!((p.x - ex).abs() < 1e-12 && (p.y - ey).abs() < 1e-12);
    }

    #[test]
    fn point_at_infinity_is_reported() {
        let h = Homography::from_row_major(&[1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.01, 0.0, 1.0]).unwrap();
        assert!(matches!(
            h.warp_point(Point2::new(-100.0, 5.0)),
            Err(Error::PointAtInfinity(_))
        ));
    }

    #[test]
    fn construction_rejects_vanishing_h33_and_singular() {
        let m = Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0);
        assert!(matches!(Homography::new(m), Err(Error::DegenerateResult(_))));
        let s = Matrix3::new(1.0, 2.0, 3.0, 2.0, 4.0, 6.0, 0.0, 0.0, 1.0);
        assert!(matches!(Homography::new(s), Err(Error::DegenerateResult(_))));
    }

    #[test]
    fn canonical_scaling_and_idempotence() {
        let h = Homography::new(sample_h().matrix() * 3.5).unwrap();
        assert!(h.max_abs_diff(&sample_h()) < 1e-12);
        let again = Homography::new(*h.matrix()).unwrap();
        assert_eq!(again, h);
    }

    #[test]
    fn compose_and_invert_identities() {
        let h = sample_h();
        let id = Homography::identity();
        assert!(h.compose(&id).unwrap().max_abs_diff(&h) < 1e-12);
        assert!(h.compose(&h.inverse().unwrap()).unwrap().max_abs_diff(&id) < 1e-9);
        assert_eq!(id.inverse().unwrap(), id);
        let t = Homography::translation(3.0, 4.0).inverse().unwrap();
        assert!(t.max_abs_diff(&Homography::translation(-3.0, -4.0)) < 1e-15);
        let s = Homography::translation(1.5, -2.0)
            .compose(&Homography::translation(-0.5, 7.0))
            .unwrap();
        assert!(s.max_abs_diff(&Homography::translation(1.0, 5.0)) < 1e-15);
        assert!(h.inverse().unwrap().inverse().unwrap().max_abs_diff(&h) < 1e-9);
    }

    #[test]
    fn four_point_solve_is_exact() {
        let h = sample_h();
        let src = [
            Point2::new(0.0, 0.0),
            Point2::new(640.0, 0.0),
            Point2::new(640.0, 480.0),
            Point2::new(0.0, 480.0),
        ];
        let dst = src.map(|p| h.warp_point(p).unwrap());
        let est = Homography::from_four_points(&src, &dst).unwrap();
        for (s, d) in src.iter().zip(&dst) {
            assert!(est.warp_point(*s).unwrap().distance(d) < 1e-9);
        }
    }

    #[test]
    fn rescale_conjugates() {
        let h = sample_h();
        let r = h.rescaled(3.0).unwrap();
        let p = Point2::new(30.0, 60.0);
        let small = h.warp_point(Point2::new(10.0, 20.0)).unwrap();
        let full = r.warp_point(p).unwrap();
        assert!((full.x - 3.0 * small.x).abs() < 1e-9 && (full.y - 3.0 * small.y).abs() < 1e-9);
    }

    fn arb_h() -> impl Strategy<Value = Homography> {
        (
            0.8..1.2f64,
            -0.2..0.2f64,
            -50.0..50.0f64,
            -0.2..0.2f64,
            0.8..1.2f64,
            -50.0..50.0f64,
            -5e-4..5e-4f64,
            -5e-4..5e-4f64,
        )
            .prop_map(|(a, b, c, d, e, f, g, h)| {
                Homography::from_params(&[a, b, c, d, e, f, g, h]).unwrap()
            })
    }

    proptest! {
        #[test]
        fn warp_round_trip(h in arb_h(), x in 0.0..640.0f64, y in 0.0..480.0f64) {
            let p = Point2::new(x, y);
            let q = h.warp_point(p).unwrap();
            let back = h.inverse().unwrap().warp_point(q).unwrap();
            prop_assert!(back.distance(&p) < 1e-6);
        }

        #[test]
        fn compose_matches_sequential_warp(a in arb_h(), b in arb_h(), x in 0.0..640.0f64, y in 0.0..480.0f64) {
            let p = Point2::new(x, y);
            let direct = a.compose(&b).unwrap().warp_point(p).unwrap();
            let seq = a.warp_point(b.warp_point(p).unwrap()).unwrap();
            prop_assert!(direct.distance(&seq) <= 1e-9 * (1.0 + seq.x.abs().max(seq.y.abs())));
        }

        #[test]
        fn compose_is_associative(a in arb_h(), b in arb_h(), c in arb_h()) {
            let l = a.compose(&b).unwrap().compose(&c).unwrap();
            let r = a.compose(&b.compose(&c).unwrap()).unwrap();
            let scale = l.matrix().amax();
            prop_assert!(l.max_abs_diff(&r) <= 1e-9 * scale);
        }
    }
}
