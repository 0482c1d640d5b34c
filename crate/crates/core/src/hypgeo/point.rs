use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used when validating hyperboloid coordinates.
pub const HYPERBOLOID_TOL: f64 = 1e-9;

/// Minkowski inner product `-a0 b0 + a1 b1 + ... + ad bd`.
#[inline]
pub fn mdot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut s = -a[0] * b[0];
    for i in 1..a.len() {
        s += a[i] * b[i];
    }
    s
}

/// `acosh(1 + delta)` without cancellation for small `delta`.
#[inline]
pub fn acosh1p(delta: f64) -> f64 {
    let delta = delta.max(0.0);
    (delta + (delta * (2.0 + delta)).sqrt()).ln_1p()
}

#[inline]
pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// A point of H^d on the upper sheet of the hyperboloid `<x,x>_M = -1`.
///
/// The time coordinate is always recomputed from the spatial part, so the
/// Minkowski norm is `-1` up to rounding relative to `x0^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    coords: Vec<f64>,
}

impl Point {
    pub fn origin(d: usize) -> Self {
        let mut coords = vec![0.0; d + 1];
        coords[0] = 1.0;
        Self { coords }
    }

    /// Builds a point from its spatial coordinates `(x1, ..., xd)`.
    pub(crate) fn from_spatial(spatial: &[f64]) -> Self {
        let mut coords = Vec::with_capacity(spatial.len() + 1);
        coords.push((1.0 + spatial.iter().map(|x| x * x).sum::<f64>()).sqrt());
        coords.extend_from_slice(spatial);
        Self { coords }
    }

    /// Validates full hyperboloid coordinates `(x0, x1, ..., xd)`.
    pub fn from_hyperboloid(coords: Vec<f64>) -> Result<Self> {
        if coords.len() < 3 {
            return Err(Error::InvalidPoint(format!(
                "need at least 3 coordinates (d >= 2), got {}",
                coords.len()
            )));
        }
        if coords.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidPoint("non-finite coordinate".into()));
        }
        if coords[0] <= 0.0 {
            return Err(Error::InvalidPoint("x0 must be positive".into()));
        }
        let q = mdot(&coords, &coords);
        if (q + 1.0).abs() > HYPERBOLOID_TOL * coords[0] * coords[0] {
            return Err(Error::InvalidPoint(format!("<x,x>_M = {q}, expected -1")));
        }
        Ok(Self::from_spatial(&coords[1..]))
    }

    /// Point of the Poincaré ball `|b| < 1`.
    pub fn from_ball(b: &[f64]) -> Result<Self> {
        if b.len() < 2 {
            return Err(Error::InvalidPoint(format!(
                "ball coordinates need d >= 2, got {}",
                b.len()
            )));
        }
        let r2: f64 = b.iter().map(|x| x * x).sum();
        if r2.is_nan() || r2 >= 1.0 {
            return Err(Error::InvalidPoint(format!(
                "ball point has |b|^2 = {r2} >= 1"
            )));
        }
        let f = 2.0 / (1.0 - r2);
        let spatial: Vec<f64> = b.iter().map(|x| f * x).collect();
        Ok(Self::from_spatial(&spatial))
    }

    /// The point at distance `rho` from the origin in unit direction `dir`.
    pub fn from_polar(rho: f64, dir: &[f64]) -> Self {
        let s = rho.sinh();
        let spatial: Vec<f64> = dir.iter().map(|x| s * x).collect();
        Self::from_spatial(&spatial)
    }

    pub fn dim(&self) -> usize {
        self.coords.len() - 1
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn spatial(&self) -> &[f64] {
        &self.coords[1..]
    }

    /// Poincaré ball coordinates `x_i / (1 + x0)`.
    pub fn to_ball(&self) -> Vec<f64> {
        let f = 1.0 / (1.0 + self.coords[0]);
        self.coords[1..].iter().map(|x| f * x).collect()
    }

    /// Distance from the origin.
    pub fn rho(&self) -> f64 {
        norm(self.spatial()).asinh()
    }

    /// Unit direction from the origin, `None` at the origin itself.
    pub fn direction(&self) -> Option<Vec<f64>> {
        let n = norm(self.spatial());
        (n > 0.0).then(|| self.spatial().iter().map(|x| x / n).collect())
    }

    /// `<x,x>_M + 1`, the deviation from the hyperboloid.
    pub fn norm_defect(&self) -> f64 {
        mdot(&self.coords, &self.coords) + 1.0
    }
}

/// Hyperbolic distance `acosh(-<x,y>_M)`.
pub fn dist(x: &Point, y: &Point) -> Result<f64> {
    if x.dim() != y.dim() {
        return Err(Error::DimensionMismatch {
            left: x.dim(),
            right: y.dim(),
        });
    }
    let q = -mdot(&x.coords, &y.coords);
    if q < 1.0 - HYPERBOLOID_TOL * q.abs().max(1.0) {
        return Err(Error::InvalidPoint(format!(
            "-<x,y>_M = {q} < 1; points not on the hyperboloid"
        )));
    }
    Ok(dist_unchecked(x, y, q))
}

#[inline]
pub(crate) fn dist_unchecked(x: &Point, y: &Point, q: f64) -> f64 {
    if q > 2.0 {
        return q.acosh();
    }
    // <x-y, x-y>_M = 2(q - 1), free of cancellation for nearby points.
    let a = &x.coords;
    let b = &y.coords;
    let mut s = -(a[0] - b[0]) * (a[0] - b[0]);
    for i in 1..a.len() {
        s += (a[i] - b[i]) * (a[i] - b[i]);
    }
    acosh1p(0.5 * s)
}

/// Hyperbolic distance evaluated directly in Poincaré ball coordinates.
pub fn dist_ball(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let na: f64 = a.iter().map(|x| x * x).sum();
    let nb: f64 = b.iter().map(|x| x * x).sum();
    if na >= 1.0 || nb >= 1.0 {
        return Err(Error::InvalidPoint("ball point outside unit ball".into()));
    }
    let de: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(acosh1p(2.0 * de / ((1.0 - na) * (1.0 - nb))))
}

#[derive(Serialize, Deserialize)]
struct BallRepr {
    model: String,
    coords: Vec<f64>,
}

impl Serialize for Point {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        BallRepr {
            model: "ball".into(),
            coords: self.to_ball(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Point {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = BallRepr::deserialize(d)?;
        if repr.model != "ball" {
            return Err(serde::de::Error::custom(format!(
                "unsupported point model `{}`",
                repr.model
            )));
        }
        Point::from_ball(&repr.coords).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_distance_is_zero() {
        let x = Point::from_ball(&[0.3, -0.2]).unwrap();
        assert_eq!(dist(&x, &x).unwrap(), 0.0);
    }

    #[test]
    fn ln3_example() {
        let o = Point::from_ball(&[0.0, 0.0, 0.0]).unwrap();
        let x = Point::from_ball(&[0.5, 0.0, 0.0]).unwrap();
        assert!((dist(&o, &x).unwrap() - 3f64.ln()).abs() < 1e-12);
        let y = Point::from_ball(&[-0.5, 0.0, 0.0]).unwrap();
        assert!((dist(&x, &y).unwrap() - 2.0 * 3f64.ln()).abs() < 1e-12);
        assert!((dist_ball(&[0.5, 0.0, 0.0], &[-0.5, 0.0, 0.0]).unwrap() - 2.0 * 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn dimension_mismatch() {
        let a = Point::origin(2);
        let b = Point::origin(3);
        assert!(matches!(dist(&a, &b), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn rejects_off_sheet_coordinates() {
        assert!(Point::from_hyperboloid(vec![2.0, 0.0, 0.0]).is_err());
        assert!(Point::from_hyperboloid(vec![-1.0, 0.0, 0.0]).is_err());
        assert!(Point::from_hyperboloid(vec![1.0, 0.0]).is_err());
        assert!(Point::from_ball(&[0.8, 0.7]).is_err());
        let ok = Point::from_hyperboloid(vec![2f64.sqrt(), 1.0, 0.0]).unwrap();
        assert!((ok.rho() - 1f64.asinh()).abs() < 1e-15);
    }

    #[test]
    fn ball_round_trip() {
        let b = [0.1, -0.7, 0.3];
        let p = Point::from_ball(&b).unwrap();
        let back = p.to_ball();
        for (x, y) in b.iter().zip(&back) {
            assert!((x - y).abs() < 1e-14);
        }
        assert!(p.norm_defect().abs() <= 1e-12 * p.coords()[0].powi(2));
    }

    #[test]
    fn json_is_tagged_ball() {
        let p = Point::from_ball(&[0.25, 0.5]).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        assert!(s.contains("\"model\":\"ball\""));
        let q: Point = serde_json::from_str(&s).unwrap();
        assert!(dist(&p, &q).unwrap() < 1e-12);
        assert!(serde_json::from_str::<Point>(r#"{"model":"klein","coords":[0.1,0.1]}"#).is_err());
    }

    #[test]
    fn nearby_points_keep_precision() {
        let x = Point::from_polar(3.0, &[1.0, 0.0]);
        let y = Point::from_polar(3.0 + 1e-9, &[1.0, 0.0]);
        let d = dist(&x, &y).unwrap();
        assert!((d - 1e-9).abs() < 1e-13, "{d}");
    }
}
