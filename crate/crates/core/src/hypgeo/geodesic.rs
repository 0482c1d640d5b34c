use serde::{Deserialize, Serialize};

use super::point::{dist, dist_unchecked, mdot, norm, Point};
use crate::error::{Error, Result};

const UNIT_TOL: f64 = 1e-9;

/// A complete unit-speed geodesic `γ(t) = cosh(t) p + sinh(t) v`.
///
/// The stored base point `p` is always the foot `a(L)`, the point of the line
/// closest to the origin, so `t` measures signed arclength from the foot.
#[derive(Debug, Clone, PartialEq)]
pub struct Geodesic {
    foot: Point,
    direction: Vec<f64>,
    rho: f64,
    foot_direction: Vec<f64>,
}

/// Result of [`dist_point_geodesic`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointLineDistance {
    pub t_star: f64,
    pub d: f64,
}

/// Result of [`dist_geodesics`]. For asymptotically parallel lines the
/// infimum is not attained and the parameters are infinite.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinePairDistance {
    pub t1: f64,
    pub t2: f64,
    pub d: f64,
}

fn unit(v: &[f64]) -> Option<Vec<f64>> {
    let n = norm(v);
    (n > 0.0 && n.is_finite()).then(|| v.iter().map(|x| x / n).collect())
}

/// Some unit vector orthogonal to `w` (Euclidean, in R^d).
fn orthogonal_unit(w: &[f64]) -> Vec<f64> {
    let k = w
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let mut e = vec![0.0; w.len()];
    e[k] = 1.0;
    let c: f64 = w[k];
    for (ei, wi) in e.iter_mut().zip(w) {
        *ei -= c * wi;
    }
    unit(&e).expect("orthogonal complement is nonempty for d >= 2")
}

impl Geodesic {
    /// The line with foot at distance `rho` in unit direction `foot_direction`
    /// and unit tangent `tangent` orthogonal to it.
    pub fn from_foot(rho: f64, foot_direction: &[f64], tangent: &[f64]) -> Result<Self> {
        if foot_direction.len() != tangent.len() {
            return Err(Error::DimensionMismatch {
                left: foot_direction.len(),
                right: tangent.len(),
            });
        }
        if !(rho >= 0.0 && rho.is_finite()) {
            return Err(Error::InvalidGeodesic(format!("rho = {rho}")));
        }
        if (norm(foot_direction) - 1.0).abs() > UNIT_TOL || (norm(tangent) - 1.0).abs() > UNIT_TOL {
            return Err(Error::InvalidGeodesic("directions must be unit vectors".into()));
        }
        let dot: f64 = foot_direction.iter().zip(tangent).map(|(a, b)| a * b).sum();
        if rho > 0.0 && dot.abs() > UNIT_TOL {
            return Err(Error::InvalidGeodesic(
                "tangent must be orthogonal to the foot direction".into(),
            ));
        }
        let foot = Point::from_polar(rho, foot_direction);
        let mut direction = Vec::with_capacity(tangent.len() + 1);
        direction.push(0.0);
        direction.extend_from_slice(tangent);
        Ok(Self::canonical(foot, direction))
    }

    /// The line through a base point with the given tangent vector, given in
    /// ambient coordinates. The tangent is projected onto `T_p H^d`.
    pub fn new(base: &Point, tangent: &[f64]) -> Result<Self> {
        if tangent.len() != base.coords().len() {
            return Err(Error::DimensionMismatch {
                left: base.dim(),
                right: tangent.len().saturating_sub(1),
            });
        }
        let p = base.coords();
        let c = mdot(tangent, p);
        let v: Vec<f64> = tangent.iter().zip(p).map(|(t, pi)| t + c * pi).collect();
        let n2 = mdot(&v, &v);
        if !(n2 > 0.0 && n2.is_finite()) {
            return Err(Error::InvalidGeodesic("degenerate tangent vector".into()));
        }
        let n = n2.sqrt();
        let v: Vec<f64> = v.iter().map(|x| x / n).collect();
        // Slide to the foot: tanh(t*) = -v0 / p0.
        let ts = (-v[0] / p[0]).atanh();
        let (sh, ch) = (ts.sinh(), ts.cosh());
        let foot_spatial: Vec<f64> = (1..p.len()).map(|i| ch * p[i] + sh * v[i]).collect();
        let dir_spatial: Vec<f64> = (1..p.len()).map(|i| sh * p[i] + ch * v[i]).collect();
        let foot = Point::from_spatial(&foot_spatial);
        let mut direction = Vec::with_capacity(p.len());
        direction.push(0.0);
        direction.extend(dir_spatial);
        Ok(Self::canonical(foot, direction))
    }

    /// The line through two distinct points.
    pub fn through(x: &Point, y: &Point) -> Result<Self> {
        let d = dist(x, y)?;
        if d == 0.0 {
            return Err(Error::InvalidGeodesic("points coincide".into()));
        }
        // y = cosh(d) x + sinh(d) v
        let (sh, ch) = (d.sinh(), d.cosh());
        let v: Vec<f64> = x
            .coords()
            .iter()
            .zip(y.coords())
            .map(|(a, b)| (b - ch * a) / sh)
            .collect();
        Self::new(x, &v)
    }

    /// The diameter through the origin along the coordinate axis `axis`
    /// (0-based spatial index).
    pub fn axis(d: usize, axis: usize) -> Self {
        let mut tangent = vec![0.0; d];
        tangent[axis] = 1.0;
        let mut fd = vec![0.0; d];
        fd[(axis + 1) % d] = 1.0;
        Self::from_foot(0.0, &fd, &tangent).expect("axis line is valid")
    }

    /// Re-orthonormalizes a foot/tangent pair whose tangent has zero time part.
    fn canonical(foot: Point, mut direction: Vec<f64>) -> Self {
        direction[0] = 0.0;
        let s = foot.spatial();
        let sn = norm(s);
        let rho = sn.asinh();
        let w = &mut direction[1..];
        let foot_direction = if sn > 0.0 {
            let u: Vec<f64> = s.iter().map(|x| x / sn).collect();
            let c: f64 = w.iter().zip(&u).map(|(a, b)| a * b).sum();
            for (wi, ui) in w.iter_mut().zip(&u) {
                *wi -= c * ui;
            }
            u
        } else {
            Vec::new()
        };
        let wn = norm(w);
        for wi in w.iter_mut() {
            *wi /= wn;
        }
        let foot_direction = if foot_direction.is_empty() {
            orthogonal_unit(w)
        } else {
            foot_direction
        };
        Self {
            foot,
            direction,
            rho,
            foot_direction,
        }
    }

    pub fn dim(&self) -> usize {
        self.foot.dim()
    }

    /// The point `a(L)` of the line closest to the origin.
    pub fn foot(&self) -> &Point {
        &self.foot
    }

    /// `ρ(L) = d(o, L)`.
    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Unit direction from the origin towards the foot.
    pub fn foot_direction(&self) -> &[f64] {
        &self.foot_direction
    }

    /// Unit tangent at the foot (spatial part; the time part is zero).
    pub fn tangent(&self) -> &[f64] {
        &self.direction[1..]
    }

    /// Tangent vector at the foot in ambient coordinates.
    pub fn direction(&self) -> &[f64] {
        &self.direction
    }

    /// `γ(t)`.
    pub fn at(&self, t: f64) -> Point {
        let (sh, ch) = (t.sinh(), t.cosh());
        let p = self.foot.spatial();
        let v = &self.direction[1..];
        let spatial: Vec<f64> = p.iter().zip(v).map(|(a, b)| ch * a + sh * b).collect();
        Point::from_spatial(&spatial)
    }

    /// `γ'(t)` in ambient coordinates.
    pub fn velocity(&self, t: f64) -> Vec<f64> {
        let (sh, ch) = (t.sinh(), t.cosh());
        self.foot
            .coords()
            .iter()
            .zip(&self.direction)
            .map(|(a, b)| sh * a + ch * b)
            .collect()
    }

    /// Ideal endpoints `(γ(-∞), γ(+∞))` as unit vectors on the boundary sphere.
    pub fn endpoints(&self) -> (Vec<f64>, Vec<f64>) {
        let (th, sech) = (self.rho.tanh(), 1.0 / self.rho.cosh());
        let f = self.foot_direction();
        let w = self.tangent();
        let a = f.iter().zip(w).map(|(fi, wi)| th * fi - sech * wi).collect();
        let b = f.iter().zip(w).map(|(fi, wi)| th * fi + sech * wi).collect();
        (a, b)
    }

    /// The line from ideal point `a` to ideal point `b`.
    pub fn from_endpoints(a: &[f64], b: &[f64]) -> Result<Self> {
        if a.len() != b.len() {
            return Err(Error::DimensionMismatch {
                left: a.len(),
                right: b.len(),
            });
        }
        let a = unit(a).ok_or_else(|| Error::InvalidGeodesic("zero endpoint".into()))?;
        let b = unit(b).ok_or_else(|| Error::InvalidGeodesic("zero endpoint".into()))?;
        let diff: Vec<f64> = b.iter().zip(&a).map(|(x, y)| x - y).collect();
        let half_chord = norm(&diff) / 2.0;
        if half_chord == 0.0 {
            return Err(Error::InvalidGeodesic("endpoints coincide".into()));
        }
        let w: Vec<f64> = diff.iter().map(|x| x / (2.0 * half_chord)).collect();
        let m: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
        let h = (1.0 - half_chord * half_chord).max(0.0).sqrt();
        // atanh(h) without cancellation in 1 - h.
        let rho = ((1.0 + h) / half_chord).ln();
        let f = match unit(&m) {
            Some(f) if rho > 0.0 => {
                let c: f64 = w.iter().zip(&f).map(|(x, y)| x * y).sum();
                let w = unit(&w.iter().zip(&f).map(|(x, y)| x - c * y).collect::<Vec<_>>())
                    .ok_or_else(|| Error::InvalidGeodesic("degenerate endpoints".into()))?;
                return Self::from_foot(rho, &f, &w);
            }
            _ => orthogonal_unit(&w),
        };
        Self::from_foot(0.0, &f, &w)
    }

    fn check_dim(&self, d: usize) -> Result<()> {
        if self.dim() != d {
            return Err(Error::DimensionMismatch {
                left: self.dim(),
                right: d,
            });
        }
        Ok(())
    }
}

/// Distance from `x` to the line `l` and the parameter of the closest point.
///
/// Minimizing `-<x, γ(t)>` gives `tanh t* = β/(-α)` with `α = <x,p>`,
/// `β = <x,v>`, and `cosh d = sqrt(α² - β²)`. The distance is re-evaluated
/// at `γ(t*)` so that small distances keep full precision.
pub fn dist_point_geodesic(x: &Point, l: &Geodesic) -> Result<PointLineDistance> {
    l.check_dim(x.dim())?;
    let alpha = mdot(x.coords(), l.foot.coords());
    let beta = mdot(x.coords(), &l.direction);
    let t_star = 0.5 * ((-alpha + beta) / (-alpha - beta)).ln();
    let y = l.at(t_star);
    let q = -mdot(x.coords(), y.coords());
    Ok(PointLineDistance {
        t_star,
        d: dist_unchecked(x, &y, q.max(1.0)),
    })
}

/// Distance between two complete geodesics.
///
/// With `A=<p1,p2>`, `B=<v1,p2>`, `C=<p1,v2>`, `D=<v1,v2>` the squared cosh of
/// the distance from `γ1(t)` to `L2` is `P cosh 2t + Q sinh 2t + S`, whose
/// minimum is `S + sqrt(P² - Q²)` at `tanh 2t = -Q/P` when `P > |Q|`.
/// Otherwise the lines are asymptotic (or equal) and the infimum is
/// `acosh(sqrt(S))`.
pub fn dist_geodesics(l1: &Geodesic, l2: &Geodesic) -> Result<LinePairDistance> {
    l1.check_dim(l2.dim())?;
    let (p1, v1) = (l1.foot.coords(), l1.direction.as_slice());
    let (p2, v2) = (l2.foot.coords(), l2.direction.as_slice());
    let a = mdot(p1, p2);
    let b = mdot(v1, p2);
    let c = mdot(p1, v2);
    let dd = mdot(v1, v2);
    let p = 0.5 * (a * a + b * b - c * c - dd * dd);
    let q = a * b - c * dd;
    let s = 0.5 * (a * a - b * b - c * c + dd * dd);
    let scale = a * a + b * b + c * c + dd * dd;
    if p <= 1e-13 * scale {
        // P = Q = 0: every point of L1 is equidistant; the lines coincide.
        let r = dist_point_geodesic(l1.foot(), l2)?;
        return Ok(LinePairDistance {
            t1: 0.0,
            t2: r.t_star,
            d: r.d,
        });
    }
    let ratio = -q / p;
    if ratio.abs() >= 1.0 - 1e-15 {
        let t1 = ratio.signum() * f64::INFINITY;
        let d = s.max(1.0).sqrt().acosh();
        return Ok(LinePairDistance { t1, t2: f64::NAN, d });
    }
    let t1 = 0.5 * ratio.atanh();
    let x = l1.at(t1);
    let r = dist_point_geodesic(&x, l2)?;
    Ok(LinePairDistance {
        t1,
        t2: r.t_star,
        d: r.d,
    })
}

/// True when the lines come within distance `r` of each other.
///
/// Compares `cosh² d` from the closed form in [`dist_geodesics`] against
/// `cosh² r`, falling back to the full computation near the threshold.
pub fn geodesics_within(l1: &Geodesic, l2: &Geodesic, r: f64) -> bool {
    let (p1, v1) = (l1.foot.coords(), l1.direction.as_slice());
    let (p2, v2) = (l2.foot.coords(), l2.direction.as_slice());
    let a = mdot(p1, p2);
    let b = mdot(v1, p2);
    let c = mdot(p1, v2);
    let dd = mdot(v1, v2);
    let p = 0.5 * (a * a + b * b - c * c - dd * dd);
    let q = a * b - c * dd;
    let s = 0.5 * (a * a - b * b - c * c + dd * dd);
    let h = if p > q.abs() { s + (p * p - q * q).sqrt() } else { s };
    let target = r.cosh().powi(2);
    let margin = 1e-6 * target.max(h.abs());
    if h < target - margin {
        true
    } else if h > target + margin {
        false
    } else {
        dist_geodesics(l1, l2).is_ok_and(|x| x.d <= r)
    }
}

/// Grid-seeded damped Newton minimization of `-<γ1(t), γ2(s)>` over
/// `(t, s) ∈ [-half_width, half_width]²`. Independent of the closed form in
/// [`dist_geodesics`]; used to cross-check it.
pub fn dist_geodesics_numeric(l1: &Geodesic, l2: &Geodesic, half_width: f64) -> Result<f64> {
    const GRID: usize = 16;
    const MAX_ITER: usize = 100;
    const TOL: f64 = 1e-10;
    l1.check_dim(l2.dim())?;
    let f = |t: f64, s: f64| -mdot(l1.at(t).coords(), l2.at(s).coords());
    let mut best = (0.0, 0.0, f64::INFINITY);
    for i in 0..GRID {
        for j in 0..GRID {
            let t = -half_width + 2.0 * half_width * i as f64 / (GRID - 1) as f64;
            let s = -half_width + 2.0 * half_width * j as f64 / (GRID - 1) as f64;
            let v = f(t, s);
            if v < best.2 {
                best = (t, s, v);
            }
        }
    }
    let (mut t, mut s, mut fv) = best;
    for _ in 0..MAX_ITER {
        if fv <= 1.0 + TOL {
            return Ok(0.0);
        }
        let x = l1.at(t);
        let y = l2.at(s);
        let dx = l1.velocity(t);
        let dy = l2.velocity(s);
        let gt = -mdot(&dx, y.coords());
        let gs = -mdot(x.coords(), &dy);
        let g = -mdot(&dx, &dy);
        if gt.hypot(gs) <= TOL * fv {
            return dist(&x, &y);
        }
        let det = fv * fv - g * g;
        let (mut st, mut ss) = if det > 1e-300 {
            ((-fv * gt + g * gs) / det, (g * gt - fv * gs) / det)
        } else {
            (-gt / fv, -gs / fv)
        };
        let mut accepted = false;
        for _ in 0..60 {
            let nv = f(t + st, s + ss);
            if nv < fv {
                t += st;
                s += ss;
                fv = nv;
                accepted = true;
                break;
            }
            st *= 0.5;
            ss *= 0.5;
        }
        if !accepted {
            return dist(&l1.at(t), &l2.at(s));
        }
    }
    Err(Error::NonConvergence {
        iterations: MAX_ITER,
        best: fv.max(1.0).acosh(),
    })
}

/// JSON/CSV record of a line: `{rho, foot_direction, tangent}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineRecord {
    pub rho: f64,
    pub foot_direction: Vec<f64>,
    pub tangent: Vec<f64>,
}

impl From<&Geodesic> for LineRecord {
    fn from(l: &Geodesic) -> Self {
        Self {
            rho: l.rho,
            foot_direction: l.foot_direction.clone(),
            tangent: l.tangent().to_vec(),
        }
    }
}

impl TryFrom<LineRecord> for Geodesic {
    type Error = Error;

    fn try_from(r: LineRecord) -> Result<Self> {
        Geodesic::from_foot(r.rho, &r.foot_direction, &r.tangent)
    }
}

impl Serialize for Geodesic {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        LineRecord::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Geodesic {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let r = LineRecord::deserialize(d)?;
        Geodesic::try_from(r).map_err(serde::de::Error::custom)
    }
}
