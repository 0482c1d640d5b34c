use rand::Rng;
use rand_distr::StandardNormal;

use super::geodesic::Geodesic;
use super::point::{mdot, Point};

/// A hyperbolic isometry as a `(d+1)×(d+1)` Minkowski-orthogonal matrix
/// preserving the upper sheet.
#[derive(Debug, Clone, PartialEq)]
pub struct Isometry {
    n: usize,
    m: Vec<f64>,
}

impl Isometry {
    pub fn identity(d: usize) -> Self {
        let n = d + 1;
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            m[i * n + i] = 1.0;
        }
        Self { n, m }
    }

    pub fn dim(&self) -> usize {
        self.n - 1
    }

    fn get(&self, i: usize, j: usize) -> f64 {
        self.m[i * self.n + j]
    }

    /// Spatial rotation by a `d×d` orthogonal matrix given row-major.
    pub fn rotation(d: usize, q: &[f64]) -> Self {
        assert_eq!(q.len(), d * d);
        let mut iso = Self::identity(d);
        for i in 0..d {
            for j in 0..d {
                iso.m[(i + 1) * iso.n + (j + 1)] = q[i * d + j];
            }
        }
        iso
    }

    /// Pure boost of rapidity `t` along the unit spatial direction `u`. Maps
    /// the origin to the point at distance `t` in direction `u`.
    pub fn boost(u: &[f64], t: f64) -> Self {
        let d = u.len();
        let n = d + 1;
        let (sh, ch) = (t.sinh(), t.cosh());
        let mut iso = Self::identity(d);
        iso.m[0] = ch;
        for i in 0..d {
            iso.m[i + 1] = sh * u[i];
            iso.m[(i + 1) * n] = sh * u[i];
            for j in 0..d {
                iso.m[(i + 1) * n + (j + 1)] += (ch - 1.0) * u[i] * u[j];
            }
        }
        iso
    }

    /// The boost carrying the origin to `x`.
    pub fn translation_to(x: &Point) -> Self {
        match x.direction() {
            Some(u) => Self::boost(&u, x.rho()),
            None => Self::identity(x.dim()),
        }
    }

    /// A random rotation (Gram–Schmidt of a Gaussian matrix) composed with a
    /// boost along `e1` of rapidity uniform in `[0, 3]`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Self {
        let mut q = vec![0.0; d * d];
        for i in 0..d {
            loop {
                let mut row: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                for k in 0..i {
                    let c: f64 = (0..d).map(|j| row[j] * q[k * d + j]).sum();
                    for j in 0..d {
                        row[j] -= c * q[k * d + j];
                    }
                }
                let n = row.iter().map(|x| x * x).sum::<f64>().sqrt();
                if n > 1e-8 {
                    for j in 0..d {
                        q[i * d + j] = row[j] / n;
                    }
                    break;
                }
            }
        }
        let mut e1 = vec![0.0; d];
        e1[0] = 1.0;
        let t = rng.random_range(0.0..3.0);
        Self::rotation(d, &q).compose(&Self::boost(&e1, t))
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Self) -> Self {
        assert_eq!(self.n, other.n);
        let n = self.n;
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            for k in 0..n {
                let a = self.get(i, k);
                if a != 0.0 {
                    for j in 0..n {
                        m[i * n + j] += a * other.get(k, j);
                    }
                }
            }
        }
        Self { n, m }
    }

    /// `J Mᵀ J` with `J = diag(-1, 1, ..., 1)`.
    pub fn inverse(&self) -> Self {
        let n = self.n;
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let sign = if (i == 0) != (j == 0) { -1.0 } else { 1.0 };
                m[i * n + j] = sign * self.get(j, i);
            }
        }
        Self { n, m }
    }

    pub fn apply_vector(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n);
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j) * v[j]).sum())
            .collect()
    }

    pub fn apply(&self, x: &Point) -> Point {
        let y = self.apply_vector(x.coords());
        Point::from_spatial(&y[1..])
    }

    pub fn apply_geodesic(&self, l: &Geodesic) -> Geodesic {
        let p = self.apply(l.foot());
        let v = self.apply_vector(l.direction());
        Geodesic::new(&p, &v).expect("isometries map geodesics to geodesics")
    }

    /// Largest entry of `Mᵀ J M - J`.
    pub fn orthogonality_defect(&self) -> f64 {
        let n = self.n;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            let ci: Vec<f64> = (0..n).map(|k| self.get(k, i)).collect();
            for j in 0..n {
                let cj: Vec<f64> = (0..n).map(|k| self.get(k, j)).collect();
                let target = match (i == j, i == 0) {
                    (true, true) => -1.0,
                    (true, false) => 1.0,
                    _ => 0.0,
                };
                worst = worst.max((mdot(&ci, &cj) - target).abs());
            }
        }
        worst
    }
}

/// Image of the ideal point `xi` under [`Isometry::boost`]`(u, s)`, computed
/// without the cancellation of the matrix form so that large rapidities stay
/// accurate.
pub fn boost_ideal(u: &[f64], s: f64, xi: &[f64]) -> Vec<f64> {
    if s < 0.0 {
        let flipped: Vec<f64> = u.iter().map(|x| -x).collect();
        return boost_ideal(&flipped, -s, xi);
    }
    let sum: Vec<f64> = xi.iter().zip(u).map(|(x, y)| x + y).collect();
    // 1 + u·ξ for unit vectors.
    let delta = 0.5 * sum.iter().map(|x| x * x).sum::<f64>();
    let em = (-s).exp();
    let k = (s.cosh() - 1.0) * delta - em;
    let den = em + s.sinh() * delta;
    let out: Vec<f64> = sum.iter().zip(u).map(|(x, y)| (x + k * y) / den).collect();
    let n = out.iter().map(|x| x * x).sum::<f64>().sqrt();
    out.iter().map(|x| x / n).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypgeo::point::dist;
    use crate::mc::RngStream;

    #[test]
    fn random_isometries_are_lorentz() {
        let mut rng = RngStream::new(3, 0);
        for d in 2..=4 {
            let g = Isometry::random(&mut rng, d);
            assert!(g.orthogonality_defect() < 1e-10);
            let id = g.compose(&g.inverse());
            assert!(id.orthogonality_defect() < 1e-8);
            for i in 0..=d {
                for j in 0..=d {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((id.get(i, j) - want).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn translation_hits_target() {
        let x = Point::from_ball(&[0.3, -0.6, 0.1]).unwrap();
        let g = Isometry::translation_to(&x);
        let y = g.apply(&Point::origin(3));
        assert!(dist(&x, &y).unwrap() < 1e-12);
    }

    #[test]
    fn ideal_boost_matches_matrix() {
        let mut rng = crate::mc::RngStream::new(3, 0);
        for _ in 0..200 {
            let l = crate::linemeasure::sample_line_hitting_ball(&mut rng, 3, 2.0).unwrap();
            let u = crate::hypgeo::random_direction(&mut rng, 3);
            let s = if rng.random::<bool>() { 2.5 } else { -1.5 };
            let moved = Isometry::boost(&u, s).apply_geodesic(&l);
            let (a, b) = l.endpoints();
            let via = Geodesic::from_endpoints(&boost_ideal(&u, s, &a), &boost_ideal(&u, s, &b)).unwrap();
            assert!((moved.rho() - via.rho()).abs() < 1e-9);
            let p = moved.at(0.7);
            assert!(crate::hypgeo::dist_point_geodesic(&p, &via).unwrap().d < 1e-7);
        }
    }
}
