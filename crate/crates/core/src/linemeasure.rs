//! The isometry-invariant measure on geodesics, normalized so that the lines
//! meeting the unit ball have measure `O_{d-1}`.
//!
//! Lines are parametrized by their foot `a(L)`: the distance `ρ(L)` has
//! density `∝ cosh ρ sinh^{d-2} ρ`, the foot direction is uniform on the
//! sphere, and the tangent at the foot is uniform on the unit sphere of the
//! orthogonal complement.

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_range, Error, Result};
use crate::hypgeo::{dist, dist_geodesics, dist_point_geodesic, random_direction, sphere_area, Geodesic, Point};
use crate::mc::{par_blocks, Estimate, RngStream};

/// Expected line counts above this are refused by the process sampler.
pub const DEFAULT_LINE_CAP: f64 = 5.0e6;

/// Slack applied to hit tests so that lines sampled to touch a region exactly
/// at its boundary still count.
const HIT_TOL: f64 = 1e-12;

/// Lines meeting `B(o, r)`, the window of every sampler here.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineWindow {
    pub d: usize,
    pub r: f64,
}

impl LineWindow {
    pub fn new(d: usize, r: f64) -> Result<Self> {
        check_range("d", d as f64, d >= 2, ">= 2")?;
        check_range("r", r, r > 0.0 && r.is_finite(), "> 0")?;
        Ok(Self { d, r })
    }

    pub fn measure(&self) -> f64 {
        sinh_pow_ratio(self.d, self.r) * sphere_area(self.d)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Geodesic {
        let rho = sample_rho(rng, self.d, 0.0, self.r);
        sample_line_with_rho(rng, self.d, rho)
    }
}

/// Measure-valued Monte Carlo estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasureEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_samples: usize,
    pub seed: u64,
}

impl From<Estimate> for MeasureEstimate {
    fn from(e: Estimate) -> Self {
        Self {
            mean: e.mean,
            stderr: e.stderr,
            n_samples: e.n,
            seed: e.master_seed,
        }
    }
}

impl From<MeasureEstimate> for Estimate {
    fn from(e: MeasureEstimate) -> Self {
        Estimate::new(e.mean, e.stderr, e.n_samples, e.seed)
    }
}

fn sinh_pow_ratio(d: usize, r: f64) -> f64 {
    (r.sinh() / 1f64.sinh()).powi(d as i32 - 1)
}

/// `μ(L_{B(o,r)}) = O_{d-1} sinh^{d-1}(r) / sinh^{d-1}(1)`.
pub fn measure_hitting_ball(d: usize, r: f64) -> Result<f64> {
    check_range("d", d as f64, d >= 2, ">= 2")?;
    check_range("r", r, r >= 0.0 && r.is_finite(), ">= 0")?;
    Ok(sphere_area(d) * sinh_pow_ratio(d, r))
}

/// Measure of the lines with `lo < ρ(L) ≤ hi`.
pub fn measure_foot_shell(d: usize, lo: f64, hi: f64) -> Result<f64> {
    check_range("lo", lo, lo >= 0.0, ">= 0")?;
    check_range("hi", hi, hi >= lo, ">= lo")?;
    Ok(measure_hitting_ball(d, hi)? - measure_hitting_ball(d, lo)?)
}

/// `ρ` with CDF `∝ sinh^{d-1}(ρ)` restricted to `[lo, hi]`.
fn sample_rho<R: Rng + ?Sized>(rng: &mut R, d: usize, lo: f64, hi: f64) -> f64 {
    let k = (d - 1) as f64;
    let u: f64 = rng.random();
    if lo == 0.0 {
        return (hi.sinh() * u.powf(1.0 / k)).asinh();
    }
    let a = lo.sinh().powf(k);
    let b = hi.sinh().powf(k);
    (a + u * (b - a)).powf(1.0 / k).asinh().clamp(lo, hi)
}

fn sample_line_with_rho<R: Rng + ?Sized>(rng: &mut R, d: usize, rho: f64) -> Geodesic {
    let u = random_direction(rng, d);
    loop {
        let g: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let c: f64 = g.iter().zip(&u).map(|(a, b)| a * b).sum();
        let w: Vec<f64> = g.iter().zip(&u).map(|(gi, ui)| gi - c * ui).collect();
        let n = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        // The direction of the projection is independent of its norm.
        if n > 0.1 {
            let w: Vec<f64> = w.iter().map(|x| x / n).collect();
            return Geodesic::from_foot(rho, &u, &w).expect("orthonormal foot frame");
        }
    }
}

/// A line from the normalized measure restricted to lines meeting `B(o, r)`.
pub fn sample_line_hitting_ball<R: Rng + ?Sized>(rng: &mut R, d: usize, r: f64) -> Result<Geodesic> {
    Ok(LineWindow::new(d, r)?.sample(rng))
}

/// A line from the normalized measure restricted to `lo < ρ(L) ≤ hi`.
pub fn sample_line_in_shell<R: Rng + ?Sized>(rng: &mut R, d: usize, lo: f64, hi: f64) -> Result<Geodesic> {
    check_range("d", d as f64, d >= 2, ">= 2")?;
    check_range("lo", lo, lo >= 0.0, ">= 0")?;
    check_range("hi", hi, hi > lo && hi.is_finite(), "> lo")?;
    let rho = sample_rho(rng, d, lo, hi);
    Ok(sample_line_with_rho(rng, d, rho))
}

/// Poisson line process of intensity `u` restricted to lines meeting `B(o, r)`.
pub fn sample_poisson_line_process<R: Rng + ?Sized>(rng: &mut R, u: f64, d: usize, r: f64) -> Result<Vec<Geodesic>> {
    sample_poisson_line_process_capped(rng, u, d, r, DEFAULT_LINE_CAP)
}

pub fn sample_poisson_line_process_capped<R: Rng + ?Sized>(
    rng: &mut R,
    u: f64,
    d: usize,
    r: f64,
    cap: f64,
) -> Result<Vec<Geodesic>> {
    check_range("u", u, u >= 0.0 && u.is_finite(), ">= 0")?;
    let window = LineWindow::new(d, r)?;
    let count = poisson_count(rng, u * window.measure(), cap)?;
    Ok((0..count).map(|_| window.sample(rng)).collect())
}

/// A Poisson(`mean`) draw, refusing means above `cap`.
pub(crate) fn poisson_count<R: Rng + ?Sized>(rng: &mut R, mean: f64, cap: f64) -> Result<usize> {
    if mean > cap {
        return Err(Error::CapExceeded { expected: mean, cap });
    }
    if mean <= 0.0 {
        return Ok(0);
    }
    let p = Poisson::new(mean).map_err(|e| Error::InvalidKernel(e.to_string()))?;
    Ok(p.sample(rng) as usize)
}

/// A set `A ⊂ H^d` through the lines meeting it.
#[derive(Debug, Clone, PartialEq)]
pub enum HitRegion {
    /// `B(center, radius)`.
    Ball { center: Point, radius: f64 },
    /// The cylinder of the given radius around a line.
    Cylinder { axis: Geodesic, radius: f64 },
    /// Not a set but a line property: `lo < ρ(L) ≤ hi`.
    FootShell { lo: f64, hi: f64 },
}

impl HitRegion {
    pub fn ball(center: Point, radius: f64) -> Self {
        Self::Ball { center, radius }
    }

    pub fn hit_by(&self, line: &Geodesic) -> bool {
        match self {
            Self::Ball { center, radius } => {
                dist_point_geodesic(center, line).is_ok_and(|r| r.d <= radius + HIT_TOL)
            }
            Self::Cylinder { axis, radius } => {
                dist_geodesics(axis, line).is_ok_and(|r| r.d <= radius + HIT_TOL)
            }
            Self::FootShell { lo, hi } => line.rho() > *lo && line.rho() <= *hi,
        }
    }

    /// True when every line meeting the region also meets `B(o, r)`.
    pub fn enclosed_by(&self, r: f64) -> bool {
        match self {
            Self::Ball { center, radius } => {
                let o = Point::origin(center.dim());
                dist(&o, center).is_ok_and(|c| c + radius <= r + HIT_TOL)
            }
            Self::Cylinder { .. } => false,
            Self::FootShell { hi, .. } => *hi <= r + HIT_TOL,
        }
    }
}

/// Estimates `μ(L_A ∩ L_B)` by sampling `n` lines meeting `B(o, enclosing_r)`.
pub fn estimate_measure_intersection(
    seed: u64,
    d: usize,
    a: &HitRegion,
    b: &HitRegion,
    enclosing_r: f64,
    n: usize,
) -> Result<MeasureEstimate> {
    check_range("n", n as f64, n > 0, "> 0")?;
    if !a.enclosed_by(enclosing_r) && !b.enclosed_by(enclosing_r) {
        return Err(Error::NotEnclosed { enclosing_r });
    }
    let window = LineWindow::new(d, enclosing_r)?;
    let hits: u64 = par_blocks(n, seed, |rng: &mut RngStream, count| {
        (0..count)
            .filter(|_| {
                let l = window.sample(rng);
                a.hit_by(&l) && b.hit_by(&l)
            })
            .count() as u64
    })
    .into_iter()
    .sum();
    Ok(Estimate::from_proportion(hits, n, window.measure(), seed).into())
}

/// Estimates `μ(L_A)` for a single region.
pub fn estimate_measure(seed: u64, d: usize, a: &HitRegion, enclosing_r: f64, n: usize) -> Result<MeasureEstimate> {
    estimate_measure_intersection(seed, d, a, a, enclosing_r, n)
}
