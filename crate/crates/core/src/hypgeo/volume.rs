use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::beta::beta_reg;

use super::point::Point;
use crate::error::{check_range, Result};
use crate::quadrature::integrate;

/// Surface area `O_{d-1}` of the unit sphere `S^{d-1} ⊂ R^d`.
pub fn sphere_area(d: usize) -> f64 {
    assert!(d >= 1, "sphere_area needs d >= 1");
    let (mut k, mut area) = if d % 2 == 1 { (1, 2.0) } else { (2, 2.0 * PI) };
    while k < d {
        area *= 2.0 * PI / k as f64;
        k += 2;
    }
    area
}

/// Volume of a hyperbolic ball of radius `r` in `H^d`.
pub fn ball_volume(d: usize, r: f64) -> Result<f64> {
    check_range("d", d as f64, d >= 2, ">= 2")?;
    check_range("r", r, r >= 0.0 && r.is_finite(), ">= 0")?;
    Ok(match d {
        2 => 2.0 * PI * (2.0 * (0.5 * r).sinh().powi(2)),
        3 => 4.0 * PI * (0.25 * (2.0 * r).sinh() - 0.5 * r),
        _ => {
            let k = (d - 1) as i32;
            sphere_area(d) * integrate(|t| t.sinh().powi(k), 0.0, r, 1e-10, 1e-13)
        }
    })
}

/// Volume of the annulus `B(o, r_out) \ B(o, r_in)`.
pub fn shell_volume(d: usize, r_in: f64, r_out: f64) -> Result<f64> {
    Ok(ball_volume(d, r_out)? - ball_volume(d, r_in)?)
}

/// Area of a spherical cap of angular radius `theta` on `S^{d-1}`:
/// `(O_{d-1}/2) I_{sin²θ}((d-1)/2, 1/2)`.
pub fn cap_area(theta: f64, d: usize) -> Result<f64> {
    check_range("d", d as f64, d >= 2, ">= 2")?;
    check_range(
        "theta",
        theta,
        (0.0..=PI / 2.0).contains(&theta),
        "in [0, pi/2]",
    )?;
    if theta == 0.0 {
        return Ok(0.0);
    }
    let x = theta.sin().powi(2).min(1.0);
    Ok(0.5 * sphere_area(d) * beta_reg(0.5 * (d as f64 - 1.0), 0.5, x))
}

/// Uniform direction on `S^{d-1}`.
pub fn random_direction<R: Rng + ?Sized>(rng: &mut R, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Radius with density proportional to `sinh^{d-1}(ρ)` on `[r_in, r_out]`.
///
/// Proposes from the density `∝ e^{(d-1)ρ}` by inverse CDF and accepts with
/// probability `(1 - e^{-2ρ})^{d-1}`.
pub fn sample_volume_radius<R: Rng + ?Sized>(rng: &mut R, d: usize, r_in: f64, r_out: f64) -> f64 {
    let k = (d - 1) as f64;
    let span = (k * (r_out - r_in)).exp_m1();
    loop {
        let u: f64 = rng.random();
        let rho = r_in + (u * span).ln_1p() / k;
        let accept = (-(-2.0 * rho).exp_m1()).powi(d as i32 - 1);
        if rng.random::<f64>() < accept {
            return rho;
        }
    }
}

/// Point uniform in volume in the annulus `r_in ≤ ρ ≤ r_out`.
pub fn sample_point_in_shell<R: Rng + ?Sized>(rng: &mut R, d: usize, r_in: f64, r_out: f64) -> Point {
    let rho = sample_volume_radius(rng, d, r_in, r_out);
    let u = random_direction(rng, d);
    Point::from_polar(rho, &u)
}

/// Point uniform in volume in `B(o, r)`.
pub fn sample_point_in_ball<R: Rng + ?Sized>(rng: &mut R, d: usize, r: f64) -> Point {
    sample_point_in_shell(rng, d, 0.0, r)
}
