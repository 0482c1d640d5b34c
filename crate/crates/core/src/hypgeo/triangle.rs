use std::f64::consts::PI;

use crate::error::{check_range, Result};

/// Third side from two sides and the included angle:
/// `cosh c = cosh a cosh b − sinh a sinh b cos γ`. Angles are in `[0, π]`.
pub fn cosh_rule_side(a: f64, b: f64, gamma: f64) -> Result<f64> {
    check_range("a", a, a >= 0.0 && a.is_finite(), ">= 0")?;
    check_range("b", b, b >= 0.0 && b.is_finite(), ">= 0")?;
    check_range("gamma", gamma, (0.0..=PI).contains(&gamma), "in [0, pi]")?;
    // cosh c - 1 = 2 sinh²((a-b)/2) + 2 sinh a sinh b sin²(γ/2)
    let h = (0.5 * gamma).sin();
    let half = (0.5 * (a - b)).sinh();
    let delta = 2.0 * half * half + 2.0 * a.sinh() * b.sinh() * h * h;
    Ok(super::point::acosh1p(delta))
}

/// A hyperbolic triangle with sides `a, b, c` opposite angles `alpha, beta, gamma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Triangle {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

/// Angle opposite `opp` given the other two sides and `sin_opp = sin(angle)`
/// from the sine rule; `atan2` keeps thin triangles accurate.
fn angle_opposite(opp: f64, s1: f64, s2: f64, sin_angle: f64) -> f64 {
    let num = s1.cosh() * s2.cosh() - opp.cosh();
    let den = s1.sinh() * s2.sinh();
    sin_angle.atan2(num / den)
}

impl Triangle {
    /// Solves the triangle from two sides and the included angle.
    pub fn from_sas(a: f64, b: f64, gamma: f64) -> Result<Self> {
        check_range("a", a, a > 0.0, "> 0")?;
        check_range("b", b, b > 0.0, "> 0")?;
        check_range("gamma", gamma, gamma > 0.0 && gamma < PI, "in (0, pi)")?;
        let c = cosh_rule_side(a, b, gamma)?;
        let ratio = gamma.sin() / c.sinh();
        Ok(Self {
            a,
            b,
            c,
            alpha: angle_opposite(a, b, c, a.sinh() * ratio),
            beta: angle_opposite(b, a, c, b.sinh() * ratio),
            gamma,
        })
    }

    /// `cosh c` recomputed from the angles (second cosine rule).
    pub fn cosh_c_from_angles(&self) -> f64 {
        (self.alpha.cos() * self.beta.cos() + self.gamma.cos())
            / (self.alpha.sin() * self.beta.sin())
    }

    /// Residual of the side rule for `c`.
    pub fn side_rule_residual(&self) -> f64 {
        let lhs = self.c.cosh();
        let rhs = self.a.cosh() * self.b.cosh() - self.a.sinh() * self.b.sinh() * self.gamma.cos();
        (lhs - rhs).abs() / lhs
    }

    /// Relative residual of the angle rule for `c`.
    pub fn angle_rule_residual(&self) -> f64 {
        let lhs = self.c.cosh();
        (lhs - self.cosh_c_from_angles()).abs() / lhs
    }
}
