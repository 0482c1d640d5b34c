use serde::Serialize;

use super::geodesic::{dist_point_geodesic, Geodesic};
use super::point::{dist, Point};
use super::isometry::Isometry;
use super::volume::{ball_volume, random_direction, sample_point_in_shell, shell_volume};
use crate::error::{check_range, Error, Result};
use crate::mc::RngStream;

/// A separated net of a ball or annulus around the origin.
#[derive(Debug, Clone, Serialize)]
pub struct Net {
    pub centers: Vec<Point>,
    /// Requested minimum separation.
    pub spacing: f64,
    /// Smallest pairwise distance among the centers (infinite for one center).
    pub packing: f64,
    /// Largest nearest-center distance over the final verification sample.
    pub covering: f64,
}

#[derive(Debug, Clone)]
pub struct NetConfig {
    /// Maximum number of centers before giving up.
    pub budget: usize,
    /// Greedy candidates; `None` picks a count proportional to the window volume.
    pub candidates: Option<usize>,
    /// Points per covering verification pass.
    pub verify_samples: usize,
    /// Verification passes run until one adds no center, at most this many.
    pub max_passes: usize,
    pub seed: u64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            budget: 500_000,
            candidates: None,
            verify_samples: 100_000,
            max_passes: 20,
            seed: 0x05ee_d0e7,
        }
    }
}

/// Points bucketed by distance from the origin, each bucket sorted by the
/// first coordinate of the unit direction.
struct RadialIndex {
    width: f64,
    buckets: Vec<Vec<(f64, usize)>>,
    points: Vec<Point>,
}

fn first_dir(p: &Point) -> f64 {
    p.direction().map_or(0.0, |u| u[0])
}

impl RadialIndex {
    fn new(width: f64, r_max: f64) -> Self {
        let n = (r_max / width).ceil() as usize + 2;
        Self {
            width,
            buckets: vec![Vec::new(); n],
            points: Vec::new(),
        }
    }

    fn bucket_of(&self, rho: f64) -> usize {
        ((rho / self.width) as usize).min(self.buckets.len() - 1)
    }

    fn insert(&mut self, p: Point) {
        let b = self.bucket_of(p.rho());
        let key = first_dir(&p);
        let bucket = &mut self.buckets[b];
        let pos = bucket.partition_point(|e| e.0 < key);
        bucket.insert(pos, (key, self.points.len()));
        self.points.push(p);
    }

    /// Nearest indexed point within `radius` of `x`, if any.
    fn nearest_within(&self, x: &Point, radius: f64) -> Option<(usize, f64)> {
        let rx = x.rho();
        let kx = first_dir(x);
        let lo = self.bucket_of((rx - radius).max(0.0));
        let hi = self.bucket_of(rx + radius);
        let mut best: Option<(usize, f64)> = None;
        for b in lo..=hi {
            let rho_min = (b as f64 * self.width).max(rx - radius);
            // sinh ρx sinh ρc (1 - cos θ) ≤ cosh(radius) - 1 bounds the angle.
            let chord = if rho_min > 0.0 && rx > 0.0 {
                (2.0 * (radius.cosh() - 1.0) / (rx.sinh() * rho_min.sinh())).sqrt()
            } else {
                f64::INFINITY
            };
            let bucket = &self.buckets[b];
            let start = if chord.is_finite() {
                bucket.partition_point(|e| e.0 < kx - chord)
            } else {
                0
            };
            for &(key, idx) in &bucket[start..] {
                if key > kx + chord {
                    break;
                }
                let d = dist(x, &self.points[idx]).expect("same dimension");
                if d <= radius && best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((idx, d));
                }
            }
        }
        best
    }
}

/// A `spacing`-separated, `spacing`-covering net of `B(o, r)` with default
/// configuration.
pub fn greedy_net(d: usize, r: f64, spacing: f64) -> Result<Net> {
    greedy_net_shell(d, 0.0, r, spacing, &NetConfig::default())
}

/// Greedy net of the annulus `r_in ≤ ρ ≤ r_out` (a ball when `r_in = 0`,
/// in which case the origin is the first center).
pub fn greedy_net_shell(d: usize, r_in: f64, r_out: f64, spacing: f64, cfg: &NetConfig) -> Result<Net> {
    check_range("d", d as f64, d >= 2, ">= 2")?;
    check_range("r_in", r_in, r_in >= 0.0, ">= 0")?;
    check_range("r", r_out, r_out > r_in && r_out.is_finite(), "> r_in")?;
    check_range("spacing", spacing, spacing > 0.0, "> 0")?;

    let mut index = RadialIndex::new(2.0 * spacing, r_out);
    let mut packing = f64::INFINITY;
    if r_in == 0.0 {
        index.insert(Point::origin(d));
    }
    let mut offer = |index: &mut RadialIndex, z: Point| -> Result<Option<f64>> {
        match index.nearest_within(&z, 2.0 * spacing) {
            Some((_, dz)) if dz < spacing => Ok(Some(dz)),
            found => {
                if index.points.len() >= cfg.budget {
                    return Err(Error::BudgetExceeded { budget: cfg.budget });
                }
                if let Some((_, dz)) = found {
                    packing = packing.min(dz);
                }
                index.insert(z);
                Ok(None)
            }
        }
    };

    let candidates = match cfg.candidates {
        Some(n) => n,
        None => {
            let cells = shell_volume(d, r_in, r_out)? / ball_volume(d, 0.5 * spacing)?;
            (2.0 * cells).min(5e6) as usize + 1000
        }
    };
    let mut rng = RngStream::new(cfg.seed, 0);
    for _ in 0..candidates {
        let z = sample_point_in_shell(&mut rng, d, r_in, r_out);
        offer(&mut index, z)?;
    }

    // Gaps of the greedy packing touch the spacing-spheres of centers, so
    // probing just outside every sphere finds all but tiny ones.
    let probe_r = spacing * (1.0 + 1e-6);
    let n_probes = 128 * (d - 1) * (d - 1);
    let mut probed = 0;
    let mut covering = 0.0;
    for pass in 0..cfg.max_passes {
        while probed < index.points.len() {
            let shift = Isometry::translation_to(&index.points[probed]);
            for _ in 0..n_probes {
                let u = random_direction(&mut rng, d);
                let z = shift.apply(&Point::from_polar(probe_r, &u));
                let rz = z.rho();
                if rz >= r_in && rz <= r_out {
                    offer(&mut index, z)?;
                }
            }
            probed += 1;
        }
        let mut vrng = RngStream::new(cfg.seed, 1 + pass as u64);
        let mut added = 0usize;
        covering = 0.0f64;
        for _ in 0..cfg.verify_samples {
            let z = sample_point_in_shell(&mut vrng, d, r_in, r_out);
            match offer(&mut index, z)? {
                Some(dz) => covering = covering.max(dz),
                None => added += 1,
            }
        }
        if added == 0 {
            break;
        }
    }

    Ok(Net {
        centers: index.points,
        spacing,
        packing,
        covering,
    })
}

/// Centers on the sphere `∂B(o, R)` obtained by radially projecting a
/// 1/2-net of the annulus `R - 1/2 ≤ ρ ≤ R + 3/2`.
pub fn shell_ball_centers(d: usize, r: f64) -> Result<Vec<Point>> {
    shell_ball_centers_with(d, r, &NetConfig::default())
}

pub fn shell_ball_centers_with(d: usize, r: f64, cfg: &NetConfig) -> Result<Vec<Point>> {
    check_range("R", r, r >= 1.0, ">= 1")?;
    let net = greedy_net_shell(d, r - 0.5, r + 1.5, 0.5, cfg)?;
    Ok(net
        .centers
        .iter()
        .map(|c| Point::from_polar(r, &c.direction().expect("shell excludes the origin")))
        .collect())
}

/// Number of balls `B(c, ball_r)` that the line meets.
pub fn balls_hit_by_line(centers: &[Point], line: &Geodesic, ball_r: f64) -> usize {
    centers
        .iter()
        .filter(|c| dist_point_geodesic(c, line).is_ok_and(|r| r.d <= ball_r))
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tiny_window_is_origin_only() {
        let net = greedy_net(2, 0.2, 0.5).unwrap();
        assert_eq!(net.centers.len(), 1);
        assert_eq!(net.centers[0], Point::origin(2));
        assert!(net.covering <= 0.2 + 1e-12);
    }

    #[test]
    fn budget_is_enforced() {
        let cfg = NetConfig {
            budget: 10,
            ..NetConfig::default()
        };
        let err = greedy_net_shell(2, 0.0, 4.0, 0.5, &cfg).unwrap_err();
        assert_eq!(err, Error::BudgetExceeded { budget: 10 });
    }

    #[test]
    fn index_matches_brute_force() {
        let mut rng = RngStream::new(11, 0);
        let mut idx = RadialIndex::new(1.0, 4.0);
        for _ in 0..400 {
            idx.insert(sample_point_in_shell(&mut rng, 3, 0.0, 4.0));
        }
        for _ in 0..400 {
            let z = sample_point_in_shell(&mut rng, 3, 0.0, 4.0);
            let brute = idx
                .points
                .iter()
                .enumerate()
                .map(|(i, p)| (i, dist(&z, p).unwrap()))
                .filter(|&(_, d)| d <= 0.9)
                .min_by(|a, b| a.1.total_cmp(&b.1));
            assert_eq!(idx.nearest_within(&z, 0.9), brute);
        }
    }
}
