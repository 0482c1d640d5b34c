//! Simulators for the particle process, generic offspring kernels, and the
//! independent cylinder process `η` grown from a root line through `o`.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::Serialize;

use crate::error::{check_range, Error, Result};
use crate::hypgeo::{
    boost_ideal, cap_area, dist_point_geodesic, geodesics_within, random_direction, sphere_area, Geodesic,
};
use crate::linemeasure::{
    measure_foot_shell, measure_hitting_ball, sample_line_hitting_ball, sample_line_in_shell, sample_poisson_line_process_capped, MeasureEstimate,
    DEFAULT_LINE_CAP,
};
use crate::mc::{derive_seed, par_blocks, replicate_map, replicate_vec, Estimate, RngStream};

/// Default distance between the observation bound `R` and the type cap.
pub const DEFAULT_CAP_MARGIN: f64 = 40.0;

/// Grid points per cell used for the sup and inf in domination constants.
pub const DOMINATION_GRID: usize = 16;

/// Cylinders of radius one meet when their axes are within this distance.
const MEET: f64 = 2.0;

fn poisson<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> usize {
    if mean <= 0.0 {
        0
    } else {
        Poisson::new(mean).expect("finite positive mean").sample(rng) as usize
    }
}

/// One generation of a particle process.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParticleGeneration {
    /// Types in ascending order.
    pub types: Vec<f64>,
    pub generation_index: usize,
    /// Offspring lost above the cap, weighted by their reach `e^{R-y}` back
    /// into `[0, R]`.
    pub truncated_mass: f64,
}

impl ParticleGeneration {
    fn new(mut types: Vec<f64>, generation_index: usize, truncated_mass: f64) -> Self {
        types.sort_by(f64::total_cmp);
        Self {
            types,
            generation_index,
            truncated_mass,
        }
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    /// Number of types in `[a, b]`.
    pub fn count_in(&self, a: f64, b: f64) -> usize {
        let lo = self.types.partition_point(|&t| t < a);
        let hi = self.types.partition_point(|&t| t <= b);
        hi.saturating_sub(lo)
    }
}

/// `(generation, type)` rows.
pub fn generations_csv(gens: &[ParticleGeneration]) -> String {
    let mut out = String::from("generation,type\n");
    for g in gens {
        for t in &g.types {
            out.push_str(&format!("{},{}\n", g.generation_index, t));
        }
    }
    out
}

/// `u ∫_a^b e^{-(x-y)^+} dy` for `0 <= a <= b`.
fn mu_mass(x: f64, u: f64, a: f64, b: f64) -> f64 {
    let below = if a < x { (b.min(x) - x).exp() - (a - x).exp() } else { 0.0 };
    let above = (b - a.max(x)).max(0.0);
    u * (below + above)
}

fn check_offspring_args(x: f64, u: f64, cap: f64) -> Result<()> {
    check_range("x", x, x >= 0.0, ">= 0")?;
    check_range("u", u, u >= 0.0 && u.is_finite(), ">= 0")?;
    check_range("cap", cap, cap >= x && cap.is_finite(), ">= x")
}

/// Offspring of a type-`x` parent on `[0, cap]` under `u e^{-(x-y)^+} dy`.
pub fn sample_offspring_mu<R: Rng + ?Sized>(rng: &mut R, x: f64, u: f64, cap: f64) -> Result<Vec<f64>> {
    check_offspring_args(x, u, cap)?;
    Ok(offspring_mu(rng, x, u, cap))
}

fn offspring_mu<R: Rng + ?Sized>(rng: &mut R, x: f64, u: f64, cap: f64) -> Vec<f64> {
    let em = (-x).exp();
    let n_below = poisson(rng, u * (1.0 - em));
    let n_above = poisson(rng, u * (cap - x));
    let mut out = Vec::with_capacity(n_below + n_above);
    for _ in 0..n_below {
        // Inverse CDF of the density ∝ e^{y-x} on [0, x).
        let v: f64 = rng.random();
        out.push((x + (em + v * (1.0 - em)).ln()).max(0.0));
    }
    for _ in 0..n_above {
        out.push(x + rng.random::<f64>() * (cap - x));
    }
    out
}

/// A family of offspring measures `ν_x` on `[0, inf)`.
pub trait OffspringKernel: Sync {
    /// `ν_x((k, k+1])`.
    fn bin_intensity(&self, x: f64, k: usize) -> f64;

    /// A Poisson realization of `ν_x` restricted to `[0, cap]`.
    fn sample(&self, rng: &mut RngStream, x: f64, cap: f64) -> Vec<f64>;

    fn label(&self) -> String;

    /// `ν_x({0})`, which must vanish.
    fn atom_at_zero(&self, _x: f64) -> f64 {
        0.0
    }

    /// `∫_cap^∞ e^{R-y} dν_x(y)`, the truncation weight of one parent.
    fn truncated_mass(&self, _x: f64, _r: f64, _cap: f64) -> f64 {
        0.0
    }
}

/// The canonical kernel `μ_x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MuKernel {
    pub u: f64,
}

impl OffspringKernel for MuKernel {
    fn bin_intensity(&self, x: f64, k: usize) -> f64 {
        mu_mass(x, self.u, k as f64, k as f64 + 1.0)
    }

    fn sample(&self, rng: &mut RngStream, x: f64, cap: f64) -> Vec<f64> {
        offspring_mu(rng, x, self.u, cap)
    }

    fn label(&self) -> String {
        format!("mu(u={})", self.u)
    }

    fn truncated_mass(&self, _x: f64, r: f64, cap: f64) -> f64 {
        self.u * (r - cap).exp()
    }
}

/// `factor · ν_x`, realized by superposition and thinning.
pub struct ScaledKernel<K> {
    pub inner: K,
    pub factor: f64,
}

impl<K: OffspringKernel> OffspringKernel for ScaledKernel<K> {
    fn bin_intensity(&self, x: f64, k: usize) -> f64 {
        self.factor * self.inner.bin_intensity(x, k)
    }

    fn sample(&self, rng: &mut RngStream, x: f64, cap: f64) -> Vec<f64> {
        let whole = self.factor.floor() as usize;
        let frac = self.factor - whole as f64;
        let mut out = Vec::new();
        for _ in 0..whole {
            out.extend(self.inner.sample(rng, x, cap));
        }
        if frac > 0.0 {
            let extra = self.inner.sample(rng, x, cap);
            out.extend(extra.into_iter().filter(|_| rng.random::<f64>() < frac));
        }
        out
    }

    fn label(&self) -> String {
        format!("{}*{}", self.factor, self.inner.label())
    }

    fn atom_at_zero(&self, x: f64) -> f64 {
        self.factor * self.inner.atom_at_zero(x)
    }

    fn truncated_mass(&self, x: f64, r: f64, cap: f64) -> f64 {
        self.factor * self.inner.truncated_mass(x, r, cap)
    }
}

fn reject_atoms(nu: &dyn OffspringKernel, cap: f64) -> Result<()> {
    let steps = 64;
    for i in 0..=steps {
        let x = cap * i as f64 / steps as f64;
        if nu.atom_at_zero(x) > 0.0 {
            return Err(Error::InvalidKernel(format!(
                "{} has an atom at 0 for x = {x}",
                nu.label()
            )));
        }
    }
    Ok(())
}

fn check_sim_args(n_gens: usize, r: f64, cap: f64) -> Result<()> {
    check_range("n_gens", n_gens as f64, n_gens >= 1, ">= 1")?;
    check_range("R", r, r >= 0.0, ">= 0")?;
    check_range("cap", cap, cap >= r && cap.is_finite(), ">= R")
}

fn simulate_with<F>(
    rng: &mut RngStream,
    n_gens: usize,
    pop_cap: usize,
    mut offspring: F,
    truncated: impl Fn(f64) -> f64,
) -> Result<Vec<ParticleGeneration>>
where
    F: FnMut(&mut RngStream, f64) -> Vec<f64>,
{
    let mut gens = vec![ParticleGeneration::new(vec![0.0], 0, 0.0)];
    for n in 1..=n_gens {
        let parents = &gens[n - 1].types;
        let mut children = Vec::new();
        let mut lost = 0.0;
        for &x in parents {
            children.extend(offspring(rng, x));
            lost += truncated(x);
            if children.len() > pop_cap {
                return Err(Error::PopulationCap { cap: pop_cap, generation: n });
            }
        }
        gens.push(ParticleGeneration::new(children, n, lost));
    }
    Ok(gens)
}

/// Generations `0..=n_gens` of the particle process started from `{0}`.
pub fn simulate_zeta(
    rng: &mut RngStream,
    u: f64,
    n_gens: usize,
    r: f64,
    cap: f64,
    pop_cap: usize,
) -> Result<Vec<ParticleGeneration>> {
    check_sim_args(n_gens, r, cap)?;
    check_offspring_args(0.0, u, cap)?;
    let k = MuKernel { u };
    simulate_with(
        rng,
        n_gens,
        pop_cap,
        |rng, x| offspring_mu(rng, x, u, cap),
        |x| k.truncated_mass(x, r, cap),
    )
}

/// Generations of the branching process with offspring law `nu`.
pub fn simulate_kernel(
    rng: &mut RngStream,
    nu: &dyn OffspringKernel,
    n_gens: usize,
    r: f64,
    cap: f64,
    pop_cap: usize,
) -> Result<Vec<ParticleGeneration>> {
    check_sim_args(n_gens, r, cap)?;
    reject_atoms(nu, cap)?;
    simulate_with(
        rng,
        n_gens,
        pop_cap,
        |rng, x| nu.sample(rng, x, cap),
        |x| nu.truncated_mass(x, r, cap),
    )
}

/// Mean generation counts `E[X^n_{[0,R]}]`, `n = 1..=n_gens`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerationCounts {
    pub u: f64,
    #[serde(rename = "R")]
    pub r: f64,
    pub cap: f64,
    pub counts: Vec<Estimate>,
    /// First-order bound on the bias from the type cap, per generation.
    pub truncation_bound: Vec<f64>,
}

/// Replicated `X^n_{[0,R]}` for the canonical kernel.
///
/// The last generation is only counted: a type-`x` parent contributes a
/// Poisson number of children in `[0, R]` with mean `μ_x([0, R])`.
pub fn estimate_zeta_counts(
    seed: u64,
    u: f64,
    r: f64,
    n_gens: usize,
    cap: f64,
    reps: usize,
    pop_cap: usize,
) -> Result<GenerationCounts> {
    check_sim_args(n_gens, r, cap)?;
    check_offspring_args(0.0, u, cap)?;
    let rows = replicate_map(reps, seed, |rng| {
        let mut counts = Vec::with_capacity(2 * n_gens);
        let mut parents = vec![0.0];
        for n in 1..=n_gens {
            let lost: f64 = parents.len() as f64 * u * (r - cap).exp();
            if n == n_gens {
                let c: usize = parents.iter().map(|&x| poisson(rng, mu_mass(x, u, 0.0, r))).sum();
                counts.push((c as f64, lost));
                break;
            }
            let mut children = Vec::new();
            for &x in &parents {
                children.extend(offspring_mu(rng, x, u, cap));
            }
            if children.len() > pop_cap {
                return Err(Error::PopulationCap { cap: pop_cap, generation: n });
            }
            counts.push((children.iter().filter(|&&t| t <= r).count() as f64, lost));
            parents = children;
        }
        Ok(counts)
    })?;
    let table: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|c| c.0).collect()).collect();
    let counts = crate::mc::summarize_columns(&table, seed);
    let mean_lost: Vec<f64> = (0..n_gens)
        .map(|j| rows.iter().map(|r| r[j].1).sum::<f64>() / rows.len() as f64)
        .collect();
    // Lost mass in generation m feeds generation m + 1 at rate at most u.
    let mut truncation_bound = Vec::with_capacity(n_gens);
    let mut acc = 0.0;
    for lost in &mean_lost {
        acc += lost;
        truncation_bound.push(acc);
    }
    Ok(GenerationCounts {
        u,
        r,
        cap,
        counts,
        truncation_bound,
    })
}

/// Replicated `X^n_{[0,R]}` for a generic kernel.
pub fn estimate_kernel_counts(
    seed: u64,
    nu: &dyn OffspringKernel,
    r: f64,
    n_gens: usize,
    cap: f64,
    reps: usize,
    pop_cap: usize,
) -> Result<Vec<Estimate>> {
    replicate_vec(reps, seed, |rng| {
        let gens = simulate_kernel(rng, nu, n_gens, r, cap, pop_cap)?;
        Ok(gens[1..].iter().map(|g| g.count_in(0.0, r) as f64).collect())
    })
}

/// `ĉ = max_{k,l} sup_{x ∈ cell l} ν_x((k,k+1]) / inf_{x ∈ cell l} μ_x((k,k+1])`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DominationConstant {
    pub value: f64,
    /// `(k, l)` of the maximizing cell.
    pub argmax: (usize, usize),
    pub k_bins: usize,
    pub l_cells: usize,
    pub cell_width: f64,
    pub grid_points: usize,
}

/// Points of the sup/inf grid in x-cell `l`: `(l + (i+1)/16) · h`.
pub fn domination_grid(l: usize, cell_width: f64) -> [f64; DOMINATION_GRID] {
    std::array::from_fn(|i| (l as f64 + (i + 1) as f64 / DOMINATION_GRID as f64) * cell_width)
}

/// Compares `nu` against `μ` at intensity `u` over `k_bins` unit bins in `y`
/// and `l_cells` cells of width `cell_width` in `x`.
pub fn kernel_domination_constant(
    nu: &dyn OffspringKernel,
    u: f64,
    k_bins: usize,
    l_cells: usize,
    cell_width: f64,
) -> Result<DominationConstant> {
    check_range("k_bins", k_bins as f64, k_bins >= 1, ">= 1")?;
    check_range("l_cells", l_cells as f64, l_cells >= 1, ">= 1")?;
    check_range("cell_width", cell_width, cell_width > 0.0, "> 0")?;
    reject_atoms(nu, l_cells as f64 * cell_width)?;
    let mu = MuKernel { u };
    let mut best = (f64::NEG_INFINITY, (0, 0));
    for l in 0..l_cells {
        let grid = domination_grid(l, cell_width);
        for k in 0..k_bins {
            let sup = grid.iter().map(|&x| nu.bin_intensity(x, k)).fold(f64::NEG_INFINITY, f64::max);
            let inf = grid.iter().map(|&x| mu.bin_intensity(x, k)).fold(f64::INFINITY, f64::min);
            if !sup.is_finite() {
                return Err(Error::InvalidKernel(format!("bin ({k}, {l}) of {} is not finite", nu.label())));
            }
            if inf <= 0.0 {
                return Err(Error::InvalidKernel(format!("zero reference mass in bin ({k}, {l})")));
            }
            if sup / inf > best.0 {
                best = (sup / inf, (k, l));
            }
        }
    }
    Ok(DominationConstant {
        value: best.0,
        argmax: best.1,
        k_bins,
        l_cells,
        cell_width,
        grid_points: DOMINATION_GRID,
    })
}

/// A fixed line at distance `x` from `o`.
pub fn line_at_distance(d: usize, x: f64) -> Result<Geodesic> {
    check_range("x", x, x >= 0.0 && x.is_finite(), ">= 0")?;
    let mut foot = vec![0.0; d];
    let mut tangent = vec![0.0; d];
    foot[d - 1] = 1.0;
    tangent[0] = 1.0;
    Geodesic::from_foot(x, &foot, &tangent)
}

/// Balls of radius [`TubeCover::BALL_R`] centered along `axis` at spacing
/// [`TubeCover::SPACING`], covering the radius-2 tube around `axis` for
/// `|t| <= half_length`. Balls far from `o` are proposed less often.
///
/// Each sample is drawn and tested in the frame of its ball, where the ball
/// sits at `o` and the axis runs through `o`; only the ideal endpoints are
/// carried back, which keeps distant balls numerically sound.
struct TubeCover {
    frames: Vec<BallFrame>,
    cumulative: Vec<f64>,
    proposal: Vec<f64>,
    ball_measure: f64,
    d: usize,
}

struct BallFrame {
    /// The boost `(u, s)` carrying `o` to the center.
    u: Vec<f64>,
    s: f64,
    /// The axis seen from the center.
    axis: Geodesic,
}

impl TubeCover {
    const SPACING: f64 = 0.5;
    // cosh(2) cosh(SPACING / 2) = cosh(2.0331...)
    const BALL_R: f64 = 2.04;

    fn new(axis: &Geodesic, rho_max: f64, half_length: f64) -> Result<Self> {
        let d = axis.dim();
        let (a, b) = axis.endpoints();
        let steps = (half_length / Self::SPACING).ceil() as i64;
        let mut frames = Vec::new();
        let mut weights = Vec::new();
        for i in -steps..=steps {
            let c = axis.at(i as f64 * Self::SPACING);
            let s = c.rho();
            let u = c.direction().unwrap_or_else(|| {
                let mut e = vec![0.0; d];
                e[0] = 1.0;
                e
            });
            let local = Geodesic::from_endpoints(&boost_ideal(&u, -s, &a), &boost_ideal(&u, -s, &b))?;
            weights.push((-(s - rho_max - Self::BALL_R).max(0.0)).exp());
            frames.push(BallFrame { u, s, axis: local });
        }
        let total: f64 = weights.iter().sum();
        let proposal: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let mut acc = 0.0;
        let cumulative = proposal
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect();
        Ok(Self {
            frames,
            cumulative,
            proposal,
            ball_measure: measure_hitting_ball(d, Self::BALL_R)?,
            d,
        })
    }

    /// A line within distance 2 of the axis, returned as `(ρ, weight)` with
    /// weight `μ(L_B) / (q_j N(L))`; `None` when the line misses the tube.
    fn sample(&self, rng: &mut RngStream) -> Option<(f64, f64)> {
        let v: f64 = rng.random();
        let j = self.cumulative.partition_point(|&c| c < v).min(self.frames.len() - 1);
        let frame = &self.frames[j];
        let line = sample_line_hitting_ball(rng, self.d, Self::BALL_R).expect("valid window");
        if !geodesics_within(&line, &frame.axis, MEET) {
            return None;
        }
        // The balls met by a line are contiguous along the axis.
        let hits = |k: i64| {
            let c = frame.axis.at(k as f64 * Self::SPACING);
            dist_point_geodesic(&c, &line).is_ok_and(|p| p.d <= Self::BALL_R)
        };
        let mut n = 1;
        let mut k = 1;
        while (j as i64) - k >= 0 && hits(-k) {
            n += 1;
            k += 1;
        }
        let mut k = 1;
        while j + (k as usize) < self.frames.len() && hits(k) {
            n += 1;
            k += 1;
        }
        let (a, b) = line.endpoints();
        let global = Geodesic::from_endpoints(
            &boost_ideal(&frame.u, frame.s, &a),
            &boost_ideal(&frame.u, frame.s, &b),
        )
        .ok()?;
        Some((global.rho(), self.ball_measure / (self.proposal[j] * n as f64)))
    }
}

/// The tube cover reaches points at distance `rho_max + TUBE_TAIL` from `o`.
/// Lines with `ρ <= rho_max` meeting the tube only further out carry a
/// relative share of order `e^{3 - TUBE_TAIL}` of any bin when `x <= rho_max`.
const TUBE_TAIL: f64 = 14.0;

/// Lines with `ρ <= x - 1` drawn shell by shell, with one ideal endpoint
/// forced into the cap every line within 2 of the axis must reach.
///
/// The axis lies beyond the hyperplane perpendicular to its foot ray at
/// distance `x - 3`, and so does the whole tube around it.
struct CapSampler {
    d: usize,
    f: Vec<f64>,
    /// Angular radius of the cap, or `None` when it is the whole sphere.
    theta: Option<f64>,
    cos_theta: f64,
    /// `σ(C) / O_{d-1}`.
    cap_fraction: f64,
}

impl CapSampler {
    fn new(axis: &Geodesic) -> Result<Self> {
        let d = axis.dim();
        let g = axis.rho() - 3.0;
        let f = axis.foot_direction().to_vec();
        if g <= 0.0 {
            return Ok(Self {
                d,
                f,
                theta: None,
                cos_theta: -1.0,
                cap_fraction: 1.0,
            });
        }
        let theta = 2.0 * (-g).exp().atan();
        Ok(Self {
            d,
            f,
            theta: Some(theta),
            cos_theta: g.tanh(),
            cap_fraction: cap_area(theta, d)? / sphere_area(d),
        })
    }

    fn cap_point(&self, rng: &mut RngStream, theta: f64) -> Vec<f64> {
        let psi = loop {
            let psi = match self.d {
                2 => theta * rng.random::<f64>(),
                _ => 2.0 * (rng.random::<f64>().sqrt() * (0.5 * theta).sin()).asin(),
            };
            if self.d <= 3 || rng.random::<f64>() < (psi.sin() / theta.sin()).powi(self.d as i32 - 3) {
                break psi;
            }
        };
        let e = loop {
            let g = random_direction(rng, self.d);
            let c = dot(&g, &self.f);
            let w: Vec<f64> = g.iter().zip(&self.f).map(|(a, b)| a - c * b).collect();
            if let Some(w) = unit(&w) {
                break w;
            }
        };
        self.f.iter().zip(&e).map(|(a, b)| psi.cos() * a + psi.sin() * b).collect()
    }

    /// A line with `ρ ∈ (k, k+1]`, one endpoint uniform in the cap.
    fn sample(&self, rng: &mut RngStream, k: usize) -> Geodesic {
        let line = sample_line_in_shell(rng, self.d, k as f64, k as f64 + 1.0).expect("valid shell");
        let Some(theta) = self.theta else {
            return line;
        };
        let (a, b) = line.endpoints();
        let (a, b) = if rng.random::<bool>() { (a, b) } else { (b, a) };
        let target = self.cap_point(rng, theta);
        // The reflection swapping `a` and `target` preserves the line measure.
        let v: Vec<f64> = a.iter().zip(&target).map(|(x, y)| x - y).collect();
        let vv = dot(&v, &v);
        let b = if vv > 0.0 {
            let c = 2.0 * dot(&b, &v) / vv;
            b.iter().zip(&v).map(|(x, y)| x - c * y).collect()
        } else {
            b
        };
        Geodesic::from_endpoints(&target, &b).unwrap_or(line)
    }

    /// Weight of a sampled line relative to the shell measure.
    fn weight(&self, line: &Geodesic) -> f64 {
        if self.theta.is_none() {
            return 1.0;
        }
        let (a, b) = line.endpoints();
        let inside = [a, b].iter().filter(|p| dot(p, &self.f) > self.cos_theta).count().max(1);
        2.0 * self.cap_fraction / inside as f64
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn unit(v: &[f64]) -> Option<Vec<f64>> {
    let n = dot(v, v).sqrt();
    (n > 1e-9).then(|| v.iter().map(|x| x / n).collect())
}

fn finish_bin(s: f64, ss: f64, n: usize, u: f64, seed: u64) -> MeasureEstimate {
    let nf = n as f64;
    let mean = s / nf;
    let var = ((ss / nf - mean * mean) * nf / (nf - 1.0)).max(0.0);
    Estimate::new(u * mean, u * (var / nf).sqrt(), n, seed).into()
}

/// `τ̂_x((l, l+1])` for `l = 0..=l_max`: intensity `u` times the measure of
/// lines within distance 2 of a fixed line at distance `x` from `o` whose
/// foot lies in the shell.
///
/// Shells with `l + 1 <= x` are sampled one at a time with an endpoint in
/// the cap the tube is confined to. The remaining shells share one run of
/// lines drawn through a ball cover of the tube with union-corrected
/// importance weights. Each of these runs uses `n` samples.
pub fn estimate_tau_bins(
    seed: u64,
    d: usize,
    u: f64,
    x: f64,
    l_max: usize,
    n: usize,
) -> Result<Vec<(usize, MeasureEstimate)>> {
    check_range("u", u, u >= 0.0 && u.is_finite(), ">= 0")?;
    check_range("n", n as f64, n >= 2, ">= 2")?;
    let axis = line_at_distance(d, x)?;
    let bins = l_max + 1;
    let low = (x.floor() as usize).min(bins);
    let mut out = Vec::with_capacity(bins);
    if low > 0 {
        let cap = CapSampler::new(&axis)?;
        for k in 0..low {
            let shell = measure_foot_shell(d, k as f64, k as f64 + 1.0)?;
            let sub = derive_seed(seed, k as u64 + 1);
            let blocks = par_blocks(n, sub, |rng: &mut RngStream, count| {
                let mut acc = (0.0f64, 0.0f64);
                for _ in 0..count {
                    let line = cap.sample(rng, k);
                    if geodesics_within(&line, &axis, MEET) {
                        let w = shell * cap.weight(&line);
                        acc.0 += w;
                        acc.1 += w * w;
                    }
                }
                acc
            });
            let (s, ss) = blocks.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
            out.push((k, finish_bin(s, ss, n, u, sub)));
        }
    }
    if low == bins {
        return Ok(out);
    }
    let rho_max = bins as f64;
    let reach = (rho_max + TUBE_TAIL).max(x + 1.0);
    let half_length = (reach.cosh() / x.cosh()).acosh();
    let cover = TubeCover::new(&axis, rho_max, half_length)?;
    let sub = derive_seed(seed, 0);
    let blocks = par_blocks(n, sub, |rng: &mut RngStream, count| {
        let mut acc = vec![(0.0f64, 0.0f64); bins];
        for _ in 0..count {
            let Some((rho, w)) = cover.sample(rng) else {
                continue;
            };
            if rho > rho_max {
                continue;
            }
            let k = (rho.ceil() as usize).saturating_sub(1).min(l_max);
            acc[k].0 += w;
            acc[k].1 += w * w;
        }
        acc
    });
    for k in low..bins {
        let (s, ss) = blocks.iter().fold((0.0, 0.0), |a, b| (a.0 + b[k].0, a.1 + b[k].1));
        out.push((k, finish_bin(s, ss, n, u, sub)));
    }
    Ok(out)
}

/// `τ_x` tabulated at the domination grid points of unit cells `0..l_cells`,
/// with bins `0..k_bins`. Evaluation uses the nearest tabulated `x`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TauKernel {
    pub d: usize,
    pub u: f64,
    pub k_bins: usize,
    pub l_cells: usize,
    pub xs: Vec<f64>,
    /// `table[i][k]` is `τ̂_{xs[i]}((k, k+1])`.
    pub table: Vec<Vec<f64>>,
    pub stderr: Vec<Vec<f64>>,
}

impl TauKernel {
    pub fn estimate(seed: u64, d: usize, u: f64, k_bins: usize, l_cells: usize, n_per_point: usize) -> Result<Self> {
        check_range("k_bins", k_bins as f64, k_bins >= 1, ">= 1")?;
        let xs: Vec<f64> = (0..l_cells).flat_map(|l| domination_grid(l, 1.0)).collect();
        let mut table = Vec::with_capacity(xs.len());
        let mut stderr = Vec::with_capacity(xs.len());
        for (i, &x) in xs.iter().enumerate() {
            let bins = estimate_tau_bins(derive_seed(seed, i as u64), d, u, x, k_bins - 1, n_per_point)?;
            table.push(bins.iter().map(|(_, e)| e.mean).collect());
            stderr.push(bins.iter().map(|(_, e)| e.stderr).collect());
        }
        Ok(Self {
            d,
            u,
            k_bins,
            l_cells,
            xs,
            table,
            stderr,
        })
    }

    fn row(&self, x: f64) -> &[f64] {
        let i = self.xs.partition_point(|&v| v < x);
        let i = if i == self.xs.len() || (i > 0 && x - self.xs[i - 1] < self.xs[i] - x) {
            i - 1
        } else {
            i
        };
        &self.table[i]
    }

    /// The kernel restricted to the first `k_bins` bins and `l_cells` cells.
    pub fn truncate(&self, k_bins: usize, l_cells: usize) -> Self {
        let k = k_bins.min(self.k_bins);
        let l = l_cells.min(self.l_cells);
        let rows = l * DOMINATION_GRID;
        Self {
            d: self.d,
            u: self.u,
            k_bins: k,
            l_cells: l,
            xs: self.xs[..rows].to_vec(),
            table: self.table[..rows].iter().map(|r| r[..k].to_vec()).collect(),
            stderr: self.stderr[..rows].iter().map(|r| r[..k].to_vec()).collect(),
        }
    }
}

impl OffspringKernel for TauKernel {
    fn bin_intensity(&self, x: f64, k: usize) -> f64 {
        self.row(x).get(k).copied().unwrap_or(0.0)
    }

    fn sample(&self, rng: &mut RngStream, x: f64, cap: f64) -> Vec<f64> {
        let mut out = Vec::new();
        for (k, &m) in self.row(x).iter().enumerate() {
            for _ in 0..poisson(rng, m) {
                let y = k as f64 + 1.0 - rng.random::<f64>();
                if y <= cap {
                    out.push(y);
                }
            }
        }
        out
    }

    fn label(&self) -> String {
        format!("tau(d={}, u={}, K={}, L={})", self.d, self.u, self.k_bins, self.l_cells)
    }
}

/// A realization of `η`: generation 0 is the root line through `o`; every
/// parent receives an independent Poisson line process in the window,
/// thinned to the lines whose cylinders meet its own.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EtaRealization {
    pub d: usize,
    pub u: f64,
    pub window_r: f64,
    /// Lines of each generation, sorted by `ρ`.
    pub generations: Vec<Vec<Geodesic>>,
    /// `parents[n][i]` indexes the parent of `generations[n][i]` in generation `n - 1`.
    pub parents: Vec<Vec<usize>>,
    /// `bin_counts[n][l]` counts generation-`n` lines with `ρ ∈ (l, l+1]`.
    pub bin_counts: Vec<Vec<usize>>,
}

impl EtaRealization {
    pub fn root(&self) -> &Geodesic {
        &self.generations[0][0]
    }

    /// Generation-`n` lines with `ρ <= r`.
    pub fn count_within(&self, n: usize, r: f64) -> usize {
        self.generations
            .get(n)
            .map_or(0, |g| g.partition_point(|l| l.rho() <= r))
    }

    /// Lines of all generations with `ρ <= r`.
    pub fn cumulative_within(&self, r: f64) -> usize {
        (0..self.generations.len()).map(|n| self.count_within(n, r)).sum()
    }

    pub fn total_lines(&self) -> usize {
        self.generations.iter().map(Vec::len).sum()
    }
}

fn rho_bin_counts(lines: &[Geodesic], window_r: f64) -> Vec<usize> {
    let mut counts = vec![0; window_r.ceil().max(1.0) as usize];
    for l in lines {
        let k = (l.rho().ceil() as usize).saturating_sub(1).min(counts.len() - 1);
        counts[k] += 1;
    }
    counts
}

pub fn simulate_eta(
    rng: &mut RngStream,
    u: f64,
    d: usize,
    n_gens: usize,
    window_r: f64,
    line_cap: usize,
) -> Result<EtaRealization> {
    check_range("u", u, u >= 0.0 && u.is_finite(), ">= 0")?;
    check_range("window_r", window_r, window_r > 0.0, "> 0")?;
    let root = Geodesic::axis(d, 0);
    let mut generations = vec![vec![root]];
    let mut parents = vec![vec![]];
    let mut total = 1;
    for n in 1..=n_gens {
        let mut children: Vec<(Geodesic, usize)> = Vec::new();
        for (p, parent) in generations[n - 1].iter().enumerate() {
            let fresh = sample_poisson_line_process_capped(rng, u, d, window_r, DEFAULT_LINE_CAP)?;
            children.extend(
                fresh
                    .into_iter()
                    .filter(|l| geodesics_within(l, parent, MEET))
                    .map(|l| (l, p)),
            );
            if total + children.len() > line_cap {
                return Err(Error::PopulationCap { cap: line_cap, generation: n });
            }
        }
        total += children.len();
        children.sort_by(|a, b| a.0.rho().total_cmp(&b.0.rho()));
        let (lines, idx): (Vec<_>, Vec<_>) = children.into_iter().unzip();
        generations.push(lines);
        parents.push(idx);
        if generations[n].is_empty() {
            break;
        }
    }
    let bin_counts = generations.iter().map(|g| rho_bin_counts(g, window_r)).collect();
    Ok(EtaRealization {
        d,
        u,
        window_r,
        generations,
        parents,
        bin_counts,
    })
}

/// `Ĥ_n(R)`: mean number of generation-`n` lines with `ρ <= R`, `n = 0..=n_gens`.
#[allow(clippy::too_many_arguments)]
pub fn estimate_eta_generation_counts(
    seed: u64,
    u: f64,
    d: usize,
    r: f64,
    n_gens: usize,
    window_r: f64,
    reps: usize,
    line_cap: usize,
) -> Result<Vec<Estimate>> {
    check_range("window_r", window_r, window_r >= r, ">= R")?;
    replicate_vec(reps, seed, |rng| {
        let eta = simulate_eta(rng, u, d, n_gens, window_r, line_cap)?;
        Ok((0..=n_gens).map(|n| eta.count_within(n, r) as f64).collect())
    })
}

/// Slope of a (weighted) least-squares line through `(x, y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub slope_se: f64,
    pub intercept: f64,
}

/// Weighted least squares with weights `1 / var`. Zero variances are floored
/// at the smallest positive one; if all vanish the fit is unweighted with
/// standard error 0.
pub fn fit_line(x: &[f64], y: &[f64], var: &[f64]) -> LineFit {
    let floor = var.iter().cloned().filter(|&v| v > 0.0).fold(f64::INFINITY, f64::min);
    let w: Vec<f64> = if floor.is_finite() {
        var.iter().map(|&v| 1.0 / v.max(floor)).collect()
    } else {
        vec![1.0; x.len()]
    };
    let sw: f64 = w.iter().sum();
    let mx = w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() / sw;
    let my = w.iter().zip(y).map(|(w, y)| w * y).sum::<f64>() / sw;
    let sxx: f64 = w.iter().zip(x).map(|(w, x)| w * (x - mx).powi(2)).sum();
    let sxy: f64 = w.iter().zip(x).zip(y).map(|((w, x), y)| w * (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let slope_se = if floor.is_finite() { (1.0 / sxx).sqrt() } else { 0.0 };
    LineFit {
        slope,
        slope_se,
        intercept: my - slope * mx,
    }
}

/// Exponential growth of cumulative `η` counts against the ambient rate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthReport {
    pub d: usize,
    pub u: f64,
    #[serde(rename = "R_grid")]
    pub r_grid: Vec<f64>,
    /// Mean cumulative `η` line counts within `B(o, R)`, root included.
    pub eta_counts: Vec<Estimate>,
    pub eta_rate: f64,
    pub eta_rate_se: f64,
    /// One-sided 95% upper confidence bound on `eta_rate`.
    pub eta_rate_upper95: f64,
    /// Fitted rate of the expected ambient line count `u μ(L_{B(o,R)})`.
    pub ambient_rate: f64,
    pub margin: f64,
    /// `eta_rate_upper95 < (d - 1) - margin`.
    pub disconnected_analogue: bool,
}

#[allow(clippy::too_many_arguments)]
pub fn growth_rate_comparison(
    seed: u64,
    d: usize,
    u: f64,
    r_grid: &[f64],
    gens: usize,
    reps: usize,
    window_margin: f64,
    margin: f64,
) -> Result<GrowthReport> {
    let lo = r_grid.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = r_grid.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if r_grid.len() < 3 || hi - lo < 2.0 || lo <= 0.0 {
        return Err(Error::InsufficientRange(format!(
            "need at least 3 radii > 0 spanning >= 2, got {r_grid:?}"
        )));
    }
    let window_r = hi + window_margin;
    let eta_counts = replicate_vec(reps, seed, |rng| {
        let eta = simulate_eta(rng, u, d, gens, window_r, usize::MAX)?;
        Ok(r_grid.iter().map(|&r| eta.cumulative_within(r) as f64).collect())
    })?;
    let ys: Vec<f64> = eta_counts.iter().map(|e| e.mean.ln()).collect();
    let vars: Vec<f64> = eta_counts.iter().map(|e| (e.stderr / e.mean).powi(2)).collect();
    let fit = fit_line(r_grid, &ys, &vars);
    let ambient: Vec<f64> = r_grid
        .iter()
        .map(|&r| measure_hitting_ball(d, r).map(|m| (u.max(f64::MIN_POSITIVE) * m).ln()))
        .collect::<Result<_>>()?;
    let ambient_fit = fit_line(r_grid, &ambient, &vec![0.0; r_grid.len()]);
    let upper = fit.slope + 1.645 * fit.slope_se;
    Ok(GrowthReport {
        d,
        u,
        r_grid: r_grid.to_vec(),
        eta_counts,
        eta_rate: fit.slope,
        eta_rate_se: fit.slope_se,
        eta_rate_upper95: upper,
        ambient_rate: ambient_fit.slope,
        margin,
        disconnected_analogue: upper < (d - 1) as f64 - margin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mu_bins_closed_form() {
        let k = MuKernel { u: 0.5 };
        assert!((k.bin_intensity(0.0, 3) - 0.5).abs() < 1e-15);
        let want = 0.5 * ((-1.0f64).exp() - (-2.0f64).exp());
        assert!((k.bin_intensity(2.0, 0) - want).abs() < 1e-15);
        let want = 0.5 * (1.0 - (-0.5f64).exp() + 0.5);
        assert!((k.bin_intensity(1.5, 1) - want).abs() < 1e-15);
    }

    #[test]
    fn offspring_respect_cap() {
        let mut rng = RngStream::new(0, 0);
        for _ in 0..1000 {
            for y in sample_offspring_mu(&mut rng, 3.0, 1.0, 5.0).unwrap() {
                assert!((0.0..=5.0).contains(&y));
            }
        }
        assert!(sample_offspring_mu(&mut rng, 3.0, 1.0, 2.0).is_err());
        assert!(sample_offspring_mu(&mut rng, 3.0, 0.0, 5.0).unwrap().is_empty());
    }

    #[test]
    fn generation_counting() {
        let g = ParticleGeneration::new(vec![2.0, 0.5, 1.0, 3.0], 1, 0.0);
        assert_eq!(g.types, vec![0.5, 1.0, 2.0, 3.0]);
        assert_eq!(g.count_in(0.0, 2.0), 3);
        assert_eq!(g.count_in(1.0, 1.0), 1);
    }

    #[test]
    fn zero_intensity_processes() {
        let mut rng = RngStream::new(1, 0);
        let gens = simulate_zeta(&mut rng, 0.0, 3, 2.0, 42.0, 1000).unwrap();
        assert!(gens[1..].iter().all(ParticleGeneration::is_empty));
        let eta = simulate_eta(&mut rng, 0.0, 2, 3, 4.0, 1000).unwrap();
        assert_eq!(eta.total_lines(), 1);
        assert!(eta.root().rho() < 1e-12);
    }

    #[test]
    fn exact_line_fit() {
        let x = [1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0];
        let f = fit_line(&x, &y, &[0.0; 3]);
        assert!((f.slope - 2.0).abs() < 1e-12 && (f.intercept + 1.0).abs() < 1e-12);
        assert_eq!(f.slope_se, 0.0);
    }

    #[test]
    fn growth_needs_range() {
        let e = growth_rate_comparison(0, 2, 0.01, &[2.0, 3.0], 3, 10, 2.0, 0.0);
        assert!(matches!(e, Err(Error::InsufficientRange(_))));
    }
}
