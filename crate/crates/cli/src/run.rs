use serde::Serialize;

use hypcyl::acceptance::{run_criterion, AcceptanceConfig, N_CRITERIA};
use hypcyl::branching::{big_f_n, branching_table};
use hypcyl::cylproc::{connect_prob_one_step, estimate_connect_prob_msteps, phase_scan};
use hypcyl::hypgeo::{dist, greedy_net, Point};
use hypcyl::linemeasure::{measure_hitting_ball, sample_poisson_line_process};
use hypcyl::mc::{Estimate, RngStream};
use hypcyl::particles::{
    estimate_eta_generation_counts, estimate_tau_bins, estimate_zeta_counts, growth_rate_comparison,
    kernel_domination_constant, MuKernel, OffspringKernel, ScaledKernel, TauKernel, DEFAULT_CAP_MARGIN,
};
use hypcyl::Error;

use crate::args::*;
use crate::output::Results;

pub enum Failure {
    /// Bad arguments or input files: exit code 2.
    Usage(String),
    /// Numerical or runtime failure: exit code 1.
    Numeric(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::OutOfRange { .. } | Error::DimensionMismatch { .. } | Error::InsufficientRange(_) => {
                Self::Usage(e.to_string())
            }
            _ => Self::Numeric(e.to_string()),
        }
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Self::Numeric(e.to_string())
    }
}

/// Output of a run; `ok` is false when the run completed but a check failed.
pub struct Outcome {
    pub results: Results,
    pub ok: bool,
}

impl Outcome {
    fn ok(results: Results) -> Self {
        Self { results, ok: true }
    }
}

type Run = Result<Outcome, Failure>;

fn on_axis(d: usize, r: f64) -> Point {
    let mut e = vec![0.0; d];
    e[0] = 1.0;
    Point::from_polar(r, &e)
}

#[derive(Serialize)]
struct EstimateRow {
    n: usize,
    mean: f64,
    se: f64,
}

fn estimate_rows(estimates: &[Estimate], first: usize) -> Vec<EstimateRow> {
    estimates
        .iter()
        .enumerate()
        .map(|(i, e)| EstimateRow {
            n: first + i,
            mean: e.mean,
            se: e.stderr,
        })
        .collect()
}

pub fn execute(cmd: &Command) -> Run {
    match cmd {
        Command::GeoDist(a) => geo_dist(a),
        Command::LineMeasure(a) => {
            #[derive(Serialize)]
            struct Row {
                d: usize,
                r: f64,
                measure: f64,
            }
            let measure = measure_hitting_ball(a.d, a.r)?;
            Ok(Outcome::ok(Results::from_rows(&[Row { d: a.d, r: a.r, measure }])?))
        }
        Command::LineSample(a) => line_sample(a),
        Command::ConnectOne(a) => {
            #[derive(Serialize)]
            struct Row {
                d: usize,
                u: f64,
                #[serde(rename = "R")]
                r: f64,
                probability: f64,
                measure: f64,
                measure_se: f64,
                exact: bool,
            }
            let c = connect_prob_one_step(a.seed, a.d, a.u, &Point::origin(a.d), &on_axis(a.d, a.r), a.n)?;
            Ok(Outcome::ok(Results::from_rows(&[Row {
                d: a.d,
                u: a.u,
                r: a.r,
                probability: c.probability,
                measure: c.measure.mean,
                measure_se: c.measure.stderr,
                exact: c.exact,
            }])?))
        }
        Command::ConnectM(a) => {
            let m = estimate_connect_prob_msteps(a.seed, a.d, a.u, a.r, a.m, a.margin, a.reps)?;
            #[derive(Serialize)]
            struct Row {
                d: usize,
                u: f64,
                #[serde(rename = "R")]
                r: f64,
                m: usize,
                window_r: f64,
                probability: f64,
                se: f64,
                reps: usize,
                truncation_possible: bool,
            }
            Ok(Outcome::ok(Results::from_rows(&[Row {
                d: a.d,
                u: a.u,
                r: a.r,
                m: a.m,
                window_r: m.window_r,
                probability: m.estimate.mean,
                se: m.estimate.stderr,
                reps: a.reps,
                truncation_possible: m.truncation_possible,
            }])?))
        }
        Command::PhaseScan(a) => {
            let rows = phase_scan(a.seed, a.d, a.window_r, &a.u_grid, a.reps)?;
            Ok(Outcome::ok(Results::from_rows(&rows)?))
        }
        Command::BranchingTable(a) => {
            let rows = branching_table(a.u, a.r, a.n_max)?;
            Ok(Outcome::ok(Results::from_rows(&rows)?))
        }
        Command::BranchingSim(a) => branching_sim(a),
        Command::KernelCheck(a) => kernel_check(a),
        Command::TauBins(a) => {
            #[derive(Serialize)]
            struct Row {
                l: usize,
                mean: f64,
                se: f64,
                samples: usize,
            }
            let bins = estimate_tau_bins(a.seed, a.d, a.u, a.x, a.l_max, a.n)?;
            let rows: Vec<Row> = bins
                .iter()
                .map(|(l, e)| Row {
                    l: *l,
                    mean: e.mean,
                    se: e.stderr,
                    samples: e.n_samples,
                })
                .collect();
            Ok(Outcome::ok(Results::from_rows(&rows)?))
        }
        Command::EtaSim(a) => {
            let window = a.window_r.unwrap_or(a.r);
            let h = estimate_eta_generation_counts(a.seed, a.u, a.d, a.r, a.gens, window, a.reps, a.line_cap)?;
            Ok(Outcome::ok(Results::from_rows(&estimate_rows(&h, 0))?))
        }
        Command::GrowthCompare(a) => growth_compare(a),
        Command::NetBuild(a) => net_build(a),
        Command::Acceptance(a) => acceptance(a),
        Command::Replay(_) => Err(Failure::Usage("replay files cannot be nested".into())),
    }
}

fn geo_dist(a: &GeoDist) -> Run {
    if a.ball.len() != 2 {
        return Err(Failure::Usage(format!("expected two --ball points, got {}", a.ball.len())));
    }
    let x = Point::from_ball(&a.ball[0].0).map_err(|e| Failure::Usage(e.to_string()))?;
    let y = Point::from_ball(&a.ball[1].0).map_err(|e| Failure::Usage(e.to_string()))?;
    #[derive(Serialize)]
    struct Row {
        d: usize,
        distance: f64,
    }
    let distance = dist(&x, &y)?;
    Ok(Outcome::ok(Results::from_rows(&[Row { d: x.dim(), distance }])?))
}

fn line_sample(a: &LineSample) -> Run {
    #[derive(Serialize)]
    struct Row {
        index: usize,
        rho: f64,
        foot: Vec<f64>,
        end_a: Vec<f64>,
        end_b: Vec<f64>,
    }
    let mut rng = RngStream::new(a.seed, 0);
    let lines = sample_poisson_line_process(&mut rng, a.u, a.d, a.r)?;
    let rows: Vec<Row> = lines
        .iter()
        .enumerate()
        .map(|(index, l)| {
            let (end_a, end_b) = l.endpoints();
            Row {
                index,
                rho: l.rho(),
                foot: l.foot().to_ball(),
                end_a,
                end_b,
            }
        })
        .collect();
    #[derive(Serialize)]
    struct Summary {
        lines: usize,
        expected: f64,
    }
    let summary = Summary {
        lines: rows.len(),
        expected: a.u * measure_hitting_ball(a.d, a.r)?,
    };
    Ok(Outcome::ok(Results::from_rows(&rows)?.with_summary(&summary)?))
}

fn branching_sim(a: &BranchingSim) -> Run {
    let cap = a.cap.unwrap_or(a.r + DEFAULT_CAP_MARGIN);
    let g = estimate_zeta_counts(a.seed, a.u, a.r, a.gens, cap, a.reps, a.pop_cap)?;
    #[derive(Serialize)]
    struct Row {
        n: usize,
        mean: f64,
        se: f64,
        #[serde(rename = "F_n")]
        exact: f64,
        truncation_bound: f64,
    }
    let rows = g
        .counts
        .iter()
        .enumerate()
        .map(|(i, e)| {
            Ok(Row {
                n: i + 1,
                mean: e.mean,
                se: e.stderr,
                exact: big_f_n(i + 1, a.r, a.u)?,
                truncation_bound: g.truncation_bound[i],
            })
        })
        .collect::<Result<Vec<_>, Error>>()?;
    Ok(Outcome::ok(Results::from_rows(&rows)?))
}

fn kernel_check(a: &KernelCheck) -> Run {
    let c = match a.kernel {
        KernelName::Mu => {
            let nu = ScaledKernel {
                inner: MuKernel { u: a.u },
                factor: a.factor,
            };
            kernel_domination_constant(&nu, a.u, a.k_bins, a.l_cells, a.cell_width)?
        }
        KernelName::Tau => {
            if a.cell_width != 1.0 {
                return Err(Failure::Usage("the tau kernel needs --cell-width 1".into()));
            }
            let tau = TauKernel::estimate(a.seed, a.d, a.u, a.k_bins, a.l_cells, a.n_per_point)?;
            let nu = ScaledKernel {
                inner: tau,
                factor: a.factor,
            };
            kernel_domination_constant(&nu as &dyn OffspringKernel, a.u, a.k_bins, a.l_cells, 1.0)?
        }
    };
    Ok(Outcome::ok(Results::from_rows(&[c])?))
}

fn growth_compare(a: &GrowthCompare) -> Run {
    let r = growth_rate_comparison(a.seed, a.d, a.u, &a.r_grid, a.gens, a.reps, a.window_margin, a.margin)?;
    #[derive(Serialize)]
    struct Row {
        #[serde(rename = "R")]
        r: f64,
        mean: f64,
        se: f64,
        ambient: f64,
    }
    let rows = a
        .r_grid
        .iter()
        .zip(&r.eta_counts)
        .map(|(&rr, e)| {
            Ok(Row {
                r: rr,
                mean: e.mean,
                se: e.stderr,
                ambient: a.u * measure_hitting_ball(a.d, rr)?,
            })
        })
        .collect::<Result<Vec<_>, Error>>()?;
    #[derive(Serialize)]
    struct Summary {
        eta_rate: f64,
        eta_rate_se: f64,
        eta_rate_upper95: f64,
        ambient_rate: f64,
        margin: f64,
        disconnected_analogue: bool,
    }
    let summary = Summary {
        eta_rate: r.eta_rate,
        eta_rate_se: r.eta_rate_se,
        eta_rate_upper95: r.eta_rate_upper95,
        ambient_rate: r.ambient_rate,
        margin: r.margin,
        disconnected_analogue: r.disconnected_analogue,
    };
    Ok(Outcome::ok(Results::from_rows(&rows)?.with_summary(&summary)?))
}

fn net_build(a: &NetBuild) -> Run {
    let net = greedy_net(a.d, a.r, a.spacing)?;
    #[derive(Serialize)]
    struct Row {
        index: usize,
        rho: f64,
        ball: Vec<f64>,
    }
    let rows: Vec<Row> = net
        .centers
        .iter()
        .enumerate()
        .map(|(index, c)| Row {
            index,
            rho: c.rho(),
            ball: c.to_ball(),
        })
        .collect();
    #[derive(Serialize)]
    struct Summary {
        centers: usize,
        spacing: f64,
        packing: Option<f64>,
        covering: f64,
    }
    let summary = Summary {
        centers: net.centers.len(),
        spacing: net.spacing,
        packing: net.packing.is_finite().then_some(net.packing),
        covering: net.covering,
    };
    Ok(Outcome::ok(Results::from_rows(&rows)?.with_summary(&summary)?))
}

fn acceptance(a: &Acceptance) -> Run {
    let ids: Vec<usize> = if a.only.is_empty() {
        (1..=N_CRITERIA).collect()
    } else {
        a.only.clone()
    };
    if let Some(bad) = ids.iter().find(|&&i| i == 0 || i > N_CRITERIA) {
        return Err(Failure::Usage(format!("no criterion {bad}")));
    }
    let cfg = AcceptanceConfig {
        seed: a.seed,
        scale: a.scale,
    };
    let mut results = Vec::new();
    for id in ids {
        let r = run_criterion(id, &cfg);
        eprintln!("{r}");
        results.push(r);
    }
    let ok = results.iter().all(|r| r.passed);
    #[derive(Serialize)]
    struct Summary {
        passed: usize,
        failed: usize,
    }
    let passed = results.iter().filter(|r| r.passed).count();
    let summary = Summary {
        passed,
        failed: results.len() - passed,
    };
    Ok(Outcome {
        results: Results::from_rows(&results)?.with_summary(&summary)?,
        ok,
    })
}
