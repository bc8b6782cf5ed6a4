use std::time::Instant;

use rand::Rng;
use rand_distr::{Distribution, Open01, StandardNormal, Uniform};
use rayon::prelude::*;
use statrs::function::beta::beta as beta_fn;
use statrs::function::gamma::gamma;

use super::config::{Scenario, ScenarioConfig};
use super::report::{LimitRow, NormingRecord, OccupancyRow, ScenarioReport, TestRecord};
use crate::error::{Error, Result};
use crate::factor_models::{FactorFamily, NormingCase, TailSpec};
use crate::limits::gaussian::covariance;
use crate::limits::subordinator::expected_crossing_time;
use crate::limits::{
    levy_driver_cf, sample_frac_integral_inverse, sample_frac_integral_levy, sample_levy_path, sample_straddles,
    Driver, VSampler,
};
use crate::poissonized::{poissonization_gap, sample_poisson, GapRecord};
use crate::rng::{child_seed, replicate_seed, stream, BALL_STREAM, ENVIRONMENT_STREAM, LIMIT_STREAM};
use crate::sieve::{
    ball_count, occupancy_from_energies, occupancy_oracle, simulate_occupancy_with, Environment, Normalizer,
    OccupancySnapshot, TheoremCase,
};
use crate::stats::{
    chi2_gof, chi2_two_sample, chi2_two_sample_joint, empirical_char_fn, empirical_cov, geometric_pmf,
    ks_test, ks_two_sample, normal_cdf, tv_distance, tv_distance_samples, DiscretePmf,
};

pub const WORKERS_ENV: &str = "SIEVELAB_WORKERS";

/// p-value below which a goodness-of-fit check fails.
pub const P_THRESHOLD: f64 = 1e-3;

/// Support cut-off for geometric comparisons; the folded tail is below 1e-60.
const GEOMETRIC_K_MAX: u64 = 200;

const CAL_ALPHA: f64 = 0.5;
const CAL_BETA: f64 = 0.4;
const CAL_STABLE: f64 = 1.5;
const CF_POINTS: [f64; 6] = [-2.0, -1.0, -0.5, 0.5, 1.0, 2.0];
const CF_TOLERANCE: f64 = 0.02;
const CF_SAMPLES: usize = 100_000;

/// Worker count from an explicit request, else `SIEVELAB_WORKERS`, else the
/// available parallelism.
pub fn resolve_workers(requested: Option<usize>) -> Result<usize> {
    if let Some(w) = requested {
        if w == 0 {
            return Err(Error::validation("workers", "must be at least 1"));
        }
        return Ok(w);
    }
    match std::env::var(WORKERS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&w| w > 0)
            .ok_or_else(|| Error::validation(WORKERS_ENV, format!("expected a positive integer, got {v:?}"))),
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

pub fn environment_seed(master: u64, replicate: u64) -> u64 {
    child_seed(replicate_seed(master, replicate), ENVIRONMENT_STREAM)
}

pub fn ball_seed(master: u64, replicate: u64) -> u64 {
    child_seed(replicate_seed(master, replicate), BALL_STREAM)
}

/// Seed of limit sample `index` for the limit-side draw labelled `tag`.
pub fn limit_seed(master: u64, index: u64, tag: u64) -> u64 {
    child_seed(child_seed(replicate_seed(master, index), LIMIT_STREAM), tag)
}

pub fn theorem_case(scenario: Scenario) -> Option<TheoremCase> {
    Some(match scenario {
        Scenario::Theorem1 => TheoremCase::Theorem1,
        Scenario::Theorem2 => TheoremCase::Theorem2,
        Scenario::Theorem3a => TheoremCase::Theorem3a,
        Scenario::Theorem3b1 => TheoremCase::Theorem3b1,
        Scenario::Theorem3b2 => TheoremCase::Theorem3b2,
        Scenario::Theorem3c1 => TheoremCase::Theorem3c1,
        Scenario::Theorem3c2 => TheoremCase::Theorem3c2,
        _ => return None,
    })
}

/// Coupled snapshots of one replicate at the ball counts of `points`.
pub fn replicate_snapshots(
    config: &ScenarioConfig,
    family: &FactorFamily,
    points: &[(f64, f64)],
    replicate: u64,
) -> Result<Vec<OccupancySnapshot>> {
    let counts: Vec<u64> = points.iter().map(|&(t, u)| ball_count(u * t)).collect();
    let mut grid = counts.clone();
    grid.sort_unstable();
    grid.dedup();
    let mut env = Environment::new(family.clone(), environment_seed(config.master_seed, replicate));
    let mut rng = stream(ball_seed(config.master_seed, replicate));
    let snaps = simulate_occupancy_with(config.engine, &mut env, &grid, &mut rng)?;
    Ok(counts.iter().map(|n| snaps[grid.binary_search(n).unwrap()]).collect())
}

/// Runs the scenario with the worker count from [`resolve_workers`].
pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioReport> {
    config.validate()?;
    let workers = resolve_workers(config.workers)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Unsupported(format!("thread pool: {e}")))?;
    let start = Instant::now();
    let mut run = Run {
        config,
        pool,
        report: ScenarioReport::new(config.clone()),
    };
    match config.scenario {
        Scenario::Theorem1 => run.theorem1()?,
        Scenario::Theorem2 => run.theorem2()?,
        Scenario::Theorem3a
        | Scenario::Theorem3b1
        | Scenario::Theorem3b2
        | Scenario::Theorem3c1
        | Scenario::Theorem3c2 => run.theorem3()?,
        Scenario::LemmaRed | Scenario::Depoisson => run.poissonized()?,
        Scenario::OracleEquiv => run.oracle_equiv()?,
        Scenario::LimitCalibration => run.limit_calibration()?,
    }
    let mut report = run.report;
    report.run.workers = workers;
    report.run.wall_clock_seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

struct Run<'a> {
    config: &'a ScenarioConfig,
    pool: rayon::ThreadPool,
    report: ScenarioReport,
}

/// One comparison of a sieve sample with its limit.
struct Point {
    t: f64,
    u: f64,
    l: Vec<u64>,
    stat: Vec<f64>,
}

impl Run<'_> {
    /// `f(0), .., f(n - 1)` on the pool, in index order.
    fn par_map<T, F>(&self, n: usize, f: F) -> Result<Vec<T>>
    where
        T: Send,
        F: Fn(u64) -> Result<T> + Sync + Send,
    {
        self.pool.install(|| {
            (0..n as u64)
                .into_par_iter()
                .map(|i| {
                    f(i).map_err(|e| Error::Replicate {
                        index: i,
                        source: Box::new(e),
                    })
                })
                .collect()
        })
    }

    fn push(&mut self, test: impl Into<String>, statistic: f64, p_value: Option<f64>, threshold: Option<f64>, pass: bool, gating: bool, note: impl Into<String>) {
        self.report.tests.push(TestRecord {
            scenario: self.config.scenario,
            test: test.into(),
            statistic,
            p_value,
            threshold,
            pass,
            gating,
            note: note.into(),
        });
    }

    /// Record a p-value test that passes above [`P_THRESHOLD`].
    fn push_p(&mut self, test: impl Into<String>, statistic: f64, p: f64, gating: bool, note: impl Into<String>) {
        self.push(test, statistic, Some(p), Some(P_THRESHOLD), p > P_THRESHOLD, gating, note);
    }

    /// Record a distance that passes below `threshold`.
    fn push_below(&mut self, test: impl Into<String>, statistic: f64, threshold: f64, gating: bool, note: impl Into<String>) {
        self.push(test, statistic, None, Some(threshold), statistic < threshold, gating, note);
    }

    /// Gate on `values` strictly decreasing, optionally with the last one below `threshold`.
    fn push_trend(&mut self, test: impl Into<String>, values: &[(f64, f64)], threshold: Option<f64>) {
        let Some(&(_, last)) = values.last() else {
            return;
        };
        let decreasing = values.windows(2).all(|w| w[1].1 < w[0].1);
        let pass = values.len() >= 2 && decreasing && threshold.is_none_or(|h| last < h);
        let note = values.iter().map(|(t, v)| format!("t={t}: {v:.6}")).collect::<Vec<_>>().join(", ");
        self.push(test, last, None, threshold, pass, true, note);
    }

    /// Statistics that cannot be computed on the sample at hand become a failed
    /// record instead of aborting the run.
    fn guard<T>(&mut self, test: &str, gating: bool, r: Result<T>) -> Result<Option<T>> {
        match r {
            Ok(v) => Ok(Some(v)),
            Err(e @ (Error::DegenerateBins | Error::TooFewSamples { .. })) => {
                self.push(test, 0.0, None, None, false, gating, format!("not computed: {e}"));
                Ok(None)
            }
            Err(e) => Err(e),
        }
    }

    fn family(&self) -> Result<FactorFamily> {
        self.config.factor_family()
    }

    /// Simulates the sieve on the grid and records occupancy rows and norming constants.
    fn sieve_points(&mut self, family: &FactorFamily) -> Result<Vec<Point>> {
        let config = self.config;
        let case = theorem_case(config.scenario).expect("sieve scenarios have a theorem case");
        let coords = config.grid_points();
        let normalizers = coords
            .iter()
            .map(|&(t, u)| Normalizer::new(family, case, t, u))
            .collect::<Result<Vec<_>>>()?;
        for (&(t, u), nz) in coords.iter().zip(&normalizers) {
            self.report.norming.push(norming_record(family, config.scenario, t, u, nz));
        }
        let runs = self.par_map(config.replicates, |i| replicate_snapshots(config, family, &coords, i))?;
        let mut points: Vec<Point> = coords
            .iter()
            .map(|&(t, u)| Point {
                t,
                u,
                l: Vec::with_capacity(runs.len()),
                stat: Vec::with_capacity(runs.len()),
            })
            .collect();
        for (i, snaps) in runs.iter().enumerate() {
            for ((p, s), nz) in points.iter_mut().zip(snaps).zip(&normalizers) {
                let stat = nz.apply(s.l as f64);
                p.l.push(s.l);
                p.stat.push(stat);
                self.report.occupancy.push(OccupancyRow {
                    scenario: config.scenario,
                    t: p.t,
                    u: p.u,
                    replicate: i as u64,
                    n: s.n,
                    k: s.k,
                    m: s.m,
                    l: s.l,
                    statistic: stat,
                });
            }
        }
        Ok(points)
    }

    fn push_limits(&mut self, u: f64, values: &[f64]) {
        let scenario = self.config.scenario;
        self.report.limits.extend(values.iter().enumerate().map(|(j, &value)| LimitRow {
            scenario,
            u,
            sample_index: j as u64,
            value,
        }));
    }

    fn theorem1(&mut self) -> Result<()> {
        let family = self.family()?;
        let profile = family.profile();
        let (alpha, c) = (profile.alpha, profile.c_ratio.ok_or(Error::Unsupported("no tail ratio".into()))?);
        let points = self.sieve_points(&family)?;
        let us = distinct_u(&points);
        let (delta_factor, master) = (self.config.delta_factor, self.config.master_seed);
        let level = us.last().copied().unwrap_or(1.0);
        let u_min = us.first().copied().unwrap_or(1.0);
        let limit = self.par_map(self.config.limit_samples, |j| {
            let mut rng = stream(limit_seed(master, j, 0));
            let set = sample_straddles(alpha, c, level, delta_factor * u_min, &mut rng)?;
            Ok(us.iter().map(|&u| set.count(u, delta_factor * u)).collect::<Vec<u64>>())
        })?;
        for (k, &u) in us.iter().enumerate() {
            let values: Vec<f64> = limit.iter().map(|r| r[k] as f64).collect();
            self.push_limits(u, &values);
        }
        let geometric = geometric_pmf(c, GEOMETRIC_K_MAX);
        let mut trend = Vec::new();
        for p in &points {
            let tag = format!("t{}_u{}", p.t, p.u);
            let name = format!("chi2_geometric_{tag}");
            if let Some(gof) = self.guard(&name, false, chi2_gof(&p.l, &geometric))? {
                self.push_p(name, gof.statistic, gof.p_value, false, gof.notes);
            }
            let tv = tv_distance(&DiscretePmf::empirical(&p.l, Some(GEOMETRIC_K_MAX))?, &geometric);
            self.push_below(format!("tv_geometric_{tag}"), tv, 0.15, false, "");
            if !limit.is_empty() {
                let k = us.iter().position(|&u| u == p.u).unwrap();
                let r: Vec<u64> = limit.iter().map(|x| x[k]).collect();
                let name = format!("chi2_limit_{tag}");
                if let Some(two) = self.guard(&name, false, chi2_two_sample(&p.l, &r))? {
                    self.push_p(name, two.statistic, two.p_value, false, two.notes);
                }
            }
            if p.u == us[0] {
                trend.push((p.t, tv));
            }
        }
        if let Some(u0) = us.first() {
            self.push_trend(format!("tv_geometric_trend_u{u0}"), &trend, Some(0.15));
        }

        // joint law at the smallest t and the two smallest u
        let t0 = self.config.t_grid[0];
        let at_t0: Vec<&Point> = points.iter().filter(|p| p.t == t0).collect();
        if at_t0.len() >= 2 && !limit.is_empty() {
            let (a, b) = (at_t0[0], at_t0[1]);
            let (ka, kb) = (
                us.iter().position(|&u| u == a.u).unwrap(),
                us.iter().position(|&u| u == b.u).unwrap(),
            );
            let sieve: Vec<(u64, u64)> = a.l.iter().copied().zip(b.l.iter().copied()).collect();
            let lim: Vec<(u64, u64)> = limit.iter().map(|r| (r[ka], r[kb])).collect();
            let tv = tv_distance_samples(&sieve, &lim)?;
            let (statistic, p, notes) = match chi2_two_sample_joint(&sieve, &lim) {
                Ok(chi) => (chi.statistic, chi.p_value, chi.notes),
                Err(Error::DegenerateBins) => (0.0, 0.0, "chi-square not computable".to_string()),
                Err(e) => return Err(e),
            };
            let pass = p > P_THRESHOLD || tv < 0.2;
            let note = format!("u = ({}, {}); 2D TV {tv:.4}; {notes}; passes on p > 0.001 or TV < 0.2", a.u, b.u);
            self.push(format!("joint_t{t0}"), statistic, Some(p), Some(P_THRESHOLD), pass, true, note);
        }
        Ok(())
    }

    fn theorem2(&mut self) -> Result<()> {
        let family = self.family()?;
        let (alpha, beta) = (family.profile().alpha, family.profile().beta);
        let points = self.sieve_points(&family)?;
        let us = distinct_u(&points);
        let limit = self.frac_inverse_samples(alpha, beta, &us, 0)?;
        for (u, w) in us.iter().zip(&limit) {
            self.push_limits(*u, w);
        }
        let t_max = points.iter().map(|p| p.t).fold(f64::NEG_INFINITY, f64::max);
        for (k, &u) in us.iter().enumerate() {
            let exact = u.powf(alpha - beta) * beta_fn(alpha, 1.0 - beta) / (gamma(alpha) * gamma(1.0 - alpha));
            if limit[k].len() >= 2 {
                let m = mean(&limit[k]);
                self.push_below(format!("limit_mean_closed_form_u{u}"), (m / exact - 1.0).abs(), 0.02, false, format!("simulated {m:.5}, closed form {exact:.5}"));
            }
        }
        for p in &points {
            let k = us.iter().position(|&u| u == p.u).unwrap();
            if limit[k].len() < 10 {
                continue;
            }
            let gating = p.t == t_max && p.u == us[0];
            let tag = format!("t{}_u{}", p.t, p.u);
            let (ms, ml) = (mean(&p.stat), mean(&limit[k]));
            let rel = (ms / ml - 1.0).abs();
            self.push_below(format!("mean_{tag}"), rel, 0.15, gating, format!("sieve {ms:.5}, limit {ml:.5}"));
            let name = format!("ks_limit_{tag}");
            if let Some(ks) = self.guard(&name, gating, ks_two_sample(&p.stat, &limit[k]))? {
                self.push_below(name, ks.statistic, 0.2, gating, format!("p = {:.3e}", ks.p_value));
            }
        }
        Ok(())
    }

    /// `int (u - s)^-gamma dX^<-(s)` at each `u`, `limit_samples` draws per `u`.
    fn frac_inverse_samples(&self, alpha: f64, gamma_exponent: f64, us: &[f64], tag: u64) -> Result<Vec<Vec<f64>>> {
        let (master, step_factor) = (self.config.master_seed, self.config.step_factor);
        us.iter()
            .enumerate()
            .map(|(k, &u)| {
                let step = step_factor * expected_crossing_time(alpha, u);
                self.par_map(self.config.limit_samples, |j| {
                    let mut rng = stream(limit_seed(master, j, tag + k as u64));
                    sample_frac_integral_inverse(alpha, gamma_exponent, u, step, &mut rng)
                })
            })
            .collect()
    }

    fn theorem3(&mut self) -> Result<()> {
        let scenario = self.config.scenario;
        let family = self.family()?;
        let spec = *family.spec();
        let beta = spec.right.index();
        let master = self.config.master_seed;
        if scenario == Scenario::Theorem3c2 {
            let TailSpec::Pareto { alpha } = spec.left else { unreachable!("validated") };
            if !self.stable_cf_check(alpha, 0)? {
                self.push("sieve_comparison", 0.0, None, None, false, true, "skipped: stable driver failed its characteristic-function check");
                return Ok(());
            }
        }
        if matches!(scenario, Scenario::Theorem3b2 | Scenario::Theorem3c2) {
            let case = if scenario == Scenario::Theorem3b2 { NormingCase::B2 } else { NormingCase::C2 };
            for &t in &self.config.t_grid.clone() {
                let c = family.norming_c(t)?;
                let r = family.norming_c_residual(t, c)?;
                self.push_below(format!("norming_c_residual_t{t}"), r, 1e-9, true, format!("c(t) = {c:.10e}, g(t) = {:.6e}", family.norming_g(t, case)?));
            }
        }
        let points = self.sieve_points(&family)?;
        let us = distinct_u(&points);

        // limit side, and the marginal variance when it is Gaussian
        let (limit, variance): (Vec<Vec<f64>>, Option<Box<dyn Fn(f64) -> f64>>) = match scenario {
            Scenario::Theorem3a | Scenario::Theorem3b1 | Scenario::Theorem3c1 => {
                let sampler = if us.is_empty() { None } else { Some(VSampler::new(beta, &us)?) };
                let rows = self.par_map(self.config.limit_samples, |j| {
                    let mut rng = stream(limit_seed(master, j, 0));
                    Ok(sampler.as_ref().map(|s| s.sample(&mut rng).values).unwrap_or_default())
                })?;
                let cols = (0..us.len()).map(|k| rows.iter().map(|r| r[k]).collect()).collect();
                (cols, Some(Box::new(move |u: f64| u.powf(1.0 - beta))))
            }
            _ => {
                let driver = match spec.left {
                    TailSpec::Pareto { alpha } => Driver::Stable { alpha },
                    _ => Driver::Brownian,
                };
                let levy_steps = self.config.levy_steps;
                let cols = us
                    .iter()
                    .enumerate()
                    .map(|(k, &u)| {
                        self.par_map(self.config.limit_samples, |j| {
                            let mut rng = stream(limit_seed(master, j, k as u64));
                            sample_frac_integral_levy(driver, beta, u, u / levy_steps, &mut rng)
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                let var: Option<Box<dyn Fn(f64) -> f64>> = match driver {
                    Driver::Brownian => Some(Box::new(move |u: f64| u.powf(1.0 - 2.0 * beta) / (1.0 - 2.0 * beta))),
                    Driver::Stable { .. } => None,
                };
                (cols, var)
            }
        };
        for (u, v) in us.iter().zip(&limit) {
            self.push_limits(*u, v);
        }
        let gate_trend = scenario == Scenario::Theorem3a;
        let mut trend = Vec::new();
        for p in &points {
            let k = us.iter().position(|&u| u == p.u).unwrap();
            let tag = format!("t{}_u{}", p.t, p.u);
            let (m, sd) = (mean(&p.stat), std_dev(&p.stat));
            let moments = format!("mean {m:.4}, sd {sd:.4}");
            if let Some(var) = &variance {
                let s = var(p.u).sqrt();
                let name = format!("ks_normal_{tag}");
                if let Some(ks) = self.guard(&name, false, ks_test(&p.stat, |x| normal_cdf(x / s)))? {
                    self.push_below(name, ks.statistic, 0.15, false, format!("{moments}, limit sd {s:.4}"));
                    if p.u == us[0] {
                        trend.push((p.t, ks.statistic));
                    }
                }
            }
            if limit[k].len() >= 10 {
                let name = format!("ks_limit_{tag}");
                if let Some(ks) = self.guard(&name, false, ks_two_sample(&p.stat, &limit[k]))? {
                    self.push_below(name, ks.statistic, 0.15, false, moments);
                }
            }
        }
        if let (true, Some(u0)) = (gate_trend, us.first()) {
            self.push_trend(format!("ks_normal_trend_u{u0}"), &trend, Some(0.15));
        }
        Ok(())
    }

    /// Empirical cf of unit increments of the stable driver against its closed form.
    fn stable_cf_check(&mut self, alpha: f64, tag: u64) -> Result<bool> {
        let n = CF_SAMPLES;
        let mut rng = stream(limit_seed(self.config.master_seed, 0, 1000 + tag));
        let path = sample_levy_path(Driver::Stable { alpha }, n as f64, 1.0, &mut rng)?;
        let increments: Vec<f64> = path.values.windows(2).map(|w| w[1] - w[0]).collect();
        let mut worst: f64 = 0.0;
        let mut note = Vec::new();
        let name = format!("stable_cf_alpha{alpha}");
        let Some(estimates) = self.guard(&name, true, empirical_char_fn(&increments, &CF_POINTS))? else {
            return Ok(false);
        };
        for est in estimates {
            let exact = levy_driver_cf(alpha, est.z);
            let err = (est.value.re - exact.re).abs().max((est.value.im - exact.im).abs());
            worst = worst.max(err);
            note.push(format!("z={}: {:.4}{:+.4}i vs {:.4}{:+.4}i", est.z, est.value.re, est.value.im, exact.re, exact.im));
        }
        self.push_below(name, worst, CF_TOLERANCE, true, note.join("; "));
        Ok(worst < CF_TOLERANCE)
    }

    fn poissonized(&mut self) -> Result<()> {
        let config = self.config;
        let family = self.family()?;
        let ts = config.t_grid.clone();
        let runs = self.par_map(config.replicates, |i| {
            let mut env = Environment::new(family.clone(), environment_seed(config.master_seed, i));
            let mut rng = stream(ball_seed(config.master_seed, i));
            ts.iter()
                .map(|&t| poissonization_gap(config.engine, &mut env, t, &mut rng))
                .collect::<Result<Vec<GapRecord>>>()
        })?;
        let n = runs.len() as f64;
        let mut trend = Vec::new();
        for (k, &t) in ts.iter().enumerate() {
            let recs: Vec<&GapRecord> = runs.iter().map(|r| &r[k]).collect();
            if config.scenario == Scenario::LemmaRed {
                let mut abs: Vec<f64> = recs.iter().map(|r| r.gap.unsigned_abs() as f64).collect();
                let m = abs.iter().sum::<f64>() / n;
                abs.sort_by(f64::total_cmp);
                let q99 = abs[((0.99 * n) as usize).min(abs.len() - 1)];
                self.push(format!("mean_abs_gap_t{t}"), m, None, None, true, false, format!("se {:.4}", std_dev(&abs) / n.sqrt()));
                self.push(format!("abs_gap_q99_t{t}"), q99, None, None, true, false, "tightness");
                trend.push((t, m));
            } else {
                let frac = recs.iter().filter(|r| r.depoisson_gap() != 0).count() as f64 / n;
                self.push(format!("p_gap_nonzero_t{t}"), frac, None, None, true, false, format!("se {:.4}", (frac * (1.0 - frac) / n).sqrt()));
                trend.push((t, frac));
            }
        }
        let name = if config.scenario == Scenario::LemmaRed { "mean_abs_gap_trend" } else { "p_gap_nonzero_trend" };
        self.push_trend(name, &trend, None);
        self.report.poissonized = runs.into_iter().flatten().collect();
        Ok(())
    }

    fn oracle_equiv(&mut self) -> Result<()> {
        let master = self.config.master_seed;
        let matches = self.par_map(self.config.replicates, |i| {
            let mut rng = stream(ball_seed(master, i));
            oracle_instance(&mut rng)
        })?;
        let bad = matches.iter().filter(|&&m| !m).count();
        let first = matches.iter().position(|&m| !m).map_or(String::new(), |i| format!("first mismatch at instance {i}"));
        self.push("oracle_mismatches", bad as f64, None, Some(0.0), bad == 0, true, format!("{} instances; {first}", matches.len()));
        Ok(())
    }

    fn limit_calibration(&mut self) -> Result<()> {
        let n = self.config.limit_samples;
        let master = self.config.master_seed;
        let df = self.config.delta_factor;

        // straddle counts: c = 1 at three truncation levels, c = 3, and an independent u = e sample
        let counts = self.par_map(n, |j| {
            let mut rng = stream(limit_seed(master, j, 0));
            let fine = df.min(1e-3);
            let s = sample_straddles(CAL_ALPHA, 1.0, 1.0, fine, &mut rng)?;
            let c3 = sample_straddles(CAL_ALPHA, 3.0, 1.0, df, &mut stream(limit_seed(master, j, 1)))?.count(1.0, df);
            let e = std::f64::consts::E;
            let at_e = sample_straddles(CAL_ALPHA, 1.0, e, df * e, &mut stream(limit_seed(master, j, 2)))?.count(e, df * e);
            Ok([s.count(1.0, df), s.count(1.0, 1e-3), s.count(1.0, 1e-2), c3, at_e])
        })?;
        let column = |k: usize| counts.iter().map(|r| r[k]).collect::<Vec<u64>>();
        let r1 = column(0);
        self.push_limits(1.0, &r1.iter().map(|&x| x as f64).collect::<Vec<_>>());
        for (c, xs) in [(1.0, &r1), (3.0, &column(3))] {
            let g = geometric_pmf(c, GEOMETRIC_K_MAX);
            let name = format!("r_chi2_c{c}");
            if let Some(gof) = self.guard(&name, true, chi2_gof(xs, &g))? {
                self.push_p(name, gof.statistic, gof.p_value, true, gof.notes);
            }
            let tv = tv_distance(&DiscretePmf::empirical(xs, Some(GEOMETRIC_K_MAX))?, &g);
            self.push_below(format!("r_tv_c{c}"), tv, 0.01, true, "");
        }
        let g1 = geometric_pmf(1.0, GEOMETRIC_K_MAX);
        let tv_at = |xs: &[u64]| DiscretePmf::empirical(xs, Some(GEOMETRIC_K_MAX)).map(|e| tv_distance(&e, &g1));
        let (tv2, tv3) = (tv_at(&column(2))?, tv_at(&column(1))?);
        self.push_below("r_tv_delta_1e-2", tv2, 0.01, false, "");
        self.push_below("r_tv_delta_1e-3", tv3, 0.01, false, "");
        self.push("r_tv_delta_improves", tv3, None, Some(tv2), tv3 <= tv2, false, "TV at delta 1e-3 against TV at delta 1e-2");
        if let Some(stat) = self.guard("r_stationarity_u1_ue", true, chi2_two_sample(&r1, &column(4)))? {
            self.push_p("r_stationarity_u1_ue", stat.statistic, stat.p_value, true, stat.notes);
        }

        // exponential integral and its mixed Poisson
        let step = self.config.step_factor * expected_crossing_time(CAL_ALPHA, 1.0);
        let pairs = self.par_map(n, |j| {
            let mut rng = stream(limit_seed(master, j, 3));
            let x = sample_frac_integral_inverse(CAL_ALPHA, CAL_ALPHA, 1.0, step, &mut rng)?;
            Ok((x, sample_poisson(x, &mut rng)?))
        })?;
        let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let exp_cdf = |x: f64| if x > 0.0 { -(-x).exp_m1() } else { 0.0 };
        if let Some(ks) = self.guard("exp_integral_ks", true, ks_test(&xs, exp_cdf))? {
            self.push_below("exp_integral_ks", ks.statistic, 0.02, true, format!("p = {:.3e}", ks.p_value));
        }
        let mixed: Vec<u64> = pairs.iter().map(|p| p.1).collect();
        if let Some(gof) = self.guard("mixed_poisson_chi2", true, chi2_gof(&mixed, &g1))? {
            self.push_p("mixed_poisson_chi2", gof.statistic, gof.p_value, true, gof.notes);
        }

        // Gaussian covariance and the fractional Brownian motion cross-check
        let grid = [1.0, 2.0];
        let sampler = VSampler::new(CAL_BETA, &grid)?;
        let rows = self.par_map(n, |j| {
            let mut rng = stream(limit_seed(master, j, 4));
            let v = sampler.sample(&mut rng).values;
            let z1: f64 = rng.sample(StandardNormal);
            let z2: f64 = rng.sample(StandardNormal);
            let b1 = z1;
            let b2 = z1 + (2f64.powf(1.0 - CAL_BETA) - 1.0).sqrt() * z2;
            Ok([v[0], v[1], v[0] + b1, v[1] + b2])
        })?;
        let v_rows: Vec<Vec<f64>> = rows.iter().map(|r| r[..2].to_vec()).collect();
        let f_rows: Vec<Vec<f64>> = rows.iter().map(|r| r[2..].to_vec()).collect();
        let fbm = |s: f64, t: f64| {
            let (s, t) = (s.min(t), s.max(t));
            t.powf(1.0 - CAL_BETA) + s.powf(1.0 - CAL_BETA) - (t - s).powf(1.0 - CAL_BETA)
        };
        self.covariance_check("v_covariance", &v_rows, &grid, &|s, t| covariance(CAL_BETA, s, t))?;
        self.covariance_check("fbm_covariance", &f_rows, &grid, &fbm)?;

        // stable driver
        self.stable_cf_check(CAL_STABLE, 0)?;
        let mut rng = stream(limit_seed(master, 0, 5));
        let coarse = sample_levy_path(Driver::Stable { alpha: CAL_STABLE }, n as f64, 1.0, &mut rng)?;
        let fine = sample_levy_path(Driver::Stable { alpha: CAL_STABLE }, n as f64, 0.5, &mut rng)?;
        let a: Vec<f64> = coarse.values.windows(2).map(|w| w[1] - w[0]).collect();
        let b: Vec<f64> = fine.values.iter().step_by(2).collect::<Vec<_>>().windows(2).map(|w| w[1] - w[0]).collect();
        if let Some(ks) = self.guard("stable_increment_additivity", true, ks_two_sample(&a, &b))? {
            self.push_below("stable_increment_additivity", ks.statistic, 0.02, true, format!("p = {:.3e}", ks.p_value));
        }
        Ok(())
    }

    fn covariance_check(&mut self, name: &str, rows: &[Vec<f64>], grid: &[f64], exact: &dyn Fn(f64, f64) -> f64) -> Result<()> {
        let Some(est) = self.guard(name, true, empirical_cov(rows))? else {
            return Ok(());
        };
        let mut worst: f64 = 0.0;
        let mut note = Vec::new();
        for i in 0..grid.len() {
            for j in i..grid.len() {
                let want = exact(grid[i], grid[j]);
                let z = (est.cov[i][j] - want).abs() / est.se[i][j];
                worst = worst.max(z);
                note.push(format!("({i},{j}): {:.4} vs {want:.4}", est.cov[i][j]));
            }
        }
        self.push_below(name, worst, 4.0, true, format!("max |error| / SE; {}", note.join(", ")));
        Ok(())
    }
}

/// One random small instance: fast allocation against the naive oracle.
pub fn oracle_instance<R: Rng + ?Sized>(rng: &mut R) -> Result<bool> {
    let n = rng.random_range(1..=50usize);
    let u: Vec<f64> = (0..n).map(|_| rng.sample(Open01)).collect();
    let u_min = u.iter().copied().fold(1.0, f64::min);
    let factor = Uniform::new(0.02, 0.98).map_err(|e| Error::OutOfDomain(e.to_string()))?;
    let mut w = Vec::new();
    let mut product = 1.0;
    while product >= u_min {
        let x = factor.sample(rng);
        product *= x;
        w.push(x);
    }
    let mut env = Environment::from_factors(&w)?;
    let fast = occupancy_from_energies(&mut env, &[n as u64], u.iter().map(|x| -x.ln()))?;
    Ok(fast[0] == occupancy_oracle(&w, &u)?)
}

fn norming_record(family: &FactorFamily, scenario: Scenario, t: f64, u: f64, nz: &Normalizer) -> NormingRecord {
    let mu = family.mean_log_factor().finite();
    let mut r = NormingRecord {
        t,
        u,
        center: nz.center,
        scale: nz.scale,
        mu: None,
        c_ratio: None,
        c_t: None,
        q_t: None,
        g_t: None,
        ratio: None,
    };
    match scenario {
        Scenario::Theorem1 => r.c_ratio = family.profile().c_ratio,
        Scenario::Theorem2 => r.ratio = family.theorem2_ratio(t).ok(),
        Scenario::Theorem3a | Scenario::Theorem3b1 | Scenario::Theorem3c1 => {
            r.mu = mu;
            r.q_t = family.norming_q(t).ok();
        }
        Scenario::Theorem3b2 | Scenario::Theorem3c2 => {
            let case = if scenario == Scenario::Theorem3b2 { NormingCase::B2 } else { NormingCase::C2 };
            r.mu = mu;
            r.c_t = family.norming_c(t).ok();
            r.g_t = family.norming_g(t, case).ok();
        }
        _ => {}
    }
    r
}

fn distinct_u(points: &[Point]) -> Vec<f64> {
    let mut us: Vec<f64> = points.iter().map(|p| p.u).collect();
    us.sort_by(f64::total_cmp);
    us.dedup();
    us
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn std_dev(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sieve::simulate_occupancy;

    fn small(scenario: Scenario) -> ScenarioConfig {
        let mut c = ScenarioConfig::defaults(scenario);
        c.replicates = 50;
        c.limit_samples = 200;
        c.t_grid = match scenario {
            Scenario::Theorem3b2 | Scenario::Theorem3c2 => vec![5.0, 6.0],
            _ => vec![3.0, 4.0],
        };
        c.workers = Some(2);
        c
    }

    #[test]
    fn one_replicate_matches_direct_calls() {
        let mut c = small(Scenario::Theorem1);
        c.replicates = 1;
        c.limit_samples = 0;
        let report = run_scenario(&c).unwrap();
        let fam = c.factor_family().unwrap();
        let mut env = Environment::new(fam, child_seed(replicate_seed(c.master_seed, 0), ENVIRONMENT_STREAM));
        let mut rng = stream(child_seed(replicate_seed(c.master_seed, 0), BALL_STREAM));
        let grid: Vec<u64> = [3.0, 4.0, 6.0, 8.0].iter().map(|&x| ball_count(x)).collect();
        let snaps = simulate_occupancy(&mut env, &grid, &mut rng).unwrap();
        let got: Vec<(u64, u64)> = report.occupancy.iter().map(|r| (r.n, r.l)).collect();
        // points come out as (3,1), (3,2), (4,1), (4,2)
        let want = vec![(snaps[0].n, snaps[0].l), (snaps[2].n, snaps[2].l), (snaps[1].n, snaps[1].l), (snaps[3].n, snaps[3].l)];
        assert_eq!(got, want);
    }

    #[test]
    fn every_scenario_runs_small() {
        for s in Scenario::ALL {
            let mut c = small(s);
            if s == Scenario::LimitCalibration {
                c.limit_samples = 10_000;
                c.step_factor = 1e-2;
            }
            if s == Scenario::Theorem3c2 {
                c.levy_steps = 20.0;
            }
            let r = run_scenario(&c).unwrap_or_else(|e| panic!("{s}: {e}"));
            assert!(!r.tests.is_empty(), "{s}");
            let sieve = theorem_case(s).is_some();
            if sieve {
                assert_eq!(r.occupancy.len(), c.replicates * c.grid_points().len(), "{s}");
                assert_eq!(r.norming.len(), c.grid_points().len());
            }
        }
    }

    #[test]
    fn workers_resolution() {
        assert_eq!(resolve_workers(Some(3)).unwrap(), 3);
        assert!(resolve_workers(Some(0)).is_err());
    }

    #[test]
    fn oracle_instances_agree() {
        let mut rng = stream(5);
        for _ in 0..200 {
            assert!(oracle_instance(&mut rng).unwrap());
        }
    }
}
