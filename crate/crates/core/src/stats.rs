//! Goodness-of-fit and two-sample tests, distances, and moment estimators.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use statrs::function::gamma::gamma_ur;

use crate::error::{Error, Result};

const MIN_EXPECTED: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n_effective: usize,
    pub notes: String,
}

/// Probabilities on `0..=k_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePmf {
    probs: Vec<f64>,
}

impl DiscretePmf {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() || probs.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
            return Err(Error::OutOfDomain("probabilities must be finite and nonnegative".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::OutOfDomain(format!("probabilities sum to {total}")));
        }
        Ok(DiscretePmf { probs })
    }

    /// Empirical law of `samples`; values above `k_max` are folded into `k_max`.
    pub fn empirical(samples: &[u64], k_max: Option<u64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::TooFewSamples { got: 0, need: 1 });
        }
        let top = k_max.unwrap_or_else(|| *samples.iter().max().unwrap());
        let mut counts = vec![0u64; top as usize + 1];
        for &x in samples {
            counts[x.min(top) as usize] += 1;
        }
        let n = samples.len() as f64;
        Ok(DiscretePmf {
            probs: counts.into_iter().map(|c| c as f64 / n).collect(),
        })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn k_max(&self) -> u64 {
        self.probs.len() as u64 - 1
    }

    pub fn prob(&self, k: u64) -> f64 {
        self.probs.get(k as usize).copied().unwrap_or(0.0)
    }

    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(k, p)| k as f64 * p).sum()
    }
}

/// `P{k} = (c/(c+1)) (1/(c+1))^k`, with the mass of `{k >= k_max}` at `k_max`.
pub fn geometric_pmf(c: f64, k_max: u64) -> DiscretePmf {
    assert!(c > 0.0, "geometric parameter must be positive");
    let q = 1.0 / (c + 1.0);
    let mut probs: Vec<f64> = (0..k_max).map(|k| (1.0 - q) * q.powi(k as i32)).collect();
    probs.push(q.powi(k_max as i32));
    DiscretePmf { probs }
}

pub fn tv_distance(a: &DiscretePmf, b: &DiscretePmf) -> f64 {
    let n = a.probs.len().max(b.probs.len());
    0.5 * (0..n as u64).map(|k| (a.prob(k) - b.prob(k)).abs()).sum::<f64>()
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

pub fn chi2_survival(statistic: f64, dof: usize) -> f64 {
    if statistic <= 0.0 {
        return 1.0;
    }
    gamma_ur(dof as f64 / 2.0, statistic / 2.0).clamp(0.0, 1.0)
}

/// `P{sup |B| > lambda}` for the Brownian bridge.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.0 {
        let c = -std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda);
        let s: f64 = (1..=20)
            .map(|k| {
                let m = (2 * k - 1) as f64;
                (c * m * m).exp()
            })
            .sum();
        (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s).clamp(0.0, 1.0)
    } else {
        let s: f64 = (1..=100)
            .map(|k| {
                let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                sign * (-2.0 * (k * k) as f64 * lambda * lambda).exp()
            })
            .sum();
        (2.0 * s).clamp(0.0, 1.0)
    }
}

fn ks_p_value(d: f64, n_eff: f64) -> f64 {
    let sq = n_eff.sqrt();
    kolmogorov_survival((sq + 0.12 + 0.11 / sq) * d)
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

pub fn ks_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    if samples.len() < 10 {
        return Err(Error::TooFewSamples {
            got: samples.len(),
            need: 10,
        });
    }
    let xs = sorted(samples);
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < xs.len() {
        let mut j = i;
        while j + 1 < xs.len() && xs[j + 1] == xs[i] {
            j += 1;
        }
        let f = cdf(xs[i]);
        d = d.max((f - i as f64 / n).abs()).max(((j + 1) as f64 / n - f).abs());
        i = j + 1;
    }
    Ok(d)
}

pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<TestResult> {
    let d = ks_distance(samples, cdf)?;
    Ok(TestResult {
        statistic: d,
        p_value: ks_p_value(d, samples.len() as f64),
        n_effective: samples.len(),
        notes: "one-sample Kolmogorov-Smirnov".into(),
    })
}

pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<TestResult> {
    for s in [a, b] {
        if s.len() < 10 {
            return Err(Error::TooFewSamples { got: s.len(), need: 10 });
        }
    }
    let (xa, xb) = (sorted(a), sorted(b));
    let (na, nb) = (xa.len() as f64, xb.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < xa.len() && j < xb.len() {
        let x = xa[i].min(xb[j]);
        while i < xa.len() && xa[i] == x {
            i += 1;
        }
        while j < xb.len() && xb[j] == x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    if i < xa.len() || j < xb.len() {
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let n_eff = na * nb / (na + nb);
    Ok(TestResult {
        statistic: d,
        p_value: ks_p_value(d, n_eff),
        n_effective: n_eff.round() as usize,
        notes: "two-sample Kolmogorov-Smirnov".into(),
    })
}

/// Merge consecutive bins left to right until each holds expected weight at
/// least `MIN_EXPECTED`; a short remainder joins the last full bin.
fn merge_rightward(weights: &[f64]) -> Vec<std::ops::Range<usize>> {
    let mut bins = Vec::new();
    let mut start = 0;
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if acc >= MIN_EXPECTED {
            bins.push(start..i + 1);
            start = i + 1;
            acc = 0.0;
        }
    }
    if start < weights.len() {
        match bins.last_mut() {
            Some(last) => last.end = weights.len(),
            None => bins.push(start..weights.len()),
        }
    }
    bins
}

pub fn chi2_gof(samples: &[u64], reference: &DiscretePmf) -> Result<TestResult> {
    if samples.is_empty() {
        return Err(Error::TooFewSamples { got: 0, need: 1 });
    }
    let top = reference.k_max();
    let mut observed = vec![0f64; top as usize + 1];
    for &x in samples {
        observed[x.min(top) as usize] += 1.0;
    }
    let n = samples.len() as f64;
    let expected: Vec<f64> = reference.probs.iter().map(|p| n * p).collect();
    let bins = merge_rightward(&expected);
    if bins.len() < 2 {
        return Err(Error::DegenerateBins);
    }
    let mut stat = 0.0;
    for b in &bins {
        let o: f64 = observed[b.clone()].iter().sum();
        let e: f64 = expected[b.clone()].iter().sum();
        if e > 0.0 {
            stat += (o - e).powi(2) / e;
        } else if o > 0.0 {
            stat = f64::INFINITY;
        }
    }
    let dof = bins.len() - 1;
    Ok(TestResult {
        statistic: stat,
        p_value: if stat.is_finite() { chi2_survival(stat, dof) } else { 0.0 },
        n_effective: samples.len(),
        notes: format!("Pearson chi-square, {} bins", bins.len()),
    })
}

/// Pearson statistic of a two-row table with pooled expected counts.
fn two_row_statistic(a: &[f64], b: &[f64]) -> (f64, usize) {
    let (na, nb): (f64, f64) = (a.iter().sum(), b.iter().sum());
    let n = na + nb;
    let mut stat = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        let total = x + y;
        let (ea, eb) = (na * total / n, nb * total / n);
        stat += (x - ea).powi(2) / ea + (y - eb).powi(2) / eb;
    }
    (stat, a.len())
}

fn two_sample_result(a: Vec<f64>, b: Vec<f64>, notes: &str) -> Result<TestResult> {
    let (na, nb): (f64, f64) = (a.iter().sum(), b.iter().sum());
    let small = na.min(nb) / (na + nb);
    let weights: Vec<f64> = a.iter().zip(&b).map(|(x, y)| small * (x + y)).collect();
    let bins = merge_rightward(&weights);
    if bins.len() < 2 {
        return Err(Error::DegenerateBins);
    }
    let fold = |v: &[f64]| -> Vec<f64> { bins.iter().map(|r| v[r.clone()].iter().sum()).collect() };
    let (stat, k) = two_row_statistic(&fold(&a), &fold(&b));
    Ok(TestResult {
        statistic: stat,
        p_value: chi2_survival(stat, k - 1),
        n_effective: (na * nb / (na + nb)).round() as usize,
        notes: format!("{notes}, {k} bins"),
    })
}

pub fn chi2_two_sample(a: &[u64], b: &[u64]) -> Result<TestResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::TooFewSamples { got: 0, need: 1 });
    }
    let top = *a.iter().chain(b).max().unwrap() as usize;
    let mut ca = vec![0f64; top + 1];
    let mut cb = vec![0f64; top + 1];
    a.iter().for_each(|&x| ca[x as usize] += 1.0);
    b.iter().for_each(|&x| cb[x as usize] += 1.0);
    two_sample_result(ca, cb, "two-sample chi-square")
}

/// Two-sample chi-square on a joint law of integer tuples. Cells are ordered by
/// pooled frequency, most frequent first, and the rare tail is merged.
pub fn chi2_two_sample_joint<K: Ord + Clone>(a: &[K], b: &[K]) -> Result<TestResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::TooFewSamples { got: 0, need: 1 });
    }
    let mut cells: BTreeMap<K, (f64, f64)> = BTreeMap::new();
    a.iter().for_each(|k| cells.entry(k.clone()).or_default().0 += 1.0);
    b.iter().for_each(|k| cells.entry(k.clone()).or_default().1 += 1.0);
    let mut v: Vec<(f64, f64)> = cells.into_values().collect();
    v.sort_by(|x, y| (y.0 + y.1).total_cmp(&(x.0 + x.1)));
    let (ca, cb) = v.into_iter().unzip();
    two_sample_result(ca, cb, "joint two-sample chi-square")
}

/// Total variation between the empirical laws of two samples of arbitrary keys.
pub fn tv_distance_samples<K: Ord>(a: &[K], b: &[K]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::TooFewSamples { got: 0, need: 1 });
    }
    let mut cells: BTreeMap<&K, (f64, f64)> = BTreeMap::new();
    a.iter().for_each(|k| cells.entry(k).or_default().0 += 1.0);
    b.iter().for_each(|k| cells.entry(k).or_default().1 += 1.0);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    Ok(0.5 * cells.values().map(|&(x, y)| (x / na - y / nb).abs()).sum::<f64>())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceEstimate {
    pub cov: Vec<Vec<f64>>,
    pub se: Vec<Vec<f64>>,
}

/// Unbiased covariance of the columns of `rows` with jackknife standard errors.
pub fn empirical_cov(rows: &[Vec<f64>]) -> Result<CovarianceEstimate> {
    if rows.len() < 1000 {
        return Err(Error::TooFewSamples {
            got: rows.len(),
            need: 1000,
        });
    }
    let d = rows[0].len();
    if rows.iter().any(|r| r.len() != d) {
        return Err(Error::OutOfDomain("rows of unequal length".into()));
    }
    let n = rows.len() as f64;
    let means: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let mut cov = vec![vec![0.0; d]; d];
    let mut se = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in i..d {
            let x: Vec<f64> = rows.iter().map(|r| r[i] - means[i]).collect();
            let y: Vec<f64> = rows.iter().map(|r| r[j] - means[j]).collect();
            let (sx, sy): (f64, f64) = (x.iter().sum(), y.iter().sum());
            let sxy: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
            let c = (sxy - sx * sy / n) / (n - 1.0);
            let loo: Vec<f64> = x
                .iter()
                .zip(&y)
                .map(|(a, b)| ((sxy - a * b) - (sx - a) * (sy - b) / (n - 1.0)) / (n - 2.0))
                .collect();
            let m = loo.iter().sum::<f64>() / n;
            let var = (n - 1.0) / n * loo.iter().map(|t| (t - m).powi(2)).sum::<f64>();
            cov[i][j] = c;
            cov[j][i] = c;
            se[i][j] = var.sqrt();
            se[j][i] = var.sqrt();
        }
    }
    Ok(CovarianceEstimate { cov, se })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharFnEstimate {
    pub z: f64,
    pub value: Complex64,
    pub se_re: f64,
    pub se_im: f64,
}

pub fn empirical_char_fn(samples: &[f64], zs: &[f64]) -> Result<Vec<CharFnEstimate>> {
    if samples.len() < 10_000 {
        return Err(Error::TooFewSamples {
            got: samples.len(),
            need: 10_000,
        });
    }
    let n = samples.len() as f64;
    Ok(zs
        .iter()
        .map(|&z| {
            let (mut sc, mut ss, mut sc2, mut ss2) = (0.0, 0.0, 0.0, 0.0);
            for &x in samples {
                let (s, c) = (z * x).sin_cos();
                sc += c;
                ss += s;
                sc2 += c * c;
                ss2 += s * s;
            }
            let (mc, ms) = (sc / n, ss / n);
            let vc = (sc2 / n - mc * mc).max(0.0) * n / (n - 1.0);
            let vs = (ss2 / n - ms * ms).max(0.0) * n / (n - 1.0);
            CharFnEstimate {
                z,
                value: Complex64::new(mc, ms),
                se_re: (vc / n).sqrt(),
                se_im: (vs / n).sqrt(),
            }
        })
        .collect())
}
