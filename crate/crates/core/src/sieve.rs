//! Exact simulation of the Bernoulli sieve.
//!
//! Boxes are the intervals `(T_k, T_{k-1}]` of the multiplicative random walk
//! `T_k = W_1 ... W_k`. In log space the box edges are the partial sums
//! `S_k = |log W_1| + ... + |log W_k|`, and a ball `U` is represented by its
//! energy `E = -log U ~ Exp(1)`: it falls into box `k` iff `S_{k-1} <= E < S_k`.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::factor_models::{FactorDraw, FactorFamily, NormingCase};
use crate::rng::{stream, RandomStream};

/// Default bound on the number of balls in one run.
pub const DEFAULT_MAX_BALLS: u64 = 100_000_000;

#[derive(Debug, Clone)]
enum Source {
    Random {
        family: FactorFamily,
        rng: RandomStream,
    },
    Fixed,
}

/// Lazily extended realization of `(S_k)` and the marks `eta_k = |log(1 - W_k)|`.
#[derive(Debug, Clone)]
pub struct Environment {
    source: Source,
    seed: Option<u64>,
    /// `s[k] = S_k`, `s[0] = 0`.
    s: Vec<f64>,
    /// `eta[k - 1] = eta_k`.
    eta: Vec<f64>,
}

impl Environment {
    pub fn new(family: FactorFamily, seed: u64) -> Self {
        Environment {
            source: Source::Random {
                family,
                rng: stream(seed),
            },
            seed: Some(seed),
            s: vec![0.0],
            eta: Vec::new(),
        }
    }

    /// A finite environment made of explicit factors; it cannot be extended.
    pub fn from_factors(w: &[f64]) -> Result<Self> {
        if let Some(bad) = w.iter().find(|&&w| !(w > 0.0 && w < 1.0)) {
            return Err(Error::OutOfDomain(format!("factor {bad} not in (0, 1)")));
        }
        let mut env = Environment {
            source: Source::Fixed,
            seed: None,
            s: vec![0.0],
            eta: Vec::new(),
        };
        for &wk in w {
            env.push(FactorDraw::from_w(wk));
        }
        Ok(env)
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    fn push(&mut self, draw: FactorDraw) {
        let last = *self.s.last().unwrap();
        self.s.push(last + draw.neg_log_w);
        self.eta.push(draw.neg_log_1mw);
    }

    fn draw_one(&mut self) -> Result<()> {
        match &mut self.source {
            Source::Random { family, rng } => {
                let draw = family.sample_factor(rng);
                self.push(draw);
                Ok(())
            }
            Source::Fixed => Err(Error::InsufficientEnvironment(format!(
                "fixed environment has only {} factors",
                self.eta.len()
            ))),
        }
    }

    /// Number of factors drawn so far.
    pub fn len(&self) -> usize {
        self.eta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eta.is_empty()
    }

    /// Extend until at least `k` factors exist.
    pub fn extend_to_count(&mut self, k: usize) -> Result<()> {
        while self.eta.len() < k {
            self.draw_one()?;
        }
        Ok(())
    }

    /// Extend until the last partial sum exceeds `level`.
    pub fn extend_to_level(&mut self, level: f64) -> Result<()> {
        while self.eta.is_empty() || *self.s.last().unwrap() <= level {
            self.draw_one()?;
        }
        Ok(())
    }

    /// `S_0, S_1, ...` drawn so far.
    pub fn partial_sums(&self) -> &[f64] {
        &self.s
    }

    /// `eta_1, eta_2, ...` drawn so far.
    pub fn marks(&self) -> &[f64] {
        &self.eta
    }

    /// Box receiving a ball of energy `e`: the least `k >= 1` with `S_k > e`.
    pub fn box_index(&mut self, e: f64) -> Result<usize> {
        if !(e >= 0.0) {
            return Err(Error::OutOfDomain(format!("energy must be >= 0, got {e}")));
        }
        self.extend_to_level(e)?;
        Ok(self.s.partition_point(|&s| s <= e))
    }

    /// `nu(t) = #{k >= 0 : S_k <= t}`, the first index with `S_k > t`.
    pub fn first_passage(&mut self, t: f64) -> Result<usize> {
        self.extend_to_level(t)?;
        Ok(self.s.partition_point(|&s| s <= t))
    }
}

/// Occupancy statistics after `n` balls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct OccupancySnapshot {
    pub n: u64,
    /// occupied boxes
    #[serde(rename = "K")]
    pub k: u64,
    /// index of the last occupied box
    #[serde(rename = "M")]
    pub m: u64,
    /// empty boxes below `M`
    #[serde(rename = "L")]
    pub l: u64,
}

#[derive(Debug, Default)]
struct OccupancyCounter {
    occupied: Vec<bool>,
    n: u64,
    k: u64,
    m: u64,
}

impl OccupancyCounter {
    fn add(&mut self, index: usize) {
        if index >= self.occupied.len() {
            self.occupied.resize(index + 1, false);
        }
        if !self.occupied[index] {
            self.occupied[index] = true;
            self.k += 1;
        }
        self.m = self.m.max(index as u64);
        self.n += 1;
    }

    fn snapshot(&self) -> OccupancySnapshot {
        OccupancySnapshot {
            n: self.n,
            k: self.k,
            m: self.m,
            l: self.m - self.k,
        }
    }
}

fn check_grid(n_grid: &[u64], capacity: u64) -> Result<u64> {
    if n_grid.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::OutOfDomain("ball-count grid must be ascending".into()));
    }
    let n_max = n_grid.last().copied().unwrap_or(0);
    if n_max > capacity {
        return Err(Error::CapacityExceeded {
            requested: n_max,
            capacity,
        });
    }
    Ok(n_max)
}

/// Coupled occupancy snapshots for an ascending grid of ball counts, from an
/// explicit stream of ball energies.
pub fn occupancy_from_energies<I>(env: &mut Environment, n_grid: &[u64], energies: I) -> Result<Vec<OccupancySnapshot>>
where
    I: IntoIterator<Item = f64>,
{
    let n_max = check_grid(n_grid, u64::MAX)?;
    let mut energies = energies.into_iter();
    let mut counter = OccupancyCounter::default();
    let mut out = Vec::with_capacity(n_grid.len());
    let mut next = 0;
    while next < n_grid.len() && n_grid[next] == 0 {
        out.push(counter.snapshot());
        next += 1;
    }
    for _ in 0..n_max {
        let e = energies
            .next()
            .ok_or_else(|| Error::OutOfDomain("ran out of ball energies".into()))?;
        // Fast path: the environment already covers e.
        let s = env.partial_sums();
        let index = if e >= 0.0 && *s.last().unwrap() > e {
            s.partition_point(|&x| x <= e)
        } else {
            env.box_index(e)?
        };
        counter.add(index);
        while next < n_grid.len() && n_grid[next] == counter.n {
            out.push(counter.snapshot());
            next += 1;
        }
    }
    Ok(out)
}

/// Coupled occupancy snapshots on one environment and one ball stream.
///
/// Balls are processed once in arrival order; the snapshot at `n` is the
/// prefix statistic of the first `n` balls.
pub fn simulate_occupancy<R: Rng + ?Sized>(
    env: &mut Environment,
    n_grid: &[u64],
    rng: &mut R,
) -> Result<Vec<OccupancySnapshot>> {
    simulate_occupancy_capped(env, n_grid, rng, DEFAULT_MAX_BALLS)
}

pub fn simulate_occupancy_capped<R: Rng + ?Sized>(
    env: &mut Environment,
    n_grid: &[u64],
    rng: &mut R,
    capacity: u64,
) -> Result<Vec<OccupancySnapshot>> {
    check_grid(n_grid, capacity)?;
    let energies = std::iter::repeat_with(|| rng.sample::<f64, _>(Exp1));
    occupancy_from_energies(env, n_grid, energies)
}

/// How balls are dropped into the boxes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    /// One exponential energy per ball, processed in arrival order.
    #[default]
    Balls,
    /// Binomial thinning box by box, one batch per grid increment.
    Cascade,
}

pub fn simulate_occupancy_with<R: Rng + ?Sized>(
    engine: Engine,
    env: &mut Environment,
    n_grid: &[u64],
    rng: &mut R,
) -> Result<Vec<OccupancySnapshot>> {
    match engine {
        Engine::Balls => simulate_occupancy(env, n_grid, rng),
        Engine::Cascade => simulate_occupancy_cascade(env, n_grid, rng),
    }
}

/// Same joint law as [`simulate_occupancy`] at a cost independent of `n`.
///
/// The balls between consecutive grid points form a batch. A ball that got
/// past boxes `1..k` lands in box `k` with probability `1 - W_k`, so the
/// batch is split by successive binomial draws until it is exhausted.
pub fn simulate_occupancy_cascade<R: Rng + ?Sized>(
    env: &mut Environment,
    n_grid: &[u64],
    rng: &mut R,
) -> Result<Vec<OccupancySnapshot>> {
    check_grid(n_grid, u64::MAX)?;
    let mut counter = OccupancyCounter::default();
    let mut out = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let mut left = n - counter.n;
        let mut index = 1;
        while left > 0 {
            env.extend_to_count(index)?;
            let p = (-env.marks()[index - 1]).exp();
            let hits = if p >= 1.0 {
                left
            } else {
                Binomial::new(left, p)
                    .map_err(|e| Error::OutOfDomain(e.to_string()))?
                    .sample(rng)
            };
            if hits > 0 {
                counter.add(index);
                counter.n += hits - 1;
            }
            left -= hits;
            index += 1;
        }
        out.push(counter.snapshot());
    }
    Ok(out)
}

/// Naive reference allocation from explicit factors and uniforms.
///
/// Builds `T_k` as products and scans intervals `(T_k, T_{k-1}]` linearly.
pub fn occupancy_oracle(w: &[f64], u: &[f64]) -> Result<OccupancySnapshot> {
    if w.iter().any(|&w| !(w > 0.0 && w < 1.0)) || u.iter().any(|&u| !(u > 0.0 && u < 1.0)) {
        return Err(Error::OutOfDomain("factors and uniforms must lie in (0, 1)".into()));
    }
    let mut t = vec![1.0];
    for &wk in w {
        let last = *t.last().unwrap();
        t.push(last * wk);
    }
    let u_min = u.iter().copied().fold(f64::INFINITY, f64::min);
    if !u.is_empty() && *t.last().unwrap() >= u_min {
        return Err(Error::InsufficientEnvironment(format!(
            "T_{} = {} is not below min(u) = {}",
            w.len(),
            t.last().unwrap(),
            u_min
        )));
    }
    let mut counts = vec![0u64; w.len() + 1];
    for &ui in u {
        let k = (1..t.len()).find(|&k| t[k] < ui && ui <= t[k - 1]).unwrap();
        counts[k] += 1;
    }
    let k = counts.iter().filter(|&&c| c > 0).count() as u64;
    let m = counts.iter().rposition(|&c| c > 0).unwrap_or(0) as u64;
    Ok(OccupancySnapshot {
        n: u.len() as u64,
        k,
        m,
        l: m - k,
    })
}

/// `rho(t) = #{k >= 0 : S_k <= t < S_k + eta_{k+1}}`.
pub fn renewal_functional(env: &mut Environment, t: f64) -> Result<u64> {
    if !(t >= 0.0) {
        return Err(Error::OutOfDomain(format!("t must be >= 0, got {t}")));
    }
    env.extend_to_level(t)?;
    let s = env.partial_sums();
    let eta = env.marks();
    Ok(s.iter()
        .zip(eta)
        .take_while(|(&sk, _)| sk <= t)
        .filter(|(&sk, &e)| t < sk + e)
        .count() as u64)
}

/// Which limit theorem a statistic is normalized for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TheoremCase {
    Theorem1,
    Theorem2,
    Theorem3a,
    Theorem3b1,
    Theorem3b2,
    Theorem3c1,
    Theorem3c2,
}

/// Affine normalization `(L - center) / scale` for one `(t, u)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub center: f64,
    pub scale: f64,
}

impl Normalizer {
    pub fn new(family: &FactorFamily, case: TheoremCase, t: f64, u: f64) -> Result<Self> {
        let gaussian_center = || family.centering(u * t);
        match case {
            TheoremCase::Theorem1 => Ok(Normalizer { center: 0.0, scale: 1.0 }),
            TheoremCase::Theorem2 => Ok(Normalizer {
                center: 0.0,
                scale: 1.0 / family.theorem2_ratio(t)?,
            }),
            TheoremCase::Theorem3a | TheoremCase::Theorem3b1 | TheoremCase::Theorem3c1 => Ok(Normalizer {
                center: gaussian_center()?,
                scale: family.norming_q(t)?,
            }),
            TheoremCase::Theorem3b2 => Ok(Normalizer {
                center: gaussian_center()?,
                scale: family.norming_g(t, NormingCase::B2)?,
            }),
            TheoremCase::Theorem3c2 => Ok(Normalizer {
                center: gaussian_center()?,
                scale: family.norming_g(t, NormingCase::C2)?,
            }),
        }
    }

    pub fn apply(&self, l: f64) -> f64 {
        (l - self.center) / self.scale
    }
}

/// Standardized `L` (or `rho`) for the given theorem case at `n = [e^{ut}]`.
pub fn centered_l_statistic(l: f64, family: &FactorFamily, case: TheoremCase, t: f64, u: f64) -> Result<f64> {
    Ok(Normalizer::new(family, case, t, u)?.apply(l))
}

/// `[e^x]`, the ball count paired with log-scale `x`.
pub fn ball_count(x: f64) -> u64 {
    x.exp().floor() as u64
}
