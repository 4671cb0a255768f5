//! Monte Carlo oracle for the operational semantics.
//!
//! Run `i` draws from its own `ChaCha8Rng` seeded with `seed ^ i`: first the
//! initial state, then per step the random variables in declaration order
//! followed by one uniform for the branch. Per-run values are kept by run
//! index and reduced by pairwise summation, so results do not depend on the
//! number of workers.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::moments::Distribution;
use crate::poly::{q_to_f64, Scalar, Q};
use crate::preexp::{preexp_pts, LocPoly};
use crate::pts::{Configuration, Pts, PtsError, Transition};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid run configuration: {0}")]
    Config(String),
    #[error("run {run}, step {step}: {source}")]
    Runtime {
        run: u64,
        step: u64,
        #[source]
        source: PtsError,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub enum Stop {
    /// Reaching the final location.
    Final,
    /// The first configuration where the polynomial is negative.
    Negative(LocPoly),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub runs: u64,
    pub max_steps: u64,
    pub seed: u64,
    pub stop: Stop,
    /// Worker threads; 0 uses the global pool.
    pub workers: usize,
    /// Simulate with exact rationals (random samples are converted exactly).
    pub exact: bool,
}

impl RunConfig {
    pub fn new(runs: u64, max_steps: u64, seed: u64) -> Result<Self, SimError> {
        if runs == 0 {
            return Err(SimError::Config("runs must be positive".into()));
        }
        if max_steps == 0 {
            return Err(SimError::Config("max_steps must be at least 1".into()));
        }
        Ok(Self {
            runs,
            max_steps,
            seed,
            stop: Stop::Final,
            workers: 0,
            exact: false,
        })
    }

    pub fn stop(mut self, stop: Stop) -> Self {
        self.stop = stop;
        self
    }

    pub fn workers(mut self, workers: usize) -> Self {
        self.workers = workers;
        self
    }

    pub fn exact(mut self, exact: bool) -> Self {
        self.exact = exact;
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory<S = f64> {
    /// `configs[i].step == i`.
    pub configs: Vec<Configuration<S>>,
    /// Stopping step, `None` when truncated at `max_steps`.
    pub hit: Option<u64>,
}

impl<S> Trajectory<S> {
    /// Configuration at step `k` of the stopped process.
    pub fn at(&self, k: u64) -> &Configuration<S> {
        let i = (k as usize).min(self.configs.len() - 1);
        &self.configs[i]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    /// Runs contributing to the estimate.
    pub runs: u64,
    pub truncated_fraction: f64,
    /// False when more than 1% of runs were truncated in stopping-time mode.
    pub reliable: bool,
}

impl Estimate {
    /// `|mean - target| <= 4 stderr` (plus a rounding allowance).
    pub fn within(&self, target: f64) -> bool {
        (self.mean - target).abs() <= 4.0 * self.stderr + 1e-12 * (1.0 + target.abs())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum At {
    Step(u64),
    Stop,
}

/// Scalars the simulator can run on.
pub trait SimScalar: Scalar + Send + Sync {
    fn draw<R: Rng + ?Sized>(d: &Distribution, rng: &mut R) -> Self;
    fn as_f64(&self) -> f64;
}

impl SimScalar for f64 {
    fn draw<R: Rng + ?Sized>(d: &Distribution, rng: &mut R) -> Self {
        d.sample(rng)
    }

    fn as_f64(&self) -> f64 {
        *self
    }
}

impl SimScalar for Q {
    fn draw<R: Rng + ?Sized>(d: &Distribution, rng: &mut R) -> Self {
        d.sample_exact(rng)
    }

    fn as_f64(&self) -> f64 {
        q_to_f64(self)
    }
}

fn stopped<S: SimScalar>(p: &Pts, stop: &Stop, c: &Configuration<S>) -> bool {
    match stop {
        Stop::Final => p.final_loc() == Some(c.location),
        Stop::Negative(h) => {
            let pt = point(p, c);
            h.eval(c.location, &pt).is_negative()
        }
    }
}

fn point<S: SimScalar>(p: &Pts, c: &Configuration<S>) -> Vec<S> {
    let k = S::from_q(&Q::from_integer((c.step as i64).into()));
    p.dense_point(&c.valuation, k, &vec![S::zero(); p.randoms().count()])
}

/// One run, up to the stopping condition or `max_steps` steps.
pub fn run_one<S: SimScalar>(p: &Pts, cfg: &RunConfig, run: u64) -> Result<Trajectory<S>, SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ run);
    let laws: Vec<&Distribution> = p.randoms().map(|(_, d)| d).collect();
    let x0: Vec<S> = p.init().laws().iter().map(|d| S::draw(d, &mut rng)).collect();
    let mut cur = Configuration {
        location: p.init_loc(),
        valuation: x0,
        step: 0,
    };
    let mut configs = Vec::new();
    loop {
        if stopped(p, &cfg.stop, &cur) {
            let hit = cur.step;
            configs.push(cur);
            return Ok(Trajectory { configs, hit: Some(hit) });
        }
        if cur.step >= cfg.max_steps {
            configs.push(cur);
            return Ok(Trajectory { configs, hit: None });
        }
        let t = p.enabled_transition(&cur).map_err(|source| SimError::Runtime {
            run,
            step: cur.step,
            source,
        })?;
        let r: Vec<S> = laws.iter().map(|d| S::draw(d, &mut rng)).collect();
        let b = choose_branch(t, rng.random());
        let next = Configuration {
            location: t.dest,
            valuation: p.apply_branch(t, b, &cur.valuation, &r),
            step: cur.step + 1,
        };
        configs.push(std::mem::replace(&mut cur, next));
    }
}

fn choose_branch(t: &Transition, u: f64) -> usize {
    let mut acc = 0.0;
    for (i, br) in t.branches.iter().enumerate() {
        acc += q_to_f64(&br.prob);
        if u < acc {
            return i;
        }
    }
    t.branches.len() - 1
}

/// Nodes beyond which [`PathTree`] gives up and runs are simulated one by one.
const PATH_TREE_LIMIT: usize = 1 << 20;

enum NodeState {
    Open(usize),
    Stopped,
    Truncated,
}

/// Exact runs of a system without random variables and with a point
/// initial state, shared by branch-choice prefix. Each run still consumes
/// its own stream exactly as [`run_one`] does, so the values are identical.
struct PathTree<'a> {
    p: &'a Pts,
    cfg: &'a RunConfig,
    nodes: Vec<(Configuration<Q>, Option<usize>, NodeState)>,
    children: HashMap<(usize, usize), usize>,
}

impl<'a> PathTree<'a> {
    fn applies(p: &Pts, cfg: &RunConfig) -> bool {
        cfg.exact
            && p.randoms().next().is_none()
            && p.init().laws().iter().all(|d| matches!(d, Distribution::Constant(_)))
    }

    fn new(p: &'a Pts, cfg: &'a RunConfig) -> Self {
        Self {
            p,
            cfg,
            nodes: Vec::new(),
            children: HashMap::new(),
        }
    }

    fn push(&mut self, c: Configuration<Q>, parent: Option<usize>, run: u64) -> Result<usize, SimError> {
        let state = if stopped(self.p, &self.cfg.stop, &c) {
            NodeState::Stopped
        } else if c.step >= self.cfg.max_steps {
            NodeState::Truncated
        } else {
            let t = self.p.enabled_index(c.location, &c.valuation).map_err(|source| SimError::Runtime {
                run,
                step: c.step,
                source,
            })?;
            NodeState::Open(t)
        };
        self.nodes.push((c, parent, state));
        Ok(self.nodes.len() - 1)
    }

    /// Leaf node of run `run`, or `None` once the tree is too large.
    fn walk(&mut self, run: u64) -> Result<Option<usize>, SimError> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed ^ run);
        if self.nodes.is_empty() {
            let x0 = self.p.init().sample_exact(&mut rng);
            let root = Configuration {
                location: self.p.init_loc(),
                valuation: x0,
                step: 0,
            };
            self.push(root, None, run)?;
        }
        let mut at = 0;
        while let NodeState::Open(ti) = self.nodes[at].2 {
            let t = &self.p.transitions()[ti];
            let b = choose_branch(t, rng.random());
            at = match self.children.get(&(at, b)) {
                Some(&c) => c,
                None => {
                    if self.nodes.len() >= PATH_TREE_LIMIT {
                        return Ok(None);
                    }
                    let cur = &self.nodes[at].0;
                    let next = Configuration {
                        location: t.dest,
                        valuation: self.p.apply_branch(t, b, &cur.valuation, &[]),
                        step: cur.step + 1,
                    };
                    let c = self.push(next, Some(at), run)?;
                    self.children.insert((at, b), c);
                    c
                }
            };
        }
        Ok(Some(at))
    }

    fn trajectory(&self, leaf: usize) -> Trajectory<Q> {
        let mut configs = Vec::new();
        let mut at = Some(leaf);
        while let Some(i) = at {
            configs.push(self.nodes[i].0.clone());
            at = self.nodes[i].1;
        }
        configs.reverse();
        let hit = match self.nodes[leaf].2 {
            NodeState::Stopped => Some(self.nodes[leaf].0.step),
            _ => None,
        };
        Trajectory { configs, hit }
    }
}

/// Per-run values through a [`PathTree`], or `None` when it grows too large.
fn per_run_shared<T: Clone>(p: &Pts, cfg: &RunConfig, qf: impl Fn(&Trajectory<Q>) -> T) -> Result<Option<Vec<T>>, SimError> {
    let mut tree = PathTree::new(p, cfg);
    let mut leaves = Vec::with_capacity(cfg.runs as usize);
    for run in 0..cfg.runs {
        match tree.walk(run)? {
            Some(l) => leaves.push(l),
            None => return Ok(None),
        }
    }
    let mut values: HashMap<usize, T> = HashMap::new();
    Ok(Some(
        leaves
            .iter()
            .map(|&l| values.entry(l).or_insert_with(|| qf(&tree.trajectory(l))).clone())
            .collect(),
    ))
}

fn in_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    if workers == 0 {
        return f();
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .expect("thread pool")
        .install(f)
}

/// All trajectories in run order.
pub fn simulate(p: &Pts, cfg: &RunConfig) -> Result<Vec<Trajectory<f64>>, SimError> {
    in_pool(cfg.workers, || (0..cfg.runs).into_par_iter().map(|i| run_one(p, cfg, i)).collect())
}

/// Per-run values `f(trajectory)` in run order, computed on `f64` or on
/// exact rationals per `cfg.exact`.
fn per_run<T: Send + Clone>(
    p: &Pts,
    cfg: &RunConfig,
    f64f: impl Fn(&Trajectory<f64>) -> T + Sync + Send,
    qf: impl Fn(&Trajectory<Q>) -> T + Sync + Send,
) -> Result<Vec<T>, SimError> {
    if PathTree::applies(p, cfg) {
        if let Some(v) = per_run_shared(p, cfg, &qf)? {
            return Ok(v);
        }
    }
    in_pool(cfg.workers, || {
        (0..cfg.runs)
            .into_par_iter()
            .map(|i| {
                if cfg.exact {
                    run_one::<Q>(p, cfg, i).map(|t| qf(&t))
                } else {
                    run_one::<f64>(p, cfg, i).map(|t| f64f(&t))
                }
            })
            .collect()
    })
}

/// Pairwise (cascade) sum with a fixed split, independent of threading.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let (a, b) = xs.split_at(xs.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// Mean and standard error, shifting by the first value so a constant
/// sample has exactly its value as mean.
pub fn summarize(values: &[f64], total_runs: u64) -> Estimate {
    let n = values.len();
    let truncated_fraction = if total_runs == 0 {
        0.0
    } else {
        (total_runs - n as u64) as f64 / total_runs as f64
    };
    if n == 0 {
        return Estimate {
            mean: f64::NAN,
            stderr: f64::NAN,
            runs: 0,
            truncated_fraction,
            reliable: false,
        };
    }
    let v0 = values[0];
    let shifted: Vec<f64> = values.iter().map(|v| v - v0).collect();
    let ms = pairwise_sum(&shifted) / n as f64;
    let mean = v0 + ms;
    let stderr = if n > 1 {
        let sq: Vec<f64> = shifted.iter().map(|d| (d - ms) * (d - ms)).collect();
        (pairwise_sum(&sq) / (n - 1) as f64 / n as f64).sqrt()
    } else {
        0.0
    };
    Estimate {
        mean,
        stderr,
        runs: n as u64,
        truncated_fraction,
        reliable: truncated_fraction <= 0.01,
    }
}

fn eval_at<S: SimScalar>(p: &Pts, expr: &LocPoly, c: &Configuration<S>) -> f64 {
    expr.eval(c.location, &point(p, c)).as_f64()
}

/// `E(expr(X^k, L^k))` of the stopped process, or `E(expr)` at the stopping
/// time over the runs that stopped.
pub fn estimate_expectation(p: &Pts, cfg: &RunConfig, expr: &LocPoly, at: At) -> Result<Estimate, SimError> {
    match at {
        At::Step(k) => {
            if k > cfg.max_steps {
                return Err(SimError::Config(format!("step {k} is beyond max_steps {}", cfg.max_steps)));
            }
            let sub = RunConfig {
                max_steps: k.max(1),
                ..cfg.clone()
            };
            let vals = per_run(p, &sub, |t| eval_at(p, expr, t.at(k)), |t| eval_at(p, expr, t.at(k)))?;
            let mut e = summarize(&vals, cfg.runs);
            e.truncated_fraction = 0.0;
            e.reliable = true;
            Ok(e)
        }
        At::Stop => {
            let vals = per_run(
                p,
                cfg,
                |t| t.hit.map(|_| eval_at(p, expr, t.configs.last().expect("non-empty"))),
                |t| t.hit.map(|_| eval_at(p, expr, t.configs.last().expect("non-empty"))),
            )?;
            let kept: Vec<f64> = vals.into_iter().flatten().collect();
            Ok(summarize(&kept, cfg.runs))
        }
    }
}

/// Estimates of `E(expr(X^k, L^k))` for `k = 0..=k_max` from one batch of runs.
pub fn estimate_series(p: &Pts, cfg: &RunConfig, expr: &LocPoly, k_max: u64) -> Result<Vec<Estimate>, SimError> {
    let sub = RunConfig {
        max_steps: k_max.max(1),
        ..cfg.clone()
    };
    let series = |f: &dyn Fn(u64) -> f64| (0..=k_max).map(f).collect::<Vec<f64>>();
    let vals = per_run(
        p,
        &sub,
        |t| series(&|k| eval_at(p, expr, t.at(k))),
        |t| series(&|k| eval_at(p, expr, t.at(k))),
    )?;
    Ok(transpose_summaries(&vals, k_max, cfg.runs))
}

fn transpose_summaries(vals: &[Vec<f64>], k_max: u64, runs: u64) -> Vec<Estimate> {
    (0..=k_max as usize)
        .map(|k| {
            let col: Vec<f64> = vals.iter().map(|v| v[k]).collect();
            let mut e = summarize(&col, runs);
            e.truncated_fraction = 0.0;
            e.reliable = true;
            e
        })
        .collect()
}

/// Per `k < k_max`, `E(P(X^{k+1}, L^{k+1}) - preE(P)(X^k, L^k))` on the
/// stopped process; a martingale gives 0 for every `k`.
pub fn estimate_martingale_drift(p: &Pts, cfg: &RunConfig, pp: &LocPoly, k_max: u64) -> Result<Vec<Estimate>, SimError> {
    let pieces = preexp_pts(p, pp, true);
    let sub = RunConfig {
        max_steps: k_max.max(1),
        ..cfg.clone()
    };
    fn drift<S: SimScalar>(p: &Pts, pp: &LocPoly, pieces: &crate::preexp::PiecewisePoly, t: &Trajectory<S>, k: u64) -> f64 {
        if t.hit.is_some_and(|h| h <= k) {
            return 0.0;
        }
        let c = t.at(k);
        let n = t.at(k + 1);
        let pe = pieces.eval(c.location, &point(p, c)).map_or(f64::NAN, |v| v.as_f64());
        eval_at(p, pp, n) - pe
    }
    let vals = per_run(
        p,
        &sub,
        |t| (0..k_max).map(|k| drift(p, pp, &pieces, t, k)).collect::<Vec<f64>>(),
        |t| (0..k_max).map(|k| drift(p, pp, &pieces, t, k)).collect::<Vec<f64>>(),
    )?;
    if k_max == 0 {
        return Ok(Vec::new());
    }
    Ok(transpose_summaries(&vals, k_max - 1, cfg.runs))
}

/// Hitting-step estimate: `E(T)` over stopped runs.
pub fn estimate_stopping_time(p: &Pts, cfg: &RunConfig) -> Result<Estimate, SimError> {
    let vals = per_run(p, cfg, |t| t.hit.map(|h| h as f64), |t| t.hit.map(|h| h as f64))?;
    let kept: Vec<f64> = vals.into_iter().flatten().collect();
    Ok(summarize(&kept, cfg.runs))
}
