//! CMA-ES over the normalized hyperparameter vector, with subgroup
//! scheduling, parallel candidate evaluation and a resumable history.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hyper::{AppearanceConfig, Config, Group, HyperParams, SearchSpace};
use crate::io::AugmentMode;
use crate::rng::SeedPath;
use crate::scene::AppearancePool;
use crate::stats::{Histogram, HistogramAccumulator};

/// Covariance matrix adaptation state over the active coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct CmaState {
    /// Full-length vector supplying the inactive coordinates.
    pub base: Vec<f64>,
    pub active_dims: Vec<usize>,
    pub lambda: usize,
    pub mu: usize,
    pub weights: Vec<f64>,
    pub mueff: f64,
    pub cc: f64,
    pub cs: f64,
    pub c1: f64,
    pub cmu: f64,
    pub damps: f64,
    pub chi_n: f64,
    pub mean: DVector<f64>,
    pub sigma: f64,
    pub cov: DMatrix<f64>,
    pub p_sigma: DVector<f64>,
    pub p_c: DVector<f64>,
    /// Eigenvectors of `cov` (columns).
    pub b: DMatrix<f64>,
    /// Square roots of the eigenvalues of `cov`.
    pub d: DVector<f64>,
    pub generation: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub id: usize,
    /// Full coordinate vector, clamped to the unit box.
    pub vector: Vec<f64>,
    /// Active coordinates before clamping.
    pub sample: Vec<f64>,
}

/// CMA-ES on all `mean0.len()` coordinates.
pub fn cma_init(dim: usize, mean0: &[f64], sigma0: f64, population: usize) -> Result<CmaState> {
    if mean0.len() != dim {
        return Err(Error::InvalidConfig(format!("initial mean has {} coordinates, expected {dim}", mean0.len())));
    }
    CmaState::for_subspace(mean0, (0..dim).collect(), sigma0, population)
}

impl CmaState {
    /// CMA-ES over `active` coordinates of `base`; the rest stay fixed.
    pub fn for_subspace(base: &[f64], active: Vec<usize>, sigma0: f64, population: usize) -> Result<Self> {
        let n = active.len();
        if n == 0 {
            return Err(Error::InvalidConfig("no active dimensions".into()));
        }
        if let Some(&i) = active.iter().find(|&&i| i >= base.len()) {
            return Err(Error::InvalidConfig(format!("active dimension {i} out of range")));
        }
        if !(sigma0 > 0.0) || !sigma0.is_finite() {
            return Err(Error::InvalidConfig(format!("sigma0 must be positive, got {sigma0}")));
        }
        if population < 2 {
            return Err(Error::InvalidConfig(format!("population must be at least 2, got {population}")));
        }
        let nf = n as f64;
        let lambda = population;
        let mu = lambda / 2;
        let raw: Vec<f64> = (1..=mu).map(|i| ((lambda as f64 + 1.0) / 2.0).ln() - (i as f64).ln()).collect();
        let sum: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / sum).collect();
        let mueff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        let cc = (4.0 + mueff / nf) / (nf + 4.0 + 2.0 * mueff / nf);
        let cs = (mueff + 2.0) / (nf + mueff + 5.0);
        let c1 = 2.0 / ((nf + 1.3).powi(2) + mueff);
        let cmu = (1.0 - c1).min(2.0 * (mueff - 2.0 + 1.0 / mueff) / ((nf + 2.0).powi(2) + mueff));
        let damps = 1.0 + 2.0 * (((mueff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + cs;
        let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));
        let mean = DVector::from_iterator(n, active.iter().map(|&i| base[i]));
        Ok(Self {
            base: base.to_vec(),
            active_dims: active,
            lambda,
            mu,
            weights,
            mueff,
            cc,
            cs,
            c1,
            cmu,
            damps,
            chi_n,
            mean,
            sigma: sigma0,
            cov: DMatrix::identity(n, n),
            p_sigma: DVector::zeros(n),
            p_c: DVector::zeros(n),
            b: DMatrix::identity(n, n),
            d: DVector::from_element(n, 1.0),
            generation: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.active_dims.len()
    }

    fn inv_sqrt_cov(&self) -> DMatrix<f64> {
        let dinv = DMatrix::from_diagonal(&self.d.map(|v| 1.0 / v));
        &self.b * dinv * self.b.transpose()
    }
}

/// Draws `lambda` candidates around the mean.
pub fn cma_ask<R: Rng + ?Sized>(state: &CmaState, rng: &mut R) -> Vec<Candidate> {
    let n = state.dim();
    (0..state.lambda)
        .map(|id| {
            let z = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
            let y = &state.b * z.component_mul(&state.d);
            let x = &state.mean + y * state.sigma;
            let mut vector = state.base.clone();
            for (k, &i) in state.active_dims.iter().enumerate() {
                vector[i] = x[k].clamp(0.0, 1.0);
            }
            Candidate { id, vector, sample: x.iter().copied().collect() }
        })
        .collect()
}

/// Per-candidate recombination weights after sorting by `(score, id)`;
/// tied scores share the average of the weights their ranks span.
fn rank_weights(state: &CmaState, order: &[usize], scores: &[f64]) -> Vec<f64> {
    let mut w = vec![0.0; order.len()];
    let rank_w = |r: usize| state.weights.get(r).copied().unwrap_or(0.0);
    let mut r = 0;
    while r < order.len() {
        let mut e = r + 1;
        while e < order.len() && scores[order[e]] == scores[order[r]] {
            e += 1;
        }
        let avg = (r..e).map(rank_w).sum::<f64>() / (e - r) as f64;
        for &k in &order[r..e] {
            w[k] = avg;
        }
        r = e;
    }
    w
}

/// Rank-based mean, path, covariance and step-size update. Non-finite
/// scores rank last; the update sees only the ordering.
pub fn cma_tell(state: &CmaState, candidates: &[Candidate], scores: &[f64]) -> Result<CmaState> {
    if candidates.len() != scores.len() || candidates.len() != state.lambda {
        return Err(Error::InvalidConfig(format!(
            "expected {} scored candidates, got {} candidates and {} scores",
            state.lambda,
            candidates.len(),
            scores.len()
        )));
    }
    let scores: Vec<f64> = scores.iter().map(|&s| if s.is_nan() { f64::INFINITY } else { s }).collect();
    if scores.iter().all(|s| *s == f64::INFINITY) {
        return Err(Error::AllCandidatesFailed { generation: state.generation });
    }
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(candidates[a].id.cmp(&candidates[b].id)));
    let w = rank_weights(state, &order, &scores);

    let n = state.dim();
    let nf = n as f64;
    let xs: Vec<DVector<f64>> = order
        .iter()
        .map(|&k| DVector::from_iterator(n, state.active_dims.iter().map(|&i| candidates[k].vector[i])))
        .collect();
    let ws: Vec<f64> = order.iter().map(|&k| w[k]).collect();

    let old_mean = &state.mean;
    let mut mean = DVector::zeros(n);
    for (x, &wk) in xs.iter().zip(&ws) {
        if wk != 0.0 {
            mean += x * wk;
        }
    }
    // A convex combination of clamped points can leave the box by rounding only.
    mean.apply(|v| *v = v.clamp(0.0, 1.0));
    let y_w = (&mean - old_mean) / state.sigma;

    let mut s = state.clone();
    s.generation += 1;
    s.p_sigma = &state.p_sigma * (1.0 - s.cs) + state.inv_sqrt_cov() * &y_w * (s.cs * (2.0 - s.cs) * s.mueff).sqrt();
    let ps_norm = s.p_sigma.norm();
    let hsig_den = (1.0 - (1.0 - s.cs).powi(2 * s.generation as i32)).sqrt();
    let hsig = ps_norm / hsig_den / s.chi_n < 1.4 + 2.0 / (nf + 1.0);
    let hs = if hsig { 1.0 } else { 0.0 };
    s.p_c = &state.p_c * (1.0 - s.cc) + &y_w * (hs * (s.cc * (2.0 - s.cc) * s.mueff).sqrt());

    let mut rank_mu = DMatrix::zeros(n, n);
    for (x, &wk) in xs.iter().zip(&ws) {
        if wk != 0.0 {
            let y = (x - old_mean) / state.sigma;
            rank_mu += &y * y.transpose() * wk;
        }
    }
    let rank_one = &s.p_c * s.p_c.transpose() + &state.cov * ((1.0 - hs) * s.cc * (2.0 - s.cc));
    s.cov = &state.cov * (1.0 - s.c1 - s.cmu) + rank_one * s.c1 + rank_mu * s.cmu;
    s.mean = mean;
    s.sigma = (state.sigma * ((s.cs / s.damps) * (ps_norm / s.chi_n - 1.0)).exp()).clamp(1e-300, 1e300);
    repair_and_decompose(&mut s);
    Ok(s)
}

/// Symmetrizes the covariance, floors its spectrum and refreshes `b`, `d`.
fn repair_and_decompose(s: &mut CmaState) {
    let n = s.dim();
    let sym = (&s.cov + s.cov.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let top = eig.eigenvalues.iter().copied().filter(|v| v.is_finite()).fold(0.0, f64::max);
    let floor = (top * 1e-14).max(1e-300);
    let needs_repair = eig.eigenvalues.iter().any(|v| !(v.is_finite() && *v >= floor));
    let vals = eig.eigenvalues.map(|v| if v.is_finite() { v.max(floor) } else { floor });
    if needs_repair || eig.eigenvectors.iter().any(|v| !v.is_finite()) {
        if eig.eigenvectors.iter().all(|v| v.is_finite()) {
            s.cov = &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose();
            s.cov = (&s.cov + s.cov.transpose()) * 0.5;
        } else {
            s.cov = DMatrix::identity(n, n);
            s.b = DMatrix::identity(n, n);
            s.d = DVector::from_element(n, 1.0);
            return;
        }
    } else {
        s.cov = (&s.cov + s.cov.transpose()) * 0.5;
    }
    s.b = eig.eigenvectors;
    s.d = vals.map(f64::sqrt);
}

/// Identifies one evaluation within a search.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EvalContext {
    /// Global generation number; the incumbent check uses `None`.
    pub generation: Option<u64>,
    pub candidate: usize,
    /// Samples the evaluator may render.
    pub budget: usize,
}

/// Scores hyperparameters; lower is better. Implementations must be
/// independent across calls so candidates can run concurrently.
pub trait Evaluator: Sync {
    fn evaluate(&self, h: &HyperParams, ctx: &EvalContext) -> Result<f64>;
}

impl<F> Evaluator for F
where
    F: Fn(&HyperParams, &EvalContext) -> Result<f64> + Sync,
{
    fn evaluate(&self, h: &HyperParams, ctx: &EvalContext) -> Result<f64> {
        self(h, ctx)
    }
}

/// Renders augmented samples and compares their motion-magnitude histogram
/// to a target. Every candidate sees the same sample seeds.
pub struct HistogramEvaluator {
    pub pool: Arc<AppearancePool>,
    pub target: Histogram,
    pub seed: u64,
}

impl HistogramEvaluator {
    pub fn new(pool: Arc<AppearancePool>, target: Histogram, seed: u64) -> Result<Self> {
        let total: f64 = target.masses.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParams(format!("target histogram sums to {total}")));
        }
        Ok(Self { pool, target, seed })
    }

    pub fn histogram(&self, h: &HyperParams, budget: usize) -> Result<Histogram> {
        if budget == 0 {
            return Err(Error::InvalidConfig("evaluation budget must be at least 1".into()));
        }
        let accs = crate::par::map_indices(budget, |i| {
            let s = crate::io::dataset_sample(h, &self.pool, self.seed, i as u64, AugmentMode::Materialize)?;
            let mut acc = HistogramAccumulator::default();
            acc.add_flow(&s.flow);
            Ok::<_, Error>(acc)
        });
        let mut total = HistogramAccumulator::default();
        for a in accs {
            total.merge(&a?);
        }
        total.finish()
    }
}

impl Evaluator for HistogramEvaluator {
    fn evaluate(&self, h: &HyperParams, ctx: &EvalContext) -> Result<f64> {
        Ok(self.histogram(h, ctx.budget)?.l1(&self.target))
    }
}

/// Runs a user command per candidate. The command line is passed to `sh -c`
/// with the candidate config path appended as the sole argument; the last
/// non-empty stdout line must parse as a number and the exit status must be 0.
pub struct ExternalEvaluator {
    pub command: String,
    pub scratch: PathBuf,
    pub appearance: AppearanceConfig,
}

/// Exit statuses `sh` uses for a missing or non-executable command.
const SHELL_NOT_FOUND: [i32; 2] = [126, 127];

impl ExternalEvaluator {
    pub fn new(command: impl Into<String>, scratch: impl Into<PathBuf>, appearance: AppearanceConfig) -> Result<Self> {
        let scratch = scratch.into();
        fs::create_dir_all(&scratch)?;
        Ok(Self { command: command.into(), scratch, appearance })
    }
}

impl Evaluator for ExternalEvaluator {
    fn evaluate(&self, h: &HyperParams, ctx: &EvalContext) -> Result<f64> {
        let name = match ctx.generation {
            Some(g) => format!("gen{g:04}_cand{:02}.toml", ctx.candidate),
            None => "incumbent.toml".to_string(),
        };
        let path = self.scratch.join(name);
        Config { appearance: self.appearance.clone(), hyper: h.clone(), space: Vec::new() }.save(&path)?;
        let out = Command::new("sh")
            .arg("-c")
            .arg(format!("{} \"$1\"", self.command))
            .arg("flowforge-eval")
            .arg(&path)
            .env("FLOWFORGE_EVAL_BUDGET", ctx.budget.to_string())
            .stdin(Stdio::null())
            .stderr(Stdio::inherit())
            .output()
            .map_err(|e| Error::EvaluatorUnavailable(format!("cannot start sh: {e}")))?;
        match out.status.code() {
            Some(0) => {}
            Some(c) if SHELL_NOT_FOUND.contains(&c) => {
                return Err(Error::EvaluatorUnavailable(format!("`{}` could not be executed (exit {c})", self.command)))
            }
            c => return Err(Error::Format(format!("evaluator exited with {c:?}"))),
        }
        let stdout = String::from_utf8_lossy(&out.stdout);
        let last = stdout.lines().rev().find(|l| !l.trim().is_empty()).unwrap_or("");
        last.trim().parse::<f64>().map_err(|_| Error::Format(format!("unparseable evaluator output {last:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Outer iterations, one subgroup each.
    pub iterations: usize,
    /// Candidates per generation.
    pub population: usize,
    pub sigma0: f64,
    pub generations_per_iteration: usize,
    pub subgroup_schedule: Vec<Group>,
    pub eval_budget: usize,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            iterations: 8,
            population: 8,
            sigma0: 0.3,
            generations_per_iteration: 5,
            subgroup_schedule: Group::ALL.to_vec(),
            eval_budget: 8,
            seed: 0,
        }
    }
}

impl SearchConfig {
    pub fn check(&self) -> Result<()> {
        if self.iterations < 1 {
            return Err(Error::InvalidConfig("iterations must be at least 1".into()));
        }
        if self.population < 2 {
            return Err(Error::InvalidConfig("population must be at least 2".into()));
        }
        if self.generations_per_iteration < 1 {
            return Err(Error::InvalidConfig("generations per iteration must be at least 1".into()));
        }
        if self.subgroup_schedule.is_empty() {
            return Err(Error::InvalidConfig("subgroup schedule is empty".into()));
        }
        if !(self.sigma0 > 0.0) {
            return Err(Error::InvalidConfig(format!("sigma0 must be positive, got {}", self.sigma0)));
        }
        Ok(())
    }
}

/// One line of the search history file. Infinite scores are stored as null.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum HistoryRecord {
    Header { config: SearchConfig, dims: Vec<String>, incumbent_hash: String },
    Incumbent { vector: Vec<f64>, score: Option<f64>, wall_time: f64 },
    Candidate { iteration: usize, group: Group, generation: u64, candidate: usize, vector: Vec<f64>, score: Option<f64>, wall_time: f64 },
    Done { best_score: Option<f64>, best_vector: Vec<f64> },
}

fn store(s: f64) -> Option<f64> {
    s.is_finite().then_some(s)
}

fn load(s: Option<f64>) -> f64 {
    s.unwrap_or(f64::INFINITY)
}

#[derive(Clone, Debug)]
pub struct SearchOutcome {
    pub best: HyperParams,
    pub best_score: f64,
    pub best_vector: Vec<f64>,
    pub initial_score: f64,
    pub history: Vec<HistoryRecord>,
    /// Evaluator calls made by this invocation (recorded scores are reused on resume).
    pub evaluations: usize,
}

struct HistoryFile {
    path: Option<PathBuf>,
    recorded: Vec<HistoryRecord>,
    cursor: usize,
}

impl HistoryFile {
    fn open(path: Option<&Path>, header: &HistoryRecord) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self { path: None, recorded: vec![header.clone()], cursor: 1 });
        };
        let mut recorded = Vec::new();
        if path.is_file() {
            let text = fs::read_to_string(path)?;
            for line in text.lines().filter(|l| !l.trim().is_empty()) {
                match serde_json::from_str::<HistoryRecord>(line) {
                    Ok(r) => recorded.push(r),
                    Err(_) => break,
                }
            }
        }
        match recorded.first() {
            Some(h) if h == header => {}
            Some(_) => return Err(Error::InvalidConfig(format!("{} was produced by a different search setup", path.display()))),
            None => recorded.push(header.clone()),
        }
        let mut text = String::new();
        for r in &recorded {
            text.push_str(&serde_json::to_string(r)?);
            text.push('\n');
        }
        crate::io::write_atomic(path, text.as_bytes())?;
        Ok(Self { path: Some(path.to_path_buf()), recorded, cursor: 1 })
    }

    /// The recorded entry at the replay cursor, if any.
    fn next_recorded(&self) -> Option<&HistoryRecord> {
        self.recorded.get(self.cursor)
    }

    /// Drops records past the cursor, such as an interrupted generation.
    fn truncate_to_cursor(&mut self) -> Result<()> {
        if self.cursor < self.recorded.len() {
            self.recorded.truncate(self.cursor);
            if let Some(path) = &self.path {
                let mut text = String::new();
                for r in &self.recorded {
                    text.push_str(&serde_json::to_string(r)?);
                    text.push('\n');
                }
                crate::io::write_atomic(path, text.as_bytes())?;
            }
        }
        Ok(())
    }

    fn append(&mut self, records: &[HistoryRecord]) -> Result<()> {
        if let Some(path) = &self.path {
            let mut f = fs::OpenOptions::new().append(true).open(path)?;
            let mut text = String::new();
            for r in records {
                text.push_str(&serde_json::to_string(r)?);
                text.push('\n');
            }
            f.write_all(text.as_bytes())?;
            f.sync_data()?;
        }
        self.recorded.extend_from_slice(records);
        self.cursor = self.recorded.len();
        Ok(())
    }
}

fn same_vector(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

/// Subgroup-cycled CMA-ES. Each iteration restarts CMA-ES on one subgroup's
/// coordinates around the incumbent, runs `generations_per_iteration`
/// generations, and keeps a candidate only if it strictly beats the
/// incumbent. With `history`, every generation is appended to the file and
/// an existing file is replayed instead of re-evaluated.
pub fn run_search(
    cfg: &SearchConfig,
    space: &SearchSpace,
    incumbent: &HyperParams,
    evaluator: &dyn Evaluator,
    history: Option<&Path>,
) -> Result<SearchOutcome> {
    cfg.check()?;
    space.check()?;
    incumbent.check()?;
    let header = HistoryRecord::Header {
        config: cfg.clone(),
        dims: space.dims.iter().map(|d| d.path.clone()).collect(),
        incumbent_hash: incumbent.hash(),
    };
    let mut hist = HistoryFile::open(history, &header)?;
    let mut evaluations = 0;

    let start_vector: Vec<f64> = space.encode(incumbent).into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
    let initial_score = match hist.next_recorded() {
        Some(HistoryRecord::Incumbent { score, .. }) => {
            let s = load(*score);
            hist.cursor += 1;
            s
        }
        _ => {
            let t = Instant::now();
            let ctx = EvalContext { generation: None, candidate: 0, budget: cfg.eval_budget };
            evaluations += 1;
            let s = match evaluator.evaluate(incumbent, &ctx) {
                Ok(s) if !s.is_nan() => s,
                Ok(_) => f64::INFINITY,
                Err(e @ Error::EvaluatorUnavailable(_)) => return Err(e),
                Err(_) => f64::INFINITY,
            };
            hist.append(&[HistoryRecord::Incumbent { vector: start_vector.clone(), score: store(s), wall_time: t.elapsed().as_secs_f64() }])?;
            s
        }
    };

    let mut best = incumbent.clone();
    let mut best_score = initial_score;
    let mut best_vector = start_vector;
    let mut generation: u64 = 0;

    for iteration in 0..cfg.iterations {
        let group = cfg.subgroup_schedule[iteration % cfg.subgroup_schedule.len()];
        let active = space.indices_of(group);
        if active.is_empty() {
            continue;
        }
        let mut state = CmaState::for_subspace(&best_vector, active, cfg.sigma0, cfg.population)?;
        let mut iter_best: Option<(f64, Vec<f64>, HyperParams)> = None;
        for _ in 0..cfg.generations_per_iteration {
            let mut rng = SeedPath::new(cfg.seed).child("ask", generation).rng();
            let cands = cma_ask(&state, &mut rng);
            let decoded = cands.iter().map(|c| space.decode(&c.vector, incumbent)).collect::<Result<Vec<_>>>()?;

            let recorded: Option<Vec<f64>> = (0..cands.len())
                .map(|k| match hist.recorded.get(hist.cursor + k) {
                    Some(HistoryRecord::Candidate { generation: g, candidate, vector, score, .. })
                        if *g == generation && *candidate == k && same_vector(vector, &cands[k].vector) =>
                    {
                        Some(load(*score))
                    }
                    _ => None,
                })
                .collect();
            let scores = match recorded {
                Some(s) => {
                    hist.cursor += cands.len();
                    s
                }
                None => {
                    let partial = hist.recorded[hist.cursor..]
                        .iter()
                        .all(|r| matches!(r, HistoryRecord::Candidate { generation: g, .. } if *g == generation));
                    if !partial {
                        return Err(Error::InvalidConfig("history does not replay under the current setup".into()));
                    }
                    hist.truncate_to_cursor()?;
                    let results = crate::par::map_indices(cands.len(), |k| {
                        let t = Instant::now();
                        let ctx = EvalContext { generation: Some(generation), candidate: k, budget: cfg.eval_budget };
                        let s = match evaluator.evaluate(&decoded[k], &ctx) {
                            Ok(s) if !s.is_nan() => s,
                            _ => f64::INFINITY,
                        };
                        (s, t.elapsed().as_secs_f64())
                    });
                    evaluations += cands.len();
                    let records: Vec<HistoryRecord> = cands
                        .iter()
                        .zip(&results)
                        .map(|(c, &(s, wall))| HistoryRecord::Candidate {
                            iteration,
                            group,
                            generation,
                            candidate: c.id,
                            vector: c.vector.clone(),
                            score: store(s),
                            wall_time: wall,
                        })
                        .collect();
                    hist.append(&records)?;
                    results.into_iter().map(|(s, _)| s).collect()
                }
            };
            generation += 1;

            for (k, &s) in scores.iter().enumerate() {
                let threshold = iter_best.as_ref().map_or(best_score, |b| b.0);
                if s < threshold {
                    iter_best = Some((s, cands[k].vector.clone(), decoded[k].clone()));
                }
            }
            state = cma_tell(&state, &cands, &scores)?;
        }
        if let Some((s, v, h)) = iter_best {
            best_score = s;
            best_vector = v;
            best = h;
        }
    }

    if !matches!(hist.next_recorded(), Some(HistoryRecord::Done { .. })) {
        hist.append(&[HistoryRecord::Done { best_score: store(best_score), best_vector: best_vector.clone() }])?;
    }
    Ok(SearchOutcome { best, best_score, best_vector, initial_score, history: hist.recorded, evaluations })
}

/// Best strictly-improving score and vector recorded in a history file.
pub fn replay_best(records: &[HistoryRecord]) -> Option<(f64, Vec<f64>)> {
    let mut best: Option<(f64, Vec<f64>)> = None;
    for r in records {
        let (score, vector) = match r {
            HistoryRecord::Incumbent { vector, score, .. } | HistoryRecord::Candidate { vector, score, .. } => (load(*score), vector),
            _ => continue,
        };
        if best.as_ref().is_none_or(|(b, _)| score < *b) {
            best = Some((score, vector.clone()));
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_examples() {
        let s = cma_init(3, &[0.5; 3], 0.2, 8).unwrap();
        assert_eq!(s.cov, DMatrix::identity(3, 3));
        assert_eq!(s.mu, 4);
        assert!(s.weights.iter().all(|w| *w > 0.0));
        assert!((s.weights.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(s.weights.windows(2).all(|w| w[0] > w[1]));
        assert!(matches!(cma_init(3, &[0.5; 3], 0.0, 8), Err(Error::InvalidConfig(_))));
        assert!(matches!(cma_init(3, &[0.5; 3], 0.2, 1), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn weights_match_closed_form() {
        let s = cma_init(2, &[0.5; 2], 0.2, 8).unwrap();
        let raw: Vec<f64> = [1.0f64, 2.0, 3.0, 4.0].iter().map(|i| 4.5f64.ln() - i.ln()).collect();
        let sum: f64 = raw.iter().sum();
        for (w, r) in s.weights.iter().zip(&raw) {
            assert!((w - r / sum).abs() < 1e-15);
        }
    }

    #[test]
    fn all_failed() {
        let s = cma_init(2, &[0.5; 2], 0.2, 4).unwrap();
        let c = cma_ask(&s, &mut SeedPath::new(0).rng());
        assert!(matches!(cma_tell(&s, &c, &[f64::INFINITY; 4]), Err(Error::AllCandidatesFailed { generation: 0 })));
    }

    #[test]
    fn tied_ranks_share_weight() {
        let s = cma_init(1, &[0.5], 0.2, 4).unwrap();
        let w = rank_weights(&s, &[0, 1, 2, 3], &[1.0, 1.0, 2.0, 3.0]);
        assert!((w[0] - w[1]).abs() == 0.0);
        assert!((w[0] + w[1] - 1.0).abs() < 1e-15);
        assert_eq!(w[2], 0.0);
    }

    #[test]
    fn inactive_dims_follow_base() {
        let s = CmaState::for_subspace(&[0.1, 0.2, 0.3, 0.4], vec![1, 3], 0.5, 6).unwrap();
        for c in cma_ask(&s, &mut SeedPath::new(3).rng()) {
            assert_eq!(c.vector[0], 0.1);
            assert_eq!(c.vector[2], 0.3);
            assert!(c.vector.iter().all(|v| (0.0..=1.0).contains(v)));
            assert_eq!(c.sample.len(), 2);
        }
    }
}
