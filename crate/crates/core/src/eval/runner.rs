use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conformal::{write_intervals, IntervalRecord};
use crate::env::{generate_offline, load_csv, CsvSchema, EnvConfig, Environment, EvalContext, OfflineDataset};
use crate::error::{Error, Result};
use crate::lin_lcb::{run_linlcb, HybridConfig};
use crate::neural_lcb::{run_offline, write_rounds};
use crate::persist::{self, PolicyDims, StoredPolicy};
use crate::rng;

use super::config::{Algorithm, ExperimentConfig, GridPoint};
use super::metrics::{
    coverage_from_records, mean_std, replay_suboptimality, suboptimality_by_group, CoverageReport, GroupSubOpt,
    SubOptBreakdown,
};

pub const REGRET_CSV: &str = "regret.csv";
pub const REGRET_GROUPS_CSV: &str = "regret_groups.csv";
pub const INTERVALS_CSV: &str = "intervals.csv";
pub const COVERAGE_CSV: &str = "coverage.csv";
pub const MANIFEST_JSON: &str = "manifest.json";

const EVAL_NOTE: &str = "evaluation contexts are drawn from the same context distribution as the training data";

/// Seed offsets under each experiment seed.
mod split {
    pub const TRAIN: u64 = 1;
    pub const TEST: u64 = 2;
    pub const EVAL: u64 = 3;
    pub const ALGORITHM: u64 = 4;
    pub const MIXTURE: u64 = 5;
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegretRow {
    pub algorithm: String,
    pub lr: Option<f64>,
    pub beta: f64,
    pub cpr: Option<f64>,
    pub group: String,
    pub train_size: usize,
    pub mean_subopt: f64,
    pub std_subopt: f64,
    pub seeds: usize,
    pub mean_penalty: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IntervalRow {
    pub algorithm: String,
    pub lr: Option<f64>,
    pub beta: f64,
    pub cpr: Option<f64>,
    pub train_size: usize,
    pub seed: u64,
    pub index: usize,
    pub q_hat: f64,
    pub lower: f64,
    pub upper: f64,
    pub alpha: f64,
    pub covered: u8,
    pub width: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CoverageCsvRow {
    pub algorithm: String,
    pub lr: Option<f64>,
    pub beta: f64,
    pub cpr: Option<f64>,
    pub train_size: usize,
    pub seed: u64,
    pub alpha: f64,
    pub coverage: f64,
    pub width: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JobEntry {
    pub dir: String,
    pub lr: Option<f64>,
    pub beta: f64,
    pub cpr: Option<f64>,
    pub train_size: usize,
    pub seed: u64,
    pub subopt: f64,
    pub mean_penalty: f64,
    pub replay: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub config: ExperimentConfig,
    pub eval_distribution: String,
    pub files: Vec<String>,
    pub jobs: Vec<JobEntry>,
}

/// Sub-optimality of one job on its evaluation set.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub subopt: f64,
    pub count: usize,
    pub groups: Vec<GroupSubOpt>,
    /// `β ·` mean penalty over arms and contexts.
    pub mean_penalty: f64,
    /// Replay estimate on unlabeled logged data rather than exact values.
    pub replay: bool,
}

#[derive(Debug, Clone)]
pub struct JobResult {
    pub point: GridPoint,
    pub train_size: usize,
    pub seed: u64,
    pub eval: EvalSummary,
    pub intervals: Vec<IntervalRecord>,
    pub coverage: CoverageReport,
}

/// Everything `run_experiment` wrote.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub dir: PathBuf,
    pub regret: Vec<RegretRow>,
    pub jobs: Vec<JobResult>,
}

enum EvalSet {
    Known(Vec<EvalContext>),
    Replay(OfflineDataset),
}

struct SeedData {
    seed: u64,
    train: OfflineDataset,
    test: OfflineDataset,
    eval: EvalSet,
}

/// Runs every `(grid point, train size, seed)` job and writes the report
/// files into `out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let max_n = *cfg.train_sizes.last().expect("validated nonempty");
    let data: Vec<SeedData> = cfg
        .seeds
        .par_iter()
        .map(|&seed| seed_data(cfg, seed, max_n))
        .collect::<Result<_>>()?;
    let dims = {
        let t = &data[0].train;
        PolicyDims {
            arms: t.arms(),
            raw_dim: t.raw_dim(),
        }
    };

    let mut specs = Vec::new();
    for point in cfg.grid() {
        for &n in &cfg.train_sizes {
            for d in &data {
                specs.push((point, n, d));
            }
        }
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::file(out_dir, e))?;
    let jobs_root = out_dir.join("jobs");
    let results: Vec<JobResult> = specs
        .par_iter()
        .map(|&(point, n, d)| {
            let name = job_name(cfg.algorithm, point, n, d.seed);
            run_job(cfg, point, n, d, dims, &jobs_root.join(&name)).map_err(|e| Error::Job {
                job: name,
                source: Box::new(e),
            })
        })
        .collect::<Result<_>>()?;

    let regret = aggregate(cfg, &results, false);
    let groups = aggregate(cfg, &results, true);
    write_rows(&out_dir.join(REGRET_CSV), &regret)?;
    let mut files = vec![REGRET_CSV.to_string()];
    if !groups.is_empty() {
        write_rows(&out_dir.join(REGRET_GROUPS_CSV), &groups)?;
        files.push(REGRET_GROUPS_CSV.into());
    }
    let label = cfg.algorithm.label();
    let interval_rows: Vec<IntervalRow> = results
        .iter()
        .flat_map(|r| {
            r.intervals.iter().map(move |iv| IntervalRow {
                algorithm: label.into(),
                lr: r.point.lr,
                beta: r.point.beta,
                cpr: r.point.cpr,
                train_size: r.train_size,
                seed: r.seed,
                index: iv.index,
                q_hat: iv.q_hat,
                lower: iv.lower,
                upper: iv.upper,
                alpha: iv.alpha,
                covered: iv.covered,
                width: iv.width,
            })
        })
        .collect();
    write_rows(&out_dir.join(INTERVALS_CSV), &interval_rows)?;
    let coverage_rows: Vec<CoverageCsvRow> = results
        .iter()
        .flat_map(|r| {
            r.coverage.rows.iter().map(move |c| CoverageCsvRow {
                algorithm: label.into(),
                lr: r.point.lr,
                beta: r.point.beta,
                cpr: r.point.cpr,
                train_size: r.train_size,
                seed: r.seed,
                alpha: c.alpha,
                coverage: c.coverage,
                width: c.width,
                count: c.count,
            })
        })
        .collect();
    write_rows(&out_dir.join(COVERAGE_CSV), &coverage_rows)?;
    files.extend([INTERVALS_CSV.to_string(), COVERAGE_CSV.to_string()]);

    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").into(),
        config: cfg.clone(),
        eval_distribution: EVAL_NOTE.into(),
        files,
        jobs: results
            .iter()
            .map(|r| JobEntry {
                dir: format!("jobs/{}", job_name(cfg.algorithm, r.point, r.train_size, r.seed)),
                lr: r.point.lr,
                beta: r.point.beta,
                cpr: r.point.cpr,
                train_size: r.train_size,
                seed: r.seed,
                subopt: r.eval.subopt,
                mean_penalty: r.eval.mean_penalty,
                replay: r.eval.replay,
            })
            .collect(),
    };
    persist::write_json(&out_dir.join(MANIFEST_JSON), &manifest)?;
    Ok(ExperimentOutput {
        dir: out_dir.to_path_buf(),
        regret,
        jobs: results,
    })
}

fn job_name(alg: Algorithm, p: GridPoint, n: usize, seed: u64) -> String {
    let mut s = alg.label().to_string();
    if let Some(lr) = p.lr {
        write!(s, "_lr{lr}").expect("string write");
    }
    write!(s, "_beta{}", p.beta).expect("string write");
    if let Some(c) = p.cpr {
        write!(s, "_cpr{c}").expect("string write");
    }
    write!(s, "_n{n}_seed{seed}").expect("string write");
    s
}

fn seed_data(cfg: &ExperimentConfig, seed: u64, max_n: usize) -> Result<SeedData> {
    if let Some(env_cfg) = &cfg.env {
        let env = Environment::new(env_cfg.clone())?;
        let train = generate_offline(&env, max_n, cfg.epsilon, rng::child_seed(seed, split::TRAIN))?;
        let test = if cfg.test_size == 0 {
            OfflineDataset::new(Vec::new(), env.arms(), env.raw_dim())?
        } else {
            generate_offline(&env, cfg.test_size, cfg.epsilon, rng::child_seed(seed, split::TEST))?
        };
        let eval = env.sample_eval(cfg.eval_size, rng::child_seed(seed, split::EVAL))?;
        return Ok(SeedData {
            seed,
            train,
            test,
            eval: EvalSet::Known(eval),
        });
    }
    let csv = cfg.csv.as_ref().expect("validated data source");
    let schema = csv.schema();
    let train = load_csv(&csv.train, &schema)?;
    if train.len() < max_n {
        return Err(Error::Input(format!(
            "{} has {} records but train_sizes asks for {max_n}",
            csv.train.display(),
            train.len()
        )));
    }
    let test = match &csv.test {
        Some(p) => load_csv(p, &schema)?,
        None => OfflineDataset::new(Vec::new(), csv.arms, csv.raw_dim)?,
    };
    let eval_data = match &csv.eval {
        Some(p) => load_csv(p, &schema)?,
        None => train.clone(),
    };
    Ok(SeedData {
        seed,
        train,
        test,
        eval: eval_set(eval_data)?,
    })
}

fn eval_set(data: OfflineDataset) -> Result<EvalSet> {
    if !data.is_empty() && data.records().iter().all(|r| r.label.is_some()) {
        Ok(EvalSet::Known(data.labeled_eval()?))
    } else {
        Ok(EvalSet::Replay(data))
    }
}

fn run_job(
    cfg: &ExperimentConfig,
    point: GridPoint,
    n: usize,
    data: &SeedData,
    dims: PolicyDims,
    dir: &Path,
) -> Result<JobResult> {
    let train = data.train.prefix(n);
    let seed = rng::child_seed(data.seed, split::ALGORITHM);
    fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
    let (policy, intervals) = match cfg.algorithm {
        Algorithm::NeuralLcb => {
            let mut hp = cfg.hyper.clone();
            hp.step = point.lr.expect("neural grid has lr");
            hp.beta = point.beta;
            hp.snapshot_stride = hp.snapshot_stride.max(n.div_ceil(cfg.max_snapshots));
            let run = run_offline(&train, &data.test, &hp, seed)?;
            write_file(&dir.join("rounds.csv"), |w| write_rounds(w, &run.rounds))?;
            let mix_seed = rng::child_seed(data.seed, split::MIXTURE);
            if cfg.save_policies {
                persist::save_neural(&dir.join("policy"), &run.mixture, dims, mix_seed)?;
            }
            (
                StoredPolicy::Neural {
                    mixture: run.mixture,
                    seed: mix_seed,
                },
                run.intervals,
            )
        }
        Algorithm::LinLcb | Algorithm::Hybrid => {
            let hc = HybridConfig::new(point.cpr.expect("linear grid has cpr"), point.beta)?;
            let run = run_linlcb(&train, &data.test, hc, cfg.lambda, &cfg.ensemble, seed)?;
            if cfg.save_policies {
                persist::save_linear(&dir.join("policy"), &run.policy, dims)?;
            }
            (StoredPolicy::Linear(run.policy), run.intervals)
        }
    };
    write_file(&dir.join(INTERVALS_CSV), |w| write_intervals(w, &intervals))?;
    let eval = evaluate(&policy, point.beta, &data.eval)?;
    Ok(JobResult {
        point,
        train_size: n,
        seed: data.seed,
        eval,
        coverage: coverage_from_records(&intervals),
        intervals,
    })
}

fn evaluate(policy: &StoredPolicy, beta: f64, eval: &EvalSet) -> Result<EvalSummary> {
    let act = |b: &[Vec<f64>]| policy.act(b);
    match eval {
        EvalSet::Known(ctx) => {
            let SubOptBreakdown { overall, count, groups } = suboptimality_by_group(act, ctx)?;
            let mut pen = 0.0;
            for c in ctx {
                pen += policy.mean_penalty(&c.features)?;
            }
            Ok(EvalSummary {
                subopt: overall,
                count,
                groups,
                mean_penalty: beta * pen / ctx.len() as f64,
                replay: false,
            })
        }
        EvalSet::Replay(data) => {
            let est = replay_suboptimality(act, data)?;
            let mut pen = 0.0;
            for r in data.records() {
                pen += policy.mean_penalty(&r.features)?;
            }
            Ok(EvalSummary {
                subopt: est.subopt(),
                count: data.len(),
                groups: Vec::new(),
                mean_penalty: beta * pen / data.len() as f64,
                replay: true,
            })
        }
    }
}

/// One row per `(grid point, train size)` and group, in grid order.
fn aggregate(cfg: &ExperimentConfig, results: &[JobResult], by_group: bool) -> Vec<RegretRow> {
    let mut keyed: BTreeMap<(usize, usize, String), Vec<(f64, f64)>> = BTreeMap::new();
    let grid = cfg.grid();
    for r in results {
        let gi = grid.iter().position(|p| *p == r.point).expect("job from grid");
        let ni = cfg.train_sizes.iter().position(|n| *n == r.train_size).expect("job from grid");
        if by_group {
            for g in &r.eval.groups {
                keyed
                    .entry((gi, ni, g.group.to_string()))
                    .or_default()
                    .push((g.subopt, r.eval.mean_penalty));
            }
        } else {
            keyed
                .entry((gi, ni, "all".into()))
                .or_default()
                .push((r.eval.subopt, r.eval.mean_penalty));
        }
    }
    keyed
        .into_iter()
        .map(|((gi, ni, group), v)| {
            let sub: Vec<f64> = v.iter().map(|x| x.0).collect();
            let (mean, std) = mean_std(&sub);
            let p = grid[gi];
            RegretRow {
                algorithm: cfg.algorithm.label().into(),
                lr: p.lr,
                beta: p.beta,
                cpr: p.cpr,
                group,
                train_size: cfg.train_sizes[ni],
                mean_subopt: mean,
                std_subopt: std,
                seeds: v.len(),
                mean_penalty: v.iter().map(|x| x.1).sum::<f64>() / v.len() as f64,
            }
        })
        .collect()
}

fn write_file(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::file(path, e))?;
    let mut out = BufWriter::new(file);
    f(&mut out)?;
    out.flush().map_err(|e| Error::file(path, e))
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    write_file(path, |out| {
        let mut w = csv::Writer::from_writer(out);
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    })
}

/// Parses a report CSV written by [`run_experiment`].
pub fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::file(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    r.deserialize().map(|row| row.map_err(Error::from)).collect()
}

/// Loads a policy directory and evaluates it on `data`: a dataset CSV
/// (labeled files score exactly, others by replay) or an environment
/// config (TOML/JSON), from which `eval_size` contexts are sampled.
pub fn evaluate_policy_dir(policy_dir: &Path, data: &Path, eval_size: usize, seed: u64) -> Result<EvalSummary> {
    let (manifest, policy) = persist::load_policy(policy_dir)?;
    let beta = match &policy {
        StoredPolicy::Neural { mixture, .. } => mixture.last().beta,
        StoredPolicy::Linear(p) => p.config.beta(),
    };
    let eval = if data.extension().is_some_and(|e| e == "csv") {
        let schema = detect_schema(data, manifest.arms, manifest.raw_dim)?;
        eval_set(load_csv(data, &schema)?)?
    } else {
        let text = fs::read_to_string(data).map_err(|e| Error::file(data, e))?;
        let env_cfg: EnvConfig = if data.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?
        } else {
            toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?
        };
        let env = Environment::new(env_cfg)?;
        if env.arms() != manifest.arms || env.raw_dim() != manifest.raw_dim {
            return Err(Error::Shape(format!(
                "environment has {} arms of raw dimension {}; policy expects {} and {}",
                env.arms(),
                env.raw_dim(),
                manifest.arms,
                manifest.raw_dim
            )));
        }
        EvalSet::Known(env.sample_eval(eval_size.max(1), seed)?)
    };
    evaluate(&policy, beta, &eval)
}

/// Standard layout plus whichever of `reward`, `label` and `group` the
/// header contains.
fn detect_schema(path: &Path, arms: usize, raw_dim: usize) -> Result<CsvSchema> {
    let file = File::open(path).map_err(|e| Error::file(path, e))?;
    let mut r = csv::Reader::from_reader(file);
    let headers = r.headers()?.clone();
    let has = |c: &str| headers.iter().any(|h| h == c);
    let mut schema = match (has("reward"), has("label")) {
        (true, true) => CsvSchema::standard(arms, raw_dim).with_label("label"),
        (true, false) => CsvSchema::standard(arms, raw_dim),
        (false, true) => CsvSchema::classification(arms, raw_dim, "label"),
        (false, false) => return Err(Error::MissingColumn("reward".into())),
    };
    if has("group") {
        schema = schema.with_group("group");
    }
    Ok(schema)
}

/// Text summary of a results directory: learning curves per setting and
/// group, then coverage and width per `α` averaged over seeds.
pub fn report(results_dir: &Path) -> Result<String> {
    let mut regret: Vec<RegretRow> = read_rows(&results_dir.join(REGRET_CSV))?;
    let groups = results_dir.join(REGRET_GROUPS_CSV);
    if groups.exists() {
        regret.extend(read_rows::<RegretRow>(&groups)?);
    }
    let coverage: Vec<CoverageCsvRow> = read_rows(&results_dir.join(COVERAGE_CSV))?;
    let _: Vec<IntervalRow> = read_rows(&results_dir.join(INTERVALS_CSV))?;

    let fmt_opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| x.to_string());
    let mut out = String::new();
    let mut curves: BTreeMap<String, Vec<&RegretRow>> = BTreeMap::new();
    for r in &regret {
        let key = format!(
            "{} lr={} beta={} cpr={} group={}",
            r.algorithm,
            fmt_opt(r.lr),
            r.beta,
            fmt_opt(r.cpr),
            r.group
        );
        curves.entry(key).or_default().push(r);
    }
    writeln!(out, "sub-optimality (mean ± std over seeds)").expect("string write");
    for (key, rows) in &curves {
        writeln!(out, "  {key}").expect("string write");
        for r in rows {
            writeln!(
                out,
                "    n={:<6} {:.4} ± {:.4}  (seeds {}, penalty {:.4})",
                r.train_size, r.mean_subopt, r.std_subopt, r.seeds, r.mean_penalty
            )
            .expect("string write");
        }
    }
    let mut cov: BTreeMap<(String, usize, u64), (f64, f64, f64, usize)> = BTreeMap::new();
    for c in &coverage {
        let key = format!("{} lr={} beta={} cpr={}", c.algorithm, fmt_opt(c.lr), c.beta, fmt_opt(c.cpr));
        let e = cov.entry((key, c.train_size, c.alpha.to_bits())).or_insert((c.alpha, 0.0, 0.0, 0));
        e.1 += c.coverage;
        e.2 += c.width;
        e.3 += 1;
    }
    if !cov.is_empty() {
        writeln!(out, "interval coverage / width (mean over seeds)").expect("string write");
        for ((key, n, _), (alpha, c, w, k)) in &cov {
            writeln!(
                out,
                "  {key} n={n} alpha={alpha}: coverage {:.4}, width {:.4}",
                c / *k as f64,
                w / *k as f64
            )
            .expect("string write");
        }
    }
    Ok(out)
}
