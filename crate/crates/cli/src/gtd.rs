//! GTD / GTD2 runs on a configured MDP, on- and off-policy, under i.i.d. or
//! Markov sampling of transitions.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DMatrix;
use rayon::prelude::*;
use saddlemix_core::gtd::{random_mdp, swap2, walk5};
use saddlemix_core::markov::ChainSampler;
use saddlemix_core::simulation::{build_stream, iid_sampler, Regime};
use saddlemix_core::{
    exact_instance_matrices, exact_value, primal_dual_gap, run_sgd, value_error, FeatureMap, GtdInstance, GtdMode,
    MdpSpec, PolicyMode, SaddlePoint, StepSchedule,
};
use serde_json::json;

use crate::config::{ExperimentConfig, GtdConfig};
use crate::csv::{file_stem, mean_se, Table, ALL_SEEDS};
use crate::error::{CliError, CliResult};
use crate::figure1::write_json;
use crate::plot;

pub const METRICS: [&str; 3] = ["value_error", "residual", "gap"];

pub fn build_mdp(cfg: &GtdConfig) -> CliResult<MdpSpec> {
    let base = match cfg.mdp.as_str() {
        "walk5" => walk5(cfg.gamma)?,
        "swap2" => swap2(cfg.gamma, [1.0, 0.0])?,
        "random" => random_mdp(cfg.states, cfg.actions, cfg.gamma, cfg.mdp_seed)?,
        path => {
            let p = Path::new(path);
            let file = File::open(p).map_err(|e| CliError::io(p, e))?;
            MdpSpec::read_text(BufReader::new(file))?
        }
    };
    if !(0.0..=1.0).contains(&cfg.target_bias) {
        return Err(CliError::Config(format!("target_bias must lie in [0, 1], got {}", cfg.target_bias)));
    }
    if cfg.target_bias == 0.0 {
        return Ok(base);
    }
    let last = base.actions() - 1;
    let mut target: DMatrix<f64> = base.target() * (1.0 - cfg.target_bias);
    for s in 0..base.states() {
        target[(s, last)] += cfg.target_bias;
    }
    Ok(base.with_target(target)?)
}

pub fn build_features(cfg: &GtdConfig, states: usize) -> CliResult<FeatureMap> {
    match cfg.features.as_str() {
        "tabular" => Ok(FeatureMap::tabular(states)),
        "random" => Ok(FeatureMap::random(states, cfg.feature_dim, cfg.feature_seed)?),
        other => Err(CliError::Config(format!("unknown feature map {other:?}"))),
    }
}

pub fn parse_mode(s: &str) -> CliResult<GtdMode> {
    match s {
        "gtd" => Ok(GtdMode::Gtd),
        "gtd2" => Ok(GtdMode::Gtd2),
        _ => Err(CliError::Config(format!("unknown GTD mode {s:?}"))),
    }
}

pub fn parse_policy(s: &str) -> CliResult<PolicyMode> {
    match s {
        "on" => Ok(PolicyMode::OnPolicy),
        "off" => Ok(PolicyMode::OffPolicy),
        _ => Err(CliError::Config(format!("unknown policy mode {s:?}"))),
    }
}

fn check_sampling(s: &str) -> CliResult<()> {
    match s {
        "iid" | "markov" => Ok(()),
        _ => Err(CliError::Config(format!("unknown sampling {s:?}"))),
    }
}

/// All `(mode, policy)` instances named by the config, in config order.
pub fn build_instances(cfg: &GtdConfig) -> CliResult<Vec<GtdInstance>> {
    let mdp = build_mdp(cfg)?;
    let features = build_features(cfg, mdp.states())?;
    let mut out = Vec::new();
    for m in &cfg.modes {
        for p in &cfg.policies {
            out.push(exact_instance_matrices(&mdp, &features, parse_mode(m)?, parse_policy(p)?)?);
        }
    }
    Ok(out)
}

pub fn label(instance: &GtdInstance, sampling: &str) -> String {
    format!("{}/{}/{sampling}", instance.mode().name(), instance.policy().name())
}

pub struct GtdCell {
    pub instance: Arc<GtdInstance>,
    pub sampling: String,
    /// `metrics[seed][metric][checkpoint]`, metrics ordered as [`METRICS`].
    pub metrics: Vec<[Vec<f64>; 3]>,
    pub seconds: Vec<f64>,
}

impl GtdCell {
    pub fn label(&self) -> String {
        label(&self.instance, &self.sampling)
    }

    pub fn series(&self, metric: usize, k: usize) -> Vec<f64> {
        self.metrics.iter().map(|m| m[metric][k]).collect()
    }
}

pub struct GtdStudy {
    pub config: ExperimentConfig,
    pub hash: String,
    pub schedule: StepSchedule,
    pub checkpoints: Vec<usize>,
    pub cells: Vec<GtdCell>,
    pub seconds: f64,
}

fn run_one(instance: &GtdInstance, sampling: &str, schedule: &StepSchedule, config: &ExperimentConfig, checkpoints: &[usize], seed: u64) -> CliResult<[Vec<f64>; 3]> {
    let radius = config.gtd.radius;
    let problem = instance.saddle_problem(radius, radius)?;
    let expected = instance.expected_problem(radius, radius)?;
    let chain = instance.transition_chain();
    let iid = iid_sampler(chain.stationary())?;
    let regime = if sampling == "markov" { Regime::Chain(Arc::new(ChainSampler::new(chain))) } else { Regime::Iid };
    let mut stream = build_stream(&regime, &iid, None, seed)?;
    let d = instance.features().dim();
    let trajectory = run_sgd(&problem, &mut stream, schedule, config.horizon, &SaddlePoint::zeros(d, d), checkpoints)?;
    let mut out: [Vec<f64>; 3] = Default::default();
    for c in &trajectory.checkpoints {
        out[0].push(value_error(instance, &c.average.x)?);
        out[1].push(instance.residual(&c.average.x));
        out[2].push(primal_dual_gap(&expected, &c.average)?.gap);
    }
    Ok(out)
}

pub fn run_gtd(config: &ExperimentConfig) -> CliResult<GtdStudy> {
    config.validate()?;
    let started = Instant::now();
    let cfg = &config.gtd;
    for s in &cfg.sampling {
        check_sampling(s)?;
    }
    if cfg.sampling.is_empty() || cfg.modes.is_empty() || cfg.policies.is_empty() {
        return Err(CliError::Config("gtd needs at least one mode, policy and sampling".into()));
    }
    let schedule = cfg.schedule.build()?;
    let checkpoints = config.checkpoints.resolve(config.horizon)?;
    let instances: Vec<Arc<GtdInstance>> = build_instances(cfg)?.into_iter().map(Arc::new).collect();
    let keys: Vec<(Arc<GtdInstance>, String)> =
        instances.iter().flat_map(|i| cfg.sampling.iter().map(move |s| (i.clone(), s.clone()))).collect();
    let tasks: Vec<(usize, u64)> = (0..keys.len()).flat_map(|k| config.seeds.iter().map(move |&s| (k, s))).collect();
    let runs: Vec<CliResult<([Vec<f64>; 3], f64)>> = tasks
        .par_iter()
        .map(|&(k, seed)| {
            let t0 = Instant::now();
            let m = run_one(&keys[k].0, &keys[k].1, &schedule, config, &checkpoints, seed)?;
            Ok((m, t0.elapsed().as_secs_f64()))
        })
        .collect();
    let mut runs = runs.into_iter();
    let mut cells = Vec::new();
    for (instance, sampling) in keys {
        let mut metrics = Vec::new();
        let mut seconds = Vec::new();
        for _ in &config.seeds {
            let (m, s) = runs.next().expect("one run per task")?;
            metrics.push(m);
            seconds.push(s);
        }
        cells.push(GtdCell { instance, sampling, metrics, seconds });
    }
    Ok(GtdStudy {
        config: config.clone(),
        hash: config.hash(),
        schedule,
        checkpoints,
        cells,
        seconds: started.elapsed().as_secs_f64(),
    })
}

pub fn cell_table(study: &GtdStudy, cell: &GtdCell) -> Table {
    let mut t = Table::new(&study.hash);
    let (label, sched) = (cell.label(), study.schedule.label());
    for (seed, m) in study.config.seeds.iter().zip(&cell.metrics) {
        for (i, name) in METRICS.iter().enumerate() {
            for (&step, &v) in study.checkpoints.iter().zip(&m[i]) {
                t.push(step, name, v, seed, &label, &sched, false);
            }
        }
    }
    t
}

pub fn mean_table(study: &GtdStudy) -> Table {
    let mut t = Table::new(&study.hash);
    let sched = study.schedule.label();
    for cell in &study.cells {
        let label = cell.label();
        for (i, name) in METRICS.iter().enumerate() {
            for (k, &step) in study.checkpoints.iter().enumerate() {
                let (mean, se) = mean_se(&cell.series(i, k));
                t.push(step, &format!("{name}_mean"), mean, ALL_SEEDS, &label, &sched, false);
                t.push(step, &format!("{name}_se"), se, ALL_SEEDS, &label, &sched, false);
            }
        }
    }
    t
}

pub fn metadata(study: &GtdStudy) -> CliResult<serde_json::Value> {
    let mut instances = Vec::new();
    for cell in &study.cells {
        let i = &cell.instance;
        let k = i.constants();
        let (cond_a, cond_c) = i.condition_numbers();
        instances.push(json!({
            "label": cell.label(),
            "rho_max": k.rho_max,
            "gamma": k.gamma,
            "feature_bound": k.feature_bound,
            "dim": k.dim,
            "reward_max": k.reward_max,
            "lambda_m": k.lambda_m,
            "lambda_c": k.lambda_c,
            "nu_c": k.nu_c,
            "nu_atma": k.nu_atma,
            "pi_max": k.pi_max,
            "condition_a": cond_a,
            "condition_c": cond_c,
            "solution": i.solution()?.as_slice(),
            "exact_value": exact_value(i.mdp(), i.mdp().target())?.as_slice(),
            "transitions": i.transitions().len(),
            "wall_clock_seconds": cell.seconds,
        }));
    }
    Ok(json!({
        "config_hash": study.hash,
        "config": study.config,
        "schedule": study.schedule.label(),
        "cells": instances,
        "wall_clock_seconds": study.seconds,
    }))
}

pub fn write_outputs(study: &GtdStudy, out: &Path) -> CliResult<()> {
    let dir = out.join("gtd");
    for cell in &study.cells {
        let stem = file_stem(&[&cell.label()]);
        cell_table(study, cell).write(&dir.join("cells").join(format!("{stem}.csv")))?;
    }
    let mean = dir.join("gtd_mean.csv");
    mean_table(study).write(&mean)?;
    plot::render_csv(&mean, &dir.join("plots"))?;
    write_json(&dir.join("metadata.json"), &metadata(study)?)
}

pub fn cmd_gtd(config: &ExperimentConfig) -> CliResult<GtdStudy> {
    let study = run_gtd(config)?;
    write_outputs(&study, &config.out_dir())?;
    println!("{:<18} {:>8} {:>14} {:>14} {:>14}", "run", "rho_max", "value error", "residual", "gap");
    for cell in &study.cells {
        let last = study.checkpoints.len() - 1;
        let m: Vec<f64> = (0..3).map(|i| mean_se(&cell.series(i, last)).0).collect();
        println!(
            "{:<18} {:>8.3} {:>14.6e} {:>14.6e} {:>14.6e}",
            cell.label(),
            cell.instance.constants().rho_max,
            m[0],
            m[1],
            m[2]
        );
    }
    println!("config {}  wrote {}", study.hash, config.out_dir().join("gtd").display());
    Ok(study)
}
