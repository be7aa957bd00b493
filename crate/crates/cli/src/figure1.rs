//! The simulation study: every `(schedule, replay, regime, seed)` run of
//! averaged SGD on the synthetic problem, with the gap measured at each
//! checkpoint and the expectation bound evaluated alongside.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use saddlemix_core::bounds::{best_over_eta, eta_grid, BestBound};
use saddlemix_core::markov::{mixing_time, tune_spectral_gap, ChainSampler, MixingReport, TunedChain};
use saddlemix_core::simulation::{build_stream, iid_sampler, run_cell, Regime, ReplaySettings};
use saddlemix_core::{BoundInputs, MixingProfile, ScheduleKind, SimulationInstance, StepSchedule};
use serde_json::json;

use crate::config::ExperimentConfig;
use crate::csv::{file_stem, mean_se, Table, ALL_SEEDS};
use crate::error::{CliError, CliResult};
use crate::plot;

pub struct StudyChain {
    pub name: String,
    pub target: f64,
    pub tuned: TunedChain,
    pub mixing: MixingReport,
    pub sampler: Arc<ChainSampler>,
}

impl StudyChain {
    pub fn diagnostics(&self, etas: &[f64]) -> serde_json::Value {
        let c = &self.tuned.chain;
        json!({
            "target": self.target,
            "lambda2": self.tuned.lambda2,
            "window": self.tuned.window,
            "laziness": self.tuned.laziness,
            "stationarity_residual": c.stationarity_residual(),
            "detailed_balance_residual": c.detailed_balance_residual(),
            "tau": etas.iter().map(|&e| json!({"eta": e, "tau": self.mixing.tau(e)})).collect::<Vec<_>>(),
            "warnings": self.mixing.warnings,
        })
    }
}

/// Tunes one chain per non-i.i.d. regime and measures its mixing curve down
/// to the smallest level on the bound grid.
pub fn build_chains(config: &ExperimentConfig) -> CliResult<(DVector<f64>, Vec<StudyChain>)> {
    let pi = config.chains.stationary.resolve(config.problem.states)?;
    let mut levels = eta_grid();
    levels.extend_from_slice(&config.etas);
    let mut chains: Vec<StudyChain> = Vec::new();
    for name in config.regimes.iter().filter(|r| *r != "iid") {
        if chains.iter().any(|c| &c.name == name) {
            continue;
        }
        let target = config.chains.targets[name];
        let tuned = tune_spectral_gap(&pi, target, config.chains.tolerance)?;
        if (tuned.lambda2 - target).abs() > config.chains.tolerance {
            return Err(CliError::Verification(format!(
                "chain {name}: second eigenvalue {} outside {target} ± {}",
                tuned.lambda2, config.chains.tolerance
            )));
        }
        let mixing = mixing_time(&tuned.chain, &levels)?;
        let sampler = Arc::new(ChainSampler::new(&tuned.chain));
        chains.push(StudyChain { name: name.clone(), target, tuned, mixing, sampler });
    }
    Ok((pi, chains))
}

pub fn mixing_profile(chains: &[StudyChain], regime: &str) -> MixingProfile {
    match chains.iter().find(|c| c.name == regime) {
        Some(c) => MixingProfile::Curve(c.mixing.tv_curve.clone()),
        None => MixingProfile::Iid,
    }
}

pub struct Cell {
    pub schedule: StepSchedule,
    pub replay: bool,
    pub regime: String,
    /// `gaps[seed][checkpoint]`, seeds in config order.
    pub gaps: Vec<Vec<f64>>,
    pub seconds: Vec<f64>,
    /// Expectation bound with the best grid `η`; `None` when no `η` has
    /// `τ(η) ≤ t/2`.
    pub bounds: Vec<Option<BestBound>>,
}

impl Cell {
    pub fn at(&self, k: usize) -> Vec<f64> {
        self.gaps.iter().map(|g| g[k]).collect()
    }

    pub fn final_gaps(&self) -> Vec<f64> {
        self.gaps.iter().map(|g| *g.last().expect("at least one checkpoint")).collect()
    }

    pub fn stem(&self) -> String {
        file_stem(&[&self.schedule.label(), &self.regime, replay_tag(self.replay)])
    }
}

fn replay_tag(replay: bool) -> &'static str {
    if replay {
        "replay"
    } else {
        "noreplay"
    }
}

pub struct Study {
    pub config: ExperimentConfig,
    pub hash: String,
    pub instance: SimulationInstance,
    pub chains: Vec<StudyChain>,
    pub checkpoints: Vec<usize>,
    pub cells: Vec<Cell>,
    pub seconds: f64,
}

impl Study {
    pub fn cell(&self, kind: ScheduleKind, regime: &str, replay: bool) -> Option<&Cell> {
        self.cells.iter().find(|c| c.schedule.kind() == kind && c.regime == regime && c.replay == replay)
    }
}

pub fn run_study(config: &ExperimentConfig) -> CliResult<Study> {
    config.validate()?;
    let started = Instant::now();
    let (pi, chains) = build_chains(config)?;
    let instance = SimulationInstance::generate(config.problem.spec(), &pi)?;
    let iid = iid_sampler(&pi)?;
    let checkpoints = config.checkpoints.resolve(config.horizon)?;
    let schedules = config.schedule_list()?;
    let replay = ReplaySettings { capacity: config.replay_capacity, warmup: config.replay_warmup() };
    if replay.capacity.is_some_and(|c| c < replay.warmup) && config.replay.contains(&true) {
        return Err(CliError::Config(format!(
            "replay_capacity {} is below the prefill {}",
            replay.capacity.unwrap(),
            replay.warmup
        )));
    }

    let mut keys = Vec::new();
    for schedule in &schedules {
        for &with_replay in &config.replay {
            for regime in &config.regimes {
                keys.push((*schedule, with_replay, regime.clone()));
            }
        }
    }
    let tasks: Vec<(usize, u64)> = (0..keys.len()).flat_map(|k| config.seeds.iter().map(move |&s| (k, s))).collect();
    let runs: Vec<CliResult<(Vec<f64>, f64)>> = tasks
        .par_iter()
        .map(|&(k, seed)| {
            let (schedule, with_replay, regime) = &keys[k];
            let source = match chains.iter().find(|c| &c.name == regime) {
                Some(c) => Regime::Chain(c.sampler.clone()),
                None => Regime::Iid,
            };
            let t0 = Instant::now();
            let mut stream = build_stream(&source, &iid, with_replay.then_some(replay), seed)?;
            let curve = run_cell(&instance, &mut stream, schedule, config.horizon, &checkpoints)?;
            Ok((curve.gaps, t0.elapsed().as_secs_f64()))
        })
        .collect();

    let (d, (l1, l2)) = (instance.diameter(), instance.lipschitz_constants());
    let mut runs = runs.into_iter();
    let mut cells = Vec::with_capacity(keys.len());
    for (schedule, with_replay, regime) in keys {
        let mut gaps = Vec::with_capacity(config.seeds.len());
        let mut seconds = Vec::with_capacity(config.seeds.len());
        for _ in &config.seeds {
            let (g, s) = runs.next().expect("one run per task")?;
            gaps.push(g);
            seconds.push(s);
        }
        // replay keeps the base chain's mixing time
        let profile = mixing_profile(&chains, &regime);
        let bounds = checkpoints
            .iter()
            .map(|&t| {
                let template = BoundInputs::new(d, l1, l2, schedule, t, 0, 0.0, config.delta);
                best_over_eta(&template, &profile, false).ok()
            })
            .collect();
        cells.push(Cell { schedule, replay: with_replay, regime, gaps, seconds, bounds });
    }
    Ok(Study {
        hash: config.hash(),
        config: config.clone(),
        instance,
        chains,
        checkpoints,
        cells,
        seconds: started.elapsed().as_secs_f64(),
    })
}

pub fn cell_table(study: &Study, cell: &Cell) -> Table {
    let mut t = Table::new(&study.hash);
    let label = cell.schedule.label();
    for (seed, gaps) in study.config.seeds.iter().zip(&cell.gaps) {
        for (&step, &gap) in study.checkpoints.iter().zip(gaps) {
            t.push(step, "gap", gap, seed, &cell.regime, &label, cell.replay);
        }
    }
    t
}

pub fn mean_table(study: &Study) -> Table {
    let mut t = Table::new(&study.hash);
    for cell in &study.cells {
        let label = cell.schedule.label();
        for (k, &step) in study.checkpoints.iter().enumerate() {
            let (mean, se) = mean_se(&cell.at(k));
            t.push(step, "gap_mean", mean, ALL_SEEDS, &cell.regime, &label, cell.replay);
            t.push(step, "gap_se", se, ALL_SEEDS, &cell.regime, &label, cell.replay);
            if let Some(b) = &cell.bounds[k] {
                t.push(step, "lemma1_bound", b.value, ALL_SEEDS, &cell.regime, &label, cell.replay);
                t.push(step, "lemma1_tau", b.tau as f64, ALL_SEEDS, &cell.regime, &label, cell.replay);
            }
        }
    }
    t
}

pub fn metadata(study: &Study) -> serde_json::Value {
    let (a_max, b_max) = study.instance.sample_norms();
    let (l1, l2) = study.instance.lipschitz_constants();
    let saddle = study.instance.expected().unconstrained_saddle();
    let chains: serde_json::Map<String, serde_json::Value> =
        study.chains.iter().map(|c| (c.name.clone(), c.diagnostics(&study.config.etas))).collect();
    json!({
        "config_hash": study.hash,
        "config": study.config,
        "replay_warmup": study.config.replay_warmup(),
        "chains": chains,
        "instance": {
            "diameter": study.instance.diameter(),
            "l1": l1,
            "l2": l2,
            "max_sample_a_norm": a_max,
            "max_sample_b_norm": b_max,
            "saddle_x_norm": saddle.as_ref().map(|z| z.x.norm()),
            "saddle_y_norm": saddle.as_ref().map(|z| z.y.norm()),
        },
        "cells": study.cells.iter().map(|c| json!({
            "file": format!("cells/{}.csv", c.stem()),
            "schedule": c.schedule.label(),
            "regime": c.regime,
            "replay": c.replay,
            "wall_clock_seconds": c.seconds,
            "precondition_flagged_checkpoints": c.bounds.iter().filter(|b| b.is_none()).count(),
        })).collect::<Vec<_>>(),
        "wall_clock_seconds": study.seconds,
    })
}

pub fn write_json(path: &Path, value: &serde_json::Value) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).expect("json value serializes");
    std::fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

/// Writes per-cell CSVs, the summary CSV, the panels rendered from it, and
/// `metadata.json` under `<out>/figure1`.
pub fn write_outputs(study: &Study, out: &Path) -> CliResult<()> {
    let dir = out.join("figure1");
    for cell in &study.cells {
        cell_table(study, cell).write(&dir.join("cells").join(format!("{}.csv", cell.stem())))?;
    }
    let mean = dir.join("figure1_mean.csv");
    mean_table(study).write(&mean)?;
    plot::render_csv(&mean, &dir.join("plots"))?;
    write_json(&dir.join("metadata.json"), &metadata(study))
}

pub fn cmd_figure1(config: &ExperimentConfig) -> CliResult<Study> {
    let study = run_study(config)?;
    write_outputs(&study, &config.out_dir())?;
    for c in &study.chains {
        let taus: Vec<String> = study.config.etas.iter().map(|&e| format!("τ({e})={}", c.mixing.tau(e).unwrap_or(0))).collect();
        println!(
            "chain {:<6} λ2 {:.4} (target {}), window {}, laziness {:.5}, {}",
            c.name,
            c.tuned.lambda2,
            c.target,
            c.tuned.window,
            c.tuned.laziness,
            taus.join(" ")
        );
    }
    println!("{:<18} {:<8} {:<6} {:>14} {:>12}", "schedule", "replay", "regime", "final gap", "se");
    for cell in &study.cells {
        let (mean, se) = mean_se(&cell.final_gaps());
        println!("{:<18} {:<8} {:<6} {:>14.6e} {:>12.3e}", cell.schedule.label(), replay_tag(cell.replay), cell.regime, mean, se);
    }
    println!("config {}  wrote {}", study.hash, config.out_dir().join("figure1").display());
    Ok(study)
}
