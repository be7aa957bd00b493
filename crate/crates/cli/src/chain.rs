//! Builds one tuned chain, checks it, saves it, and reports mixing times.

use std::fs::File;
use std::io::BufWriter;

use saddlemix_core::markov::{mixing_time, tune_spectral_gap, two_state_tau, MixingReport, TunedChain};
use serde_json::json;

use crate::config::ExperimentConfig;
use crate::error::{CliError, CliResult};
use crate::figure1::write_json;

pub const STATIONARITY_TOL: f64 = 1e-10;
pub const DETAILED_BALANCE_TOL: f64 = 1e-12;

pub struct ChainReport {
    pub tuned: TunedChain,
    pub mixing: MixingReport,
    /// Two-state chains only: `(η, closed-form τ)`.
    pub closed_form: Vec<(f64, usize)>,
}

pub fn build(config: &ExperimentConfig) -> CliResult<ChainReport> {
    let cfg = &config.chain;
    let pi = cfg.stationary.resolve(cfg.states)?;
    let tuned = tune_spectral_gap(&pi, cfg.target, cfg.tolerance)?;
    let chain = &tuned.chain;
    if (tuned.lambda2 - cfg.target).abs() > cfg.tolerance {
        return Err(CliError::Verification(format!("λ2 {} outside {} ± {}", tuned.lambda2, cfg.target, cfg.tolerance)));
    }
    let stationarity = chain.stationarity_residual();
    if stationarity > STATIONARITY_TOL {
        return Err(CliError::Verification(format!("stationarity residual {stationarity:e}")));
    }
    let balance = chain.detailed_balance_residual();
    if balance > DETAILED_BALANCE_TOL {
        return Err(CliError::Verification(format!("detailed-balance residual {balance:e}")));
    }
    let mixing = mixing_time(chain, &config.etas)?;
    let mut closed_form = Vec::new();
    if cfg.states == 2 {
        let (p, q) = (chain.transition()[(0, 1)], chain.transition()[(1, 0)]);
        for &eta in &config.etas {
            let exact = two_state_tau(p, q, eta);
            if mixing.tau(eta) != Some(exact) {
                return Err(CliError::Verification(format!(
                    "τ({eta}) = {:?} differs from the closed form {exact}",
                    mixing.tau(eta)
                )));
            }
            closed_form.push((eta, exact));
        }
    }
    Ok(ChainReport { tuned, mixing, closed_form })
}

pub fn cmd_chain(config: &ExperimentConfig) -> CliResult<ChainReport> {
    config.validate()?;
    let report = build(config)?;
    let (t, c) = (&report.tuned, &report.tuned.chain);
    let dir = config.out_dir();
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let path = dir.join(&config.chain.file);
    let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
    c.write_text(BufWriter::new(file))?;

    println!("states {}  target {} ± {}", c.states(), config.chain.target, config.chain.tolerance);
    println!("lambda2 {:.6}  window {}  laziness {:.6}", t.lambda2, t.window, t.laziness);
    println!("stationarity residual {:.3e}  detailed-balance residual {:.3e}", c.stationarity_residual(), c.detailed_balance_residual());
    for &(eta, tau) in &report.mixing.taus {
        match report.closed_form.iter().find(|(e, _)| *e == eta) {
            Some((_, exact)) => println!("tau({eta}) = {tau}  (closed form {exact})"),
            None => println!("tau({eta}) = {tau}"),
        }
    }
    for w in &report.mixing.warnings {
        eprintln!("warning: {w}");
    }
    println!("wrote {}", path.display());
    let meta = json!({
        "config_hash": config.hash(),
        "chain_file": config.chain.file,
        "states": c.states(),
        "target": config.chain.target,
        "lambda2": t.lambda2,
        "window": t.window,
        "laziness": t.laziness,
        "stationarity_residual": c.stationarity_residual(),
        "detailed_balance_residual": c.detailed_balance_residual(),
        "tau": report.mixing.taus.iter().map(|&(e, k)| json!({"eta": e, "tau": k})).collect::<Vec<_>>(),
        "closed_form_tau": report.closed_form.iter().map(|&(e, k)| json!({"eta": e, "tau": k})).collect::<Vec<_>>(),
    });
    write_json(&dir.join("chain_metadata.json"), &meta)?;
    Ok(report)
}
