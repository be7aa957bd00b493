//! Bound tables over a horizon grid, one block per schedule and data source.

use saddlemix_core::bounds::{best_over_eta, proposition1_constants, BestBound, OrderValue};
use saddlemix_core::markov::mixing_time;
use saddlemix_core::{BoundInputs, GtdInstance, MixingProfile, OrderKind, SimulationInstance, StepSchedule};
use serde_json::json;

use crate::config::ExperimentConfig;
use crate::csv::{Table, ALL_SEEDS};
use crate::error::{CliError, CliResult};
use crate::figure1::{build_chains, mixing_profile, write_json};
use crate::gtd::{build_instances, label};

/// Problem constants and mixing behaviour for one column family.
pub struct Source {
    pub name: String,
    pub diameter: f64,
    pub l1: f64,
    pub l2: f64,
    pub profile: MixingProfile,
    pub gtd: Option<GtdInstance>,
}

pub struct BoundRow {
    pub source: String,
    pub schedule: StepSchedule,
    pub horizon: usize,
    /// `None` when every grid `η` has `τ(η) > T/2`.
    pub expectation: Option<BestBound>,
    pub high_probability: Option<BestBound>,
    pub orders: Option<(OrderValue, OrderValue)>,
}

pub fn sources(config: &ExperimentConfig, warnings: &mut Vec<String>) -> CliResult<Vec<Source>> {
    let b = &config.bounds;
    match b.source.as_str() {
        "simulation" => {
            let (pi, chains) = build_chains(config)?;
            let instance = SimulationInstance::generate(config.problem.spec(), &pi)?;
            let (l1, l2) = instance.lipschitz_constants();
            let mut names: Vec<&String> = Vec::new();
            for r in &config.regimes {
                if !names.contains(&r) {
                    names.push(r);
                }
            }
            Ok(names
                .into_iter()
                .map(|r| Source {
                    name: r.clone(),
                    diameter: instance.diameter(),
                    l1,
                    l2,
                    profile: mixing_profile(&chains, r),
                    gtd: None,
                })
                .collect())
        }
        "gtd" => {
            let mut out = Vec::new();
            let diameter = 2.0 * std::f64::consts::SQRT_2 * config.gtd.radius;
            for instance in build_instances(&config.gtd)? {
                let (l1, l2) = proposition1_constants(instance.constants(), diameter);
                for sampling in &config.gtd.sampling {
                    let profile = match sampling.as_str() {
                        "iid" => MixingProfile::Iid,
                        "markov" => match mixing_time(instance.transition_chain(), &saddlemix_core::bounds::eta_grid()) {
                            Ok(r) => MixingProfile::Curve(r.tv_curve),
                            Err(e) => {
                                warnings.push(format!("{}: {e}", label(&instance, sampling)));
                                continue;
                            }
                        },
                        other => return Err(CliError::Config(format!("unknown sampling {other:?}"))),
                    };
                    out.push(Source { name: label(&instance, sampling), diameter, l1, l2, profile, gtd: Some(instance.clone()) });
                }
            }
            Ok(out)
        }
        "manual" => {
            let need = |v: Option<f64>, name: &str| v.ok_or_else(|| CliError::Config(format!("manual bounds need {name}")));
            let profile = if b.curve.is_empty() { MixingProfile::Iid } else { MixingProfile::Curve(b.curve.clone()) };
            Ok(vec![Source {
                name: "manual".into(),
                diameter: need(b.diameter, "diameter")?,
                l1: need(b.l1, "l1")?,
                l2: need(b.l2, "l2")?,
                profile,
                gtd: None,
            }])
        }
        other => Err(CliError::Config(format!("unknown bounds source {other:?}"))),
    }
}

pub fn rows(config: &ExperimentConfig, sources: &[Source]) -> CliResult<Vec<BoundRow>> {
    if config.bounds.horizons.is_empty() {
        return Err(CliError::Config("bounds.horizons is empty".into()));
    }
    let mut out = Vec::new();
    for schedule in config.schedule_list()? {
        for src in sources {
            for &horizon in &config.bounds.horizons {
                let template = BoundInputs::new(src.diameter, src.l1, src.l2, schedule, horizon, 0, 0.0, config.delta);
                template.validate()?;
                let expectation = best_over_eta(&template, &src.profile, false).ok();
                let high_probability = best_over_eta(&template, &src.profile, true).ok();
                let orders = match (&src.gtd, &expectation) {
                    (Some(inst), Some(best)) => {
                        let order = |kind| {
                            saddlemix_core::theorem2_order(inst.constants(), &schedule, horizon, best.tau, config.delta, inst.policy(), kind)
                        };
                        Some((order(OrderKind::Expectation)?, order(OrderKind::HighProbability)?))
                    }
                    _ => None,
                };
                out.push(BoundRow { source: src.name.clone(), schedule, horizon, expectation, high_probability, orders });
            }
        }
    }
    Ok(out)
}

pub fn table(hash: &str, rows: &[BoundRow]) -> Table {
    let mut t = Table::new(hash);
    for r in rows {
        let label = r.schedule.label();
        let mut push = |metric: &str, v: f64| t.push(r.horizon, metric, v, ALL_SEEDS, &r.source, &label, false);
        push("precondition_violated", if r.expectation.is_none() { 1.0 } else { 0.0 });
        if let Some(b) = &r.expectation {
            let s = b.terms.step_sum;
            push("lemma1", b.value);
            push("lemma1_eta", b.eta);
            push("lemma1_tau", b.tau as f64);
            push("term_initial", b.terms.initial / s);
            push("term_variance", b.terms.variance / s);
            push("term_mixing", b.terms.mixing / s);
            push("term_bias", b.terms.bias / s);
            push("term_burn_in", b.terms.burn_in / s);
        }
        if let Some(b) = &r.high_probability {
            push("theorem1", b.value);
            push("theorem1_eta", b.eta);
            push("theorem1_tau", b.tau as f64);
            push("term_deviation", b.terms.deviation / b.terms.step_sum);
        }
        if let Some((e, h)) = &r.orders {
            push("order_expectation", e.value);
            push("order_high_probability", h.value);
        }
    }
    t
}

pub fn print(rows: &[BoundRow]) {
    println!(
        "{:>9} {:<16} {:<16} {:>9} {:>5} {:>11} {:>11} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10}  flag",
        "T", "schedule", "source", "eta", "tau", "lemma1", "theorem1", "initial", "variance", "mixing", "bias", "burn_in", "deviation"
    );
    for r in rows {
        match (&r.expectation, &r.high_probability) {
            (Some(e), h) => {
                let s = e.terms.step_sum;
                let (th, dev) = h.map_or((f64::NAN, f64::NAN), |h| (h.value, h.terms.deviation / h.terms.step_sum));
                println!(
                    "{:>9} {:<16} {:<16} {:>9.3e} {:>5} {:>11.4e} {:>11.4e} {:>10.3e} {:>10.3e} {:>10.3e} {:>10.3e} {:>10.3e} {:>10.3e}",
                    r.horizon,
                    r.schedule.label(),
                    r.source,
                    e.eta,
                    e.tau,
                    e.value,
                    th,
                    e.terms.initial / s,
                    e.terms.variance / s,
                    e.terms.mixing / s,
                    e.terms.bias / s,
                    e.terms.burn_in / s,
                    dev
                );
            }
            (None, _) => println!("{:>9} {:<16} {:<16} {:>9} {:>5} {:>11}  τ(η) > T/2 for every grid η", r.horizon, r.schedule.label(), r.source, "-", "-", "-"),
        }
        if let Some((e, h)) = &r.orders {
            println!("{:>9} {:<16} {:<16} value-error order: expectation {:.4e}, high probability {:.4e}", "", "", "", e.value, h.value);
        }
    }
}

pub fn cmd_bounds(config: &ExperimentConfig) -> CliResult<Vec<BoundRow>> {
    config.validate()?;
    let mut warnings = Vec::new();
    let srcs = sources(config, &mut warnings)?;
    let rows = rows(config, &srcs)?;
    print(&rows);
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let dir = config.out_dir().join("bounds");
    let hash = config.hash();
    table(&hash, &rows).write(&dir.join("bounds.csv"))?;
    let meta = json!({
        "config_hash": hash,
        "config": config,
        "sources": srcs.iter().map(|s| json!({
            "name": s.name,
            "diameter": s.diameter,
            "l1": s.l1,
            "l2": s.l2,
            "iid": matches!(s.profile, MixingProfile::Iid),
            "rho_max": s.gtd.as_ref().map(|g| g.constants().rho_max),
        })).collect::<Vec<_>>(),
        "warnings": warnings,
    });
    write_json(&dir.join("metadata.json"), &meta)?;
    Ok(rows)
}
