//! The four pipeline stages behind the `flowctl` subcommands.
//!
//! Every stage is a pure function of its inputs: rerunning a command with
//! the same case file, seed and flags rewrites every output file with
//! identical bytes. Nothing here records timestamps or machine state.

use crate::config::{
    dataset_path, parse_weight, plans_dir, reports_dir, weight_token, Stage, Stages, StudyConfig,
    DEFAULT_SPRIME, DEFAULT_STEER_COUNT, DESK_SCALE_CAP,
};
use flowctl_core::ac::{w_sweep, with_unit_setpoints, SweepScenario, SweepTable};
use flowctl_core::dc::solve_reactance_for_target;
use flowctl_core::net::Network;
use flowctl_core::scenario::{build_dataset, select_every, ScenarioSet};
use flowctl_core::siting::{
    adjustment_profile, kmin_search, solve_siting, SitingOutcome, SitingPlan, SitingProblem,
};
use flowctl_core::{Error, Result};
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::ErrorKind;
use std::path::Path;

/// Loads a case file and prints its structural summary.
pub fn validate(case: &Path) -> Result<()> {
    let net = Network::load_case(case)?;
    let bridges = net.find_bridges();
    println!("case: {}", case.display());
    println!("buses: {}", net.n_buses());
    println!("branches: {}", net.n_branches());
    println!("generators: {}", net.n_generators());
    println!("independent cycles: {}", net.n_cycles());
    println!("slack bus: {}", net.buses[net.slack()].id);
    println!("radial: {}", if net.is_radial() { "yes" } else { "no" });
    let labels: Vec<String> = bridges.iter().map(|&e| branch_label(&net, e)).collect();
    println!("bridges: {} [{}]", bridges.len(), labels.join(", "));
    Ok(())
}

/// Draws, dispatches and filters scenarios, then seeds a study directory.
pub fn generate(case: &Path, seed: u64, scenarios: usize, out: &Path) -> Result<()> {
    if scenarios == 0 {
        return Err(Error::Usage(
            "at least one scenario must be requested (--scenarios)".into(),
        ));
    }
    let net = Network::load_case(case)?;
    let set = build_dataset(&net, scenarios, seed)?;

    std::fs::create_dir_all(out)?;
    let config = StudyConfig {
        case: case.to_path_buf(),
        out: out.to_path_buf(),
        seed,
        scenarios,
        sprime: DEFAULT_SPRIME.to_vec(),
        k: None,
        w_grid: flowctl_core::ac::default_w_grid()
            .into_iter()
            .map(weight_token)
            .collect(),
        steer_count: DEFAULT_STEER_COUNT,
        stages: Stages {
            generate: true,
            ..Stages::default()
        },
    };
    config.save(out)?;
    set.save_jsonl(dataset_path(out))?;

    let counts = &set.counts;
    println!("requested: {}", counts.requested);
    println!("dispatch infeasible: {}", counts.infeasible);
    println!("not realizable: {}", counts.not_realizable);
    println!("kept: {}", counts.kept);
    println!("dataset: {}", dataset_path(out).display());
    Ok(())
}

/// Sites and sizes controllers over dataset prefixes, and recovers the
/// per-scenario full-budget reactances later stages steer against.
pub fn sitesize(
    out: &Path,
    sprime: Option<Vec<usize>>,
    k: Option<usize>,
    allow_large: bool,
) -> Result<()> {
    let mut config = StudyConfig::load(out)?;
    if let Some(sprime) = sprime {
        config.sprime = sprime;
    }
    if k.is_some() {
        config.k = k;
    }
    if config.sprime.is_empty() {
        return Err(Error::Usage(
            "at least one dataset prefix size is required (--sprime)".into(),
        ));
    }
    if let Some(&p) = config.sprime.iter().find(|&&p| p == 0) {
        return Err(Error::Usage(format!("prefix size {p} is not positive")));
    }
    check_desk_scale(config.sprime.iter().copied().max().unwrap(), allow_large)?;

    let net = Network::load_case(&config.case)?;
    let set = load_dataset(out)?;

    std::fs::create_dir_all(plans_dir(out))?;
    std::fs::create_dir_all(reports_dir(out))?;

    // Full-budget reactance recovery per scenario: the steering priors.
    let mut setpoints: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for sc in &set.scenarios {
        match solve_reactance_for_target(&net, &sc.f_target) {
            Ok(rec) => {
                setpoints.insert(sc.index, rec.x);
            }
            Err(Error::NotRealizable) => {
                log::warn!(
                    "scenario {}: no reactance vector above the floor realizes it; \
                     no steering prior written",
                    sc.index
                );
            }
            Err(err) => return Err(err),
        }
    }
    write_json(&plans_dir(out).join("dc_setpoints.json"), &setpoints)?;

    config.stages.sitesize = true;
    config.save(out)?;
    let hash = config.hash(Stage::Sitesize)?;

    // Clamp prefixes to the dataset, drop duplicates, keep config order.
    let len = set.scenarios.len();
    let mut prefixes: Vec<usize> = Vec::new();
    for &p in &config.sprime {
        let eff = p.min(len);
        if eff < p {
            log::warn!("prefix {p} clamped to the dataset size {len}");
        }
        if !prefixes.contains(&eff) {
            prefixes.push(eff);
        }
    }

    let mut summary = csv_header(
        &hash,
        "sprime,k,feasible,controllers,objective_pu,objective_full_pu,dropped",
    );
    println!("sprime  k     feasible  controllers  objective_pu");
    for &p in &prefixes {
        match config.k {
            None => {
                let report = kmin_search(&net, &set, p)?;
                let plan = &report.plan;
                writeln!(
                    summary,
                    "{p},{},true,{},{},{},{}",
                    report.k_min,
                    plan.n_active(),
                    plan.objective,
                    report.objective_full,
                    report.dropped.len()
                )
                .expect("writing to a String cannot fail");
                write_plan_outputs(out, &net, &hash, p, plan)?;
                write_kmin_table(out, &hash, p, &report.table)?;
                println!(
                    "{p:<7} {:<5} yes       {:<12} {:.6}",
                    report.k_min,
                    plan.n_active(),
                    plan.objective
                );
                if !report.dropped.is_empty() {
                    println!(
                        "        note: dropped unrealizable scenarios {:?}",
                        report.dropped
                    );
                }
            }
            Some(k) => {
                let problem = SitingProblem::from_set(&net, &set, p, k)?;
                match solve_siting(&net, &problem)? {
                    SitingOutcome::Plan(plan) => {
                        writeln!(
                            summary,
                            "{p},{k},true,{},{},,",
                            plan.n_active(),
                            plan.objective
                        )
                        .expect("writing to a String cannot fail");
                        write_plan_outputs(out, &net, &hash, p, &plan)?;
                        println!(
                            "{p:<7} {k:<5} yes       {:<12} {:.6}",
                            plan.n_active(),
                            plan.objective
                        );
                    }
                    SitingOutcome::Infeasible => {
                        writeln!(summary, "{p},{k},false,,,,")
                            .expect("writing to a String cannot fail");
                        println!("{p:<7} {k:<5} no        -            -");
                    }
                }
            }
        }
    }
    let summary_path = reports_dir(out).join("siting_summary.csv");
    std::fs::write(&summary_path, summary)?;
    println!("summary: {}", summary_path.display());
    Ok(())
}

/// Steers AC operating points toward each selected scenario's target
/// flows across the weight grid and reports the mismatch trend.
pub fn steer(
    out: &Path,
    sprime: Option<usize>,
    w_grid: Option<Vec<String>>,
    allow_large: bool,
) -> Result<()> {
    let mut config = StudyConfig::load(out)?;
    if let Some(count) = sprime {
        config.steer_count = count;
    }
    if let Some(tokens) = w_grid {
        config.w_grid = tokens;
    }
    if config.steer_count == 0 {
        return Err(Error::Usage(
            "the scenario selection is empty (--sprime must be positive)".into(),
        ));
    }
    check_desk_scale(config.steer_count, allow_large)?;
    let weights: Vec<f64> = config
        .w_grid
        .iter()
        .map(|tok| parse_weight(tok))
        .collect::<Result<_>>()?;
    if weights.is_empty() {
        return Err(Error::Usage("the weight grid is empty (--w-grid)".into()));
    }

    let net = Network::load_case(&config.case)?;
    let set = load_dataset(out)?;
    let priors = load_setpoints(out)?;

    let len = set.scenarios.len();
    let count = config.steer_count.min(len);
    if count < config.steer_count {
        log::warn!("dataset holds {len} scenarios; steering all of them");
    }
    let stride = (len / count).max(1);
    let selected = select_every(&set, stride, count)?;
    let inputs: Vec<SweepScenario> = selected
        .into_iter()
        .map(|scenario| {
            let x_dc = priors.get(&scenario.index).cloned().ok_or_else(|| {
                Error::Io(std::io::Error::new(
                    ErrorKind::NotFound,
                    format!(
                        "no full-budget setpoint for scenario {}; rerun `flowctl sitesize`",
                        scenario.index
                    ),
                ))
            })?;
            Ok(SweepScenario { scenario, x_dc })
        })
        .collect::<Result<_>>()?;

    config.stages.steer = true;
    config.save(out)?;
    let hash = config.hash(Stage::Steer)?;

    // Steering evaluates the network with every voltage setpoint at 1 p.u.
    let table = w_sweep(&with_unit_setpoints(&net), &inputs, &weights);

    std::fs::create_dir_all(reports_dir(out))?;
    write_mismatch_csv(out, &hash, &table)?;
    write_reactance_dump(out, &table)?;

    for (label, avg) in &table.average {
        match label.weight() {
            Some(w) => println!(
                "average mismatch at w={}: {avg:.3}% of rating",
                weight_token(w)
            ),
            None => println!("average mismatch at {}: {avg:.3}% of rating", label.as_str()),
        }
    }
    let converged = table.averaged.len();
    println!("converged scenarios: {converged}/{}", inputs.len());
    for (index, reason) in &table.failed {
        println!("scenario {index} failed: {reason}");
    }

    if (converged as f64) < 0.9 * inputs.len() as f64 {
        return Err(Error::SolverFault(format!(
            "only {converged}/{} scenarios converged at every setpoint (threshold 90%)",
            inputs.len()
        )));
    }
    Ok(())
}

fn branch_label(net: &Network, e: usize) -> String {
    let br = &net.branches[e];
    format!("{}-{}", net.buses[br.from].id, net.buses[br.to].id)
}

fn check_desk_scale(requested: usize, allow_large: bool) -> Result<()> {
    if requested > DESK_SCALE_CAP && !allow_large {
        return Err(Error::Usage(format!(
            "{requested} scenarios exceed the desk-scale cap of {DESK_SCALE_CAP}; \
             pass --allow-large to run anyway"
        )));
    }
    Ok(())
}

fn load_dataset(out: &Path) -> Result<ScenarioSet> {
    let path = dataset_path(out);
    ScenarioSet::load_jsonl(&path).map_err(|err| match err {
        Error::Io(io) if io.kind() == ErrorKind::NotFound => Error::Io(std::io::Error::new(
            ErrorKind::NotFound,
            format!(
                "no dataset at {}; run `flowctl generate` first",
                path.display()
            ),
        )),
        other => other,
    })
}

fn load_setpoints(out: &Path) -> Result<BTreeMap<usize, Vec<f64>>> {
    let path = plans_dir(out).join("dc_setpoints.json");
    let bytes = std::fs::read(&path).map_err(|err| match err.kind() {
        ErrorKind::NotFound => Error::Io(std::io::Error::new(
            ErrorKind::NotFound,
            format!(
                "no full-budget setpoints at {}; run `flowctl sitesize` first",
                path.display()
            ),
        )),
        _ => Error::Io(err),
    })?;
    Ok(serde_json::from_slice(&bytes)?)
}

fn csv_header(hash: &str, columns: &str) -> String {
    format!("# config_hash={hash}\n{columns}\n")
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    std::fs::write(path, bytes)?;
    Ok(())
}

/// Writes the plan itself and its per-line adjustment ranges.
fn write_plan_outputs(
    out: &Path,
    net: &Network,
    hash: &str,
    sprime: usize,
    plan: &SitingPlan,
) -> Result<()> {
    write_json(&plans_dir(out).join(format!("plan_s{sprime}.json")), plan)?;

    let x_nominal = net.x_nominal();
    let profile = adjustment_profile(plan, &x_nominal);
    let mut csv = csv_header(
        hash,
        "line,from_bus,to_bus,controller,x_nominal_pu,x_lo_pu,x_hi_pu,gamma_down_frac,gamma_up_frac",
    );
    for e in 0..net.n_branches() {
        writeln!(
            csv,
            "{e},{},{},{},{},{},{},{},{}",
            net.buses[net.branches[e].from].id,
            net.buses[net.branches[e].to].id,
            plan.d[e],
            x_nominal[e],
            plan.x_lo[e],
            plan.x_hi[e],
            profile.gamma_down[e],
            profile.gamma_up[e],
        )
        .expect("writing to a String cannot fail");
    }
    std::fs::write(
        reports_dir(out).join(format!("adjustment_profile_s{sprime}.csv")),
        csv,
    )?;
    Ok(())
}

fn write_kmin_table(
    out: &Path,
    hash: &str,
    sprime: usize,
    table: &[flowctl_core::siting::KminRow],
) -> Result<()> {
    let mut csv = csv_header(hash, "k,feasible,objective_pu");
    for row in table {
        let objective = row.objective.map(|v| v.to_string()).unwrap_or_default();
        writeln!(csv, "{},{},{objective}", row.k, row.feasible)
            .expect("writing to a String cannot fail");
    }
    std::fs::write(
        reports_dir(out).join(format!("kmin_table_s{sprime}.csv")),
        csv,
    )?;
    Ok(())
}

fn write_mismatch_csv(out: &Path, hash: &str, table: &SweepTable) -> Result<()> {
    let mut csv = csv_header(hash, "scenario,setpoint,w,mean_mismatch_pct,converged");
    for row in &table.rows {
        let w = row.label.weight().map(weight_token).unwrap_or_default();
        writeln!(
            csv,
            "{},{},{w},{},{}",
            row.scenario,
            row.label.as_str(),
            row.mean_mismatch_pct,
            row.converged
        )
        .expect("writing to a String cannot fail");
    }
    for (label, avg) in &table.average {
        let w = label.weight().map(weight_token).unwrap_or_default();
        writeln!(csv, "average,{},{w},{avg},", label.as_str())
            .expect("writing to a String cannot fail");
    }
    std::fs::write(reports_dir(out).join("mismatch_sweep.csv"), csv)?;
    Ok(())
}

/// Dumps every evaluated reactance vector, one record per table row.
fn write_reactance_dump(out: &Path, table: &SweepTable) -> Result<()> {
    #[derive(Serialize)]
    struct Record<'a> {
        scenario: usize,
        setpoint: &'static str,
        #[serde(skip_serializing_if = "Option::is_none")]
        w: Option<String>,
        x_pu: &'a [f64],
    }
    let records: Vec<Record> = table
        .rows
        .iter()
        .map(|row| Record {
            scenario: row.scenario,
            setpoint: row.label.as_str(),
            w: row.label.weight().map(weight_token),
            x_pu: &row.x_star,
        })
        .collect();
    write_json(&reports_dir(out).join("steered_reactances.json"), &records)
}
