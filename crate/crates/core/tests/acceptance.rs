//! One line per acceptance criterion. Runs the default scenario, the
//! refinement study, the scalar checks and the steady checks in sequence.
//!
//! Criterion 2 compares against reference values printed to six
//! significant digits, which is coarser than its 1e-6 relative tolerance;
//! it is expected to fail and is instead checked against the
//! high-precision oracle below.

#![allow(clippy::excessive_precision)]

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::time::Instant;

use nsf_stability::harness::experiment::steady_checks;
use nsf_stability::harness::report::CRITERIA;
use nsf_stability::harness::{
    convergence_study, default_scenario, parse_config, run_experiment, verify_lemmas, RunReport, Status,
};
use nsf_stability::lemmas::power_bound_constant;

/// Criteria that cannot pass as stated; see the README.
const KNOWN_UNATTAINABLE: [u8; 1] = [2];

fn take(into: &mut BTreeMap<u8, (Status, String)>, report: &RunReport, ids: &[u8]) {
    if let Some(e) = &report.error {
        eprintln!("{} reported {} error: {}", report.command, e.class, e.message);
    }
    for &id in ids {
        let c = report.criterion(id);
        into.insert(id, (c.status, c.measured.to_string()));
    }
}

fn reproducible_run() -> Result<bool, String> {
    let text = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/quick.json"))
        .map_err(|e| e.to_string())?;
    let mut cfg = parse_config(&text).map_err(|e| e.to_string())?;
    cfg.output.snapshots = false;
    cfg.inequality_levels = 1;
    let mut traces = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        cfg.output.dir = Some(dir.path().to_path_buf());
        let out = run_experiment(&cfg);
        if let Some(e) = out.report.error {
            return Err(e.message);
        }
        traces.push(std::fs::read(dir.path().join("trace.csv")).map_err(|e| e.to_string())?);
    }
    Ok(traces[0] == traces[1] && !traces[0].is_empty())
}

fn main() -> ExitCode {
    let t = Instant::now();
    let cfg = default_scenario();
    let mut results = BTreeMap::new();

    let lemmas = verify_lemmas(cfg.seed, cfg.x_crit, (cfg.exponents.m, cfg.exponents.n));
    take(&mut results, &lemmas, &[1, 2, 3, 4, 14]);

    let run = run_experiment(&cfg);
    take(&mut results, &run.report, &[5, 8, 9, 10, 11]);

    let conv = convergence_study(&cfg);
    take(&mut results, &conv, &[6, 7, 12, 15]);

    let mut steady = RunReport::new("steady");
    if let Err(e) = steady_checks(&mut steady, cfg.seed, 20) {
        eprintln!("steady checks: {e}");
    }
    take(&mut results, &steady, &[13]);

    // identical seeds must also give identical files through the full run path
    let repro = reproducible_run();
    if let Some((status, measured)) = results.get_mut(&15) {
        let ok = matches!(repro, Ok(true));
        if !ok {
            *status = Status::Fail;
        }
        *measured = format!("{measured} run_path_identical={repro:?}");
    }

    let mut failed = Vec::new();
    for (id, name) in CRITERIA {
        let (status, measured) = results.get(&id).cloned().unwrap_or((Status::NotEvaluated, String::new()));
        let tag = match status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::NotEvaluated => "NOT EVALUATED",
        };
        if status != Status::Pass {
            failed.push(id);
        }
        let mut measured = measured;
        if measured.len() > 240 {
            measured.truncate(240);
            measured.push_str("...");
        }
        println!("criterion {id:>2} {tag:<4}  {name}  {measured}");
    }
    println!("acceptance finished in {:.1} s", t.elapsed().as_secs_f64());

    // Fallback for the unattainable criterion: the computed constants agree
    // with the high-precision oracle and round to the reference digits.
    let oracle = [(3, 0.0011193671347558094217, "0.00111937"), (4, 0.00039786140215202106237, "0.000397861")];
    let mut fallback_ok = true;
    for (l, exact, printed) in oracle {
        let b = power_bound_constant(3.0 / 8.0, 0.5, l, -5.0).expect("valid arguments");
        let rel = ((b.inv_l - exact) / exact).abs();
        let digits = printed.len() - 2;
        let rounded = format!("{:.*}", digits, b.inv_l);
        let ok = rel <= 1e-12 && rounded == printed;
        fallback_ok &= ok;
        println!("criterion  2 fallback l = {l}: oracle relative error {rel:.1e}, rounds to {rounded} (reference {printed}) {}", if ok { "ok" } else { "MISMATCH" });
    }

    let unexpected: Vec<u8> = failed.iter().copied().filter(|id| !KNOWN_UNATTAINABLE.contains(id)).collect();
    if unexpected.is_empty() && fallback_ok {
        println!("acceptance: all criteria pass except the documented {KNOWN_UNATTAINABLE:?}");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: unexpected failures {unexpected:?}, fallback ok = {fallback_ok}");
        ExitCode::FAILURE
    }
}
