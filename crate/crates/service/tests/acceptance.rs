//! Acceptance runner: one `[PASS]` or `[FAIL]` line per criterion, exit
//! status 1 if any failed. Tolerances are fixed here and in the shared
//! checks; nothing is tuned per run.

#[path = "../../core/tests/checks/mod.rs"]
mod checks;
mod support;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;

use dem_core::results::artifacts::{FIELDS_FILE, HISTORY_FILE, MODEL_FILE, SUMMARY_FILE, VTK_FILE};
use dem_service::llm::{Role, ScriptedBackend};
use dem_service::session::{llm_geo_turn, ChatSession, TurnError};

use checks::Outcome;

/// DEM and FEM must agree to this relative L2 difference.
const DIFFERENCE_TOL: f64 = 0.05;

fn cli_solve() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = checks::fixtures_dir().join("poisson.toml");
    let o = Command::new(env!("CARGO_BIN_EXE_dem"))
        .args(["solve", cfg.to_str().unwrap(), "-o", tmp.path().to_str().unwrap(), "--solver", "both"])
        .output()
        .map_err(|e| e.to_string())?;
    let out = String::from_utf8_lossy(&o.stdout);
    if o.status.code() != Some(0) {
        return Err(format!("dem solve exited {:?}: {}", o.status.code(), String::from_utf8_lossy(&o.stderr)));
    }
    for f in [HISTORY_FILE, VTK_FILE, MODEL_FILE, FIELDS_FILE, SUMMARY_FILE] {
        if !tmp.path().join(f).is_file() {
            return Err(format!("dem solve did not write {f}"));
        }
    }
    let d: f64 = out
        .lines()
        .find_map(|l| l.strip_prefix("DEM/FEM relative L2 difference of nodal magnitudes: "))
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| format!("no difference in the report:\n{out}"))?;
    if d >= DIFFERENCE_TOL {
        return Err(format!("CLI difference {d:.4} >= {DIFFERENCE_TOL}"));
    }
    Ok(format!("CLI solve wrote all artifacts, difference {d:.4}"))
}

fn formats_and_cli() -> Outcome {
    let f = checks::formats()?;
    let c = cli_solve()?;
    Ok(format!("{f}; {c}"))
}

fn llm_loop() -> Outcome {
    let mesher = support::fake_gmsh();

    let backend = ScriptedBackend::new([support::broken_reply(), support::good_reply()]);
    let mut s = ChatSession::new();
    let turn = llm_geo_turn(&mut s, &backend, &mesher, "a unit square", 2, 0.1).map_err(|e| e.to_string())?;
    if turn.attempts != 2 {
        return Err(format!("broken-then-fixed took {} attempts", turn.attempts));
    }
    let requests = backend.requests();
    let fed_back = requests
        .get(1)
        .and_then(|r| r.last())
        .is_some_and(|m| m.role == Role::User && m.content.contains("Gmsh failed") && m.content.contains("syntax error"));
    if !fed_back {
        return Err("the mesher diagnostic was not forwarded to the second request".into());
    }

    let budget = ChatSession::new().retry_budget;
    let backend = ScriptedBackend::new(vec![support::PROSE_REPLY; budget + 1]);
    let mut s = ChatSession::new();
    match llm_geo_turn(&mut s, &backend, &mesher, "a unit square", 2, 0.1) {
        Err(TurnError::RetriesExhausted { attempts, .. }) if attempts == budget + 1 => {}
        other => return Err(format!("expected exhaustion after {} attempts, got {other:?}", budget + 1)),
    }
    if backend.requests().len() != budget + 1 {
        return Err(format!("{} backend calls for budget {budget}", backend.requests().len()));
    }
    Ok(format!(
        "fixed on attempt 2 with the diagnostic forwarded; {} reply-less attempts exhaust budget {budget}",
        budget + 1
    ))
}

fn main() {
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("AC1", Box::new(checks::shape_suite)),
        ("AC2", Box::new(|| checks::expressions_vs_closed_form(1000))),
        ("AC3", Box::new(checks::gradient_integrity)),
        ("AC4", Box::new(|| checks::smooth_distance_sandwich(10_000))),
        ("AC5", Box::new(checks::fem_oracle)),
        ("AC6", Box::new(|| checks::dem_vs_fem(&[0, 1, 2]))),
        ("AC7", Box::new(checks::dem_manufactured)),
        ("AC8", Box::new(checks::hyperelastic_sanity)),
        ("AC9", Box::new(|| checks::early_stopping(100))),
        ("AC10", Box::new(formats_and_cli)),
        ("AC11", Box::new(llm_loop)),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(summary) => println!("[PASS] {name}: {summary}"),
            Err(reason) => {
                failed += 1;
                println!("[FAIL] {name}: {reason}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
