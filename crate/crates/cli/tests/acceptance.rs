//! Full-scale acceptance run: one PASS/FAIL line per criterion.

use std::process::ExitCode;

use spherical_ld_cli::suite::{run_criterion, Scale};

const SEED: u64 = 7;

fn main() -> ExitCode {
    // Test-harness queries such as `--list` have nothing to enumerate.
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let mut failed = Vec::new();
    for id in 1..=11u8 {
        let scale = if id == 11 { Scale::Quick } else { Scale::Full };
        let r = run_criterion(id, scale, SEED);
        println!(
            "criterion {}: {} {} [{:.1}s] {}",
            r.id,
            if r.pass { "PASS" } else { "FAIL" },
            r.name,
            r.seconds,
            r.detail
        );
        for (k, v) in &r.metrics {
            println!("    {k} = {v:e}");
        }
        if !r.pass {
            failed.push(r.id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failing criteria {failed:?}");
        ExitCode::FAILURE
    }
}
