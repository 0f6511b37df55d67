//! All twelve acceptance criteria at their pinned tolerances, one line each.

use std::process::ExitCode;

use afflow_cli::acceptance::{run_suite, Suite};

fn main() -> ExitCode {
    let suite = Suite::new(1.0, 7, true);
    let rows = run_suite(&suite, &[]);
    for row in &rows {
        println!("{}", row.line());
        for n in &row.notes {
            println!("       note: {n}");
        }
    }
    let failed = rows.iter().filter(|r| !r.pass).count();
    println!("acceptance: {} passed, {failed} failed", rows.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
