//! Prints one PASS/FAIL line per acceptance criterion; exits nonzero on any FAIL.

use polaron_harness::checks::{Status, Suite};
use polaron_harness::config::CheckConfig;

fn main() {
    let lines = Suite::new(CheckConfig::default().seed).run(&mut |l| println!("{l}"));
    let gating = lines.iter().filter(|l| l.status != Status::Info).count();
    let failed = lines.iter().filter(|l| l.status == Status::Fail).count();
    println!("acceptance: {gating} criteria, {failed} failed");
    if failed > 0 {
        std::process::exit(1);
    }
}
