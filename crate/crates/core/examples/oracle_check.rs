//! Cross-checks each solver against the brute-force grid oracle.

use energy_coop::domain::ModelKind;
use energy_coop::oracle::check_random_instance;

fn main() -> energy_coop::Result<()> {
    for model in [ModelKind::Relay, ModelKind::TwoWay, ModelKind::Mac] {
        for seed in 0..3 {
            let c = check_random_instance(model, seed, 1e-4)?;
            println!(
                "{model:<8} seed {seed}: T={} solver {:.8} oracle {:.8} gap {:+.1e} {}",
                c.scenario.horizon(),
                c.solver_objective,
                c.oracle_objective,
                c.verdict.relative_gap,
                if c.passed() { "ok" } else { "FAILED" }
            );
        }
    }
    Ok(())
}
