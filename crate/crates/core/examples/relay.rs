//! Two-hop relay: the source beams energy to a relay that forwards its data.

use energy_coop::domain::{ModelKind, Scenario};
use energy_coop::relay::solve_relay;

fn show(name: &str, s: &Scenario) -> energy_coop::Result<()> {
    let r = solve_relay(s)?;
    println!("{name} ({:?})", r.path);
    println!("  source  {:.4?}", r.p_source.as_slice());
    println!("  relay   {:.4?}", r.p_relay.as_slice());
    println!("  beamed  {:.4?}", r.delta.as_slice());
    println!("  bits    {:.6}  kkt {:.1e}", r.throughput, r.kkt.max_residual());
    for l in &r.lemma_results {
        println!("  {:<32} {}", l.name, if l.passed { "ok" } else { "FAILED" });
    }
    Ok(())
}

fn main() -> energy_coop::Result<()> {
    show("energy at the source only at start", &Scenario::new(ModelKind::Relay, vec![12., 0., 0., 0.], vec![5., 1., 0., 2.], 0.5)?)?;
    show("general arrivals", &Scenario::new(ModelKind::Relay, vec![2., 3., 5., 4.], vec![5., 1., 2., 1.], 0.5)?)
}
