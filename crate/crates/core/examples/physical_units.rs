//! Solves a relay given harvests in millijoules and reports milliwatts and bit/s.

use energy_coop::domain::{ModelKind, PhysicalUnits, Scenario, Units};
use energy_coop::relay::solve_relay;

fn main() -> energy_coop::Result<()> {
    let units = PhysicalUnits {
        bandwidth_hz: 1e6,
        noise_density_w_per_hz: 1e-19,
        path_loss_db: 100.0,
        slot_seconds: 1.0,
    };
    let s = Scenario::new(ModelKind::Relay, vec![12., 0., 0., 0.], vec![5., 1., 0., 2.], 0.5)?
        .with_units(Units::Physical(units))?;
    let r = solve_relay(&s.normalized())?;
    let mw: Vec<f64> = r.p_relay.as_slice().iter().map(|&p| units.power_to_milliwatts(p)).collect();
    let mj: Vec<f64> = r.delta.as_slice().iter().map(|&d| units.energy_to_millijoules(d)).collect();
    println!("relay power   {mw:.3?} mW");
    println!("beamed energy {mj:.3?} mJ");
    println!("end-to-end    {:.0} bit/s", units.rate_to_bps(r.throughput) / s.horizon() as f64);
    Ok(())
}
