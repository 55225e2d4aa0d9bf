//! The three MAC regimes as user 2's weight grows past 1/alpha.

use energy_coop::domain::{ModelKind, Scenario};
use energy_coop::mac::{full_transfer_threshold, solve_mac_weighted, trace_mac_region};

fn main() -> energy_coop::Result<()> {
    let s = Scenario::new(ModelKind::Mac, vec![5., 2., 5.], vec![1., 3., 1.], 0.5)?;
    println!("full transfer once theta2/theta1 >= {}", full_transfer_threshold(s.alpha)?);
    for theta2 in [0.5, 1.0, 1.5, 2.0, 3.0] {
        let r = solve_mac_weighted(&s, (1.0, theta2))?;
        println!(
            "theta=(1, {theta2}): {:<13} transfer {:.3?}  rates ({:.4}, {:.4})",
            r.regime,
            r.delta.as_slice(),
            r.corner_rates.0,
            r.corner_rates.1
        );
    }
    println!("boundary:");
    for p in trace_mac_region(&s, 9)? {
        println!("  ({:.4}, {:.4}) {}", p.rates.0, p.rates.1, p.regime);
    }
    Ok(())
}
