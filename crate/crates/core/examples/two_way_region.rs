//! Capacity region of the two-way channel with and without energy transfer.

use energy_coop::domain::{ModelKind, Scenario};
use energy_coop::twoway::{concavity_slack, trace_twoway_region};

fn main() -> energy_coop::Result<()> {
    let s = Scenario::new(ModelKind::TwoWay, vec![5., 10., 5.], vec![10., 5., 10.], 0.7)?;
    let mut none = s.clone();
    none.alpha = 0.0;
    let with = trace_twoway_region(&s, 17)?;
    let without = trace_twoway_region(&none, 17)?;
    println!("{:>14} {:>10} {:>10} {:>10}", "theta2", "R1", "R2", "R2 no xfer");
    for (a, b) in with.iter().zip(&without) {
        println!("{:>14.4} {:>10.4} {:>10.4} {:>10.4}", a.theta.1, a.rates.0, a.rates.1, b.rates.1);
    }
    let rates: Vec<_> = with.iter().map(|p| p.rates).collect();
    println!("concavity slack {:.1e}", concavity_slack(&rates));
    Ok(())
}
