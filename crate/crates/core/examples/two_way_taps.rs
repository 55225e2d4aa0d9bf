//! Two-dimensional water-filling, stage by stage, for several tap orders.

use energy_coop::twoway::{two_dim_dwf_with, TapOrdering};

fn main() -> energy_coop::Result<()> {
    let (e1, e2) = ([0., 12., 0.], [6., 6., 0.]);
    for ordering in [
        TapOrdering::HorizontalOnly,
        TapOrdering::HorizontalFirstNoMeters,
        TapOrdering::VerticalFirst,
        TapOrdering::Full,
    ] {
        let o = two_dim_dwf_with(&e1, &e2, 1.0, (1.0, 1.0), ordering)?;
        let meters: Vec<Vec<f64>> = o.system.right_taps.iter().map(|r| r.iter().map(|t| t.meter).collect()).collect();
        println!("{ordering:?}");
        println!("  p1 {:.3?}  p2 {:.3?}", o.p1.as_slice(), o.p2.as_slice());
        println!("  transfer {:.3?}  meters {:?}", o.delta.as_slice(), meters);
    }
    Ok(())
}
