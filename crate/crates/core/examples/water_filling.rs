//! Single-user directional water-filling on a bursty harvest.

use energy_coop::domain::cumsum;
use energy_coop::waterfill::{min_average_segmentation, single_user_dwf};

fn main() -> energy_coop::Result<()> {
    let harvest = [8.0, 0.0, 1.0, 6.0, 0.0, 0.5];
    let caps = cumsum(&harvest);
    let seg = min_average_segmentation(&caps)?;
    let p = single_user_dwf(&caps)?;
    println!("harvest     {harvest:?}");
    println!("breakpoints {:?}", seg.breakpoints);
    println!("power       {:.4?}", p.as_slice());
    println!("bits        {:.4}", p.throughput());
    Ok(())
}
