//! Solves a weighted problem with the generic interior point solver and
//! certifies it with recovered KKT multipliers.

use energy_coop::domain::{ModelKind, PowerSchedule, Scenario};
use energy_coop::solver::{kkt_residuals, maximize_concave_over_causality, CausalityPolytope, KktOptions, WeightedSumRate};

fn main() -> energy_coop::Result<()> {
    let s = Scenario::new(ModelKind::TwoWay, vec![3., 0., 6.], vec![1., 4., 1.], 0.8)?;
    let theta = (0.4, 0.6);
    let sol = maximize_concave_over_causality(
        &WeightedSumRate { theta1: theta.0, theta2: theta.1 },
        &CausalityPolytope::from_scenario(&s, true),
        1e-10,
    )?;
    println!("objective {:.8} after {} iterations, gap {:.1e}", sol.objective, sol.iterations, sol.gap);
    let kkt = kkt_residuals(s.model, theta, &s, &sol.p1, &sol.p2, &sol.delta, &KktOptions::default())?;
    println!("optimal:   max residual {:.1e}", kkt.max_residual());

    // deferring half of user 1's first-slot power stays feasible but is no longer optimal
    let mut p1 = sol.p1.as_slice().to_vec();
    let shift = 0.5 * p1[0];
    p1[0] -= shift;
    p1[2] += shift;
    let moved = PowerSchedule::new(p1)?;
    let kkt = kkt_residuals(s.model, theta, &s, &moved, &sol.p2, &sol.delta, &KktOptions::default())?;
    println!("perturbed: max residual {:.1e}", kkt.max_residual());
    Ok(())
}
