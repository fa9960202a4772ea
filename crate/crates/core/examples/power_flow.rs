//! Solves the 33-bus feeder at nominal load and prints the voltage profile.

use vvc::grid::{case33, Injections, PowerFlowSolver};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let net = case33::ieee33()?;
    let solver = PowerFlowSolver::new(net.clone());
    let sol = solver.solve(&Injections::from_loads(&net), None)?;
    println!(
        "converged {} in {} iterations, loss {:.4} MW",
        sol.converged, sol.iterations, sol.p_loss_total
    );
    for k in 0..net.n_buses() {
        println!("bus {:>2}  |V| {:.4}  angle {:+.4} rad", net.label(k), sol.v_mag[k], sol.v_ang[k]);
    }
    let (k, v) = sol
        .v_mag
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .unwrap();
    println!("lowest voltage {v:.4} at bus {}", net.label(k));
    Ok(())
}
