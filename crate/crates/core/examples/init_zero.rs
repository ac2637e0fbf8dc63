//! Context preprocessing and the symmetric initialization: a network at
//! `W0` outputs exactly zero on any duplicated input.

use offline_lcb::env::preprocess_context;
use offline_lcb::net::{self, NetworkShape};

fn main() -> offline_lcb::Result<()> {
    let raw = [3.0, -1.0, 0.5];
    let u = preprocess_context(&raw)?;
    let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
    println!("raw {raw:?}\n  -> {u:.4?} (norm {norm:.4})");

    for depth in 2..=4 {
        let shape = NetworkShape::new(depth, 100, u.len())?;
        let w = net::init_weights(shape, 7)?;
        let (f, grad) = w.value_and_gradient(&u)?;
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        println!(
            "L={depth} m=100: p={:>6}  f(W0; u)={f:+.1e}  ‖∇f‖={gnorm:.3}",
            shape.param_count()
        );
    }
    Ok(())
}
