//! Squeezed channel counts per hop and fused widths per target joint for
//! a channel-squeezing fusion layer.
//!
//! Usage: `cargo run --example pcsf_schedule -- [C_IN] [P] [Q]`

use tremor::pcsf::{squeezed_channels, PcsfSpec};
use tremor::skeleton::{build_skeleton, JointId};

fn main() -> tremor::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize, default: &str| args.get(i).cloned().unwrap_or_else(|| default.to_string());
    let c_in: usize = arg(0, "128").parse().expect("C_IN is an integer");
    let p: f64 = arg(1, "0.5").parse().expect("P is a number");
    let q: f64 = arg(2, "0.25").parse().expect("Q is a number");

    let graph = build_skeleton();
    let spec = PcsfSpec::new(&graph, c_in, c_in, p, q)?;
    println!("C_in {c_in}, p {p}, q {q}");
    for hop in 0..=graph.max_hop() {
        println!("hop {hop}: {} channels", squeezed_channels(c_in, hop, p, q));
    }
    for target in JointId::ALL {
        println!("{:<10} fused width {}", target.name(), spec.fused_width(target.index()));
    }
    Ok(())
}
