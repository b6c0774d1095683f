//! Prints the hop-distance matrix of the 9-joint upper-body graph and the
//! short/long-range split used for each target joint.

use tremor::skeleton::{build_skeleton, JointId};

fn main() {
    let graph = build_skeleton();
    print!("{}", graph.hop_csv());
    println!();
    for target in JointId::ALL {
        let part = graph.hop_partition(target);
        let names = |js: &[JointId]| js.iter().map(|j| j.name()).collect::<Vec<_>>().join(" ");
        println!("{:<10} short: {:<40} long: {}", target.name(), names(&part.short), names(&part.long));
    }
}
