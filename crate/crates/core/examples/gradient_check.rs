//! Central finite-difference check of every layer, both loss heads and a
//! toy-sized network.

use tremor::nnet::suite::gradient_suite;

fn main() -> tremor::Result<()> {
    let seed = std::env::args().nth(1).map_or(0, |s| s.parse().expect("seed is an integer"));
    let results = gradient_suite(seed)?;
    println!("{:<24}{:>14}{:>12}  worst tensor", "entry", "max rel err", "tolerance");
    for r in &results {
        let status = if r.passed() { "" } else { "  FAIL" };
        println!("{:<24}{:>14.3e}{:>12.0e}  {}{status}", r.name, r.max_rel_error, r.tolerance, r.worst);
    }
    let failed = results.iter().filter(|r| !r.passed()).count();
    println!("{} of {} passed", results.len() - failed, results.len());
    Ok(())
}
