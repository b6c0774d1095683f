//! Binary and one-vs-rest metrics from confusion matrices.

use tremor::evaluation::{compute_metrics, ConfusionMatrix};

fn main() -> tremor::Result<()> {
    let binary = ConfusionMatrix::from_rows(&[vec![8, 2], vec![1, 9]])?;
    let m = compute_metrics(&binary, Some(1))?;
    println!("binary [[8,2],[1,9]]: AC {} SE {} SP {} F1 {:.4}", m.accuracy, m.sensitivity, m.specificity, m.f1);

    let multi = ConfusionMatrix::from_rows(&[vec![5, 1, 0], vec![2, 3, 1], vec![0, 1, 4]])?;
    let m = compute_metrics(&multi, None)?;
    println!(
        "3-class macro: AC {:.4} SE {:.4} SP {:.4} F1 {:.4} degenerate {}",
        m.accuracy, m.sensitivity, m.specificity, m.f1, m.degenerate
    );
    Ok(())
}
