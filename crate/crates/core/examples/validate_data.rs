//! Check a dataset against the requirements of the misclassification
//! models before fitting.

use misclass::data::{validate_dataset, IpdDataset};

const CSV: &str = "\
study,y,x,x_star,z1
A,1,1,1,0.2
A,0,0,0,-1.1
B,1,,1,0.4
B,NA,,0,0.0
C,0,,,1.3
";

fn main() -> misclass::Result<()> {
    let d = IpdDataset::from_csv_reader(CSV.as_bytes())?;
    let report = validate_dataset(&d);
    println!("passed: {}", report.passed);
    for v in &report.violations {
        println!("  {:?}: {}", v.kind, v.message);
    }
    for s in &report.studies {
        println!(
            "study {}: n={} x observed {:.0}% x* observed {:.0}%",
            s.label,
            s.n,
            100.0 * s.prop_x_observed,
            100.0 * s.prop_x_star_observed
        );
    }
    Ok(())
}
