//! CSV serialization of ensemble results.
//!
//! The layout is one provenance line, one column-name line, then one row
//! per output time:
//!
//! ```text
//!     # method = hybrid, seed = 1, n_traj = 10000
//!     t, pop_a, pop_a_stderr, pop_upper, pop_upper_stderr
//!     0.000000000000e0, 1.000000000000e0, 0.000000000000e0, ...
//! ```
//!
//! Every number is printed with `{:.12e}`, so identical results serialize
//! to identical bytes; wall-clock time is deliberately excluded.  Times
//! are in the result's reporting units (multiples of 1/delta for the
//! spin-boson benchmark, femtoseconds for the cavity).

use std::fmt::Write as _;
use std::io;
use std::path::Path;

use super::ensemble::EnsembleResult;

/// Renders a result to the CSV text format.
pub fn csv_string(result: &EnsembleResult) -> String {
    let mut text = String::new();
    let _ = writeln!(
        text,
        "# method = {}, seed = {}, n_traj = {}",
        result.method, result.seed, result.n_traj
    );
    let mut columns = String::from("t");
    for est in &result.estimators {
        let _ = write!(columns, ", {}, {}_stderr", est.name, est.name);
    }
    text.push_str(&columns);
    text.push('\n');
    for (k, t) in result.times.iter().enumerate() {
        let _ = write!(text, "{t:.12e}");
        for est in &result.estimators {
            debug_assert_eq!(est.mean.len(), result.times.len(), "{} length", est.name);
            let _ = write!(text, ", {:.12e}, {:.12e}", est.mean[k], est.stderr[k]);
        }
        text.push('\n');
    }
    text
}

/// Writes the CSV text to a file, creating or truncating it.
pub fn write_csv(path: &Path, result: &EnsembleResult) -> io::Result<()> {
    std::fs::write(path, csv_string(result))
}

#[cfg(test)]
mod tests {
    use super::super::ensemble::{EstimatorSeries, Method};
    use super::*;

    fn sample() -> EnsembleResult {
        EnsembleResult {
            method: Method::Unravel,
            seed: 7,
            n_traj: 3,
            times: vec![0.0, 0.5],
            estimators: vec![
                EstimatorSeries {
                    name: "pop_upper".to_string(),
                    mean: vec![1.0, 0.625],
                    stderr: vec![0.0, 0.03125],
                },
                EstimatorSeries {
                    name: "pop_lower".to_string(),
                    mean: vec![0.0, 0.375],
                    stderr: vec![0.0, 0.03125],
                },
            ],
            wall_seconds: 123.0,
        }
    }

    #[test]
    fn golden_layout() {
        let text = csv_string(&sample());
        let expected = "\
# method = unravel, seed = 7, n_traj = 3
t, pop_upper, pop_upper_stderr, pop_lower, pop_lower_stderr
0.000000000000e0, 1.000000000000e0, 0.000000000000e0, 0.000000000000e0, 0.000000000000e0
5.000000000000e-1, 6.250000000000e-1, 3.125000000000e-2, 3.750000000000e-1, 3.125000000000e-2
";
        assert_eq!(text, expected);
    }

    #[test]
    fn wall_time_never_reaches_the_bytes() {
        let mut a = sample();
        let mut b = sample();
        a.wall_seconds = 1.0;
        b.wall_seconds = 999.0;
        assert_eq!(csv_string(&a), csv_string(&b));
    }

    #[test]
    fn file_round_trip() {
        let path = std::env::temp_dir().join("redmash_output_test.csv");
        write_csv(&path, &sample()).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, csv_string(&sample()));
        let _ = std::fs::remove_file(&path);
    }
}
