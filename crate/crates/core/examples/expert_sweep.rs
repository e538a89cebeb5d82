//! Expert success rate per task over a seed range.

use surgbench_core::expert::run_expert;
use surgbench_core::{TaskName, TaskSpec};

fn main() -> surgbench_core::Result<()> {
    let seeds: u64 = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(200);
    let noise: f64 = std::env::args()
        .nth(2)
        .and_then(|s| s.parse().ok())
        .unwrap_or(0.0);
    for task in TaskName::ALL {
        let spec = TaskSpec::default_for(task);
        let mut ok = 0;
        let mut steps = 0;
        let mut failed = Vec::new();
        for seed in 0..seeds {
            let run = run_expert(&spec, seed, noise, None)?;
            steps += run.episode.steps();
            if run.success {
                ok += 1;
            } else if failed.len() < 5 {
                failed.push(seed);
            }
        }
        println!(
            "{task:<18} {ok}/{seeds} mean steps {:.1} failed {failed:?}",
            steps as f64 / seeds as f64
        );
    }
    Ok(())
}
