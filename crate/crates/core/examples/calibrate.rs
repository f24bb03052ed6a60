//! Runs the shipped benchmark suite and prints the comparison quantities:
//! per-task final returns, execution counts and first-eval entropies.
//!
//! Usage: cargo run --release -p switchrl --example calibrate [task-filter] [seed-count]

use switchrl::benchmarks::{
    benchmark_suite, pretrain_task, EVAL_EPISODES, EVAL_INTERVAL, INITIAL_COLLECTION_STEPS,
    ONLINE_STEPS, SEEDS,
};
use switchrl::controllers::ControllerKind;
use switchrl::harness::{final_mean_return, run_online_stage, ExperimentSpec};

fn main() {
    let filter = std::env::args().nth(1).unwrap_or_default();
    let seed_count: usize = std::env::args()
        .nth(2)
        .and_then(|s| s.parse().ok())
        .unwrap_or(SEEDS.len());

    for task in benchmark_suite() {
        if !filter.is_empty() && !task.name.contains(&filter) {
            continue;
        }
        let t0 = std::time::Instant::now();
        let ckpt = pretrain_task(&task).expect("pretrain");
        println!(
            "\n=== {} | optimal {:.3} random {:.3} dataset mean-q {:.3} ({:.1?})",
            task.name,
            ckpt.optimal_return,
            ckpt.random_return,
            (0..ckpt.q.num_states())
                .map(|s| ckpt.q.max_value(s))
                .sum::<f64>()
                / ckpt.q.num_states() as f64,
            t0.elapsed(),
        );

        for kind in ControllerKind::ALL {
            let mut spec = ExperimentSpec::new(kind);
            spec.controller_cfg = task.controller_cfg;
            spec.online_steps = ONLINE_STEPS;
            spec.eval_interval = EVAL_INTERVAL;
            spec.eval_episodes = EVAL_EPISODES;
            spec.initial_collection_steps = INITIAL_COLLECTION_STEPS;
            spec.seeds = SEEDS[..seed_count].to_vec();

            let t1 = std::time::Instant::now();
            let mut rows = Vec::new();
            let mut count_summary = Vec::new();
            let mut first_entropy = Vec::new();
            for &seed in &spec.seeds {
                let result = run_online_stage(&ckpt, &spec, seed).expect(task.name);
                if let Some(first) = result.rows.first() {
                    first_entropy.push((first.entropy_off, first.entropy_on));
                }
                count_summary.push((result.counters.offline_count, result.counters.online_count));
                rows.extend(result.rows);
            }
            let final_mean = final_mean_return(&rows, kind).unwrap_or(f64::NAN);
            let finals: Vec<f64> = {
                let last = rows.iter().map(|r| r.step).max().unwrap_or(0);
                rows.iter()
                    .filter(|r| r.step == last)
                    .map(|r| r.return_norm)
                    .collect()
            };
            println!(
                "  {:8} final {:6.1} (per-seed {:?}) counts {:?} H1 {:?} ({:.1?})",
                kind.id(),
                final_mean,
                finals
                    .iter()
                    .map(|v| (*v * 10.0).round() / 10.0)
                    .collect::<Vec<_>>(),
                count_summary,
                first_entropy
                    .iter()
                    .map(|(a, b)| ((*a * 100.0).round() / 100.0, (*b * 100.0).round() / 100.0))
                    .collect::<Vec<_>>(),
                t1.elapsed(),
            );
        }
    }
}
