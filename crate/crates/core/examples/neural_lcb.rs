//! Trains the neural LCB policy on logged data from a heterogeneous
//! environment and compares it with the logging policy and greedy play.

use offline_lcb::env::{generate_offline, EnvConfig, Environment, Family};
use offline_lcb::eval::{replay_suboptimality, suboptimality_by_group};
use offline_lcb::neural_lcb::{run_offline, HyperParams, Selection};

fn main() -> offline_lcb::Result<()> {
    let env = Environment::new(EnvConfig::new(Family::Mixed, 4))?;
    let train = generate_offline(&env, 2_000, 0.1, 1)?;
    let test = generate_offline(&env, 200, 0.1, 2)?;
    let eval = env.sample_eval(3_000, 3)?;

    for beta in [0.0, 0.1, 1.0] {
        let hp = HyperParams {
            beta,
            snapshot_stride: 50,
            selection: Selection::Last,
            ..HyperParams::default()
        };
        let run = run_offline(&train, &test, &hp, 0)?;
        let policy = run.mixture.resolve(0);
        let b = suboptimality_by_group(|block| policy.act(block), &eval)?;
        let groups: Vec<String> = b
            .groups
            .iter()
            .map(|g| format!("group {}: {:.4}", g.group, g.subopt))
            .collect();
        println!(
            "beta={beta:<4} snapshots={:<3} subopt={:.4} ({})",
            run.mixture.len(),
            b.overall,
            groups.join(", ")
        );
        let replay = replay_suboptimality(|block| policy.act(block), &test)?;
        println!("          replay on test log: matched {} of {}", replay.matched, test.len());
    }
    Ok(())
}
