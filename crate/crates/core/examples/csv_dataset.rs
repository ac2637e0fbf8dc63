//! CSV round trip and offline evaluation of a stored policy.
//!
//! Logs a classification-style dataset through CSV, trains a hybrid policy,
//! saves it to disk and scores it again through `evaluate_policy_dir`.

use std::fs::File;

use offline_lcb::conformal::EnsembleSettings;
use offline_lcb::env::{generate_offline, load_csv, write_csv, CsvSchema, EnvConfig, Environment, Family};
use offline_lcb::eval::evaluate_policy_dir;
use offline_lcb::lin_lcb::{run_linlcb, HybridConfig};
use offline_lcb::persist::{save_linear, PolicyDims};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join("offline-lcb-csv-example");
    std::fs::create_dir_all(&dir)?;

    let env_cfg = EnvConfig::new(Family::Mixed, 3);
    let env = Environment::new(env_cfg.clone())?;
    let logged = generate_offline(&env, 1_000, 0.1, 0)?;
    let csv = dir.join("logged.csv");
    write_csv(File::create(&csv)?, &logged)?;

    let schema = CsvSchema::standard(2, 3).with_group("group");
    let loaded = load_csv(&csv, &schema)?;
    println!("{}: {} records, dims {:?}, identical: {}", csv.display(), loaded.len(), loaded.dims(), loaded == logged);

    let run = run_linlcb(&loaded, &loaded.prefix(0), HybridConfig::new(0.5, 1.0)?, 1.0, &EnsembleSettings::default(), 1)?;
    let policy_dir = dir.join("policy");
    save_linear(&policy_dir, &run.policy, PolicyDims { arms: 2, raw_dim: 3 })?;

    let env_file = dir.join("env.toml");
    std::fs::write(&env_file, toml::to_string(&env_cfg)?)?;
    let exact = evaluate_policy_dir(&policy_dir, &env_file, 3_000, 9)?;
    let replay = evaluate_policy_dir(&policy_dir, &csv, 0, 0)?;
    println!("exact subopt on 3000 fresh contexts: {:.4}", exact.subopt);
    println!("replay estimate on the logged CSV:  {:.4} ({} records)", replay.subopt, replay.count);
    Ok(())
}
