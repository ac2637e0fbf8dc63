use offline_lcb::conformal::EnsembleSettings;
use offline_lcb::env::{generate_offline, EnvConfig, Environment, Family};
use offline_lcb::eval::{coverage_from_records, suboptimality};
use offline_lcb::lin_lcb::{run_linlcb, HybridConfig};

// Sweeps the mixing weight between the ridge LCB (cpr = 1) and the ensemble
// point estimate (cpr = 0) on a quadratic reward the ridge model cannot fit.
fn main() -> offline_lcb::Result<()> {
    let env = Environment::new(EnvConfig {
        arms: 3,
        ..EnvConfig::new(Family::Quadratic, 3)
    })?;
    let train = generate_offline(&env, 1_500, 0.1, 4)?;
    let test = generate_offline(&env, 300, 0.1, 5)?;
    let eval = env.sample_eval(3_000, 6)?;
    let settings = EnsembleSettings::default();

    for cpr in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let run = run_linlcb(&train, &test, HybridConfig::new(cpr, 1.0)?, 1.0, &settings, 0)?;
        let subopt = suboptimality(|block| run.policy.act(block), &eval)?;
        let cov = coverage_from_records(&run.intervals);
        let c10 = cov.get(0.1).map_or(f64::NAN, |r| r.coverage);
        println!("cpr={cpr:<4} subopt={subopt:.4}  90% interval coverage={c10:.3}");
    }
    Ok(())
}
