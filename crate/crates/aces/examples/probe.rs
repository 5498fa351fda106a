// Scratch calibration probe; not part of the deliverable.
use aces::harness::{self, ExperimentConfig, Strategy};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let budget: usize = args[1].parse().unwrap();
    let runs: usize = args[2].parse().unwrap();
    let episodes: usize = args[3].parse().unwrap();
    let out = &args[4];
    let mut config = ExperimentConfig::new(Strategy::Aces { n_nn: 20 }, out.into());
    config.episodes = episodes;
    config.runs = runs;
    config.seed = 103;
    config.cmaes_budget = budget;
    let output = harness::run_experiment(&config).unwrap();
    let last = output.summary.last().unwrap();
    println!("budget {budget}: final {:.4} +- {:.4}", last.mean, last.stderr);
}
