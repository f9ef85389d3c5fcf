//! Runs one replication of each design and writes the committee design's
//! wealth trajectory as CSV.
//!
//!     cargo run --release -p paircal-core --example single_run -- /tmp/wealth.csv

use paircal_core::designs::{run_design, DesignKind, RunConfig};
use paircal_core::seqtest::write_trajectory_csv;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let out = std::env::args().nth(1);
    for design in [
        DesignKind::Conventional,
        DesignKind::RobustCal,
        DesignKind::RegressionActive,
        DesignKind::TauBald,
        DesignKind::TheoreticalRobustCal,
    ] {
        let cfg = RunConfig::new(design, 500, 0.05, 0.2, 7);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let run = run_design(&cfg, &mut rng).expect("run");
        println!(
            "{design:12} rejected={} labels_used={} final_wealth={:.2}",
            run.decision, run.labels_used, run.wealth_final
        );
        if design == DesignKind::RobustCal {
            if let Some(path) = &out {
                let f = std::fs::File::create(path).expect("create trajectory file");
                write_trajectory_csv(&run.trajectory, std::io::BufWriter::new(f)).unwrap();
                println!("wrote wealth trajectory to {path}");
            }
        }
    }
}
