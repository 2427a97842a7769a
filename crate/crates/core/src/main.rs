use clap::Parser;

use acdc_plf::cli::{run_pipeline, RunConfig};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cfg = RunConfig::parse();
    match run_pipeline(&cfg) {
        Ok(summary) => {
            for f in &summary.files {
                println!("{}", f.display());
            }
        }
        Err(e) => {
            eprintln!("{}", e.diagnostic());
            std::process::exit(e.exit_code());
        }
    }
}
