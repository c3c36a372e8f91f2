use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = loadcast::cli::Cli::parse();
    if let Err(e) = loadcast::cli::run(cli) {
        let chained = anyhow::Error::new(e);
        eprintln!("error: {chained:#}");
        std::process::exit(1);
    }
}
