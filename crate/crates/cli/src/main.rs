use clap::Parser;

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = tlcb_cli::Cli::parse();
    tlcb_cli::run(&cli)
}
