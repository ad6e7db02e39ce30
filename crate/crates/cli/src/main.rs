use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match fanbase_cli::Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let err = fanbase_cli::CliError {
                code: 1,
                kind: "Usage".into(),
                message: e.to_string().lines().next().unwrap_or_default().to_string(),
            };
            eprintln!("{}", err.to_line());
            std::process::exit(err.code);
        }
    };
    if let Err(err) = fanbase_cli::run(cli) {
        eprintln!("{}", err.to_line());
        std::process::exit(err.code);
    }
}
