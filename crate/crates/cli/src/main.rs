use std::process::ExitCode;

use renyi_ot_cli::{parse_args, run::run, ParseFailure};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let code = match parse_args(std::env::args_os()) {
        Ok(cfg) => match run(&cfg) {
            Ok(status) => status,
            Err(e) => {
                eprintln!("error: {e}");
                e.exit_code()
            }
        },
        Err(ParseFailure::Clap(e)) => {
            let _ = e.print();
            e.exit_code()
        }
        Err(ParseFailure::Invalid(e)) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
