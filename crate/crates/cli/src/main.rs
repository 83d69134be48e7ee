use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(nave_cli::cli::run_from(std::env::args_os()))
}
