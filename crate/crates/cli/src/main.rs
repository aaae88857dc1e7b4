use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(acsess_cli::run_cli(std::env::args()) as u8)
}
