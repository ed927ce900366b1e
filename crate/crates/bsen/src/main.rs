use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(bsen::cli::run(std::env::args_os()))
}
