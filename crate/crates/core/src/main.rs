use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(wmbo::cli::run())
}
