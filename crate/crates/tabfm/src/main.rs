use std::process::ExitCode;

fn main() -> ExitCode {
    let code = tabfm::cli::run(std::env::args().collect());
    ExitCode::from(code as u8)
}
