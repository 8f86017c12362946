use std::process::ExitCode;

fn main() -> ExitCode {
    tsde::cli::main_with_args(std::env::args_os())
}
