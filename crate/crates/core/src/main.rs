use std::process::ExitCode;

fn main() -> ExitCode {
    volaug::cli::main_with_args(std::env::args_os())
}
