use std::process::ExitCode;

fn main() -> ExitCode {
    iqc_cli::cli::main_with(std::env::args_os())
}
