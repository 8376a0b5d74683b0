use std::process::ExitCode;

fn main() -> ExitCode {
    acnn_core::cli::main()
}
