use std::process::ExitCode;

fn main() -> ExitCode {
    ghdgls::cli::main_entry()
}
