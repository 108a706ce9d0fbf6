use std::process::ExitCode;

fn main() -> ExitCode {
    hatecls::cli::main()
}
