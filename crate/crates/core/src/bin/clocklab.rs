use std::panic;
use std::process::ExitCode;

use clocklab::cli::{main_with, EXIT_INTERNAL};

fn main() -> ExitCode {
    let code = panic::catch_unwind(|| main_with(std::env::args_os())).unwrap_or(EXIT_INTERNAL);
    ExitCode::from(code as u8)
}
