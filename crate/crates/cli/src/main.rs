use std::io::IsTerminal;

use stacksurgeon_cli::{run, Severity};

fn main() {
    env_logger::init();
    let stdout = std::io::stdout();
    let color = stdout.is_terminal();
    let mut lock = stdout.lock();
    let result = run(std::env::args_os(), &mut lock, color);
    drop(lock);
    for d in &result.diagnostics {
        match d.severity {
            Severity::Warning => eprintln!("warning: {}", d.message),
            Severity::Error => eprintln!("error: {}", d.message),
        }
    }
    std::process::exit(result.exit_code);
}
