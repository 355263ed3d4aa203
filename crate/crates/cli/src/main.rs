use std::io::Write;
use std::process::ExitCode;

use eigenmoment_cli::{parse_config, run, CliError, EXIT_OK};

fn main() -> ExitCode {
    let code = match parse_config(std::env::args_os()).and_then(|config| run(&config)) {
        Ok(outcome) => {
            let text = serde_json::to_string_pretty(&outcome.summary).expect("summary serializes");
            // a closed pipe on stdout is not an error worth reporting
            let _ = writeln!(std::io::stdout().lock(), "{text}");
            outcome.exit_code
        }
        Err(CliError::Help(text)) => {
            let _ = write!(std::io::stdout().lock(), "{text}");
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    ExitCode::from(code as u8)
}
