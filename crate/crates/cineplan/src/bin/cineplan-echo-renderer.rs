//! Minimal external backend: reads one call from stdin, writes placeholder
//! media into the call's output directory and prints the response.

use std::io::{self, Read, Write};
use std::process::ExitCode;

use cineplan::adapters::render_placeholder;
use cineplan::backend::BackendCall;

fn main() -> ExitCode {
    let mut input = String::new();
    if let Err(e) = io::stdin().read_to_string(&mut input) {
        eprintln!("reading request: {e}");
        return ExitCode::from(74);
    }
    let call: BackendCall = match serde_json::from_str(&input) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("malformed request: {e}");
            return ExitCode::from(65);
        }
    };
    match render_placeholder(&call) {
        Ok(resp) => {
            let mut out = io::stdout().lock();
            serde_json::to_writer(&mut out, &resp).expect("response serializes");
            let _ = out.write_all(b"\n");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}: {e}", call.shot.id);
            ExitCode::from(74)
        }
    }
}
