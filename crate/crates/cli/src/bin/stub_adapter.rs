//! Deterministic adapter speaking the newline-delimited JSON protocol over
//! stdin/stdout. Useful for exercising the adapter path without models.

use std::io::{self, BufReader, BufWriter};
use std::process::ExitCode;

use agora_core::backends::stub::{serve, StubOptions};
use agora_core::backends::Capability;
use clap::Parser;

#[derive(Parser, Debug)]
#[command(name = "agora-stub-adapter", version)]
struct Args {
    /// Length of embedding vectors.
    #[arg(long, default_value_t = 384)]
    embed_dim: usize,
    /// Buffer this many replies and emit them in reverse order.
    #[arg(long, default_value_t = 1)]
    reorder: usize,
    /// Advertised capabilities, comma separated.
    #[arg(long, value_delimiter = ',')]
    capabilities: Vec<String>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let mut opts = StubOptions {
        embed_dim: args.embed_dim,
        reorder_window: args.reorder.max(1),
        ..StubOptions::default()
    };
    if !args.capabilities.is_empty() {
        let mut caps = Vec::new();
        for c in &args.capabilities {
            match Capability::parse(c) {
                Some(cap) => caps.push(cap.to_string()),
                None => {
                    eprintln!("unknown capability `{c}`");
                    return ExitCode::from(1);
                }
            }
        }
        opts.capabilities = caps;
    }
    let stdin = BufReader::new(io::stdin());
    let stdout = BufWriter::new(io::stdout().lock());
    match serve(stdin, stdout, &opts) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("stub adapter: {e}");
            ExitCode::from(1)
        }
    }
}
