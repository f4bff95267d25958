//! Reference external backend: answers every request with its own tile.
//!
//! Fault modes exercise the host's error handling. A fault fires on the
//! request numbered `--fault-after` (0-based); earlier requests are echoed.

use std::io::{self, BufReader, BufWriter, Write};
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use mural3m_core::backend::protocol::{RequestFrame, ResponseFrame};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Fault {
    None,
    /// Writes half a response, then exits.
    Truncate,
    /// Answers with a wrong magic.
    Magic,
    /// Never answers.
    Hang,
    /// Answers with the width and height swapped and one row short.
    Dims,
    /// Exits with status 3 without answering.
    Exit,
    /// Shifts unmasked samples, which the host must undo.
    Dirty,
}

#[derive(Debug, Parser)]
#[command(name = "mural3m-echo", about = "Echo backend speaking the mural3m tile protocol")]
struct Args {
    #[arg(long, value_enum, default_value = "none")]
    fault: Fault,
    #[arg(long, default_value_t = 0)]
    fault_after: u64,
}

fn respond(req: &RequestFrame, fault: Fault, out: &mut impl Write) -> io::Result<bool> {
    let echo = ResponseFrame {
        width: req.width,
        height: req.height,
        tile: req.tile.clone(),
    };
    match fault {
        Fault::None => echo.write_to(out)?,
        Fault::Truncate => {
            let bytes = echo.encode();
            out.write_all(&bytes[..bytes.len() / 2])?;
            out.flush()?;
            return Ok(false);
        }
        Fault::Magic => {
            let mut bytes = echo.encode();
            bytes[..4].copy_from_slice(b"XXXX");
            out.write_all(&bytes)?;
            out.flush()?;
        }
        Fault::Hang => loop {
            std::thread::sleep(std::time::Duration::from_secs(3600));
        },
        Fault::Dims => {
            let h = req.height.saturating_sub(1);
            let n = req.width as usize * h as usize * 3;
            ResponseFrame {
                width: h,
                height: req.width,
                tile: req.tile[..n].to_vec(),
            }
            .write_to(out)?;
        }
        Fault::Exit => std::process::exit(3),
        Fault::Dirty => {
            let mut tile = req.tile.clone();
            for (px, &m) in tile.chunks_exact_mut(3).zip(&req.mask) {
                if m == 0 {
                    px.iter_mut().for_each(|v| *v = (*v + 0.25).min(1.0));
                }
            }
            ResponseFrame { tile, ..echo }.write_to(out)?;
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let mut input = BufReader::new(io::stdin().lock());
    let mut output = BufWriter::new(io::stdout().lock());
    let mut served = 0u64;
    loop {
        let req = match RequestFrame::read_from(&mut input) {
            Ok(Some(r)) => r,
            Ok(None) => return ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("mural3m-echo: {e}");
                return ExitCode::from(1);
            }
        };
        let fault = if served >= args.fault_after { args.fault } else { Fault::None };
        match respond(&req, fault, &mut output) {
            Ok(true) => served += 1,
            Ok(false) => return ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("mural3m-echo: {e}");
                return ExitCode::from(1);
            }
        }
    }
}
