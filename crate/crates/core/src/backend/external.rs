//! Backend served by child processes over the framed wire protocol.
//!
//! Up to `pool` children run at once. Each child is owned by an I/O thread
//! that writes requests to its stdin and reads responses from its stdout;
//! the caller waits on a channel with a deadline and kills the child when
//! the deadline passes. A child that fails in any way is discarded.

use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Condvar, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use sha2::{Digest, Sha256};

use crate::image::{RasterImage, CHANNELS};

use super::protocol::{ProtocolError, RequestFrame, ResponseFrame};
use super::{check_request, Backend, BackendError, InpaintRequest, Restored, TileCoords};

/// Unmasked samples may drift by at most this much before being counted.
const UNMASKED_TOLERANCE: f64 = 1.0 / 255.0;

struct Worker {
    child: Child,
    requests: Option<Sender<Vec<u8>>>,
    responses: Receiver<Result<ResponseFrame, ProtocolError>>,
    io: Option<JoinHandle<()>>,
}

impl Worker {
    fn spawn(command: &[String]) -> Result<Self, BackendError> {
        let mut child = Command::new(&command[0])
            .args(&command[1..])
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| BackendError::Spawn {
                command: command.join(" "),
                reason: e.to_string(),
            })?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (req_tx, req_rx) = mpsc::channel::<Vec<u8>>();
        let (resp_tx, resp_rx) = mpsc::channel();
        let io = std::thread::spawn(move || serve(stdin, stdout, req_rx, resp_tx));
        Ok(Self {
            child,
            requests: Some(req_tx),
            responses: resp_rx,
            io: Some(io),
        })
    }

    fn exit_status(&mut self) -> Option<String> {
        for _ in 0..50 {
            if let Ok(Some(status)) = self.child.try_wait() {
                return (!status.success()).then(|| status.to_string());
            }
            std::thread::sleep(Duration::from_millis(10));
        }
        None
    }
}

fn serve(
    stdin: ChildStdin,
    stdout: ChildStdout,
    requests: Receiver<Vec<u8>>,
    responses: Sender<Result<ResponseFrame, ProtocolError>>,
) {
    let mut input = BufWriter::new(stdin);
    let mut output = BufReader::new(stdout);
    for bytes in requests {
        let result = input
            .write_all(&bytes)
            .and_then(|_| input.flush())
            .map_err(ProtocolError::from)
            .and_then(|_| ResponseFrame::read_from(&mut output));
        let failed = result.is_err();
        if responses.send(result).is_err() || failed {
            return;
        }
    }
}

impl Drop for Worker {
    fn drop(&mut self) {
        self.requests.take();
        let _ = self.child.kill();
        let _ = self.child.wait();
        if let Some(io) = self.io.take() {
            let _ = io.join();
        }
    }
}

struct Pool {
    idle: Vec<Worker>,
    live: usize,
}

pub struct ExternalBackend {
    command: Vec<String>,
    timeout: Duration,
    max_workers: usize,
    pool: Mutex<Pool>,
    available: Condvar,
    hash: Option<String>,
}

impl ExternalBackend {
    pub fn new(command: Vec<String>, timeout_secs: f64, max_workers: usize) -> Result<Self, BackendError> {
        if command.is_empty() || command[0].is_empty() {
            return Err(BackendError::Config("external command is empty".into()));
        }
        let path = resolve_executable(&command[0]).ok_or_else(|| BackendError::Spawn {
            command: command.join(" "),
            reason: "executable not found".into(),
        })?;
        let hash = executable_sha256(&path).ok();
        Ok(Self {
            command,
            timeout: Duration::from_secs_f64(timeout_secs),
            max_workers: max_workers.max(1),
            pool: Mutex::new(Pool { idle: Vec::new(), live: 0 }),
            available: Condvar::new(),
            hash,
        })
    }

    fn acquire(&self) -> Result<Worker, BackendError> {
        let mut pool = self.pool.lock().expect("pool poisoned");
        loop {
            if let Some(w) = pool.idle.pop() {
                return Ok(w);
            }
            if pool.live < self.max_workers {
                pool.live += 1;
                drop(pool);
                let spawned = Worker::spawn(&self.command);
                if spawned.is_err() {
                    self.retire();
                }
                return spawned;
            }
            pool = self.available.wait(pool).expect("pool poisoned");
        }
    }

    fn release(&self, worker: Worker) {
        self.pool.lock().expect("pool poisoned").idle.push(worker);
        self.available.notify_one();
    }

    fn retire(&self) {
        self.pool.lock().expect("pool poisoned").live -= 1;
        self.available.notify_one();
    }

    fn round_trip(&self, worker: &mut Worker, bytes: Vec<u8>, at: TileCoords) -> Result<ResponseFrame, BackendError> {
        let sent = worker.requests.as_ref().map(|tx| tx.send(bytes).is_ok()).unwrap_or(false);
        let outcome = if sent {
            worker.responses.recv_timeout(self.timeout)
        } else {
            Err(RecvTimeoutError::Disconnected)
        };
        match outcome {
            Ok(Ok(frame)) => Ok(frame),
            // A malformed frame is the child's fault even if it dies right
            // after; only a stream that ended early defers to the exit status.
            Ok(Err(e @ (ProtocolError::Truncated(_) | ProtocolError::Io(_)))) => Err(match worker.exit_status() {
                Some(status) => BackendError::Exit { at, status },
                None => BackendError::Protocol { at, reason: e.to_string() },
            }),
            Ok(Err(e)) => Err(BackendError::Protocol { at, reason: e.to_string() }),
            Err(RecvTimeoutError::Timeout) => {
                let _ = worker.child.kill();
                Err(BackendError::Timeout {
                    at,
                    secs: self.timeout.as_secs_f64(),
                })
            }
            Err(RecvTimeoutError::Disconnected) => Err(match worker.exit_status() {
                Some(status) => BackendError::Exit { at, status },
                None => BackendError::Protocol {
                    at,
                    reason: "backend closed its pipes".into(),
                },
            }),
        }
    }
}

impl Drop for ExternalBackend {
    fn drop(&mut self) {
        if let Ok(mut pool) = self.pool.lock() {
            pool.idle.clear();
        }
    }
}

fn encode_request(req: &InpaintRequest<'_>) -> Result<Vec<u8>, BackendError> {
    let (w, h) = req.tile.dims();
    let too_big = |n: usize| {
        u16::try_from(n).map_err(|_| BackendError::Protocol {
            at: req.coords,
            reason: format!("tile dimension {n} exceeds the protocol limit"),
        })
    };
    let frame = RequestFrame {
        width: too_big(w)?,
        height: too_big(h)?,
        band: req.coords.band.code(),
        scale_milli: req.coords.scale_milli,
        perspective: req.coords.perspective,
        tile: req.tile.data().iter().map(|&v| v as f32).collect(),
        mask: req.mask.data().to_vec(),
    };
    Ok(frame.encode())
}

/// Checks a response against its request and converts it to a tile.
///
/// A sample equal to the `f32` encoding of its input is restored to the
/// exact `f64` input, so a backend that returns its input unchanged acts
/// as the null backend. Unmasked samples are always reset to the input;
/// those that had drifted by more than 1/255 are counted.
fn decode_response(req: &InpaintRequest<'_>, frame: ResponseFrame) -> Result<Restored, BackendError> {
    let (w, h) = req.tile.dims();
    if (frame.width as usize, frame.height as usize) != (w, h) {
        return Err(BackendError::Protocol {
            at: req.coords,
            reason: format!(
                "response is {}x{}, expected {}x{}",
                frame.width, frame.height, w, h
            ),
        });
    }
    let input = req.tile.data();
    let mask = req.mask.data();
    let mut out = Vec::with_capacity(input.len());
    let mut clamped = 0;
    for (i, (&got, &orig)) in frame.tile.iter().zip(input).enumerate() {
        if !got.is_finite() || !(0.0..=1.0).contains(&got) {
            return Err(BackendError::Protocol {
                at: req.coords,
                reason: format!("sample {i} has value {got}, outside [0, 1]"),
            });
        }
        let keep = mask[i / CHANNELS] == 0;
        if keep && (got as f64 - orig).abs() > UNMASKED_TOLERANCE {
            clamped += 1;
        }
        out.push(if keep || got == orig as f32 { orig } else { got as f64 });
    }
    Ok(Restored {
        tile: RasterImage::from_raw_unchecked(w, h, out),
        no_boundary: false,
        clamped_pixels: clamped,
        iterations: 0,
    })
}

impl Backend for ExternalBackend {
    fn name(&self) -> String {
        format!("external({})", self.command.join(" "))
    }

    fn content_hash(&self) -> Option<String> {
        self.hash.clone()
    }

    fn inpaint(&self, req: &InpaintRequest<'_>) -> Result<Restored, BackendError> {
        check_request(req)?;
        let bytes = encode_request(req)?;
        let mut worker = self.acquire()?;
        match self.round_trip(&mut worker, bytes, req.coords) {
            Ok(frame) => {
                self.release(worker);
                decode_response(req, frame)
            }
            Err(e) => {
                drop(worker);
                self.retire();
                Err(e)
            }
        }
    }
}

/// Looks a command up on `PATH` unless it already names a path.
fn resolve_executable(cmd: &str) -> Option<PathBuf> {
    if cmd.contains(std::path::MAIN_SEPARATOR) {
        return Some(PathBuf::from(cmd)).filter(|p| p.is_file());
    }
    std::env::var_os("PATH").and_then(|paths| {
        std::env::split_paths(&paths)
            .map(|dir| dir.join(cmd))
            .find(|p| p.is_file())
    })
}

/// Hex SHA-256 of a file's contents.
pub fn executable_sha256(path: &Path) -> std::io::Result<String> {
    let bytes = std::fs::read(path)?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}
