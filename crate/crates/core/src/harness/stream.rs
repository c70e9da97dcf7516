use std::io::{BufRead, BufReader, BufWriter, Write};
use std::net::{TcpListener, ToSocketAddrs};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::thread;

use log::{info, warn};
use serde::Serialize;

use super::{FeatureExtractor, MonitorSession, RecordPhase, SampleRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct StreamOptions {
    /// Frames of any other length are rejected as malformed.
    pub expected_len: Option<usize>,
    /// Session state is written here when the source ends or disconnects.
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct StreamSummary {
    pub frames: usize,
    pub malformed: usize,
    pub flagged: usize,
    /// Set when reading stopped on an I/O error rather than end of input.
    pub disconnected: bool,
}

#[derive(Serialize)]
struct OutRecord {
    index: usize,
    phase: RecordPhase,
    deviation: f64,
    #[serde(rename = "T", skip_serializing_if = "Option::is_none")]
    t: Option<f64>,
    flag: bool,
}

impl From<&SampleRecord> for OutRecord {
    fn from(r: &SampleRecord) -> Self {
        Self {
            index: r.index,
            phase: r.phase,
            deviation: r.deviation,
            t: r.threshold,
            flag: r.flag,
        }
    }
}

/// Parses one frame: numbers separated by whitespace and/or commas.
pub fn parse_frame(line: &str) -> std::result::Result<Vec<f64>, String> {
    line.split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| {
            let v: f64 = t.parse().map_err(|_| format!("non-numeric token {t:?}"))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(format!("non-finite value {t:?}"))
            }
        })
        .collect()
}

fn frame_features(
    line: &str,
    extractor: &FeatureExtractor,
    opts: &StreamOptions,
) -> std::result::Result<Vec<f64>, String> {
    let raw = parse_frame(line)?;
    if let Some(n) = opts.expected_len {
        if raw.len() != n {
            return Err(format!("expected {n} values, got {}", raw.len()));
        }
    }
    extractor.from_raw(&raw).map_err(|e| e.to_string())
}

pub fn save_checkpoint(session: &MonitorSession, path: &Path) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, session.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<MonitorSession> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    MonitorSession::from_bytes(&bytes)
}

/// Feeds line-delimited raw snapshots through `session`, writing one JSON line
/// per output record. Bad frames are logged, counted and skipped; the session
/// only ever sees frames that passed validation.
pub fn stream_ingest<R: BufRead, W: Write>(
    mut input: R,
    mut output: W,
    extractor: &FeatureExtractor,
    session: &mut MonitorSession,
    opts: &StreamOptions,
) -> Result<StreamSummary> {
    let mut summary = StreamSummary::default();
    let mut buf = Vec::new();
    let mut line_no = 0usize;
    loop {
        buf.clear();
        match input.read_until(b'\n', &mut buf) {
            Ok(0) => break,
            Ok(_) => {}
            Err(e) => {
                warn!("source disconnected after {line_no} lines: {e}");
                summary.disconnected = true;
                break;
            }
        }
        line_no += 1;
        let Ok(line) = std::str::from_utf8(&buf) else {
            warn!("line {line_no}: not UTF-8, skipped");
            summary.malformed += 1;
            continue;
        };
        if line.trim().is_empty() {
            continue;
        }
        let records = match frame_features(line, extractor, opts)
            .and_then(|x| session.push(&x).map_err(|e| e.to_string()))
        {
            Ok(r) => r,
            Err(msg) => {
                warn!("line {line_no}: malformed frame skipped: {msg}");
                summary.malformed += 1;
                continue;
            }
        };
        summary.frames += 1;
        for r in &records {
            summary.flagged += r.flag as usize;
            let json = serde_json::to_string(&OutRecord::from(r)).expect("record serializes");
            if let Err(e) = writeln!(output, "{json}") {
                warn!("output closed: {e}");
                summary.disconnected = true;
                break;
            }
        }
        if summary.disconnected {
            break;
        }
    }
    let _ = output.flush();
    if let Some(path) = &opts.checkpoint {
        save_checkpoint(session, path)?;
        info!("session checkpointed to {}", path.display());
    }
    Ok(summary)
}

/// Accepts TCP connections, one thread and one fresh session per connection.
/// Records go back over the same socket. With a checkpoint path, connection
/// `n` checkpoints to `<path>.<n>`.
pub fn serve_tcp<A, F>(
    addr: A,
    extractor: FeatureExtractor,
    new_session: F,
    opts: StreamOptions,
) -> Result<()>
where
    A: ToSocketAddrs,
    F: Fn() -> Result<MonitorSession> + Send + Sync + 'static,
{
    let listener = TcpListener::bind(addr).map_err(|e| Error::io("<listen address>", e))?;
    info!("listening on {:?}", listener.local_addr().ok());
    let extractor = Arc::new(extractor);
    let new_session = Arc::new(new_session);
    for (n, conn) in listener.incoming().enumerate() {
        let stream = match conn {
            Ok(s) => s,
            Err(e) => {
                warn!("accept failed: {e}");
                continue;
            }
        };
        let extractor = Arc::clone(&extractor);
        let new_session = Arc::clone(&new_session);
        let mut opts = opts.clone();
        if let Some(p) = &opts.checkpoint {
            let mut s = p.clone().into_os_string();
            s.push(format!(".{n}"));
            opts.checkpoint = Some(s.into());
        }
        thread::spawn(move || {
            let peer = stream
                .peer_addr()
                .map(|a| a.to_string())
                .unwrap_or_default();
            let result = (|| -> Result<StreamSummary> {
                let reader = BufReader::new(stream.try_clone().map_err(|e| Error::io(&peer, e))?);
                let mut session = new_session()?;
                stream_ingest(
                    reader,
                    BufWriter::new(stream),
                    &extractor,
                    &mut session,
                    &opts,
                )
            })();
            match result {
                Ok(s) => info!("connection {peer} closed: {s:?}"),
                Err(e) => warn!("connection {peer} failed: {e}"),
            }
        });
    }
    Err(Error::Config("listener stopped".into()))
}
