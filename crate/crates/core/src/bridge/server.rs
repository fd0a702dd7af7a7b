use std::io::{self, BufRead, BufReader, ErrorKind, Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use crate::env::EpisodeConfig;
use crate::error::{Error, Result};

use super::{ErrorCode, Response, Session};

const POLL: Duration = Duration::from_millis(50);

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    /// `host:port`, optionally written `tcp://host:port`
    Tcp(String),
    Stdio,
}

impl std::str::FromStr for Endpoint {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stdio" | "-" => Ok(Endpoint::Stdio),
            _ => {
                let addr = s.strip_prefix("tcp://").unwrap_or(s);
                if addr
                    .rsplit_once(':')
                    .is_some_and(|(h, p)| !h.is_empty() && p.parse::<u16>().is_ok())
                {
                    Ok(Endpoint::Tcp(addr.to_string()))
                } else {
                    Err(Error::Usage(format!(
                        "endpoint `{s}` is neither `stdio` nor host:port"
                    )))
                }
            }
        }
    }
}

/// How a session ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionEnd {
    ClientClosed,
    Eof,
    Shutdown,
}

fn write_line(w: &mut impl Write, resp: &Response) -> io::Result<()> {
    let mut line = resp.to_line();
    line.push('\n');
    w.write_all(line.as_bytes())?;
    w.flush()
}

/// Run one session over a byte stream until the client closes it, the
/// stream ends, or `shutdown` is raised. Readers with a timeout let the
/// shutdown flag be polled between requests.
pub fn serve_stream<R: Read, W: Write>(
    cfg: &EpisodeConfig,
    reader: R,
    mut writer: W,
    shutdown: &AtomicBool,
) -> Result<SessionEnd> {
    let mut session = Session::new(cfg.clone())?;
    let mut reader = BufReader::new(reader);
    let mut buf = Vec::new();
    loop {
        if shutdown.load(Ordering::SeqCst) {
            let _ = write_line(&mut writer, &Response::closed("shutdown"));
            return Ok(SessionEnd::Shutdown);
        }
        match reader.read_until(b'\n', &mut buf) {
            Ok(0) if buf.is_empty() => return Ok(SessionEnd::Eof),
            Ok(_) => {}
            Err(e) if matches!(e.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut) => continue,
            Err(e) => return Err(Error::Connection(e)),
        }
        let complete = buf.last() == Some(&b'\n');
        let resp = match std::str::from_utf8(&buf) {
            Ok(text) => {
                let text = text.trim();
                if text.is_empty() {
                    buf.clear();
                    if complete {
                        continue;
                    }
                    return Ok(SessionEnd::Eof);
                }
                session.handle(text)
            }
            Err(_) => Response::error(ErrorCode::Malformed, "request is not valid UTF-8"),
        };
        buf.clear();
        write_line(&mut writer, &resp).map_err(Error::Connection)?;
        if session.is_closed() {
            return Ok(SessionEnd::ClientClosed);
        }
        if !complete {
            return Ok(SessionEnd::Eof);
        }
    }
}

/// Serve a single session on stdin/stdout.
pub fn serve_stdio(cfg: &EpisodeConfig, shutdown: &AtomicBool) -> Result<SessionEnd> {
    let stdin = io::stdin().lock();
    let stdout = io::stdout().lock();
    serve_stream(cfg, stdin, stdout, shutdown)
}

/// TCP listener handing each connection its own session thread.
#[derive(Debug)]
pub struct Server {
    listener: TcpListener,
    cfg: EpisodeConfig,
}

impl Server {
    pub fn bind(addr: &str, cfg: EpisodeConfig) -> Result<Self> {
        cfg.validate()?;
        let bind_err = |source| Error::Bind {
            addr: addr.to_string(),
            source,
        };
        let listener = TcpListener::bind(addr).map_err(bind_err)?;
        listener.set_nonblocking(true).map_err(bind_err)?;
        Ok(Self { listener, cfg })
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        self.listener.local_addr().map_err(Error::Connection)
    }

    /// Accept connections until `shutdown` is raised, then wait for every
    /// session to send its closing message.
    pub fn run(&self, shutdown: Arc<AtomicBool>) -> Result<()> {
        let mut handles = Vec::new();
        while !shutdown.load(Ordering::SeqCst) {
            match self.listener.accept() {
                Ok((stream, peer)) => {
                    let cfg = self.cfg.clone();
                    let flag = Arc::clone(&shutdown);
                    handles.push(thread::spawn(move || {
                        handle_connection(stream, peer, &cfg, &flag)
                    }));
                }
                Err(e) if e.kind() == ErrorKind::WouldBlock => thread::sleep(POLL),
                Err(e) => log::warn!("accept failed: {e}"),
            }
            handles.retain(|h| !h.is_finished());
        }
        for h in handles {
            let _ = h.join();
        }
        Ok(())
    }
}

fn handle_connection(stream: TcpStream, peer: SocketAddr, cfg: &EpisodeConfig, shutdown: &AtomicBool) {
    log::info!("session {peer}: open");
    let setup = stream
        .set_nonblocking(false)
        .and_then(|_| stream.set_read_timeout(Some(POLL)))
        .and_then(|_| stream.set_nodelay(true))
        .and_then(|_| stream.try_clone());
    let writer = match setup {
        Ok(w) => w,
        Err(e) => {
            log::warn!("session {peer}: {e}");
            return;
        }
    };
    match serve_stream(cfg, stream, writer, shutdown) {
        Ok(end) => log::info!("session {peer}: {end:?}"),
        Err(e) => log::warn!("session {peer}: {e}"),
    }
}
