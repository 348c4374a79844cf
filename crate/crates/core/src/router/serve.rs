use std::io::{BufRead, BufReader, Write};
use std::os::unix::net::UnixListener;
use std::path::Path;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::router::{DomainRouter, ScoreRequest};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ServeStats {
    pub responses: usize,
    pub errors: usize,
}

fn write_line(out: &mut impl Write, text: &str) -> std::io::Result<()> {
    out.write_all(text.as_bytes())?;
    out.write_all(b"\n")?;
    out.flush()
}

/// Answers one JSON request per input line with one JSON response line, in
/// order, until end of stream. Blank lines are ignored; a line that does not
/// parse yields `{"error": ..., "line": n}` and serving continues.
pub fn serve(router: &DomainRouter, input: impl BufRead, mut output: impl Write) -> Result<ServeStats> {
    let mut stats = ServeStats::default();
    let io = |e: std::io::Error| Error::Io {
        path: "<stream>".into(),
        source: e,
    };
    for (i, line) in input.lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = match serde_json::from_str::<ScoreRequest>(&line)
            .map_err(|e| e.to_string())
            .and_then(|req| router.route_score(&req).map_err(|e| e.to_string()))
        {
            Ok(resp) => {
                stats.responses += 1;
                serde_json::to_string(&resp).expect("response serializes")
            }
            Err(message) => {
                stats.errors += 1;
                serde_json::json!({ "error": message, "line": i + 1 }).to_string()
            }
        };
        write_line(&mut output, &reply).map_err(io)?;
    }
    Ok(stats)
}

/// Serves connections on a Unix socket, one thread per connection, until the
/// listener fails. Each connection follows the [`serve`] protocol.
pub fn serve_unix(router: Arc<DomainRouter>, path: &Path) -> Result<()> {
    let listener = UnixListener::bind(path).map_err(|e| Error::io(path, e))?;
    for stream in listener.incoming() {
        let stream = stream.map_err(|e| Error::io(path, e))?;
        let router = Arc::clone(&router);
        std::thread::spawn(move || {
            let reader = match stream.try_clone() {
                Ok(s) => BufReader::new(s),
                Err(_) => return,
            };
            let _ = serve(&router, reader, stream);
        });
    }
    Ok(())
}
