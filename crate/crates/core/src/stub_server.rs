//! Minimal blocking HTTP/1.1 server implementing the paginated log endpoint.
//!
//! It is the reference implementation of the fetch contract and the fixture
//! behind the fetch tests: `GET /logs?page=N&page_size=K` answers with the
//! N-th (1-based) slice of its records as a JSON array. Failures can be
//! scripted per request.

use std::collections::VecDeque;
use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::{self, JoinHandle};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StubRequest {
    pub path: String,
    pub query: Vec<(String, String)>,
    pub authorization: Option<String>,
}

impl StubRequest {
    pub fn param(&self, name: &str) -> Option<&str> {
        self.query
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| v.as_str())
    }
}

#[derive(Debug, Default)]
struct Shared {
    /// Status codes to answer with before serving data, consumed in order.
    failures: VecDeque<u16>,
    required_token: Option<String>,
    requests: Vec<StubRequest>,
}

pub struct StubServer {
    addr: SocketAddr,
    shared: Arc<Mutex<Shared>>,
    stop: Arc<AtomicBool>,
    handle: Option<JoinHandle<()>>,
}

impl StubServer {
    /// Serves `records` (raw JSON objects) from `/logs`.
    pub fn start(records: Vec<serde_json::Value>) -> std::io::Result<Self> {
        let listener = TcpListener::bind("127.0.0.1:0")?;
        let addr = listener.local_addr()?;
        let shared = Arc::new(Mutex::new(Shared::default()));
        let stop = Arc::new(AtomicBool::new(false));
        let handle = {
            let shared = Arc::clone(&shared);
            let stop = Arc::clone(&stop);
            thread::spawn(move || {
                for stream in listener.incoming() {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    if let Ok(stream) = stream {
                        // one request per connection; errors only affect that client
                        let _ = handle_connection(stream, &records, &shared);
                    }
                }
            })
        };
        Ok(StubServer {
            addr,
            shared,
            stop,
            handle: Some(handle),
        })
    }

    /// Base URL of the log endpoint.
    pub fn endpoint(&self) -> String {
        format!("http://{}/logs", self.addr)
    }

    /// Answer the next requests with these status codes.
    pub fn fail_next(&self, statuses: &[u16]) {
        self.shared.lock().unwrap().failures.extend(statuses);
    }

    /// Reject requests without `Authorization: Bearer <token>` with 401.
    pub fn require_token(&self, token: &str) {
        self.shared.lock().unwrap().required_token = Some(token.to_string());
    }

    pub fn requests(&self) -> Vec<StubRequest> {
        self.shared.lock().unwrap().requests.clone()
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        // wake the accept loop
        let _ = TcpStream::connect(self.addr);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn handle_connection(
    mut stream: TcpStream,
    records: &[serde_json::Value],
    shared: &Mutex<Shared>,
) -> std::io::Result<()> {
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut request_line = String::new();
    reader.read_line(&mut request_line)?;
    let mut authorization = None;
    loop {
        let mut header = String::new();
        if reader.read_line(&mut header)? == 0 || header.trim().is_empty() {
            break;
        }
        if let Some((name, value)) = header.split_once(':') {
            if name.trim().eq_ignore_ascii_case("authorization") {
                authorization = Some(value.trim().to_string());
            }
        }
    }
    let target = request_line.split_whitespace().nth(1).unwrap_or("/");
    let (path, query) = target.split_once('?').unwrap_or((target, ""));
    let request = StubRequest {
        path: path.to_string(),
        query: query
            .split('&')
            .filter_map(|kv| kv.split_once('='))
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect(),
        authorization,
    };

    let (status, body) = {
        let mut state = shared.lock().unwrap();
        state.requests.push(request.clone());
        if let Some(token) = &state.required_token {
            if request.authorization.as_deref() != Some(&format!("Bearer {token}")) {
                (401, "[]".to_string())
            } else {
                respond(&request, records, &mut state)
            }
        } else {
            respond(&request, records, &mut state)
        }
    };
    write!(
        stream,
        "HTTP/1.1 {status} {}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
        reason(status),
        body.len()
    )?;
    stream.flush()
}

fn respond(request: &StubRequest, records: &[serde_json::Value], state: &mut Shared) -> (u16, String) {
    if let Some(status) = state.failures.pop_front() {
        return (status, "[]".to_string());
    }
    if request.path != "/logs" {
        return (404, "[]".to_string());
    }
    let page: Option<usize> = request.param("page").and_then(|v| v.parse().ok());
    let size: Option<usize> = request.param("page_size").and_then(|v| v.parse().ok());
    let (Some(page), Some(size)) = (page, size) else {
        return (400, "[]".to_string());
    };
    if page == 0 || size == 0 {
        return (400, "[]".to_string());
    }
    let start = (page - 1).saturating_mul(size).min(records.len());
    let end = start.saturating_add(size).min(records.len());
    let slice = serde_json::Value::Array(records[start..end].to_vec());
    (200, slice.to_string())
}

fn reason(status: u16) -> &'static str {
    match status {
        200 => "OK",
        400 => "Bad Request",
        401 => "Unauthorized",
        403 => "Forbidden",
        404 => "Not Found",
        500 => "Internal Server Error",
        503 => "Service Unavailable",
        _ => "Status",
    }
}
